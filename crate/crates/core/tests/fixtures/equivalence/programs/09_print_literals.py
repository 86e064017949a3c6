s = compute_clip_similarity("plain.png", "other.png")
print("score:", s)
print(1, 2.5, None)
print(["a", "b"])
print(1e20)
