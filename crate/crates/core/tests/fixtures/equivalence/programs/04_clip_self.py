compute_clip_similarity("image.jpg", "image.jpg")
