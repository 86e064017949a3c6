locate_visual_prompts("plain.png")
