"""Knowledge-grounded multimodal fake-news detection (KGAlign pipeline)."""
