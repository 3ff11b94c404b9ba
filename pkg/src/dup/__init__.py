"""Self-supervised super-resolution and denoising of grayscale video with a
per-frame optimized convolutional prior."""

__version__ = "0.1.0"
