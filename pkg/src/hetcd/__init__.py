"""Change detection between a pre-event optical image and a post-event SAR image
by ensemble fuzzy C-means clustering and split/merge analysis."""

__version__ = "0.1.0"
