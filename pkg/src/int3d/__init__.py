"""3D intention heatmap prediction from sparse head/hand motion over scene point clouds."""

__version__ = "0.1.0"
