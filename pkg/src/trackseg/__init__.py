"""trackseg: one-shot charged-particle tracking as 3D instance
segmentation on eta-phi hit graphs."""

__version__ = "0.1.0"
