"""Road-geometry insertion and physics-aware vehicle pose correction for 3D Gaussian driving scenes."""

__version__ = "0.1.0"
