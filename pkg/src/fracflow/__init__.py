"""Two-phase flow with a moving fracture on conforming moving meshes."""

__version__ = "0.1.0"
