"""Diffusion-geometric maximally stable component detection on triangle meshes."""

__version__ = "0.1.0"
