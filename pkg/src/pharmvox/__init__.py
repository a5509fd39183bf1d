"""Pharmacophore-shape virtual screening: voxelized profiles, captioning model, overlap scoring."""

__version__ = "0.1.0"
