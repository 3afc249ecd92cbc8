"""Block-based compressive learning: sense images into low-dimensional
block measurements with a learnable (optionally binary) matrix and run
classification or segmentation directly in the measurement domain with a
transformer, one model covering every sampling ratio."""

__version__ = "0.1.0"
