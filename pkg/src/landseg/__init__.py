"""Land-cover semantic segmentation on multiband rasters with CORINE labels."""

__version__ = "0.1.0"
