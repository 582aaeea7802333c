"""GDS-Mamba: graph-regulated disentangled sparse Mamba classifier for image time series"""
__version__ = "0.1.0"
