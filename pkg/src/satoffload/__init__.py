"""Task offloading and resource allocation on a three-layer satellite edge network."""

__version__ = "0.1.0"
