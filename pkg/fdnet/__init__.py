"""
fdnet: fisheye camera geometry, scale-aware view synthesis and the
self-supervised distance objective, with a ray-cast oracle to test them.
"""

__version__ = "0.1.0"
