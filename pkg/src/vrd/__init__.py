"""
Variational Reaction-Diffusion (VRD)

Exact inference and exact gradients for a vector-valued Gaussian MRF energy on
a 2-D lattice, plus a small trainable network built from VRD layers.
"""

__version__ = "0.1.0"
