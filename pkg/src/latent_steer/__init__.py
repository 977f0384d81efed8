"""Steerable latent-direction learning and evaluation."""
__version__ = "0.1.0"
