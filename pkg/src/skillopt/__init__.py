"""Gradient-free trajectory optimisation by searching inside the reverse diffusion of a skill-latent model."""

__version__ = "0.1.0"
