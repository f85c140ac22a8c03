"""Unit test package for py_latent_diffusion."""
