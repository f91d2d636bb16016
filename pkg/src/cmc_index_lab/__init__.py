"""Spectral geometry of CMC surfaces in catalog 3-manifolds."""
