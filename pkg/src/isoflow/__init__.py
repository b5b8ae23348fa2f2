"""Isospectral gradient flows and thermal ensembles of random Hamiltonians."""

__version__ = "0.1.0"
