"""Numerical core: ensembles, micro propagation, restriction, matching and the grid oracle."""
