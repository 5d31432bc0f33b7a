"""Covariate-adaptive randomization and randomization-based inference for
non-inferiority and equivalence trials."""

__version__ = "0.1.0"
