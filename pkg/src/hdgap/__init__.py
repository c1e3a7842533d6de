"""Heterogeneous wage-gap inference in high-dimensional linear models.

Pipeline: interaction-expanded design construction, weighted lasso with a
theory-driven penalty, double selection with a robust sandwich covariance,
multiplier-bootstrap simultaneous inference, per-individual effect profiles,
and an Oaxaca-Blinder decomposition baseline.
"""

__version__ = "0.1.0"
