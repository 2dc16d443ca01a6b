"""Two-stage independent subspace analysis (whitening, ICA, grouping) with
Monte Carlo checks of the entropy inequalities that justify it."""

__version__ = "0.1.0"
