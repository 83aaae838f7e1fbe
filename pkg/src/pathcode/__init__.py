"""Path-coding penalties: sparse estimation with supports shaped as unions of DAG paths."""

__version__ = "0.1.0"
