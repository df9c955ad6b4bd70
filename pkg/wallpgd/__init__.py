"""PGD parametric models of transient heat conduction through a wall layer."""

__version__ = "0.1.0"
