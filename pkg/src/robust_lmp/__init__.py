"""Robust day-ahead market clearing with wind uncertainty sets.

Builds multi-ellipsoid wind uncertainty sets from a fitted copula, solves
two-stage robust unit commitment by column-and-constraint generation, and
prices the robust dispatch with energy and uncertainty marginal prices.
"""

__version__ = "0.1.0"
