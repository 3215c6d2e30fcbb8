"""Drifting echo-sounder buoy analytics.

Cleaning and biomass estimation for hourly buoy transmissions, virgin
segment extraction, binary and spline smoothing, tuna aggregation
metrics, rank-based group statistics, and report generation, plus a
synthetic fleet generator with known ground truth.
"""

__version__ = "0.1.0"
