"""Numerical direction sets, tangent cones and geometric directional bundles.

The package samples described sets near the origin at dyadic scales,
estimates direction sets and their limit bundles on the unit sphere,
iterates the bundle operator to a stabilization degree, and checks the
structural properties (monotone chains, union additivity, dimension
bounds) against closed-form oracles.
"""

__version__ = "0.1.0"
