"""Rank-constrained solutions of linear matrix equations.

Quadratic rank functionals, descent and bilinear refinement heuristics over
an interior-point SDP core, convex baselines and application encoders.
"""

__version__ = "0.1.0"
