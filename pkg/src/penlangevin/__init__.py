"""Penalized Langevin dynamics with vanishing penalty.

Samplers (Euler and randomized-midpoint discretizations), exact Gaussian
law propagation, empirical Wasserstein-2 metrics, and evaluators for the
associated convergence bounds.
"""

from . import bounds, dynamics, exactlaw, metrics, potentials, schedules, verify

__all__ = [
    "bounds", "dynamics", "exactlaw", "metrics", "potentials",
    "schedules", "verify",
]

__version__ = "0.1.0"
