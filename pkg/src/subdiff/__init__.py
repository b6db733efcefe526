"""Decentralized subspace-constrained multitask learning over networks.

Simulator and library for subspace diffusion strategies: bias-corrected
(exact) subspace diffusion with multiple local updates, approximate-projection
baselines, a centralized projected-SGD benchmark, block-sparse combination
matrix synthesis, and steady-state mean-squared-deviation predictions that
the Monte Carlo harness verifies against simulation.
"""

__version__ = "0.1.0"

from subdiff import algorithms, combiner, harness, netgraph, predictor, problem
from subdiff.errors import (
    EigenFailure,
    GraphDisconnected,
    InfeasibleConstraints,
    NonFiniteIterate,
    NotConverged,
    NotPSD,
    OutputUnwritable,
    RankDeficient,
    SeriesDiverges,
    SingularProjection,
    SpectralViolation,
    SubdiffError,
)

__all__ = [
    "algorithms",
    "combiner",
    "harness",
    "netgraph",
    "predictor",
    "problem",
    "SubdiffError",
    "GraphDisconnected",
    "EigenFailure",
    "RankDeficient",
    "InfeasibleConstraints",
    "SpectralViolation",
    "NotPSD",
    "SingularProjection",
    "NonFiniteIterate",
    "SeriesDiverges",
    "NotConverged",
    "OutputUnwritable",
]
