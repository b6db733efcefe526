"""Steady-state mean-squared-deviation predictions.

Two predictions of the limiting per-agent deviation of bias-corrected
subspace diffusion with single local updates:

- an exact matrix series (mu^2 / K) Tr(sum_n C^n Y C^n) with
  C = A (I - mu H) and Y = A R A, summed iteratively until relative
  truncation; and
- the small-step trace formula (mu / 2K) Tr((U^T H U)^{-1} U^T R U),
  which also equals the centralized benchmark's limiting performance.

Both values use the per-agent-average deviation convention (stacked squared
deviation divided by K), matching the harness's measured MSD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from subdiff.errors import NotConverged, SeriesDiverges, SingularProjection


@dataclass(frozen=True)
class TheoryInputs:
    """Ingredients of the steady-state predictions.

    A: combination matrix; H_star: block-diagonal network Hessian at the
    optimum; R_star: block-diagonal gradient-noise covariance at the
    optimum; U: constraint matrix; mu: step-size; K: agent count.
    """

    A: np.ndarray
    H_star: np.ndarray
    R_star: np.ndarray
    U: np.ndarray
    mu: float
    K: int

    def __post_init__(self):
        n = self.A.shape[0]
        if self.H_star.shape != (n, n) or self.R_star.shape != (n, n):
            raise ValueError("A, H_star, R_star must share their dimension")
        if self.U.shape[0] != n:
            raise ValueError("U must have K*M rows")
        for name in ("A", "H_star", "R_star"):
            mat = getattr(self, name)
            if np.abs(mat - mat.T).max(initial=0.0) > 1e-8 * max(1.0, np.abs(mat).max()):
                raise ValueError(f"{name} must be symmetric")


def estimate_spectral_radius(
    C: np.ndarray, iterations: int = 200, tol: float = 1e-10
) -> float:
    """Power-iteration estimate of rho(C) for a general square matrix."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal(C.shape[0])
    x /= np.linalg.norm(x)
    radius = 0.0
    for _ in range(iterations):
        y = C @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        if abs(norm - radius) <= tol * max(1.0, norm):
            return norm
        radius = norm
        x = y / norm
    return radius


def msd_exact(
    inputs: TheoryInputs,
    rel_tol: float = 1e-12,
    n_max: int = 10**6,
    transpose: bool = False,
) -> float:
    """Exact series prediction, truncated at relative tolerance ``rel_tol``.

    Iterates X_{n+1} = C X_n C (or C X_n C^T when ``transpose`` is set)
    from X_0 = Y, accumulating traces until the current term falls below
    rel_tol times the accumulated sum; the geometric tail bound
    term * rho^2 / (1 - rho^2) must fall below the same threshold, so the
    truncation error itself is at the rel_tol level.

    Raises
    ------
    SeriesDiverges
        If the estimated spectral radius of C is at least 1.
    NotConverged
        If ``n_max`` terms do not reach the tolerance.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    n = inputs.A.shape[0]
    C = inputs.A @ (np.eye(n) - inputs.mu * inputs.H_star)
    radius = estimate_spectral_radius(C)
    if radius >= 1.0:
        raise SeriesDiverges(f"rho(A(I - mu H)) ~= {radius:.6f} >= 1")
    Y = inputs.A @ inputs.R_star @ inputs.A
    Ct = C.T if transpose else C
    tail_factor = max(1.0, radius**2 / max(1.0 - radius**2, 1e-300))
    X = Y.copy()
    term = float(np.trace(X))
    total = term
    for _ in range(n_max):
        if abs(term) * tail_factor <= rel_tol * abs(total):
            return inputs.mu**2 / inputs.K * total
        X = C @ X @ Ct
        term = float(np.trace(X))
        total += term
    raise NotConverged(f"series needed more than {n_max} terms at rel_tol={rel_tol}")


def msd_small_mu(inputs: TheoryInputs) -> float:
    """Small-step trace prediction (mu / 2K) Tr((U^T H U)^{-1} U^T R U)."""
    U = inputs.U
    restricted_h = U.T @ inputs.H_star @ U
    restricted_r = U.T @ inputs.R_star @ U
    try:
        solved = scipy.linalg.solve(restricted_h, restricted_r, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularProjection(str(exc)) from exc
    return float(inputs.mu / (2.0 * inputs.K) * np.trace(solved))
