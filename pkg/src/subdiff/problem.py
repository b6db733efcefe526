"""Streaming linear-regression testbed over the network.

Each agent k observes gamma = h^T w_k_target + v with isotropic Gaussian
regressors (variance sigma_h2[k]) and independent Gaussian noise
(variance sigma_v2[k]), giving the half-squared risk its closed-form
gradient sigma_h2[k] (w - w_k_target) and Hessian sigma_h2[k] I. The
module supplies data sampling, stochastic and exact gradients, the
subspace-constrained optimum, and the gradient-noise covariance at that
optimum needed by the steady-state predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from subdiff.errors import SingularProjection
from subdiff.netgraph import Subspace


@dataclass(frozen=True)
class QuadraticNetworkProblem:
    """Per-agent regression targets, variances and the shared subspace."""

    K: int
    M: int
    w_o: np.ndarray
    sigma_h2: np.ndarray
    sigma_v2: np.ndarray
    subspace: Subspace

    def __post_init__(self):
        object.__setattr__(self, "w_o", np.asarray(self.w_o, dtype=float).reshape(-1))
        object.__setattr__(self, "sigma_h2", np.asarray(self.sigma_h2, dtype=float))
        object.__setattr__(self, "sigma_v2", np.asarray(self.sigma_v2, dtype=float))
        if self.w_o.shape != (self.K * self.M,):
            raise ValueError("w_o must have length K*M")
        if self.sigma_h2.shape != (self.K,) or self.sigma_v2.shape != (self.K,):
            raise ValueError("variance arrays must have length K")
        if np.any(self.sigma_h2 <= 0) or np.any(self.sigma_v2 <= 0):
            raise ValueError("variances must be strictly positive")
        if self.subspace.dim != self.K * self.M:
            raise ValueError("subspace dimension must equal K*M")

    def target(self, k: int) -> np.ndarray:
        """Local regression target of agent k."""
        return self.w_o[k * self.M : (k + 1) * self.M]

    @property
    def targets(self) -> np.ndarray:
        """Targets as a (K, M) array."""
        return self.w_o.reshape(self.K, self.M)


@dataclass(frozen=True)
class DataSample:
    """One streaming observation: regressor h and scalar measurement gamma."""

    h: np.ndarray
    gamma: float


def draw_variances(
    K: int,
    sigma_h2_range: tuple[float, float],
    sigma_v2_range: tuple[float, float],
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw per-agent regressor and noise variances from uniform ranges.

    One dedicated stream per experiment: sigma_h2 is drawn first, then
    sigma_v2, so the regressor statistics are unchanged when only the
    noise range differs between configurations.
    """
    rng = np.random.default_rng(seed)
    sigma_h2 = rng.uniform(*sigma_h2_range, size=K)
    sigma_v2 = rng.uniform(*sigma_v2_range, size=K)
    return sigma_h2, sigma_v2


def sample(problem: QuadraticNetworkProblem, k: int, rng: np.random.Generator) -> DataSample:
    """Draw one observation for agent k from the caller's stream."""
    h = rng.standard_normal(problem.M) * np.sqrt(problem.sigma_h2[k])
    v = rng.standard_normal() * np.sqrt(problem.sigma_v2[k])
    return DataSample(h=h, gamma=float(h @ problem.target(k) + v))


def stochastic_gradient(
    problem: QuadraticNetworkProblem, k: int, w_k: np.ndarray, s: DataSample
) -> np.ndarray:
    """Instantaneous half-squared-loss gradient h (h^T w - gamma)."""
    return s.h * (s.h @ w_k - s.gamma)


def true_gradient(problem: QuadraticNetworkProblem, k: int, w_k: np.ndarray) -> np.ndarray:
    """Exact risk gradient sigma_h2[k] (w - target)."""
    return problem.sigma_h2[k] * (np.asarray(w_k) - problem.target(k))


def hessian(problem: QuadraticNetworkProblem, k: int) -> np.ndarray:
    """Risk Hessian of agent k: sigma_h2[k] I_M."""
    return problem.sigma_h2[k] * np.eye(problem.M)


def network_hessian(problem: QuadraticNetworkProblem) -> np.ndarray:
    """Block-diagonal stacked Hessian diag{sigma_h2[k] I_M}."""
    return np.diag(np.repeat(problem.sigma_h2, problem.M))


def risk(problem: QuadraticNetworkProblem, k: int, w_k: np.ndarray) -> float:
    """Expected half-squared loss of agent k at w_k."""
    d = np.asarray(w_k) - problem.target(k)
    return float(0.5 * problem.sigma_h2[k] * (d @ d) + 0.5 * problem.sigma_v2[k])


def network_risk(problem: QuadraticNetworkProblem, w: np.ndarray) -> float:
    """Sum of local risks at a stacked iterate."""
    d = (np.asarray(w) - problem.w_o).reshape(problem.K, problem.M)
    return float(0.5 * np.sum(problem.sigma_h2 * np.sum(d * d, axis=1)) + 0.5 * problem.sigma_v2.sum())


def optimum(problem: QuadraticNetworkProblem) -> np.ndarray:
    """Closed-form constrained optimum U (U^T H U)^{-1} U^T H w_o.

    Raises SingularProjection when the subspace-restricted normal matrix
    is numerically singular (it is positive definite here, so this only
    occurs for degenerate inputs).
    """
    U = problem.subspace.U
    H_diag = np.repeat(problem.sigma_h2, problem.M)
    HU = H_diag[:, None] * U
    normal = U.T @ HU
    rhs = HU.T @ problem.w_o
    try:
        z = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularProjection(str(exc)) from exc
    w_star = U @ z
    residual = np.linalg.norm(U.T @ (H_diag * (w_star - problem.w_o)))
    if residual > 1e-9 * max(1.0, np.linalg.norm(rhs)):
        raise SingularProjection(f"stationarity residual {residual:.3e} too large")
    return w_star


def noise_covariance_at_optimum(problem: QuadraticNetworkProblem) -> np.ndarray:
    """Gradient-noise covariance at the constrained optimum, stacked block-diagonal.

    For Gaussian regressors the fourth-moment identity gives, per agent,
    R_k = sigma_v2 sigma_h2 I + sigma_h2^2 (e e^T + ||e||^2 I) with
    e = w_star_k - target_k.
    """
    w_star = optimum(problem)
    blocks = []
    M = problem.M
    for k in range(problem.K):
        e = w_star[k * M : (k + 1) * M] - problem.target(k)
        sh2, sv2 = problem.sigma_h2[k], problem.sigma_v2[k]
        blocks.append(sv2 * sh2 * np.eye(M) + sh2**2 * (np.outer(e, e) + (e @ e) * np.eye(M)))
    return block_diag(*blocks)


def problem_to_json(problem: QuadraticNetworkProblem) -> dict:
    """Variances and targets for the experiment record."""
    return {
        "K": problem.K,
        "M": problem.M,
        "sigma_h2": problem.sigma_h2.tolist(),
        "sigma_v2": problem.sigma_v2.tolist(),
        "w_o": problem.w_o.tolist(),
    }
