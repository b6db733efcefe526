"""Synchronous-round state machines for the learning strategies.

All algorithms advance one communication round per step call. Iterates are
stored stacked, shape (K*M, R), where R is the number of independent
trajectories advanced in lockstep (R = 1 for a single run); every
trajectory owns its own random stream, so results are identical whether
trajectories run alone or batched.

Strategies:

- exact subspace diffusion: E incremental local gradient steps of size
  mu/E, a correction that telescopes the previous round's local state,
  then a neighbor combine with Abar = (I + A)/2 (bias-corrected).
- approximate-projection diffusion: adapt-then-combine with A.
- combine-then-adapt (dispo): A applied to the previous iterate only,
  followed by a local gradient step.
- centralized benchmark: projected (stochastic) gradient descent with the
  exact subspace projector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from subdiff.combiner import BlockCombiner
from subdiff.errors import NonFiniteIterate
from subdiff.netgraph import Subspace
from subdiff.problem import QuadraticNetworkProblem

# elements per sample buffer refill; fixed budget keeps draws chunk-invariant
_BUFFER_ELEMENTS = 8_000_000

_DIVERGENCE_NORM = 1e12


class ExactGradientSource:
    """Exact risk gradients, evaluated column-wise on stacked iterates."""

    def __init__(self, problem: QuadraticNetworkProblem):
        self._h_diag = np.repeat(problem.sigma_h2, problem.M)[:, None]
        self._w_o = problem.w_o[:, None]

    def __call__(self, W: np.ndarray) -> np.ndarray:
        return self._h_diag * (W - self._w_o)


class StochasticGradientSource:
    """Instantaneous gradients from fresh observations, one stream per trajectory.

    Every call draws one new observation per agent per trajectory, so E
    calls within a round see E independent samples. Each trajectory seed
    spawns separate regressor and noise substreams; values drawn from a
    generator do not depend on batching, which keeps trajectories
    reproducible regardless of buffer size or batch composition.
    """

    def __init__(self, problem: QuadraticNetworkProblem, seeds):
        self.problem = problem
        seqs = [s if isinstance(s, np.random.SeedSequence) else np.random.SeedSequence(s) for s in seeds]
        # stateless child derivation: reusing a caller's SeedSequence must
        # always yield the same substreams (spawn() would advance a counter)
        pairs = [
            tuple(
                np.random.SeedSequence(entropy=s.entropy, spawn_key=tuple(s.spawn_key) + (j,))
                for j in range(2)
            )
            for s in seqs
        ]
        self._h_rngs = [np.random.default_rng(p[0]) for p in pairs]
        self._v_rngs = [np.random.default_rng(p[1]) for p in pairs]
        self._sqrt_h = np.sqrt(problem.sigma_h2)
        self._sqrt_v = np.sqrt(problem.sigma_v2)
        self._targets = problem.targets
        self._refill = max(1, _BUFFER_ELEMENTS // (problem.K * problem.M * len(seqs)))
        self._h_buf = None
        self._v_buf = None
        self._pos = 0

    @property
    def n_trajectories(self) -> int:
        return len(self._h_rngs)

    def _fill(self):
        K, M, R = self.problem.K, self.problem.M, self.n_trajectories
        n = self._refill
        self._h_buf = np.empty((n, K, M, R))
        self._v_buf = np.empty((n, K, R))
        for r in range(R):
            self._h_buf[..., r] = self._h_rngs[r].standard_normal((n, K, M)) * self._sqrt_h[:, None]
            self._v_buf[..., r] = self._v_rngs[r].standard_normal((n, K)) * self._sqrt_v
        self._pos = 0

    def _draw(self):
        if self._h_buf is None or self._pos >= self._refill:
            self._fill()
        h = self._h_buf[self._pos]
        v = self._v_buf[self._pos]
        self._pos += 1
        return h, v

    def __call__(self, W: np.ndarray) -> np.ndarray:
        K, M = self.problem.K, self.problem.M
        h, v = self._draw()  # (K, M, R), (K, R)
        Wb = W.reshape(K, M, -1)
        gamma = np.einsum("kmr,km->kr", h, self._targets) + v
        resid = np.einsum("kmr,kmr->kr", h, Wb) - gamma
        return (h * resid[:, None, :]).reshape(K * M, -1)


@dataclass
class ExactDiffusionState:
    """Iterates and carried local state of exact subspace diffusion.

    ``psi_prev`` holds the previous round's final local iterate and is
    initialized to the starting point, per the algorithm's initialization.
    """

    w: np.ndarray
    psi_prev: np.ndarray
    iteration: int
    mu: float
    local_updates: int


@dataclass
class BaselineState:
    """Iterates of the single-variable strategies (baselines and benchmark)."""

    w: np.ndarray
    iteration: int
    mu: float


def init_exact_diffusion(
    dim: int, mu: float, local_updates: int = 1, n_trajectories: int = 1
) -> ExactDiffusionState:
    """Zero-initialized state; psi_prev starts equal to w."""
    if local_updates < 1:
        raise ValueError("local_updates must be at least 1")
    w = np.zeros((dim, n_trajectories))
    return ExactDiffusionState(w=w, psi_prev=w.copy(), iteration=0, mu=mu, local_updates=local_updates)


def init_baseline(dim: int, mu: float, n_trajectories: int = 1) -> BaselineState:
    return BaselineState(w=np.zeros((dim, n_trajectories)), iteration=0, mu=mu)


def _check_finite(w: np.ndarray, iteration: int):
    sq = np.einsum("ir,ir->r", w, w)
    if not np.all(np.isfinite(sq)) or sq.max(initial=0.0) > _DIVERGENCE_NORM**2:
        raise NonFiniteIterate(f"iterate diverged at round {iteration}")


def step_exact_diffusion(
    state: ExactDiffusionState, combiner: BlockCombiner, gradient_source
) -> ExactDiffusionState:
    """One round: E local updates, correction, neighbor combine with Abar."""
    psi = state.w.copy()
    sub_step = state.mu / state.local_updates
    for _ in range(state.local_updates):
        psi -= sub_step * gradient_source(psi)
    phi = state.w + psi - state.psi_prev
    w_new = combiner.Abar_op @ phi
    state.iteration += 1
    _check_finite(w_new, state.iteration)
    state.w = w_new
    state.psi_prev = psi
    return state


def step_approx_projection(
    state: BaselineState, combiner: BlockCombiner, gradient_source
) -> BaselineState:
    """Adapt-then-combine round using the sparse combiner A."""
    w_new = combiner.A_op @ (state.w - state.mu * gradient_source(state.w))
    state.iteration += 1
    _check_finite(w_new, state.iteration)
    state.w = w_new
    return state


def step_dispo(state: BaselineState, combiner: BlockCombiner, gradient_source) -> BaselineState:
    """Combine-then-adapt round: mix the previous iterate, then a local step."""
    w_new = combiner.A_op @ state.w - state.mu * gradient_source(state.w)
    state.iteration += 1
    _check_finite(w_new, state.iteration)
    state.w = w_new
    return state


def step_centralized(state: BaselineState, subspace: Subspace, gradient_source) -> BaselineState:
    """Projected (stochastic) gradient descent with the exact projector."""
    w_new = subspace.projector @ (state.w - state.mu * gradient_source(state.w))
    state.iteration += 1
    _check_finite(w_new, state.iteration)
    state.w = w_new
    return state
