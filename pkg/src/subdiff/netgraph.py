"""Random geometric networks, their graph spectra, and smooth target signals.

Builds the simulation substrate: agents placed uniformly in the unit square,
Gaussian-kernel edge weights inside a connection radius, the weighted graph
Laplacian and its eigendecomposition, bandlimited subspace constraints built
from the smoothest Laplacian eigenvectors, and per-agent target models
generated by low-pass filtering white noise on the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from subdiff.errors import EigenFailure, GraphDisconnected, RankDeficient


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected weighted graph over K agents in the unit square.

    ``adjacency`` is boolean, symmetric, with zero diagonal; neighborhoods
    are self-inclusive (``neighbors(k)`` always contains k). ``weights`` is
    the nonnegative symmetric weight matrix C, zero outside edges.
    """

    coords: np.ndarray
    adjacency: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(np.asarray(self.coords, dtype=float)))
        object.__setattr__(self, "adjacency", _frozen(np.asarray(self.adjacency, dtype=bool)))
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))
        adj, w = self.adjacency, self.weights
        if adj.shape != (self.K, self.K) or w.shape != (self.K, self.K):
            raise ValueError("adjacency/weights must be K x K")
        if np.any(adj != adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency diagonal must be zero")
        if np.any(w != w.T):
            raise ValueError("weights must be symmetric")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(w[~adj] != 0):
            raise ValueError("weights must vanish outside edges")

    @property
    def K(self) -> int:
        return self.coords.shape[0]

    def neighbors(self, k: int) -> np.ndarray:
        """Indices of the self-inclusive neighborhood of agent k."""
        mask = self.adjacency[k].copy()
        mask[k] = True
        return np.flatnonzero(mask)

    @property
    def block_pattern(self) -> np.ndarray:
        """Boolean K x K mask of allowed combiner blocks (neighbors plus self)."""
        return self.adjacency | np.eye(self.K, dtype=bool)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Graph Laplacian L = diag(C 1) - C with eigenpairs sorted ascending."""

    laplacian: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "laplacian", _frozen(self.laplacian))
        object.__setattr__(self, "eigvecs", _frozen(self.eigvecs))
        object.__setattr__(self, "eigvals", _frozen(self.eigvals))

    @property
    def K(self) -> int:
        return self.eigvals.shape[0]


@dataclass(frozen=True)
class Subspace:
    """Constraint subspace: full-column-rank U with cached projector.

    ``agent_basis`` is set when U has the block form (agent basis) x I_M,
    which combiner synthesis exploits; it is None for a general U.
    """

    U: np.ndarray
    M: int
    projector: np.ndarray
    agent_basis: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "U", _frozen(self.U))
        object.__setattr__(self, "projector", _frozen(self.projector))
        if self.agent_basis is not None:
            object.__setattr__(self, "agent_basis", _frozen(self.agent_basis))

    @property
    def dim(self) -> int:
        """Ambient dimension K*M."""
        return self.U.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]


def make_subspace(U: np.ndarray, M: int, agent_basis: np.ndarray | None = None) -> Subspace:
    """Wrap a constraint matrix, checking rank and caching its projector."""
    U = np.asarray(U, dtype=float)
    sv = np.linalg.svd(U, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficient(
            f"constraint matrix is rank deficient (sigma_min/sigma_max = {sv[-1] / sv[0]:.3e})"
        )
    gram = U.T @ U
    projector = U @ np.linalg.solve(gram, U.T)
    projector = 0.5 * (projector + projector.T)
    return Subspace(U=U, M=M, projector=projector, agent_basis=agent_basis)


def generate_geometric_graph(
    K: int, seed: int, kernel_width: float, radius: float
) -> NetworkTopology:
    """Sample a connected random geometric graph on the unit square.

    Agents are placed i.i.d. uniformly; two agents are linked when their
    Euclidean distance is at most ``radius``, with Gaussian-kernel weight
    exp(-d^2 / (2 kernel_width^2)).

    Raises
    ------
    GraphDisconnected
        If the sampled graph is not connected. Callers retry with another
        seed or a larger radius.
    """
    if K < 2:
        raise ValueError("need at least two agents")
    if kernel_width <= 0:
        raise ValueError("kernel_width must be positive")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(K, 2))
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    adjacency = (dist <= radius) & ~np.eye(K, dtype=bool)
    n_comp, _ = connected_components(csr_matrix(adjacency), directed=False)
    if n_comp != 1:
        raise GraphDisconnected(
            f"geometric graph with K={K}, radius={radius} split into {n_comp} components"
        )
    weights = np.where(adjacency, np.exp(-(dist**2) / (2.0 * kernel_width**2)), 0.0)
    weights = 0.5 * (weights + weights.T)  # exact symmetry despite round-off
    return NetworkTopology(coords=coords, adjacency=adjacency, weights=weights)


def spectral(topology: NetworkTopology) -> SpectralDecomposition:
    """Eigendecompose the weighted graph Laplacian.

    Eigenpairs are sorted by ascending eigenvalue and each eigenvector's
    sign is fixed so its largest-magnitude entry is positive.
    """
    C = topology.weights
    L = np.diag(C.sum(axis=1)) - C
    L = 0.5 * (L + L.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"Laplacian eigendecomposition failed: {exc}") from exc
    # reproducible sign convention across eigensolvers
    pivot = np.argmax(np.abs(eigvecs), axis=0)
    signs = np.sign(eigvecs[pivot, np.arange(eigvecs.shape[1])])
    signs[signs == 0] = 1.0
    eigvecs = eigvecs * signs
    return SpectralDecomposition(laplacian=L, eigvecs=eigvecs, eigvals=eigvals)


def build_subspace(spec: SpectralDecomposition, P: int, M: int) -> Subspace:
    """Bandlimited constraint: the P smoothest Laplacian eigenvectors per coordinate.

    U = V_P kron I_M, where V_P holds the eigenvectors of smallest
    eigenvalue; its columns are orthonormal by construction.
    """
    K = spec.K
    if not 1 <= P <= K:
        raise ValueError(f"P must be in [1, {K}], got {P}")
    if M < 1:
        raise ValueError("M must be positive")
    V_P = spec.eigvecs[:, :P]
    U = np.kron(V_P, np.eye(M))
    return make_subspace(U, M, agent_basis=V_P)


def smooth_targets(spec: SpectralDecomposition, M: int, tau: float, seed: int) -> np.ndarray:
    """Generate stacked per-agent targets by heat-kernel filtering white noise.

    Each of the M model coordinates is an independent standard-normal signal
    over agents, filtered by V exp(-tau L) V^T. Returns the stacked vector
    col{w_k} of length K*M.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((spec.K, M))
    kernel = spec.eigvecs @ (np.exp(-tau * spec.eigvals)[:, None] * (spec.eigvecs.T @ raw))
    return kernel.reshape(-1)


def dirichlet_energy(spec: SpectralDecomposition, stacked: np.ndarray, M: int) -> float:
    """Smoothness functional w^T (L kron I_M) w of a stacked signal."""
    per_agent = np.asarray(stacked, dtype=float).reshape(spec.K, M)
    return float(np.sum(per_agent * (spec.laplacian @ per_agent)))


def network_to_json(
    topology: NetworkTopology, subspace: Subspace, w_o: np.ndarray
) -> dict:
    """Serialize topology, constraint matrix and targets for experiment replay.

    Schema: {K, M, P, coords, edges [[k, l, c]], U (column-major), w_o}.
    """
    K = topology.K
    edges = []
    rows, cols = np.nonzero(np.triu(topology.adjacency, k=1))
    for k, l in zip(rows.tolist(), cols.tolist()):
        edges.append([k, l, float(topology.weights[k, l])])
    return {
        "K": K,
        "M": subspace.M,
        "P": subspace.rank // subspace.M,
        "coords": topology.coords.tolist(),
        "edges": edges,
        "U": subspace.U.flatten(order="F").tolist(),
        "w_o": np.asarray(w_o, dtype=float).reshape(-1).tolist(),
    }


def network_from_json(doc: dict) -> tuple[NetworkTopology, Subspace, np.ndarray]:
    """Rebuild (topology, subspace, targets) from `network_to_json` output."""
    K, M = int(doc["K"]), int(doc["M"])
    coords = np.asarray(doc["coords"], dtype=float)
    adjacency = np.zeros((K, K), dtype=bool)
    weights = np.zeros((K, K))
    for k, l, c in doc["edges"]:
        adjacency[int(k), int(l)] = adjacency[int(l), int(k)] = True
        weights[int(k), int(l)] = weights[int(l), int(k)] = float(c)
    topology = NetworkTopology(coords=coords, adjacency=adjacency, weights=weights)
    P = int(doc["P"])
    U = np.asarray(doc["U"], dtype=float).reshape((K * M, P * M), order="F")
    # recover the agent-level factor when U has exact Kronecker structure
    agent_basis = _kron_factor(U, K, M, P)
    subspace = make_subspace(U, M, agent_basis=agent_basis)
    w_o = np.asarray(doc["w_o"], dtype=float)
    if w_o.shape != (K * M,):
        raise ValueError("w_o length must be K*M")
    return topology, subspace, w_o


def _kron_factor(U: np.ndarray, K: int, M: int, P: int) -> np.ndarray | None:
    """Return V with U = V kron I_M if that factorization is exact, else None."""
    if U.shape != (K * M, P * M):
        return None
    blocks = U.reshape(K, M, P, M)
    V = blocks[:, 0, :, 0]
    if np.array_equal(np.kron(V, np.eye(M)), U):
        return V
    return None
