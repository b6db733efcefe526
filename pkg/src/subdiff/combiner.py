"""Synthesis and validation of block-sparse combination matrices.

A valid combiner A is symmetric, respects the graph's block sparsity,
fixes the constraint subspace (A P_U = P_U), and contracts its orthogonal
complement (rho(P_U - A) < 1), so that repeated mixing converges to the
exact projector. From A we derive the half-step mixer Abar = (I + A)/2 and
the dual coupling B = ((I - A)/2)^(1/2) used by bias-corrected diffusion.

Synthesis minimizes ||A - P_U||_F over the feasible set. The plain
equality-constrained least-squares minimizer routinely violates the
spectral condition on sparse geometric graphs (complement eigenvalues land
slightly above 1), so the spectral bound is imposed as an explicit convex
constraint rho(P_U - A) <= cap and the projection of P_U onto the
intersection is computed by ADMM: the affine part (sparsity + symmetry +
A U = U) has a prefactored exact projector, and the spectral part clips
the eigenvalues of the complement-compressed block. When the subspace has
the form (agent basis) x I_M the unique minimizer inherits that structure,
so the solve reduces to an agent-level problem of size K.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import null_space
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.sparse.linalg import lsmr

from subdiff.errors import InfeasibleConstraints, NotPSD, SpectralViolation
from subdiff.netgraph import NetworkTopology, Subspace

# complement-spectrum bound imposed during synthesis; kept safely inside 1
# so that mixing contracts while staying as close to P_U as the graph allows
SPECTRAL_CAP = 0.985

# above this constraint count the affine projector solves iteratively
# instead of prefactoring a dense pseudo-inverse
_PREFACTOR_LIMIT = 1200

_ADMM_PENALTY = 2.0
_ADMM_RELAXATION = 1.7
_ADMM_TOL = 1e-10
_ADMM_MAX_ITER = 12_000


@dataclass(frozen=True)
class BlockCombiner:
    """Validated combination matrix with its derived mixing operators.

    ``pattern`` is the self-inclusive K x K block support; the sparse
    operators used by the algorithms are assembled from these blocks only,
    so a combine step never reads non-neighbor state.
    """

    A: np.ndarray
    M: int
    pattern: np.ndarray
    Abar: np.ndarray
    B: np.ndarray
    lambda_A: float
    lambda_Abar: float

    @property
    def K(self) -> int:
        return self.pattern.shape[0]

    def _neighbor_csr(self, dense: np.ndarray) -> csr_matrix:
        mask = np.kron(self.pattern, np.ones((self.M, self.M), dtype=bool))
        return csr_matrix(np.where(mask, dense, 0.0))

    @cached_property
    def A_op(self) -> csr_matrix:
        """Neighbor-only sparse operator for A."""
        return self._neighbor_csr(self.A)

    @cached_property
    def Abar_op(self) -> csr_matrix:
        """Neighbor-only sparse operator for Abar."""
        return self._neighbor_csr(self.Abar)


@dataclass(frozen=True)
class CombinerReport:
    """Per-property residuals of a combiner, with pass flags at ``tol``.

    The spectral-radius entry passes when rho(P_U - A) < 1; the remaining
    residuals pass when at most ``tol``.
    """

    sparsity: float
    fixes_projector: float
    symmetry: float
    spectral_radius: float
    sqrt_residual: float
    annihilation: float
    tol: float

    @property
    def passes(self) -> dict[str, bool]:
        return {
            "sparsity": self.sparsity <= self.tol,
            "fixes_projector": self.fixes_projector <= self.tol,
            "symmetry": self.symmetry <= self.tol,
            "spectral_radius": self.spectral_radius < 1.0,
            "sqrt_residual": self.sqrt_residual <= self.tol,
            "annihilation": self.annihilation <= self.tol,
        }

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())

    def lines(self) -> list[str]:
        flags = self.passes
        return [
            f"{name:16s} {getattr(self, name):12.3e}  {'pass' if flags[name] else 'FAIL'}"
            for name in flags
        ]


def matrix_sqrt_psd(S: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below -1e-10 raise NotPSD; round-off negatives above that
    threshold are clamped to zero.
    """
    S = np.asarray(S, dtype=float)
    scale = max(1.0, float(np.abs(S).max())) if S.size else 1.0
    if np.abs(S - S.T).max(initial=0.0) > 1e-8 * scale:
        raise ValueError("matrix_sqrt_psd expects a symmetric matrix")
    eigvals, eigvecs = np.linalg.eigh(0.5 * (S + S.T))
    if eigvals.min(initial=0.0) < -1e-10:
        raise NotPSD(f"eigenvalue {eigvals.min():.3e} below -1e-10")
    eigvals = np.clip(eigvals, 0.0, None)
    # round-off-sized eigenvalues become exact zeros, else sqrt would
    # inflate them to ~1e-8 and blur the null space
    eigvals[eigvals < 1e-12 * eigvals.max(initial=0.0)] = 0.0
    root = eigvecs @ (np.sqrt(eigvals)[:, None] * eigvecs.T)
    return 0.5 * (root + root.T)


def _symmetric_spectral_radius(S: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(0.5 * (S + S.T))).max())


class _AffineProjector:
    """Frobenius projection onto {A symmetric, pattern-sparse, A U = U}.

    Free variables are the independent scalar entries of the symmetric
    sparsity pattern (off-diagonal entries carry weight 2, appearing twice
    in A). The KKT system is prefactored through a rank-revealing
    pseudo-inverse when small, and solved by LSMR otherwise.
    """

    def __init__(self, U: np.ndarray, pattern: np.ndarray, M: int):
        K = pattern.shape[0]
        n = K * M
        Ptil = U.shape[1]
        var_a: list[int] = []
        var_b: list[int] = []
        for k in range(K):
            for l in range(k, K):
                if not pattern[k, l]:
                    continue
                for a_loc in range(M):
                    a = k * M + a_loc
                    for b_loc in range(M):
                        b = l * M + b_loc
                        if b >= a:
                            var_a.append(a)
                            var_b.append(b)
        self.a_idx = np.asarray(var_a, dtype=np.int64)
        self.b_idx = np.asarray(var_b, dtype=np.int64)
        n_free = self.a_idx.size
        cols1 = np.repeat(np.arange(n_free), Ptil)
        rows1 = (self.a_idx[:, None] * Ptil + np.arange(Ptil)[None, :]).ravel()
        data1 = U[self.b_idx].ravel()
        off = self.a_idx != self.b_idx
        cols2 = np.repeat(np.flatnonzero(off), Ptil)
        rows2 = (self.b_idx[off][:, None] * Ptil + np.arange(Ptil)[None, :]).ravel()
        data2 = U[self.a_idx[off]].ravel()
        self.G = coo_matrix(
            (
                np.concatenate([data1, data2]),
                (np.concatenate([rows1, rows2]), np.concatenate([cols1, cols2])),
            ),
            shape=(n * Ptil, n_free),
        ).tocsr()
        self.GT = self.G.T.tocsr()
        self.weight = np.where(off, 2.0, 1.0)
        self.rhs = U.ravel()
        self.n = n
        self.n_con = n * Ptil
        if self.n_con <= _PREFACTOR_LIMIT:
            S = (self.G @ diags(1.0 / self.weight) @ self.GT).toarray()
            self._S_pinv = np.linalg.pinv(S, rcond=1e-10)
        else:
            self._S_pinv = None

    def __call__(self, X: np.ndarray) -> np.ndarray:
        prior = X[self.a_idx, self.b_idx]
        residual = self.G @ prior - self.rhs
        if self._S_pinv is not None:
            nu = self._S_pinv @ residual
            x = prior - (self.GT @ nu) / self.weight
        else:
            inv_root = 1.0 / np.sqrt(self.weight)
            scaled = self.G @ diags(inv_root)
            y = lsmr(scaled, -residual, atol=1e-13, btol=1e-13, conlim=1e14)[0]
            x = prior + inv_root * y
        A = np.zeros((self.n, self.n))
        A[self.a_idx, self.b_idx] = x
        A[self.b_idx, self.a_idx] = x
        return A


def _fit_spectral_capped(
    U: np.ndarray, target: np.ndarray, pattern: np.ndarray, M: int, cap: float
) -> tuple[np.ndarray, bool]:
    """Project ``target`` onto the combiner feasible set with margin ``cap``.

    Solves min ||A - target||_F subject to symmetry, block sparsity,
    A U = U and rho(P_U - A) <= cap by ADMM with over-relaxation and
    residual-balanced penalty updates. Returns (A, converged); A always
    satisfies the affine constraints exactly (last step is the affine
    projection).
    """
    project_affine = _AffineProjector(U, pattern, M)
    A = project_affine(target)
    complement = null_space(U.T)
    if complement.shape[1] == 0:
        return A, True
    spectrum = np.linalg.eigvalsh(complement.T @ A @ complement)
    if np.abs(spectrum).max() <= cap:
        return A, True

    penalty = _ADMM_PENALTY
    Z = target.copy()
    dual = np.zeros_like(target)
    for it in range(_ADMM_MAX_ITER):
        A = project_affine((target + penalty * (Z - dual)) / (1.0 + penalty))
        relaxed = _ADMM_RELAXATION * A + (1.0 - _ADMM_RELAXATION) * Z
        X = relaxed + dual
        block = complement.T @ X @ complement
        w, Q = np.linalg.eigh(0.5 * (block + block.T))
        Z_new = X + complement @ ((Q * (np.clip(w, -cap, cap) - w)) @ Q.T) @ complement.T
        dual_res = penalty * np.linalg.norm(Z_new - Z)
        Z = Z_new
        dual = X - Z
        primal_res = np.linalg.norm(A - Z)
        if primal_res < _ADMM_TOL and dual_res < _ADMM_TOL:
            return project_affine((target + penalty * (Z - dual)) / (1.0 + penalty)), True
        if (it + 1) % 50 == 0:
            if primal_res > 10.0 * dual_res:
                penalty *= 2.0
                dual /= 2.0
            elif dual_res > 10.0 * primal_res:
                penalty /= 2.0
                dual *= 2.0
    return project_affine((target + penalty * (Z - dual)) / (1.0 + penalty)), False


def _assemble(A: np.ndarray, subspace: Subspace, topology: NetworkTopology) -> BlockCombiner:
    """Derive Abar, B and the spectral radii, enforcing all invariants."""
    P_U = subspace.projector
    n = subspace.dim
    A = 0.5 * (A + A.T)
    constraint = np.linalg.norm(A @ subspace.U - subspace.U)
    if constraint > 1e-8 * max(1.0, np.linalg.norm(subspace.U)):
        raise InfeasibleConstraints(
            f"no block-sparse combiner fixes the subspace on this topology "
            f"(||A U - U|| = {constraint:.3e})"
        )
    lambda_A = _symmetric_spectral_radius(P_U - A)
    if lambda_A >= 1.0:
        raise SpectralViolation(lambda_A)
    Abar = 0.5 * (np.eye(n) + A)
    B = matrix_sqrt_psd(0.5 * (np.eye(n) - A))
    lambda_Abar = _symmetric_spectral_radius(Abar - P_U)
    c = BlockCombiner(
        A=A,
        M=subspace.M,
        pattern=topology.block_pattern,
        Abar=Abar,
        B=B,
        lambda_A=lambda_A,
        lambda_Abar=lambda_Abar,
    )
    report = verify_combiner(c, subspace, topology, tol=1e-8)
    if not report.all_pass:
        raise InfeasibleConstraints("combiner failed validation:\n" + "\n".join(report.lines()))
    return c


def build_combiner(
    subspace: Subspace, topology: NetworkTopology, spectral_cap: float = SPECTRAL_CAP
) -> BlockCombiner:
    """Synthesize the closest valid combiner to the exact projector.

    Raises
    ------
    InfeasibleConstraints
        If no block-sparse matrix fixes the subspace on this topology.
    SpectralViolation
        If the synthesized matrix cannot contract the orthogonal
        complement (reported with the offending radius).
    """
    if subspace.dim != topology.K * subspace.M:
        raise ValueError("subspace and topology disagree on K*M")
    if not 0.0 < spectral_cap < 1.0:
        raise ValueError("spectral_cap must lie in (0, 1)")
    pattern = topology.block_pattern
    if subspace.agent_basis is not None:
        V = subspace.agent_basis
        A_agent, converged = _fit_spectral_capped(V, V @ V.T, pattern, M=1, cap=spectral_cap)
        A = np.kron(A_agent, np.eye(subspace.M))
        radius = _symmetric_spectral_radius(V @ V.T - A_agent)
    else:
        A, converged = _fit_spectral_capped(
            subspace.U, subspace.projector, pattern, subspace.M, cap=spectral_cap
        )
        radius = _symmetric_spectral_radius(subspace.projector - A)
    # a stalled solve is still acceptable while the radius stays well inside 1
    if not converged and radius > 0.5 * (1.0 + spectral_cap):
        raise SpectralViolation(radius)
    return _assemble(A, subspace, topology)


def verify_combiner(
    c: BlockCombiner, subspace: Subspace, topology: NetworkTopology, tol: float = 1e-8
) -> CombinerReport:
    """Compute all combiner residuals; pure report, raises nothing."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    P_U = subspace.projector
    A = c.A
    M = subspace.M
    forbidden = ~np.kron(topology.block_pattern, np.ones((M, M), dtype=bool))
    sparsity = float(np.abs(A[forbidden]).max(initial=0.0))
    fixes = max(
        float(np.linalg.norm(A @ P_U - P_U)),
        float(np.linalg.norm(P_U @ A - P_U)),
    )
    symmetry = float(np.linalg.norm(A - A.T))
    rho = _symmetric_spectral_radius(P_U - A)
    sqrt_residual = float(np.linalg.norm(c.B @ c.B - 0.5 * (np.eye(subspace.dim) - A)))
    annihilation = float(np.linalg.norm(P_U @ c.B))
    return CombinerReport(
        sparsity=sparsity,
        fixes_projector=fixes,
        symmetry=symmetry,
        spectral_radius=rho,
        sqrt_residual=sqrt_residual,
        annihilation=annihilation,
        tol=tol,
    )


def combiner_to_json(c: BlockCombiner) -> dict:
    """Serialize the combiner's stored blocks: {M, blocks: [[k, l, entries]]}."""
    blocks = []
    M = c.M
    for k in range(c.K):
        for l in range(c.K):
            if c.pattern[k, l]:
                blocks.append(
                    [k, l, c.A[k * M : (k + 1) * M, l * M : (l + 1) * M].ravel().tolist()]
                )
    return {"M": M, "blocks": blocks}


def combiner_from_json(doc: dict, subspace: Subspace, topology: NetworkTopology) -> BlockCombiner:
    """Rebuild a combiner from its JSON export and re-validate it.

    A non-symmetric import is symmetrized as (A + A^T)/2 before validation.
    Raises InfeasibleConstraints or SpectralViolation when validation fails.
    """
    M = int(doc["M"])
    if M != subspace.M:
        raise ValueError("block dimension disagrees with the subspace")
    n = topology.K * M
    A = np.zeros((n, n))
    pattern = topology.block_pattern
    for k, l, entries in doc["blocks"]:
        k, l = int(k), int(l)
        if not pattern[k, l]:
            raise InfeasibleConstraints(f"imported block ({k}, {l}) is outside the graph support")
        A[k * M : (k + 1) * M, l * M : (l + 1) * M] = np.asarray(entries, dtype=float).reshape(M, M)
    return _assemble(A, subspace, topology)
