import json

import numpy as np
import pytest

from subdiff import netgraph
from subdiff.combiner import (
    BlockCombiner,
    build_combiner,
    combiner_from_json,
    combiner_to_json,
    matrix_sqrt_psd,
    verify_combiner,
)
from subdiff.errors import InfeasibleConstraints, NotPSD, SpectralViolation


def _complete_topology(K):
    coords = np.stack([np.linspace(0, 1, K), np.zeros(K)], axis=1)
    adjacency = ~np.eye(K, dtype=bool)
    weights = np.where(adjacency, 1.0, 0.0)
    return netgraph.NetworkTopology(coords=coords, adjacency=adjacency, weights=weights)


def _path_topology(K):
    coords = np.stack([np.linspace(0, 1, K), np.zeros(K)], axis=1)
    adjacency = np.zeros((K, K), dtype=bool)
    for k in range(K - 1):
        adjacency[k, k + 1] = adjacency[k + 1, k] = True
    weights = np.where(adjacency, 1.0, 0.0)
    return netgraph.NetworkTopology(coords=coords, adjacency=adjacency, weights=weights)


def _consensus_subspace(K, M):
    return netgraph.make_subspace(
        np.kron(np.full((K, 1), 1 / np.sqrt(K)), np.eye(M)),
        M,
        agent_basis=np.full((K, 1), 1 / np.sqrt(K)),
    )


def test_matrix_sqrt_identity():
    assert np.allclose(matrix_sqrt_psd(np.eye(4)), np.eye(4), atol=1e-12)


def test_matrix_sqrt_diagonal():
    assert np.allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)


def test_matrix_sqrt_two_agent_case():
    # (I - A)/2 for the two-agent averaging combiner
    S = np.array([[0.25, -0.25], [-0.25, 0.25]])
    B = matrix_sqrt_psd(S)
    assert np.allclose(B @ B, S, atol=1e-12)
    assert np.allclose(B, B.T, atol=1e-14)


def test_matrix_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        matrix_sqrt_psd(np.diag([1.0, -1e-3]))


def test_matrix_sqrt_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        matrix_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_fully_connected_consensus_recovers_projector():
    K = 6
    topo = _complete_topology(K)
    sub = _consensus_subspace(K, 1)
    c = build_combiner(sub, topo)
    assert np.abs(c.A - np.full((K, K), 1 / K)).max() <= 1e-9
    assert np.linalg.norm(c.A - sub.projector) <= 1e-8
    assert c.lambda_A <= 1e-7


def test_two_agent_path_consensus_minimizer_is_half():
    topo = _path_topology(2)
    sub = _consensus_subspace(2, 1)
    c = build_combiner(sub, topo)
    # the feasible family is [[a, 1-a], [1-a, a]]; Frobenius picks a = 1/2
    assert np.allclose(c.A, np.full((2, 2), 0.5), atol=1e-9)
    assert c.lambda_A <= 1e-8
    assert np.allclose(c.B @ c.B, np.array([[0.25, -0.25], [-0.25, 0.25]]), atol=1e-9)


def test_identity_combiner_fails_spectral_condition():
    # disconnected pair forces A = I, which cannot contract the complement
    coords = np.array([[0.0, 0.0], [1.0, 0.0]])
    adjacency = np.zeros((2, 2), dtype=bool)
    topo = netgraph.NetworkTopology(coords=coords, adjacency=adjacency, weights=np.zeros((2, 2)))
    sub = _consensus_subspace(2, 1)
    with pytest.raises(SpectralViolation) as err:
        build_combiner(sub, topo)
    assert err.value.radius >= 1.0


def test_verify_flags_identity_on_proper_subspace():
    K = 5
    topo = _complete_topology(K)
    sub = _consensus_subspace(K, 1)
    c = BlockCombiner(
        A=np.eye(K),
        M=1,
        pattern=topo.block_pattern,
        Abar=np.eye(K),
        B=np.zeros((K, K)),
        lambda_A=1.0,
        lambda_Abar=1.0,
    )
    report = verify_combiner(c, sub, topo)
    assert report.fixes_projector <= 1e-12
    assert np.isclose(report.spectral_radius, 1.0)
    assert not report.passes["spectral_radius"]
    assert not report.all_pass


def test_full_scale_combiner_all_residuals_pass():
    topo = netgraph.generate_geometric_graph(50, seed=4, kernel_width=0.25, radius=0.5)
    dec = netgraph.spectral(topo)
    sub = netgraph.build_subspace(dec, P=3, M=5)
    c = build_combiner(sub, topo)
    report = verify_combiner(c, sub, topo, tol=1e-8)
    assert report.all_pass, report.lines()
    assert c.lambda_A < 1.0
    assert c.lambda_Abar <= 0.5 + 0.5 * c.lambda_A + 1e-12


def test_general_block_path_without_kron_structure():
    # drop the agent-basis marker to force the blockwise solver
    topo = netgraph.generate_geometric_graph(8, seed=6, kernel_width=0.4, radius=0.9)
    dec = netgraph.spectral(topo)
    kron_sub = netgraph.build_subspace(dec, P=2, M=2)
    sub = netgraph.make_subspace(kron_sub.U, M=2, agent_basis=None)
    c = build_combiner(sub, topo)
    report = verify_combiner(c, sub, topo, tol=1e-8)
    assert report.all_pass, report.lines()


def test_general_path_matches_reduced_path():
    # the minimizer inherits the Kronecker structure, so both paths agree
    topo = netgraph.generate_geometric_graph(8, seed=6, kernel_width=0.4, radius=0.9)
    dec = netgraph.spectral(topo)
    kron_sub = netgraph.build_subspace(dec, P=2, M=2)
    general_sub = netgraph.make_subspace(kron_sub.U, M=2, agent_basis=None)
    c_fast = build_combiner(kron_sub, topo)
    c_general = build_combiner(general_sub, topo)
    assert np.abs(c_fast.A - c_general.A).max() <= 1e-6


def test_idempotent_limit_property(small_instance):
    topo, _, sub, _, c = small_instance
    Apow = c.A.copy()
    for _ in range(6):
        Apow = Apow @ Apow
    lhs = np.linalg.norm(Apow - sub.projector)
    rhs = c.lambda_A**64 * np.linalg.norm(c.A - sub.projector) * 1.000001
    assert lhs <= rhs


def test_consensus_combiner_is_doubly_stochastic():
    topo = netgraph.generate_geometric_graph(12, seed=8, kernel_width=0.3, radius=0.6)
    sub = _consensus_subspace(12, 1)
    c = build_combiner(sub, topo)
    assert np.abs(c.A.sum(axis=0) - 1.0).max() <= 1e-10
    assert np.abs(c.A.sum(axis=1) - 1.0).max() <= 1e-10


def test_json_round_trip(small_instance):
    topo, _, sub, _, c = small_instance
    doc = json.loads(json.dumps(combiner_to_json(c)))
    c2 = combiner_from_json(doc, sub, topo)
    assert np.abs(c2.A - c.A).max() <= 1e-12
    assert np.isclose(c2.lambda_A, c.lambda_A, atol=1e-12)


def test_json_import_symmetrizes_and_validates(small_instance):
    topo, _, sub, _, c = small_instance
    doc = combiner_to_json(c)
    # perturb one off-diagonal block asymmetrically; import must symmetrize
    for entry in doc["blocks"]:
        k, l, vals = entry
        if k != l:
            vals[0] += 2e-13
            break
    c2 = combiner_from_json(doc, sub, topo)
    assert np.abs(c2.A - c2.A.T).max() == 0.0


def test_json_import_rejects_off_pattern_blocks(small_instance):
    topo, _, sub, _, c = small_instance
    doc = combiner_to_json(c)
    forbidden = None
    K = topo.K
    for k in range(K):
        for l in range(K):
            if not topo.block_pattern[k, l]:
                forbidden = [k, l, np.zeros(sub.M * sub.M).tolist()]
                break
        if forbidden:
            break
    assert forbidden is not None
    doc["blocks"].append(forbidden)
    with pytest.raises(InfeasibleConstraints):
        combiner_from_json(doc, sub, topo)
