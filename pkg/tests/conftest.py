import numpy as np
import pytest

from subdiff import netgraph, problem as problem_mod
from subdiff.combiner import build_combiner


@pytest.fixture(scope="session")
def small_instance():
    """A K=10, M=2, P=2 instance shared by the faster tests."""
    topo = netgraph.generate_geometric_graph(10, seed=3, kernel_width=0.3, radius=0.7)
    dec = netgraph.spectral(topo)
    sub = netgraph.build_subspace(dec, P=2, M=2)
    w_o = netgraph.smooth_targets(dec, M=2, tau=0.5, seed=11)
    rng = np.random.default_rng(5)
    prob = problem_mod.QuadraticNetworkProblem(
        K=10,
        M=2,
        w_o=w_o,
        sigma_h2=rng.uniform(0.5, 2.0, 10),
        sigma_v2=rng.uniform(0.2, 0.8, 10),
        subspace=sub,
    )
    comb = build_combiner(sub, topo)
    return topo, dec, sub, prob, comb
