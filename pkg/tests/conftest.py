import numpy as np
import pytest

from coalition_forge.graph import BenefitGraph
from coalition_forge.oracle import MauOracle
from coalition_forge.pareto import SearchConfig, ToleranceConfig
from coalition_forge.tasks import SyntheticConfig, generate_synthetic_network

# Six-node worked example. Edges into node 4 read as 2 -> 4 and 5 -> 4.
SIX_NODE_OCS = {1: {1, 2}, 2: {2, 3}, 3: {3, 1}, 4: {4, 2, 5}, 5: {5, 6}, 6: {6, 5}}


@pytest.fixture
def six_node_graph():
    return BenefitGraph.from_ocs_map(SIX_NODE_OCS)


@pytest.fixture
def six_node_oracle():
    """Utility 1 when the whole OCS is present, else 0."""
    def u(target, subset):
        return 1.0 if SIX_NODE_OCS[target] <= set(subset) else 0.0

    return MauOracle(SIX_NODE_OCS, u, ToleranceConfig(delta_u=1e-6, delta_u_rel=0.0))


@pytest.fixture(scope="session")
def small_network():
    return generate_synthetic_network(
        SyntheticConfig(n_clients=5, n_features=4, n_train=400, sigma=1.0, flip_set={3, 4}, seed=7)
    )


@pytest.fixture(scope="session")
def grid_cfg():
    return SearchConfig(grid_resolution=10, refine_steps=0)


def random_digraph(rng, n, density):
    edges = [(j, i) for i in range(n) for j in range(n) if i != j and rng.random() < density]
    return BenefitGraph.from_edges(range(n), edges)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
