import networkx as nx
import numpy as np
import pytest

from liftwave.graphs import build_graph


@pytest.fixture(scope="session")
def karate():
    """Zachary karate club graph (34 nodes, 78 edges) from the published list."""
    kc = nx.karate_club_graph()
    return build_graph(list(kc.edges()), kc.number_of_nodes())


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_er_graph(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return build_graph(list(zip(iu[keep].tolist(), ju[keep].tolist())), n)
