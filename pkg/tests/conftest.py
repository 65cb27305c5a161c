import numpy as np
import pytest

from chainrisk.graph import SmeGraph


def random_graph(rng, n, edge_prob, num_features=3):
    """Erdos-Renyi style undirected test graph with random features."""
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < edge_prob:
                edges.append((u, v))
    X = rng.normal(size=(n, num_features))
    return SmeGraph.from_edge_list(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), X)


def dense_from_csr(num_nodes, indptr, indices, values=None):
    """Independent dense reconstruction of a CSR matrix, plain loops."""
    out = np.zeros((num_nodes, num_nodes))
    for u in range(num_nodes):
        for j in range(indptr[u], indptr[u + 1]):
            out[u, indices[j]] = 1.0 if values is None else values[j]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
