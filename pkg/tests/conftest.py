import numpy as np
import pytest

from attrinfer.graph import AttributedGraph, AttributeSchema, canonical_edges, split_labels
from attrinfer.numerics import make_rng
from attrinfer.training import TrainConfig, prepare

TOY_DIMS = dict(enc_hidden=6, latent=4, gcn_hidden=5, dec_hidden=7)


def make_toy_graph(seed=7):
    """12 users, 16 edges (ring plus four chords), attributes with 3 and 2 labels."""
    rng = make_rng(seed)
    n = 12
    pairs = [(i, (i + 1) % n) for i in range(n)] + [(0, 6), (2, 8), (3, 9), (4, 10)]
    assign = np.stack([rng.integers(1, 4, n), rng.integers(1, 3, n)], axis=1)
    assign[[1, 5], [0, 1]] = 0
    return AttributedGraph(n, canonical_edges(pairs), AttributeSchema.from_counts([3, 2]), assign)


@pytest.fixture
def toy_graph():
    return make_toy_graph()


@pytest.fixture
def toy_data(toy_graph):
    mask = split_labels(toy_graph, (0.8, 0.1, 0.1), make_rng(3))
    return prepare(toy_graph, mask)


@pytest.fixture
def toy_config():
    return TrainConfig(iterations=20, **TOY_DIMS)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
