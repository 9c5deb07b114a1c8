"""Shared builders for randomised network tests."""

from pathlib import Path

from condnet.graph import CircuitGraph, load_graph

DATA = Path(__file__).parent / "data"


def reference_network() -> CircuitGraph:
    """The 8-vertex, 13-edge worked example network."""
    return load_graph(DATA / "reference_network_8x13.txt")


def random_connected_graph(rng, n_min=4, n_max=30, extra_edges=None) -> CircuitGraph:
    """Random connected graph with terminals as the two last vertex ids.

    A random spanning tree guarantees connectivity; extra edges are thrown
    on top.  No self-loops and no direct terminal-terminal edge.
    """
    n = int(rng.integers(n_min, n_max + 1))
    w1, w2 = n - 2, n - 1
    edges = []
    # spanning tree in id order; only the pair (w2, w1) needs rerouting
    for v in range(1, n):
        u = int(rng.integers(0, v))
        if v == w2 and u == w1:
            u = w1 - 1
        edges.append((v, u, float(rng.uniform(0.1, 2.0))))
    if extra_edges is None:
        extra_edges = int(rng.integers(0, 2 * n))
    for _ in range(extra_edges):
        a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
        if a == b or {a, b} == {w1, w2}:
            continue
        edges.append((a, b, float(rng.uniform(0.1, 2.0))))
    return CircuitGraph.from_edges(n, w1, w2, edges).merged()


def random_graph_with_floating(rng) -> CircuitGraph:
    """Connected core between the terminals plus detached clusters."""
    core = random_connected_graph(rng)
    n_extra = int(rng.integers(1, 6))
    base = core.n_vertices
    triples = list(core.edges())
    # detached chain among the extra vertices only
    for k in range(n_extra - 1):
        triples.append((base + k, base + k + 1, float(rng.uniform(0.1, 2.0))))
    return CircuitGraph.from_edges(base + n_extra, core.w1, core.w2, triples)


def disconnected_terminal_graph(rng) -> CircuitGraph:
    """Two internally connected clusters, one per terminal, no bridge."""
    na = int(rng.integers(2, 10))
    nb = int(rng.integers(2, 10))
    n = na + nb + 2
    w1, w2 = n - 2, n - 1
    edges = []
    # cluster A: vertices 0..na-1 plus w1
    a_nodes = list(range(na)) + [w1]
    for idx in range(1, len(a_nodes)):
        j = int(rng.integers(0, idx))
        edges.append((a_nodes[idx], a_nodes[j], float(rng.uniform(0.1, 2.0))))
    # cluster B: vertices na..na+nb-1 plus w2
    b_nodes = list(range(na, na + nb)) + [w2]
    for idx in range(1, len(b_nodes)):
        j = int(rng.integers(0, idx))
        edges.append((b_nodes[idx], b_nodes[j], float(rng.uniform(0.1, 2.0))))
    return CircuitGraph.from_edges(n, w1, w2, edges).merged()


def random_series_parallel(rng, max_depth=6):
    """Series-parallel network with its closed-form terminal conductance.

    Returns (graph, value).  The closed form reduces leaves by the series
    rule 1/(1/g1 + 1/g2) and the parallel rule g1 + g2.
    """
    edges = []
    counter = [3]  # vertex ids 0,1 terminals..., see below

    def alloc():
        counter[0] += 1
        return counter[0] - 1

    def build(a, b, depth):
        if depth <= 0 or rng.random() < 0.35:
            c = float(rng.uniform(0.5, 2.0))
            edges.append((a, b, c))
            return c
        if rng.random() < 0.5:
            v = alloc()
            g1 = build(a, v, depth - 1)
            g2 = build(v, b, depth - 1)
            return 1.0 / (1.0 / g1 + 1.0 / g2)
        g1 = build(a, b, depth - 1)
        g2 = build(a, b, depth - 1)
        return g1 + g2

    # top level is a series pair so the terminals are never adjacent
    mid = 2
    g1 = build(0, mid, max_depth - 1)
    g2 = build(mid, 1, max_depth - 1)
    value = 1.0 / (1.0 / g1 + 1.0 / g2)
    n = counter[0]
    graph = CircuitGraph.from_edges(n, 0, 1, edges)
    return graph, value
