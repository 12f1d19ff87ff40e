"""Shared helpers for the test suite."""

import numpy as np
import pytest

from gossipsim import Graph, TopologyParams, build_topology

# the five standard 50-node evaluation topologies
FIFTY_NODE_SPECS = [
    ("chain", "chain", TopologyParams(), 1200),
    ("star", "star", TopologyParams(), 100),
    ("circular", "circular", TopologyParams(), 600),
    ("circular_directed", "circular", TopologyParams(directed=True), 1200),
    ("random_geometric", "random_geometric", TopologyParams(radius=0.3), 300),
]


def fifty_node_graph(name: str, seed: int = 1) -> Graph:
    for label, kind, params, _ in FIFTY_NODE_SPECS:
        if label == name:
            return build_topology(kind, 50, params, seed=seed)
    raise KeyError(name)


def small_graph_family(max_n: int = 10):
    """Assorted small connected undirected graphs for property tests."""
    out = []
    for n in range(2, max_n + 1):
        out.append(("chain", build_topology("chain", n)))
        if n >= 3:
            out.append(("circular", build_topology("circular", n)))
        out.append(("star", build_topology("star", n)))
        out.append(("complete", build_topology("complete", n)))
    for seed in (0, 1, 2):
        out.append(("random_geometric",
                    build_topology("random_geometric", 8,
                                   TopologyParams(radius=0.55), seed=seed)))
    return out


def random_connected_graph(rng: np.random.Generator) -> Graph:
    kind = ["chain", "star", "circular", "complete", "random_geometric"][int(rng.integers(5))]
    n = int(rng.integers(2, 21))
    if kind == "circular" and n < 3:
        n = 3
    if kind == "random_geometric":
        return build_topology(kind, max(n, 4), TopologyParams(radius=0.6),
                              seed=int(rng.integers(2 ** 31)))
    return build_topology(kind, n)
