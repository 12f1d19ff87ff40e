"""Sensor network topologies, anchor-rooted layers, and averaging matrices.

A graph here is a node set 0..n-1 with boolean adjacency and one
distinguished vertex, ``anchor_id``, where the resource-rich beacon node
sits. Control traffic (beacons, wake-ups) travels over the undirected
radio graph; the direction of an arc only restricts which states a node
can overhear for averaging. Layers are breadth-first hop counts from the
anchor vertex, with the anchor's own vertex folded into layer 1 so that
every node carries a layer in 1..L and the layer sizes sum to n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TopologyError, UnconnectableTopologyError
from .rules import RuleVariant, UpdateRule

TOPOLOGY_KINDS = ("chain", "star", "circular", "complete", "random_geometric")


@dataclass(frozen=True)
class TopologyParams:
    """Knobs shared by the topology builders.

    Only the random geometric kind reads side/radius/max_attempts, and
    only the circular kind honors directed. Setting erdos_p swaps the
    geometric sampler for an Erdos-Renyi one with that edge probability,
    under the same connectivity retry loop.
    """

    anchor: int = 0
    directed: bool = False
    side: float = 1.0
    radius: float = 0.3
    erdos_p: float | None = None
    max_attempts: int = 100


@dataclass(frozen=True)
class Graph:
    node_count: int
    anchor_id: int
    adjacency: np.ndarray  # (n, n) bool, adjacency[i, j] means arc i -> j
    directed: bool = False

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=bool)
        object.__setattr__(self, "adjacency", adj)
        n = self.node_count
        if n < 2:
            raise TopologyError(f"need at least 2 nodes, got {n}")
        if adj.shape != (n, n):
            raise TopologyError(f"adjacency shape {adj.shape} does not match node_count {n}")
        if adj.diagonal().any():
            raise TopologyError("self-loops are not allowed")
        if not self.directed and not np.array_equal(adj, adj.T):
            raise TopologyError("undirected graph has asymmetric adjacency")
        if not (0 <= self.anchor_id < n):
            raise TopologyError(f"anchor_id {self.anchor_id} out of range for {n} nodes")
        if not _connected_from(self.control_adjacency(), self.anchor_id):
            raise TopologyError("graph is not connected from the anchor vertex")

    def control_adjacency(self) -> np.ndarray:
        """Undirected radio view used for beacons, wake-ups, and layers."""
        return self.adjacency | self.adjacency.T


def _connected_from(und: np.ndarray, start: int) -> bool:
    n = und.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        reach = und[frontier].any(axis=0) & ~seen
        frontier = list(np.flatnonzero(reach))
        seen |= reach
    return bool(seen.all())


def build_topology(kind: str, n: int, params: TopologyParams | None = None,
                   seed: int | None = None) -> Graph:
    """Construct one of the named test topologies.

    Random kinds resample up to params.max_attempts times until the
    result is connected from the anchor, then fail with
    UnconnectableTopologyError. Everything is deterministic for a fixed
    (kind, n, params, seed).
    """
    if params is None:
        params = TopologyParams()
    if kind not in TOPOLOGY_KINDS:
        raise ConfigError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    if n < 2:
        raise ConfigError(f"need at least 2 nodes, got {n}")
    if not (0 <= params.anchor < n):
        raise ConfigError(f"anchor {params.anchor} out of range for {n} nodes")
    if params.directed and kind != "circular":
        raise ConfigError("directed variant is only defined for the circular topology")

    adj = np.zeros((n, n), dtype=bool)
    if kind == "chain":
        idx = np.arange(n - 1)
        adj[idx, idx + 1] = True
        adj |= adj.T
    elif kind == "star":
        hub = params.anchor
        adj[hub, :] = True
        adj[:, hub] = True
        adj[hub, hub] = False
    elif kind == "circular":
        idx = np.arange(n)
        adj[idx, (idx + 1) % n] = True
        if not params.directed:
            adj |= adj.T
    elif kind == "complete":
        adj[:] = True
        np.fill_diagonal(adj, False)
    else:  # random_geometric, optionally Erdos-Renyi
        return _build_random(n, params, seed)
    return Graph(node_count=n, anchor_id=params.anchor, adjacency=adj,
                 directed=params.directed and kind == "circular")


def _build_random(n: int, params: TopologyParams, seed: int | None) -> Graph:
    if params.erdos_p is None and not (0.0 < params.radius and 0.0 < params.side):
        raise ConfigError("random_geometric needs positive side and radius")
    if params.erdos_p is not None and not (0.0 < params.erdos_p <= 1.0):
        raise ConfigError(f"erdos_p must lie in (0, 1], got {params.erdos_p}")
    rng = np.random.default_rng(seed)
    for _ in range(params.max_attempts):
        if params.erdos_p is not None:
            upper = np.triu(rng.random((n, n)) < params.erdos_p, k=1)
            adj = upper | upper.T
        else:
            pts = rng.uniform(0.0, params.side, size=(n, 2))
            d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
            adj = d2 <= params.radius ** 2
            np.fill_diagonal(adj, False)
        if _connected_from(adj, params.anchor):
            return Graph(node_count=n, anchor_id=params.anchor, adjacency=adj)
    raise UnconnectableTopologyError(
        f"no connected sample in {params.max_attempts} attempts "
        f"(n={n}, radius={params.radius}, side={params.side}, erdos_p={params.erdos_p})")


def neighborhood(g: Graph, i: int) -> tuple[int, ...]:
    """Out-neighborhood of node i: the nodes i transmits to."""
    _check_node(g, i)
    return tuple(np.flatnonzero(g.adjacency[i]))


def in_neighborhood(g: Graph, i: int) -> tuple[int, ...]:
    """In-neighborhood of node i: the nodes whose transmissions i hears.

    This is the averaging set used by the update rules; it equals the
    out-neighborhood for undirected graphs.
    """
    _check_node(g, i)
    return tuple(np.flatnonzero(g.adjacency[:, i]))


def control_neighborhood(g: Graph, i: int) -> tuple[int, ...]:
    """Neighbors over the undirected radio view (control traffic)."""
    _check_node(g, i)
    return tuple(np.flatnonzero(g.control_adjacency()[i]))


def _check_node(g: Graph, i: int) -> None:
    if not (0 <= i < g.node_count):
        raise ValueError(f"node id {i} out of range for {g.node_count} nodes")


@dataclass(frozen=True)
class LayerAssignment:
    """Hop layers rooted at the anchor vertex.

    layer_of[i] is in 1..layer_count for every node; the anchor vertex is
    folded into layer 1 together with its radio neighbors.
    """

    layer_of: np.ndarray  # (n,) int64
    layer_count: int
    layer_sizes: np.ndarray  # (layer_count,) int64

    def nodes_in_layer(self, m: int) -> tuple[int, ...]:
        return tuple(np.flatnonzero(self.layer_of == m))


def assign_layers(g: Graph, anchor: int | None = None) -> LayerAssignment:
    """Breadth-first layers over the radio graph, rooted at the anchor."""
    root = g.anchor_id if anchor is None else anchor
    _check_node(g, root)
    und = g.control_adjacency()
    n = g.node_count
    hop = np.full(n, -1, dtype=np.int64)
    hop[root] = 0
    frontier = [root]
    h = 0
    while frontier:
        h += 1
        reach = und[frontier].any(axis=0) & (hop < 0)
        frontier = list(np.flatnonzero(reach))
        hop[frontier] = h
    if (hop < 0).any():
        raise TopologyError("layer assignment reached a disconnected node")
    layer_of = np.maximum(hop, 1)
    count = int(layer_of.max())
    sizes = np.bincount(layer_of, minlength=count + 1)[1:]
    return LayerAssignment(layer_of=layer_of, layer_count=count, layer_sizes=sizes)


def consensus_weight_matrix(g: Graph, rule: UpdateRule | None = None) -> np.ndarray:
    """Row-stochastic averaging matrix implied by the update rule.

    Rows always sum to 1: for the self-additive variant this is the plain
    neighbor-average matrix (the added self term lives in the dynamics,
    not here), and for the pairwise baseline it is the expectation of the
    two-node exchange over a uniform initiator and a uniform neighbor.
    """
    if rule is None:
        rule = UpdateRule()
    n = g.node_count
    w = np.zeros((n, n), dtype=float)
    if rule.variant is RuleVariant.PAIRWISE_BASELINE:
        if g.directed:
            raise ConfigError("pairwise baseline is defined for undirected graphs only")
        w = np.eye(n)
        a = rule.alpha
        for i in range(n):
            nbrs = np.flatnonzero(g.adjacency[i])
            pick = 1.0 / (n * len(nbrs))
            for j in nbrs:
                w[i, i] -= pick * a
                w[i, j] += pick * a
                w[j, j] -= pick * a
                w[j, i] += pick * a
        return w
    for i in range(n):
        nbrs = np.flatnonzero(g.adjacency[:, i])
        if len(nbrs) == 0:
            raise TopologyError(f"node {i} has no in-neighbors to average over")
        if rule.variant is RuleVariant.NEIGHBORHOOD_SET:
            w[i, nbrs] = 1.0 / (len(nbrs) + 1)
            w[i, i] = 1.0 / (len(nbrs) + 1)
        else:  # PURE_NEIGHBOR and SELF_ADDITIVE share the base matrix
            w[i, nbrs] = 1.0 / len(nbrs)
    return w


def to_edge_list(g: Graph) -> str:
    """Serialize to the plain edge-list text format.

    First line is "n anchor_id directed_flag"; each following line is one
    "i j" arc (undirected edges written once, with i < j).
    """
    lines = [f"{g.node_count} {g.anchor_id} {int(g.directed)}"]
    if g.directed:
        for i, j in zip(*np.nonzero(g.adjacency)):
            lines.append(f"{i} {j}")
    else:
        for i, j in zip(*np.nonzero(np.triu(g.adjacency))):
            lines.append(f"{i} {j}")
    return "\n".join(lines) + "\n"


def from_edge_list(text: str) -> Graph:
    """Parse the edge-list format written by to_edge_list."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 3:
        raise TopologyError("edge list must start with 'n anchor_id directed_flag'")
    try:
        n, anchor, dflag = (int(tok) for tok in rows[0])
    except ValueError:
        raise TopologyError(f"bad edge-list header {' '.join(rows[0])!r}")
    if dflag not in (0, 1):
        raise TopologyError(f"directed flag must be 0 or 1, got {dflag}")
    adj = np.zeros((n, n), dtype=bool)
    for row in rows[1:]:
        if len(row) != 2:
            raise TopologyError(f"bad edge line {' '.join(row)!r}")
        i, j = int(row[0]), int(row[1])
        if not (0 <= i < n and 0 <= j < n):
            raise TopologyError(f"edge ({i}, {j}) out of range for {n} nodes")
        adj[i, j] = True
        if not dflag:
            adj[j, i] = True
    return Graph(node_count=n, anchor_id=anchor, adjacency=adj, directed=bool(dflag))


def degrees(g: Graph, mode: str = "in") -> np.ndarray:
    """Node degrees; mode is "in", "out", or "control"."""
    if mode == "in":
        return g.adjacency.sum(axis=0)
    if mode == "out":
        return g.adjacency.sum(axis=1)
    if mode == "control":
        return g.control_adjacency().sum(axis=1)
    raise ValueError(f"unknown degree mode {mode!r}")
