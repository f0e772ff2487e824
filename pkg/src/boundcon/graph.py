"""Network topology with a boundary/internal node partition.

Nodes are numbered ``1..K+M``; the ``K`` boundary (stubborn) nodes come
first, followed by the ``M`` internal nodes. This keeps every matrix built
on top of a :class:`Graph` in block form ``[boundary | internal]`` without
any permutation.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GraphError(ValueError):
    """Invalid topology or graph file."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph, immutable after construction.

    ``edges`` holds ``(i, j)`` pairs with ``i < j`` using 1-based node ids.
    ``labels`` optionally records the external label of each node (index
    ``n - 1`` for node ``n``) when the graph was loaded from a file.
    """

    num_boundary: int
    num_internal: int
    edges: frozenset
    labels: tuple = ()
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        K, M = self.num_boundary, self.num_internal
        if K < 0:
            raise GraphError(f"num_boundary must be >= 0, got {K}")
        if M < 1:
            raise GraphError(f"num_internal must be >= 1, got {M}")
        n = K + M
        canon = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (1 <= i <= n and 1 <= j <= n):
                raise GraphError(f"edge ({i}, {j}) has endpoint outside 1..{n}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(canon))
        if self.labels and len(self.labels) != n:
            raise GraphError(f"expected {n} labels, got {len(self.labels)}")
        adj = [set() for _ in range(n + 1)]
        for i, j in canon:
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    @classmethod
    def from_edges(cls, num_boundary, num_internal, edges, labels=()):
        """Build a graph, rejecting duplicate edges (in either orientation)."""
        seen = set()
        for e in edges:
            i, j = (int(v) for v in e)
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        return cls(num_boundary, num_internal, frozenset(seen), tuple(labels))

    @property
    def num_nodes(self) -> int:
        return self.num_boundary + self.num_internal

    @property
    def boundary_nodes(self) -> range:
        return range(1, self.num_boundary + 1)

    @property
    def internal_nodes(self) -> range:
        return range(self.num_boundary + 1, self.num_nodes + 1)

    def is_boundary(self, n: int) -> bool:
        return 1 <= n <= self.num_boundary

    def degree(self, n: int) -> int:
        return len(neighbors(self, n))

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (0-based indices)."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.edges:
            a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
        return a

    def label_of(self, n: int) -> str:
        return self.labels[n - 1] if self.labels else str(n)


def neighbors(g: Graph, n: int) -> frozenset:
    """Return the set of nodes adjacent to ``n``."""
    if not 1 <= n <= g.num_nodes:
        raise GraphError(f"node {n} outside 1..{g.num_nodes}")
    return g._adj[n]


def _bfs(g: Graph, sources) -> set:
    seen = set(sources)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in g._adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_connected(g: Graph) -> bool:
    return len(_bfs(g, [1])) == g.num_nodes


def internal_nodes_reach_boundary(g: Graph) -> bool:
    """True iff every internal node has a path to some boundary node.

    This is the structural form of the absorbing-chain condition: boundary
    nodes are the absorbing states and every internal node is transient.
    """
    if g.num_boundary < 1:
        raise GraphError("absorbing condition needs at least one boundary node")
    reached = _bfs(g, g.boundary_nodes)
    return all(n in reached for n in g.internal_nodes)


def line_graph(n: int) -> Graph:
    """Path on ``n`` nodes with the two endpoints as boundary nodes.

    Path position ``k`` (0..n-1) maps to node id: position 0 -> 1,
    position n-1 -> 2, interior position k -> k + 2. Interior nodes are
    therefore listed in path order.
    """
    if n < 3:
        raise GraphError(f"line graph needs n >= 3 for an interior, got {n}")

    def node(k):
        if k == 0:
            return 1
        if k == n - 1:
            return 2
        return k + 2

    edges = [(node(k), node(k + 1)) for k in range(n - 1)]
    return Graph.from_edges(2, n - 2, edges)


def star_graph(num_leaves: int, center_boundary: bool = False) -> Graph:
    """Star with either a boundary center and internal leaves or the reverse."""
    if center_boundary:
        return Graph.from_edges(1, num_leaves, [(1, k) for k in range(2, num_leaves + 2)])
    center = num_leaves + 1
    return Graph.from_edges(num_leaves, 1, [(k, center) for k in range(1, num_leaves + 1)])


def complete_graph(num_boundary: int, num_internal: int) -> Graph:
    n = num_boundary + num_internal
    return Graph.from_edges(
        num_boundary, num_internal, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    )


def random_graph(num_boundary: int, num_internal: int, edge_prob: float, seed) -> Graph:
    """Erdos-Renyi graph patched to be connected.

    Components are chained together by one random edge each, so the result
    is connected and (when ``num_boundary >= 1``) satisfies the absorbing
    condition.
    """
    rng = np.random.default_rng(seed)
    n = num_boundary + num_internal
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < edge_prob
    edges = {(int(i) + 1, int(j) + 1) for i, j in zip(iu[keep], ju[keep])}
    g = Graph(num_boundary, num_internal, frozenset(edges))
    comps = components(g)
    for a, b in zip(comps[:-1], comps[1:]):
        u = int(rng.choice(sorted(a)))
        v = int(rng.choice(sorted(b)))
        edges.add((min(u, v), max(u, v)))
    return Graph(num_boundary, num_internal, frozenset(edges))


def components(g: Graph) -> list:
    """Connected components as a list of node sets, ordered by smallest member."""
    left = set(range(1, g.num_nodes + 1))
    out = []
    while left:
        comp = _bfs(g, [min(left)])
        out.append(comp)
        left -= comp
    return out


# -- file format ------------------------------------------------------------

def graph_from_dict(data: dict) -> Graph:
    """Parse ``{"boundary": [...], "internal": [...], "edges": [[a, b], ...]}``.

    Labels are strings; boundary labels receive ids 1..K in listed order,
    internal labels K+1..K+M.
    """
    if not isinstance(data, dict):
        raise GraphError("graph document must be a JSON object")
    unknown = set(data) - {"boundary", "internal", "edges"}
    if unknown:
        raise GraphError(f"unknown graph keys: {sorted(unknown)}")
    try:
        boundary = [str(v) for v in data["boundary"]]
        internal = [str(v) for v in data["internal"]]
        raw_edges = data["edges"]
    except KeyError as exc:
        raise GraphError(f"graph document missing key {exc}") from None
    labels = boundary + internal
    index = {}
    for k, lab in enumerate(labels, start=1):
        if lab in index:
            raise GraphError(f"duplicate label {lab!r}")
        index[lab] = k
    edges = []
    for e in raw_edges:
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise GraphError(f"edge must be a pair of labels, got {e!r}")
        a, b = str(e[0]), str(e[1])
        for lab in (a, b):
            if lab not in index:
                raise GraphError(f"edge endpoint {lab!r} is not a declared node")
        if a == b:
            raise GraphError(f"self-loop at {a!r}")
        edges.append((index[a], index[b]))
    return Graph.from_edges(len(boundary), len(internal), edges, labels)


def graph_to_dict(g: Graph) -> dict:
    lab = g.label_of
    return {
        "boundary": [lab(n) for n in g.boundary_nodes],
        "internal": [lab(n) for n in g.internal_nodes],
        "edges": [[lab(i), lab(j)] for i, j in sorted(g.edges)],
    }


def load_graph(path) -> Graph:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: not valid JSON ({exc})") from None
    return graph_from_dict(data)


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=1) + "\n")


def index_mapping(g: Graph) -> dict:
    """External label -> canonical node id."""
    return {g.label_of(n): n for n in range(1, g.num_nodes + 1)}
