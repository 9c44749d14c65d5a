"""Directed communication graphs and their incidence/Laplacian algebra.

Nodes are labelled ``1..N`` at the API boundary (config files, ``build_graph``)
and ``0..N-1`` in every array.  Edge ``(j, i)`` points from tail ``j`` to head
``i``; the incidence matrix carries ``+1`` at the head and ``-1`` at the tail,
so that ``(B @ v)[i]`` is the sum over incoming edges minus the sum over
outgoing edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "GraphError",
    "SelfLoop",
    "DuplicateEdge",
    "NotWeaklyConnected",
    "Graph",
    "GraphAlgebra",
    "build_graph",
    "graph_algebra",
    "random_experiment_graph",
    "incidence_matvec",
    "incidence_rmatvec",
    "laplacian_matvec",
]

ZERO_EIG_TOL = 1e-9


class GraphError(ValueError):
    """Base class for rejected communication graphs."""


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class NotWeaklyConnected(GraphError):
    pass


@dataclass(frozen=True)
class Graph:
    """A validated directed graph without self-loops or repeated edges."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    edge_index: dict[tuple[int, int], int] = field(repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def tails(self) -> np.ndarray:
        return np.array([j - 1 for j, _ in self.edges], dtype=np.int64)

    @cached_property
    def heads(self) -> np.ndarray:
        return np.array([i - 1 for _, i in self.edges], dtype=np.int64)

    def in_neighbors(self, i: int) -> list[int]:
        """1-based labels ``j`` with ``(j, i)`` an edge."""
        return [j for j, h in self.edges if h == i]

    def out_neighbors(self, i: int) -> list[int]:
        return [h for j, h in self.edges if j == i]

    def to_dict(self) -> dict:
        return {"num_nodes": self.num_nodes, "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True)
class GraphAlgebra:
    incidence: np.ndarray
    laplacian: np.ndarray
    degrees: np.ndarray
    sigma1: float
    eigenvalues: np.ndarray


def _components(num_nodes: int, edges) -> list[list[int]]:
    parent = list(range(num_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for j, i in edges:
        rj, ri = find(j - 1), find(i - 1)
        if rj != ri:
            parent[rj] = ri
    groups: dict[int, list[int]] = {}
    for v in range(num_nodes):
        groups.setdefault(find(v), []).append(v + 1)
    return sorted(groups.values())


def build_graph(num_nodes: int, edges) -> Graph:
    """Validate ``edges`` (1-based ``(tail, head)`` pairs) and build a Graph.

    Raises
    ------
    SelfLoop, DuplicateEdge, NotWeaklyConnected
        If the graph is not a simple, weakly connected digraph.
    ValueError
        If a label is outside ``1..num_nodes``.
    """
    num_nodes = int(num_nodes)
    if num_nodes < 1:
        raise ValueError(f"num_nodes must be positive, got {num_nodes}")
    clean: list[tuple[int, int]] = []
    index: dict[tuple[int, int], int] = {}
    for raw in edges:
        j, i = (int(v) for v in raw)
        if not (1 <= j <= num_nodes and 1 <= i <= num_nodes):
            raise ValueError(f"edge {(j, i)} has a node outside 1..{num_nodes}")
        if j == i:
            raise SelfLoop(f"self-loop at node {j}: edge {(j, i)}")
        if (j, i) in index:
            raise DuplicateEdge(f"edge {(j, i)} listed more than once")
        index[(j, i)] = len(clean)
        clean.append((j, i))
    comps = _components(num_nodes, clean)
    if len(comps) > 1:
        stray = comps[1] if 1 in comps[0] else comps[0]
        raise NotWeaklyConnected(
            f"graph has {len(comps)} weak components; nodes {stray} are cut off "
            f"from node 1"
        )
    return Graph(num_nodes, tuple(clean), index)


def graph_algebra(g: Graph) -> GraphAlgebra:
    """Dense incidence ``B``, Laplacian ``L = B B^T``, degrees and sigma_1."""
    N, E = g.num_nodes, g.num_edges
    B = np.zeros((N, E))
    B[g.heads, np.arange(E)] = 1.0
    B[g.tails, np.arange(E)] = -1.0
    L = B @ B.T
    degrees = np.bincount(np.concatenate([g.heads, g.tails]), minlength=N).astype(float)
    try:
        eig = np.linalg.eigvalsh(L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError(f"Laplacian eigensolver failed: {exc}") from exc
    positive = eig[eig > ZERO_EIG_TOL]
    sigma1 = float(positive[0]) if positive.size else 0.0
    return GraphAlgebra(B, L, degrees, sigma1, eig)


def random_experiment_graph(seed, num_nodes: int, num_extra_edges: int) -> Graph:
    """Directed cycle ``1 -> 2 -> ... -> N -> 1`` plus random extra chords.

    The chords are distinct, avoid self-loops and existing edges, and are
    drawn uniformly without replacement from the remaining ordered pairs.
    """
    N = int(num_nodes)
    if N < 2:
        raise ValueError("need at least two nodes")
    cycle = [(k, k % N + 1) for k in range(1, N + 1)]
    if N == 2:
        cycle = [(1, 2), (2, 1)]
    taken = set(cycle)
    candidates = [
        (j, i) for j in range(1, N + 1) for i in range(1, N + 1) if j != i and (j, i) not in taken
    ]
    if num_extra_edges > len(candidates):
        raise ValueError(
            f"cannot add {num_extra_edges} chords; only {len(candidates)} pairs are free"
        )
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(candidates), size=num_extra_edges, replace=False)
    extra = [candidates[k] for k in sorted(pick)]
    return build_graph(N, cycle + extra)


# matrix-free products; v has one row per edge, y one row per node


def incidence_matvec(g: Graph, v: np.ndarray) -> np.ndarray:
    """``B @ v`` without forming ``B``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros((g.num_nodes,) + v.shape[1:])
    np.add.at(out, g.heads, v)
    np.subtract.at(out, g.tails, v)
    return out


def incidence_rmatvec(g: Graph, y: np.ndarray) -> np.ndarray:
    """``B.T @ y``: per-edge difference ``y[head] - y[tail]``."""
    y = np.asarray(y, dtype=float)
    return y[g.heads] - y[g.tails]


def laplacian_matvec(g: Graph, y: np.ndarray) -> np.ndarray:
    return incidence_matvec(g, incidence_rmatvec(g, y))
