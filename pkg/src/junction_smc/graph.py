"""Labeled undirected graphs and decomposability.

Vertices are positive integers (1-based, matching the ``y_1..y_p`` labelling
used throughout the package).  A :class:`Graph` is immutable; vertex sets are
plain ``frozenset`` objects so that equality and hashing are structural.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator

VertexSet = frozenset


class NotDecomposableError(ValueError):
    """Raised when an operation needs a decomposable (chordal) graph."""


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on an explicit vertex set."""

    vertices: frozenset
    edges: frozenset

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if i > j:
                raise ValueError(f"edge ({i}, {j}) is not normalised as i < j")
            if i not in self.vertices or j not in self.vertices:
                raise ValueError(f"edge ({i}, {j}) has an endpoint outside the vertex set")

    @classmethod
    def from_edges(cls, vertices: Iterable[int] | int, edges: Iterable[tuple[int, int]] = ()) -> "Graph":
        """Build a graph; an integer ``vertices`` means ``1..vertices``."""
        if isinstance(vertices, int):
            vertices = range(1, vertices + 1)
        return cls(frozenset(vertices), frozenset(_pair(int(i), int(j)) for i, j in edges))

    @classmethod
    def empty(cls, p: int) -> "Graph":
        return cls.from_edges(p)

    @classmethod
    def complete(cls, p: int) -> "Graph":
        return cls.from_edges(p, itertools.combinations(range(1, p + 1), 2))

    @property
    def order(self) -> int:
        return len(self.vertices)

    def adjacency(self) -> dict[int, set[int]]:
        adj = {v: set() for v in self.vertices}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def has_edge(self, i: int, j: int) -> bool:
        return _pair(i, j) in self.edges

    def sorted_vertices(self) -> list[int]:
        return sorted(self.vertices)

    def adjacency_matrix(self):
        """0/1 matrix with rows/columns in sorted vertex order."""
        import numpy as np

        order = self.sorted_vertices()
        pos = {v: k for k, v in enumerate(order)}
        mat = np.zeros((len(order), len(order)), dtype=int)
        for i, j in self.edges:
            mat[pos[i], pos[j]] = mat[pos[j], pos[i]] = 1
        return mat

    def __repr__(self) -> str:
        return f"Graph(vertices={self.sorted_vertices()}, edges={sorted(self.edges)})"


def induced_subgraph(g: Graph, s: Iterable[int]) -> Graph:
    s = frozenset(s)
    unknown = s - g.vertices
    if unknown:
        raise ValueError(f"unknown vertices {sorted(unknown)}")
    return Graph(s, frozenset(e for e in g.edges if e[0] in s and e[1] in s))


def maximum_cardinality_search(adj: dict[int, set[int]]) -> list[int]:
    """Return an MCS visiting order (ties broken by smallest label)."""
    weight = {v: 0 for v in adj}
    order = []
    remaining = set(adj)
    while remaining:
        v = min(remaining, key=lambda u: (-weight[u], u))
        order.append(v)
        remaining.discard(v)
        for u in adj[v]:
            if u in remaining:
                weight[u] += 1
    return order


def _is_perfect_elimination(adj: dict[int, set[int]], peo: list[int]) -> bool:
    # Tarjan-Yannakakis zero fill-in check.
    pos = {v: k for k, v in enumerate(peo)}
    for v in peo:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        if not later:
            continue
        parent = min(later, key=pos.__getitem__)
        if any(u != parent and u not in adj[parent] for u in later):
            return False
    return True


def is_decomposable(g: Graph) -> bool:
    adj = g.adjacency()
    peo = maximum_cardinality_search(adj)[::-1]
    return _is_perfect_elimination(adj, peo)


def cliques(g: Graph) -> set[frozenset]:
    """Maximal cliques of a decomposable graph via an MCS elimination order.

    Raises
    ------
    NotDecomposableError
        If ``g`` is not chordal.
    """
    adj = g.adjacency()
    if not adj:
        return set()
    peo = maximum_cardinality_search(adj)[::-1]
    if not _is_perfect_elimination(adj, peo):
        raise NotDecomposableError("graph is not decomposable")
    pos = {v: k for k, v in enumerate(peo)}
    candidates = [frozenset([v, *(u for u in adj[v] if pos[u] > pos[v])]) for v in peo]
    return {c for c in candidates if not any(c < d for d in candidates)}


def all_graphs(p: int) -> Iterator[Graph]:
    pairs = list(itertools.combinations(range(1, p + 1), 2))
    vertices = frozenset(range(1, p + 1))
    for mask in range(1 << len(pairs)):
        yield Graph(vertices, frozenset(e for k, e in enumerate(pairs) if mask >> k & 1))


def _chordal_bits(adj: list[int], n: int) -> bool:
    # MCS + fill-in check on bitmask adjacency over vertices 0..n-1.
    weight = [0] * n
    numbered = 0
    order = []
    for _ in range(n):
        best, bw = -1, -1
        for v in range(n):
            if not numbered >> v & 1 and weight[v] > bw:
                best, bw = v, weight[v]
        order.append(best)
        numbered |= 1 << best
        nb = adj[best] & ~numbered
        while nb:
            low = nb & -nb
            weight[low.bit_length() - 1] += 1
            nb ^= low
    # order reversed is a PEO; "earlier in order" == later in elimination
    seen = 0
    for v in order:
        earlier = adj[v] & seen
        if earlier:
            # parent: most recently numbered earlier neighbour
            for u in reversed(order[: order.index(v)]):
                if earlier >> u & 1:
                    parent = u
                    break
            rest = earlier & ~(1 << parent)
            if rest & ~adj[parent]:
                return False
        seen |= 1 << v
    return True


MAX_ENUMERATION_ORDER = 7


def enumerate_decomposable(p: int) -> list[Graph]:
    """All decomposable graphs on vertices ``1..p``, each exactly once.

    Graphs on ``p`` vertices are grown from the decomposable graphs on
    ``p - 1`` vertices (an induced subgraph of a chordal graph is chordal), so
    every candidate neighbourhood of the last vertex is tested once.
    """
    if p > MAX_ENUMERATION_ORDER:
        raise ValueError(f"exhaustive enumeration is limited to p <= {MAX_ENUMERATION_ORDER}")
    if p < 0:
        raise ValueError("p must be non-negative")
    layer: list[list[int]] = [[]]
    for n in range(1, p + 1):
        new_layer = []
        v = n - 1
        for adj in layer:
            for nbrs in range(1 << v):
                cand = [a | ((nbrs >> u & 1) << v) for u, a in enumerate(adj)] + [nbrs]
                if _chordal_bits(cand, n):
                    new_layer.append(cand)
        layer = new_layer
    vertices = frozenset(range(1, p + 1))
    out = []
    for adj in layer:
        edges = frozenset((u + 1, w + 1) for u in range(p) for w in range(u + 1, p) if adj[u] >> w & 1)
        out.append(Graph(vertices, edges))
    return out
