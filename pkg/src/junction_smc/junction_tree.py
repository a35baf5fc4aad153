"""Junction trees: representation, validation, counting and randomisation.

A :class:`JunctionTree` is stored as an adjacency mapping from node (a
``frozenset`` of vertices) to the ``frozenset`` of neighbouring nodes.  Nodes
of a junction tree are cliques and therefore distinct, so the mapping is a
faithful, order-free representation; two trees compare equal exactly when they
have the same nodes and the same links.

The number of junction trees of a decomposable graph factorises over its
distinct separators::

    mu(G) = prod_S nu(S),    nu(S) = n_S ** (q_S - 2) * prod_i r_i

where the forest ``F_S`` obtained by cutting the links carrying ``S`` inside
the subtree of nodes containing ``S`` has ``q_S`` components of sizes ``r_i``
and ``n_S`` nodes in total.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .graph import Graph, NotDecomposableError, cliques


def node_key(node: frozenset) -> tuple:
    """Canonical sort key for nodes and separators."""
    return (len(node), tuple(sorted(node)))


class JunctionTree:
    """Immutable tree whose nodes are vertex sets."""

    __slots__ = ("_adj", "_hash")

    def __init__(self, adjacency: Mapping[frozenset, Iterable[frozenset]]):
        self._adj = {frozenset(n): frozenset(nb) for n, nb in adjacency.items()}
        self._hash = None

    @classmethod
    def from_links(cls, nodes: Iterable[Iterable[int]], links: Iterable[tuple[int, int]] = ()) -> "JunctionTree":
        """Build from a node list and 0-based index links."""
        nodes = [frozenset(n) for n in nodes]
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate nodes")
        adj = {n: set() for n in nodes}
        for a, b in links:
            if a == b:
                raise ValueError(f"self-link on node index {a}")
            adj[nodes[a]].add(nodes[b])
            adj[nodes[b]].add(nodes[a])
        return cls(adj)

    @classmethod
    def trivial(cls, vertex: int) -> "JunctionTree":
        return cls({frozenset([vertex]): ()})

    # -- structure -------------------------------------------------------
    @property
    def adjacency(self) -> dict[frozenset, frozenset]:
        return self._adj

    @property
    def nodes(self) -> list[frozenset]:
        return sorted(self._adj, key=node_key)

    @property
    def links(self) -> list[tuple[int, int]]:
        order = self.nodes
        pos = {n: k for k, n in enumerate(order)}
        out = set()
        for a, nbrs in self._adj.items():
            for b in nbrs:
                i, j = pos[a], pos[b]
                out.add((min(i, j), max(i, j)))
        return sorted(out)

    def link_pairs(self) -> list[tuple[frozenset, frozenset]]:
        seen = set()
        out = []
        for a, nbrs in self._adj.items():
            for b in nbrs:
                if (b, a) not in seen:
                    seen.add((a, b))
                    out.append((a, b))
        return out

    def neighbors(self, node: frozenset) -> frozenset:
        return self._adj[node]

    def __contains__(self, node) -> bool:
        return node in self._adj

    def __len__(self) -> int:
        return len(self._adj)

    @property
    def vertices(self) -> frozenset:
        return frozenset().union(*self._adj) if self._adj else frozenset()

    def separators(self) -> list[frozenset]:
        """Separator of every link (with multiplicity)."""
        return [a & b for a, b in self.link_pairs()]

    def distinct_separators(self) -> set[frozenset]:
        return set(self.separators())

    # -- identity --------------------------------------------------------
    def __eq__(self, other) -> bool:
        return isinstance(other, JunctionTree) and self._adj == other._adj

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._adj.items()))
        return self._hash

    def __repr__(self) -> str:
        nodes = [sorted(n) for n in self.nodes]
        return f"JunctionTree(nodes={nodes}, links={self.links})"


# ---------------------------------------------------------------------------
# validation


def _tree_structure_problem(t: JunctionTree) -> str | None:
    adj = t.adjacency
    if not adj:
        return "tree has no nodes"
    for a, nbrs in adj.items():
        for b in nbrs:
            if b not in adj:
                return f"link to unknown node {sorted(b)}"
            if a not in adj[b]:
                return f"asymmetric link {sorted(a)} - {sorted(b)}"
            if a == b:
                return f"self-link on {sorted(a)}"
    n_links = sum(len(nb) for nb in adj.values()) // 2
    if n_links != len(adj) - 1:
        return f"{len(adj)} nodes but {n_links} links; not a tree"
    start = next(iter(adj))
    seen = {start}
    queue = deque([start])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != len(adj):
        return "links do not connect all nodes"
    return None


def tree_path(t: JunctionTree, a: frozenset, b: frozenset) -> list[frozenset]:
    """Unique node path from ``a`` to ``b``."""
    parent = {a: None}
    queue = deque([a])
    while queue:
        x = queue.popleft()
        if x == b:
            break
        for nb in t.adjacency[x]:
            if nb not in parent:
                parent[nb] = x
                queue.append(nb)
    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])
    return path[::-1]


def diagnose(t: JunctionTree) -> str | None:
    """Return ``None`` for a valid junction tree, else a human-readable reason.

    For a broken junction property the message carries a witness path: two
    nodes sharing a vertex and an intermediate node that lacks it.
    """
    problem = _tree_structure_problem(t)
    if problem:
        return problem
    nodes = t.nodes
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            if a <= b or b <= a:
                return f"nested nodes {sorted(a)} and {sorted(b)}"
    for x in sorted(t.vertices):
        holders = [n for n in nodes if x in n]
        sub = set(holders)
        seen = {holders[0]}
        queue = deque([holders[0]])
        while queue:
            for nb in t.adjacency[queue.popleft()]:
                if nb in sub and nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        if len(seen) != len(holders):
            b = next(h for h in holders if h not in seen)
            path = tree_path(t, holders[0], b)
            witness = " - ".join(str(sorted(n)) for n in path)
            return f"junction property fails for vertex {x} along path {witness}"
    return None


def validate(t: JunctionTree) -> bool:
    return diagnose(t) is None


def underlying_graph(t: JunctionTree, check: bool = True) -> Graph:
    if check and not validate(t):
        raise ValueError(f"invalid junction tree: {diagnose(t)}")
    edges = set()
    for node in t.adjacency:
        s = sorted(node)
        for k, i in enumerate(s):
            for j in s[k + 1 :]:
                edges.add((i, j))
    return Graph(t.vertices, frozenset(edges))


def junction_tree_of(g: Graph) -> JunctionTree:
    """A junction tree of ``g``: maximum-weight spanning tree of the clique graph."""
    cl = sorted(cliques(g), key=node_key)
    if not cl:
        raise NotDecomposableError("graph has no vertices")
    weighted = sorted(
        ((len(a & b), i, j) for i, a in enumerate(cl) for j, b in enumerate(cl) if i < j),
        key=lambda e: (-e[0], e[1], e[2]),
    )
    root = list(range(len(cl)))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    links = []
    for _, i, j in weighted:
        ri, rj = find(i), find(j)
        if ri != rj:
            root[ri] = rj
            links.append((i, j))
    return JunctionTree.from_links(cl, links)


# ---------------------------------------------------------------------------
# separator forests and counting


@dataclass(frozen=True)
class SeparatorForest:
    """Components of ``T_S`` after deleting the links that carry ``S``."""

    separator: frozenset
    components: tuple  # tuple of frozensets of nodes, canonical order

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.components]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def q(self) -> int:
        return len(self.components)


def separator_forest(t: JunctionTree, s: Iterable[int]) -> SeparatorForest:
    s = frozenset(s)
    adj = t.adjacency
    if s and not any(a & b == s for a, b in t.link_pairs()):
        raise ValueError(f"{sorted(s)} is not a separator of the tree")
    members = [n for n in adj if s <= n]
    member_set = set(members)
    seen: set = set()
    comps = []
    for start in sorted(members, key=node_key):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            x = queue.popleft()
            for nb in adj[x]:
                if nb in member_set and nb not in comp and x & nb != s:
                    comp.add(nb)
                    queue.append(nb)
        seen |= comp
        comps.append(frozenset(comp))
    return SeparatorForest(s, tuple(comps))


def nu(f: SeparatorForest) -> int:
    """Number of trees joining the components of ``f`` (generalised Cayley)."""
    if f.q <= 1:
        return 1
    return f.total ** (f.q - 2) * math.prod(f.sizes)


@dataclass
class MuFactorization:
    """Per-separator ``nu`` factors whose product is ``mu``."""

    factors: dict = field(default_factory=dict)

    @property
    def product(self) -> int:
        return math.prod(self.factors.values())

    @property
    def log_product(self) -> float:
        return sum(math.log(v) for v in self.factors.values())


def mu_factors(t: JunctionTree) -> MuFactorization:
    return MuFactorization({s: nu(separator_forest(t, s)) for s in t.distinct_separators()})


def mu(t: JunctionTree) -> int:
    """Number of junction trees representing ``underlying_graph(t)``."""
    return mu_factors(t).product


def log_mu(t: JunctionTree) -> float:
    return mu_factors(t).log_product


def mu_update(prev: MuFactorization, t_old: JunctionTree, t_new: JunctionTree) -> MuFactorization:
    """Update ``mu`` factors after ``t_old`` was expanded into ``t_new``.

    A factor can only change when the subtree of nodes containing its
    separator changes.  Every node added or removed by an expansion is a
    clique of the new graph containing the new vertex, or a clique of the old
    graph engulfed by one, so separators contained in a new clique (after
    dropping the new vertex) are recomputed, together with separators that
    did not exist before.  All other factors are reused as they are.
    """
    old_seps = t_old.distinct_separators()
    if set(prev.factors) != old_seps:
        raise ValueError("factorisation does not match the separators of t_old")
    new_nodes = [n for n in t_new.adjacency if n not in t_old.adjacency]
    factors = {}
    for s in t_new.distinct_separators():
        if s in prev.factors and not any(s <= c for c in new_nodes):
            factors[s] = prev.factors[s]
        else:
            factors[s] = nu(separator_forest(t_new, s))
    return MuFactorization(factors)


# ---------------------------------------------------------------------------
# randomisation at a separator


def random_forest_join(components: list[list], stream) -> list[tuple]:
    """Join a forest into a uniformly random tree (random-list construction).

    ``components`` lists the nodes of each component in a fixed order.  The
    returned list holds the new links, one fewer than the number of
    components.  Every one of ``n ** (q - 2) * prod(r_i)`` joins is produced by
    exactly one sequence of draws.
    """
    q = len(components)
    if q <= 1:
        return []
    flat = [(i, node) for i, comp in enumerate(components) for node in comp]
    code = [flat[stream.integer(len(flat))] for _ in range(q - 2)]
    pick = {i: comp[stream.integer(len(comp))] for i, comp in enumerate(components)}
    links = []
    pending = {}
    for i, _ in code:
        pending[i] = pending.get(i, 0) + 1
    for i, y in code:
        x = max(c for c in pick if pending.get(c, 0) == 0)
        links.append((pick.pop(x), y))
        pending[i] -= 1
    a, b = pick.values()
    links.append((a, b))
    return links


def randomize_adjacency(adj: dict[frozenset, set], s: frozenset, stream) -> None:
    """In-place randomisation of a mutable adjacency at separator ``s``."""
    members = {n for n in adj if s <= n}
    for a in members:
        for b in [b for b in adj[a] if b in members and a & b == s]:
            adj[a].discard(b)
            adj[b].discard(a)
    comps = []
    seen: set = set()
    for start in sorted(members, key=node_key):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        k = 0
        while k < len(comp):
            for nb in adj[comp[k]]:
                if nb in members and nb not in seen:
                    seen.add(nb)
                    comp.append(nb)
            k += 1
        comps.append(sorted(comp, key=node_key))
    for a, b in random_forest_join(comps, stream):
        adj[a].add(b)
        adj[b].add(a)


def randomize_at_separator(t: JunctionTree, s: Iterable[int], stream) -> JunctionTree:
    """Draw uniformly among the junction trees equal to ``t`` off the ``s`` links."""
    s = frozenset(s)
    f = separator_forest(t, s)
    if f.q <= 1:
        return t
    adj = {n: set(nb) for n, nb in t.adjacency.items()}
    randomize_adjacency(adj, s, stream)
    return JunctionTree(adj)
