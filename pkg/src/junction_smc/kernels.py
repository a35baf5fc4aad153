"""Subtree sampler, junction-tree expander and collapser, with exact densities.

The samplers take a draw source (see :mod:`junction_smc.rng`) and are
deterministic given its draws.  The density functions invert the samplers:
for the expander every way of producing ``t_plus`` from ``t`` is recovered by
identifying, for each node of ``t_plus`` containing the new vertex, the node
of ``t`` it could have grown from, and each candidate is replayed through the
same construction code the sampler uses.  Summing the probabilities of the
replays that reproduce ``t_plus`` gives the transition probability exactly.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .junction_tree import JunctionTree, node_key, nu, randomize_adjacency, separator_forest

EMPTY = frozenset()


@dataclass(frozen=True)
class ExpanderParams:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")


# ---------------------------------------------------------------------------
# subtree sampling


def sample_subtree(t: JunctionTree, params: ExpanderParams, stream) -> frozenset:
    """Stochastic breadth-first traversal; returns the visited nodes (maybe none)."""
    if not stream.bernoulli(params.beta):
        return EMPTY
    adj = t.adjacency
    nodes = t.nodes
    queue = deque([nodes[stream.integer(len(nodes))]])
    visited: set = set()
    while queue:
        y = queue.popleft()
        visited.add(y)
        for nb in sorted(adj[y] - visited, key=node_key):
            if stream.bernoulli(params.alpha):
                queue.append(nb)
    return frozenset(visited)


def _is_connected(adj, sub: frozenset) -> bool:
    start = next(iter(sub))
    seen = {start}
    queue = [start]
    while queue:
        for nb in adj[queue.pop()]:
            if nb in sub and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(sub)


def subtree_probability(t: JunctionTree, sub: frozenset, params: ExpanderParams) -> float:
    """Probability that :func:`sample_subtree` returns exactly ``sub``.

    Every node of the subtree runs one Bernoulli trial per child, whatever the
    root, so a connected ``sub`` with ``k`` nodes and ``b`` links leaving it
    has probability ``beta * (k / n) * alpha**(k-1) * (1-alpha)**b``.
    """
    if not sub:
        return 1.0 - params.beta
    adj = t.adjacency
    if any(n not in adj for n in sub):
        raise ValueError("subtree contains nodes absent from the tree")
    if not _is_connected(adj, sub):
        raise ValueError("subtree is not connected")
    k = len(sub)
    boundary = sum(1 for n in sub for nb in adj[n] if nb not in sub)
    a = params.alpha
    return params.beta * (k / len(adj)) * a ** (k - 1) * (1.0 - a) ** boundary


# ---------------------------------------------------------------------------
# expander


@dataclass
class ExpansionTrace:
    """Record of the draws behind one expansion."""

    subtree: tuple = ()
    sep_unions: list = field(default_factory=list)
    extras: list = field(default_factory=list)
    new_nodes: list = field(default_factory=list)
    engulfed: list = field(default_factory=list)
    moved: list = field(default_factory=list)
    empty_route_links: list = field(default_factory=list)

    def to_json(self) -> dict:
        def s(x):
            return sorted(x)

        return {
            "subtree": [s(c) for c in self.subtree],
            "sep_unions": [s(c) for c in self.sep_unions],
            "extras": [s(c) for c in self.extras],
            "new_nodes": [s(c) for c in self.new_nodes],
            "engulfed": list(self.engulfed),
            "moved": [[s(d) for d in m] for m in self.moved],
            "empty_route_links": [[s(a), s(b)] for a, b in self.empty_route_links],
        }


def _sep_unions(adj, order: list) -> list[tuple[frozenset, bool]]:
    """For each subtree node: union of its subtree separators, and whether the
    extra set must be non-empty (the union equals one of those separators)."""
    sub = set(order)
    out = []
    for c in order:
        seps = [c & d for d in adj[c] if d in sub]
        union = frozenset().union(*seps) if seps else EMPTY
        out.append((union, any(union == s for s in seps)))
    return out


def _replicate(t: JunctionTree, order: list, rests: list, v: int):
    """Add the new nodes and rewire (node creation and structure replication)."""
    tadj = t.adjacency
    adj = {n: set(nb) for n, nb in tadj.items()}
    pos = {c: j for j, c in enumerate(order)}
    new = [r | {v} for r in rests]
    engulfed = [r == c for r, c in zip(rests, order)]
    for cs in new:
        adj[cs] = set()
    for j, c in enumerate(order):
        if engulfed[j]:
            for nb in adj.pop(c):
                adj[nb].discard(c)
    for j, c in enumerate(order):
        for d in tadj[c]:
            k = pos.get(d)
            if k is None or k < j:
                continue
            if c in adj and d in adj:
                adj[c].discard(d)
                adj[d].discard(c)
            adj[new[j]].add(new[k])
            adj[new[k]].add(new[j])
    for j, c in enumerate(order):
        if engulfed[j]:
            for d in tadj[c]:
                if d not in pos:
                    adj[d].add(new[j])
                    adj[new[j]].add(d)
        else:
            adj[c].add(new[j])
            adj[new[j]].add(c)
    return adj, new, engulfed


def _movable(adj, c: frozenset, cs: frozenset, rest: frozenset) -> list:
    return sorted((d for d in adj[c] if d != cs and c & d <= rest), key=node_key)


def _relocate(adj, c, cs, moved) -> None:
    for d in moved:
        adj[c].discard(d)
        adj[d].discard(c)
        adj[cs].add(d)
        adj[d].add(cs)


def expand(t: JunctionTree, new_vertex: int, params: ExpanderParams, stream) -> tuple[JunctionTree, ExpansionTrace]:
    """Grow ``t`` by ``new_vertex``; returns the new tree and the draws made."""
    v = new_vertex
    if any(v in n for n in t.adjacency):
        raise ValueError(f"vertex {v} already present in the tree")
    trace = ExpansionTrace()
    sub = sample_subtree(t, params, stream)
    if not sub:
        adj = {n: set(nb) for n, nb in t.adjacency.items()}
        single = frozenset([v])
        anchor = t.nodes[0]
        adj[single] = {anchor}
        adj[anchor].add(single)
        randomize_adjacency(adj, EMPTY, stream)
        trace.empty_route_links = [(a, b) for a, b in JunctionTree(adj).link_pairs() if not a & b]
        return JunctionTree(adj), trace

    order = sorted(sub, key=node_key)
    plan = _sep_unions(t.adjacency, order)
    rests = []
    for c, (union, mandated) in zip(order, plan):
        extra = frozenset(stream.subset(sorted(c - union), nonempty=mandated))
        trace.sep_unions.append(union)
        trace.extras.append(extra)
        rests.append(union | extra)
    adj, new, engulfed = _replicate(t, order, rests, v)
    for j, c in enumerate(order):
        moved = []
        if not engulfed[j]:
            moved = stream.subset(_movable(adj, c, new[j], rests[j]))
            _relocate(adj, c, new[j], moved)
        trace.moved.append(moved)
    trace.subtree = tuple(order)
    trace.new_nodes = new
    trace.engulfed = engulfed
    return JunctionTree(adj), trace


def _added_vertex(t: JunctionTree, t_plus: JunctionTree) -> int:
    small, big = t.vertices, t_plus.vertices
    extra = big - small
    if not small <= big or len(extra) != 1:
        raise ValueError("t_plus must have exactly one vertex more than t")
    return next(iter(extra))


def _nonempty_links(t: JunctionTree) -> set:
    return {frozenset((a, b)) for a, b in t.link_pairs() if a & b}


def _matches_off_empty(small: JunctionTree, big: JunctionTree, single: frozenset) -> bool:
    """``big`` equals ``small`` plus the isolated node ``single`` up to empty-separator links."""
    if set(big.adjacency) != set(small.adjacency) | {single} or single in small.adjacency:
        return False
    return _nonempty_links(small) == _nonempty_links(big)


def _subtree_routes(t: JunctionTree, t_plus: JunctionTree, v: int, params: ExpanderParams):
    """Yield ``(subtree, probability)`` for every non-empty route to ``t_plus``."""
    tadj, padj = t.adjacency, t_plus.adjacency
    new_nodes = sorted((n for n in padj if v in n), key=node_key)
    new_set = set(new_nodes)
    candidates = []
    for cs in new_nodes:
        rest = cs - {v}
        if rest in tadj:
            candidates.append([rest])
        else:
            opts = sorted((d for d in padj[cs] if d & cs == rest), key=node_key)
            if not opts:
                return
            candidates.append(opts)
    index = {cs: j for j, cs in enumerate(new_nodes)}
    new_links = {
        frozenset((index[a], index[b])) for a in new_nodes for b in padj[a] if b in index
    }
    for origins in itertools.product(*candidates):
        if len(set(origins)) != len(origins):
            continue
        pos = {o: j for j, o in enumerate(origins)}
        links = {frozenset((j, pos[d])) for j, o in enumerate(origins) for d in tadj[o] if d in pos}
        if links != new_links:
            continue
        sub = frozenset(origins)
        # replay in the sampler's canonical order
        perm = sorted(range(len(origins)), key=lambda j: node_key(origins[j]))
        order = [origins[j] for j in perm]
        rests = [new_nodes[j] - {v} for j in perm]
        plan = _sep_unions(tadj, order)
        prob = subtree_probability(t, sub, params)
        ok = True
        for c, rest, (union, mandated) in zip(order, rests, plan):
            extra = rest - union
            if not union <= rest or (mandated and not extra):
                ok = False
                break
            prob /= 2 ** len(c - union) - (1 if mandated else 0)
        if not ok:
            continue
        adj, new, engulfed = _replicate(t, order, rests, v)
        for j, c in enumerate(order):
            if engulfed[j]:
                continue
            movable = _movable(adj, c, new[j], rests[j])
            wanted = padj[new[j]] - {c} - new_set
            if not wanted <= set(movable):
                ok = False
                break
            prob *= 0.5 ** len(movable)
            _relocate(adj, c, new[j], wanted)
        if ok and JunctionTree(adj) == t_plus:
            yield sub, prob


def _quick_reject(t: JunctionTree, t_plus: JunctionTree, v: int) -> bool:
    tadj = t.adjacency
    return any(v not in n and n not in tadj for n in t_plus.adjacency)


def generating_subtrees(t: JunctionTree, t_plus: JunctionTree) -> set[frozenset]:
    """Non-empty subtrees of ``t`` from which the expander can produce ``t_plus``."""
    v = _added_vertex(t, t_plus)
    if _quick_reject(t, t_plus, v):
        return set()
    return {sub for sub, _ in _subtree_routes(t, t_plus, v, ExpanderParams())}


def expander_density(t: JunctionTree, t_plus: JunctionTree, params: ExpanderParams) -> float:
    """Probability that :func:`expand` turns ``t`` into ``t_plus``."""
    v = _added_vertex(t, t_plus)
    if _quick_reject(t, t_plus, v):
        return 0.0
    total = 0.0
    single = frozenset([v])
    if single in t_plus.adjacency and _matches_off_empty(t, t_plus, single):
        total += (1.0 - params.beta) / nu(separator_forest(t_plus, EMPTY))
    for _, prob in _subtree_routes(t, t_plus, v, params):
        total += prob
    return total


# ---------------------------------------------------------------------------
# collapser


def _origin_candidates(t_plus: JunctionTree, victim: int):
    padj = t_plus.adjacency
    new_nodes = sorted((n for n in padj if victim in n), key=node_key)
    options = []
    for cs in new_nodes:
        rest = cs - {victim}
        pot = sorted((d for d in padj[cs] if d & cs == rest), key=node_key)
        options.append(pot or [rest])
    return new_nodes, options


def _collapse_with(t_plus: JunctionTree, new_nodes: list, origins: list) -> JunctionTree:
    adj = {n: set(nb) for n, nb in t_plus.adjacency.items()}
    for cs, c in zip(new_nodes, origins):
        adj.setdefault(c, set())
        for d in adj.pop(cs):
            adj[d].discard(cs)
            if d != c:
                adj[d].add(c)
                adj[c].add(d)
    return JunctionTree(adj)


def collapse(t_plus: JunctionTree, victim: int, stream) -> JunctionTree:
    """Remove ``victim`` from ``t_plus`` (reverse move of :func:`expand`)."""
    padj = t_plus.adjacency
    if not any(victim in n for n in padj):
        raise ValueError(f"vertex {victim} is not in the tree")
    if t_plus.vertices == {victim}:
        raise ValueError("cannot collapse the last vertex")
    single = frozenset([victim])
    if single in padj:
        adj = {n: set(nb) for n, nb in padj.items()}
        for d in adj.pop(single):
            adj[d].discard(single)
        randomize_adjacency(adj, EMPTY, stream)
        return JunctionTree(adj)
    new_nodes, options = _origin_candidates(t_plus, victim)
    origins = [opts[0] if len(opts) == 1 else opts[stream.integer(len(opts))] for opts in options]
    return _collapse_with(t_plus, new_nodes, origins)


def collapser_density(t_plus: JunctionTree, t: JunctionTree) -> float:
    """Probability that :func:`collapse` turns ``t_plus`` into ``t``."""
    victim = _added_vertex(t, t_plus)
    padj = t_plus.adjacency
    single = frozenset([victim])
    if single in padj:
        if not _matches_off_empty(t, t_plus, single):
            return 0.0
        return 1.0 / nu(separator_forest(t, EMPTY))
    new_nodes, options = _origin_candidates(t_plus, victim)
    weight = 1.0
    for opts in options:
        weight /= len(opts)
    hits = sum(1 for origins in itertools.product(*options) if _collapse_with(t_plus, new_nodes, list(origins)) == t)
    return hits * weight
