"""Brute-force reference computations for small instances.

Everything here is deliberately naive and shares no logic with the fast
paths it is used to check: junction trees are found by enumerating every
labelled tree on the cliques (Pruefer sequences) and filtering with
:func:`validate`; cliques by scanning every vertex subset; chordality by
trying every elimination order.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

from .graph import Graph, enumerate_decomposable
from .junction_tree import JunctionTree, node_key, validate


def is_decomposable_bruteforce(g: Graph) -> bool:
    """True iff some vertex order is a perfect elimination order."""
    adj = g.adjacency()
    for order in itertools.permutations(sorted(g.vertices)):
        ok = True
        for k, v in enumerate(order):
            later = [u for u in order[k + 1 :] if u in adj[v]]
            if any(b not in adj[a] for a, b in itertools.combinations(later, 2)):
                ok = False
                break
        if ok:
            return True
    return False


def cliques_bruteforce(g: Graph) -> set[frozenset]:
    vs = sorted(g.vertices)
    complete = [
        frozenset(c)
        for r in range(1, len(vs) + 1)
        for c in itertools.combinations(vs, r)
        if all(g.has_edge(a, b) for a, b in itertools.combinations(c, 2))
    ]
    return {c for c in complete if not any(c < d for d in complete)}


def labelled_trees(n: int):
    """Edge lists of every labelled tree on ``0..n-1`` (Pruefer decoding)."""
    if n == 1:
        yield []
        return
    if n == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for x in seq:
            degree[x] += 1
        edges = []
        for x in seq:
            leaf = min(i for i in range(n) if degree[i] == 1)
            edges.append((leaf, x))
            degree[leaf] -= 1
            degree[x] -= 1
        u, w = [i for i in range(n) if degree[i] == 1]
        edges.append((u, w))
        yield edges


def junction_trees_of(g: Graph) -> list[JunctionTree]:
    """Every junction tree of ``g``, by filtering all trees on its cliques."""
    cl = sorted(cliques_bruteforce(g), key=node_key)
    out = []
    for edges in labelled_trees(len(cl)):
        t = JunctionTree.from_links(cl, edges)
        if validate(t):
            out.append(t)
    return out


def mu_bruteforce(g: Graph) -> int:
    return len(junction_trees_of(g))


@lru_cache(maxsize=None)
def tree_space(m: int) -> tuple[JunctionTree, ...]:
    """All junction trees whose underlying graph has vertex set ``1..m``."""
    return tuple(t for g in enumerate_decomposable(m) for t in junction_trees_of(g))


def expected_estimate(model, p: int, n_particles: int, params) -> float:
    """Exact ``log E[Z_hat]`` of the SMC estimator, by summing over all randomness.

    Every joint configuration of ``n_particles`` particles is visited:
    initial vertices, multinomial ancestor draws, appended vertices and
    expander outcomes (the latter from :func:`outcome_distribution` applied to
    the sampler, not from the density formulas).  Only feasible for tiny
    ``p`` and ``n_particles``.
    """
    import math

    from scipy.special import logsumexp

    from .junction_tree import JunctionTree, MuFactorization
    from .kernels import expand
    from .rng import outcome_distribution
    from .smc import transition_log_weight

    @lru_cache(maxsize=None)
    def moves(comb: tuple, t: JunctionTree):
        """(log probability, new comb, new tree) of every single-particle move."""
        free = [v for v in range(1, p + 1) if v not in comb]
        out = []
        for v in free:
            dist = outcome_distribution(lambda s: expand(t, v, params, s)[0])
            for t_new, pr in dist.items():
                out.append((math.log(pr / len(free)), comb + (v,), t_new))
        return out

    mus: dict = {}

    def increment(t_old, t_new):
        key = (t_old, t_new)
        if key not in mus:
            mu_old = mus.get(("mu", t_old), MuFactorization({}))
            lw, mu_new = transition_log_weight(model, t_old, t_new, mu_old, params)
            mus[("mu", t_new)] = mu_new
            mus[key] = lw
        return mus[key]

    log_n = math.log(n_particles)

    def rec(system) -> float:
        # system: tuple of (comb, tree, log_weight); returns log E[prod of later Omega/N]
        lws = [lw for _, _, lw in system]
        log_omega = logsumexp(lws) - log_n
        stage = len(system[0][0])
        if stage == p:
            return log_omega
        log_probs = [lw - logsumexp(lws) for lw in lws]
        terms = []
        # each particle independently picks an ancestor and a move
        per_particle = [
            (lp_a + lp_m, (comb, t_new, increment(system[a][1], t_new)))
            for a, lp_a in enumerate(log_probs)
            for lp_m, comb, t_new in moves(system[a][0], system[a][1])
        ]
        for combo in itertools.product(per_particle, repeat=n_particles):
            lp = sum(c[0] for c in combo)
            terms.append(lp + rec(tuple(c[1] for c in combo)))
        return log_omega + logsumexp(terms)

    starts = []
    for v in range(1, p + 1):
        t = JunctionTree.trivial(v)
        mus[("mu", t)] = MuFactorization({})
        starts.append((-math.log(p), ((v,), t, model.log_score(t))))
    terms = []
    for combo in itertools.product(starts, repeat=n_particles):
        terms.append(sum(c[0] for c in combo) + rec(tuple(c[1] for c in combo)))
    return float(logsumexp(terms))
