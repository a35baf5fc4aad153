"""Unnormalised graph distributions in clique/separator form.

A target assigns a log score ``h(a)`` to every vertex subset ``a``; the score
of a decomposable graph with junction tree ``t`` is::

    sum(h(C) for C in nodes(t)) - sum(h(S) for S in link separators(t))

which does not depend on the particular junction tree chosen.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import multigammaln

from .graph import Graph, is_decomposable
from .junction_tree import JunctionTree
from .rng import philox


class TargetModel:
    """Base class: subclasses implement :meth:`log_subset_score`."""

    def log_subset_score(self, a: frozenset) -> float:
        raise NotImplementedError

    def log_clique_score(self, clique: frozenset) -> float:
        return self.log_subset_score(clique)

    def log_separator_score(self, separator: frozenset) -> float:
        return self.log_subset_score(separator)

    def log_score(self, t: JunctionTree) -> float:
        return sum(self.log_clique_score(c) for c in t.adjacency) - sum(
            self.log_separator_score(s) for s in t.separators()
        )

    def log_score_delta(self, t_old: JunctionTree, t_new: JunctionTree) -> float:
        """``log_score(t_new) - log_score(t_old)``, touching changed terms only."""
        old_nodes, new_nodes = t_old.adjacency, t_new.adjacency
        delta = 0.0
        for c in new_nodes:
            if c not in old_nodes:
                delta += self.log_clique_score(c)
        for c in old_nodes:
            if c not in new_nodes:
                delta -= self.log_clique_score(c)
        seps = Counter(t_new.separators())
        seps.subtract(t_old.separators())
        for s, k in seps.items():
            if k:
                delta -= k * self.log_separator_score(s)
        return delta


class UniformTarget(TargetModel):
    """Unnormalised target equal to one for every decomposable graph."""

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("p must be at least 1")
        self.p = p

    def log_subset_score(self, a):
        return 0.0

    def log_score(self, t):
        return 0.0

    def log_score_delta(self, t_old, t_new):
        return 0.0


def uniform_target(p: int) -> UniformTarget:
    return UniformTarget(p)


def _log_det_spd(mat: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not symmetric positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def log_wishart_norm(subset_size: int, scale: np.ndarray, df: float) -> float:
    """Log normalising constant of an inverse Wishart in the Dawid-Lauritzen form.

    For ``Sigma ~ IW(df, scale)`` of dimension ``d`` with density proportional
    to ``|Sigma|^{-(df + 2d)/2} exp(-tr(Sigma^{-1} scale) / 2)``, returns the
    log of the integral of the unnormalised density::

        log Gamma_d((df + d - 1) / 2) - (df + d - 1) / 2 * log|scale / 2|
    """
    d = subset_size
    if d == 0:
        return 0.0
    scale = np.asarray(scale, dtype=float).reshape(d, d)
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    shape = (df + d - 1) / 2.0
    return float(multigammaln(shape, d)) - shape * (_log_det_spd(scale) - d * math.log(2.0))


class GGMModel(TargetModel):
    """Marginal likelihood of zero-mean Gaussian data under a hyper inverse Wishart prior.

    Parameters
    ----------
    data : array of shape (n, p)
        Observations; column ``k`` belongs to vertex ``k + 1``.
    scale : array of shape (p, p), optional
        Prior scale matrix (identity by default).
    df : float, optional
        Prior degrees of freedom (``p`` by default).
    cache_size : int
        Bound on the number of cached subset scores.
    """

    def __init__(self, data, scale=None, df: float | None = None, cache_size: int = 1 << 16):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        n, p = data.shape
        if n < 1:
            raise ValueError("need at least one observation")
        self.data = data
        self.n, self.p = n, p
        self.scale = np.eye(p) if scale is None else np.asarray(scale, dtype=float)
        if self.scale.shape != (p, p):
            raise ValueError(f"scale matrix must be {p}x{p}")
        if not np.allclose(self.scale, self.scale.T):
            raise ValueError("scale matrix must be symmetric")
        _log_det_spd(self.scale)
        self.df = float(p if df is None else df)
        if self.df <= 0:
            raise ValueError("degrees of freedom must be positive")
        self.gram = data.T @ data
        self._score = lru_cache(maxsize=cache_size)(self._compute)

    def _compute(self, a: frozenset) -> float:
        if not a:
            return 0.0
        idx = np.array(sorted(a)) - 1
        if idx.min() < 0 or idx.max() >= self.p:
            raise ValueError(f"vertices {sorted(a)} outside 1..{self.p}")
        block = np.ix_(idx, idx)
        d = len(idx)
        prior = self.scale[block]
        post = prior + self.gram[block]
        return (
            log_wishart_norm(d, post, self.df + self.n)
            - log_wishart_norm(d, prior, self.df)
            - 0.5 * self.n * d * math.log(2.0 * math.pi)
        )

    def log_subset_score(self, a: frozenset) -> float:
        return self._score(frozenset(a))


def ggm_log_score(model: GGMModel, t: JunctionTree) -> float:
    return model.log_score(t)


@dataclass(frozen=True)
class SyntheticGGMSpec:
    graph: Graph
    epsilon: float = 0.5
    upsilon: float = 1.0
    n: int = 100
    seed: int = 0


def generate_synthetic_ggm(spec: SyntheticGGMSpec, margin: float = 1e-8):
    """Random precision matrix with the graph's zero pattern, and data drawn from it.

    The two interval parameters are read as the ends of ``(lo, hi)`` whatever
    their order.  Off-diagonal entries of edges are uniform on
    ``(-hi, -lo) U (lo, hi)`` and diagonal entries uniform on ``(lo, hi)``; the
    diagonal is then shifted by the smallest non-negative amount that makes
    the matrix positive definite (plus ``margin`` when a shift is needed).

    Returns
    -------
    data : array of shape (n, p)
    precision : array of shape (p, p)
    """
    g = spec.graph
    if not is_decomposable(g):
        raise ValueError("graph must be decomposable")
    if spec.n < 1:
        raise ValueError("n must be at least 1")
    lo, hi = sorted((float(spec.epsilon), float(spec.upsilon)))
    if not (0.0 <= lo < hi <= 1.0):
        raise ValueError("interval ends must be distinct values in [0, 1]")
    order = g.sorted_vertices()
    pos = {v: k for k, v in enumerate(order)}
    p = len(order)
    rng = philox(spec.seed, 0x5EED)
    omega = np.zeros((p, p))
    omega[np.diag_indices(p)] = rng.uniform(lo, hi, size=p)
    for i, j in sorted(g.edges):
        mag = rng.uniform(lo, hi)
        sign = -1.0 if rng.random() < 0.5 else 1.0
        omega[pos[i], pos[j]] = omega[pos[j], pos[i]] = sign * mag
    lam = float(np.linalg.eigvalsh(omega)[0])
    shift = 0.0 if lam > 0 else -lam + margin
    precision = omega + shift * np.eye(p)
    cov = np.linalg.inv(precision)
    cov = (cov + cov.T) / 2
    data = rng.multivariate_normal(np.zeros(p), cov, size=spec.n, method="cholesky")
    return data, precision


def asymptotic_count_exact(p: int) -> int:
    """``sum_{r=1}^{p} C(p, r) 2^{r(p-r)}`` as an exact integer."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return sum(math.comb(p, r) * 2 ** (r * (p - r)) for r in range(1, p + 1))


def asymptotic_count(p: int) -> float:
    """Log of the asymptotic reference for the number of decomposable graphs."""
    return math.log(asymptotic_count_exact(p))
