"""Sequential Monte Carlo over junction trees grown one vertex at a time.

Particles carry an ordered vertex combination, a junction tree on those
vertices and a log weight.  Each step resamples, appends a uniformly drawn
unused vertex, grows the tree with the expander and reweights by::

    target ratio * mu(old) / mu(new) * collapser(new -> old) / expander(old -> new)

The product of the per-step mean weights is an unbiased estimate of the sum
of the unnormalised target over all decomposable graphs on ``p`` vertices.

Randomness is keyed by ``(seed, replicate, step, particle)``; every particle
reads from its own row of a Philox block, so results do not depend on the
order in which particles are processed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .junction_tree import JunctionTree, MuFactorization, mu_factors, mu_update, underlying_graph
from .kernels import ExpanderParams, collapse, collapser_density, expand, expander_density
from .models import TargetModel
from .rng import Stream, philox

_BLOCK = 0
_RESAMPLE = 1
_SPILL = 2
_MEMO_LIMIT = 1 << 20


@dataclass(frozen=True)
class SMCConfig:
    p: int
    n_particles: int = 10000
    params: ExpanderParams = field(default_factory=ExpanderParams)
    seed: int = 0
    replicate: int = 0
    resampling: str = "multinomial"
    draws_per_particle: int = 32

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if self.resampling not in ("multinomial", "systematic"):
            raise ValueError(f"unknown resampling scheme {self.resampling!r}")


@dataclass
class Particle:
    comb: tuple
    tree: JunctionTree
    log_weight: float
    mu: MuFactorization


@dataclass
class ParticleSystem:
    particles: list
    log_omegas: list = field(default_factory=list)
    ancestry: list = field(default_factory=list)  # ancestor indices per step >= 2
    history: list | None = None  # particle lists per stage, when kept

    @property
    def stage(self) -> int:
        return len(self.particles[0].comb)

    def log_weights(self) -> np.ndarray:
        return np.array([q.log_weight for q in self.particles])


@dataclass
class SMCResult:
    particles: list
    log_omegas: list
    log_Z: float
    p: int
    n_particles: int
    seed: int
    replicate: int
    params: ExpanderParams
    runtime_s: float = 0.0

    @property
    def estimate(self) -> float:
        return math.exp(self.log_Z)


def logsumexp(x) -> float:
    # scipy's version carries array-API overhead that dominates small particle systems
    x = np.asarray(x, dtype=float)
    top = x.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(x - top).sum()))


class _Streams:
    """Per-step source of particle streams."""

    def __init__(self, cfg: SMCConfig, step: int):
        self.cfg = cfg
        self.step = step
        gen = philox(cfg.seed, cfg.replicate, step, _BLOCK)
        self.block = gen.random((cfg.n_particles, cfg.draws_per_particle)).tolist()

    def particle(self, i: int) -> Stream:
        cfg, step = self.cfg, self.step
        return Stream(self.block[i], lambda: philox(cfg.seed, cfg.replicate, step, _SPILL + i))

    def resampler(self) -> np.random.Generator:
        return philox(self.cfg.seed, self.cfg.replicate, self.step, _RESAMPLE)


def combination_step(comb: tuple, p: int, stream) -> tuple:
    """Append a uniformly chosen vertex of ``1..p`` not yet in ``comb``."""
    if len(comb) >= p:
        raise ValueError("combination already contains every vertex")
    used = set(comb)
    free = [v for v in range(1, p + 1) if v not in used]
    return comb + (free[stream.integer(len(free))],)


def resample(log_weights: np.ndarray, gen: np.random.Generator, scheme: str = "multinomial") -> np.ndarray:
    """Ancestor indices drawn in proportion to ``exp(log_weights)``."""
    n = len(log_weights)
    w = np.exp(log_weights - log_weights.max())
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    if scheme == "systematic":
        u = (gen.random() + np.arange(n)) / n
    else:
        u = gen.random(n)
    return np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)


def transition_log_weight(
    model: TargetModel, t_old: JunctionTree, t_new: JunctionTree, mu_old: MuFactorization, params: ExpanderParams
) -> tuple[float, MuFactorization]:
    """Incremental log weight of one expander move and the updated ``mu`` factors."""
    forward = expander_density(t_old, t_new, params)
    if forward <= 0.0:
        raise RuntimeError("realised expander transition has zero density")
    backward = collapser_density(t_new, t_old)
    if backward <= 0.0:
        raise RuntimeError("realised expander transition cannot be collapsed back")
    mu_new = mu_update(mu_old, t_old, t_new)
    log_w = (
        model.log_score_delta(t_old, t_new)
        + mu_old.log_product
        - mu_new.log_product
        + math.log(backward)
        - math.log(forward)
    )
    return log_w, mu_new


def init_particles(model: TargetModel, cfg: SMCConfig, keep_history: bool = False) -> ParticleSystem:
    streams = _Streams(cfg, 1)
    particles = []
    for i in range(cfg.n_particles):
        comb = combination_step((), cfg.p, streams.particle(i))
        tree = JunctionTree.trivial(comb[0])
        particles.append(Particle(comb, tree, model.log_score(tree), MuFactorization({})))
    system = ParticleSystem(particles, history=[particles] if keep_history else None)
    system.log_omegas.append(float(logsumexp(system.log_weights())))
    return system


def smc_step(
    system: ParticleSystem,
    model: TargetModel,
    cfg: SMCConfig,
    pinned: tuple | None = None,
    memo: dict | None = None,
) -> ParticleSystem:
    """Advance every particle by one vertex.

    ``pinned`` optionally fixes particle 0 to ``(comb, tree)`` with ancestor 0,
    which turns the step into a conditional SMC step.
    """
    m = system.stage
    if m >= cfg.p:
        raise ValueError("particles already contain every vertex")
    streams = _Streams(cfg, m + 1)
    ancestors = resample(system.log_weights(), streams.resampler(), cfg.resampling)
    if pinned is not None:
        ancestors[0] = 0
    memo = {} if memo is None else memo
    out = []
    for i, a in enumerate(ancestors.tolist()):
        parent = system.particles[a]
        if pinned is not None and i == 0:
            comb, tree = pinned
        else:
            stream = streams.particle(i)
            comb = combination_step(parent.comb, cfg.p, stream)
            tree, _ = expand(parent.tree, comb[-1], cfg.params, stream)
        key = (parent.tree, tree)
        hit = memo.get(key)
        if hit is None:
            hit = memo[key] = transition_log_weight(model, parent.tree, tree, parent.mu, cfg.params)
        log_w, mu_new = hit
        out.append(Particle(comb, tree, log_w, mu_new))
    nxt = ParticleSystem(out, list(system.log_omegas), system.ancestry + [ancestors], system.history)
    if nxt.history is not None:
        nxt.history = nxt.history + [out]
    nxt.log_omegas.append(float(logsumexp(nxt.log_weights())))
    return nxt


def _finish(system: ParticleSystem, cfg: SMCConfig, started: float) -> SMCResult:
    log_z = sum(system.log_omegas) - cfg.p * math.log(cfg.n_particles)
    return SMCResult(
        particles=system.particles,
        log_omegas=list(system.log_omegas),
        log_Z=log_z,
        p=cfg.p,
        n_particles=cfg.n_particles,
        seed=cfg.seed,
        replicate=cfg.replicate,
        params=cfg.params,
        runtime_s=time.perf_counter() - started,
    )


def run_smc(model: TargetModel, cfg: SMCConfig) -> SMCResult:
    """Run all ``p`` steps and estimate the normalising constant."""
    started = time.perf_counter()
    system = init_particles(model, cfg)
    while system.stage < cfg.p:
        system = smc_step(system, model, cfg)
    return _finish(system, cfg, started)


# ---------------------------------------------------------------------------
# posterior summaries


def graph_weights(particles: list, log_weights=None) -> dict[Graph, float]:
    """Normalised particle weight aggregated by underlying graph."""
    lw = np.array([q.log_weight for q in particles]) if log_weights is None else np.asarray(log_weights)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    by_tree: dict = {}
    for q, wi in zip(particles, w.tolist()):
        by_tree[q.tree] = by_tree.get(q.tree, 0.0) + wi
    out: dict = {}
    for tree, wi in by_tree.items():
        g = underlying_graph(tree, check=False)
        out[g] = out.get(g, 0.0) + wi
    return out


def edge_probabilities(weights: dict[Graph, float], p: int) -> np.ndarray:
    mat = np.zeros((p, p))
    for g, w in weights.items():
        for i, j in g.edges:
            mat[i - 1, j - 1] += w
            mat[j - 1, i - 1] += w
    return mat


def posterior_summary(result: SMCResult) -> tuple[dict[Graph, float], np.ndarray]:
    """Graph posterior weights and the marginal edge-probability matrix."""
    weights = graph_weights(result.particles)
    return weights, edge_probabilities(weights, result.p)


def map_graph(weights: dict[Graph, float]) -> Graph:
    return max(weights.items(), key=lambda kv: (kv[1], -len(kv[0].edges)))[0]


# ---------------------------------------------------------------------------
# conditional SMC


@dataclass(frozen=True)
class RetainedPath:
    """Insertion order and the junction tree after each insertion."""

    comb: tuple
    trees: tuple

    @property
    def tree(self) -> JunctionTree:
        return self.trees[-1]

    def check(self, p: int) -> None:
        if len(self.comb) != p or len(self.trees) != p or sorted(self.comb) != list(range(1, p + 1)):
            raise ValueError("retained path must insert every vertex exactly once")
        for m, t in enumerate(self.trees, start=1):
            if t.vertices != frozenset(self.comb[:m]):
                raise ValueError(f"tree {m} of the retained path has the wrong vertices")
        for m in range(1, p):
            if collapser_density(self.trees[m], self.trees[m - 1]) <= 0.0:
                raise ValueError(f"trees {m} and {m + 1} of the retained path are not linked by a collapse")


def backward_path(comb: tuple, tree: JunctionTree, stream) -> RetainedPath:
    """Draw the earlier trees of a path ending in ``tree`` from the collapser."""
    trees = [tree]
    for v in reversed(comb[1:]):
        trees.append(collapse(trees[-1], v, stream))
    return RetainedPath(tuple(comb), tuple(reversed(trees)))


def conditional_smc(
    model: TargetModel,
    cfg: SMCConfig,
    retained: RetainedPath | None,
    refresh: bool = True,
    memo: dict | None = None,
    check: bool = True,
) -> tuple[SMCResult, RetainedPath]:
    """One conditional SMC sweep (a particle Gibbs transition).

    Particle 0 follows ``retained`` through every step; the returned path is
    the ancestral line of a particle drawn from the final weights.  With
    ``refresh`` the insertion order of the selected path is then redrawn
    uniformly and its earlier trees regenerated by collapsing, both exact
    draws from the path target given the final tree.

    This is a simplified particle Gibbs kernel without ancestor sampling.
    ``retained=None`` runs an unconditional sweep (used to start a chain).
    ``memo`` caches incremental weights across sweeps of the same model.
    """
    started = time.perf_counter()
    if retained is not None:
        if check:
            retained.check(cfg.p)
        if cfg.n_particles == 1:
            return _finish(_pinned_only(model, cfg, retained), cfg, started), retained
    system = init_particles(model, cfg, keep_history=True)
    if retained is not None:
        first = system.particles[0]
        tree = retained.trees[0]
        system.particles[0] = Particle(retained.comb[:1], tree, model.log_score(tree), first.mu)
        system.history[0] = system.particles
        system.log_omegas[0] = float(logsumexp(system.log_weights()))
    memo = {} if memo is None else memo
    while system.stage < cfg.p:
        m = system.stage
        pinned = None if retained is None else (retained.comb[: m + 1], retained.trees[m])
        system = smc_step(system, model, cfg, pinned=pinned, memo=memo)
    result = _finish(system, cfg, started)

    pick = philox(cfg.seed, cfg.replicate, cfg.p + 1, _RESAMPLE)
    k = int(resample(system.log_weights(), pick)[0])
    final = system.particles[k]
    if refresh:
        stream = Stream.keyed(cfg.seed, cfg.replicate, cfg.p + 1, _SPILL)
        comb = tuple(int(v) for v in pick.permutation(final.comb))
        return result, backward_path(comb, final.tree, stream)
    trees = [final.tree]
    idx = k
    for stage in range(cfg.p - 1, 0, -1):
        idx = int(system.ancestry[stage - 1][idx])
        trees.append(system.history[stage - 1][idx].tree)
    return result, RetainedPath(final.comb, tuple(reversed(trees)))


def _pinned_only(model, cfg, retained) -> ParticleSystem:
    tree = retained.trees[0]
    system = ParticleSystem([Particle(retained.comb[:1], tree, model.log_score(tree), MuFactorization({}))])
    system.log_omegas.append(system.particles[0].log_weight)
    for m in range(1, cfg.p):
        parent = system.particles[0]
        new = retained.trees[m]
        log_w, mu_new = transition_log_weight(model, parent.tree, new, parent.mu, cfg.params)
        system = ParticleSystem([Particle(retained.comb[: m + 1], new, log_w, mu_new)], system.log_omegas + [log_w])
    return system


def run_particle_gibbs(
    model: TargetModel,
    cfg: SMCConfig,
    iterations: int,
    burnin: int = 0,
    refresh: bool = True,
) -> list[Graph]:
    """Chain of graphs from repeated conditional SMC sweeps (burn-in dropped).

    Sweep ``k`` uses replicate index ``cfg.replicate + k`` so every sweep has
    fresh randomness under the same seed.
    """
    from dataclasses import replace

    path = None
    graphs = []
    memo: dict = {}
    for it in range(iterations + 1):
        if len(memo) > _MEMO_LIMIT:
            memo.clear()
        sweep_cfg = replace(cfg, replicate=cfg.replicate + it)
        _, path = conditional_smc(model, sweep_cfg, path, refresh=refresh, memo=memo, check=False)
        if it >= 1 and it > burnin:
            graphs.append(underlying_graph(path.tree, check=False))
    return graphs


def chain_frequencies(graphs: list[Graph]) -> dict[Graph, float]:
    out: dict = {}
    for g in graphs:
        out[g] = out.get(g, 0.0) + 1.0
    total = float(len(graphs))
    return {g: c / total for g, c in out.items()}
