"""Acceptance checks, one per criterion.

Run under pytest (a summary line per criterion is printed at the end of the
session) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest
from scipy import integrate, stats

from junction_smc.graph import Graph, enumerate_decomposable
from junction_smc.junction_tree import JunctionTree, junction_tree_of, mu, randomize_at_separator
from junction_smc.kernels import ExpanderParams, collapse, collapser_density, expand, expander_density
from junction_smc.models import GGMModel, SyntheticGGMSpec, generate_synthetic_ggm, uniform_target
from junction_smc.oracles import expected_estimate, mu_bruteforce, tree_space
from junction_smc.rng import Stream, outcome_distribution
from junction_smc.smc import (
    SMCConfig,
    chain_frequencies,
    edge_probabilities,
    logsumexp,
    posterior_summary,
    run_particle_gibbs,
    run_smc,
)

pytestmark = pytest.mark.slow

RESULTS: dict[int, str] = {}

GRID = [ExpanderParams(a, b) for a in (0.3, 0.5, 0.8) for b in (0.3, 0.5, 0.8)]
NORMALIZATION_TOL = 1e-9
UNBIASED_TOL = 1e-9
REPRESENTATION_TOL = 1e-10
QUADRATURE_RTOL = 1e-6
EDGE_TOL = 0.05
P8_COUNT = 3.09e7
P5_REFERENCE_SE = 18.3


def record(number: int, title: str, ok: bool, detail: str, started: float) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail}; {time.perf_counter() - started:.1f}s)"
    RESULTS[number] = line
    print(line)
    return ok


def randomized_representations(t: JunctionTree, count: int, seed: int):
    out = []
    for k in range(count):
        for s in sorted(t.distinct_separators(), key=lambda s: (len(s), sorted(s))):
            t = randomize_at_separator(t, s, Stream.keyed(seed, k, len(s)))
        out.append(t)
    return out


# ---------------------------------------------------------------------------


def check_exact_counts() -> bool:
    started = time.perf_counter()
    expected = {2: 2, 3: 8, 4: 61, 5: 822, 6: 18154}
    got = {p: len(enumerate_decomposable(p)) for p in expected}
    elapsed = time.perf_counter() - started
    ok = got == expected and elapsed < 120
    return record(1, "exact enumeration", ok, f"counts {list(got.values())}", started)


def check_mu_equivalence() -> bool:
    started = time.perf_counter()
    mismatches = 0
    variants = 0
    for k, g in enumerate(enumerate_decomposable(5)):
        t = junction_tree_of(g)
        ref = mu_bruteforce(g)
        if mu(t) != ref:
            mismatches += 1
        for r in randomized_representations(t, 5, seed=k):
            variants += 1
            if mu(r) != ref:
                mismatches += 1
    ok = mismatches == 0 and time.perf_counter() - started < 300
    return record(2, "mu oracle equivalence", ok, f"{mismatches} mismatches over 822 graphs and {variants} variants", started)


def check_normalization() -> bool:
    started = time.perf_counter()
    worst = 0.0
    for m in range(1, 5):
        t_next = tree_space(m + 1)
        for prm in GRID:
            for t in tree_space(m):
                worst = max(worst, abs(sum(expander_density(t, tp, prm) for tp in t_next) - 1.0))
        for tp in t_next:
            worst = max(worst, abs(sum(collapser_density(tp, t) for t in tree_space(m)) - 1.0))
    ok = worst < NORMALIZATION_TOL
    return record(3, "kernel normalization", ok, f"max |sum - 1| = {worst:.2e}", started)


def check_support() -> bool:
    started = time.perf_counter()
    prm = ExpanderParams()
    reach = {JunctionTree.trivial(1)}
    reach_ok = True
    for m in range(1, 4):
        nxt = set()
        for t in reach:
            nxt |= set(outcome_distribution(lambda s: expand(t, m + 1, prm, s)[0]))
        reach = nxt
        reach_ok &= reach == set(tree_space(m + 1))
    failures = 0
    for m in range(1, 5):
        for tp in tree_space(m + 1):
            for t in outcome_distribution(lambda s: collapse(tp, m + 1, s)):
                if expander_density(t, tp, prm) <= 0:
                    failures += 1
    ok = reach_ok and failures == 0
    return record(4, "support theorems", ok, f"reachable sets match: {reach_ok}; {failures} collapse outcomes without reverse density", started)


def check_unbiasedness() -> bool:
    started = time.perf_counter()
    errs = []
    for p, count in ((2, 2), (3, 8)):
        errs.append(abs(expected_estimate(uniform_target(p), p, 2, ExpanderParams()) - math.log(count)))
    ok = max(errs) < UNBIASED_TOL
    return record(5, "exact unbiasedness", ok, f"log-space errors {errs[0]:.1e}, {errs[1]:.1e}", started)


def _replicates(p: int, reps: int = 10, n: int = 10000):
    est = [run_smc(uniform_target(p), SMCConfig(p=p, n_particles=n, seed=2024, replicate=r)).estimate for r in range(reps)]
    return float(np.mean(est)), float(np.std(est, ddof=1) / math.sqrt(reps))


def check_smc_counts() -> bool:
    started = time.perf_counter()
    m4, s4 = _replicates(4)
    m5, s5 = _replicates(5)
    m8, s8 = _replicates(8)
    ok4 = abs(m4 - 61) <= 4 * s4
    ok5 = abs(m5 - 822) <= 4 * s5 and P5_REFERENCE_SE / 3 <= s5 <= 3 * P5_REFERENCE_SE
    ok8 = abs(m8 - P8_COUNT) <= 4 * s8
    elapsed = time.perf_counter() - started
    ok = ok4 and ok5 and ok8 and elapsed < 600
    detail = f"p=4 {m4:.1f}+-{s4:.2f}, p=5 {m5:.1f}+-{s5:.2f}, p=8 {m8:.4g}+-{s8:.2g}"
    return record(6, "SMC counting", ok, detail, started)


def path_graph_ggm():
    """Path graph on four vertices, data from epsilon 1, upsilon 0.5, n = 100."""
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4)])
    data, _ = generate_synthetic_ggm(SyntheticGGMSpec(g, epsilon=1.0, upsilon=0.5, n=100, seed=0))
    model = GGMModel(data)
    graphs = enumerate_decomposable(4)
    scores = np.array([model.log_score(junction_tree_of(h)) for h in graphs])
    w = np.exp(scores - logsumexp(scores))
    return model, edge_probabilities(dict(zip(graphs, w)), 4)


def check_ggm_posterior() -> bool:
    started = time.perf_counter()
    model, exact = path_graph_ggm()
    res = run_smc(model, SMCConfig(p=4, n_particles=20000, seed=0))
    _, smc_edges = posterior_summary(res)
    chain = run_particle_gibbs(model, SMCConfig(p=4, n_particles=20, seed=0), 20000, burnin=300)
    pg_edges = edge_probabilities(chain_frequencies(chain), 4)
    e1, e2 = np.abs(smc_edges - exact).max(), np.abs(pg_edges - exact).max()
    ok = e1 <= EDGE_TOL and e2 <= EDGE_TOL and time.perf_counter() - started < 900
    return record(7, "GGM posterior", ok, f"max edge error SMC {e1:.3f}, conditional SMC {e2:.3f}", started)


def check_score_consistency() -> bool:
    started = time.perf_counter()
    g = Graph.from_edges(5, [(1, 2), (2, 3), (2, 4), (4, 5)])
    data, _ = generate_synthetic_ggm(SyntheticGGMSpec(g, epsilon=1.0, upsilon=0.5, n=50, seed=3))
    model = GGMModel(data)
    worst = 0.0
    for k, h in enumerate(enumerate_decomposable(5)):
        t = junction_tree_of(h)
        ref = model.log_score(t)
        for r in randomized_representations(t, 5, seed=k):
            worst = max(worst, abs(model.log_score(r) - ref))

    y = np.array([[0.3], [-1.2], [0.7], [2.1], [-0.4]])
    rel = 0.0
    for phi, df in ((1.0, 1.0), (2.5, 3.0), (0.4, 7.0)):
        one = GGMModel(y, scale=[[phi]], df=df)
        prior = stats.invwishart(df=df, scale=phi)
        f = lambda s: math.exp(stats.norm.logpdf(y[:, 0], scale=math.sqrt(s)).sum() + prior.logpdf(s))
        q, _ = integrate.quad(f, 0, np.inf, limit=200, epsabs=0, epsrel=1e-12)
        rel = max(rel, abs(math.exp(one.log_subset_score(frozenset({1}))) - q) / q)
    ok = worst <= REPRESENTATION_TOL and rel <= QUADRATURE_RTOL
    return record(8, "score consistency", ok, f"representation spread {worst:.1e}, quadrature relative error {rel:.1e}", started)


CHECKS = [
    check_exact_counts,
    check_mu_equivalence,
    check_normalization,
    check_support,
    check_unbiasedness,
    check_smc_counts,
    check_ggm_posterior,
    check_score_consistency,
]


def test_criterion_1_exact_counts():
    assert check_exact_counts(), RESULTS[1]


def test_criterion_2_mu_equivalence():
    assert check_mu_equivalence(), RESULTS[2]


def test_criterion_3_normalization():
    assert check_normalization(), RESULTS[3]


def test_criterion_4_support():
    assert check_support(), RESULTS[4]


def test_criterion_5_unbiasedness():
    assert check_unbiasedness(), RESULTS[5]


def test_criterion_6_smc_counts():
    assert check_smc_counts(), RESULTS[6]


def test_criterion_7_ggm_posterior():
    assert check_ggm_posterior(), RESULTS[7]


def test_criterion_8_score_consistency():
    assert check_score_consistency(), RESULTS[8]


if __name__ == "__main__":
    outcomes = [check() for check in CHECKS]
    sys.exit(0 if all(outcomes) else 1)
