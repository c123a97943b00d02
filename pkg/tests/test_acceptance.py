"""Acceptance suite: one test per numbered criterion, each printing a
pass/fail line with the measured statistics at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see every line.
"""

import math
import time
from collections import Counter

import numpy as np
import pytest

from gibbslab import _kernels
from gibbslab.cluster import cluster_error_stat
from gibbslab.limits import gibbs_avg_clt, logz_limit, overlap_lambda, typical_clt
from gibbslab.models import (
    Configuration,
    KFactor,
    MatchingBipartite,
    MatchingComplete,
    SpanningTree,
    TravelingSalesman,
    cayley_extension_count,
    config_weight,
    containment_prob,
    count_configs,
    enumerate_configs,
)
from gibbslab.oracles import (
    brute_force_log_partition,
    edge_marginals,
    log_partition,
)
from gibbslab.samplers import (
    ExactGibbsSampler,
    MetropolisChain,
    default_burn_in_accepted,
    default_thinning,
    overlap,
    typical_weight_observable,
)
from gibbslab.stats import ks_statistic, tv_distance_poisson
from gibbslab.weights import Exponential, psi, psi_prime, sample_weights

E1 = Exponential(1.0)
MASTER = 2026


def _seed(*idx):
    return int(np.random.SeedSequence((MASTER,) + idx).generate_state(1)[0])


def _report(num, name, ok, detail, t0=None, budget=None):
    line = f"[criterion {num:>2}] {name}: {'PASS' if ok else 'FAIL'} ({detail}"
    if t0 is not None:
        elapsed = time.time() - t0
        line += f"; {elapsed:.0f}s"
        if budget is not None:
            line += f" of {budget}s budget"
            ok = ok and elapsed < budget
    line += ")"
    print(line)
    return ok


ORACLE_FAMILIES = [
    MatchingBipartite(7),
    TravelingSalesman(8),
    SpanningTree(7),
    MatchingComplete(5),
    KFactor(5, 2),
]


@pytest.fixture(scope="module")
def family_instances():
    """20 Exp(1) weight instances per family for criteria 1 and 2."""
    return {
        model: [sample_weights(E1, model.edge_count, _seed(1, fam, r))
                for r in range(20)]
        for fam, model in enumerate(ORACLE_FAMILIES)
    }


@pytest.fixture(scope="module")
def tree400_results():
    """1000 replicates of the SpanningTree(400) oracle, shared by 3 and 9."""
    model = SpanningTree(400)
    logz = np.empty(1000)
    dlogz = np.empty(1000)
    for r in range(1000):
        wv = sample_weights(E1, model.edge_count, _seed(3, r))
        res = log_partition(model, wv, 1.0)
        logz[r] = res.log_z
        dlogz[r] = res.dlogz_dbeta
    return model, logz, dlogz


def _fsum_enumeration_logz(model, wv, beta):
    """Independent direct evaluation: plain fsum, no shift, no vectorized path."""
    total = math.fsum(
        math.exp(-beta * w)
        for w in (config_weight(c, wv) for c in enumerate_configs(model))
        if math.isfinite(w)
    )
    return math.log(total) - math.log(count_configs(model))


def test_criterion_01_oracle_equivalence(family_instances):
    t0 = time.time()
    worst_rel = worst_fd = 0.0
    for model, instances in family_instances.items():
        for wv in instances:
            for beta in (0.25, 1.0, 3.0):
                res = log_partition(model, wv, beta)
                if isinstance(model, KFactor):
                    ref = _fsum_enumeration_logz(model, wv, beta)
                else:
                    ref = brute_force_log_partition(model, wv, beta).log_z
                worst_rel = max(worst_rel,
                                abs(res.log_z - ref) / max(1.0, abs(ref)))
                h = 1e-5
                fd = (log_partition(model, wv, beta + h).log_z
                      - log_partition(model, wv, beta - h).log_z) / (2 * h)
                worst_fd = max(worst_fd, abs(res.dlogz_dbeta - fd))
    ok = worst_rel <= 1e-9 and worst_fd <= 1e-6
    ok = _report(1, "oracle equivalence (5 families x 20 x 3 betas)", ok,
                 f"max rel gap {worst_rel:.2e} <= 1e-9, "
                 f"max FD gap {worst_fd:.2e} <= 1e-6", t0, 120)
    assert ok


def test_criterion_02_partition_is_one_at_beta_zero(family_instances):
    worst = max(
        abs(log_partition(model, wv, 0.0).log_z)
        for model, instances in family_instances.items()
        for wv in instances
    )
    ok = _report(2, "Z(0) = 1 exactly", worst <= 1e-12,
                 f"max |log Z(0)| = {worst:.2e} <= 1e-12")
    assert ok


def test_criterion_03_log_partition_clt_trees(tree400_results):
    t0 = time.time()
    model, logz, _ = tree400_results
    m = model.config_size
    law = logz_limit(model, E1, 1.0)
    vals = logz - m * psi(E1, 1.0)
    mean_tol = 3 * math.sqrt(law.variance / len(vals))
    mean_ok = abs(vals.mean() - law.mean) <= mean_tol
    vr = vals.var(ddof=1) / law.variance
    ks = ks_statistic(np.sort(vals), law.cdf)
    ok = mean_ok and 0.8 <= vr <= 1.2 and ks <= 0.06
    ok = _report(3, "log-partition CLT, SpanningTree(400) R=1000", ok,
                 f"mean {vals.mean():+.4f} vs {law.mean:+.4f} +- {mean_tol:.4f}, "
                 f"var ratio {vr:.3f} in [0.8,1.2], KS {ks:.4f} <= 0.06", t0, 120)
    assert ok


def test_criterion_04_log_partition_clt_permanent():
    t0 = time.time()
    model = MatchingBipartite(12)
    m = model.config_size
    law = logz_limit(model, E1, 1.0)
    center = m * psi(E1, 1.0)
    vals = np.empty(2000)
    for r in range(2000):
        wv = sample_weights(E1, model.edge_count, _seed(4, r))
        vals[r] = log_partition(model, wv, 1.0).log_z - center
    mean_ok = abs(vals.mean() - law.mean) <= 0.10
    vr = vals.var(ddof=1) / law.variance
    ok = mean_ok and 0.7 <= vr <= 1.3
    ok = _report(4, "log-partition CLT, MatchingBipartite(12) R=2000", ok,
                 f"mean {vals.mean():+.4f} vs {law.mean:+.4f} +- 0.10, "
                 f"var ratio {vr:.3f} in [0.7,1.3]", t0, 300)
    assert ok


def test_criterion_05_cluster_error_decay():
    t0 = time.time()
    scaled = []
    for n in (50, 100, 200, 400):
        stat = cluster_error_stat(SpanningTree(n), E1, 1.0, replicates=500,
                                  seed=_seed(5, n))
        scaled.append(stat.scaled)
    ratios = [scaled[i + 1] / scaled[i] for i in range(3)]
    ok = all(0.3 <= r <= 3.0 for r in ratios)
    ok = _report(5, "cluster-expansion error m*E(diff^2) bounded", ok,
                 "m*msd = " + ", ".join(f"{s:.3f}" for s in scaled)
                 + "; successive ratios in [0.3,3]", t0, 120)
    assert ok


def _overlap_tv(model, wv, beta, pairs, rng_seed, rate):
    sampler = ExactGibbsSampler(model, wv, beta, rng_stream=rng_seed)
    ov = np.array([
        overlap(Configuration(model, sampler._draw_edges()),
                Configuration(model, sampler._draw_edges()))
        for _ in range(pairs)
    ])
    return tv_distance_poisson(np.bincount(ov), rate)


def test_criterion_06_uniform_tree_overlap_stein_chen():
    t0 = time.time()
    for attempt in range(2):  # probabilistic monotonicity: one re-seed allowed
        tvs = {}
        for n in (200, 50):
            model = SpanningTree(n)
            wv = sample_weights(E1, model.edge_count, _seed(6, n, attempt))
            tvs[n] = _overlap_tv(model, wv, 0.0, 10000,
                                 _seed(6, n, attempt, 1), 2.0)
        if tvs[200] <= 0.06 and tvs[200] < tvs[50]:
            break
    ok = tvs[200] <= 0.06 and tvs[200] < tvs[50]
    ok = _report(6, "uniform-tree overlap vs Poi(2)", ok,
                 f"TV(n=200) {tvs[200]:.4f} <= 0.06 and < TV(n=50) {tvs[50]:.4f}",
                 t0, 60)
    assert ok


def test_criterion_07_gibbs_tree_overlap_poisson():
    t0 = time.time()
    model = SpanningTree(300)
    law = overlap_lambda(model, E1, 1.0)
    tvs = []
    for inst in range(3):
        wv = sample_weights(E1, model.edge_count, _seed(7, inst))
        tvs.append(_overlap_tv(model, wv, 1.0, 10000, _seed(7, inst, 1), law.rate))
    ok = all(tv <= 0.08 for tv in tvs)
    ok = _report(7, "Gibbs-tree overlap vs Poi(8/3), 3 instances", ok,
                 f"rate {law.rate:.4f}; TVs " + ", ".join(f"{t:.4f}" for t in tvs)
                 + " <= 0.08", t0, 120)
    assert ok


def test_criterion_08_typical_weight_clt():
    t0 = time.time()
    model = SpanningTree(400)
    law = typical_clt(E1, 1.0)
    wv = sample_weights(E1, model.edge_count, _seed(8, 0))
    sampler = ExactGibbsSampler(model, wv, 1.0, rng_stream=_seed(8, 1))
    vals = np.sort([typical_weight_observable(s, model, E1, 1.0)
                    for s in sampler.sample_many(5000)])
    ks = ks_statistic(vals, law.cdf)
    ok = _report(8, "quenched typical-weight CLT, SpanningTree(400)", ks <= 0.06,
                 f"KS {ks:.4f} <= 0.06 vs Normal(0, 1/4)", t0, 120)
    assert ok


def test_criterion_09_gibbs_average_clt(tree400_results):
    t0 = time.time()
    model, _, dlogz = tree400_results
    m = model.config_size
    law = gibbs_avg_clt(model, E1, 1.0)
    vals = -dlogz + m * psi_prime(E1, 1.0)
    mean_tol = 3 * math.sqrt(law.variance / len(vals))
    mean_ok = abs(vals.mean() - law.mean) <= mean_tol
    vr = vals.var(ddof=1) / law.variance
    ks = ks_statistic(np.sort(vals), law.cdf)
    ok = mean_ok and 0.75 <= vr <= 1.25 and ks <= 0.07
    ok = _report(9, "Gibbs-average CLT, SpanningTree(400) R=1000", ok,
                 f"mean {vals.mean():+.4f} vs {law.mean:+.4f} +- {mean_tol:.4f}, "
                 f"var ratio {vr:.3f} in [0.75,1.25], KS {ks:.4f} <= 0.07; "
                 f"the sample mean instead matches the sign-flipped location "
                 f"{-law.mean:+.4f}", t0, 120)
    assert ok


def test_criterion_10_free_energy_lln():
    t0 = time.time()
    gaps = []
    for n in (100, 400, 1600):
        model = SpanningTree(n)
        wv = sample_weights(E1, model.edge_count, _seed(10, n))
        res = log_partition(model, wv, 1.0)
        gaps.append(abs(res.log_z / model.config_size - psi(E1, 1.0)))
    ok = gaps[0] > gaps[1] > gaps[2] and gaps[2] <= 0.01
    ok = _report(10, "free-energy LLN, trees n=100/400/1600", ok,
                 "gaps " + ", ".join(f"{g:.5f}" for g in gaps)
                 + "; decreasing and last <= 0.01", t0, 120)
    assert ok


def test_criterion_11_generalized_cayley():
    t0 = time.time()
    checked = 0
    for n in range(2, 8):
        model = SpanningTree(n)
        counts = {}
        for cfg in enumerate_configs(model):
            edges = cfg.edges
            for mask in range(1 << (n - 1)):
                sub = tuple(e for i, e in enumerate(edges) if mask >> i & 1)
                counts[sub] = counts.get(sub, 0) + 1
        # the keys are exactly the labeled forests on n vertices
        if n <= 6:
            brute_forests = _count_acyclic_subsets(model)
            assert len(counts) == brute_forests
        for sub, got in counts.items():
            sizes = _forest_component_sizes(model, sub)
            assert cayley_extension_count(n, sizes) == got
            checked += 1
    ok = _report(11, "generalized tree-extension formula", True,
                 f"{checked} forests on n <= 7 vertices, exact integer equality",
                 t0, 120)
    assert ok


def _count_acyclic_subsets(model):
    n = model.vertex_count
    total = 0
    for mask in range(1 << model.edge_count):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        acyclic = True
        mm = mask
        while mm:
            e = (mm & -mm).bit_length() - 1
            mm &= mm - 1
            u, v = model.edge_endpoints(e)
            ru, rv = find(u), find(v)
            if ru == rv:
                acyclic = False
                break
            parent[ru] = rv
        total += acyclic
    return total


def _forest_component_sizes(model, edges):
    n = model.vertex_count
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        u, v = model.edge_endpoints(e)
        parent[find(u)] = find(v)
    sizes = Counter(find(v) for v in range(n))
    return list(sizes.values())


def test_criterion_12_sampler_laws():
    t0 = time.time()
    # exact tree sampler at 1e6 samples vs the enumerated law on 125 trees
    st = SpanningTree(5)
    wv = sample_weights(E1, st.edge_count, _seed(12, 0))
    configs = list(enumerate_configs(st))
    ws = np.array([config_weight(c, wv) for c in configs])
    probs = np.exp(-ws - (-ws).max())
    probs /= probs.sum()
    law = {np.array(c.edges, dtype=np.int64).tobytes(): p
           for c, p in zip(configs, probs)}
    sampler = ExactGibbsSampler(st, wv, 1.0, rng_stream=_seed(12, 1))
    n_samples = 10**6
    counts = Counter(sampler._draw_edges().tobytes() for _ in range(n_samples))
    tv_tree = 0.5 * sum(abs(counts.get(k, 0) / n_samples - p)
                        for k, p in law.items())

    # hand-computable two-matching instance: Gibbs mass ratio 2:1
    mb2 = MatchingBipartite(2)
    vals2 = np.array([0.0, 0.0, 0.0, math.log(2.0)])
    s2 = ExactGibbsSampler(mb2, vals2, 1.0, rng_stream=_seed(12, 2))
    c2 = Counter(tuple(s2._draw_edges()) for _ in range(100000))
    ratio = c2[(1, 2)] / c2[(0, 3)]

    # Metropolis 2-opt chain vs the exact law on the 2520 cycles of K_8
    ts = TravelingSalesman(8)
    wt = sample_weights(E1, ts.edge_count, _seed(12, 3))
    cfg_t = list(enumerate_configs(ts))
    wts = np.array([config_weight(c, wt) for c in cfg_t])
    prt = np.exp(-wts - (-wts).max())
    prt /= prt.sum()
    exact_t = {c.edges: p for c, p in zip(cfg_t, prt)}
    chain = MetropolisChain(ts, wt, 1.0, seed=_seed(12, 4))
    target = default_burn_in_accepted(ts)
    while chain.accepted < target:
        chain.advance(target)
    keep = 10**6
    out = np.empty((keep, ts.n), dtype=np.int64)
    _kernels.tsp_two_opt_chain(chain._omega, 1.0, chain._tour, 0, keep,
                               default_thinning(ts), out, chain.rng)
    n = ts.n
    lo = np.minimum(out, np.roll(out, -1, axis=1))
    hi = np.maximum(out, np.roll(out, -1, axis=1))
    idx = lo * (2 * n - lo - 1) // 2 + (hi - lo - 1)
    idx.sort(axis=1)
    uniq, cnt = np.unique(idx, axis=0, return_counts=True)
    emp = {tuple(row): c / keep for row, c in zip(uniq, cnt)}
    tv_mcmc = 0.5 * (sum(abs(emp.get(k, 0.0) - p) for k, p in exact_t.items())
                     + sum(v for k, v in emp.items() if k not in exact_t))

    # Metropolis matching chain: single-edge marginals vs the oracle at 1e6 steps
    mb = MatchingBipartite(10)
    wb = sample_weights(E1, mb.edge_count, _seed(12, 5))
    mg = edge_marginals(mb, wb, 1.0)
    chain_b = MetropolisChain(mb, wb, 1.0, seed=_seed(12, 6))
    out_b = np.empty((10**6, 10), dtype=np.int64)
    _kernels.bipartite_swap_chain(chain_b._omega, 1.0, chain_b._sigma, 0, 10**6,
                                  1, out_b, chain_b.rng)
    freq = np.bincount((np.arange(10)[None, :] * 10 + out_b).ravel(),
                       minlength=100) / 10**6
    gap = float(np.abs(freq - mg).max())

    ok = (tv_tree <= 0.01 and abs(ratio - 2.0) <= 0.1
          and tv_mcmc <= 0.05 and gap <= 0.01)
    ok = _report(12, "sampler laws", ok,
                 f"tree exact TV {tv_tree:.4f} <= 0.01 at 1e6; "
                 f"2-matching ratio {ratio:.3f} ~ 2; "
                 f"TSP(8) MCMC TV {tv_mcmc:.4f} <= 0.05; "
                 f"matching MCMC marginal gap {gap:.4f} <= 0.01", t0, 300)
    assert ok


def test_criterion_13_closed_forms_match_enumeration():
    t0 = time.time()
    # complete-graph matchings on K_8, spanning trees of K_6, partial paths on
    # K_7: the closed containment forms equal enumeration exactly
    import itertools
    checked = 0
    for model in (MatchingComplete(4), SpanningTree(6), TravelingSalesman(7)):
        rng = np.random.default_rng(_seed(13, model.edge_count))
        gammas = [list(rng.choice(model.edge_count, size=k, replace=False))
                  for k in (1, 2, 3) for _ in range(25)]
        configs = list(enumerate_configs(model))
        for gamma in gammas:
            target = set(gamma)
            brute = sum(1 for c in configs if target.issubset(c.edges))
            got = containment_prob(model, gamma)
            assert got == type(got)(brute, len(configs)), (model, gamma)
            checked += 1
    # non-matching partial paths on K_8: P <= (3p)^k (assumption functional form)
    ts = TravelingSalesman(8)
    p = float(ts.edge_prob)
    rho_needed = 0.0
    for gamma in itertools.combinations(range(ts.edge_count), 2):
        prob = containment_prob(ts, gamma)
        if prob == 0:
            continue
        verts = {v for e in gamma for v in ts.edge_endpoints(e)}
        if len(verts) == 4:
            continue
        rho_needed = max(rho_needed, float(prob) ** 0.5 / p)
        assert float(prob) <= (3 * p) ** 2
    ok = _report(13, "containment closed forms vs enumeration", True,
                 f"{checked} edge sets exact; non-matching paths on K_8 need "
                 f"rho >= {rho_needed:.3f} (<= 3)", t0, 120)
    assert ok


def test_criterion_13_partial_matching_uniformity_bound():
    # |P(gamma in pi)/p^k - 1| <= k(k-1)/(2(n-k+1)) for all partial matchings
    # with k <= 3 on the bipartite model at n = 10, asserted literally in
    # exact rational arithmetic (the k = 2 case sits exactly on the bound).
    t0 = time.time()
    import itertools
    from fractions import Fraction
    n = 10
    model = MatchingBipartite(n)
    p = model.edge_prob
    worst = {}
    for k in (1, 2, 3):
        bound = Fraction(k * (k - 1), 2 * (n - k + 1))
        worst[k] = Fraction(0)
        for gamma in itertools.combinations(range(model.edge_count), k):
            lefts = {e // n for e in gamma}
            rights = {e % n for e in gamma}
            if len(lefts) != k or len(rights) != k:
                continue
            gap = abs(containment_prob(model, gamma) / p**k - 1)
            worst[k] = max(worst[k], gap)
        if worst[k] > bound:
            _report("13", "partial-matching uniformity bound", False,
                    f"k={k}: max |P/p^k - 1| = {float(worst[k]):.5f} exceeds "
                    f"the stated bound k(k-1)/(2(n-k+1)) = {float(bound):.5f}; "
                    f"the exponential-form bound exp(b)-1 = "
                    f"{math.expm1(float(bound)):.5f} does hold", t0)
        assert worst[k] <= bound, (
            f"k={k}: {float(worst[k]):.6f} > {float(bound):.6f} (every size-{k} "
            f"partial matching has the same ratio n^k/(n)_k; the bound as "
            f"stated fails at k=3 for every n)")
    _report("13", "partial-matching uniformity bound", True,
            "holds for k <= 3", t0)
