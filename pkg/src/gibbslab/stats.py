"""Replicated experiments and the statistics that test the limit laws.

An ExperimentSpec names an observable, a model, a weight law, beta, and
replication sizes; run_experiment executes it on deterministic per-replicate
substreams and assembles an ExperimentReport holding the raw values, the
predicted limit law, and the fitted statistics (KS distance for normal
limits, total-variation distance for Poisson limits, mean z-score, variance
ratio).

Observables:
  LOGZ            log Z - m psi(beta), one value per weight replicate;
  GIBBSAVG        <W> + m psi'(beta) via the exact oracle derivative;
  CLUSTER         linear surrogate error prod(1+p xi) - Zhat per replicate;
  OVERLAP         |pi ^ pi'| over independent Gibbs pairs, quenched;
  TYPICAL         (W + m psi'(beta))/sqrt(m) over Gibbs samples, quenched;
  FREE_ENERGY_LLN (1/m) log Z - psi(beta), one value per weight replicate;
  UST_STEIN_CHEN  overlap of uniform spanning trees (beta = 0) vs Poi(2).

Quenched observables default to 3 independent weight instances, reported
per instance. Annealed replicate loops run on a thread pool; aggregation is
by replicate index, so reports are bit-reproducible for a fixed spec.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson as _poisson

from .cluster import log_product
from .errors import AllInfiniteError, GibbsLabError
from .limits import (
    LimitLaw,
    gibbs_avg_clt,
    logz_limit,
    overlap_lambda,
    typical_clt,
)
from .models import ProblemModel, SpanningTree
from .oracles import log_partition
from .samplers import ExactGibbsSampler, mcmc_samples, overlap, typical_weight_observable
from .weights import WeightDistribution, psi, psi_prime, sample_weights

__all__ = [
    "OBSERVABLES",
    "ExperimentSpec",
    "InstanceResult",
    "ExperimentReport",
    "run_experiment",
    "ks_statistic",
    "tv_distance_poisson",
    "write_values_csv",
    "write_summary_json",
]

OBSERVABLES = ("LOGZ", "GIBBSAVG", "CLUSTER", "OVERLAP", "TYPICAL",
               "FREE_ENERGY_LLN", "UST_STEIN_CHEN")

# Default acceptance thresholds: chosen to fail on wrong limit constants while
# passing a correct implementation at the default replication sizes.
MEAN_Z_LIMIT = 3.0
VAR_RATIO_BAND = (0.8, 1.2)
KS_LIMIT = 0.06
TV_LIMIT = {"OVERLAP": 0.08, "UST_STEIN_CHEN": 0.06}
_MOMENT_CHECK_MIN_N = 1000


def ks_statistic(samples, cdf, discrete: bool = False) -> float:
    """Kolmogorov-Smirnov sup distance of sorted samples to a target cdf.

    The default evaluates both sides of each empirical jump (the classical
    statistic for continuous targets). With discrete=True only the
    right-continuous side is compared, the correct sup for atomic targets
    whose jumps sit at the sample values.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        raise ValueError("need at least 2 samples")
    if np.any(np.diff(arr) < 0):
        raise ValueError("samples must be sorted ascending")
    n = arr.size
    f = np.asarray(cdf(arr), dtype=float)
    grid = np.arange(n)
    if discrete:
        last = np.r_[arr[:-1] != arr[1:], True]  # last index of each tie group
        return float(np.abs((grid + 1)[last] / n - f[last]).max())
    return float(np.maximum(f - grid / n, (grid + 1) / n - f).max())


def tv_distance_poisson(counts, lam: float) -> float:
    """Total-variation distance of a histogram to Poisson(lam).

    counts[k] is the number of observations equal to k; Poisson mass beyond
    the histogram support is folded into the distance.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    hist = np.asarray(counts, dtype=float)
    if hist.ndim != 1 or hist.size == 0 or hist.sum() <= 0:
        raise ValueError("need a nonempty histogram")
    emp = hist / hist.sum()
    ks = np.arange(hist.size)
    pmf = _poisson.pmf(ks, lam)
    tail = float(_poisson.sf(hist.size - 1, lam))
    return 0.5 * (float(np.abs(emp - pmf).sum()) + tail)


@dataclass(frozen=True)
class ExperimentSpec:
    observable: str
    model: ProblemModel
    dist: WeightDistribution
    beta: float
    replicates: int = 1000
    gibbs_samples: int = 5000
    pairs: int = 10000
    weight_instances: int = 3
    sampler: str = "exact"  # or "mcmc"
    seed: int = 0
    # execution detail: affects scheduling, never values; excluded from identity
    threads: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.observable not in OBSERVABLES:
            raise ValueError(
                f"unknown observable {self.observable!r}; valid: {OBSERVABLES}")
        if self.sampler not in ("exact", "mcmc"):
            raise ValueError(f"sampler must be 'exact' or 'mcmc', got {self.sampler}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        for name in ("replicates", "gibbs_samples", "pairs", "weight_instances"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.observable == "UST_STEIN_CHEN":
            if not isinstance(self.model, SpanningTree):
                raise ValueError("UST_STEIN_CHEN runs on spanning trees")
            if self.beta != 0.0:
                raise ValueError("UST_STEIN_CHEN is a beta = 0 experiment")

    def to_dict(self) -> dict:
        return {
            "observable": self.observable,
            "model": self.model.descriptor(),
            "dist": self.dist.descriptor(),
            "beta": self.beta,
            "replicates": self.replicates,
            "gibbs_samples": self.gibbs_samples,
            "pairs": self.pairs,
            "weight_instances": self.weight_instances,
            "sampler": self.sampler,
            "seed": self.seed,
        }


def spec_from_dict(data: dict) -> ExperimentSpec:
    """Rebuild a spec from a persisted summary, so any run is regenerable."""
    from .models import model_from_string
    from .weights import distribution_from_string

    return ExperimentSpec(
        observable=data["observable"],
        model=model_from_string(data["model"]),
        dist=distribution_from_string(data["dist"]),
        beta=float(data["beta"]),
        replicates=int(data["replicates"]),
        gibbs_samples=int(data["gibbs_samples"]),
        pairs=int(data["pairs"]),
        weight_instances=int(data["weight_instances"]),
        sampler=data["sampler"],
        seed=int(data["seed"]),
    )


@dataclass
class InstanceResult:
    instance: int
    weight_seed: int | None
    values: np.ndarray
    dropped: int = 0
    ks_stat: float | None = None
    tv_stat: float | None = None
    mean_z: float | None = None
    var_ratio: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    predicted: LimitLaw | None
    instances: list[InstanceResult]
    runtime_ms: float
    checks: dict[str, bool]

    @property
    def dropped_replicates(self) -> int:
        return sum(inst.dropped for inst in self.instances)

    @property
    def values(self) -> np.ndarray:
        """All replicate values, annealed observables have one instance."""
        return np.concatenate([inst.values for inst in self.instances])

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _substream_seed(master: int, *idx: int) -> int:
    return int(np.random.SeedSequence((master,) + idx).generate_state(1)[0])


def _fit_stats(inst: InstanceResult, law: LimitLaw | None, observable: str):
    vals = inst.values
    if law is None or vals.size < 2:
        return
    n = vals.size
    if law.kind == "normal":
        if law.variance > 0:
            inst.mean_z = float((vals.mean() - law.mean)
                                / math.sqrt(law.variance / n))
            inst.var_ratio = float(vals.var(ddof=1) / law.variance)
            inst.ks_stat = ks_statistic(np.sort(vals), law.cdf)
    else:
        counts = np.bincount(vals.astype(int))
        inst.tv_stat = tv_distance_poisson(counts, law.rate)
        inst.mean_z = float((vals.mean() - law.rate) / math.sqrt(law.rate / n))


def _default_checks(report_kind: str, instances: list[InstanceResult],
                    law: LimitLaw | None) -> dict[str, bool]:
    checks: dict[str, bool] = {}
    if law is None:
        return checks
    for inst in instances:
        tag = f"i{inst.instance}" if len(instances) > 1 else "all"
        n = inst.values.size
        if law.kind == "normal":
            # TYPICAL is quenched: its per-instance location carries a real
            # O(1/sqrt(m)) offset, so a mean z-test fails by construction as
            # samples grow; the distributional KS check is the honest one.
            if inst.mean_z is not None and report_kind != "TYPICAL":
                checks[f"mean_z[{tag}]"] = abs(inst.mean_z) <= MEAN_Z_LIMIT
            if (inst.var_ratio is not None and n >= _MOMENT_CHECK_MIN_N
                    and report_kind != "TYPICAL"):
                lo, hi = VAR_RATIO_BAND
                checks[f"var_ratio[{tag}]"] = lo <= inst.var_ratio <= hi
            if inst.ks_stat is not None and n >= _MOMENT_CHECK_MIN_N:
                checks[f"ks[{tag}]"] = inst.ks_stat <= KS_LIMIT
        else:
            limit = TV_LIMIT.get(report_kind, 0.08)
            if inst.tv_stat is not None:
                checks[f"tv[{tag}]"] = inst.tv_stat <= limit
    return checks


def _replicate_map(fn, replicates: int, threads: int | None):
    """Index-ordered map over replicates, optionally on a thread pool."""
    threads = threads if threads is not None else _default_threads()
    if threads <= 1:
        return [fn(r) for r in range(replicates)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replicates)))


def _default_threads() -> int:
    env = os.environ.get("GIBBSLAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# -- observable drivers -------------------------------------------------------


def _per_weight_replicate(spec: ExperimentSpec, value_fn) -> InstanceResult:
    model, dist = spec.model, spec.dist

    def one(r: int):
        wseed = _substream_seed(spec.seed, 0, r)
        wv = sample_weights(dist, model.edge_count, wseed)
        result = log_partition(model, wv, spec.beta)
        if result.all_infinite:
            return None
        return value_fn(result, wv)

    out = _replicate_map(one, spec.replicates, spec.threads)
    vals = np.array([v for v in out if v is not None], dtype=float)
    return InstanceResult(instance=0, weight_seed=spec.seed, values=vals,
                          dropped=sum(v is None for v in out))


def _gibbs_sampler_values(spec: ExperimentSpec, instance: int, count: int,
                          value_fn, paired: bool = False) -> InstanceResult:
    """Draw `count` Gibbs samples for one weight instance and reduce them.

    With paired=True the first and second halves must be independent of each
    other: exact samplers are i.i.d. anyway, but a Metropolis chain is
    autocorrelated, so the two halves come from two independent chains.
    """
    model, dist = spec.model, spec.dist
    wseed = _substream_seed(spec.seed, 1, instance)
    wv = sample_weights(dist, model.edge_count, wseed)
    gseed = _substream_seed(spec.seed, 2, instance)
    try:
        if spec.sampler == "mcmc":
            if paired:
                half = count // 2
                samples = mcmc_samples(model, wv, spec.beta, half, seed=gseed)
                samples += mcmc_samples(model, wv, spec.beta, count - half,
                                        seed=_substream_seed(spec.seed, 3, instance))
            else:
                samples = mcmc_samples(model, wv, spec.beta, count, seed=gseed)
        else:
            sampler = ExactGibbsSampler(model, wv, spec.beta, gseed)
            samples = sampler.sample_many(count)
    except AllInfiniteError:
        # censored weights can kill every configuration of an instance;
        # the whole instance is dropped and reported, never silently skipped
        return InstanceResult(instance=instance, weight_seed=wseed,
                              values=np.empty(0), dropped=1)
    return InstanceResult(instance=instance, weight_seed=wseed,
                          values=np.asarray(value_fn(samples, wv), dtype=float))


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Execute the spec and fit its statistics against the predicted law."""
    t0 = time.perf_counter()
    model, dist, beta = spec.model, spec.dist, spec.beta
    m = model.config_size
    law: LimitLaw | None
    instances: list[InstanceResult]

    if spec.observable == "LOGZ":
        law = logz_limit(model, dist, beta)
        center = m * psi(dist, beta)
        instances = [_per_weight_replicate(
            spec, lambda res, wv: res.log_z - center)]

    elif spec.observable == "GIBBSAVG":
        law = gibbs_avg_clt(model, dist, beta)
        center = m * psi_prime(dist, beta)
        instances = [_per_weight_replicate(
            spec, lambda res, wv: -res.dlogz_dbeta + center)]

    elif spec.observable == "FREE_ENERGY_LLN":
        law = None
        target = psi(dist, beta)
        instances = [_per_weight_replicate(
            spec, lambda res, wv: res.log_z / m - target)]
        instances[0].extra["max_abs_gap"] = (
            float(np.abs(instances[0].values).max()) if instances[0].values.size else
            math.nan)

    elif spec.observable == "CLUSTER":
        law = None
        p = float(model.edge_prob)

        def cluster_diff(res, wv):
            lz = res.log_z - m * psi(dist, beta)
            lp = log_product(wv, beta, p, dist)
            return math.exp(lz) * math.expm1(lp - lz)

        instances = [_per_weight_replicate(spec, cluster_diff)]
        vals = instances[0].values
        instances[0].extra["m_mean_sq_diff"] = float(m * np.mean(vals**2))

    elif spec.observable in ("OVERLAP", "UST_STEIN_CHEN"):
        law = overlap_lambda(model, dist, beta)
        n_inst = 1 if spec.observable == "UST_STEIN_CHEN" else spec.weight_instances

        def overlaps(samples, wv):
            pairs = zip(samples[:len(samples) // 2], samples[len(samples) // 2:])
            return [overlap(a.config, b.config) for a, b in pairs]

        instances = [
            _gibbs_sampler_values(spec, i, 2 * spec.pairs, overlaps, paired=True)
            for i in range(n_inst)
        ]

    elif spec.observable == "TYPICAL":
        law = typical_clt(dist, beta)

        def typicals(samples, wv):
            return [typical_weight_observable(s, model, dist, beta) for s in samples]

        instances = [
            _gibbs_sampler_values(spec, i, spec.gibbs_samples, typicals)
            for i in range(spec.weight_instances)
        ]

    else:  # pragma: no cover - guarded by ExperimentSpec validation
        raise GibbsLabError(f"unhandled observable {spec.observable}")

    for inst in instances:
        _fit_stats(inst, law, spec.observable)
    checks = _default_checks(spec.observable, instances, law)
    if all(inst.values.size == 0 for inst in instances):
        checks["has_data"] = False
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    return ExperimentReport(spec=spec, predicted=law, instances=instances,
                            runtime_ms=runtime_ms, checks=checks)


# -- persistence ---------------------------------------------------------------


def write_values_csv(report: ExperimentReport, path) -> None:
    """Raw replicate values, one row each; floats carry 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("instance,replicate,value\n")
        for inst in report.instances:
            for r, v in enumerate(inst.values):
                fh.write(f"{inst.instance},{r},{v:.17g}\n")


def write_summary_json(report: ExperimentReport, path) -> None:
    """Self-contained summary: spec echo, law, statistics, checks."""
    payload = {
        "spec": report.spec.to_dict(),
        "predicted": report.predicted.to_dict() if report.predicted else None,
        "instances": [
            {
                "instance": inst.instance,
                "weight_seed": inst.weight_seed,
                "n_values": int(inst.values.size),
                "dropped": inst.dropped,
                "mean": float(inst.values.mean()) if inst.values.size else None,
                "variance": float(inst.values.var(ddof=1)) if inst.values.size > 1 else None,
                "ks_stat": inst.ks_stat,
                "tv_stat": inst.tv_stat,
                "mean_z": inst.mean_z,
                "var_ratio": inst.var_ratio,
                **inst.extra,
            }
            for inst in report.instances
        ],
        "dropped_replicates": report.dropped_replicates,
        "checks": report.checks,
        "passed": report.passed,
        "runtime_ms": report.runtime_ms,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
