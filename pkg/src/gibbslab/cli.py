"""Command-line interface.

Subcommands:
  oracle    exact log Z / derivative for one sampled instance;
  sample    draw Gibbs samples, emit observables as CSV;
  limits    print the predicted limit-law parameters for a spec;
  verify    run a replicated experiment, write CSV/JSON, exit 0 iff it passes;
  selftest  tiny-size oracle-equivalence and sampler suite.

Configuration comes from flags, optionally seeded by a JSON config file
(--config); flags override file values; unknown config keys are rejected.
Exit codes: 0 pass, 1 statistical fail, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from ._tuning import tune_allocator
from .errors import GibbsLabError
from .limits import gibbs_avg_clt, logz_limit, overlap_lambda, typical_clt
from .models import ProblemModel, model_from_descriptor
from .oracles import brute_force_log_partition, log_partition
from .samplers import ExactGibbsSampler, mcmc_samples, typical_weight_observable
from .stats import (
    ExperimentSpec,
    run_experiment,
    write_summary_json,
    write_values_csv,
)
from .weights import (
    Exponential,
    WeightDistribution,
    distribution_from_string,
    sample_weights,
)

_OBSERVABLE_NAMES = {
    "logz": "LOGZ",
    "gibbsavg": "GIBBSAVG",
    "cluster": "CLUSTER",
    "overlap": "OVERLAP",
    "typical": "TYPICAL",
    "free-energy": "FREE_ENERGY_LLN",
    "ust-stein-chen": "UST_STEIN_CHEN",
}

_CONFIG_KEYS = {
    "observable", "model", "n", "k", "dist", "beta", "replicates",
    "gibbs_samples", "pairs", "instances", "sampler", "seed", "threads",
    "out_csv", "out_json",
}


def parse_distribution(text: str) -> WeightDistribution:
    """exp:RATE | uniform:LOW:HIGH | censored:<base descriptor>:KEEP_PROB"""
    try:
        return distribution_from_string(text)
    except (ValueError, TypeError) as exc:
        raise GibbsLabError(f"bad distribution {text!r}: {exc}") from exc


def _build_model(args) -> ProblemModel:
    if args.model is None:
        raise GibbsLabError("missing required option --model")
    if args.n is None:
        raise GibbsLabError("missing required option --n")
    return model_from_descriptor(args.model, args.n, args.k)


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the JSON config file; reject unknown keys."""
    if not getattr(args, "config", None):
        return args
    with open(args.config, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise GibbsLabError(
            f"unknown config keys {sorted(unknown)}; valid: {sorted(_CONFIG_KEYS)}")
    for key, value in data.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    obs = args.observable
    if obs is None:
        raise GibbsLabError("missing required option --observable")
    canon = _OBSERVABLE_NAMES.get(str(obs).lower())
    if canon is None:
        raise GibbsLabError(
            f"unknown observable {obs!r}; valid: {sorted(_OBSERVABLE_NAMES)}")
    if args.dist is None:
        raise GibbsLabError("missing required option --dist")
    dist = (args.dist if isinstance(args.dist, WeightDistribution)
            else parse_distribution(args.dist))
    beta = 0.0 if canon == "UST_STEIN_CHEN" and args.beta is None else args.beta
    if beta is None:
        raise GibbsLabError("missing required option --beta")
    try:
        return ExperimentSpec(
            observable=canon,
            model=_build_model(args),
            dist=dist,
            beta=float(beta),
            replicates=args.replicates or 1000,
            gibbs_samples=args.gibbs_samples or 5000,
            pairs=args.pairs or 10000,
            weight_instances=args.instances or 3,
            sampler=args.sampler or "exact",
            seed=args.seed if args.seed is not None else 0,
            threads=args.threads,
        )
    except ValueError as exc:
        raise GibbsLabError(str(exc)) from exc


def parse_config(path: str | None = None, **overrides) -> ExperimentSpec:
    """Build a validated ExperimentSpec from a JSON file and/or overrides."""
    ns = argparse.Namespace(config=path, observable=None, model=None, n=None,
                            k=None, dist=None, beta=None, replicates=None,
                            gibbs_samples=None, pairs=None, instances=None,
                            sampler=None, seed=None, threads=None)
    for key, value in overrides.items():
        if key not in _CONFIG_KEYS:
            raise GibbsLabError(f"unknown option {key!r}")
        setattr(ns, key, value)
    return build_spec(_merge_config(ns))


def _add_common(p: argparse.ArgumentParser, need_beta=True):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--model", help="matching-bipartite | matching-complete | "
                                   "tsp | spanning-tree | k-factor")
    p.add_argument("--n", type=int, help="size parameter")
    p.add_argument("--k", type=int, help="regularity (k-factor only)")
    p.add_argument("--dist", help="exp:R | uniform:A:B | censored:<base>:KEEP")
    if need_beta:
        p.add_argument("--beta", type=float, help="inverse temperature >= 0")
    p.add_argument("--seed", type=int, help="master seed (default 0)")


def _make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gibbslab",
        description="Gibbs measures on combinatorial families: exact "
                    "partition oracles, samplers, limit-law experiments.")
    ap.add_argument("--version", action="version", version=f"gibbslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="exact log Z for one sampled instance")
    _add_common(p)

    p = sub.add_parser("sample", help="draw Gibbs samples, print CSV")
    _add_common(p)
    p.add_argument("--samples", type=int, default=10, help="number of samples")
    p.add_argument("--mcmc", action="store_true", help="Metropolis chain "
                   "instead of the exact sampler")
    p.add_argument("--edges", action="store_true", help="include edge lists")
    p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("limits", help="print limit-law parameters")
    _add_common(p)

    p = sub.add_parser("verify", help="run a replicated experiment")
    _add_common(p)
    p.add_argument("--observable",
                   help="|".join(sorted(_OBSERVABLE_NAMES)))
    p.add_argument("--replicates", type=int)
    p.add_argument("--gibbs-samples", dest="gibbs_samples", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--instances", type=int, help="quenched weight instances")
    p.add_argument("--sampler", choices=("exact", "mcmc"))
    p.add_argument("--threads", type=int,
                   help="worker threads (default: GIBBSLAB_THREADS or all cores)")
    p.add_argument("--out-csv", dest="out_csv", help="raw replicate values")
    p.add_argument("--out-json", dest="out_json", help="summary, regenerable spec")

    sub.add_parser("selftest", help="tiny-size oracle equivalence suite")
    return ap


def _instance_weights(args):
    model = _build_model(args)
    dist = (args.dist if isinstance(args.dist, WeightDistribution)
            else parse_distribution(args.dist))
    seed = args.seed if args.seed is not None else 0
    return model, dist, sample_weights(dist, model.edge_count, seed)


def _cmd_oracle(args) -> int:
    if args.beta is None:
        raise GibbsLabError("missing required option --beta")
    model, dist, wv = _instance_weights(args)
    res = log_partition(model, wv, args.beta)
    print(json.dumps({
        "model": model.descriptor(), "dist": dist.descriptor(),
        "beta": args.beta, "seed": wv.source_seed, "method": res.method,
        "log_z": res.log_z, "dlogz_dbeta": res.dlogz_dbeta,
        "all_infinite": res.all_infinite,
    }))
    return 0


def _cmd_sample(args) -> int:
    if args.beta is None:
        raise GibbsLabError("missing required option --beta")
    model, dist, wv = _instance_weights(args)
    gseed = (args.seed if args.seed is not None else 0) + 1
    if args.mcmc:
        samples = mcmc_samples(model, wv, args.beta, args.samples, seed=gseed)
    else:
        samples = ExactGibbsSampler(model, wv, args.beta,
                                    gseed).sample_many(args.samples)
    lines = ["index,weight,typical_observable" + (",edges" if args.edges else "")]
    for i, s in enumerate(samples):
        obs = typical_weight_observable(s, model, dist, args.beta)
        row = f"{i},{s.weight:.17g},{obs:.17g}"
        if args.edges:
            row += "," + ";".join(str(e) for e in s.config.edges)
        lines.append(row)
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_limits(args) -> int:
    if args.beta is None:
        raise GibbsLabError("missing required option --beta")
    if args.n is None:
        # limit parameters depend on the family constant gamma (and k for
        # k-factors), never on n; any representative size will do
        args.n = max(100, 2 * (args.k or 1))
    model = _build_model(args)
    dist = parse_distribution(args.dist) if args.dist else Exponential(1.0)
    beta = float(args.beta)
    out = {
        "model": model.descriptor(),
        "dist": dist.descriptor(),
        "beta": beta,
        "logz": logz_limit(model, dist, beta).to_dict(),
        "overlap": overlap_lambda(model, dist, beta).to_dict(),
        "typical": typical_clt(dist, beta).to_dict(),
        "gibbs_average": gibbs_avg_clt(model, dist, beta).to_dict(),
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_verify(args) -> int:
    spec = build_spec(args)
    report = run_experiment(spec)
    if args.out_csv:
        write_values_csv(report, args.out_csv)
    if args.out_json:
        write_summary_json(report, args.out_json)
    for name, ok in sorted(report.checks.items()):
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(f"observable={spec.observable} values={sum(i.values.size for i in report.instances)} "
          f"dropped={report.dropped_replicates} runtime_ms={report.runtime_ms:.0f} "
          f"passed={report.passed}")
    if not args.out_json:
        # keep every run regenerable: echo the spec + seed summary line
        print("spec: " + json.dumps(spec.to_dict(), sort_keys=True))
    return 0 if report.passed else 1


def _cmd_selftest(_args) -> int:
    from .models import (KFactor, MatchingBipartite, MatchingComplete,
                         SpanningTree, TravelingSalesman)
    failures = 0
    cases = [MatchingBipartite(5), TravelingSalesman(6), SpanningTree(6),
             MatchingComplete(4), KFactor(3, 2)]
    for model in cases:
        for beta in (0.25, 1.0, 3.0):
            for rep in range(4):
                wv = sample_weights(Exponential(1.0), model.edge_count,
                                    1000 + rep)
                spec_r = log_partition(model, wv, beta)
                brute = brute_force_log_partition(model, wv, beta)
                rel = abs(spec_r.log_z - brute.log_z) / max(1.0, abs(brute.log_z))
                ok = rel <= 1e-9 and abs(spec_r.dlogz_dbeta
                                         - brute.dlogz_dbeta) <= 1e-6
                if not ok:
                    failures += 1
                    print(f"FAIL oracle {model.descriptor()} beta={beta} rep={rep} "
                          f"rel={rel:.2e}")
        wv = sample_weights(Exponential(1.0), model.edge_count, 1)
        z0 = log_partition(model, wv, 0.0).log_z
        if abs(z0) > 1e-12:
            failures += 1
            print(f"FAIL Z(0)=1 {model.descriptor()}: log_z={z0:.2e}")
    status = "pass" if failures == 0 else f"{failures} FAILURES"
    print(f"selftest: {len(cases)} families x 3 betas x 4 instances: {status}")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    tune_allocator()
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(args) if hasattr(args, "config") else args
        handler = {
            "oracle": _cmd_oracle,
            "sample": _cmd_sample,
            "limits": _cmd_limits,
            "verify": _cmd_verify,
            "selftest": _cmd_selftest,
        }[args.command]
        return handler(args)
    except (GibbsLabError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
