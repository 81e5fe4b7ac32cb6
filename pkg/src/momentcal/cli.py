"""Command-line front end: ``momentcal {train,audit,intervals,cover,calc-n,synth}``.

Every command accepts ``--config FILE`` (a JSON object of option values keyed
by the long flag name with dashes as underscores); explicit flags win.
Exit codes: 0 success, 2 configuration or precondition error, 3 a
statistical-failure event was logged during training, 4 input/output error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .auditing import PreconditionError, alpha_prime, sample_size_calculator
from .core import PredictorBundle, Sample
from .evaluation import (coverage_audit, coverage_csv, empirical_calibration_audit, exact_calibration_audit,
                         exact_coverage)
from .exact import ExactTrainConfig, exact_alternating_descent
from .finite import DistributionSource, PoolExhaustedError, PoolSource, SampleTrainConfig, sample_alternating_descent
from .intervals import IntervalParams, brute_force_cover, build_cover_instance, greedy_cover, prediction_intervals
from .io import (DataFormatError, distribution_to_json, header, read_dataset_csv, read_distribution, read_json,
                 write_dataset_csv, write_json, write_jsonl, write_text)
from .oracle import ExhaustiveOracle, StumpOracle, SubprocessOracle, oracle_alternating_descent
from .predicates import GroupFamily, whole_domain
from .synthetic import SyntheticSpec, generate_synthetic, random_box_family

EXIT_OK, EXIT_CONFIG, EXIT_STATISTICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("momentcal")


class ConfigError(ValueError):
    pass


def _merge_config(args, parser) -> dict:
    """Config-file values fill any option the command line left at its default."""
    values = vars(args).copy()
    if getattr(args, "config", None):
        cfg = read_json(args.config)
        known = {a.dest for a in parser._actions}
        for key, v in cfg.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r} in {args.config}")
            if values.get(key) == parser.get_default(key):
                values[key] = v
    values.pop("func", None)
    values.pop("config", None)
    return values


def _family(cfg, d: int | None = None) -> GroupFamily:
    if cfg.get("groups"):
        return GroupFamily.load(cfg["groups"])
    return whole_domain()


def _distribution(cfg):
    if cfg.get("dist"):
        return read_distribution(cfg["dist"])
    if cfg.get("synth"):
        spec = SyntheticSpec(cfg["synth"], json.loads(cfg.get("synth_params") or "{}"))
        return generate_synthetic(spec, cfg.get("seed", 0))
    return None


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _degrees(cfg):
    return None if not cfg.get("degrees") else tuple(int(a) for a in str(cfg["degrees"]).split(","))


def _oracle(cfg, d: int, family):
    spec = cfg.get("oracle") or "exhaustive"
    if spec == "exhaustive":
        return ExhaustiveOracle(family)
    if spec == "stump":
        return StumpOracle(d)
    if spec.startswith("cmd:"):
        return SubprocessOracle(spec[4:].split())
    raise ConfigError(f"unknown oracle {spec!r} (exhaustive, stump or cmd:<command line>)")


# --------------------------------------------------------------------------
# commands

def cmd_train(cfg) -> int:
    _require(cfg, "alpha", "beta", "m", "k", "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg["mode"]
    dist = _distribution(cfg)
    head = header("train", cfg)
    trace: list = []
    if mode == "exact":
        if dist is None:
            raise ConfigError("exact mode needs a distribution (--dist or --synth)")
        family = _family(cfg)
        config = ExactTrainConfig(cfg["alpha"], cfg["beta"], cfg["m"], cfg["k"], _degrees(cfg),
                                  cfg["absolute"], cfg["search"])
        bundle, report = exact_alternating_descent(config, dist, family, trace)
    else:
        _require(cfg, "delta", "n")
        config = SampleTrainConfig(cfg["alpha"], cfg["beta"], cfg["delta"], cfg["n"], cfg["m"], cfg["k"],
                                   _degrees(cfg), cfg["absolute"], cfg["seed"])
        if cfg.get("data"):
            source = PoolSource(read_dataset_csv(cfg["data"]))
            d = source.table.shape[1]
        elif dist is not None:
            source = DistributionSource(dist, cfg["seed"])
            d = dist.dim
        else:
            raise ConfigError("sample and oracle modes need --data, --dist or --synth")
        family = _family(cfg)
        if mode == "sample":
            bundle, report = sample_alternating_descent(config, source, family, trace)
        else:
            oracle = _oracle(cfg, d, family)
            bundle, report = oracle_alternating_descent(config, source, oracle, family, trace=trace,
                                                        workers=cfg.get("workers"))
            log.info("oracle %s: %d calls, %.3f s", oracle.name, report.oracle_calls, report.oracle_seconds)
    write_json(out / "bundle.json", bundle.to_json(), head)
    write_jsonl(out / "trace.jsonl", trace, head)
    rep = report.to_json()
    rep.pop("oracle_seconds")  # wall clock; kept out so reruns are byte-identical
    if mode != "exact":
        rep["alpha_prime"] = alpha_prime(config.alpha, config.delta, config.n)
        rep["beta_prime"] = alpha_prime(config.beta, config.delta, config.n)
    write_json(out / "report.json", rep, head)
    print(f"{mode} training: {report.outer_iterations} mean updates, {report.total_updates} total updates, "
          f"halt: {report.halt_reason}, failure events: {len(report.failure_events)}")
    return EXIT_STATISTICAL if report.failure_events else EXIT_OK


def _load_bundle(cfg):
    _require(cfg, "bundle")
    family = GroupFamily.load(cfg["groups"]) if cfg.get("groups") else None
    bundle = PredictorBundle.load(cfg["bundle"], family)
    if bundle.family is None:
        bundle.family = whole_domain()
    return bundle


def cmd_audit(cfg) -> int:
    _require(cfg, "alpha", "beta", "out")
    bundle = _load_bundle(cfg)
    family = bundle.family
    dist = _distribution(cfg)
    if cfg.get("data"):
        report = empirical_calibration_audit(bundle, read_dataset_csv(cfg["data"]), family, cfg["alpha"],
                                             cfg["beta"], cfg["delta"], cfg["slack"])
    elif dist is not None:
        report = exact_calibration_audit(bundle, dist, family, cfg["alpha"], cfg["beta"], cfg["slack"])
    else:
        raise ConfigError("audit needs --data (empirical) or --dist/--synth (exact)")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    head = header("audit", cfg)
    write_json(out / "report.json", report.to_json(), head)
    write_text(out / "report.txt", report.table() + "\n", head)
    write_text(out / "report.csv", report.to_csv(), head)
    print(report.table(limit=10))
    return EXIT_OK


def _interval_params(cfg, k) -> IntervalParams:
    _require(cfg, "gamma", "delta_cov")
    return IntervalParams(cfg["gamma"], cfg["delta_cov"], k, cfg["alpha"] or 0.0, cfg["beta"] or 0.0,
                          cfg["eps"] or 0.0, cfg["absolute"])


def cmd_intervals(cfg) -> int:
    _require(cfg, "out", "k")
    bundle = _load_bundle(cfg)
    params = _interval_params(cfg, cfg["k"])
    dist = _distribution(cfg)
    if cfg.get("data"):
        sample = read_dataset_csv(cfg["data"])
    elif dist is not None:
        sample = Sample(dist.X, np.arange(len(dist)), dist.conditional_mean(), np.ones(len(dist), dtype=np.int64),
                        np.asarray(dist.ids, dtype=object))
    else:
        raise ConfigError("intervals needs --data or --dist/--synth")
    X = sample.features
    iv = prediction_intervals(bundle, X, params)
    st = bundle.state(X)
    groups = bundle.family.masks(X)
    k = params.k
    mb, kb = st.mean_buckets(), st.moment_buckets(k)
    ids = sample.ids if sample.ids is not None else np.arange(len(sample))
    lines = ["id,mean,moment,width,lo,hi,raw_lo,raw_hi,cell"]
    for b in range(len(sample)):
        g = int(np.flatnonzero(groups[:, b])[0]) if groups[:, b].any() else None
        cell = "-" if g is None else f"{bundle.family.names[g]}[i={mb[b]},a={k},j={kb[b]}]"
        lines.append(",".join([str(ids[b])] + [repr(float(iv[c][b])) for c in
                                                ("mean", "moment", "width", "lo", "hi", "raw_lo", "raw_hi")] + [cell]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    head = header("intervals", cfg)
    write_text(out / "intervals.csv", "\n".join(lines) + "\n", head)
    if cfg.get("data"):
        rows = coverage_audit(bundle, params, sample, bundle.family)
    elif dist is not None:
        rows = exact_coverage(bundle, params, dist, bundle.family)
    write_text(out / "coverage.csv", coverage_csv(rows), head)
    low = [r for r in rows if not r.passed]
    print(f"{len(sample)} intervals, {len(rows)} qualifying cells, {len(low)} below 1 - delta")
    return EXIT_OK


def cmd_cover(cfg) -> int:
    _require(cfg, "out", "degrees")
    bundle = _load_bundle(cfg)
    dist = _distribution(cfg)
    if dist is not None:
        X, mass, empirical = dist.X, dist.mass, False
    elif cfg.get("data"):
        sample = read_dataset_csv(cfg["data"])
        X, inv = np.unique(sample.features, axis=0, return_inverse=True)
        mass = np.bincount(inv.reshape(-1), minlength=len(X)) / len(sample)
        empirical = True
    else:
        raise ConfigError("cover needs --dist/--synth or --data")
    params = {a: _interval_params(cfg, a) for a in _degrees(cfg)}
    inst = build_cover_instance(bundle, bundle.family, X, mass, params, empirical)
    cover = greedy_cover(inst)
    result = {"instance": inst.to_json(), "greedy": {"chosen": list(cover.chosen), "objective": cover.objective,
                                                     "labels": [inst.labels[s] for s in cover.chosen]}}
    if cfg.get("brute_force"):
        best = brute_force_cover(inst)
        result["optimum"] = {"chosen": list(best.chosen), "objective": best.objective}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "cover.json", result, header("cover", cfg))
    print(f"{len(inst.labels)} candidate sets, greedy picked {len(cover.chosen)}, objective {cover.objective:.6g}"
          + ("" if not empirical else " (empirical masses)"))
    return EXIT_OK


def cmd_calc_n(cfg) -> int:
    _require(cfg, "alpha_target", "beta_target", "delta_target", "eps", "groups_count", "k", "m")
    plan = sample_size_calculator(cfg["alpha_target"], cfg["beta_target"], cfg["delta_target"], cfg["eps"],
                                  cfg["groups_count"], cfg["k"], cfg["m"])
    rows = plan.to_json()
    width = max(len(k) for k in rows)
    for key, v in rows.items():
        print(f"{key.ljust(width)}  {v:.10g}" if isinstance(v, float) else f"{key.ljust(width)}  {v}")
    if cfg.get("out"):
        write_json(cfg["out"], rows, header("calc-n", cfg))
    return EXIT_OK


def cmd_synth(cfg) -> int:
    _require(cfg, "name", "out")
    spec = SyntheticSpec(cfg["name"], json.loads(cfg.get("params") or "{}"))
    dist = generate_synthetic(spec, cfg["seed"])
    head = header("synth", cfg)
    write_json(cfg["out"], distribution_to_json(dist), head)
    if cfg.get("family_out"):
        fam = random_box_family(np.random.default_rng(cfg["seed"]), dist.dim, cfg["family_size"])
        fam.save(cfg["family_out"])
    if cfg.get("sample_out"):
        _require(cfg, "sample_size")
        s = dist.sample(cfg["sample_size"], np.random.default_rng([cfg["seed"], 2]))
        write_dataset_csv(cfg["sample_out"], s, head)
    print(f"{spec.name}: {len(dist)} support points in dimension {dist.dim}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momentcal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option values; flags win")
        sp.add_argument("--seed", type=int, default=0)
        return sp

    def source(sp):
        sp.add_argument("--dist", help="distribution JSON (exact access)")
        sp.add_argument("--data", help="dataset CSV")
        sp.add_argument("--synth", help="synthetic generator name instead of --dist")
        sp.add_argument("--synth-params", help="JSON object of generator parameters")
        sp.add_argument("--groups", help="group family JSON (default: the whole domain)")

    t = common(sub.add_parser("train", help="train a predictor bundle"))
    source(t)
    t.add_argument("--mode", choices=["exact", "sample", "oracle"], default="exact")
    t.add_argument("--alpha", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--delta", type=float)
    t.add_argument("--n", type=int, help="block size for sample and oracle modes")
    t.add_argument("--m", type=int, default=10)
    t.add_argument("--k", type=int, default=2)
    t.add_argument("--degrees", help="comma-separated moment degrees (default: even degrees up to k)")
    t.add_argument("--absolute", action="store_true", help="absolute central moments")
    t.add_argument("--search", choices=["first", "max"], default="first")
    t.add_argument("--oracle", help="exhaustive, stump or cmd:<command line>")
    t.add_argument("--workers", type=int, help="threads for oracle calls")
    t.add_argument("--out", help="output directory")
    t.set_defaults(func=cmd_train)

    a = common(sub.add_parser("audit", help="calibration audit of a bundle"))
    source(a)
    a.add_argument("--bundle")
    a.add_argument("--alpha", type=float)
    a.add_argument("--beta", type=float)
    a.add_argument("--delta", type=float, default=0.05, help="confidence for the empirical annotation")
    a.add_argument("--slack", type=float, default=0.0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_audit)

    for name, func in (("intervals", cmd_intervals), ("cover", cmd_cover)):
        s = common(sub.add_parser(name, help=f"{name} from a bundle"))
        source(s)
        s.add_argument("--bundle")
        s.add_argument("--gamma", type=float)
        s.add_argument("--delta-cov", type=float)
        s.add_argument("--alpha", type=float, default=0.0)
        s.add_argument("--beta", type=float, default=0.0)
        s.add_argument("--eps", type=float, default=0.0)
        s.add_argument("--absolute", action="store_true")
        if name == "intervals":
            s.add_argument("--k", type=int)
        else:
            s.add_argument("--degrees", help="comma-separated degrees offered to the cover")
            s.add_argument("--brute-force", action="store_true")
        s.add_argument("--out")
        s.set_defaults(func=func)

    c = common(sub.add_parser("calc-n", help="training parameters for target guarantees"))
    c.add_argument("--alpha-target", type=float)
    c.add_argument("--beta-target", type=float)
    c.add_argument("--delta-target", type=float)
    c.add_argument("--eps", type=float)
    c.add_argument("--groups-count", type=int)
    c.add_argument("--k", type=int)
    c.add_argument("--m", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calc_n)

    y = common(sub.add_parser("synth", help="write a synthetic distribution"))
    y.add_argument("--name")
    y.add_argument("--params", help="JSON object of generator parameters")
    y.add_argument("--out")
    y.add_argument("--family-out")
    y.add_argument("--family-size", type=int, default=8)
    y.add_argument("--sample-out")
    y.add_argument("--sample-size", type=int)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        cfg = _merge_config(args, sub)
        cfg.pop("verbose", None)
        return args.func(cfg)
    except (DataFormatError, OSError, PoolExhaustedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, PreconditionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
