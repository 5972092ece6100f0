"""Command-line experiment runner.

Two subcommands::

    vr3c run --config experiment.json [--mode M] [--seed S] [--out DIR] [--restarts R] [--mu MU]
    vr3c generate --seed S [--n N] [--cache-fraction X] ... --out instance.json

``run`` is the default, so ``vr3c --config experiment.json`` works too.

An experiment config is a JSON object::

    {"mode": "hetero-cccp",
     "instance": "instance.json",          # path (relative to the config) or inline object
     "seed": 0,
     "out": "results",
     "cccp": {"mu": 1e5, "delta": 1e-3, "max_iters": 200, "restarts": 100, "workers": 1},
     "sweep": {"cache_fractions": [...], "energy_fractions": [...], "cpu_freqs": [...]},
     "simulate": {"requests": 1000000, "policy": "closed-form", "histogram": true}}

Every run writes ``result.json``; sweeps add ``sweep.csv``, heterogeneous
modes add ``baselines.csv``.  Failures write ``error.json`` and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, InstanceParseError, SolverError, Vr3cError
from .heterogeneous import (CccpConfig, build_mmkp, brute_force_mmkp, greedy_3d_caching,
                            greedy_caching_computing, multi_start)
from .homogeneous import (HomogeneousInstance, brute_force_problem2, closed_form, expand_counts,
                          optimal_frequency, sweep, write_sweep_csv)
from .instances import (HeterogeneousInstance, dump_instance, generate_instance, instance_from_dict,
                        load_instance)
from .model import JointPolicy, average_rate, uniform_viewpoints, validate_policy
from .sim import generate_stream, simulate, write_route_histogram

SCHEMA = "v1"
MODES = ("homog-closed-form", "homog-oracle", "homog-sweep", "hetero-cccp", "hetero-baselines",
         "hetero-oracle", "simulate")
SIM_POLICIES = ("closed-form", "cccp", "greedy-3d-caching", "greedy-caching-computing", "all-mec", "oracle")
EXIT_CODES = {ConfigError: 2, InstanceParseError: 3, SolverError: 4}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    instance: HeterogeneousInstance | HomogeneousInstance
    out: Path
    seed: int = 0
    cccp: CccpConfig = CccpConfig()
    sweep_axes: dict = dataclasses.field(default_factory=dict)
    sim_requests: int = 1_000_000
    sim_policy: str = "closed-form"
    sim_histogram: bool = False
    source: str = "<config>"


def _jsonable(obj: Any) -> Any:
    """Plain JSON types only; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _dump(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _read_json(path: Path, err=ConfigError) -> Any:
    try:
        text = path.read_text()
    except OSError as exc:
        raise err(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise err(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _section(doc: dict, key: str, source: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{source}: '{key}' must be an object")
    return value


def _cccp_config(section: dict, seed: int, args, source: str) -> CccpConfig:
    known = {f.name for f in dataclasses.fields(CccpConfig)} - {"rng_seed"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{source}: unknown cccp option(s) {sorted(unknown)}")
    try:
        cfg = CccpConfig(**{k: type(getattr(CccpConfig(), k))(v) for k, v in section.items()}, rng_seed=seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: cccp: {exc}") from None
    if args.restarts is not None:
        cfg = dataclasses.replace(cfg, restarts=args.restarts)
    if args.mu is not None:
        cfg = dataclasses.replace(cfg, mu=args.mu)
    if cfg.restarts < 1 or cfg.mu <= 0 or cfg.delta < 0 or cfg.max_iters < 1:
        raise ConfigError(f"{source}: cccp needs restarts >= 1, mu > 0, delta >= 0, max_iters >= 1")
    return cfg


def build_config(args) -> ExperimentConfig:
    """Merge the config file with command-line overrides; flags win."""
    doc: dict = {}
    base = Path.cwd()
    source = "<command line>"
    if args.config is not None:
        path = Path(args.config)
        doc = _read_json(path)
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base = path.parent
        source = str(path)

    mode = args.mode or doc.get("mode")
    if mode is None:
        raise ConfigError(f"{source}: no mode given (use 'mode' or --mode)")
    if mode not in MODES:
        raise ConfigError(f"{source}: unknown mode {mode!r}; expected one of {', '.join(MODES)}")

    raw_seed = args.seed if args.seed is not None else doc.get("seed", 0)
    if not isinstance(raw_seed, int) or isinstance(raw_seed, bool) or not 0 <= raw_seed < 2 ** 64:
        raise ConfigError(f"{source}: seed must be an unsigned 64-bit integer")

    out = Path(args.out) if args.out is not None else (base / doc["out"] if "out" in doc else Path("results"))

    spec = args.instance if args.instance is not None else doc.get("instance")
    if spec is None:
        raise ConfigError(f"{source}: no instance given (use 'instance' or --instance)")
    if isinstance(spec, dict):
        instance = instance_from_dict(spec, f"{source}: instance")
    elif isinstance(spec, str):
        ipath = Path(spec) if args.instance is not None else base / spec
        instance = load_instance(ipath)
    else:
        raise ConfigError(f"{source}: 'instance' must be a path or an object")

    sweep_axes = _section(doc, "sweep", source)
    for axis in sweep_axes:
        if axis not in ("cache_fractions", "energy_fractions", "cpu_freqs"):
            raise ConfigError(f"{source}: unknown sweep axis {axis!r}")
        values = sweep_axes[axis]
        if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
            raise ConfigError(f"{source}: sweep axis {axis!r} must be a list of numbers")

    sim = _section(doc, "simulate", source)
    requests = sim.get("requests", 1_000_000)
    if not isinstance(requests, int) or requests < 1:
        raise ConfigError(f"{source}: simulate.requests must be a positive integer")
    policy = sim.get("policy", "closed-form" if isinstance(instance, HomogeneousInstance) else "cccp")
    if policy not in SIM_POLICIES:
        raise ConfigError(f"{source}: simulate.policy must be one of {', '.join(SIM_POLICIES)}")

    return ExperimentConfig(
        mode=mode, instance=instance, out=out, seed=raw_seed,
        cccp=_cccp_config(_section(doc, "cccp", source), raw_seed, args, source),
        sweep_axes=sweep_axes, sim_requests=requests, sim_policy=policy,
        sim_histogram=bool(sim.get("histogram", False)), source=source,
    )


def _need_homogeneous(cfg: ExperimentConfig) -> HomogeneousInstance:
    if not isinstance(cfg.instance, HomogeneousInstance):
        raise ConfigError(f"{cfg.source}: mode {cfg.mode} needs a homogeneous instance")
    return cfg.instance


def _viewpoints(cfg: ExperimentConfig):
    inst = cfg.instance
    if isinstance(inst, HomogeneousInstance):
        return uniform_viewpoints(inst.task, inst.n), inst.dev
    return list(inst.viewpoints), inst.device


def _policy_dict(policy: JointPolicy) -> dict:
    return {"cache3d": policy.cache3d.tolist(), "cache2d": policy.cache2d.tolist(),
            "compute_local": policy.compute_local.tolist()}


def _write_baselines(rates: dict[str, float], path: Path) -> None:
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["method", "average_rate"])
        for name, rate in rates.items():
            out.writerow([name, repr(float(rate))])


def _baseline_rates(viewpoints, dev) -> dict[str, float]:
    return {
        "all_mec": average_rate(JointPolicy.all_mec(len(viewpoints)), viewpoints, dev),
        "greedy_3d_caching": average_rate(greedy_3d_caching(viewpoints, dev), viewpoints, dev),
        "greedy_caching_computing": average_rate(greedy_caching_computing(viewpoints, dev), viewpoints, dev),
    }


def _homog_closed_form(cfg):
    inst = _need_homogeneous(cfg)
    res = closed_form(inst)
    try:
        f_opt = optimal_frequency(inst.task)
    except Vr3cError:
        f_opt = None
    return {"counts": dataclasses.asdict(res.counts), "rate": res.rate, "regime": res.regime.value,
            "remainder": res.remainder, "capacity": inst.capacity, "crossover_frequency": inst.crossover,
            "optimal_frequency": f_opt}


def _homog_oracle(cfg):
    inst = _need_homogeneous(cfg)
    counts, rate = brute_force_problem2(inst)
    ref = closed_form(inst)
    return {"counts": dataclasses.asdict(counts), "rate": rate, "closed_form_rate": ref.rate,
            "closed_form_counts": dataclasses.asdict(ref.counts)}


def _homog_sweep(cfg):
    inst = _need_homogeneous(cfg)
    rows = sweep(inst, cfg.sweep_axes.get("cache_fractions"), cfg.sweep_axes.get("energy_fractions"),
                 cfg.sweep_axes.get("cpu_freqs"))
    write_sweep_csv(rows, cfg.out / "sweep.csv")
    statuses: dict[str, int] = {}
    for r in rows:
        statuses[r.status] = statuses.get(r.status, 0) + 1
    rates = [r.rate for r in rows if math.isfinite(r.rate)]
    return {"points": len(rows), "status_counts": statuses,
            "min_rate": min(rates) if rates else None, "max_rate": max(rates) if rates else None,
            "csv": "sweep.csv"}


def _hetero_cccp(cfg):
    viewpoints, dev = _viewpoints(cfg)
    report = multi_start(build_mmkp(viewpoints, dev), cfg.cccp)
    violations = validate_policy(report.policy, viewpoints, dev)
    _write_baselines({"cccp": report.average_rate, **report.baselines}, cfg.out / "baselines.csv")
    body = report.to_dict()
    body["violations"] = [dataclasses.asdict(v) for v in violations]
    return body


def _hetero_baselines(cfg):
    viewpoints, dev = _viewpoints(cfg)
    rates = _baseline_rates(viewpoints, dev)
    _write_baselines(rates, cfg.out / "baselines.csv")
    return {"baselines": rates}


def _hetero_oracle(cfg):
    viewpoints, dev = _viewpoints(cfg)
    policy, rate = brute_force_mmkp(build_mmkp(viewpoints, dev))
    return {"average_rate": rate, "policy": _policy_dict(policy)}


def _sim_policy(cfg, viewpoints, dev) -> JointPolicy:
    name = cfg.sim_policy
    if name == "closed-form":
        inst = _need_homogeneous(cfg)
        return expand_counts(closed_form(inst).counts, inst.n)
    if name == "cccp":
        return multi_start(build_mmkp(viewpoints, dev), cfg.cccp).policy
    if name == "greedy-3d-caching":
        return greedy_3d_caching(viewpoints, dev)
    if name == "greedy-caching-computing":
        return greedy_caching_computing(viewpoints, dev)
    if name == "oracle":
        return brute_force_mmkp(build_mmkp(viewpoints, dev))[0]
    return JointPolicy.all_mec(len(viewpoints))


def _simulate(cfg):
    viewpoints, dev = _viewpoints(cfg)
    policy = _sim_policy(cfg, viewpoints, dev)
    stream = generate_stream([v.popularity for v in viewpoints], cfg.sim_requests, cfg.seed)
    res = simulate(policy, viewpoints, dev, stream)
    if cfg.sim_histogram:
        write_route_histogram(res, cfg.out / "route_histogram.csv")
    return {"policy": cfg.sim_policy, "expected_avg_rate": average_rate(policy, viewpoints, dev),
            "energy_budget": dev.energy_budget, "simulation": res.to_dict()}


_HANDLERS = {
    "homog-closed-form": _homog_closed_form,
    "homog-oracle": _homog_oracle,
    "homog-sweep": _homog_sweep,
    "hetero-cccp": _hetero_cccp,
    "hetero-baselines": _hetero_baselines,
    "hetero-oracle": _hetero_oracle,
    "simulate": _simulate,
}


def run(cfg: ExperimentConfig) -> dict:
    """Execute one experiment and write its files; returns the result document."""
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"{cfg.out}: cannot create output directory ({exc.strerror})") from None
    try:
        body = _HANDLERS[cfg.mode](cfg)
    except (ConfigError, InstanceParseError):
        raise
    except Vr3cError as exc:
        raise SolverError(f"{cfg.mode}: {type(exc).__name__}: {exc}") from exc
    doc = {"schema": SCHEMA, "mode": cfg.mode, "seed": cfg.seed, "status": "ok", "result": body}
    _dump(doc, cfg.out / "result.json")
    return doc


def _error_record(exc: Vr3cError) -> dict:
    cause = exc.__cause__
    return {"schema": SCHEMA, "status": "error",
            "error": {"type": type(exc).__name__, "message": str(exc),
                      "cause": type(cause).__name__ if cause is not None else None}}


def _peek_out_dir(args) -> Path | None:
    """Where to put ``error.json`` if the config itself turns out to be broken."""
    if args.out is not None:
        return Path(args.out)
    if args.config is None:
        return None
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, ValueError):
        return None
    if isinstance(doc, dict) and isinstance(doc.get("out"), str):
        return Path(args.config).parent / doc["out"]
    return None


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vr3c", description="Caching/computing/rate experiments for VR viewpoints.")
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run an experiment")
    run_p.add_argument("--config", help="experiment config JSON")
    run_p.add_argument("--instance", help="instance JSON (overrides the config)")
    run_p.add_argument("--mode", choices=MODES)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--restarts", type=int)
    run_p.add_argument("--mu", type=float)

    gen = sub.add_parser("generate", help="write a random heterogeneous instance")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--cache-fraction", type=float, default=0.3)
    gen.add_argument("--energy-fraction", type=float, default=0.25)
    gen.add_argument("--gamma", type=float, default=0.8)
    gen.add_argument("--cpu-freq", type=float, default=50e9)
    gen.add_argument("--deadline", type=float, default=0.02)
    gen.add_argument("--distribution", choices=("uniform", "loguniform"), default="uniform")
    gen.add_argument("--out", required=True, help="instance file to write")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("run", "generate", "-h", "--help"):
        argv.insert(0, "run")
    args = _parser().parse_args(argv)
    out_dir = None
    try:
        if args.command == "generate":
            inst = generate_instance(args.n, args.seed, cache_fraction=args.cache_fraction,
                                     energy_fraction=args.energy_fraction, gamma=args.gamma,
                                     cpu_freq=args.cpu_freq, deadline=args.deadline,
                                     distribution=args.distribution)
            dump_instance(inst, args.out)
            return 0
        out_dir = _peek_out_dir(args)
        cfg = build_config(args)
        out_dir = cfg.out
        run(cfg)
        return 0
    except Vr3cError as exc:
        if not isinstance(exc, tuple(EXIT_CODES)):
            wrapped = ConfigError(str(exc)) if args.command == "generate" else SolverError(str(exc))
            wrapped.__cause__ = exc
            exc = wrapped
        record = _error_record(exc)
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        if out_dir is not None:
            try:
                out_dir.mkdir(parents=True, exist_ok=True)
                _dump(record, out_dir / "error.json")
            except OSError:
                pass
        return EXIT_CODES[type(exc)]


if __name__ == "__main__":
    sys.exit(main())
