"""Command-line surface: run scenarios, sweep parameters, run property suites.

Grammar::

    lyaplab run <config.json> [--out P] [--seed S] [--threads N]
                [--checkpoint-every K] [--quiet]
    lyaplab sweep <config.json> --param theta --values v1,v2,... [--out P]
                [--seed S] [--threads N] [--quiet]
    lyaplab check <suite|all> [--seed S] [--threads N] [--out P] [--quiet]

Exit codes: 0 success, 2 numerical failure during estimation, 3 config or
I/O error.  Identical (config, seed) pairs produce byte-identical output
files in serial mode; --threads changes wall time only.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import scenarios, suites
from .drivers import IIDDriver, MarkovDriver, RotationDriver
from .engine import (EstimatorConfig, METHOD_BLOCK_SVD, METHOD_IWASAWA,
                     METHOD_KINGMAN_QR, continuity_sweep, estimate_block_svd,
                     estimate_iwasawa_formula, estimate_kingman_qr)
from .errors import (InvalidArgument, IoError, LyaplabError, NonReturningSet,
                     NumericalFailure, SchemaError)
from .liealg import GroupElement, GroupKind, GroupModel
from .report import (RunRecord, ScenarioResult, SuiteResult, config_digest,
                     convergence_csv, write_run)
from .transforms import SuspensionGreg, conjugate, cross_section_greg, \
    discretize_flow, induce

_ESTIMATORS = {
    METHOD_KINGMAN_QR: estimate_kingman_qr,
    METHOD_IWASAWA: estimate_iwasawa_formula,
    METHOD_BLOCK_SVD: estimate_block_svd,
}


class ConfigError(LyaplabError):
    """Anything wrong with a scenario config file."""


def _dec(x) -> float:
    """Decimal string (preferred) or number to binary float."""
    if isinstance(x, str):
        try:
            return float(x)
        except ValueError as exc:
            raise ConfigError(f"cannot parse decimal string {x!r}") from exc
    if isinstance(x, (int, float)):
        return float(x)
    raise ConfigError(f"expected a decimal string or number, got {type(x).__name__}")


def _matrix(rows, model: GroupModel) -> GroupElement:
    try:
        arr = np.array([[_dec(v) for v in row] for row in rows], dtype=float)
    except TypeError as exc:
        raise ConfigError("matrices must be nested arrays of decimal strings") from exc
    try:
        return GroupElement(model, arr).validate()
    except LyaplabError as exc:
        raise ConfigError(f"matrix does not satisfy the group model: {exc}") from exc


def _group_model(cfg: dict) -> GroupModel:
    group = cfg.get("group")
    if not isinstance(group, dict):
        raise ConfigError("config needs a 'group' object with kind and dim")
    kind = group.get("kind")
    try:
        kind = GroupKind(kind)
    except ValueError:
        raise ConfigError(f"unknown group kind {kind!r}") from None
    dim = group.get("dim")
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError("group dim must be a positive integer")
    try:
        return GroupModel(kind, dim)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc


def _representation(cfg: dict, model: GroupModel, n_labels: int, theta=None):
    rep = cfg.get("representation")
    if rep is None:
        raise ConfigError("config needs a 'representation' object")
    if "matrices" in rep:
        mats = [_matrix(m, model) for m in rep["matrices"]]
    elif "family" in rep:
        _, fam = scenarios.family(rep["family"])
        t = theta if theta is not None else _dec(rep.get("theta", 0.0))
        mats = [g.validate() for g in fam(t)]
        if mats[0].model != model:
            raise ConfigError("family representation does not match the config group")
    else:
        raise ConfigError("representation needs 'matrices' or 'family'")
    if len(mats) != n_labels:
        raise ConfigError(f"representation has {len(mats)} matrices, "
                          f"driver has {n_labels} labels")
    return mats


def _n_labels(drv_cfg: dict) -> int:
    kind = drv_cfg.get("kind")
    if kind == "iid":
        return len(drv_cfg.get("probs", []))
    if kind == "markov":
        return len(drv_cfg.get("transition", []))
    if kind == "rotation":
        return len(drv_cfg.get("breakpoints", []))
    raise ConfigError(f"unknown driver kind {kind!r}")


def _driver(cfg: dict, model: GroupModel, seed: int, theta=None):
    drv_cfg = cfg.get("driver")
    if not isinstance(drv_cfg, dict):
        raise ConfigError("config needs a 'driver' object")
    n_labels = _n_labels(drv_cfg)
    elements = _representation(cfg, model, n_labels, theta)
    kind = drv_cfg["kind"]
    try:
        if kind == "iid":
            probs = [_dec(p) for p in drv_cfg["probs"]]
            return IIDDriver(pairs=tuple(zip(elements, probs)), seed=seed)
        if kind == "markov":
            transition = tuple(tuple(_dec(v) for v in row)
                               for row in drv_cfg["transition"])
            law = drv_cfg.get("initial_law")
            law = tuple(_dec(v) for v in law) if law is not None else None
            return MarkovDriver(transition=transition,
                                state_elements=tuple(elements),
                                initial_law=law, seed=seed)
        if kind == "rotation":
            return RotationDriver(alpha=_dec(drv_cfg["alpha"]),
                                  breakpoints=tuple(_dec(b) for b in
                                                    drv_cfg["breakpoints"]),
                                  segment_elements=tuple(elements), seed=seed)
    except (InvalidArgument, KeyError) as exc:
        raise ConfigError(f"invalid driver config: {exc}") from exc
    raise ConfigError(f"unknown driver kind {kind!r}")


def _apply_transforms(cfg: dict, driver, model: GroupModel):
    chain = cfg.get("transforms") or []
    if isinstance(chain, dict):
        chain = [chain]
    if len(chain) > 1:
        raise ConfigError("transform chains longer than one are not supported; "
                          "compose scenarios instead")
    if not chain:
        return driver, None
    tr = chain[0]
    kind = tr.get("kind")
    try:
        if kind == "induce":
            return induce(driver, [tuple(w) for w in tr["words"]]), None
        if kind == "conjugate":
            table = [_matrix(m, model) for m in tr["matrices"]]
            return conjugate(driver, table), None
        if kind in ("suspend_discretize", "cross_section"):
            susp = SuspensionGreg(driver=driver,
                                  roof=tuple(_dec(r) for r in tr["roof"]),
                                  delta=_dec(tr["delta"]))
            if kind == "suspend_discretize":
                return discretize_flow(susp, _dec(tr["t"])), None
            stream, roof_est = cross_section_greg(susp)
            return stream, roof_est
    except (InvalidArgument, KeyError) as exc:
        raise ConfigError(f"invalid transform config: {exc}") from exc
    raise ConfigError(f"unknown transform kind {kind!r}")


def _estimator_cfg(cfg: dict, seed: int, checkpoint_every=None) -> EstimatorConfig:
    est = dict(cfg.get("estimator") or {})
    est.setdefault("n_steps", 100_000)
    est.setdefault("n_trajectories", 64)
    est.setdefault("burn_in", 1000)
    if checkpoint_every is not None:
        est["checkpoint_every"] = checkpoint_every
    try:
        return EstimatorConfig(seed=seed, **est)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"invalid estimator config: {exc}") from exc


def _load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    model = _group_model(cfg)
    driver = _driver(cfg, model, seed)
    source, roof_est = _apply_transforms(cfg, driver, model)
    ecfg = _estimator_cfg(cfg, seed, args.checkpoint_every)
    methods = cfg.get("estimators", [METHOD_KINGMAN_QR])
    estimates = []
    t0 = time.monotonic()
    for method in methods:
        if method not in _ESTIMATORS:
            raise ConfigError(f"unknown estimator {method!r}; "
                              f"known: {sorted(_ESTIMATORS)}")
        est = _ESTIMATORS[method](source, cfg=ecfg, threads=args.threads)
        estimates.append(est)
        se = np.array2string(est.stderr,
                             formatter={"float_kind": lambda v: f"{v:.2e}"})
        _say(args, f"{method}: lambda = {np.array2string(est.coords, precision=6)} "
                   f"(stderr {se})")
    name = cfg.get("name", "scenario")
    # timing goes to stdout only: output files must be byte-identical across
    # re-runs of the same (config, seed)
    record = RunRecord(config_digest=config_digest(cfg), seed=seed,
                       scenarios=[ScenarioResult(name=name, estimates=estimates)],
                       suites=[], created_unix=0.0, wall_seconds=0.0)
    out = args.out or (str(args.config) + ".record.json")
    write_run(record, out)
    _say(args, f"record written to {out} ({time.monotonic() - t0:.1f}s)")
    prefix = (cfg.get("outputs") or {}).get("curve_csv_prefix")
    if prefix:
        for est in estimates:
            convergence_csv(est, f"{prefix}{est.method}.csv")
            _say(args, f"curve written to {prefix}{est.method}.csv")
    if roof_est is not None:
        _say(args, f"roof integral estimate: {roof_est.mean:.6f} "
                   f"+- {roof_est.stderr:.2g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    rep = cfg.get("representation") or {}
    if "family" not in rep:
        raise ConfigError("sweep configs must reference a representation family")
    if args.param != "theta":
        raise ConfigError(f"unknown sweep parameter {args.param!r}; "
                          "shipped families are parametrized by 'theta'")
    try:
        values = [float(v) for v in args.values.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse --values: {exc}") from exc
    if not values:
        raise ConfigError("--values must list at least one number")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    model = _group_model(cfg)
    if cfg.get("transforms"):
        raise ConfigError("sweeps over transformed scenarios are not supported")
    driver = _driver(cfg, model, seed, theta=values[0])
    _, fam = scenarios.family(rep["family"])
    ecfg = _estimator_cfg(cfg, seed, args.checkpoint_every)
    result = continuity_sweep(driver, fam, values, cfg=ecfg, threads=args.threads)
    scenario_rows = []
    for row in result.rows:
        theta_name = format(row.theta, ".12g")
        scenario_rows.append(ScenarioResult(
            name=f"{cfg.get('name', 'sweep')}@theta={theta_name}",
            estimates=[row.estimate]))
        _say(args, f"theta={theta_name}: lambda = "
                   f"{np.array2string(row.estimate.coords, precision=6)}")
    diffs = result.diff_moduli()
    measured = {f"diff_{i}": float(v) for i, v in enumerate(diffs)}
    if len(diffs) >= 2 and float(diffs[0]) > 0:
        measured["refinement_ratio"] = float(diffs[-1] / diffs[0])
    suite_rows = [SuiteResult(name="continuity-diagnostic", outcome="pass",
                              measured=measured)]
    record = RunRecord(config_digest=config_digest(cfg), seed=seed,
                       scenarios=scenario_rows, suites=suite_rows,
                       created_unix=0.0, wall_seconds=0.0)
    out = args.out or (str(args.config) + ".sweep.json")
    write_run(record, out)
    _say(args, f"sweep record written to {out}")
    return 0


def cmd_check(args) -> int:
    name = args.suite
    if name != "all" and name not in suites.SUITE_NAMES:
        raise ConfigError(f"unknown suite {name!r}; "
                          f"known: {list(suites.SUITE_NAMES)} or 'all'")
    results = suites.run_suites(name, seed=args.seed or 0, threads=args.threads)
    width = max(len(r.name) for r in results)
    all_pass = True
    for r in results:
        all_pass &= r.outcome == "pass"
        measured = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                             for k, v in sorted(r.measured.items()))
        _say(args, f"{r.name:<{width}}  {r.outcome.upper():<12} {measured}")
    if args.out:
        digest = config_digest({"check": name, "seed": args.seed or 0})
        record = RunRecord(config_digest=digest, seed=args.seed or 0,
                           scenarios=[], suites=results,
                           created_unix=0.0, wall_seconds=0.0)
        write_run(record, args.out)
        _say(args, f"check record written to {args.out}")
    _say(args, "ALL PASS" if all_pass else "FAILURES PRESENT")
    return 0 if all_pass else 1


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lyaplab",
                                description="Lyapunov spectrum laboratory for "
                                            "group-valued cocycles")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=None, help="output record path")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="trajectory-parallel threads (numbers unchanged)")
        sp.add_argument("--checkpoint-every", type=int, default=None,
                        help="arithmetic checkpoint spacing")
        sp.add_argument("--quiet", action="store_true")

    run_p = sub.add_parser("run", help="execute a scenario config")
    run_p.add_argument("config")
    common(run_p)

    sweep_p = sub.add_parser("sweep", help="sweep a representation family")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--param", required=True)
    sweep_p.add_argument("--values", required=True)
    common(sweep_p)

    check_p = sub.add_parser("check", help="run a property suite")
    check_p.add_argument("suite")
    common(check_p)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_check(args)
    except (NumericalFailure, NonReturningSet) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, InvalidArgument, IoError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
