"""Persistence: run records as JSON, convergence curves as CSV.

Records are plain JSON with a schema version; unknown fields are rejected
loudly rather than silently dropped, and floats are written exactly (17
significant digits are enough for a lossless float64 round-trip), so
re-reading a record reproduces every numerical field bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _raw_version
from .engine import SpectrumEstimate
from .errors import IoError, SchemaError
from .liealg import CartanVector

SCHEMA_VERSION = 1

_RECORD_KEYS = {"schema_version", "tool", "tool_version", "config_digest", "seed",
                "created_unix", "wall_seconds", "scenarios", "suites"}
_ESTIMATE_KEYS = {"method", "model_kind", "dim", "n_steps", "n_trajectories",
                  "burn_in", "lambda", "stderr", "per_trajectory",
                  "convergence_curve", "sort_permuted"}


def _clean(x):
    """Normalize a value tree for JSON: numpy scalars/arrays become plain
    Python, floats are re-parsed from 17 significant digits (an exact
    operation for float64)."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        return float(format(float(x), ".17g"))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def config_digest(config: dict) -> str:
    """Digest of the key-sorted, whitespace-normalized config."""
    canon = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    name: str
    estimates: list


@dataclass(frozen=True, eq=False)
class SuiteResult:
    name: str
    outcome: str  # pass | fail | inconclusive
    measured: dict


@dataclass(frozen=True, eq=False)
class RunRecord:
    config_digest: str
    seed: int
    scenarios: list = field(default_factory=list)
    suites: list = field(default_factory=list)
    tool_version: str = _raw_version
    created_unix: float = 0.0
    wall_seconds: float = 0.0

    @staticmethod
    def now(config_digest: str, seed: int, **kw) -> "RunRecord":
        return RunRecord(config_digest=config_digest, seed=seed,
                         created_unix=time.time(), **kw)


def estimate_to_dict(est: SpectrumEstimate) -> dict:
    return _clean({
        "method": est.method,
        "model_kind": est.model_kind,
        "dim": est.dim,
        "n_steps": est.n_steps,
        "n_trajectories": est.n_trajectories,
        "burn_in": est.burn_in,
        "lambda": est.coords,
        "stderr": est.stderr,
        "per_trajectory": [v.coords for v in est.per_trajectory],
        "convergence_curve": [
            {"n": int(n), "lambda": lam, "stderr": se}
            for n, lam, se in est.convergence_curve],
        "sort_permuted": bool(est.sort_permuted),
    })


def estimate_from_dict(d: dict) -> SpectrumEstimate:
    unknown = set(d) - _ESTIMATE_KEYS
    if unknown:
        raise SchemaError(f"unknown estimate fields: {sorted(unknown)}")
    try:
        return SpectrumEstimate(
            lam=CartanVector(np.array(d["lambda"], dtype=float)),
            per_trajectory=[CartanVector(np.array(v, dtype=float))
                            for v in d["per_trajectory"]],
            stderr=np.array(d["stderr"], dtype=float),
            convergence_curve=[(int(row["n"]),
                                np.array(row["lambda"], dtype=float),
                                np.array(row["stderr"], dtype=float))
                               for row in d["convergence_curve"]],
            n_steps=int(d["n_steps"]),
            n_trajectories=int(d["n_trajectories"]),
            burn_in=int(d["burn_in"]),
            method=str(d["method"]),
            model_kind=str(d["model_kind"]),
            dim=int(d["dim"]),
            sort_permuted=bool(d["sort_permuted"]),
        )
    except KeyError as exc:
        raise SchemaError(f"estimate record is missing field {exc}") from exc


def record_to_dict(record: RunRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "lyaplab",
        "tool_version": record.tool_version,
        "config_digest": record.config_digest,
        "seed": int(record.seed),
        "created_unix": _clean(record.created_unix),
        "wall_seconds": _clean(record.wall_seconds),
        "scenarios": [{"name": s.name,
                       "estimates": [estimate_to_dict(e) for e in s.estimates]}
                      for s in record.scenarios],
        "suites": [{"name": s.name, "outcome": s.outcome,
                    "measured": _clean(s.measured)} for s in record.suites],
    }


def record_from_dict(d: dict) -> RunRecord:
    unknown = set(d) - _RECORD_KEYS
    if unknown:
        raise SchemaError(f"unknown record fields: {sorted(unknown)}")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"schema version {version!r} not supported "
                          f"(expected {SCHEMA_VERSION})")
    try:
        scenarios = [ScenarioResult(name=s["name"],
                                    estimates=[estimate_from_dict(e)
                                               for e in s["estimates"]])
                     for s in d["scenarios"]]
        suites = [SuiteResult(name=s["name"], outcome=s["outcome"],
                              measured=s["measured"]) for s in d["suites"]]
        return RunRecord(
            config_digest=str(d["config_digest"]),
            seed=int(d["seed"]),
            scenarios=scenarios,
            suites=suites,
            tool_version=str(d["tool_version"]),
            created_unix=float(d["created_unix"]),
            wall_seconds=float(d["wall_seconds"]),
        )
    except KeyError as exc:
        raise SchemaError(f"record is missing field {exc}") from exc


def write_run(record: RunRecord, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(record_to_dict(record), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write run record to {path}: {exc}") from exc


def read_run(path) -> RunRecord:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read run record from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("run record must be a JSON object")
    return record_from_dict(data)


def convergence_csv(est: SpectrumEstimate, path) -> None:
    """Write the convergence curve: n, lambda_1..lambda_d, stderr_1..stderr_d."""
    d = est.dim
    header = (["n"] + [f"lambda_{i + 1}" for i in range(d)]
              + [f"stderr_{i + 1}" for i in range(d)])
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for n, lam, se in est.convergence_curve:
                writer.writerow([int(n)] + [format(v, ".17g") for v in lam]
                                + [format(v, ".17g") for v in se])
    except OSError as exc:
        raise IoError(f"cannot write convergence curve to {path}: {exc}") from exc
