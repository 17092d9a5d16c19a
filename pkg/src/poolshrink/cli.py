"""Command-line front end.

Three subcommands:

* ``simulate`` -- run a Monte Carlo risk comparison (a named preset or a
  JSON config) and write a CSV/JSON report;
* ``estimate`` -- evaluate the shrinkage estimators on one observed data
  set read from a CSV file;
* ``check`` -- print the minimaxity condition report for a model as JSON.

Config files are JSON documents with a ``model`` section (scalar-matrix
shorthand supported: a number c stands for c * I) and an ``estimators``
list; estimator constants may be omitted, in which case the bound-optimal
values are derived from the model.

Exit codes: 0 success (and, for ``check``, conditions hold); 1 conditions
fail; 2 invalid config or arguments; 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Sequence

import numpy as np

from .estimators import EstimatorConfig, estimate
from .minimax import (
    double_shrinkage_report,
    lincomb_shrinkage_report,
    single_shrinkage_report,
)
from .model import ModelSpec, Sample, validate_spec
from .risksim import SimPlan, preset_estimators, simulate_risk, table1_preset
from .statistics import compute_pooled_stats

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONDITION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class ConfigError(ValueError):
    """Invalid configuration or data file."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _as_matrix(entry, p: int, name: str) -> np.ndarray:
    """Accept the scalar-matrix shorthand c -> c * I or a full p x p matrix."""
    if isinstance(entry, (int, float)):
        return float(entry) * np.eye(p)
    mat = np.asarray(entry, dtype=float)
    if mat.shape != (p, p):
        raise ConfigError(f"{name}: expected a scalar or a {p}x{p} matrix, got shape {mat.shape}")
    return mat


def _as_vector(entry, p: int, name: str) -> np.ndarray:
    """Accept the shorthand c -> c * ones(p) or a full length-p vector."""
    if isinstance(entry, (int, float)):
        return float(entry) * np.ones(p)
    vec = np.asarray(entry, dtype=float).reshape(-1)
    if vec.shape != (p,):
        raise ConfigError(f"{name}: expected a scalar or a length-{p} vector, got shape {vec.shape}")
    return vec


def parse_model(section: dict, require_mu: bool = True) -> ModelSpec:
    """Build a ModelSpec from the ``model`` section of a config."""
    if not isinstance(section, dict):
        raise ConfigError("model: expected an object")
    try:
        p = int(section["p"])
        k = int(section["k"])
        n = int(section["n"])
        v_entries = section["V"]
    except KeyError as exc:
        raise ConfigError(f"model: missing required field {exc}") from None
    sigma2 = float(section.get("sigma2", 1.0))
    if not isinstance(v_entries, list) or len(v_entries) != k:
        raise ConfigError(f"model.V: expected a list of {k} entries")
    V = [_as_matrix(entry, p, f"model.V[{i}]") for i, entry in enumerate(v_entries)]

    q_entry = section.get("Q", "inv_v1")
    if q_entry == "inv_v1":
        Q = np.linalg.inv(V[0])
    else:
        Q = _as_matrix(q_entry, p, "model.Q")

    mu_entries = section.get("mu")
    if mu_entries is None:
        if require_mu:
            raise ConfigError("model.mu: required for simulation configs")
        mu = [np.zeros(p) for _ in range(k)]
    else:
        if not isinstance(mu_entries, list) or len(mu_entries) != k:
            raise ConfigError(f"model.mu: expected a list of {k} entries")
        mu = [_as_vector(entry, p, f"model.mu[{i}]") for i, entry in enumerate(mu_entries)]

    spec = ModelSpec(p=p, k=k, n=n, V=tuple(V), Q=Q, sigma2=sigma2, mu=tuple(mu))
    errors = validate_spec(spec)
    if errors:
        raise ConfigError("model: " + "; ".join(errors))
    return spec


def parse_estimators(entries, spec: ModelSpec, default_alpha: float) -> tuple[EstimatorConfig, ...]:
    """Build estimator configs; omitted constants become the bound-optimal
    defaults derived from the model."""
    if entries is None:
        return preset_estimators(spec, alpha=default_alpha)
    if not isinstance(entries, list) or not entries:
        raise ConfigError("estimators: expected a nonempty list")
    defaults = {cfg.kind: cfg for cfg in preset_estimators(spec, alpha=default_alpha)}
    configs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"estimators[{i}]: expected an object with a 'kind' field")
        kind = str(entry["kind"]).upper()
        if kind not in defaults:
            raise ConfigError(
                f"estimators[{i}]: kind {kind!r} is not supported in config files "
                "(PT, JS, EB, HB, HEB)"
            )
        base = defaults[kind]
        known = {"kind", "alpha", "a0", "b0", "a", "c", "L", "label"}
        unknown = set(entry) - known
        if unknown:
            raise ConfigError(f"estimators[{i}]: unknown fields {sorted(unknown)}")
        cfg = EstimatorConfig(
            kind=kind,
            alpha=float(entry.get("alpha", base.alpha)) if kind == "PT" else None,
            a0=float(entry.get("a0", base.a0)) if kind in ("EB", "HEB") else None,
            b0=float(entry.get("b0", base.b0)) if kind == "HEB" else None,
            a=float(entry.get("a", base.a)) if kind == "HB" else None,
            c=float(entry.get("c", base.c if base.c is not None else 1.0)) if kind == "HB" else None,
            L=float(entry.get("L", base.L if base.L is not None else 0.0)) if kind == "HB" else None,
            label=entry.get("label"),
        )
        problems = cfg.validate(spec)
        if problems:
            raise ConfigError(f"estimators[{i}]: " + "; ".join(problems))
        configs.append(cfg)
    return tuple(configs)


def plan_to_config(plan: SimPlan, name: str = "config") -> dict:
    """Re-serialize a simulation plan as a config document (the inverse of
    ``parse_model`` + ``parse_estimators`` up to scalar-matrix shorthand)."""
    spec = plan.spec
    model = {
        "p": spec.p,
        "k": spec.k,
        "n": spec.n,
        "sigma2": spec.sigma2,
        "V": [v.tolist() for v in spec.V],
        "Q": spec.Q.tolist(),
        "mu": [m.tolist() for m in spec.mu],
    }
    estimators = []
    for cfg in plan.estimators:
        entry: dict = {"kind": cfg.kind}
        for field in ("alpha", "a0", "b0", "a", "c", "L", "label"):
            value = getattr(cfg, field)
            if value is not None:
                entry[field] = value
        estimators.append(entry)
    return {
        "name": name,
        "model": model,
        "estimators": estimators,
        "replications": plan.replications,
        "seed": plan.seed,
    }


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path}: expected a JSON object at top level")
    return doc


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return format(value, ".6g")


def _report_rows(label: str, report) -> list[dict]:
    rows = []
    for est in report.estimators:
        rows.append(
            {
                "mean_config": label,
                "estimator": est.name,
                "risk": _fmt(est.risk),
                "risk_se": _fmt(est.std_error),
                "prial": _fmt(est.prial),
                "prial_se": _fmt(est.prial_std_error),
                "replications": report.replications,
                "seed": report.seed,
            }
        )
    return rows


_CSV_FIELDS = [
    "mean_config",
    "estimator",
    "risk",
    "risk_se",
    "prial",
    "prial_se",
    "replications",
    "seed",
]


def _emit(rows: list[dict], fmt: str, out_path: str | None):
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=_CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buffer.getvalue()
    else:
        text = json.dumps(rows, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise ConfigError("simulate: exactly one of --preset or --config is required")
    if args.reps is not None and args.reps < 1:
        raise ConfigError(f"--reps: must be >= 1, got {args.reps}")
    if args.workers < 1:
        raise ConfigError(f"--workers: must be >= 1, got {args.workers}")

    jobs: list[tuple[str, SimPlan]] = []
    if args.preset is not None:
        if args.preset != "table1":
            raise ConfigError(f"unknown preset {args.preset!r} (available: table1)")
        jobs = table1_preset(
            replications=args.reps if args.reps is not None else 100_000,
            seed=args.seed if args.seed is not None else 0,
            alpha=args.alpha,
        )
    else:
        doc = _load_config(args.config)
        spec = parse_model(doc.get("model", {}), require_mu=True)
        configs = parse_estimators(doc.get("estimators"), spec, default_alpha=args.alpha)
        reps = args.reps if args.reps is not None else int(doc.get("replications", 100_000))
        seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
        if reps < 1:
            raise ConfigError(f"replications: must be >= 1, got {reps}")
        plan = SimPlan(spec=spec, estimators=configs, replications=reps, seed=seed)
        problems = plan.validate()
        if problems:
            raise ConfigError("; ".join(problems))
        jobs = [(str(doc.get("name", "config")), plan)]

    rows: list[dict] = []
    for label, plan in jobs:
        report = simulate_risk(plan, workers=args.workers)
        rows.extend(_report_rows(label, report))
    _emit(rows, args.format, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _read_data_file(path: str, p: int, k: int) -> tuple[np.ndarray, float]:
    """Read k rows of p comma-separated values followed by one row holding
    the positive scale statistic S.  A non-numeric first row is treated as
    a header."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_rows = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from None
    if raw_rows:
        try:
            [float(cell) for cell in raw_rows[0]]
        except ValueError:
            raw_rows = raw_rows[1:]
    if len(raw_rows) != k + 1:
        raise ConfigError(
            f"data file must hold {k} observation rows plus a final row with S; "
            f"got {len(raw_rows)} rows"
        )
    rows = []
    for i, row in enumerate(raw_rows[:k]):
        try:
            vals = [float(cell) for cell in row]
        except ValueError as exc:
            raise ConfigError(f"data row {i}: {exc}") from None
        if len(vals) != p:
            raise ConfigError(f"data row {i}: expected {p} values, got {len(vals)}")
        rows.append(vals)
    s_row = raw_rows[k]
    if len(s_row) != 1:
        raise ConfigError(f"final row must hold the single value S, got {len(s_row)} values")
    try:
        s_val = float(s_row[0])
    except ValueError as exc:
        raise ConfigError(f"S: {exc}") from None
    if not s_val > 0.0:
        raise ConfigError(f"S must be positive, got {s_val}")
    return np.asarray(rows, dtype=float), s_val


def cmd_estimate(args) -> int:
    doc = _load_config(args.config)
    spec = parse_model(doc.get("model", {}), require_mu=False)
    x, s = _read_data_file(args.data, spec.p, spec.k)
    sample = Sample(X=x, S=s)

    wanted = [name.strip().upper() for name in args.estimators.split(",") if name.strip()]
    configs = parse_estimators(doc.get("estimators"), spec, default_alpha=args.alpha)
    by_kind = {cfg.kind: cfg for cfg in configs}
    missing = [name for name in wanted if name not in by_kind]
    if missing:
        raise ConfigError(f"estimators not configured: {', '.join(missing)}")

    stats = compute_pooled_stats(sample, spec.V, spec.Q)
    out = sys.stdout
    vec = lambda v: " ".join(format(x, ".10g") for x in v)
    out.write(f"nu_hat: {vec(stats.nu_hat)}\n")
    out.write(f"F: {format(stats.F, '.10g')}\n")
    out.write(f"G: {format(stats.G, '.10g')}\n")
    for name in wanted:
        value = estimate(sample, spec, by_kind[name])
        out.write(f"{name}: {vec(value)}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    doc = _load_config(args.config)
    spec = parse_model(doc.get("model", {}), require_mu=False)
    single = single_shrinkage_report(spec)
    double = double_shrinkage_report(spec)
    payload = {
        "single_shrinkage": single.as_dict(),
        "double_shrinkage": double.as_dict(),
    }
    all_hold = single.condition_holds and double.condition_holds
    if args.weights:
        try:
            d = [float(tok) for tok in args.weights.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--weights: {exc}") from None
        if len(d) != spec.k:
            raise ConfigError(f"--weights: expected {spec.k} values, got {len(d)}")
        lin = lincomb_shrinkage_report(spec, d)
        payload["lincomb_shrinkage"] = lin.as_dict()
        all_hold = all_hold and lin.condition_holds
    payload["conditions_hold"] = all_hold
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK if all_hold else EXIT_CONDITION_FAILED


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolshrink",
        description="Shrinkage estimation toward a pooled mean: risk simulation, "
        "point estimation, and minimaxity checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo risk comparison")
    sim.add_argument("--preset", help="named experiment preset (table1)")
    sim.add_argument("--config", help="path to a JSON run config")
    sim.add_argument("--reps", type=int, default=None, help="replication count override")
    sim.add_argument("--seed", type=int, default=None, help="RNG seed override")
    sim.add_argument("--alpha", type=float, default=0.05, help="PT significance level")
    sim.add_argument("--out", default=None, help="output file (default: stdout)")
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="evaluate the estimators on one data set")
    est.add_argument("data", help="CSV with k rows of p values plus a final row holding S")
    est.add_argument("--config", required=True, help="path to a JSON config with the model")
    est.add_argument(
        "--estimators",
        default="PT,JS,EB,HB,HEB",
        help="comma-separated subset of PT,JS,EB,HB,HEB",
    )
    est.add_argument("--alpha", type=float, default=0.05, help="PT significance level")
    est.set_defaults(func=cmd_estimate)

    chk = sub.add_parser("check", help="print the minimaxity condition report")
    chk.add_argument("--config", required=True, help="path to a JSON config with the model")
    chk.add_argument("--weights", default=None, help="comma-separated linear-combination weights")
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as exc:  # noqa: BLE001 - runtime failures map to a distinct code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
