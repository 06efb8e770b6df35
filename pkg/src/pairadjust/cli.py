"""Command-line surface: simulate, match-assign, analyze.

Exit codes: 0 on success, 1 on data or numeric errors, 2 on usage errors
(argparse failures, unknown methods, missing column bindings).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass

import numpy as np

from .core import (
    ContractViolation,
    EstimateReport,
    EstimationError,
    ExperimentData,
    PairingPlan,
    validate_experiment,
)
from .design import (
    AssignmentSeed,
    assign_within_pairs,
    closeness_diagnostics,
    match_pairs_greedy,
    match_pairs_sorted,
    reorder_pairs,
)
from .estimators import AdjustmentSpec, estimate
from .simulation import (
    SUMMARY_FIELDS,
    ModelSpec,
    default_methods,
    method_spec,
    realize_experiment,
    run_monte_carlo,
    summary_rows,
)

__all__ = ["main", "AnalyzeConfig"]

_ANALYZE_METHODS = (
    "unadjusted",
    "naive",
    "naive2",
    "interacted",
    "pfe",
    "int_pfe",
    "lasso",
    "refit",
)


class UsageError(Exception):
    """Bad flags or bindings; maps to exit code 2."""


@dataclass(frozen=True)
class AnalyzeConfig:
    """Column bindings and options for analyzing an experiment CSV."""

    data_path: str
    outcome: str
    treatment: str
    pair_id: str
    x_cols: tuple[str, ...]
    w_cols: tuple[str, ...]
    methods: tuple[str, ...]
    alpha: float = 0.05
    delta_null: float = 0.0
    include_intercepts: bool = False


def _fmt(value) -> str:
    """Stable formatting: floats at 12 significant digits."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _write_rows(rows: list[dict], fields: tuple[str, ...], out_path: str | None) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in fields})
    text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_csv(path: str) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ContractViolation(f"{path}: empty file; a header row is required")
        rows = list(reader)
    return list(reader.fieldnames), rows


# --- simulate ----------------------------------------------------------------


def _dump_dataset(data: ExperimentData, path: str) -> None:
    kx = data.x.shape[1]
    kw = data.w.shape[1]
    fields = (
        ["unit_id", "pair_id", "pair_order", "y", "d"]
        + [f"x{j + 1}" for j in range(kx)]
        + [f"w{j + 1}" for j in range(kw)]
    )
    rows = []
    for order, (a, b) in enumerate(data.plan.pairs, start=1):
        for i in (int(a), int(b)):
            row = {
                "unit_id": i + 1,
                "pair_id": order,
                "pair_order": order,
                "y": float(data.y[i]),
                "d": int(data.d[i]),
            }
            for j in range(kx):
                row[f"x{j + 1}"] = float(data.x[i, j])
            for j in range(kw):
                row[f"w{j + 1}"] = float(data.w[i, j])
            rows.append(row)
    _write_rows(rows, tuple(fields), path)


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = ModelSpec(
        model_id=args.model, n_pairs=args.pairs, delta=args.delta, seed=args.seed
    )
    names = (
        tuple(args.methods.split(","))
        if args.methods
        else default_methods(args.model)
    )
    try:
        kinds = [method_spec(name, args.model, args.pairs) for name in names]
    except ContractViolation as exc:
        raise UsageError(str(exc)) from exc
    if args.dump_data:
        _dump_dataset(realize_experiment(spec, 0), args.dump_data)
    summary = run_monte_carlo(
        spec,
        kinds,
        replications=args.reps,
        n_jobs=args.threads,
        alpha=args.alpha,
        delta_null=args.delta0,
    )
    rows = summary_rows(summary)
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        _write_rows(rows, SUMMARY_FIELDS, args.out)
    return 0


# --- match-assign ------------------------------------------------------------


def cmd_match_assign(args: argparse.Namespace) -> int:
    header, rows = _read_csv(args.data)
    if not rows:
        raise ContractViolation(f"{args.data}: no data rows")
    id_col = args.id_col
    if id_col not in header:
        raise UsageError(f"id column {id_col!r} not in header {header}")
    x_cols = tuple(args.x_cols.split(",")) if args.x_cols else tuple(
        c for c in header if c != id_col
    )
    missing = [c for c in x_cols if c not in header]
    if missing:
        raise UsageError(f"x columns {missing} not in header {header}")
    if not x_cols:
        raise UsageError("no covariate columns to match on")
    if len(rows) % 2 != 0:
        raise ContractViolation(f"{args.data}: odd row count {len(rows)}")

    ids = [row[id_col] for row in rows]
    try:
        x = np.array([[float(row[c]) for c in x_cols] for row in rows])
    except ValueError as exc:
        raise ContractViolation(f"non-numeric covariate value: {exc}") from exc

    if x.shape[1] == 1:
        plan = match_pairs_sorted(x[:, 0])
    else:
        plan = reorder_pairs(match_pairs_greedy(x), x)
    d = assign_within_pairs(plan, AssignmentSeed(args.seed))
    diag = closeness_diagnostics(plan, x)
    print(
        f"within-pair distance: r=1 {diag.mean_within_pair_dist_r1:.6g}, "
        f"r=2 {diag.mean_within_pair_dist_r2:.6g}; "
        f"cross-pair r=2 {diag.cross_pair_dist_r2:.6g}",
        file=sys.stderr,
    )
    out_rows = []
    for order, (a, b) in enumerate(plan.pairs, start=1):
        for i in (int(a), int(b)):
            out_rows.append(
                {
                    "unit_id": ids[i],
                    "pair_id": order,
                    "pair_order": order,
                    "d": int(d[i]),
                }
            )
    _write_rows(out_rows, ("unit_id", "pair_id", "pair_order", "d"), args.out)
    return 0


# --- analyze -----------------------------------------------------------------


def _analyze_spec(name: str, cfg: AnalyzeConfig) -> AdjustmentSpec:
    """Method name -> AdjustmentSpec under the analyze column bindings."""
    have_x = bool(cfg.x_cols)
    have_w = bool(cfg.w_cols)
    if name == "unadjusted":
        return AdjustmentSpec("unadjusted", name=name)
    if name in ("naive", "interacted", "pfe", "int_pfe"):
        if not have_w:
            raise UsageError(f"method {name!r} needs --w-cols")
        kind = name
        return AdjustmentSpec(kind, use_w=True, name=name)
    if name == "naive2":
        if not (have_x and have_w):
            raise UsageError("method 'naive2' needs both --x-cols and --w-cols")
        return AdjustmentSpec("naive", use_x=True, use_w=True, name=name)
    if name in ("lasso", "refit"):
        if not (have_x or have_w):
            raise UsageError(f"method {name!r} needs --x-cols or --w-cols")
        kind = "lasso_intermediate" if name == "lasso" else "refit"
        return AdjustmentSpec(
            kind,
            use_x=have_x,
            use_w=have_w,
            include_intercepts=cfg.include_intercepts,
            name=name,
        )
    raise UsageError(f"unknown method {name!r}; choose from {_ANALYZE_METHODS}")


def load_experiment(cfg: AnalyzeConfig) -> ExperimentData:
    """Read an experiment CSV under the config's column bindings.

    Pair order is the first-appearance order of ``pair_id``: the variance
    estimator groups consecutive pairs, so the file's ordering is treated
    as meaningful and preserved.
    """
    header, rows = _read_csv(cfg.data_path)
    bound = [cfg.outcome, cfg.treatment, cfg.pair_id, *cfg.x_cols, *cfg.w_cols]
    missing = [c for c in bound if c not in header]
    if missing:
        raise UsageError(f"columns {missing} not in header {header}")
    if len(bound) != len(set(bound)):
        raise UsageError("column bindings must be disjoint")
    if not rows:
        raise ContractViolation(f"{cfg.data_path}: no data rows")

    pair_order: list[str] = []
    members: dict[str, list[int]] = {}
    for i, row in enumerate(rows):
        pid = row[cfg.pair_id]
        if pid not in members:
            members[pid] = []
            pair_order.append(pid)
        members[pid].append(i)
    bad_size = [pid for pid in pair_order if len(members[pid]) != 2]
    if bad_size:
        raise ContractViolation(
            f"pair {bad_size[0]!r} has {len(members[bad_size[0]])} rows (need exactly 2)"
        )

    def col(name: str) -> np.ndarray:
        try:
            return np.array([float(row[name]) for row in rows])
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"column {name!r} has non-numeric values") from exc

    y = col(cfg.outcome)
    d_raw = col(cfg.treatment)
    if not np.isin(d_raw, (0.0, 1.0)).all():
        raise ContractViolation("treatment column must contain only 0 and 1")
    d = d_raw.astype(int)
    if cfg.x_cols:
        x = np.column_stack([col(c) for c in cfg.x_cols])
    else:
        x = np.zeros((len(rows), 1))  # placeholder when no matching covariates bound
    w = (
        np.column_stack([col(c) for c in cfg.w_cols])
        if cfg.w_cols
        else np.zeros((len(rows), 0))
    )
    pairs = np.array([members[pid] for pid in pair_order])
    plan = PairingPlan(pairs)

    pair_treated = d[pairs].sum(axis=1)
    bad = np.flatnonzero(pair_treated != 1)
    if bad.size:
        raise ContractViolation(
            f"pair {pair_order[int(bad[0])]!r} does not have exactly one treated unit"
        )
    ids = tuple(str(i + 1) for i in range(len(rows)))
    data = ExperimentData(y=y, d=d, x=x, w=w, plan=plan, unit_ids=ids)
    check = validate_experiment(data)
    if not check.ok:
        raise ContractViolation("; ".join(check.failures))
    return data


_REPORT_FIELDS = (
    "method",
    "delta_hat",
    "sigma_hat",
    "std_error",
    "ci_lower",
    "ci_upper",
    "alpha",
    "reject_h0",
    "delta_null",
)


def _report_dict(report: EstimateReport) -> dict:
    return {
        "delta_hat": report.delta_hat,
        "sigma_hat": report.sigma_hat,
        "std_error": report.std_error,
        "ci_lower": report.ci_lower,
        "ci_upper": report.ci_upper,
        "alpha": report.alpha,
        "reject_h0": report.reject_h0,
        "delta_null": report.delta_null,
        "method": report.method,
        "diagnostics": {k: v for k, v in report.diagnostics.items()},
    }


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = AnalyzeConfig(
        data_path=args.data,
        outcome=args.outcome,
        treatment=args.treatment,
        pair_id=args.pair_id,
        x_cols=tuple(args.x_cols.split(",")) if args.x_cols else (),
        w_cols=tuple(args.w_cols.split(",")) if args.w_cols else (),
        methods=tuple(args.methods.split(",")),
        alpha=args.alpha,
        delta_null=args.delta0,
        include_intercepts=args.include_intercepts,
    )
    specs = [_analyze_spec(name, cfg) for name in cfg.methods]
    data = load_experiment(cfg)
    reports = [
        estimate(data, spec, alpha=cfg.alpha, delta_null=cfg.delta_null)
        for spec in specs
    ]
    if args.format == "json":
        text = json.dumps([_report_dict(r) for r in reports], indent=2) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        rows = [
            {field: getattr(r, field) for field in _REPORT_FIELDS} for r in reports
        ]
        _write_rows(rows, _REPORT_FIELDS, args.out)
    return 0


# --- parser ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairadjust",
        description="Matched-pairs experiments: simulate, match-assign, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo study and emit summary CSV")
    sim.add_argument("--model", type=int, choices=range(1, 16), required=True)
    sim.add_argument("--pairs", type=int, required=True, help="number of pairs n")
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--delta", type=float, default=0.0, help="true treatment effect")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument(
        "--methods",
        default=None,
        help="comma list (default: per-model menu, e.g. unadjusted,naive,naive2,pfe,refit)",
    )
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--delta0", type=float, default=0.0)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument(
        "--dump-data",
        default=None,
        help="also write replication 0's realized dataset to this CSV",
    )
    sim.set_defaults(func=cmd_simulate)

    ma = sub.add_parser("match-assign", help="pair units from covariates and randomize")
    ma.add_argument("--data", required=True, help="CSV with unit ids and covariates")
    ma.add_argument("--id-col", default="unit_id")
    ma.add_argument("--x-cols", default=None, help="comma list (default: all non-id)")
    ma.add_argument("--seed", type=int, default=0)
    ma.add_argument("--out", default=None)
    ma.set_defaults(func=cmd_match_assign)

    an = sub.add_parser("analyze", help="estimate ATEs on an experiment CSV")
    an.add_argument("--data", required=True)
    an.add_argument("--outcome", required=True)
    an.add_argument("--treatment", required=True)
    an.add_argument("--pair-id", required=True)
    an.add_argument("--x-cols", default=None)
    an.add_argument("--w-cols", default=None)
    an.add_argument("--methods", default="unadjusted")
    an.add_argument("--alpha", type=float, default=0.05)
    an.add_argument("--delta0", type=float, default=0.0)
    an.add_argument("--include-intercepts", action="store_true")
    an.add_argument("--out", default=None)
    an.add_argument("--format", choices=("csv", "json"), default="csv")
    an.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ContractViolation, EstimationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
