"""Command-line front end.

    dromest predict|simulate|sweep|validate-envelopes --config CFG [--out PATH]
            [--format csv|json] [--threads N] [--seed S]

Exit codes: 0 success, 1 configuration error, 2 numerical or solver error
(including a failed envelope validation).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .config import COMMANDS, RunConfig, load_config
from .errors import ConfigError, DromestError
from .montecarlo import relative_gap, run_experiment
from .saddle import solve
from .validation import run_suite

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
TRIAL_COLUMNS = ("d", "n", "trial", "seed", "error", "iterations", "converged")
PREDICT_COLUMNS = ("mode", "alpha_star", "alpha_star_sq", "value", "branch", "flags")
SWEEP_COLUMNS = ("axis", "value", "alpha_star_sq", "branch", "flags", "sim_mean", "sim_se", "jump")
VALIDATE_COLUMNS = ("check", "max_deviation", "tolerance", "passed")
JUMP_THRESHOLD = 0.05


def fmt(x) -> str:
    """Fixed CSV formatting: 17 significant digits for floats."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _meta(cfg: RunConfig) -> dict:
    return {"version": __version__, "config": cfg.to_dict()}


# -- commands --------------------------------------------------------------------------


def cmd_predict(cfg: RunConfig, fmt_: str):
    pred = solve(cfg.problem, cfg.solver)
    if fmt_ == "json":
        return _json({"meta": _meta(cfg), "prediction": pred.to_dict()}), None
    row = {
        "mode": pred.mode,
        "alpha_star": pred.alpha_star,
        "alpha_star_sq": pred.alpha_star_sq,
        "value": pred.value,
        "branch": pred.branch,
        "flags": ";".join(pred.flags),
    }
    return _csv(PREDICT_COLUMNS, [row]), _meta(cfg)


def _summary_rows(summary) -> list:
    rows = []
    pred = summary.prediction
    for s in summary.dims:
        stats = [("mean", s.mean), ("std", s.std), ("se", s.se), ("failures", float(s.failures))]
        if pred is not None:
            stats += [("prediction", pred.alpha_star_sq), ("relative_gap", s.relative_gap)]
        rows.extend({"d": s.d, "n": s.n, "trial": name, "error": value} for name, value in stats)
    return rows


def _trial_rows(summary) -> list:
    return [
        {"d": r.d, "n": r.n, "trial": r.trial, "seed": r.seed, "error": r.error, "iterations": r.iterations, "converged": r.converged}
        for r in summary.records
    ]


def cmd_simulate(cfg: RunConfig, fmt_: str):
    spec = cfg.experiment.spec_for(cfg.problem)
    summary = run_experiment(spec, cfg.experiment.fit, cfg.solver, threads=cfg.threads)
    if fmt_ == "json":
        body = {
            "meta": _meta(cfg),
            "prediction": summary.prediction.to_dict(),
            "summary": [s.__dict__ for s in summary.dims],
            "trials": [dict(r.__dict__) for r in summary.records],
        }
        return _json(body), None
    return _csv(TRIAL_COLUMNS, _trial_rows(summary) + _summary_rows(summary)), _meta(cfg)


def cmd_sweep(cfg: RunConfig, fmt_: str):
    problems = cfg.problems()
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            preds = list(pool.map(lambda p: solve(p, cfg.solver), problems))
    else:
        preds = [solve(p, cfg.solver) for p in problems]
    rows = []
    prev = None
    for value, problem, pred in zip(cfg.sweep.values, problems, preds):
        a2 = pred.alpha_star_sq
        row = {
            "axis": cfg.sweep.axis,
            "value": value,
            "alpha_star_sq": a2,
            "branch": pred.branch,
            "flags": ";".join(pred.flags),
            "jump": prev is not None and relative_gap(a2, prev) > JUMP_THRESHOLD,
        }
        if cfg.sweep.simulate:
            summary = run_experiment(cfg.experiment.spec_for(problem), cfg.experiment.fit, predict=False, threads=cfg.threads)
            last = summary.dims[-1]
            row["sim_mean"], row["sim_se"] = last.mean, last.se
        rows.append(row)
        prev = a2
    if fmt_ == "json":
        return _json({"meta": _meta(cfg), "rows": rows}), None
    return _csv(SWEEP_COLUMNS, rows), _meta(cfg)


def cmd_validate_envelopes(cfg: RunConfig, fmt_: str):
    env = cfg.envelopes
    results = run_suite(float(env.get("huber_coefficient_error", 0.0)), float(env.get("huber_delta", 1.0)))
    rows = [{"check": r.name, "max_deviation": r.max_deviation, "tolerance": r.tolerance, "passed": r.passed} for r in results]
    for r in results:
        print(f"{r.name:<22} max deviation {r.max_deviation:.3e} (tol {r.tolerance:.0e}) {'ok' if r.passed else 'FAIL'}", file=sys.stderr)
    ok = all(r.passed for r in results)
    out = _json({"meta": _meta(cfg), "checks": rows, "passed": ok}) if fmt_ == "json" else _csv(VALIDATE_COLUMNS, rows)
    return out, (None if fmt_ == "json" else _meta(cfg)), ok


COMMAND_FUNCS = {"predict": cmd_predict, "simulate": cmd_simulate, "sweep": cmd_sweep, "validate-envelopes": cmd_validate_envelopes}


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dromest", description="Asymptotic error predictions and simulations for robust linear regression.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default="-", help="output path ('-' for stdout, the default)")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--threads", type=int, default=None, help="worker threads (overrides DROMEST_THREADS)")
    p.add_argument("--seed", type=int, default=None, help="override experiment.base_seed")
    return p


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.out != "-" and os.path.exists(args.out) and os.path.samefile(args.out, args.config):
            raise ConfigError("--out must not overwrite the configuration file")
        cfg = load_config(args.config, args.command, args.seed, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMAND_FUNCS[args.command](cfg, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DromestError, ArithmeticError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text, meta = result[0], result[1]
    _write(args.out, text)
    if meta is not None and args.out != "-":
        # CSV cannot carry the resolved configuration; it goes next to the output
        _write(args.out + ".meta.json", _json(meta))
    if len(result) == 3 and not result[2]:
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
