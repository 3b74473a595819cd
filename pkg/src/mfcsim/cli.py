"""Command-line entry point.

Exit status: 0 on success or PASS, 1 on FAIL, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .bounds import worst_eigenstate, bound_report
from .design import DEFAULT_ALPHA_GRID, design_report
from .harness.config import ConfigError, load_config, load_model
from .harness.ensemble import EnsembleFailure, compare_modes, gamma_scan, run_ensemble
from .harness.results import export_results, write_curves
from .harness.verify import THEOREMS, HypothesisMismatch, verify_theorem
from .states import TargetState

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_grid(text: str) -> np.ndarray:
    """``a:b:n`` -> ``n`` evenly spaced points from ``a`` to ``b`` inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must look like a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"grid must look like a:b:n, got {text!r}") from None
    if n < 1:
        raise UsageError("grid needs at least one point")
    return np.linspace(a, b, n)


def _table(rows: list[dict], keys: list[str] | None = None) -> str:
    if not rows:
        return ""
    keys = keys or list(rows[0])
    lines = ["\t".join(keys)]
    for r in rows:
        lines.append("\t".join(_fmt(r[k]) for k in keys))
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    result = run_ensemble(cfg, args.workers)
    s = result.summary()
    print(_table([{k: v for k, v in s.items()}]))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export_results(result, out / "ensemble.json", "json")
        export_results(result, out / "trajectories.csv", "csv")
        if args.plot_data:
            write_curves(
                out / "curves",
                {
                    "mean_distance": (result.times, {"mean_distance": result.mean_distance}),
                    "final_distance": (
                        np.arange(len(result.final_distances)),
                        {"final_distance": result.final_distances, "tail_max": result.tail_max},
                    ),
                },
            )
        if not args.no_figures:
            plotting.ensemble_figure(result, out / "mean_distance.png")
            plotting.final_distance_histogram(result, out / "final_distance.png")
        print(f"wrote\t{out}")
    return EXIT_OK


def _grid_or_default(text):
    return parse_grid(text) if text else np.array(DEFAULT_ALPHA_GRID)


def cmd_design(args) -> int:
    model = load_model(args.model)
    rep = design_report(model, _grid_or_default(args.grid))
    if args.json:
        _print_json(rep)
    else:
        print(_table(rep["per_eigenstate"], ["d", "rank_ok_at_alpha", "first_alpha_for_d"]))
        print(f"alpha\t{rep['alpha']}")
        print("edges\t" + " ".join(f"{i}-{j}" for i, j in rep["edges"]))
        print(f"connected\t{rep['connected']}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    model = load_model(args.model)
    eta = model.eta if args.eta is None else args.eta
    if not 0 <= eta <= 1:
        raise UsageError(f"--eta must lie in [0, 1], got {eta}")
    worst, wrep = worst_eigenstate(model.L.data, model.H0, eta, model.kappa, args.as_printed)
    reports = []
    for d in range(1, model.dim + 1):
        rep = bound_report(model.L.data, TargetState.for_model(model, d), eta, model.kappa, args.as_printed)
        rep.commuting = wrep.commuting
        reports.append(rep.to_dict())
    if args.json:
        _print_json({"eta": eta, "reports": reports, "worst_eigenstate": worst, "commuting": wrep.commuting})
    else:
        keys = ["d", "dissipation_at_target", "delta_d", "phi1", "phi2", "capital_delta_d", "drift_identity_residual"]
        if args.as_printed:
            keys.append("capital_delta_d_as_printed")
        print(_table(reports, keys))
        print(f"worst_eigenstate\t{worst}")
        if wrep.commuting:
            print("note\t[H0, L] = 0: no nonzero impossibility certificate")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    rep = compare_modes(cfg, args.workers, args.min_probability)
    if args.json:
        _print_json({k: v for k, v in rep.items() if k != "curves"})
    else:
        rows = []
        for mode in ("mfc", "unitary_olc", "master_eq_olc"):
            r = rep[mode]
            rows.append(
                {
                    "mode": mode,
                    "final_distance": r["final_distance"],
                    "final_purity": r["final_purity"],
                    "final_entropy": r["final_entropy"],
                    "distance_floor": r.get("distance_floor"),
                }
            )
        print(_table(rows))
        print(f"convergence_probability\t{rep['mfc']['convergence_probability']:.6g}")
        for k, v in rep["checks"].items():
            print(f"check\t{k}\t{v}")
        print(f"verdict\t{rep['verdict']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(json.dumps(rep, indent=2, sort_keys=True, default=_json_default) + "\n")
        c = rep["curves"]
        write_curves(
            out / "curves",
            {"distance": (np.asarray(c["times"]), {k: np.asarray(v) for k, v in c.items() if k != "times"})},
        )
        plotting.comparison_figure(rep, out / "compare.png")
    return EXIT_OK if rep["verdict"] == "PASS" else EXIT_FAIL


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    v = verify_theorem(cfg, args.theorem, args.workers)
    if args.json:
        _print_json(v.to_dict())
    else:
        print(f"{v.theorem}\t{v.label}")
        for k, val in v.margins.items():
            if isinstance(val, dict):
                for kk, vv in val.items():
                    print(f"  {k}.{kk}\t{_fmt(vv)}")
            else:
                print(f"  {k}\t{_fmt(val)}")
        for n in v.notes:
            print(f"note\t{n}")
    return EXIT_OK if v.passed else EXIT_FAIL


def cmd_gamma_scan(args) -> int:
    cfg = load_config(args.config)
    gammas = parse_grid(args.grid)
    if np.any((gammas <= 0) | (gammas >= 1)):
        raise UsageError("every gamma in the grid must lie strictly between 0 and 1")
    rows = gamma_scan(cfg, gammas, args.workers)
    print(_table(rows))
    best = max(rows, key=lambda r: (r["probability"], -abs(r["gamma"] - 0.5)))
    print(f"best_gamma\t{best['gamma']:.6g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_curves(out, {"gamma_scan": (np.array([r["gamma"] for r in rows]), {
            k: np.array([r[k] for r in rows]) for k in ("probability", "wilson_low", "wilson_high")
        })})
        plotting.gamma_scan_figure(rows, out / "gamma_scan.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfcsim", description="Measurement-based feedback control simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a feedback ensemble")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--plot-data", action="store_true", help="also write per-curve CSV files")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("design", help="rank condition and control-graph report")
    s.add_argument("--model", required=True)
    s.add_argument("--grid", help="alpha grid a:b:n (default -10:10:41)")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("bounds", help="impossibility bounds per eigenstate")
    s.add_argument("--model", required=True)
    s.add_argument("--eta", type=float)
    s.add_argument("--as-printed", action="store_true", help="also report the unsquared numerator variant")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("compare", help="feedback versus open-loop models")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--min-probability", type=float, default=0.9)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("verify", help="run a property suite")
    s.add_argument("--config", required=True)
    s.add_argument("--theorem", required=True, choices=THEOREMS)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("gamma-scan", help="convergence probability versus gamma")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True, help="a:b:n")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_gamma_scan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError, HypothesisMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnsembleFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
