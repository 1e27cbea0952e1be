"""Command line entry point.

    tracksim <scenario> --config PATH [--seed N] [--out DIR] [--trials N] [--threads N]
    tracksim estimate --config PATH --record REC.csv
    tracksim weyl-check --config PATH
    tracksim plot FILE.csv [FILE.csv ...] [--out DIR]

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

from .classical import MeasurementRecord
from .config import SCENARIOS, load_config
from .errors import ConfigError, InvalidParameterError, NumericError, UnsupportedBackendError
from .estimators import free_momentum_estimate, free_position_estimate, least_squares_estimate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tracksim", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS + ("weyl-check",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--trials", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--plots", action="store_true", help="also write SVG plots")
        if name == "estimate":
            p.add_argument("--record", help="estimate from one record CSV and print JSON")
    p = sub.add_parser("plot")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out")
    return ap

def _load(args):
    scenario = "weyl" if args.command == "weyl-check" else args.command
    cfg = load_config(args.config, scenario)
    if cfg.source.get("scenario") and cfg.scenario != scenario:
        raise ConfigError(f"config is for scenario '{cfg.scenario}', not '{scenario}'",
                          key="scenario", line=cfg.source["scenario"])
    changes = {"scenario": scenario}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.trials is not None:
        changes["n_trials"] = args.trials
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.replace(**changes)

def estimate_record(cfg, record: MeasurementRecord) -> dict:
    """Both estimators on a single record, as a JSON-ready dict."""
    from .experiments import build_dynamics

    dyn = build_dynamics(cfg)
    J = dyn.symplectic_map()
    if record.d != J.d:
        raise InvalidParameterError(f"record dimension {record.d} does not match dynamics dimension {J.d}")
    out = {"outcomes": len(record)}
    n_free = len(record) - 1
    if cfg.dynamics_kind == "free" and n_free >= 1:
        out["free"] = {"n": n_free,
                       "x": free_position_estimate(record, n_free, tau_over_m=cfg.dynamics_tau).tolist(),
                       "p": free_momentum_estimate(record, n_free, cfg.dynamics_tau).tolist()}
    if len(record) >= 2:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            xi, diag = least_squares_estimate(J, record)
        out["lsq"] = {"x": xi.x.tolist(), "p": xi.p.tolist(),
                      "sigma_n_min_eig": diag.sigma_n_min_eig, "condition": diag.condition,
                      "n_used": diag.n_used, "warnings": [str(w.message) for w in caught]}
    return out

def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "plot":
            from .plots import emit_plots
            for path in emit_plots(args.csv, args.out):
                print(path)
            return EXIT_OK
        cfg = _load(args)
        if args.command == "estimate" and args.record:
            record = MeasurementRecord.from_csv(args.record)
            print(json.dumps(estimate_record(cfg, record), indent=2))
            return EXIT_OK
        from .experiments import run_scenario
        result = run_scenario(cfg)
        for kind, path in result.paths.items():
            print(f"{kind}: {path}")
        if args.plots:
            from .plots import emit_plots
            try:
                tables = [p for k, p in result.paths.items() if str(p).endswith(".csv")]
                for path in emit_plots(tables):
                    print(f"plot: {path}")
            except Exception as exc:    # plotting never changes the run's outcome
                print(f"plotting failed: {exc}", file=sys.stderr)
        if result.failures:
            print(f"{len(result.failures)} trial(s) failed; see {result.paths['failures']}", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK
    except (ConfigError, InvalidParameterError, UnsupportedBackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

if __name__ == "__main__":
    sys.exit(main())
