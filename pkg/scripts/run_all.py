"""Run every shipped configuration and write CSVs plus SVG plots.

    python scripts/run_all.py [--out DIR] [--only NAME ...] [--threads N]
"""
import argparse
import sys
import time
from pathlib import Path

from tracksim.config import load_config
from tracksim.experiments import run_scenario
from tracksim.plots import emit_plots

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--only", nargs="*", help="config stems to run, e.g. estimate_free")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    failed = 0
    for path in sorted(CONFIGS.glob("*.cfg")):
        if args.only and path.stem not in args.only:
            continue
        cfg = load_config(path).replace(output_dir=str(Path(args.out) / path.stem), threads=args.threads)
        t0 = time.perf_counter()
        res = run_scenario(cfg)
        tables = [p for p in res.paths.values() if str(p).endswith(".csv")]
        plots = emit_plots(tables)
        print(f"{path.stem:18s} {time.perf_counter() - t0:7.1f}s  {len(res.failures)} failed trials  "
              f"{len(plots)} plots  -> {cfg.output_dir}")
        failed += bool(res.failures)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
