"""Static SVG plots of scenario CSV outputs.

The plot kind is read off the column names. Plotting runs after all CSVs are
written, so a plotting failure cannot affect them.
"""
from __future__ import annotations

import math
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import InvalidParameterError  # noqa: E402

# fixed hash salt and no timestamp keep SVG bytes reproducible
plt.rcParams["svg.hashsalt"] = "tracksim"


def read_table(path) -> tuple[dict, list[str], list[dict]]:
    """Parse a CSV with ``# key: value`` metadata lines; errors name the row."""
    meta, columns, rows = {}, None, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            cells = line.split(",")
            if columns is None:
                columns = [c.strip() for c in cells]
                if not all(columns):
                    raise InvalidParameterError(f"{path}: row {lineno}: empty column name in header")
                continue
            if len(cells) != len(columns):
                raise InvalidParameterError(
                    f"{path}: row {lineno}: expected {len(columns)} fields, got {len(cells)}")
            rows.append({c: _cell(v) for c, v in zip(columns, cells)})
    if columns is None:
        columns = []
    return meta, columns, rows


def _cell(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _positive(v):
    return isinstance(v, (int, float)) and v > 0 and math.isfinite(v)


def emit_plots(csv_paths, out_dir=None) -> list[Path]:
    """Write one or more SVGs per input CSV and return their paths."""
    written = []
    for csv_path in csv_paths:
        csv_path = Path(csv_path)
        target = Path(out_dir) if out_dir is not None else csv_path.parent
        target.mkdir(parents=True, exist_ok=True)
        _, columns, rows = read_table(csv_path)
        stem = target / csv_path.stem
        if not rows:
            warnings.warn(f"{csv_path} has no data rows; writing empty axes", RuntimeWarning, stacklevel=2)
            fig, ax = plt.subplots()
            ax.set_title(csv_path.stem)
            written.append(_save(fig, stem.with_suffix(".svg")))
        elif "mse" in columns:
            written += _plot_mse(rows, stem)
        elif "energy_distance" in columns:
            written.append(_plot_xy(rows, stem, "epsilon", "energy_distance", None))
        elif "residual" in columns:
            written.append(_plot_xy(rows, stem, "epsilon", "residual", "check"))
        elif "angular_error_q95" in columns:
            written.append(_plot_xy(rows, stem, "n", "angular_error_q95", None))
        elif "angular_error" in columns:
            written.append(_plot_angles(rows, stem))
        elif "step" in columns:
            written.append(_plot_tracks(rows, columns, stem))
        else:
            warnings.warn(f"{csv_path}: no plot defined for columns {columns}", RuntimeWarning, stacklevel=2)
    return written


def _plot_mse(rows, stem: Path) -> list[Path]:
    out = []
    for comp in sorted({r["component"] for r in rows}):
        fig, ax = plt.subplots()
        for est in sorted({r["estimator"] for r in rows}):
            pts = sorted((r["n"], r["mse"]) for r in rows
                         if r["component"] == comp and r["estimator"] == est and _positive(r["mse"]))
            if pts:
                ax.plot(*zip(*pts), marker="o", label=est)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel(f"MSE ({comp})")
        ax.legend()
        out.append(_save(fig, stem.with_name(f"{stem.name}_{comp}.svg")))
    return out


def _plot_xy(rows, stem: Path, xcol, ycol, group) -> Path:
    fig, ax = plt.subplots()
    groups = sorted({r[group] for r in rows}) if group else [None]
    for g in groups:
        sel = [r for r in rows if g is None or r[group] == g]
        pts = sorted((r[xcol], r[ycol]) for r in sel if _positive(r[ycol]))
        if pts:
            ax.plot(*zip(*pts), marker="o", label=g)
        if "upper_bound" in (sel[0] if sel else {}):
            ub = sorted((r[xcol], r["upper_bound"]) for r in sel if _positive(r["upper_bound"]))
            if ub:
                ax.plot(*zip(*ub), ls="--", label=f"{g} bound")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xcol)
    ax.set_ylabel(ycol)
    if group:
        ax.legend()
    return _save(fig, stem.with_suffix(".svg"))


def _plot_angles(rows, stem: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    n_max = max(r["n"] for r in rows)
    sel = [r for r in rows if r["n"] == n_max]
    ax1.hist([r["azimuth"] for r in sel], bins=24, range=(-math.pi, math.pi))
    ax1.set_xlabel("estimated direction (rad)")
    ax2.hist([r["angular_error"] for r in sel], bins=30)
    ax2.set_xlabel(f"angular error at n={n_max} (rad)")
    return _save(fig, stem.with_suffix(".svg"))


def _plot_tracks(rows, columns, stem: Path, max_tracks: int = 10) -> Path:
    fig, ax = plt.subplots()
    qcols = [c for c in columns if c.startswith("q_")]
    trials = sorted({r.get("trial", 0) for r in rows})[:max_tracks]
    for t in trials:
        sel = [r for r in rows if r.get("trial", 0) == t]
        for c in qcols:
            ax.plot([r["step"] for r in sel], [r[c] for r in sel], lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("outcome")
    return _save(fig, stem.with_suffix(".svg"))
