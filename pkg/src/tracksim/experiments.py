"""Seeded Monte Carlo scenarios driven by an ``ExperimentConfig``.

Every trial draws from its own generator, derived from
``(master_seed, stream, trial)``, so outputs do not depend on the number of
worker processes. Results are merged in trial order and only the parent
process writes files.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stats
from .classical import IsotropicShell, MomentumSmeared, PointMass, PositionSmeared, orbit_array, simulate_track
from .config import ExperimentConfig
from .errors import NumericError
from .estimators import free_momentum_estimate, free_position_estimate, least_squares_estimate
from .instrument import BumpCosineKernel, GaussianKernel
from .phasespace import Free, Harmonic, Magnetic, PhasePoint
from .quantum import coherent_gaussian, grid_for, Grid, make_coherent, run_chain
from .weylcalc import (AtomicSymbol, classical_limit_residual, egorov_check, op_apply, probe_states,
                       star_product, weyl_relation_residual)

# seed-tree streams, one per independent source of randomness
STREAM_TRACK, STREAM_ESTIMATE, STREAM_CONVERGE, STREAM_REFERENCE, STREAM_SYMMETRY, STREAM_WEYL = range(6)


def trial_rng(master_seed: int, stream: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(stream, trial)))


# -- builders -----------------------------------------------------------------

def build_dynamics(cfg: ExperimentConfig):
    if cfg.dynamics_kind == "free":
        return Free(cfg.dynamics_tau, cfg.dynamics_d)
    if cfg.dynamics_kind == "harmonic":
        return Harmonic.isotropic(cfg.dynamics_omega, cfg.dynamics_tau, cfg.dynamics_d)
    return Magnetic(cfg.dynamics_beta, cfg.dynamics_tau)


def build_kernel(cfg: ExperimentConfig):
    if cfg.kernel_kind == "gaussian":
        return GaussianKernel.isotropic(cfg.kernel_sigma, cfg.d)
    return BumpCosineKernel(np.full(cfg.d, cfg.kernel_halfwidth))


def build_mu0(cfg: ExperimentConfig):
    x0, p0 = np.array(cfg.mu0_x0), np.array(cfg.mu0_p0)
    profile = GaussianKernel.isotropic(cfg.mu0_spread, cfg.d)
    if cfg.mu0_kind == "point":
        return PointMass(PhasePoint(x0, p0))
    if cfg.mu0_kind == "position":
        return PositionSmeared(x0, p0, profile)
    if cfg.mu0_kind == "momentum":
        return MomentumSmeared(x0, p0, profile)
    return IsotropicShell(x0, cfg.mu0_speed)


def build_grid(cfg: ExperimentConfig, epsilon: float, n: int) -> Grid:
    """A grid covering the classical track of the initial centre with margin."""
    J = build_dynamics(cfg).symplectic_map()
    orbit = orbit_array(J, np.concatenate([cfg.mu0_x0, cfg.mu0_p0]), n)
    width_x = epsilon ** cfg.coherent_beta
    width_p = epsilon ** (1 - cfg.coherent_beta)
    spread = cfg.grid_margin * (width_x + width_p * cfg.dynamics_tau * max(n, 1))
    lo, hi = orbit[:, 0].min() - spread, orbit[:, 0].max() + spread
    if cfg.grid_n:
        return Grid(cfg.grid_n, lo, hi)
    p_max = np.abs(orbit[:, 1]).max() + cfg.grid_margin * width_p
    return grid_for(lo, hi, p_max, epsilon)


def initial_quantum_state(cfg: ExperimentConfig, epsilon: float, n: int):
    if cfg.backend == "gaussian":
        return coherent_gaussian(cfg.mu0_x0, cfg.mu0_p0, epsilon, cfg.coherent_beta)
    grid = build_grid(cfg, epsilon, n)
    return make_coherent(grid, cfg.mu0_x0[0], cfg.mu0_p0[0], epsilon, cfg.coherent_beta)


# -- orchestration ------------------------------------------------------------

@dataclass
class ScenarioResult:
    paths: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def _guarded(fn, args):
    try:
        return "ok", fn(*args)
    except NumericError as exc:
        return "fail", {"error": type(exc).__name__, "message": str(exc),
                        "diagnostics": {k: _jsonable(v) for k, v in exc.diagnostics.items()}}


def _guarded_star(item):
    fn, args = item
    return _guarded(fn, args)


def map_trials(fn, arg_list, threads: int = 1) -> list:
    """Apply ``fn(*args)`` to each argument tuple; results keep input order."""
    items = [(fn, args) for args in arg_list]
    if threads <= 1 or len(items) < 2:
        return [_guarded_star(it) for it in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_guarded_star, items, chunksize=chunk))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (tuple, list)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {k: _jsonable(u) for k, u in v.items()}
    return v


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, columns, rows, metadata: dict):
    with open(path, "w", newline="") as fh:
        for key, value in metadata.items():
            fh.write(f"# {key}: {_fmt_meta(value)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt_meta(value):
    if isinstance(value, tuple):
        return " ".join(_fmt(v) for v in value)
    return _fmt(value)


def write_jsonl(path: Path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def _metadata(cfg: ExperimentConfig, **extra) -> dict:
    meta = {"scenario": cfg.scenario}
    meta.update({k: v for k, v in cfg.as_dict().items() if k not in ("scenario", "output.dir", "threads")})
    meta.update(extra)
    return meta


def _outputs(cfg: ExperimentConfig, *names) -> list[Path]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [out / f"{cfg.prefix}_{name}" for name in names]


def _collect(results, trial_ids, failures_extra=None):
    ok, failures = [], []
    for tid, (status, value) in zip(trial_ids, results):
        if status == "ok":
            ok.append((tid, value))
        else:
            failures.append({"trial": tid, **value, **(failures_extra or {})})
    return ok, failures


def run_scenario(cfg: ExperimentConfig) -> ScenarioResult:
    runner = {"track": _run_track, "estimate": _run_estimate, "converge": _run_converge,
              "weyl": _run_weyl, "symmetry": _run_symmetry}[cfg.scenario]
    return runner(cfg)


# -- track --------------------------------------------------------------------

def _track_trial(cfg: ExperimentConfig, trial: int):
    n = cfg.n_steps[0]
    rng = trial_rng(cfg.master_seed, STREAM_TRACK, trial)
    dyn = build_dynamics(cfg)
    kernel = build_kernel(cfg)
    if cfg.backend == "classical":
        xi0, rec = simulate_track(dyn.symplectic_map(), build_mu0(cfg), kernel, n, rng)
        return rec.outcomes, {"xi0": xi0.vector}
    state = initial_quantum_state(cfg, cfg.epsilon[0], n)
    res = run_chain(state, dyn, kernel, n, rng)
    return res.record.outcomes, {"log_likelihood": res.log_likelihood, "epsilon": cfg.epsilon[0]}


def _run_track(cfg: ExperimentConfig) -> ScenarioResult:
    csv_path, jsonl_path, fail_path = _outputs(cfg, "tracks.csv", "trials.jsonl", "failures.jsonl")
    trials = list(range(cfg.n_trials))
    ok, failures = _collect(map_trials(_track_trial, [(cfg, t) for t in trials], cfg.threads), trials)
    columns = ["trial", "step"] + [f"q_{i + 1}" for i in range(cfg.d)]
    rows = [(t, k, *q) for t, (outcomes, _) in ok for k, q in enumerate(outcomes)]
    write_table(csv_path, columns, rows, _metadata(cfg))
    write_jsonl(jsonl_path, [{"trial": t, **info} for t, (_, info) in ok])
    write_jsonl(fail_path, failures)
    return ScenarioResult({"csv": csv_path, "jsonl": jsonl_path, "failures": fail_path}, failures,
                          {"trials": len(ok)})


# -- estimate -----------------------------------------------------------------

def _estimate_trial(cfg: ExperimentConfig, trial: int):
    dyn = build_dynamics(cfg)
    J = dyn.symplectic_map()
    use_free = "free" in cfg.estimate_estimators and cfg.dynamics_kind == "free"
    use_lsq = "lsq" in cfg.estimate_estimators
    length = max(max(cfg.n_steps) + 1 if use_free else 0, 2 * max(cfg.n_steps) + 2 if use_lsq else 0)
    rng = trial_rng(cfg.master_seed, STREAM_ESTIMATE, trial)
    xi0, rec = simulate_track(J, build_mu0(cfg), build_kernel(cfg), length - 1, rng)
    q = rec.outcomes
    errors = []     # (n, estimator, squared error in x, squared error in p, min eig)
    for n in cfg.n_steps:
        if use_free and n >= 1:
            p = free_momentum_estimate(q, n, cfg.dynamics_tau)
            x = free_position_estimate(q, n, tau_over_m=cfg.dynamics_tau)
            errors.append((n, "free", float(np.sum((x - xi0.x) ** 2)), float(np.sum((p - xi0.p) ** 2)),
                           math.nan))
        if use_lsq:
            est, diag = least_squares_estimate(J, q[: 2 * n + 2], n)
            errors.append((n, "lsq", float(np.sum((est.x - xi0.x) ** 2)),
                           float(np.sum((est.p - xi0.p) ** 2)), diag.sigma_n_min_eig))
    return xi0.vector, errors


def _run_estimate(cfg: ExperimentConfig) -> ScenarioResult:
    csv_path, jsonl_path, fail_path = _outputs(cfg, "mse.csv", "trials.jsonl", "failures.jsonl")
    trials = list(range(cfg.n_trials))
    ok, failures = _collect(map_trials(_estimate_trial, [(cfg, t) for t in trials], cfg.threads), trials)
    table: dict = {}
    for _, (_, errors) in ok:
        for n, est, ex, ep, eig in errors:
            table.setdefault((n, est), []).append((ex, ep, eig))
    rows = []
    for (n, est), vals in table.items():
        arr = np.array(vals)
        m = arr.shape[0]
        for j, comp in enumerate(("x", "p")):
            se = float(arr[:, j].std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
            rows.append((n, est, comp, float(arr[:, j].mean()), se, m, float(arr[0, 2])))
    write_table(csv_path, ["n", "estimator", "component", "mse", "stderr", "trials", "sigma_n_min_eig"],
                rows, _metadata(cfg))
    write_jsonl(jsonl_path, [{"trial": t, "xi0": xi0,
                              "errors": [{"n": e[0], "estimator": e[1], "sq_err_x": e[2], "sq_err_p": e[3]}
                                         for e in errs]} for t, (xi0, errs) in ok])
    write_jsonl(fail_path, failures)
    return ScenarioResult({"csv": csv_path, "jsonl": jsonl_path, "failures": fail_path}, failures,
                          {"rows": rows})


# -- converge -----------------------------------------------------------------

def _converge_trial(cfg: ExperimentConfig, epsilon: float, trial: int):
    n = cfg.n_steps[0]
    # the generator ignores epsilon: trials share random numbers across the sweep
    rng = trial_rng(cfg.master_seed, STREAM_CONVERGE, trial)
    state = initial_quantum_state(cfg, epsilon, n)
    res = run_chain(state, build_dynamics(cfg), build_kernel(cfg), n, rng)
    return res.record.outcomes.ravel()


def classical_reference(cfg: ExperimentConfig, size: int) -> np.ndarray:
    J = build_dynamics(cfg).symplectic_map()
    mu0, kernel, n = build_mu0(cfg), build_kernel(cfg), cfg.n_steps[0]
    out = np.empty((size, (n + 1) * cfg.d))
    for t in range(size):
        _, rec = simulate_track(J, mu0, kernel, n, trial_rng(cfg.master_seed, STREAM_REFERENCE, t))
        out[t] = rec.outcomes.ravel()
    return out


def record_energy_distance(cfg: ExperimentConfig, samples: np.ndarray) -> tuple[float, str]:
    """Energy statistic of flattened records against the classical record law.

    With a point-mass start and an isotropic Gaussian kernel the classical law
    is N(orbit, sigma^2 I) and the reference terms are exact; otherwise a
    classical sample of equal size is drawn.
    """
    if cfg.mu0_kind == "point" and cfg.kernel_kind == "gaussian":
        J = build_dynamics(cfg).symplectic_map()
        orbit = orbit_array(J, np.concatenate([cfg.mu0_x0, cfg.mu0_p0]), cfg.n_steps[0])[:, : cfg.d]
        return stats.energy_distance_to_normal(samples, orbit.ravel(), cfg.kernel_sigma), "closed_form"
    return stats.energy_distance(samples, classical_reference(cfg, samples.shape[0])), "two_sample"


def _run_converge(cfg: ExperimentConfig) -> ScenarioResult:
    csv_path, jsonl_path, fail_path = _outputs(cfg, "energy.csv", "trials.jsonl", "failures.jsonl")
    rows, failures, records = [], [], []
    trials = list(range(cfg.n_trials))
    for eps in cfg.epsilon:
        ok, fail = _collect(map_trials(_converge_trial, [(cfg, eps, t) for t in trials], cfg.threads),
                            trials, {"epsilon": eps})
        failures += fail
        if len(ok) < 2:
            rows.append((eps, math.nan, len(ok), "none"))
            continue
        samples = np.array([v for _, v in ok])
        dist, method = record_energy_distance(cfg, samples)
        rows.append((eps, dist, len(ok), method))
        records += [{"epsilon": eps, "trial": t, "outcomes": v} for t, v in ok]
    write_table(csv_path, ["epsilon", "energy_distance", "trials", "reference"], rows, _metadata(cfg))
    write_jsonl(jsonl_path, records)
    write_jsonl(fail_path, failures)
    return ScenarioResult({"csv": csv_path, "jsonl": jsonl_path, "failures": fail_path}, failures,
                          {"rows": rows})


# -- symmetry -----------------------------------------------------------------

def _symmetry_trial(cfg: ExperimentConfig, trial: int):
    rng = trial_rng(cfg.master_seed, STREAM_SYMMETRY, trial)
    n_max = max(cfg.n_steps)
    xi0, rec = simulate_track(Free(cfg.dynamics_tau, cfg.d).symplectic_map(), build_mu0(cfg),
                              build_kernel(cfg), n_max, rng)
    out = []
    for n in cfg.n_steps:
        p = free_momentum_estimate(rec, n, cfg.dynamics_tau)
        out.append((n, p, angle_between(p, xi0.p)))
    return xi0.p, out


def angle_between(u, v) -> float:
    u, v = np.asarray(u, float), np.asarray(v, float)
    cross = np.linalg.norm(np.outer(u, v) - np.outer(v, u)) / math.sqrt(2)
    return float(math.atan2(cross, float(u @ v)))


def direction_uniformity(directions: np.ndarray) -> dict:
    """Uniformity tests for unit vectors in d = 2 or 3 dimensions.

    The azimuth is uniform on [0, 2 pi) in both cases and, in three
    dimensions, so is the cosine of the polar angle on [-1, 1].
    """
    u = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    az = (np.arctan2(u[:, 1], u[:, 0]) % (2 * np.pi)) / (2 * np.pi)
    kv, kp = stats.kuiper_uniform(az)
    counts, _ = np.histogram(az, bins=16, range=(0, 1))
    cs, cp, _ = stats.chi2_gof(counts, np.full(16, 1 / 16))
    out = {"kuiper_stat": kv, "kuiper_p": kp, "chi2_stat": cs, "chi2_p": cp}
    if u.shape[1] >= 3:
        out["polar_kuiper_stat"], out["polar_kuiper_p"] = stats.kuiper_uniform((u[:, 2] + 1) / 2)
    return out


def _run_symmetry(cfg: ExperimentConfig) -> ScenarioResult:
    csv_path, ang_path, jsonl_path, fail_path = _outputs(cfg, "directions.csv", "angles.csv",
                                                         "trials.jsonl", "failures.jsonl")
    trials = list(range(cfg.n_trials))
    ok, failures = _collect(map_trials(_symmetry_trial, [(cfg, t) for t in trials], cfg.threads), trials)
    rows, ang_rows = [], []
    for i, n in enumerate(cfg.n_steps):
        if not ok:
            break
        est = np.array([res[i][1] for _, (_, res) in ok])
        err = np.array([res[i][2] for _, (_, res) in ok])
        uni = direction_uniformity(est) if len(ok) > 1 else {}
        rows.append((n, len(ok), float(np.quantile(err, 0.95)), float(np.mean(err < 0.05)),
                     uni.get("kuiper_stat", math.nan), uni.get("kuiper_p", math.nan),
                     uni.get("chi2_stat", math.nan), uni.get("chi2_p", math.nan)))
        for (t, _), e, p in zip(ok, err, est):
            ang_rows.append((n, t, float(math.atan2(p[1], p[0])), e))
    write_table(csv_path, ["n", "trials", "angular_error_q95", "fraction_below_0.05", "kuiper_stat",
                           "kuiper_p", "chi2_stat", "chi2_p"], rows, _metadata(cfg))
    write_table(ang_path, ["n", "trial", "azimuth", "angular_error"], ang_rows, _metadata(cfg))
    write_jsonl(jsonl_path, [{"trial": t, "p0": p0, "estimates": [{"n": n, "p": p, "angular_error": e}
                                                                   for n, p, e in res]}
                             for t, (p0, res) in ok])
    write_jsonl(fail_path, failures)
    return ScenarioResult({"csv": csv_path, "angles": ang_path, "jsonl": jsonl_path, "failures": fail_path},
                          failures, {"rows": rows})


# -- weyl ---------------------------------------------------------------------

def weyl_rows(cfg: ExperimentConfig) -> list[tuple]:
    """(epsilon, check, residual, upper_bound) for each epsilon and check."""
    rng = trial_rng(cfg.master_seed, STREAM_WEYL, 0)
    pairs = [(AtomicSymbol.random(rng, cfg.weyl_atoms), AtomicSymbol.random(rng, cfg.weyl_atoms))
             for _ in range(cfg.weyl_pairs)]
    zetas = rng.standard_normal((cfg.weyl_pairs, 2, 2))
    L = cfg.weyl_half_length
    grid = Grid(cfg.weyl_grid_n, -L, L)
    flows = {"egorov_free": Free(cfg.dynamics_tau),
             "egorov_harmonic": Harmonic.isotropic(cfg.dynamics_omega, cfg.dynamics_tau)}
    rows = []
    for eps in cfg.epsilon:
        probes = probe_states(grid, eps, cfg.weyl_probes, seed=cfg.master_seed)
        rows.append((eps, "weyl_relation",
                     max(weyl_relation_residual(z[0], z[1], eps, probes) for z in zetas), 0.0))
        star = 0.0
        lower = upper = 0.0
        for a, b in pairs:
            ab = star_product(a, b, eps)
            for psi in probes:
                diff = op_apply(ab, eps, psi).psi - op_apply(a, eps, op_apply(b, eps, psi)).psi
                star = max(star, float(np.sqrt(np.sum(np.abs(diff) ** 2) * grid.dx)))
            lo, up = classical_limit_residual(a, b, eps, probes)
            lower, upper = max(lower, lo), max(upper, up)
        rows.append((eps, "star_composition", star, 0.0))
        rows.append((eps, "classical_limit", lower, upper))
        for name, dyn in flows.items():
            rows.append((eps, name, max(egorov_check(a, dyn, eps, probes) for a, _ in pairs), 0.0))
    return rows


def _run_weyl(cfg: ExperimentConfig) -> ScenarioResult:
    csv_path, fail_path = _outputs(cfg, "residuals.csv", "failures.jsonl")
    failures = []
    status, value = _guarded(weyl_rows, (cfg,))
    rows = value if status == "ok" else []
    if status != "ok":
        failures.append(value)
    write_table(csv_path, ["epsilon", "check", "residual", "upper_bound"], rows, _metadata(cfg))
    write_jsonl(fail_path, failures)
    return ScenarioResult({"csv": csv_path, "failures": fail_path}, failures, {"rows": rows})
