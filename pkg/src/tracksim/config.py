"""Flat ``key = value`` experiment configuration with dotted keys.

A line ``[kernel]`` opens a section, so ``sigma = 1`` below it means
``kernel.sigma``. Lines starting with ``#`` are comments. Unknown keys,
duplicate keys and malformed values are rejected with their line number.
The full key list with defaults lives in ``SCHEMA`` (rendered by
``schema_doc``).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCENARIOS = ("track", "estimate", "converge", "weyl", "symmetry")


def _float_list(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _int_list(text):
    out = []
    for v in text.replace(",", " ").split():
        f = float(v)
        if f != int(f):
            raise ValueError(f"{v} is not an integer")
        out.append(int(f))
    return tuple(out)


def _int(text):
    (v,) = _int_list(text)
    return v


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    parse.options = options
    return parse


# key: (parser, default, description)
SCHEMA = {
    "scenario": (_choice(*SCENARIOS), None, "experiment to run"),
    "backend": (_choice("classical", "grid", "gaussian"), "classical",
                "record generator for track/converge"),
    "dynamics.kind": (_choice("free", "harmonic", "magnetic"), "free", "one-period dynamics"),
    "dynamics.d": (_int, 1, "spatial dimension (free and harmonic)"),
    "dynamics.tau": (float, 1.0, "period; tau/m for free motion"),
    "dynamics.omega": (float, 1.0, "harmonic angular frequency (isotropic)"),
    "dynamics.beta": (float, 1.0, "magnetic B/m"),
    "kernel.kind": (_choice("gaussian", "bump"), "gaussian", "instrument noise family"),
    "kernel.sigma": (float, 1.0, "Gaussian kernel standard deviation per axis"),
    "kernel.halfwidth": (float, 1.0, "bump-cosine kernel half-width per axis"),
    "mu0.kind": (_choice("point", "position", "momentum", "shell"), "point",
                 "initial-condition law: point mass, smeared position, smeared momentum, isotropic shell"),
    "mu0.x0": (_float_list, (0.0,), "initial position (d numbers)"),
    "mu0.p0": (_float_list, (1.0,), "initial momentum (d numbers)"),
    "mu0.spread": (float, 0.1, "std of the Gaussian smearing profile"),
    "mu0.speed": (float, 1.0, "shell momentum magnitude"),
    "coherent.beta": (float, 0.5, "coherent-state width exponent, width = eps^beta"),
    "grid.n": (_int, 0, "grid points (power of two); 0 chooses automatically"),
    "grid.margin": (float, 8.0, "position margin around the classical track"),
    "epsilon": (_float_list, (0.1,), "semiclassical parameter values"),
    "n_steps": (_int_list, (10,), "record lengths n (outcomes q_0..q_n)"),
    "n_trials": (_int, 100, "Monte Carlo trials"),
    "master_seed": (_int, 0, "root of the per-trial seed tree"),
    "estimate.estimators": (lambda t: tuple(t.replace(",", " ").split()), ("free", "lsq"),
                            "estimators to evaluate: free, lsq"),
    "weyl.atoms": (_int, 3, "atoms per random symbol"),
    "weyl.pairs": (_int, 4, "random symbol pairs per epsilon"),
    "weyl.probes": (_int, 32, "probe wavepackets"),
    "weyl.grid_n": (_int, 2048, "grid points for Weyl checks"),
    "weyl.half_length": (float, 20.0, "grid spans [-L, L]"),
    "output.dir": (str, "out", "output directory"),
    "output.prefix": (str, "", "file name prefix; defaults to the scenario name"),
    "threads": (_int, 1, "worker processes for trials"),
}


def _attr(key):
    return key.replace(".", "_")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    backend: str = "classical"
    dynamics_kind: str = "free"
    dynamics_d: int = 1
    dynamics_tau: float = 1.0
    dynamics_omega: float = 1.0
    dynamics_beta: float = 1.0
    kernel_kind: str = "gaussian"
    kernel_sigma: float = 1.0
    kernel_halfwidth: float = 1.0
    mu0_kind: str = "point"
    mu0_x0: tuple = (0.0,)
    mu0_p0: tuple = (1.0,)
    mu0_spread: float = 0.1
    mu0_speed: float = 1.0
    coherent_beta: float = 0.5
    grid_n: int = 0
    grid_margin: float = 8.0
    epsilon: tuple = (0.1,)
    n_steps: tuple = (10,)
    n_trials: int = 100
    master_seed: int = 0
    estimate_estimators: tuple = ("free", "lsq")
    weyl_atoms: int = 3
    weyl_pairs: int = 4
    weyl_probes: int = 32
    weyl_grid_n: int = 2048
    weyl_half_length: float = 20.0
    output_dir: str = "out"
    output_prefix: str = ""
    threads: int = 1
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        _validate(self)

    @property
    def d(self) -> int:
        return 3 if self.dynamics_kind == "magnetic" else self.dynamics_d

    @property
    def prefix(self) -> str:
        return self.output_prefix or self.scenario

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {key: getattr(self, _attr(key)) for key in SCHEMA}


def _fail(cfg, key, message):
    raise ConfigError(message, key=key, line=cfg.source.get(key))


def _validate(cfg: ExperimentConfig):
    if cfg.scenario not in SCENARIOS:
        _fail(cfg, "scenario", f"scenario must be one of {', '.join(SCENARIOS)}")
    positive = ["dynamics.tau", "dynamics.omega", "dynamics.beta", "kernel.sigma",
                "kernel.halfwidth", "mu0.spread", "mu0.speed", "coherent.beta", "grid.margin",
                "weyl.half_length"]
    for key in positive:
        if not getattr(cfg, _attr(key)) > 0:
            _fail(cfg, key, "must be positive")
    if cfg.dynamics_d < 1:
        _fail(cfg, "dynamics.d", "must be at least 1")
    if cfg.dynamics_kind == "magnetic" and cfg.source.get("dynamics.d") and cfg.dynamics_d != 3:
        _fail(cfg, "dynamics.d", "magnetic dynamics is three-dimensional")
    for key in ("mu0.x0", "mu0.p0"):
        if len(getattr(cfg, _attr(key))) != cfg.d:
            _fail(cfg, key, f"needs {cfg.d} components for dimension {cfg.d}")
    if not cfg.epsilon or any(not e > 0 for e in cfg.epsilon):
        _fail(cfg, "epsilon", "needs at least one positive value")
    if not cfg.n_steps or any(n < 0 for n in cfg.n_steps):
        _fail(cfg, "n_steps", "needs non-negative integers")
    if cfg.n_trials < 0:
        _fail(cfg, "n_trials", "must be non-negative")
    if cfg.master_seed < 0:
        _fail(cfg, "master_seed", "must be non-negative")
    if cfg.threads < 1:
        _fail(cfg, "threads", "must be at least 1")
    if cfg.grid_n and (cfg.grid_n < 8 or cfg.grid_n & (cfg.grid_n - 1)):
        _fail(cfg, "grid.n", "must be 0 or a power of two >= 8")
    if cfg.weyl_grid_n < 8 or cfg.weyl_grid_n & (cfg.weyl_grid_n - 1):
        _fail(cfg, "weyl.grid_n", "must be a power of two >= 8")
    for est in cfg.estimate_estimators:
        if est not in ("free", "lsq"):
            _fail(cfg, "estimate.estimators", f"unknown estimator {est!r}")
    if cfg.backend in ("grid", "gaussian") and cfg.scenario in ("track", "converge"):
        if cfg.backend == "grid" and cfg.d != 1:
            _fail(cfg, "backend", "the grid backend is one-dimensional")
        if cfg.backend == "grid" and cfg.dynamics_kind == "magnetic":
            _fail(cfg, "backend", "the grid backend supports free and harmonic dynamics")
        if cfg.backend == "gaussian" and cfg.kernel_kind != "gaussian":
            _fail(cfg, "backend", "the Gaussian backend needs kernel.kind = gaussian")
    if cfg.scenario == "converge" and cfg.backend == "classical":
        _fail(cfg, "backend", "converge compares a quantum backend against the classical law")
    if cfg.scenario == "symmetry" and (cfg.mu0_kind != "shell" or cfg.dynamics_kind != "free"):
        _fail(cfg, "mu0.kind", "symmetry needs mu0.kind = shell and free dynamics")


def parse_config(text: str, scenario: str | None = None) -> ExperimentConfig:
    """Parse config text; ``scenario`` supplies the scenario when the text omits it."""
    values, lines = {}, {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section.replace("_", "").isalnum():
                raise ConfigError(f"bad section name {section!r}", line=lineno)
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key = key.strip()
        if section:
            key = f"{section}.{key}"
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=lineno)
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value.strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value {value.strip()!r}: {exc}", key=key, line=lineno) from None
        lines[key] = lineno
    if "scenario" not in values:
        if scenario is not None:
            values["scenario"] = scenario
        else:
            raise ConfigError("missing required key", key="scenario")
    kwargs = {_attr(k): v for k, v in values.items()}
    # a magnetic field fixes the dimension; default vectors follow it
    d = 3 if values.get("dynamics.kind") == "magnetic" else values.get("dynamics.d", 1)
    kwargs.setdefault("mu0_x0", (0.0,) * d)
    kwargs.setdefault("mu0_p0", (1.0,) + (0.0,) * (d - 1))
    return ExperimentConfig(**kwargs, source=lines)


def load_config(path, scenario: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse_config(text, scenario)


def schema_doc() -> str:
    rows = ["| key | default | meaning |", "|---|---|---|"]
    for key, (parser, default, doc) in SCHEMA.items():
        opts = getattr(parser, "options", None)
        if opts:
            doc = f"{doc} ({' / '.join(opts)})"
        shown = "required" if default is None else (
            " ".join(map(str, default)) if isinstance(default, tuple) else str(default))
        rows.append(f"| `{key}` | `{shown}` | {doc} |")
    return "\n".join(rows) + "\n"
