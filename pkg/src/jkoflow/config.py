"""Experiment configuration: flat ``key = value`` files with ``#`` comments.

Each experiment declares its parameters with a type, a default and a range.
Unknown keys and out-of-range values are rejected while parsing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

EXPERIMENTS = (
    "bw-scaling",
    "bw-rotation",
    "quartic-step",
    "grid-flow",
    "particle-sweep",
    "riemannian-order",
    "variation-checks",
)


class ConfigError(ValueError):
    """Invalid configuration file or parameter value."""


@dataclass(frozen=True)
class Param:
    kind: str  # "int", "float", "floats", "choice"
    default: Any
    lo: float = -math.inf
    hi: float = math.inf
    choices: tuple = ()
    doc: str = ""


def _halving(start, count):
    return tuple(start / 2**k for k in range(count))


SCHEMAS: dict[str, dict[str, Param]] = {
    "bw-scaling": {
        "etas": Param("floats", _halving(0.25, 6), 0.0, 1.0, doc="descending step sizes"),
        "steps_per_eta": Param("int", 200, 1, 100000),
        "beta": Param("float", 1.0, 1e-6, 1e6),
        "eps": Param("float", 0.5, 1e-6, 1e3),
        "richardson_seeds": Param("int", 10, 1, 1000),
    },
    "bw-rotation": {
        "etas": Param("floats", _halving(0.25, 6), 0.0, 1.0),
        "steps_per_eta": Param("int", 200, 1, 100000),
        "n_instances": Param("int", 10, 1, 1000),
        "beta": Param("float", 1.0, 1e-6, 1e6),
    },
    "quartic-step": {
        "h": Param("float", 1.0, 1e-6, 100.0),
        "etas": Param("floats", (0.0, 0.1, 0.2, 0.29, 0.3, 0.31, 0.4, 0.5), 0.0, 100.0),
        "n_in": Param("int", 2048, 64, 1 << 20),
        "n_out": Param("int", 8192, 64, 1 << 20),
        "y_max": Param("float", 4.0, 0.5, 100.0),
        "jump_ratio": Param("float", 5.0, 1.0, 1e6),
        "jump_window": Param("float", 0.2, 1e-3, 10.0),
        "samples": Param("int", 20001, 1000, 1 << 24),
    },
    "grid-flow": {
        "x_max": Param("float", 5.0, 1.0, 50.0, doc="grid is [-x_max, x_max]"),
        "n": Param("int", 401, 9, 1 << 16),
        "t_end": Param("float", 1.0, 1e-6, 100.0),
        "beta": Param("float", 1.0, 1e-6, 1e6),
        "eta": Param("float", 0.0, 0.0, 10.0),
        "init_mean": Param("float", 0.8, -10.0, 10.0),
        "init_std": Param("float", 1.3, 1e-3, 10.0),
        "window_start": Param("float", 0.25, 0.0, 1.0, doc="fraction of t_end"),
        "window_end": Param("float", 0.75, 0.0, 1.0, doc="fraction of t_end"),
        "cfl_target": Param("float", 0.4, 1e-3, 0.5),
        "snapshots": Param("int", 5, 1, 1000),
    },
    "particle-sweep": {
        "etas": Param("floats", (0.0, 1e-6, 1e-5, 1e-4), 0.0, 1.0),
        "n_seeds": Param("int", 100, 1, 100000),
        "n_particles": Param("int", 4000, 16, 10**7),
        "h": Param("float", 2e-3, 1e-8, 1.0),
        "n_steps": Param("int", 2000, 1, 10**7),
        "beta": Param("float", 1.0, 1e-6, 1e6),
        "n_bins": Param("int", 2048, 64, 1 << 20),
        "kl_bins": Param("int", 512, 64, 1 << 16),
        "kl_bandwidth": Param("float", 0.1, 1e-4, 10.0),
        "kl_x_max": Param("float", 6.0, 1.0, 100.0),
        "stencil_fraction": Param("float", 0.25, 1e-3, 10.0),
        "refresh": Param("int", 50, 1, 10**6),
    },
    "riemannian-order": {
        "etas": Param("floats", _halving(0.125, 5), 0.0, 1.0),
        "t_final": Param("float", 1.0, 1e-3, 100.0),
        "substeps": Param("int", 32, 1, 100000),
        "sphere_a": Param("float", 0.3, -10.0, 10.0),
        "euclid_x0": Param("float", 1.0, -100.0, 100.0),
    },
    "variation-checks": {
        "n": Param("int", 2048, 64, 8192),
        "x_max": Param("float", 8.0, 1.0, 50.0),
        "fisher_n": Param("int", 20001, 1001, 1 << 20),
        "fisher_x_max": Param("float", 6.0, 1.0, 50.0),
        "fisher_window": Param("float", 3.0, 0.1, 50.0),
        "eps": Param("float", 1e-5, 1e-10, 1e-2),
        "n_perturbations": Param("int", 3, 1, 100),
    },
}


def _cross_checks(experiment: str, p: dict) -> None:
    etas = p.get("etas")
    if etas is not None and experiment in ("bw-scaling", "bw-rotation", "riemannian-order"):
        if any(e <= 0 for e in etas):
            raise ConfigError("etas: values must be positive")
        if any(b >= a for a, b in zip(etas, etas[1:])):
            raise ConfigError("etas: values must be strictly descending")
        if len(etas) < 3:
            raise ConfigError("etas: at least three values are needed for a slope fit")
    if experiment == "grid-flow" and not p["window_start"] < p["window_end"]:
        raise ConfigError("window_start must be below window_end")


def _parse_value(name: str, p: Param, raw: str):
    raw = raw.strip()
    try:
        if p.kind == "int":
            vals = [int(raw)]
        elif p.kind == "float":
            vals = [float(raw)]
        elif p.kind == "floats":
            items = [s for s in (t.strip() for t in raw.split(",")) if s]
            if not items:
                raise ConfigError(f"{name}: list must not be empty")
            vals = [float(s) for s in items]
        elif p.kind == "choice":
            if raw not in p.choices:
                raise ConfigError(f"{name}: expected one of {', '.join(p.choices)}, got {raw!r}")
            return raw
        else:  # pragma: no cover
            raise ConfigError(f"{name}: unknown parameter kind {p.kind}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: cannot parse {raw!r} as {p.kind}") from None
    for v in vals:
        if not math.isfinite(v) or not (p.lo <= v <= p.hi):
            raise ConfigError(f"{name}: value {v!r} outside [{p.lo:g}, {p.hi:g}]")
    if p.kind == "floats":
        return tuple(vals)
    return vals[0]


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in SCHEMAS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        schema = SCHEMAS[self.experiment]
        merged = {k: p.default for k, p in schema.items()}
        for k, v in self.params.items():
            if k not in schema:
                raise ConfigError(f"unknown key {k!r} for experiment {self.experiment}")
            merged[k] = _parse_value(k, schema[k], v) if isinstance(v, str) else self._check(k, schema[k], v)
        self.params = merged
        _cross_checks(self.experiment, merged)

    @staticmethod
    def _check(name, p, v):
        text = ",".join(repr(float(x)) for x in v) if p.kind == "floats" else str(v)
        return _parse_value(name, p, text)

    def __getitem__(self, key):
        return self.params[key]

    def echo(self) -> list[str]:
        """``key = value`` lines reproducing this configuration."""
        lines = [f"experiment = {self.experiment}", f"seed = {self.seed}"]
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{k} = {v}")
        return lines


def parse_text(text: str) -> dict[str, str]:
    """Split ``key = value`` lines; ``#`` starts a comment; blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(experiment: str, path=None, seed: int | None = None) -> ExperimentConfig:
    """Build a config from an optional file; ``seed`` (when given) overrides the file."""
    raw: dict[str, str] = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = parse_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    file_exp = raw.pop("experiment", None)
    if file_exp is not None and file_exp != experiment:
        raise ConfigError(f"config file is for experiment {file_exp!r}, not {experiment!r}")
    file_seed = raw.pop("seed", None)
    if seed is None:
        try:
            seed = int(file_seed) if file_seed is not None else 0
        except ValueError:
            raise ConfigError(f"seed: cannot parse {file_seed!r} as int") from None
    return ExperimentConfig(experiment, seed, raw)

