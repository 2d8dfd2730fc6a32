"""Experiment configuration: key = value files, CLI overrides, validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

EXPERIMENTS = (
    "fbm-sample",
    "kernel-check",
    "lemma2",
    "ttv-divergence",
    "conv-var",
    "fou-ergodic",
    "solve",
    "pullback",
    "verify-all",
)


class ConfigError(ValueError):
    """Usage, parse or validation problem (exit code 1)."""


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


@dataclass
class ExperimentConfig:
    hurst: float = 0.35
    modes: int = 8
    dt: float = 2 ** -10
    t_final: float = 1.0
    seed: int = 0
    samples: int = 1000
    out: str = "runs"
    grid_points: int = 64
    points_per_unit: int = 1024
    mu0: float = 2.0
    mu1: float = 1.0
    eps: float = 2.0
    alpha: float = 0.5
    c0: float = 1.0
    C1: Optional[float] = None
    lambda_uppers: tuple = (10.0, 20.0, 50.0, 100.0)
    ttv_exponent: Optional[float] = None
    ttv_lambdas: tuple = (10.0, 15.0, 20.0)
    conv_modes: tuple = (4, 8, 16, 32)
    horizons: tuple = (50.0, 100.0, 200.0)
    ensemble: int = 10000
    t0_list: tuple = (-2.0, -4.0, -8.0)
    n_initial: int = 5
    t_burn: float = 5.0

    def validate(self, experiment: Optional[str] = None) -> "ExperimentConfig":
        bad = []
        if not 0 < self.hurst < 1:
            bad.append("hurst: must lie in (0, 1)")
        needs_quarter = experiment in {"conv-var", "fou-ergodic", "solve", "pullback", "verify-all"}
        if needs_quarter and not self.hurst > 0.25:
            bad.append(f"hurst: {experiment} needs H > 1/4 (convolution exists only for 4H > 1), got {self.hurst}")
        if experiment == "lemma2" and not 0 < self.hurst < 0.5:
            bad.append("hurst: lemma2 needs 0 < H < 1/2")
        if self.modes < 1:
            bad.append("modes: must be >= 1")
        if not self.dt > 0:
            bad.append("dt: must be positive")
        if not self.t_final > 0:
            bad.append("t_final: must be positive")
        if self.samples < 1 or self.ensemble < 1:
            bad.append("samples/ensemble: must be >= 1")
        if self.grid_points < 2:
            bad.append("grid_points: must be >= 2")
        if self.points_per_unit < 1:
            bad.append("points_per_unit: must be >= 1")
        if not (self.mu0 > 0 and self.eps > 0 and 0 < self.alpha <= 1):
            bad.append("fluid: need mu0 > 0, eps > 0, 0 < alpha <= 1")
        if self.c0 <= 0:
            bad.append("c0: must be positive")
        if any(x <= 0 for x in self.lambda_uppers):
            bad.append("lambda_uppers: must be positive")
        if list(self.horizons) != sorted(self.horizons) or len(set(self.horizons)) != len(self.horizons):
            bad.append("horizons: must be strictly increasing")
        t0 = list(self.t0_list)
        if any(x >= 0 for x in t0) or any(b >= a for a, b in zip(t0, t0[1:])):
            bad.append("t0_list: must be negative and strictly decreasing")
        if self.ttv_exponent is not None and not -1 < self.ttv_exponent < 1:
            bad.append("ttv_exponent: must lie in (-1, 1)")
        ratio = 1.0 / (self.dt * self.points_per_unit)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            bad.append("dt: must be a multiple of 1/points_per_unit")
        if bad:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(bad))
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TUPLE_FLOAT = {"lambda_uppers", "ttv_lambdas", "horizons", "t0_list"}
_TUPLE_INT = {"conv_modes"}
_INT = {"modes", "seed", "samples", "grid_points", "points_per_unit", "ensemble", "n_initial"}
_OPT_FLOAT = {"C1", "ttv_exponent"}


def _convert(key: str, raw: str):
    if key in _TUPLE_FLOAT:
        return _floats(raw)
    if key in _TUPLE_INT:
        return _ints(raw)
    if key in _INT:
        return int(raw)
    if key in _OPT_FLOAT:
        return None if raw.lower() in {"none", "auto", ""} else float(raw)
    if key == "out":
        return raw
    return float(raw)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: cannot parse value {raw!r} for {key!r}") from None
    return values


def load_config(path=None, overrides: Optional[dict] = None, experiment: Optional[str] = None) -> ExperimentConfig:
    """Defaults, then file values, then overrides (CLI flags), then validation."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(), str(p)))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return ExperimentConfig(**values).validate(experiment)
