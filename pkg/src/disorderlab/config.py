"""Experiment configuration in a flat ``key = value`` text format.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored; keys are the ExperimentConfig field names; numbers use Python
literal syntax. Unknown keys are errors.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import MISSING, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_INT_FIELDS = {"grid_n", "n_steps", "record_every", "realizations", "master_seed", "batch", "fit_steps", "ring_points"}
_STR_FIELDS = {"output_dir", "solver"}
# fields that do not change results and stay out of the hash
_UNHASHED = {"output_dir"}


@dataclass(frozen=True)
class ExperimentConfig:
    epsilon: float
    zeta: float
    kp: int
    grid_n: int
    n_steps: int
    tau: float | None = None
    record_every: int = 1
    realizations: int = 1
    master_seed: int = 0
    output_dir: str = "run"
    averaging_fraction: float = 0.5
    batch: int = 8
    fit_steps: int = 100
    solver: str = "memory"
    ring_points: int = 256

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", 1.0 / self.kp**2 if isinstance(self.kp, (int, float)) and self.kp > 0 else None)
        self.validate()

    def validate(self) -> None:
        for name in ("zeta", "kp", "grid_n", "tau", "n_steps", "record_every", "realizations", "batch", "fit_steps",
                     "ring_points"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise ConfigError(name, f"must be a positive number, got {value!r}")
        if not isinstance(self.epsilon, (int, float)) or not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigError("epsilon", f"must be a nonnegative number, got {self.epsilon!r}")
        if self.master_seed < 0:
            raise ConfigError("master_seed", "must be >= 0")
        if not 0 < self.averaging_fraction <= 1:
            raise ConfigError("averaging_fraction", "must lie in (0, 1]")
        if self.grid_n < 8:
            raise ConfigError("grid_n", "must be >= 8")
        if not -(self.grid_n // 2) <= self.kp <= (self.grid_n - 1) // 2:
            raise ConfigError("kp", f"mode ({self.kp}, 0) is outside a grid of size {self.grid_n}")
        if self.solver not in ("memory", "ring"):
            raise ConfigError("solver", "must be 'memory' or 'ring'")

    @classmethod
    def from_relative(cls, grid_n: int, kp: int, epsilon_over_kp2: float, zeta_kp: float, **kw) -> "ExperimentConfig":
        """Parameters in scan units: eps/kp^2 and zeta*kp."""
        return cls(epsilon=epsilon_over_kp2 * kp**2, zeta=zeta_kp / kp, kp=kp, grid_n=grid_n, **kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {value!r}" if not isinstance(value, str) else f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(key, "unknown key")
            values[key] = _parse_value(key, value)
        for f in fields(cls):
            if f.default is MISSING and f.name not in values:
                raise ConfigError(f.name, "required key missing")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def config_hash(self) -> str:
        parts = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self) if f.name not in _UNHASHED]
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


def _parse_value(key: str, text: str):
    if key in _STR_FIELDS:
        return text
    try:
        if key in _INT_FIELDS:
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        if key == "kp":
            value = float(text)
            return int(value) if value == int(value) else value
        if key == "tau" and text.lower() == "none":
            return None
        return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as a number") from None
