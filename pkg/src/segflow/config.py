"""Run configuration: a flat dotted-key JSON schema with validated defaults."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .errors import InvalidConfig

ENV_VAR = "SEGFLOW_CONFIG"


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _prob(v):
    return 0 < v < 1


@dataclass(frozen=True)
class _Key:
    default: Any
    kind: type | tuple
    check: Callable[[Any], bool] | None = None
    help: str = ""


SCHEMA: dict[str, _Key] = {
    "gmm.k_min": _Key(2, int, lambda v: v >= 1, "smallest component count tried"),
    "gmm.k_max": _Key(8, int, lambda v: v >= 1, "largest component count tried"),
    "gmm.reg_eps": _Key(1e-6, float, _positive, "covariance eigenvalue floor (standardized units)"),
    "gmm.max_iter": _Key(200, int, _positive, "EM iteration cap"),
    "gmm.tol": _Key(1e-6, float, _positive, "EM log-likelihood change for convergence"),
    "kalman.r1_scale": _Key(1e-4, float, _nonneg, "process noise as a fraction of R2"),
    "kalman.r2_window_s": _Key(0.5, float, _positive, "initial window used to estimate R2"),
    "kalman.normalizer": _Key("p", str, lambda v: v in ("p", "p_plus_r2"), "error weighting: p or p_plus_r2"),
    "detector.threshold": _Key(5.0, float, _positive, "peak threshold for precomputed series"),
    "detector.false_alarm": _Key(1e-6, float, _prob, "per-sample false-alarm rate for raw wrench data"),
    "detector.min_separation_s": _Key(0.5, float, _nonneg, "gap that splits above-threshold clusters"),
    "fusion.proximity_s": _Key(0.5, float, _positive, "force point replaces an initial point this close"),
    "fusion.idle_speed": _Key(0.005, float, _nonneg, "translational speed below which a segment is idle"),
    "fusion.idle_rot_speed": _Key(0.01, float, _nonneg, "rotational speed below which a segment is idle"),
    "fusion.contact_margin": _Key(0.5, float, _positive, "execution threshold as a fraction of the demo jump"),
    "fusion.terminal_window_s": _Key(0.25, float, _nonneg, "force points this close to the end close the last segment"),
    "dmp.alpha": _Key(25.0, float, _positive, "DMP stiffness"),
    "dmp.alpha_x": _Key(8.0, float, _positive, "phase decay"),
    "dmp.n_basis": _Key(20, int, lambda v: v >= 2, "basis functions per channel"),
    "dmp.smooth_s": _Key(0.1, float, _nonneg, "Savitzky-Golay window before differentiation (0 disables)"),
    "dmp.k_c": _Key(100.0, float, _nonneg, "phase slowdown gain"),
    "dmp.goal_offset_m": _Key(0.005, float, _nonneg, "goal offset for contact-ending segments"),
    "dmp.goal_tol": _Key(1e-3, float, _positive, "goal-reached position tolerance"),
    "dmp.vel_tol": _Key(0.01, float, _positive, "goal-reached speed tolerance"),
    "dmp.timeout_factor": _Key(5.0, float, _positive, "timeout as a multiple of the segment duration"),
    "sim.rate_hz": _Key(250.0, float, _positive, "simulation rate"),
    "sim.walls": _Key((), (list, tuple), None, "list of {normal, offset[, stiffness]}"),
    "sim.wall_stiffness": _Key(1e4, float, _positive, "default wall stiffness"),
    "sim.kp": _Key(2500.0, float, _positive, "tracking stiffness of the simulated robot"),
    "sim.kd": _Key(100.0, float, _positive, "tracking damping of the simulated robot"),
    "seed": _Key(None, int, None, "overrides the seed of synthetic scripts"),
}


def flatten(d: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested objects become dotted keys; lists are kept as values."""
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping) and key not in SCHEMA:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value: Any) -> Any:
    entry = SCHEMA[key]
    if value is None and entry.default is None:
        return None
    if entry.kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, bool) or not isinstance(value, entry.kind):
        raise InvalidConfig(f"{key}: expected {getattr(entry.kind, '__name__', 'list')}, got {value!r}", key=key)
    if isinstance(value, float) and not math.isfinite(value):
        raise InvalidConfig(f"{key}: must be finite", key=key)
    if entry.check is not None and not entry.check(value):
        raise InvalidConfig(f"{key}: {value!r} is out of range ({entry.help})", key=key)
    if key == "sim.walls":
        value = tuple(_check_wall(i, w) for i, w in enumerate(value))
    return value


def _check_wall(i: int, w: Any) -> dict:
    if not isinstance(w, Mapping) or "normal" not in w or "offset" not in w:
        raise InvalidConfig(f"sim.walls[{i}]: need an object with normal and offset", key="sim.walls")
    extra = set(w) - {"normal", "offset", "stiffness"}
    if extra:
        raise InvalidConfig(f"sim.walls[{i}]: unknown keys {sorted(extra)}", key="sim.walls")
    return dict(w)


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: s.default for k, s in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise InvalidConfig(f"unknown config key {k!r}", key=k)
            merged[k] = _coerce(k, v)
        if merged["gmm.k_min"] > merged["gmm.k_max"]:
            raise InvalidConfig("gmm.k_min exceeds gmm.k_max", key="gmm.k_min")
        object.__setattr__(self, "values", merged)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def updated(self, changes: Mapping[str, Any]) -> "RunConfig":
        return RunConfig({**self.values, **flatten(changes)})

    def to_dict(self) -> dict[str, Any]:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.values.items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        return cls(flatten(d))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc.strerror}", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config {path} is not valid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
        if not isinstance(data, Mapping):
            raise InvalidConfig("config must be a JSON object", path=str(path))
        return cls.from_dict(data)

    @classmethod
    def resolve(cls, path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        """Explicit path, else ``$SEGFLOW_CONFIG``, else defaults; then overrides."""
        path = path or os.environ.get(ENV_VAR) or None
        cfg = cls.load(path) if path else cls()
        return cfg.updated(overrides) if overrides else cfg


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` where value is JSON (bare words are taken as strings)."""
    if "=" not in text:
        raise InvalidConfig(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
