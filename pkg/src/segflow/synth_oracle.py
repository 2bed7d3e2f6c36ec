"""Scripted synthetic demonstrations with known phase boundaries and contacts.

A script is a list of phases executed back to back. Positions are piecewise
linear with continuous joins; every contact adds a persistent reaction wrench
that ramps in over two samples. Noise is i.i.d. Gaussian and fully determined
by the script's seed.

Script JSON::

    {
      "rate_hz": 250, "seed": 0,
      "noise": {"sigma_pos": 0.001, "sigma_wrench": 0.1},
      "start": {"x": 0.4, "y": 0.0, "z": 0.2},
      "phases": [
        {"kind": "move_line", "direction": [1, 0, 0], "speed": 0.1, "duration": 1.0},
        {"kind": "idle", "duration": 1.0},
        {"kind": "move_until_wall", "direction": [0, 0, -1], "speed": 0.05,
         "distance": 0.05, "contact_force": 5.0}
      ]
    }

Phase kinds: ``move_line`` (optionally with ``contact_force``, a contact made
at phase start while the motion continues), ``rotate`` (``rates`` per
quaternion-imaginary channel), ``idle`` and ``move_until_wall`` (moves
``distance`` then touches a wall; an optional ``hold`` keeps pressing).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace as _replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .data_core import Demonstration
from .errors import InvalidScript

TRANSLATION = ("x", "y", "z")
ROTATION = ("qx", "qy", "qz")
FORCE = ("fx", "fy", "fz")
TORQUE = ("tx", "ty", "tz")

KINDS = ("move_line", "rotate", "idle", "move_until_wall")


@dataclass(frozen=True)
class Phase:
    kind: str
    duration: float
    direction: tuple[float, float, float] = (0.0, 0.0, 0.0)
    speed: float = 0.0
    rates: tuple[float, float, float] = (0.0, 0.0, 0.0)
    contact_force: float = 0.0
    hold: float = 0.0

    @property
    def contact_at_start(self) -> bool:
        return self.kind == "move_line" and self.contact_force > 0

    @property
    def contact_at_end(self) -> bool:
        return self.kind == "move_until_wall"

    @property
    def move_duration(self) -> float:
        return self.duration - self.hold


@dataclass(frozen=True)
class PhaseScript:
    phases: tuple[Phase, ...]
    rate_hz: float = 250.0
    seed: int = 0
    sigma_pos: float = 0.001
    sigma_wrench: float = 0.1
    sigma_rot: float | None = None
    sigma_torque: float | None = None
    start: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    lever_arm: tuple[float, float, float] = (0.0, 0.0, -0.05)
    orientation: bool | None = None
    torque: bool | None = None

    @property
    def has_orientation(self) -> bool:
        if self.orientation is not None:
            return self.orientation
        return any(p.kind == "rotate" for p in self.phases)

    @property
    def has_torque(self) -> bool:
        if self.torque is not None:
            return self.torque
        return self.has_orientation

    def with_seed(self, seed: int) -> "PhaseScript":
        return _replace(self, seed=seed)

    def with_noise(self, sigma_pos, sigma_wrench, sigma_rot=None, sigma_torque=None) -> "PhaseScript":
        return _replace(
            self,
            sigma_pos=sigma_pos,
            sigma_wrench=sigma_wrench,
            sigma_rot=sigma_rot,
            sigma_torque=sigma_torque,
        )




@dataclass(frozen=True)
class Wall:
    """Plane ``normal . y >= offset`` over the translation channels."""

    normal: tuple[float, float, float]
    offset: float

    def to_dict(self, names=TRANSLATION):
        return {"normal": dict(zip(names, self.normal)), "offset": self.offset}


@dataclass(frozen=True)
class GroundTruth:
    boundary_times: tuple[float, ...]
    contact_times: tuple[float, ...]
    idle_flags: tuple[bool, ...]
    phase_kinds: tuple[str, ...] = ()
    walls: tuple[Wall, ...] = ()
    t_end: float = 0.0

    def to_dict(self):
        return {
            "boundary_times": list(self.boundary_times),
            "contact_times": list(self.contact_times),
            "idle_flags": list(self.idle_flags),
            "phase_kinds": list(self.phase_kinds),
            "walls": [w.to_dict() for w in self.walls],
            "t_end": self.t_end,
        }


# ---------------------------------------------------------------- parsing


def _vec3(value, what) -> tuple[float, float, float]:
    try:
        v = tuple(float(x) for x in value)
    except TypeError:
        raise InvalidScript(f"{what} must be a list of 3 numbers") from None
    if len(v) != 3:
        raise InvalidScript(f"{what} must have 3 entries, got {len(v)}")
    return v


def _phase(d: Mapping[str, Any], i: int) -> Phase:
    kind = d.get("kind")
    if kind not in KINDS:
        raise InvalidScript(f"phase {i}: unknown kind {kind!r}", phase=i)
    direction = (0.0, 0.0, 0.0)
    speed = float(d.get("speed", 0.0))
    if kind in ("move_line", "move_until_wall"):
        direction = _vec3(d.get("direction", ()), f"phase {i} direction")
        if abs(math.hypot(*direction) - 1.0) > 1e-9:
            raise InvalidScript(f"phase {i}: direction is not unit-norm", phase=i)
        if not speed > 0:
            raise InvalidScript(f"phase {i}: speed must be positive", phase=i)
    rates = (0.0, 0.0, 0.0)
    if kind == "rotate":
        r = d.get("rates", {})
        if isinstance(r, Mapping):
            unknown = set(r) - set(ROTATION)
            if unknown:
                raise InvalidScript(f"phase {i}: unknown rotation channels {sorted(unknown)}", phase=i)
            rates = tuple(float(r.get(c, 0.0)) for c in ROTATION)
        else:
            rates = _vec3(r, f"phase {i} rates")
    contact = float(d.get("contact_force", 0.0))
    hold = float(d.get("hold", 0.0))
    if contact < 0 or hold < 0:
        raise InvalidScript(f"phase {i}: contact_force and hold must be >= 0", phase=i)
    if kind == "move_until_wall":
        distance = float(d.get("distance", 0.0))
        if not distance > 0:
            raise InvalidScript(f"phase {i}: distance must be positive", phase=i)
        if not contact > 0:
            raise InvalidScript(f"phase {i}: move_until_wall needs contact_force > 0", phase=i)
        duration = distance / speed + hold
    else:
        if "duration" not in d:
            raise InvalidScript(f"phase {i}: missing duration", phase=i)
        duration = float(d["duration"])
        hold = 0.0
    if not duration > 0 or not math.isfinite(duration):
        raise InvalidScript(f"phase {i}: duration must be positive", phase=i)
    return Phase(kind, duration, direction, speed, rates, contact, hold)


def script_from_dict(d: Mapping[str, Any]) -> PhaseScript:
    phases = d.get("phases")
    if not phases:
        raise InvalidScript("script has no phases")
    noise = d.get("noise", {})
    start = d.get("start", {})
    if isinstance(start, Mapping):
        start = tuple(float(start.get(c, 0.0)) for c in TRANSLATION + ROTATION)
    else:
        start = tuple(float(x) for x in start) + (0.0,) * (6 - len(start))
    rate = float(d.get("rate_hz", 250.0))
    if not rate > 0:
        raise InvalidScript("rate_hz must be positive")
    known = {"phases", "noise", "start", "rate_hz", "seed", "lever_arm", "orientation", "torque", "name"}
    unknown = set(d) - known
    if unknown:
        raise InvalidScript(f"unknown script keys {sorted(unknown)}")
    return PhaseScript(
        phases=tuple(_phase(p, i) for i, p in enumerate(phases)),
        rate_hz=rate,
        seed=int(d.get("seed", 0)),
        sigma_pos=float(noise.get("sigma_pos", 0.001)),
        sigma_wrench=float(noise.get("sigma_wrench", 0.1)),
        sigma_rot=None if noise.get("sigma_rot") is None else float(noise["sigma_rot"]),
        sigma_torque=None if noise.get("sigma_torque") is None else float(noise["sigma_torque"]),
        start=start,
        lever_arm=_vec3(d.get("lever_arm", (0.0, 0.0, -0.05)), "lever_arm"),
        orientation=d.get("orientation"),
        torque=d.get("torque"),
    )


def load_script(path: str | Path) -> PhaseScript:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidScript(f"script is not valid JSON: {exc}") from None
    if not isinstance(data, Mapping):
        raise InvalidScript("script must be a JSON object")
    return script_from_dict(data)


# ---------------------------------------------------------------- generation


def generate(script: PhaseScript) -> tuple[Demonstration, GroundTruth]:
    """Render a script into a noisy demonstration and its ground truth."""
    if not script.phases:
        raise InvalidScript("script has no phases")
    rate = script.rate_hz
    dt = 1.0 / rate
    starts = np.concatenate([[0.0], np.cumsum([p.duration for p in script.phases])])
    t_end = float(starts[-1])
    N = int(math.floor(t_end * rate + 1e-9)) + 1
    t = np.arange(N) * dt

    # noise-free configuration: translation (3) and rotation (3)
    pose = np.zeros((N, 6))
    base = np.array(script.start, dtype=float)
    phase_of = np.clip(np.searchsorted(starts, t + 1e-12, side="right") - 1, 0, len(script.phases) - 1)
    velocity = []
    for p in script.phases:
        v = np.zeros(6)
        if p.kind in ("move_line", "move_until_wall"):
            v[:3] = np.array(p.direction) * p.speed
        elif p.kind == "rotate":
            v[3:] = p.rates
        velocity.append(v)
    anchors = [base.copy()]
    for p, v in zip(script.phases, velocity):
        anchors.append(anchors[-1] + v * (p.duration - p.hold))
    for i in range(N):
        k = phase_of[i]
        p = script.phases[k]
        elapsed = min(t[i] - starts[k], p.duration - p.hold)
        pose[i] = anchors[k] + velocity[k] * elapsed

    # contact wrench: reaction against the motion direction, ramped over two samples
    force = np.zeros((N, 3))
    torque = np.zeros((N, 3))
    contacts = []
    walls = []
    lever = np.array(script.lever_arm)
    for k, p in enumerate(script.phases):
        if p.contact_at_end:
            tc = starts[k] + p.move_duration
        elif p.contact_at_start:
            tc = starts[k]
        else:
            continue
        d = np.array(p.direction)
        i0 = int(math.ceil(tc * rate - 1e-9))
        if i0 >= N:
            continue
        ramp = np.clip((np.arange(N) - i0 + 1) / 2.0, 0.0, 1.0)
        f = -d * p.contact_force
        force += ramp[:, None] * f
        torque += ramp[:, None] * np.cross(lever, f)
        contacts.append(float(t[i0]))
        if p.contact_at_end:
            contact_pos = anchors[k + 1][:3]
            walls.append(Wall(tuple(-d), float(-d @ contact_pos)))

    rng = np.random.default_rng(script.seed)
    sig_rot = script.sigma_pos if script.sigma_rot is None else script.sigma_rot
    sig_tq = script.sigma_wrench * 0.1 if script.sigma_torque is None else script.sigma_torque

    q = pose[:, :3] + rng.normal(0.0, 1.0, (N, 3)) * script.sigma_pos
    q_names = list(TRANSLATION)
    if script.has_orientation:
        q = np.column_stack([q, pose[:, 3:] + rng.normal(0.0, 1.0, (N, 3)) * sig_rot])
        q_names += list(ROTATION)
    w = force + rng.normal(0.0, 1.0, (N, 3)) * script.sigma_wrench
    w_names = list(FORCE)
    if script.has_torque:
        w = np.column_stack([w, torque + rng.normal(0.0, 1.0, (N, 3)) * sig_tq])
        w_names += list(TORQUE)

    demo = Demonstration(t=t, q=q, w=w, q_names=q_names, w_names=w_names, rate_hz=rate)
    truth = GroundTruth(
        boundary_times=tuple(float(s) for s in starts[1:-1]),
        contact_times=tuple(contacts),
        idle_flags=tuple(p.kind == "idle" for p in script.phases),
        phase_kinds=tuple(p.kind for p in script.phases),
        walls=tuple(walls),
        t_end=float(t[-1]),
    )
    return demo, truth
