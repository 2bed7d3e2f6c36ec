"""Dynamical movement primitives per segment and simulated replay.

Each segment is encoded as::

    tau^2 y_ddot = alpha (beta (g - y) - tau y_dot) + f(x)
    tau x_dot    = -alpha_x x / (1 + k_c |y_measured - y|^2)

with ``f(x) = x * sum_i(w_i psi_i(x)) / sum_i(psi_i(x))`` and Gaussian bases
``psi_i``. The phase slows down while the robot lags the reference.

Replay runs the primitives in sequence on a simulated robot: a double
integrator that tracks the DMP reference with a PD loop and is pushed back by
planar spring walls. A segment that ends on a contact change gets its goal
moved slightly past the demonstrated end point and completes when the wall
force along the motion rises by the segment's threshold; other segments
complete once the robot settles at the goal.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.signal import savgol_filter

from .data_core import Demonstration
from .errors import DegenerateSegment, ModelCountMismatch, SegmentTimeout
from .fusion import CONTACT_THRESHOLD_FLOOR, EndCondition, Segment, SegmentPlan

MIN_SAMPLES = 10
X_MIN = 1e-6


@dataclass(frozen=True)
class DmpConfig:
    alpha: float = 25.0
    n_basis: int = 20
    alpha_x: float = 8.0
    smooth_s: float = 0.1

    @property
    def beta(self) -> float:
        return self.alpha / 4.0


@dataclass(frozen=True, eq=False)
class DmpModel:
    alpha: float
    beta: float
    tau: float
    y0: np.ndarray
    y_g: np.ndarray
    weights: np.ndarray
    basis_centers: np.ndarray
    basis_widths: np.ndarray
    alpha_x: float
    goal_offset: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y0)

    @property
    def goal(self) -> np.ndarray:
        """Effective goal, including the contact offset."""
        return self.y_g + self.goal_offset

    def basis(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.exp(-self.basis_widths * (x[:, None] - self.basis_centers) ** 2)

    def forcing(self, x) -> np.ndarray:
        """f(x) for scalar or vector phase; shape (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        psi = self.basis(x)
        return x[:, None] * (psi @ self.weights.T) / psi.sum(axis=1, keepdims=True)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "tau": self.tau,
            "y0": self.y0.tolist(),
            "y_g": self.y_g.tolist(),
            "weights": self.weights.tolist(),
            "basis_centers": self.basis_centers.tolist(),
            "basis_widths": self.basis_widths.tolist(),
            "alpha_x": self.alpha_x,
            "goal_offset": self.goal_offset.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda k: np.asarray(d[k], dtype=float)
        return cls(
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            tau=float(d["tau"]),
            y0=arr("y0"),
            y_g=arr("y_g"),
            weights=np.atleast_2d(arr("weights")),
            basis_centers=arr("basis_centers"),
            basis_widths=arr("basis_widths"),
            alpha_x=float(d["alpha_x"]),
            goal_offset=arr("goal_offset"),
        )


@dataclass(frozen=True, eq=False)
class DmpState:
    y: np.ndarray
    y_dot: np.ndarray
    x: float = 1.0
    t: float = 0.0


def make_basis(n_basis: int, alpha_x: float) -> tuple[np.ndarray, np.ndarray]:
    """Centers evenly spaced in normalized time (hence decreasing in phase).

    Each width is set so that a basis has fallen to exp(-1) halfway to the
    next center.
    """
    if n_basis < 2:
        raise ValueError("need at least 2 basis functions")
    centers = np.exp(-alpha_x * np.linspace(0.0, 1.0, n_basis))
    gaps = np.abs(np.diff(centers))
    gaps = np.append(gaps, gaps[-1])
    widths = 1.0 / (gaps / 2.0) ** 2
    return centers, widths


def _derivatives(y: np.ndarray, dt: float, window: int):
    if window >= 5 and len(y) > window:
        kw = dict(window_length=window, polyorder=3, delta=dt, axis=0, mode="interp")
        return savgol_filter(y, deriv=0, **kw), savgol_filter(y, deriv=1, **kw), savgol_filter(y, deriv=2, **kw)
    yd = np.gradient(y, dt, axis=0)
    return y, yd, np.gradient(yd, dt, axis=0)


def end_direction(segment: Demonstration, tail_fraction: float = 0.25) -> np.ndarray:
    """Unit direction of travel at the end of a segment (translation channels
    when the segment has any), from the displacement over its last part."""
    q = segment.q
    mask = segment.translation_mask if segment.translation_mask.any() else np.ones(segment.n, bool)
    start = int(len(q) * (1.0 - tail_fraction))
    for i0 in (min(start, len(q) - 2), 0):
        d = np.where(mask, q[-1] - q[i0], 0.0)
        norm = np.linalg.norm(d)
        if norm > 1e-9:
            return d / norm
    return np.zeros(segment.n)


def fit_dmp(
    segment: Demonstration,
    config: DmpConfig | None = None,
    goal_offset: float = 0.0,
) -> DmpModel:
    """Learn a DMP from one demonstrated segment.

    Target forcing values come from (optionally Savitzky-Golay smoothed)
    finite-difference velocities and accelerations; each basis weight is a
    locally weighted least-squares fit. ``goal_offset`` > 0 moves the goal
    that far along the final direction of travel.
    """
    config = config or DmpConfig()
    N = len(segment)
    if N < MIN_SAMPLES:
        raise DegenerateSegment(f"segment has {N} samples, need {MIN_SAMPLES}")
    t = segment.t - segment.t[0]
    tau = float(t[-1])
    if not tau > 0:
        raise DegenerateSegment("segment has zero duration")
    dt = tau / (N - 1)
    window = int(round(config.smooth_s / dt)) | 1 if config.smooth_s > 0 else 0
    y, yd, ydd = _derivatives(segment.q, dt, window)

    alpha, beta = config.alpha, config.beta
    y0 = segment.q[0].copy()
    y_g = segment.q[-1].copy()
    f_d = tau**2 * ydd - alpha * (beta * (y_g - y) - tau * yd)

    x = np.exp(-config.alpha_x * t / tau)
    centers, widths = make_basis(config.n_basis, config.alpha_x)
    psi = np.exp(-widths * (x[:, None] - centers) ** 2)
    num = (psi * x[:, None]).T @ f_d
    den = (psi * (x**2)[:, None]).sum(axis=0)
    weights = (num / np.maximum(den, 1e-300)[:, None]).T

    offset = np.zeros(segment.n)
    if goal_offset > 0:
        offset = goal_offset * end_direction(segment)
    return DmpModel(
        alpha=alpha,
        beta=beta,
        tau=tau,
        y0=y0,
        y_g=y_g,
        weights=weights,
        basis_centers=centers,
        basis_widths=widths,
        alpha_x=config.alpha_x,
        goal_offset=offset,
    )


def step_dmp(
    model: DmpModel,
    state: DmpState,
    dt: float,
    y_measured=None,
    k_c: float = 0.0,
) -> tuple[DmpState, np.ndarray]:
    """One semi-implicit Euler step; returns (next state, reference acceleration)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    tau = model.tau
    f = model.forcing(state.x)[0]
    y_ddot = (model.alpha * (model.beta * (model.goal - state.y) - tau * state.y_dot) + f) / tau**2
    slow = 1.0
    if y_measured is not None and k_c > 0:
        e = np.asarray(y_measured, dtype=float) - state.y
        slow = 1.0 + k_c * float(e @ e)
    x_dot = -model.alpha_x * state.x / (tau * slow)
    y_dot = state.y_dot + y_ddot * dt
    y = state.y + y_dot * dt
    x = min(1.0, max(X_MIN, state.x + x_dot * dt))
    return DmpState(y=y, y_dot=y_dot, x=x, t=state.t + dt), y_ddot


def phase_rate(model: DmpModel, state: DmpState, y_measured=None, k_c: float = 0.0) -> float:
    slow = 1.0
    if y_measured is not None and k_c > 0:
        e = np.asarray(y_measured, dtype=float) - state.y
        slow = 1.0 + k_c * float(e @ e)
    return -model.alpha_x * state.x / (model.tau * slow)


def rollout(model: DmpModel, dt: float, duration: float, y0=None) -> tuple[np.ndarray, np.ndarray]:
    """Open-loop integration from rest; returns (times, positions)."""
    y = model.y0.copy() if y0 is None else np.asarray(y0, dtype=float).copy()
    state = DmpState(y=y, y_dot=np.zeros_like(y))
    steps = int(round(duration / dt))
    ys = [state.y]
    for _ in range(steps):
        state, _ = step_dmp(model, state, dt)
        ys.append(state.y)
    return np.arange(steps + 1) * dt, np.array(ys)


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True, eq=False)
class SimWall:
    """Spring wall occupying ``normal . y < offset``."""

    normal: np.ndarray
    offset: float
    stiffness: float = 1e4

    def force(self, y: np.ndarray) -> np.ndarray:
        pen = self.offset - float(self.normal @ y)
        if pen <= 0:
            return np.zeros_like(y)
        return self.stiffness * pen * self.normal


@dataclass(frozen=True)
class SimConfig:
    rate_hz: float = 250.0
    walls: tuple[SimWall, ...] = ()
    kp: float = 2500.0
    kd: float = 100.0
    mass: float = 1.0

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz


@dataclass(frozen=True)
class ExecConfig:
    goal_tol: float = 1e-3
    vel_tol: float = 0.01
    k_c: float = 100.0
    timeout_factor: float = 5.0


def walls_from_config(entries: Sequence[Mapping[str, Any]], channel_names: Sequence[str]) -> tuple[SimWall, ...]:
    """Build walls from JSON-style entries.

    ``normal`` is either a list over all configuration channels or a mapping
    from channel name to component; it is normalized to unit length.
    """
    out = []
    for i, e in enumerate(entries):
        raw = e["normal"]
        if isinstance(raw, Mapping):
            unknown = set(raw) - set(channel_names)
            if unknown:
                raise ValueError(f"wall {i}: unknown channels {sorted(unknown)}")
            n = np.array([float(raw.get(c, 0.0)) for c in channel_names])
        else:
            n = np.asarray(raw, dtype=float)
            if n.shape != (len(channel_names),):
                raise ValueError(f"wall {i}: normal must have {len(channel_names)} entries")
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise ValueError(f"wall {i}: zero normal")
        out.append(SimWall(n / norm, float(e["offset"]) / norm, float(e.get("stiffness", 1e4))))
    return tuple(out)


@dataclass
class ExecutionTrace:
    t: list[float] = field(default_factory=list)
    y: list[np.ndarray] = field(default_factory=list)
    y_dot: list[np.ndarray] = field(default_factory=list)
    y_ddot_r: list[np.ndarray] = field(default_factory=list)
    x: list[float] = field(default_factory=list)
    wrench: list[np.ndarray] = field(default_factory=list)
    active_segment: list[int] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def record(self, t, y, y_dot, y_ddot_r, x, wrench, segment):
        self.t.append(float(t))
        self.y.append(np.array(y, dtype=float))
        self.y_dot.append(np.array(y_dot, dtype=float))
        self.y_ddot_r.append(np.array(y_ddot_r, dtype=float))
        self.x.append(float(x))
        self.wrench.append(np.array(wrench, dtype=float))
        self.active_segment.append(int(segment))

    def event(self, kind: str, segment: int, t: float, **info):
        self.events.append({"type": kind, "segment": segment, "t": float(t), **info})

    def events_of(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["type"] == kind]

    @property
    def succeeded(self) -> bool:
        return not self.events_of("Timeout")

    def to_dict(self):
        return {
            "events": self.events,
            "records": [
                {
                    "t": self.t[i],
                    "segment": self.active_segment[i],
                    "x": self.x[i],
                    "y": self.y[i].tolist(),
                    "y_dot": self.y_dot[i].tolist(),
                    "y_ddot_r": self.y_ddot_r[i].tolist(),
                    "wrench": self.wrench[i].tolist(),
                }
                for i in range(len(self.t))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    def to_csv(self, channel_names: Sequence[str] | None = None) -> str:
        n = len(self.y[0]) if self.y else 0
        names = list(channel_names) if channel_names else [f"c{i}" for i in range(n)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["t", "segment", "x"]
            + [f"y:{c}" for c in names]
            + [f"y_dot:{c}" for c in names]
            + [f"y_ddot_r:{c}" for c in names]
            + [f"w:{c}" for c in names]
        )
        for i in range(len(self.t)):
            w.writerow(
                [repr(self.t[i]), self.active_segment[i], repr(self.x[i])]
                + [repr(float(v)) for v in self.y[i]]
                + [repr(float(v)) for v in self.y_dot[i]]
                + [repr(float(v)) for v in self.y_ddot_r[i]]
                + [repr(float(v)) for v in self.wrench[i]]
            )
        return buf.getvalue()


def _wall_force(sim: SimConfig, y: np.ndarray) -> np.ndarray:
    f = np.zeros_like(y)
    for wall in sim.walls:
        f = f + wall.force(y)
    return f


def execute_sequence(
    plan: SegmentPlan,
    models: Sequence[DmpModel],
    sim: SimConfig | None = None,
    config: ExecConfig | None = None,
    raise_on_timeout: bool = True,
) -> ExecutionTrace:
    """Replay the plan's non-idle segments on the simulated robot.

    ``models`` holds one DMP per non-idle segment, in order. Idle segments
    are skipped. On timeout a ``Timeout`` event is logged and, unless
    ``raise_on_timeout`` is false, :class:`SegmentTimeout` is raised with the
    partial trace attached.
    """
    sim = sim or SimConfig()
    config = config or ExecConfig()
    active = [i for i, s in enumerate(plan.segments) if not s.idle]
    if len(models) != len(active):
        raise ModelCountMismatch(f"{len(models)} models for {len(active)} non-idle segments")
    trace = ExecutionTrace()
    if not models:
        return trace

    dt = sim.dt
    y_p = models[0].y0.copy()
    v_p = np.zeros_like(y_p)
    t = 0.0
    trace.record(t, y_p, v_p, np.zeros_like(y_p), 1.0, _wall_force(sim, y_p), active[0])

    model_iter = iter(models)
    for idx, seg in enumerate(plan.segments):
        if seg.idle:
            trace.event("Skipped", idx, t)
            continue
        model = next(model_iter)
        trace.event("Started", idx, t)
        state = DmpState(y=y_p.copy(), y_dot=v_p.copy(), x=1.0, t=0.0)
        f_start = _wall_force(sim, y_p)
        direction = model.goal_offset / np.linalg.norm(model.goal_offset) if np.any(model.goal_offset) else None
        threshold = seg.force_threshold if seg.force_threshold is not None else CONTACT_THRESHOLD_FLOOR
        t_max = config.timeout_factor * model.tau
        done = None
        while state.t < t_max - 1e-12:
            state, y_ddot_r = step_dmp(model, state, dt, y_measured=y_p, k_c=config.k_c)
            f_wall = _wall_force(sim, y_p)
            a = y_ddot_r + sim.kp * (state.y - y_p) + sim.kd * (state.y_dot - v_p) + f_wall / sim.mass
            v_p = v_p + a * dt
            y_p = y_p + v_p * dt
            t += dt
            wrench = _wall_force(sim, y_p)
            trace.record(t, y_p, v_p, y_ddot_r, state.x, wrench, idx)

            if seg.end_condition is EndCondition.CONTACT_CHANGE:
                change = wrench - f_start
                measure = -float(change @ direction) if direction is not None else float(np.linalg.norm(change))
                if measure > threshold:
                    done = {"reason": "force", "force": measure, "threshold": threshold}
            elif np.linalg.norm(y_p - model.goal) < config.goal_tol and np.linalg.norm(v_p) < config.vel_tol:
                done = {"reason": "goal", "error": float(np.linalg.norm(y_p - model.goal))}
            if done:
                break
        if done is None:
            trace.event("Timeout", idx, t, t_max=t_max)
            if raise_on_timeout:
                raise SegmentTimeout(f"segment {idx} did not complete within {t_max:.3f} s", trace=trace, segment=idx)
            return trace
        trace.event("Completed", idx, t, duration=state.t, **done)
    return trace


def fit_plan_models(
    demo: Demonstration,
    plan: SegmentPlan,
    config: DmpConfig | None = None,
    goal_offset: float = 0.005,
) -> list[DmpModel]:
    """One DMP per non-idle segment; contact segments get the goal offset."""
    models = []
    for seg in plan.segments:
        if seg.idle:
            continue
        part = demo.slice(seg.t_start, seg.t_end)
        models.append(fit_dmp(part, config, goal_offset if seg.is_contact else 0.0))
    return models
