"""Fusion of position- and force-based segmentation points into a segment plan.

Every force point either replaces the nearest initial (position) point within
``proximity`` seconds or, if none is that close, is inserted as a new point.
The resulting points cut the demonstration into segments. A segment whose
right boundary is force-derived ends on a contact change; all others end when
the goal configuration is reached.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .data_core import Demonstration
from .errors import PointOutOfSpan
from .gmm_segmenter import SegmentationPoint, Source

CONTACT_THRESHOLD_FLOOR = 0.5


class EndCondition(str, Enum):
    GOAL_REACHED = "GoalReached"
    CONTACT_CHANGE = "ContactChange"


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    end_condition: EndCondition = EndCondition.GOAL_REACHED
    force_threshold: float | None = None
    idle: bool = False
    label: str = ""
    contact_time: float | None = None

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def is_contact(self) -> bool:
        return self.end_condition is EndCondition.CONTACT_CHANGE

    def to_dict(self):
        d = {
            "t_start": self.t_start,
            "t_end": self.t_end,
            "end_condition": self.end_condition.value,
            "idle": self.idle,
            "label": self.label,
        }
        if self.force_threshold is not None:
            d["threshold"] = self.force_threshold
        if self.contact_time is not None:
            d["contact_time"] = self.contact_time
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            end_condition=EndCondition(d["end_condition"]),
            force_threshold=None if d.get("threshold") is None else float(d["threshold"]),
            idle=bool(d.get("idle", False)),
            label=str(d.get("label", "")),
            contact_time=None if d.get("contact_time") is None else float(d["contact_time"]),
        )


@dataclass(frozen=True)
class SegmentPlan:
    """Segments tiling the demonstration span plus the interior cut points.

    ``terminal`` holds a force point absorbed into the end of the span; it
    marks the last segment as contact-ending instead of opening a new one.
    """

    segments: tuple[Segment, ...]
    points: tuple[SegmentationPoint, ...]
    demo_span: tuple[float, float]
    terminal: SegmentationPoint | None = None

    @property
    def boundaries(self) -> list[SegmentationPoint]:
        return list(self.points) + ([self.terminal] if self.terminal else [])

    @property
    def active_segments(self) -> list[Segment]:
        return [s for s in self.segments if not s.idle]

    def to_dict(self):
        d = {
            "span": list(self.demo_span),
            "points": [p.to_dict() for p in self.points],
            "segments": [s.to_dict() for s in self.segments],
        }
        if self.terminal is not None:
            d["terminal"] = self.terminal.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        term = d.get("terminal")
        return cls(
            segments=tuple(Segment.from_dict(s) for s in d["segments"]),
            points=tuple(SegmentationPoint.from_dict(p) for p in d["points"]),
            demo_span=(float(d["span"][0]), float(d["span"][1])),
            terminal=None if term is None else SegmentationPoint.from_dict(term),
        )


def merge_points(
    initial: Sequence[SegmentationPoint],
    force_pts: Sequence[SegmentationPoint],
    proximity: float = 0.5,
    sample_period: float = 0.0,
) -> list[SegmentationPoint]:
    """Apply force points to an initial point set.

    Force points are taken in ascending time. Each replaces the nearest
    not-yet-used initial point within ``proximity`` (the result is marked
    ``Fused`` and keeps the force strength) or is added as a ``Force`` point.
    Points closer than ``sample_period`` collapse to the stronger one.
    """
    if not proximity > 0:
        raise ValueError("proximity must be positive")
    slots: list[SegmentationPoint | None] = list(initial)
    used = [False] * len(slots)
    added = []
    for f in sorted(force_pts, key=lambda p: p.t):
        best, best_d = None, None
        for i, p in enumerate(slots):
            if used[i]:
                continue
            d = abs(p.t - f.t)
            if d <= proximity and (best_d is None or d < best_d):
                best, best_d = i, d
        if best is None:
            added.append(f)
            continue
        old = slots[best]
        source = Source.FUSED if old.source is Source.POSITION else old.source
        slots[best] = SegmentationPoint(f.t, source, f.strength)
        used[best] = True

    merged = sorted([p for p in slots if p is not None] + added, key=lambda p: p.t)
    out: list[SegmentationPoint] = []
    for p in merged:
        if out and p.t - out[-1].t < max(sample_period, 1e-12):
            if p.strength > out[-1].strength:
                out[-1] = p
            continue
        out.append(p)
    return out


def build_segments(
    demo: Demonstration,
    points: Sequence[SegmentationPoint],
    terminal_window: float = 0.0,
) -> SegmentPlan:
    """Cut the demonstration span at ``points``.

    Force-derived points within ``terminal_window`` seconds of the span end
    do not open a new segment; they turn the final segment into a
    contact-ending one (the demonstration stopped on that contact).
    """
    t0, t1 = demo.span
    pts = sorted(points, key=lambda p: p.t)
    terminal = None
    if terminal_window > 0:
        keep = []
        for p in pts:
            near_end = t1 - terminal_window <= p.t <= t1
            if near_end and p.source is not Source.POSITION:
                if terminal is None or p.strength > terminal.strength:
                    terminal = SegmentationPoint(p.t, Source.FUSED, p.strength)
            else:
                keep.append(p)
        pts = keep
    for p in pts:
        if not t0 < p.t < t1:
            raise PointOutOfSpan(f"point t={p.t} is outside the open span ({t0}, {t1})", t=p.t)
    times = [t0] + [p.t for p in pts] + [t1]
    segs = []
    for i in range(len(times) - 1):
        right = pts[i] if i < len(pts) else terminal
        contact = right is not None and right.source in (Source.FORCE, Source.FUSED)
        segs.append(
            Segment(
                t_start=times[i],
                t_end=times[i + 1],
                end_condition=EndCondition.CONTACT_CHANGE if contact else EndCondition.GOAL_REACHED,
                contact_time=right.t if contact else None,
            )
        )
    return SegmentPlan(tuple(segs), tuple(pts), (t0, t1), terminal)


def _segment_rows(demo: Demonstration, seg: Segment) -> np.ndarray:
    eps = 1e-9
    return np.flatnonzero((demo.t >= seg.t_start - eps) & (demo.t <= seg.t_end + eps))


def segment_speeds(demo: Demonstration, seg: Segment, block_s: float = 0.2) -> tuple[float, float]:
    """Mean translational and rotational speed over a segment.

    Positions are averaged over consecutive blocks of ``block_s`` seconds
    before differencing, which keeps sensor noise from masquerading as
    motion.
    """
    rows = _segment_rows(demo, seg)
    if len(rows) < 2:
        return 0.0, 0.0
    t = demo.t[rows]
    q = demo.q[rows]
    duration = t[-1] - t[0]
    n_blocks = max(2, int(duration // block_s)) if duration > 0 else 2
    n_blocks = min(n_blocks, len(rows))
    chunks = np.array_split(np.arange(len(rows)), n_blocks)
    tm = np.array([t[c].mean() for c in chunks])
    qm = np.array([q[c].mean(axis=0) for c in chunks])
    dt = np.diff(tm)
    vel = np.diff(qm, axis=0) / dt[:, None]
    trans = demo.translation_mask
    speeds = []
    for mask in (trans, ~trans):
        if mask.any():
            speeds.append(float(np.linalg.norm(vel[:, mask], axis=1).mean()))
        else:
            speeds.append(0.0)
    return speeds[0], speeds[1]


def classify_idle(
    demo: Demonstration,
    seg: Segment,
    speed_threshold: float = 0.005,
    rot_speed_threshold: float = 0.01,
    block_s: float = 0.2,
) -> bool:
    """True when the segment's configuration barely moves."""
    v_trans, v_rot = segment_speeds(demo, seg, block_s)
    return v_trans < speed_threshold and v_rot < rot_speed_threshold


def describe_segment(demo: Demonstration, seg: Segment, idle: bool) -> str:
    """Free-text label such as ``"move -z until contact"``."""
    if idle:
        return "idle"
    rows = _segment_rows(demo, seg)
    delta = demo.q[rows[-1]] - demo.q[rows[0]]
    trans = demo.translation_mask
    rot_share = np.abs(delta[~trans]).max() if (~trans).any() else 0.0
    trans_share = np.abs(delta[trans]).max() if trans.any() else 0.0
    if rot_share * 0.1 > trans_share and rot_share > 0:
        j = np.flatnonzero(~trans)[np.argmax(np.abs(delta[~trans]))]
        text = f"rotate {demo.q_names[j]}"
    else:
        idx = np.flatnonzero(trans) if trans.any() else np.arange(demo.n)
        j = idx[np.argmax(np.abs(delta[idx]))]
        text = f"move {'+' if delta[j] >= 0 else '-'}{demo.q_names[j]}"
    if seg.is_contact:
        text += " until contact"
    return text


def annotate_segments(
    demo: Demonstration,
    plan: SegmentPlan,
    speed_threshold: float = 0.005,
    rot_speed_threshold: float = 0.01,
) -> SegmentPlan:
    segs = []
    for s in plan.segments:
        idle = classify_idle(demo, s, speed_threshold, rot_speed_threshold)
        segs.append(replace(s, idle=idle, label=describe_segment(demo, s, idle)))
    return replace(plan, segments=tuple(segs))


def wrench_magnitude(demo: Demonstration) -> np.ndarray:
    mask = demo.force_mask
    W = demo.w[:, mask] if mask.any() else demo.w
    return np.linalg.norm(W, axis=1)


def contact_jump(demo: Demonstration, t_boundary: float, window_s: float = 0.1) -> float:
    """|median |w| just after - median |w| just before| a boundary."""
    mag = wrench_magnitude(demo)
    eps = 1e-9
    before = mag[(demo.t >= t_boundary - window_s - eps) & (demo.t < t_boundary - eps)]
    after = mag[(demo.t >= t_boundary - eps) & (demo.t <= t_boundary + window_s + eps)]
    if before.size == 0 or after.size == 0:
        return 0.0
    return float(abs(np.median(after) - np.median(before)))


def assign_contact_thresholds(
    plan: SegmentPlan,
    demo: Demonstration,
    margin: float = 0.5,
    window_s: float = 0.1,
    floor: float = CONTACT_THRESHOLD_FLOOR,
) -> SegmentPlan:
    """Set each contact segment's execution threshold to ``margin`` times the
    wrench-magnitude jump seen in the demonstration, never below ``floor``."""
    segs = []
    for s in plan.segments:
        if s.is_contact:
            t_b = s.contact_time if s.contact_time is not None else s.t_end
            jump = contact_jump(demo, t_b, window_s)
            s = replace(s, force_threshold=max(floor, margin * jump))
        segs.append(s)
    return replace(plan, segments=tuple(segs))
