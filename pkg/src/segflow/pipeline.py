"""End-to-end segmentation and replay built from the individual modules."""

from __future__ import annotations

from dataclasses import dataclass

from .config import RunConfig
from .data_core import Demonstration, is_uniform, resample_uniform, validate
from .dmp_engine import (
    DmpConfig,
    DmpModel,
    ExecConfig,
    ExecutionTrace,
    SimConfig,
    execute_sequence,
    fit_plan_models,
    walls_from_config,
)
from .errors import InvalidDemonstration
from .force_detector import NisSeries, detect_peaks, estimate_noise, nis_series, nis_threshold
from .fusion import SegmentPlan, annotate_segments, assign_contact_thresholds, build_segments, merge_points
from .gmm_segmenter import EmConfig, Gmm, SegmentationPoint, Source, candidate_intervals, initial_points, select_model


@dataclass(frozen=True)
class SegmentationResult:
    demo: Demonstration
    gmm: Gmm
    initial: list[SegmentationPoint]
    nis: NisSeries
    threshold: float
    force_points: list[SegmentationPoint]
    plan: SegmentPlan


def em_config(cfg: RunConfig) -> EmConfig:
    return EmConfig(max_iter=cfg["gmm.max_iter"], tol=cfg["gmm.tol"], reg_eps=cfg["gmm.reg_eps"])


def dmp_config(cfg: RunConfig) -> DmpConfig:
    return DmpConfig(alpha=cfg["dmp.alpha"], n_basis=cfg["dmp.n_basis"], alpha_x=cfg["dmp.alpha_x"], smooth_s=cfg["dmp.smooth_s"])


def exec_config(cfg: RunConfig) -> ExecConfig:
    return ExecConfig(
        goal_tol=cfg["dmp.goal_tol"],
        vel_tol=cfg["dmp.vel_tol"],
        k_c=cfg["dmp.k_c"],
        timeout_factor=cfg["dmp.timeout_factor"],
    )


def sim_config(cfg: RunConfig, channel_names) -> SimConfig:
    entries = [{"stiffness": cfg["sim.wall_stiffness"], **w} for w in cfg["sim.walls"]]
    return SimConfig(
        rate_hz=cfg["sim.rate_hz"],
        walls=walls_from_config(entries, channel_names),
        kp=cfg["sim.kp"],
        kd=cfg["sim.kd"],
    )


def prepare(demo: Demonstration) -> Demonstration:
    """Validate and, if needed, resample onto a uniform grid at the
    demonstration's own rate."""
    report = validate(demo)
    if not report.ok:
        text = "; ".join(f"sample {i}: {d}" if i >= 0 else d for i, d in report.errors)
        raise InvalidDemonstration(text, errors=[{"index": i, "description": d} for i, d in report.errors])
    if not is_uniform(demo.t):
        demo = resample_uniform(demo, demo.rate_hz)
    return demo


def segment_demonstration(demo: Demonstration, cfg: RunConfig | None = None) -> SegmentationResult:
    cfg = cfg or RunConfig()
    demo = prepare(demo)

    gmm = select_model(demo, cfg["gmm.k_min"], cfg["gmm.k_max"], em_config(cfg))
    initial = initial_points(candidate_intervals(gmm))

    noise = estimate_noise(demo, window_s=cfg["kalman.r2_window_s"], r1_scale=cfg["kalman.r1_scale"])
    nis = nis_series(demo, noise, cfg["kalman.normalizer"])
    threshold = nis_threshold(noise, cfg["detector.false_alarm"], cfg["kalman.normalizer"])
    force_pts = detect_peaks(nis, threshold, cfg["detector.min_separation_s"])

    merged = merge_points(initial, force_pts, cfg["fusion.proximity_s"], sample_period=1.0 / demo.rate_hz)
    # position points can fall outside the span when an edge component is wide
    t0, t1 = demo.span
    merged = [p for p in merged if p.source is not Source.POSITION or t0 < p.t < t1]
    plan = build_segments(demo, merged, cfg["fusion.terminal_window_s"])
    plan = annotate_segments(demo, plan, cfg["fusion.idle_speed"], cfg["fusion.idle_rot_speed"])
    plan = assign_contact_thresholds(plan, demo, margin=cfg["fusion.contact_margin"])
    return SegmentationResult(demo, gmm, initial, nis, threshold, force_pts, plan)


def replay(
    demo: Demonstration,
    plan: SegmentPlan,
    cfg: RunConfig | None = None,
    raise_on_timeout: bool = True,
) -> tuple[list[DmpModel], ExecutionTrace]:
    cfg = cfg or RunConfig()
    demo = prepare(demo)
    models = fit_plan_models(demo, plan, dmp_config(cfg), cfg["dmp.goal_offset_m"])
    trace = execute_sequence(plan, models, sim_config(cfg, demo.q_names), exec_config(cfg), raise_on_timeout)
    return models, trace
