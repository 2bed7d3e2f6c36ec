"""Contact-change detection on wrench signals with an identity-dynamics
Kalman filter.

The contact force is modelled as a random walk observed in white noise::

    F(t+1)  = F(t) + v(t),     E[v v^T] = R1
    F_m(t)  = F(t) + e(t),     E[e e^T] = R2

With identity system and output matrices the filter reduces to::

    K    = P (P + R2)^-1
    F^   <- F^ + K (F_m - F^)
    P    <- P + R1 - K (P + R2) K^T          P(0) = R2

The prediction error ``F_m - F^`` normalized by its variance is large when
the contact situation changes; peaks of that measure become segmentation
points.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from .data_core import Demonstration
from .errors import NonNumericCell, NonSpdCovariance, SingularInnovationCovariance
from .gmm_segmenter import SegmentationPoint, Source

NORMALIZERS = ("p", "p_plus_r2")


def _as_matrix(a, m=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape == (1, 1) and m is not None and m > 1:
        a = a[0, 0] * np.eye(m)
    return a


@dataclass(frozen=True, eq=False)
class NoiseConfig:
    """Process (``r1``) and measurement (``r2``) noise covariances.

    ``r2`` must be positive definite; ``r1`` may be singular (zero process
    noise is a valid, if unforgiving, model).
    """

    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        r2 = _as_matrix(self.r2)
        r1 = _as_matrix(self.r1, r2.shape[0])
        if r1.shape != r2.shape or r2.shape[0] != r2.shape[1]:
            raise NonSpdCovariance(f"r1 {r1.shape} and r2 {r2.shape} must be equal square matrices")
        for name, mat, strict in (("r1", r1, False), ("r2", r2, True)):
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise NonSpdCovariance(f"{name} is not symmetric")
            lam = np.linalg.eigvalsh(mat)
            if (strict and lam[0] <= 0) or lam[0] < -1e-15 * max(1.0, lam[-1]):
                raise NonSpdCovariance(f"{name} has eigenvalue {lam[0]:.3g}")
        r1.setflags(write=False)
        r2.setflags(write=False)
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "r2", r2)

    @property
    def m(self) -> int:
        return self.r2.shape[0]

    def scaled(self, c: float) -> "NoiseConfig":
        return NoiseConfig(self.r1 * c, self.r2 * c)


@dataclass(frozen=True, eq=False)
class KalmanState:
    f_hat: np.ndarray
    p: np.ndarray
    k_f: np.ndarray
    t_index: int = 0


@dataclass(frozen=True, eq=False)
class NisSeries:
    t: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))

    def __len__(self):
        return len(self.t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.t, self.value):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


def kalman_init(noise: NoiseConfig, f_m0) -> KalmanState:
    f0 = np.atleast_1d(np.asarray(f_m0, dtype=float)).copy()
    if f0.shape != (noise.m,):
        raise ValueError(f"initial wrench has shape {f0.shape}, expected ({noise.m},)")
    return KalmanState(f_hat=f0, p=noise.r2.copy(), k_f=np.zeros((noise.m, noise.m)), t_index=0)


def kalman_step(
    state: KalmanState,
    f_m,
    noise: NoiseConfig,
    normalizer: str = "p",
) -> tuple[KalmanState, float]:
    """Advance the filter by one measurement.

    Returns the new state (holding the one-step prediction for the next
    sample) and the normalized prediction error of ``f_m``. With
    ``normalizer="p"`` the error is weighted by ``P(t|t-1)^-1``; with
    ``"p_plus_r2"`` by the innovation covariance ``(P + R2)^-1``.
    """
    if normalizer not in NORMALIZERS:
        raise ValueError(f"normalizer must be one of {NORMALIZERS}")
    f_m = np.atleast_1d(np.asarray(f_m, dtype=float))
    P = state.p
    S = P + noise.r2
    err = f_m - state.f_hat
    try:
        # K = P S^-1  <=>  S K^T = P  (S, P symmetric)
        K = np.linalg.solve(S, P).T
        weight = P if normalizer == "p" else S
        nis = float(err @ np.linalg.solve(weight, err))
    except np.linalg.LinAlgError:
        raise SingularInnovationCovariance("P + R2 (or P) is singular") from None
    f_hat = state.f_hat + K @ err
    p_next = P + noise.r1 - K @ S @ K.T
    p_next = 0.5 * (p_next + p_next.T)
    return KalmanState(f_hat=f_hat, p=p_next, k_f=K, t_index=state.t_index + 1), nis


def kalman_filtered_covariance(state_before: KalmanState, noise: NoiseConfig) -> np.ndarray:
    """P(t|t) = P - P (P + R2)^-1 P for the prediction held in ``state_before``."""
    P = state_before.p
    return P - P @ np.linalg.solve(P + noise.r2, P)


def estimate_noise(
    demo: Demonstration,
    window_s: float = 0.5,
    r1_scale: float = 1e-4,
    r2_floor: float = 1e-6,
) -> NoiseConfig:
    """Noise covariances from the first ``window_s`` seconds of wrench data.

    R2 is the sample covariance of that window (assumed contact-free) with a
    diagonal floor so that noise-free data still gives a valid filter; R1 is
    ``r1_scale * R2``.
    """
    t0 = demo.t[0]
    sel = demo.t <= t0 + window_s + 1e-9
    W = demo.w[sel]
    if len(W) < 2:
        W = demo.w[: min(len(demo.w), 2)]
    r2 = np.atleast_2d(np.cov(W, rowvar=False)) if len(W) > 1 else np.zeros((demo.m, demo.m))
    r2 = 0.5 * (r2 + r2.T) + r2_floor * np.eye(demo.m)
    return NoiseConfig(r1=r1_scale * r2, r2=r2)


def nis_series(
    demo: Demonstration,
    noise: NoiseConfig | None = None,
    normalizer: str = "p",
) -> NisSeries:
    """Normalized prediction error for every sample; 0 at the first sample,
    which only initializes the filter."""
    noise = noise or estimate_noise(demo)
    W = demo.w
    state = kalman_init(noise, W[0])
    values = np.zeros(len(W))
    for i in range(1, len(W)):
        state, values[i] = kalman_step(state, W[i], noise, normalizer)
    return NisSeries(demo.t.copy(), values)


def load_nis_csv(path: str | Path) -> NisSeries:
    """Read a two-column ``t,value`` series (e.g. a digitized fixture)."""
    ts, vs = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        start = 1
        if header is not None:
            try:
                ts.append(float(header[0]))
                vs.append(float(header[1]))
                start = 0
            except (ValueError, IndexError):
                pass
        for row_no, row in enumerate(reader, start=2 - start):
            if not row:
                continue
            try:
                ts.append(float(row[0]))
                vs.append(float(row[1]))
            except (ValueError, IndexError):
                raise NonNumericCell(f"row {row_no}: {row!r} is not a (t, value) pair", row=row_no) from None
    return NisSeries(np.array(ts), np.array(vs))


def steady_state_covariance(noise: NoiseConfig) -> np.ndarray:
    """Fixed point of P <- P + R1 - P (P + R2)^-1 P (the one-step prediction
    covariance the filter converges to)."""
    m = noise.m
    eye = np.eye(m)
    P = linalg.solve_discrete_are(eye, eye, noise.r1, noise.r2)
    return 0.5 * (P + P.T)


def nis_threshold(noise: NoiseConfig, false_alarm: float, normalizer: str = "p") -> float:
    """Threshold that steady-state white noise exceeds with probability
    at most ``false_alarm`` per sample.

    In steady state the prediction error has covariance ``P + R2``. Weighted
    by ``P^-1`` its quadratic form is bounded by ``lambda_max`` times a
    chi-square variable with m degrees of freedom, where ``lambda_max`` is the
    largest generalized eigenvalue of ``(P + R2, P)``.
    """
    q = float(stats.chi2.isf(false_alarm, noise.m))
    if normalizer == "p_plus_r2":
        return q
    P = steady_state_covariance(noise)
    lam = linalg.eigh(P + noise.r2, P, eigvals_only=True)
    return float(lam.max()) * q


def detect_peaks(
    series: NisSeries,
    threshold: float = 5.0,
    min_separation: float = 0.5,
) -> list[SegmentationPoint]:
    """Force segmentation points at the maxima of above-threshold clusters.

    Samples above ``threshold`` form one cluster while the time gap between
    consecutive members stays below ``min_separation``.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if min_separation < 0:
        raise ValueError("min_separation must be >= 0")
    idx = np.flatnonzero(series.value > threshold)
    if idx.size == 0:
        return []
    clusters: list[list[int]] = [[int(idx[0])]]
    for i in idx[1:]:
        if series.t[i] - series.t[clusters[-1][-1]] < min_separation:
            clusters[-1].append(int(i))
        else:
            clusters.append([int(i)])
    points = []
    for members in clusters:
        vals = series.value[members]
        best = members[int(np.argmax(vals))]
        points.append(SegmentationPoint(float(series.t[best]), Source.FORCE, float(series.value[best])))
    return points


def detect_contacts(
    demo: Demonstration,
    noise: NoiseConfig | None = None,
    normalizer: str = "p",
    false_alarm: float = 1e-6,
    min_separation: float = 0.5,
) -> tuple[NisSeries, list[SegmentationPoint], float]:
    """Filter raw wrench data and return (series, points, threshold used)."""
    noise = noise or estimate_noise(demo)
    series = nis_series(demo, noise, normalizer)
    threshold = nis_threshold(noise, false_alarm, normalizer)
    return series, detect_peaks(series, threshold, min_separation), threshold
