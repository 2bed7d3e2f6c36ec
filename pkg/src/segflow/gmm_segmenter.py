"""Position-based segmentation with a time-augmented Gaussian mixture.

Samples are stacked as rows ``(t, xi)`` and clustered with EM. Components are
ordered by their temporal mean, and a candidate interval is taken between each
pair of neighbours, from one standard deviation after the earlier mean to one
standard deviation before the later one. One segmentation point is placed at
the middle of each interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .data_core import Demonstration
from .errors import AllFitsFailed, SegflowError, SingularComponent, TooFewSamples, UnorderedGmm

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


class Source(str, Enum):
    POSITION = "Position"
    FORCE = "Force"
    FUSED = "Fused"


@dataclass(frozen=True)
class SegmentationPoint:
    t: float
    source: Source
    strength: float = 0.0

    def to_dict(self):
        return {"t": self.t, "source": self.source.value, "strength": self.strength}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["t"]), Source(d["source"]), float(d.get("strength", 0.0)))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One mixture component with its mean and covariance split into time and
    configuration blocks."""

    weight: float
    mu_t: float
    mu_xi: np.ndarray
    sigma_t: float
    sigma_t_xi: np.ndarray
    sigma_xi_t: np.ndarray
    sigma_xi: np.ndarray

    @classmethod
    def from_full(cls, weight, mean, cov):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        row = cov[0, 1:].copy()
        return cls(
            weight=float(weight),
            mu_t=float(mean[0]),
            mu_xi=mean[1:].copy(),
            sigma_t=float(cov[0, 0]),
            sigma_t_xi=row,
            sigma_xi_t=row.copy(),
            sigma_xi=cov[1:, 1:].copy(),
        )

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([[self.mu_t], self.mu_xi])

    @property
    def cov(self) -> np.ndarray:
        d = 1 + len(self.mu_xi)
        out = np.empty((d, d))
        out[0, 0] = self.sigma_t
        out[0, 1:] = self.sigma_t_xi
        out[1:, 0] = self.sigma_xi_t
        out[1:, 1:] = self.sigma_xi
        return out

    def to_dict(self):
        return {
            "weight": self.weight,
            "mu_t": self.mu_t,
            "mu_xi": self.mu_xi.tolist(),
            "sigma_t": self.sigma_t,
            "sigma_t_xi": self.sigma_t_xi.tolist(),
            "sigma_xi_t": self.sigma_xi_t.tolist(),
            "sigma_xi": self.sigma_xi.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            weight=float(d["weight"]),
            mu_t=float(d["mu_t"]),
            mu_xi=np.asarray(d["mu_xi"], dtype=float),
            sigma_t=float(d["sigma_t"]),
            sigma_t_xi=np.asarray(d["sigma_t_xi"], dtype=float),
            sigma_xi_t=np.asarray(d["sigma_xi_t"], dtype=float),
            sigma_xi=np.asarray(d["sigma_xi"], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class Gmm:
    components: tuple[GaussianComponent, ...]
    log_likelihood: float
    n_iterations: int
    ll_history: tuple[float, ...] = ()
    n_samples: int = 0

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return 1 + len(self.components[0].mu_xi)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def mu_t(self) -> np.ndarray:
        return np.array([c.mu_t for c in self.components])

    def n_parameters(self) -> int:
        return n_free_parameters(self.k, self.dim)

    def bic(self) -> float:
        return -2.0 * self.log_likelihood + self.n_parameters() * np.log(self.n_samples)

    def score_samples(self, X) -> np.ndarray:
        """Per-row log density of ``X`` (rows are ``(t, xi)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        means = np.array([c.mean for c in self.components])
        covs = np.array([c.cov for c in self.components])
        return logsumexp(_log_joint(X, self.weights, means, covs), axis=1)

    def to_dict(self):
        return {
            "components": [c.to_dict() for c in self.components],
            "log_likelihood": self.log_likelihood,
            "n_iterations": self.n_iterations,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            components=tuple(GaussianComponent.from_dict(c) for c in d["components"]),
            log_likelihood=float(d["log_likelihood"]),
            n_iterations=int(d["n_iterations"]),
            n_samples=int(d.get("n_samples", 0)),
        )


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 200
    tol: float = 1e-6
    reg_eps: float = 1e-6
    standardize: bool = True


@dataclass(frozen=True)
class CandidateInterval:
    t_b1: float
    t_b2: float
    left_index: int
    right_index: int

    @property
    def overlapping(self) -> bool:
        return self.t_b1 > self.t_b2


def n_free_parameters(k: int, d: int) -> int:
    return k * (d + d * (d + 1) // 2) + (k - 1)


def floor_eigenvalues(cov: np.ndarray, eps: float) -> np.ndarray:
    """Closest covariance (in the EM sense) whose eigenvalues are all >= eps.

    Maximizing the expected complete-data log-likelihood over covariances with
    ``min eig >= eps`` gives the sample covariance with its eigenvalues clipped
    at ``eps``. The constraint set is the same every iteration, so EM stays
    monotone. Accepts a single matrix or a stack of them.
    """
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    lam, V = np.linalg.eigh(cov)
    if np.all(lam[..., 0] >= eps):
        return cov
    out = (V * np.maximum(lam, eps)[..., None, :]) @ np.swapaxes(V, -1, -2)
    low = lam[..., 0] < eps
    out = np.where(low[..., None, None], out, cov)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _log_joint(X, weights, means, covs):
    """log(w_k) + log N(x | mu_k, S_k) for every row and component."""
    N, d = X.shape
    try:
        L = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        raise SingularComponent("a component covariance is not positive definite") from None
    diff = X.T[None, :, :] - means[:, :, None]  # (k, d, N)
    z = np.linalg.inv(L) @ diff
    maha = (z * z).sum(axis=1).T
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    return np.log(weights) - 0.5 * (d * _LOG_2PI + logdet + maha)


def _data_matrix(demo: Demonstration) -> np.ndarray:
    return np.column_stack([demo.t, demo.q])


def _fit_standardized(Z, k, config):
    """EM on already-standardized data. Returns (weights, means, covs, resp, history)."""
    N, d = Z.shape

    # deterministic start: k equal-width bins along the time axis
    t = Z[:, 0]
    edges = np.linspace(t.min(), t.max(), k + 1)
    labels = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, k - 1)
    resp = np.zeros((N, k))
    resp[np.arange(N), labels] = 1.0
    if np.any(resp.sum(axis=0) < 2):
        raise TooFewSamples(f"a time bin holds fewer than 2 samples for k={k}")

    history = []
    for it in range(config.max_iter + 1):
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-8 * N):
            raise SingularComponent(f"a component lost all responsibility (k={k})")
        weights = nk / N
        means = (resp.T @ Z) / nk[:, None]
        diff = Z[None, :, :] - means[:, None, :]  # (k, N, d)
        covs = np.swapaxes(diff * resp.T[:, :, None], 1, 2) @ diff / nk[:, None, None]
        covs = floor_eigenvalues(covs, config.reg_eps)

        lj = _log_joint(Z, weights, means, covs)
        lse = logsumexp(lj, axis=1)
        ll = float(lse.sum())
        history.append(ll)
        resp = np.exp(lj - lse[:, None])
        if it > 0 and abs(history[-1] - history[-2]) < config.tol:
            break
    return weights, means, covs, resp, history


def fit_gmm(demo: Demonstration, k: int, config: EmConfig | None = None) -> Gmm:
    """Fit a k-component GMM to ``(t, q)`` rows of ``demo`` with EM.

    Data are z-scored per column before EM (``config.standardize``); the
    covariance eigenvalues are floored at ``reg_eps`` in those normalized
    units. The returned model is in original units and its
    components are sorted by temporal mean.
    """
    config = config or EmConfig()
    X = _data_matrix(demo)
    return fit_gmm_array(X, k, config)


def fit_gmm_array(X: np.ndarray, k: int, config: EmConfig | None = None) -> Gmm:
    """Same as :func:`fit_gmm` on a raw ``(N, 1 + n)`` data matrix."""
    config = config or EmConfig()
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if N < k * (d + 1):
        raise TooFewSamples(f"{N} samples are too few for {k} components in {d} dimensions")

    if config.standardize:
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale < 1e-12] = 1.0
    else:
        center = np.zeros(d)
        scale = np.ones(d)
    Z = (X - center) / scale

    weights, means, covs, resp, history = _fit_standardized(Z, k, config)

    # log-likelihood in original units differs by the Jacobian of the scaling
    shift = -N * float(np.log(scale).sum())
    history = [h + shift for h in history]

    D = np.diag(scale)
    means_o = means * scale + center
    covs_o = np.array([D @ c @ D for c in covs])

    first_index = (resp * np.arange(N)[:, None]).sum(axis=0) / resp.sum(axis=0)
    order = sorted(range(k), key=lambda j: (round(means_o[j, 0], 12), first_index[j]))
    comps = tuple(GaussianComponent.from_full(weights[j], means_o[j], covs_o[j]) for j in order)
    return Gmm(
        components=comps,
        log_likelihood=history[-1],
        n_iterations=len(history) - 1,
        ll_history=tuple(history),
        n_samples=N,
    )


def select_model(
    demo: Demonstration,
    k_min: int = 2,
    k_max: int = 8,
    config: EmConfig | None = None,
) -> Gmm:
    """Fit every k in ``[k_min, k_max]`` and keep the lowest-BIC model.

    Ties go to the smaller k. Fits that fail are skipped.
    """
    if not 1 <= k_min <= k_max:
        raise ValueError(f"need 1 <= k_min <= k_max, got {k_min}, {k_max}")
    best = None
    failures = []
    for k in range(k_min, k_max + 1):
        try:
            g = fit_gmm(demo, k, config)
        except SegflowError as exc:
            log.debug("k=%d failed: %s", k, exc)
            failures.append(f"k={k}: {exc}")
            continue
        if best is None or g.bic() < best.bic():
            best = g
    if best is None:
        raise AllFitsFailed("every component count failed: " + "; ".join(failures))
    return best


def candidate_intervals(gmm: Gmm) -> list[CandidateInterval]:
    comps = gmm.components
    if len(comps) < 2:
        return []
    mu = np.array([c.mu_t for c in comps])
    if np.any(np.diff(mu) <= 0):
        raise UnorderedGmm("components are not sorted by temporal mean")
    out = []
    for i in range(len(comps) - 1):
        t_b1 = comps[i].mu_t + np.sqrt(comps[i].sigma_t)
        t_b2 = comps[i + 1].mu_t - np.sqrt(comps[i + 1].sigma_t)
        out.append(CandidateInterval(float(t_b1), float(t_b2), i, i + 1))
    return out


def initial_points(intervals: Sequence[CandidateInterval]) -> list[SegmentationPoint]:
    """One Position point at the middle of every candidate interval."""
    pts = [SegmentationPoint(0.5 * (iv.t_b1 + iv.t_b2), Source.POSITION, 0.0) for iv in intervals]
    return sorted(pts, key=lambda p: p.t)
