"""Gaussian mixtures for scan registration.

A model scan becomes a mixture with one component per detection and uniform
weights.  Non-corresponding detections are absorbed by a second mixture of
wide components placed along the sensor boresight (a conic ray), which
approximates a uniform distribution over the radar's measurement space.  Both
are merged with a tunable outlier mass and evaluated either exactly (negative
log-likelihood) or as max-sum-mixture residual blocks for least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Scan, cartesian_targets, polar_to_cartesian


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted 2-D Gaussian component."""

    mean: np.ndarray
    covariance: np.ndarray
    weight: float

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise ValueError("component mean must be (2,), covariance (2, 2)")
        if self.weight <= 0:
            raise ValueError("component weight must be > 0")
        if np.linalg.det(cov) <= 0 or cov[0, 0] <= 0:
            raise ValueError("component covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


class MixtureModel:
    """Immutable weighted Gaussian mixture backed by packed arrays."""

    def __init__(self, components: list[GaussianComponent] | tuple[GaussianComponent, ...]):
        if len(components) == 0:
            raise ValueError("mixture needs at least one component")
        self._means = np.array([c.mean for c in components])
        self._covariances = np.array([c.covariance for c in components])
        self._weights = np.array([c.weight for c in components])
        total = self._weights.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights must sum to 1, got {total!r}")
        self._log_weights = np.log(self._weights)
        for arr in (self._means, self._covariances, self._weights, self._log_weights):
            arr.flags.writeable = False

    @classmethod
    def from_arrays(cls, means: np.ndarray, covariances: np.ndarray, weights: np.ndarray) -> "MixtureModel":
        comps = [GaussianComponent(m, c, w) for m, c, w in zip(means, covariances, weights)]
        return cls(comps)

    def __len__(self) -> int:
        return self._means.shape[0]

    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def covariances(self) -> np.ndarray:
        return self._covariances

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def log_weights(self) -> np.ndarray:
        return self._log_weights

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(m.copy(), c.copy(), w)
            for m, c, w in zip(self._means, self._covariances, self._weights)
        ]

    def pdf(self, points: np.ndarray) -> np.ndarray:
        """Normalized mixture density at the given points (shape (..., 2))."""
        pts = np.asarray(points, dtype=float)
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        diff = pts[:, None, :] - self._means[None, :, :]
        a = self._covariances[:, 0, 0]
        b = self._covariances[:, 0, 1]
        c = self._covariances[:, 1, 1]
        det = a * c - b * b
        g0 = (c * diff[..., 0] - b * diff[..., 1]) / det
        g1 = (a * diff[..., 1] - b * diff[..., 0]) / det
        maha = diff[..., 0] * g0 + diff[..., 1] * g1
        dens = self._weights / (2.0 * math.pi * np.sqrt(det)) * np.exp(-0.5 * maha)
        out = dens.sum(axis=1)
        return out[0] if squeeze else out


@dataclass(frozen=True)
class OutlierConfig:
    """Parameters of the conic-ray outlier mixture.

    ``alpha`` sets each component's relative range spread, ``beta`` the
    overlap between neighbors (together they fix the geometric spacing),
    ``s_min``/``s_max`` the covered range interval and ``sigma_theta`` the
    lateral spread.  ``outlier_weight`` is the expected outlier mass used
    when merging with the model mixture; 0 disables the outlier model.
    """

    alpha: float = 0.25
    beta: float = 2.0
    s_min: float = 1.0
    s_max: float = 40.0
    sigma_theta: float | None = None
    outlier_weight: float = 0.25

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if self.beta < 1.0:
            raise ValueError("beta must be >= 1")
        if self.alpha * self.beta >= 1.0:
            raise ValueError("alpha * beta must be < 1 for a valid spacing")
        if not (0.0 < self.s_min < self.s_max):
            raise ValueError("need 0 < s_min < s_max")
        if self.sigma_theta is not None and not (0.0 < self.sigma_theta < math.pi / 2):
            raise ValueError("sigma_theta must be in (0, pi/2)")
        if not (0.0 <= self.outlier_weight < 1.0):
            raise ValueError("outlier_weight must be in [0, 1)")


def build_model_gmm(model_scan: Scan) -> MixtureModel:
    """Mixture over the model scan: one component per target, uniform weight."""
    if len(model_scan) == 0:
        raise ValueError("cannot build a mixture from an empty scan")
    means, covs = cartesian_targets(model_scan)
    weights = np.full(len(model_scan), 1.0 / len(model_scan))
    return MixtureModel.from_arrays(means, covs, weights)


def l2_gaussian(mu1, cov1, mu2, cov2) -> float:
    """L2 distance of two Gaussians: the density of 0 under N(mu1-mu2, cov1+cov2)."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    c = np.atleast_2d(np.asarray(cov1, dtype=float)) + np.atleast_2d(np.asarray(cov2, dtype=float))
    diff = mu1 - mu2
    d = diff.size
    sign, logdet = np.linalg.slogdet(c)
    if sign <= 0:
        raise np.linalg.LinAlgError("covariance sum is singular")
    maha = diff @ np.linalg.solve(c, diff)
    return float(math.exp(-0.5 * maha - 0.5 * logdet - 0.5 * d * math.log(2.0 * math.pi)))


def conic_ray_ranges(cfg: OutlierConfig) -> np.ndarray:
    """Range positions of the conic-ray components.

    Neighboring components overlap at ``beta`` standard deviations, which
    yields geometric spacing with ratio ``(1 + beta alpha) / (1 - beta alpha)``
    starting at ``s_min / (1 - beta alpha)``; generation stops once a
    component's inner edge passes ``s_max``.
    """
    ba = cfg.beta * cfg.alpha
    gamma = (1.0 + ba) / (1.0 - ba)
    x = max(cfg.s_min / (1.0 - ba), cfg.s_min)
    ranges = []
    while x * (1.0 - ba) <= cfg.s_max:
        ranges.append(x)
        x *= gamma
    return np.array(ranges)


def build_outlier_gmm(fov_half_angle: float, cfg: OutlierConfig) -> MixtureModel:
    """Conic-ray mixture approximating a uniform outlier distribution.

    Components sit on the boresight at geometrically spaced ranges with
    range std ``alpha * x_k`` and lateral std ``x_k * tan(sigma_theta)``;
    weights are proportional to ``sqrt(det cov_k)`` so the mixture mimics a
    flat density over the covered area.  ``sigma_theta`` defaults to half the
    field-of-view half-angle, spanning the FoV at two sigma.
    """
    ranges = conic_ray_ranges(cfg)
    if ranges.size == 0:
        raise ValueError("outlier configuration produced no components")
    sigma_theta = cfg.sigma_theta if cfg.sigma_theta is not None else 0.5 * fov_half_angle
    if not (0.0 < sigma_theta < math.pi / 2):
        raise ValueError(f"lateral spread {sigma_theta!r} out of range; adjust sigma_theta")
    sx = cfg.alpha * ranges
    sy = ranges * math.tan(sigma_theta)
    means = np.column_stack([ranges, np.zeros_like(ranges)])
    covs = np.zeros((ranges.size, 2, 2))
    covs[:, 0, 0] = sx**2
    covs[:, 1, 1] = sy**2
    weights = sx * sy  # sqrt(det) of the diagonal covariances
    weights = weights / weights.sum()
    return MixtureModel.from_arrays(means, covs, weights)


def merge_models(inlier: MixtureModel, outlier: MixtureModel, outlier_weight: float) -> MixtureModel:
    """Convex combination of the inlier and outlier mixtures."""
    if not (0.0 <= outlier_weight < 1.0):
        raise ValueError("outlier_weight must be in [0, 1)")
    if outlier_weight == 0.0:
        return inlier
    means = np.vstack([inlier.means, outlier.means])
    covs = np.vstack([inlier.covariances, outlier.covariances])
    weights = np.concatenate(
        [(1.0 - outlier_weight) * inlier.weights, outlier_weight * outlier.weights]
    )
    weights = weights / weights.sum()
    return MixtureModel.from_arrays(means, covs, weights)


def gmm_nll(model: MixtureModel, point: np.ndarray, point_cov: np.ndarray) -> float:
    """Exact negative log-likelihood of a point (with covariance) under the model.

    Evaluates ``-log sum_j s_j exp(-e_j)`` with the determinant-normalized
    weights ``s_j``; the constant 2-D normalization factor is omitted.
    """
    pts = np.asarray(point, dtype=float).reshape(1, 2)
    pcov = np.asarray(point_cov, dtype=float).reshape(1, 2, 2)
    if not (np.isfinite(pts).all() and np.isfinite(pcov).all()):
        raise ValueError("non-finite evaluation point")
    return float(kernels.gmm_nll(pts, pcov, model.means, model.covariances, model.log_weights)[0])


@dataclass(frozen=True)
class MsmLinearization:
    """Max-sum-mixture residual blocks for one evaluation point.

    ``0.5 * (||whitened_residual||^2 + correction_residual^2)`` equals ``cost``,
    which is the mixture NLL shifted by a point-independent constant.
    """

    whitened_residual: np.ndarray
    correction_residual: float
    cost: float
    dominant_index: int


def msm_linearize(model: MixtureModel, point: np.ndarray, point_cov: np.ndarray) -> MsmLinearization:
    """Split the mixture NLL into dominant-component and correction residuals."""
    pts = np.asarray(point, dtype=float).reshape(1, 2)
    pcov = np.asarray(point_cov, dtype=float).reshape(1, 2, 2)
    if not (np.isfinite(pts).all() and np.isfinite(pcov).all()):
        raise ValueError("non-finite evaluation point")
    res, cost, _nll, kidx = kernels.msm_residuals(
        pts, pcov, model.means, model.covariances, model.log_weights
    )
    return MsmLinearization(
        whitened_residual=res[0, :2].copy(),
        correction_residual=float(res[0, 2]),
        cost=float(cost[0]),
        dominant_index=int(kidx[0]),
    )
