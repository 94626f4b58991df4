"""Domain types and planar transform algebra shared across the package.

Radar detections live in polar sensor coordinates; estimation happens on
Cartesian points with propagated covariances.  Motion states are planar rigid
transforms, either 2DoF (longitudinal translation + rotation, nonholonomic
vehicle) or 3DoF (full planar pose delta).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = angle % TWO_PI
    if a > math.pi:
        a -= TWO_PI
    return a


def rot2(angle: float) -> np.ndarray:
    """2x2 rotation matrix."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


class Dof(enum.IntEnum):
    """State dimensionality of a planar motion estimate."""

    TWO = 2
    THREE = 3


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if v is not None and not math.isfinite(v):
            raise ValueError(f"{name}: non-finite value {v!r}")


@dataclass(frozen=True)
class RadarTarget:
    """One polar radar detection.

    Attributes
    ----------
    range_m, azimuth_rad:
        Measured range (m) and azimuth (rad) in the sensor frame.
    range_std, azimuth_std:
        Measurement standard deviations, both strictly positive.
    doppler, doppler_std:
        Optional radial velocity measurement (m/s) and its std.  The sign
        convention follows the relative-translation measurement model used by
        the Doppler factor: a target approached while driving forward carries
        a negative Doppler value.
    """

    range_m: float
    azimuth_rad: float
    range_std: float
    azimuth_std: float
    doppler: float | None = None
    doppler_std: float | None = None

    def __post_init__(self) -> None:
        _require_finite(
            "RadarTarget",
            self.range_m,
            self.azimuth_rad,
            self.range_std,
            self.azimuth_std,
            self.doppler,
            self.doppler_std,
        )
        if self.range_m <= 0:
            raise ValueError(f"range must be > 0, got {self.range_m}")
        if self.range_std <= 0 or self.azimuth_std <= 0:
            raise ValueError("range_std and azimuth_std must be > 0")
        if (self.doppler is None) != (self.doppler_std is None):
            raise ValueError("doppler and doppler_std must be given together")
        if self.doppler_std is not None and self.doppler_std <= 0:
            raise ValueError("doppler_std must be > 0")

    @property
    def has_doppler(self) -> bool:
        return self.doppler is not None


@dataclass(frozen=True)
class CartesianTarget:
    """Cartesian detection: 2-vector mean and 2x2 covariance (m, m^2)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise ValueError("mean must be (2,), covariance (2, 2)")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ValueError("non-finite Cartesian target")
        if abs(cov[0, 1] - cov[1, 0]) > 1e-9 * max(1.0, abs(cov[0, 1])):
            raise ValueError("covariance must be symmetric")
        # 2x2 PD check: positive trace and determinant.
        if np.linalg.det(cov) <= 0 or np.trace(cov) <= 0:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class SensorMount:
    """Sensor pose offset relative to the vehicle's center of rotation."""

    x_offset: float = 0.0
    y_offset: float = 0.0
    yaw_offset: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("SensorMount", self.x_offset, self.y_offset, self.yaw_offset)


@dataclass(frozen=True)
class Scan:
    """Timestamped set of radar targets plus mounting geometry."""

    targets: tuple[RadarTarget, ...]
    timestamp: float
    mount: SensorMount = field(default_factory=SensorMount)

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        _require_finite("Scan", self.timestamp)

    def __len__(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class TimingInfo:
    """Time delta between two scans and its uncertainty."""

    dt: float
    dt_std: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("TimingInfo", self.dt, self.dt_std)
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.dt_std < 0:
            raise ValueError("dt_std must be >= 0")


@dataclass(frozen=True)
class MotionState:
    """Planar motion estimate with optional covariance and solver diagnostics.

    ``translation`` holds ``[x]`` for 2DoF states (lateral translation fixed
    at zero) or ``[x, y]`` for 3DoF.  ``rotation`` is stored wrapped to
    (-pi, pi].  ``covariance`` is the d x d state covariance (None when not
    estimated or not credible).
    """

    dof: Dof
    translation: np.ndarray
    rotation: float
    covariance: np.ndarray | None = None
    iterations: int = 0
    converged: bool = False
    cost: float = math.nan

    def __post_init__(self) -> None:
        dof = Dof(self.dof)
        t = np.atleast_1d(np.asarray(self.translation, dtype=float))
        if t.shape != (dof - 1,):
            raise ValueError(f"translation shape {t.shape} invalid for {dof!r}")
        if not np.isfinite(t).all() or not math.isfinite(self.rotation):
            raise ValueError("non-finite motion state")
        cov = self.covariance
        if cov is not None:
            cov = np.asarray(cov, dtype=float)
            if cov.shape != (dof, dof):
                raise ValueError(f"covariance shape {cov.shape} invalid for {dof!r}")
        object.__setattr__(self, "dof", dof)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", wrap_angle(float(self.rotation)))
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def identity(cls, dof: Dof | int) -> "MotionState":
        dof = Dof(dof)
        return cls(dof=dof, translation=np.zeros(dof - 1), rotation=0.0)

    @classmethod
    def from_vector(cls, vec: np.ndarray, dof: Dof | int, **kwargs) -> "MotionState":
        vec = np.asarray(vec, dtype=float)
        dof = Dof(dof)
        if vec.shape != (int(dof),):
            raise ValueError(f"state vector shape {vec.shape} invalid for {dof!r}")
        return cls(dof=dof, translation=vec[:-1], rotation=vec[-1], **kwargs)

    def vector(self) -> np.ndarray:
        """Return ``[translation..., rotation]`` as a flat array."""
        return np.append(self.translation, self.rotation)

    def translation_2d(self) -> np.ndarray:
        """Translation embedded in the plane (2DoF pads lateral with 0)."""
        if self.dof is Dof.TWO:
            return np.array([self.translation[0], 0.0])
        return self.translation.copy()

    def error_to(self, truth: "MotionState") -> np.ndarray:
        """Estimation error vector against a ground-truth state.

        Rotation error is computed on the circle; both states must share dof.
        """
        if self.dof is not truth.dof:
            raise ValueError("dof mismatch between estimate and truth")
        d_t = self.translation - truth.translation
        d_rot = wrap_angle(self.rotation - truth.rotation)
        return np.append(d_t, d_rot)


def polar_to_cartesian(target: RadarTarget) -> CartesianTarget:
    """Convert a polar detection to Cartesian with first-order covariance.

    The mean maps exactly; the covariance is propagated through the Jacobian
    of ``(r, theta) -> (r cos theta, r sin theta)``, which is accurate for the
    small angular noise of automotive radars.
    """
    r, th = target.range_m, target.azimuth_rad
    c, s = math.cos(th), math.sin(th)
    mean = np.array([r * c, r * s])
    jac = np.array([[c, -r * s], [s, r * c]])
    diag = np.diag([target.range_std**2, target.azimuth_std**2])
    cov = jac @ diag @ jac.T
    return CartesianTarget(mean=mean, covariance=cov)


def apply_transform(state: MotionState, point: np.ndarray) -> np.ndarray:
    """Transform a point by ``R(rot) p + t``."""
    return rot2(state.rotation) @ np.asarray(point, dtype=float) + state.translation_2d()


def rotate_covariance(state: MotionState, cov: np.ndarray) -> np.ndarray:
    """Rotate a 2x2 covariance into the target frame: ``R cov R^T``."""
    r = rot2(state.rotation)
    return r @ np.asarray(cov, dtype=float) @ r.T


def cartesian_targets(scan: Scan) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized conversion of a scan: returns means (K, 2), covs (K, 2, 2)."""
    k = len(scan)
    means = np.empty((k, 2))
    covs = np.empty((k, 2, 2))
    for i, t in enumerate(scan.targets):
        ct = polar_to_cartesian(t)
        means[i] = ct.mean
        covs[i] = ct.covariance
    return means, covs
