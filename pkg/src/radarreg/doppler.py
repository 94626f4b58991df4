"""Doppler velocity factor for 2DoF motion states.

Each radar target's measured radial velocity, scaled by the scan time delta,
is an almost direct observation of the longitudinal translation (and, with a
mounting lever arm, of the rotation).  The predicted displacement is

    u_hat = [rot * y_S - t_x, -rot * x_S] . [cos(theta + yaw_S), sin(theta + yaw_S)]

where (x_S, y_S, yaw_S) is the sensor mount offset.  Lateral translation is
omitted: Doppler integration is restricted to nonholonomic 2DoF states.
"""

from __future__ import annotations

import math

from .geometry import Dof, MotionState, RadarTarget, SensorMount, TimingInfo


def _require_2dof(state: MotionState) -> None:
    if state.dof is not Dof.TWO:
        raise ValueError("Doppler factors support only 2DoF states")


def predicted_doppler_translation(state: MotionState, theta: float, mount: SensorMount) -> float:
    """Expected Doppler displacement of a target at azimuth ``theta``."""
    _require_2dof(state)
    c = math.cos(theta + mount.yaw_offset)
    s = math.sin(theta + mount.yaw_offset)
    rot = state.rotation
    tx = state.translation[0]
    return (rot * mount.y_offset - tx) * c - rot * mount.x_offset * s


def _dudtheta(state: MotionState, theta: float, mount: SensorMount) -> float:
    c = math.cos(theta + mount.yaw_offset)
    s = math.sin(theta + mount.yaw_offset)
    rot = state.rotation
    tx = state.translation[0]
    return -(rot * mount.y_offset - tx) * s - rot * mount.x_offset * c


def doppler_variance(
    state: MotionState, target: RadarTarget, mount: SensorMount, timing: TimingInfo
) -> float:
    """Variance of the Doppler displacement residual.

    Combines the azimuth-induced model variance (du/dtheta * sigma_theta)^2,
    evaluated at the current state, with the measurement variance
    (dt * sigma_v)^2 + (v * sigma_dt)^2 of the displacement u = v * dt.
    """
    _require_2dof(state)
    if not target.has_doppler:
        raise ValueError("target carries no Doppler measurement")
    model_var = (_dudtheta(state, target.azimuth_rad, mount) * target.azimuth_std) ** 2
    meas_var = (timing.dt * target.doppler_std) ** 2 + (target.doppler * timing.dt_std) ** 2
    return model_var + meas_var


def doppler_residual(
    state: MotionState, target: RadarTarget, mount: SensorMount, timing: TimingInfo
) -> float:
    """Whitened Doppler residual ``(u_hat - v dt) / sigma``."""
    var = doppler_variance(state, target, mount, timing)
    u_hat = predicted_doppler_translation(state, target.azimuth_rad, mount)
    return (u_hat - target.doppler * timing.dt) / math.sqrt(var)
