"""Summing-approximation baseline.

Instead of multiplying the per-target likelihoods, this baseline sums them
(optionally each multiplied by its Doppler likelihood) and maximizes the
result with a generic derivative-free solver.  The approach is naturally
robust to outliers but statistically inconsistent: its objective is not a
joint likelihood, so the covariance obtained from the numeric Hessian at the
optimum does not describe the true error distribution, and the summed
surface carries multiple local maxima that capture the zero-initialized
search.  It is implemented here as a comparison target, not repaired.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import optimize as sciopt

from . import kernels
from .estimator import EstimatorConfig
from .geometry import Dof, MotionState, Scan, TimingInfo, cartesian_targets, rot2, wrap_angle
from .mixture import build_model_gmm


class _SaObjective:
    def __init__(self, prev: Scan, cur: Scan, use_doppler: bool, timing: TimingInfo, dof: Dof):
        if len(prev) == 0 or len(cur) == 0:
            raise ValueError("registration requires two non-empty scans")
        self.dof = Dof(dof)
        model = build_model_gmm(prev)
        self._means = model.means
        self._covs = model.covariances
        self._log_w = model.log_weights
        self._cur_means, self._cur_covs = cartesian_targets(cur)
        self._doppler = None
        if use_doppler:
            with_v = [t for t in cur.targets if t.has_doppler]
            if not with_v:
                warnings.warn(
                    "use_doppler requested but no current target has Doppler data; "
                    "solving spatial-only",
                    stacklevel=3,
                )
            else:
                if self.dof is not Dof.TWO:
                    raise ValueError("Doppler integration supports only 2DoF states")
                mount = cur.mount
                theta = np.array([t.azimuth_rad for t in with_v])
                self._doppler = {
                    "idx": np.array([i for i, t in enumerate(cur.targets) if t.has_doppler]),
                    "cos": np.cos(theta + mount.yaw_offset),
                    "sin": np.sin(theta + mount.yaw_offset),
                    "s_theta2": np.array([t.azimuth_std**2 for t in with_v]),
                    "meas_var": np.array(
                        [
                            (timing.dt * t.doppler_std) ** 2 + (t.doppler * timing.dt_std) ** 2
                            for t in with_v
                        ]
                    ),
                    "u_obs": np.array([t.doppler * timing.dt for t in with_v]),
                    "x_s": mount.x_offset,
                    "y_s": mount.y_offset,
                }

    def __call__(self, x: np.ndarray) -> float:
        rot = rot2(x[-1])
        rm = self._cur_means @ rot.T
        t2d = np.array([x[0], 0.0]) if self.dof is Dof.TWO else x[:2]
        points = rm + t2d
        covs_rot = np.einsum("ab,kbc,dc->kad", rot, self._cur_covs, rot)
        nll = kernels.gmm_nll(points, covs_rot, self._means, self._covs, self._log_w)
        log_scores = -nll
        if self._doppler is not None:
            dp = self._doppler
            tx, phi = x[0], x[-1]
            base = phi * dp["y_s"] - tx
            u_hat = base * dp["cos"] - phi * dp["x_s"] * dp["sin"]
            w = -base * dp["sin"] - phi * dp["x_s"] * dp["cos"]
            var = w * w * dp["s_theta2"] + dp["meas_var"]
            log_dopp = -0.5 * (u_hat - dp["u_obs"]) ** 2 / var
            log_scores = log_scores.copy()
            log_scores[dp["idx"]] += log_dopp
        m = log_scores.max()
        return -(m + math.log(np.exp(log_scores - m).sum()))


def sa_objective(
    prev: Scan,
    cur: Scan,
    x: MotionState,
    use_doppler: bool = False,
    timing: TimingInfo | None = None,
) -> float:
    """Negative log of the summed per-target scores at a given state."""
    if timing is None:
        timing = TimingInfo(dt=1.0)
    return _SaObjective(prev, cur, use_doppler, timing, x.dof)(x.vector())


def _numeric_hessian(fun, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    n = x.size
    hess = np.empty((n, n))
    f0 = fun(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        hess[i, i] = (fun(x + ei) - 2.0 * f0 + fun(x - ei)) / step**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)
            ) / (4.0 * step**2)
    return hess


def sa_register(
    prev: Scan,
    cur: Scan,
    cfg: EstimatorConfig,
    timing: TimingInfo,
    init: MotionState | None = None,
) -> MotionState:
    """Maximize the summed score from zero init; covariance from the numeric Hessian.

    The covariance is attached whenever the Hessian at the optimum is positive
    definite; reports downstream flag it as non-credible.
    """
    objective = _SaObjective(prev, cur, cfg.use_doppler, timing, cfg.dof)
    x0 = (init.vector() if init is not None else np.zeros(int(cfg.dof))).astype(float)
    result = sciopt.minimize(
        objective, x0, method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-9}
    )
    x = result.x.copy()
    x[-1] = wrap_angle(x[-1])
    covariance = None
    hess = _numeric_hessian(objective, x)
    if np.isfinite(hess).all():
        try:
            eigvals = np.linalg.eigvalsh(hess)
            if eigvals.min() > 0:
                covariance = np.linalg.inv(hess)
                covariance = 0.5 * (covariance + covariance.T)
        except np.linalg.LinAlgError:
            covariance = None
    return MotionState.from_vector(
        x,
        cfg.dof,
        covariance=covariance,
        iterations=int(result.nit),
        converged=bool(result.success),
        cost=float(result.fun),
    )
