"""Scan-to-scan registration by robust mixture least squares.

The previous scan becomes a Gaussian mixture (optionally merged with the
conic-ray outlier mixture); every current target contributes max-sum-mixture
residual blocks, and targets with Doppler data add one whitened velocity
residual each.  The stacked problem is minimized with Levenberg-Marquardt,
preceded by a short warm-start phase on inflated covariances that smooths the
cost surface for the zero initialization.  The covariance of the estimate is
the inverse of the Gauss-Newton Hessian J^T J at the optimum, i.e. the
inverse Fisher information of the whitened residual stack.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import (
    Dof,
    MotionState,
    Scan,
    TimingInfo,
    cartesian_targets,
    rot2,
    wrap_angle,
)
from .mixture import MixtureModel, OutlierConfig, build_model_gmm, build_outlier_gmm, merge_models


class DegenerateProblemError(RuntimeError):
    """Raised when the information matrix is too ill-conditioned to invert."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Solver and model settings for :func:`register`."""

    dof: Dof = Dof.TWO
    use_doppler: bool = False
    outlier: OutlierConfig = field(default_factory=OutlierConfig)
    warmstart_scale: float = 5.0
    warmstart_max_iters: int = 5
    max_iters: int = 100
    cost_tolerance: float = 1e-9
    step_tolerance: float = 1e-9
    damping: float = 1e-4

    def __post_init__(self) -> None:
        object.__setattr__(self, "dof", Dof(self.dof))
        if self.warmstart_scale < 1.0:
            raise ValueError("warmstart_scale must be >= 1")
        if min(self.cost_tolerance, self.step_tolerance, self.damping) <= 0:
            raise ValueError("tolerances and damping must be positive")
        if self.max_iters < 1 or self.warmstart_max_iters < 0:
            raise ValueError("iteration limits out of range")


@dataclass(frozen=True)
class _DopplerBlock:
    """Precomputed per-target constants of the Doppler residuals."""

    cos_t: np.ndarray
    sin_t: np.ndarray
    sigma_theta2: np.ndarray
    meas_var: np.ndarray
    u_obs: np.ndarray
    x_s: float
    y_s: float


class RegistrationProblem:
    """Stacked residual view of one registration, linearizable at any state."""

    def __init__(
        self,
        model: MixtureModel,
        cur_means: np.ndarray,
        cur_covs: np.ndarray,
        dof: Dof,
        doppler: _DopplerBlock | None = None,
        cov_scale: float = 1.0,
    ):
        self.model = model
        self.dof = Dof(dof)
        self._cur_means = cur_means
        self._cur_covs = cur_covs * cov_scale
        self._model_covs = model.covariances * cov_scale
        self._doppler = doppler
        self._cov_scale = cov_scale
        self.n_spatial = cur_means.shape[0]
        self.n_doppler = 0 if doppler is None else doppler.u_obs.size

    def with_cov_scale(self, cov_scale: float) -> "RegistrationProblem":
        """Same problem with every measurement covariance multiplied."""
        return RegistrationProblem(
            self.model,
            self._cur_means,
            self._cur_covs / self._cov_scale,
            self.dof,
            self._doppler,
            cov_scale=cov_scale,
        )

    # -- geometry of the current scan at a state ----------------------------

    def _spatial_arrays(self, x: np.ndarray):
        phi = x[-1]
        r = rot2(phi)
        rm = self._cur_means @ r.T
        t2d = np.array([x[0], 0.0]) if self.dof is Dof.TWO else x[:2]
        points = rm + t2d
        dp_dphi = np.column_stack([-rm[:, 1], rm[:, 0]])
        covs_rot = np.einsum("ab,kbc,dc->kad", r, self._cur_covs, r)
        a = covs_rot[:, 0, 0]
        b = covs_rot[:, 0, 1]
        c = covs_rot[:, 1, 1]
        dcov = np.empty_like(covs_rot)
        dcov[:, 0, 0] = -2.0 * b
        dcov[:, 0, 1] = a - c
        dcov[:, 1, 0] = a - c
        dcov[:, 1, 1] = 2.0 * b
        return points, dp_dphi, covs_rot, dcov

    def _doppler_terms(self, x: np.ndarray):
        dp = self._doppler
        tx, phi = x[0], x[-1]
        base = phi * dp.y_s - tx
        u_hat = base * dp.cos_t - phi * dp.x_s * dp.sin_t
        w = -base * dp.sin_t - phi * dp.x_s * dp.cos_t
        var = (w * w * dp.sigma_theta2 + dp.meas_var) * self._cov_scale
        return u_hat, w, var

    # -- residuals / cost / jacobian ----------------------------------------

    def residuals_cost(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        points, _, covs_rot, _ = self._spatial_arrays(x)
        res_sp, _cost, _nll, _k = kernels.msm_residuals(
            points, covs_rot, self.model.means, self._model_covs, self.model.log_weights
        )
        if self._doppler is None:
            rho = res_sp.ravel()
        else:
            u_hat, _, var = self._doppler_terms(x)
            res_dp = (u_hat - self._doppler.u_obs) / np.sqrt(var)
            rho = np.concatenate([res_sp.ravel(), res_dp])
        return rho, 0.5 * float(rho @ rho)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        return self.residuals_cost(x)[0]

    def cost(self, x: np.ndarray) -> float:
        return self.residuals_cost(x)[1]

    def spatial_nll(self, x: np.ndarray) -> float:
        """Exact summed mixture NLL of the current targets at a state."""
        points, _, covs_rot, _ = self._spatial_arrays(x)
        nll = kernels.gmm_nll(
            points, covs_rot, self.model.means, self._model_covs, self.model.log_weights
        )
        return float(nll.sum())

    def linearize(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residual vector and its Jacobian w.r.t. the state at ``x``."""
        n_tcols = int(self.dof) - 1
        points, dp_dphi, covs_rot, dcov = self._spatial_arrays(x)
        res_sp, jac_sp, _cost = kernels.msm_linearize(
            points,
            dp_dphi,
            covs_rot,
            dcov,
            self.model.means,
            self._model_covs,
            self.model.log_weights,
            n_tcols,
        )
        n_rows = 3 * self.n_spatial + self.n_doppler
        rho = np.empty(n_rows)
        jac = np.zeros((n_rows, int(self.dof)))
        rho[: 3 * self.n_spatial] = res_sp.ravel()
        jac[: 3 * self.n_spatial] = jac_sp.reshape(-1, n_tcols + 1)
        if self._doppler is not None:
            dp = self._doppler
            u_hat, w, var = self._doppler_terms(x)
            sigma = np.sqrt(var)
            h = u_hat - dp.u_obs
            du_dtx = -dp.cos_t
            du_dphi = dp.y_s * dp.cos_t - dp.x_s * dp.sin_t
            dw_dtx = dp.sin_t
            dw_dphi = -dp.y_s * dp.sin_t - dp.x_s * dp.cos_t
            dvar_dtx = 2.0 * w * dp.sigma_theta2 * dw_dtx * self._cov_scale
            dvar_dphi = 2.0 * w * dp.sigma_theta2 * dw_dphi * self._cov_scale
            rows = slice(3 * self.n_spatial, n_rows)
            rho[rows] = h / sigma
            jac[rows, 0] = du_dtx / sigma - h * dvar_dtx / (2.0 * var * sigma)
            jac[rows, -1] = du_dphi / sigma - h * dvar_dphi / (2.0 * var * sigma)
        return rho, jac

    def gradient(self, x: np.ndarray) -> np.ndarray:
        rho, jac = self.linearize(x)
        return jac.T @ rho


def assemble_problem(
    prev: Scan, cur: Scan, cfg: EstimatorConfig, timing: TimingInfo
) -> RegistrationProblem:
    """Build the registration objective for a scan pair.

    The model mixture is built from ``prev`` and, for a positive outlier
    weight, merged with the conic-ray mixture.  Doppler residuals are added
    for every current target carrying a velocity when enabled; if none does,
    a warning is issued and the problem falls back to spatial-only.
    """
    if len(prev) == 0 or len(cur) == 0:
        raise ValueError("registration requires two non-empty scans")
    model = build_model_gmm(prev)
    ocfg = cfg.outlier
    if ocfg.outlier_weight > 0.0:
        if ocfg.sigma_theta is None:
            raise ValueError(
                "outlier model enabled but sigma_theta unset; "
                "derive it from the sensor FoV or disable the outlier weight"
            )
        outlier = build_outlier_gmm(2.0 * ocfg.sigma_theta, ocfg)
        model = merge_models(model, outlier, ocfg.outlier_weight)
    cur_means, cur_covs = cartesian_targets(cur)

    doppler = None
    if cfg.use_doppler:
        if cfg.dof is not Dof.TWO:
            raise ValueError("Doppler integration supports only 2DoF states")
        with_v = [t for t in cur.targets if t.has_doppler]
        if not with_v:
            warnings.warn(
                "use_doppler requested but no current target has Doppler data; "
                "solving spatial-only",
                stacklevel=2,
            )
        else:
            mount = cur.mount
            theta = np.array([t.azimuth_rad for t in with_v])
            doppler = _DopplerBlock(
                cos_t=np.cos(theta + mount.yaw_offset),
                sin_t=np.sin(theta + mount.yaw_offset),
                sigma_theta2=np.array([t.azimuth_std**2 for t in with_v]),
                meas_var=np.array(
                    [
                        (timing.dt * t.doppler_std) ** 2 + (t.doppler * timing.dt_std) ** 2
                        for t in with_v
                    ]
                ),
                u_obs=np.array([t.doppler * timing.dt for t in with_v]),
                x_s=mount.x_offset,
                y_s=mount.y_offset,
            )
    return RegistrationProblem(model, cur_means, cur_covs, cfg.dof, doppler)


def _lm_minimize(
    problem: RegistrationProblem,
    x0: np.ndarray,
    cfg: EstimatorConfig,
    max_iters: int,
) -> tuple[np.ndarray, float, int, bool]:
    """Damped least squares with multiplicative lambda schedule.

    Returns (state, cost, linearizations, converged).  An iteration is one
    linearization; steps are accepted only on strict cost decrease, so the
    cost sequence is monotone non-increasing.
    """
    x = x0.copy()
    rho, jac = problem.linearize(x)
    cost = 0.5 * float(rho @ rho)
    lam = cfg.damping
    iters = 0
    converged = False
    for _ in range(max_iters):
        iters += 1
        hess = jac.T @ jac
        grad = jac.T @ rho
        diag = np.diag(np.maximum(np.diag(hess), 1e-12))
        accepted = False
        step_norm = 0.0
        cost_new = cost
        predicted = math.inf
        while lam < 1e12:
            try:
                delta = np.linalg.solve(hess + lam * diag, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not math.isfinite(predicted):
                # Model decrease of the least-damped attempt; scale-free
                # stationarity measure for the no-descent exit below.
                predicted = -float(grad @ delta) - 0.5 * float(delta @ hess @ delta)
            x_new = x + delta
            x_new[-1] = wrap_angle(x_new[-1])
            rho_new, cost_new = problem.residuals_cost(x_new)
            if cost_new < cost:
                accepted = True
                step_norm = float(np.linalg.norm(delta))
                break
            lam *= 10.0
        if not accepted:
            # No descending step exists within damping range.  If the model
            # predicts no meaningful decrease either, we are at a numerical
            # minimum; otherwise report failure.
            converged = bool(predicted <= cfg.cost_tolerance * max(1.0, abs(cost)))
            break
        rel_decrease = (cost - cost_new) / max(1.0, abs(cost))
        x = x_new
        cost = cost_new
        rho, jac = problem.linearize(x)
        lam = max(lam / 3.0, 1e-12)
        if rel_decrease < cfg.cost_tolerance or step_norm < cfg.step_tolerance:
            converged = True
            break
    return x, cost, iters, converged


def optimize(
    problem: RegistrationProblem, init: MotionState, cfg: EstimatorConfig
) -> MotionState:
    """Two-phase minimization: warm start on inflated covariances, then exact."""
    x = init.vector()
    iters_total = 0
    if cfg.warmstart_max_iters > 0 and cfg.warmstart_scale > 1.0:
        scaled = problem.with_cov_scale(cfg.warmstart_scale**2)
        # The warm start only needs to land in the right basin; loose
        # tolerances keep its iteration count down.
        loose = replace(cfg, cost_tolerance=1e-3, step_tolerance=1e-3)
        x, _, it1, _ = _lm_minimize(scaled, x, loose, cfg.warmstart_max_iters)
        iters_total += it1
    x, cost, it2, converged = _lm_minimize(problem, x, cfg, cfg.max_iters)
    iters_total += it2
    return MotionState.from_vector(
        x, problem.dof, iterations=iters_total, converged=converged, cost=cost
    )


def estimate_covariance(problem, state: MotionState) -> np.ndarray:
    """Covariance as the inverse Gauss-Newton Hessian at the estimate."""
    _, jac = problem.linearize(state.vector())
    hess = jac.T @ jac
    if not np.isfinite(hess).all() or np.linalg.cond(hess) > 1e12:
        raise DegenerateProblemError("information matrix is singular or ill-conditioned")
    cov = np.linalg.inv(hess)
    return 0.5 * (cov + cov.T)


def register(
    prev: Scan,
    cur: Scan,
    cfg: EstimatorConfig,
    timing: TimingInfo,
    init: MotionState | None = None,
) -> MotionState:
    """End-to-end registration: assemble, optimize from zero, attach covariance."""
    problem = assemble_problem(prev, cur, cfg, timing)
    if init is None:
        init = MotionState.identity(cfg.dof)
    state = optimize(problem, init, cfg)
    if not state.converged:
        return state
    try:
        cov = estimate_covariance(problem, state)
    except DegenerateProblemError:
        return replace(state, converged=False)
    return replace(state, covariance=cov)
