"""Pure-numpy reference implementation of the mixture evaluation kernels.

This backend is the semantic ground truth; the compiled extension in
``_gmmkern.pyx`` mirrors it loop-for-loop.  Everything is vectorized over
``K`` evaluation points and ``N`` mixture components.

Notation, per evaluation point ``p`` with covariance ``P`` against component
``j`` with mean ``mu_j``, covariance ``S_j`` and weight ``w_j``:

    C_j   = S_j + P                       (combined 2x2 covariance)
    e_j   = 0.5 * (p - mu_j)^T C_j^-1 (p - mu_j)
    s_j   = w_j * det(C_j)^(-1/2)
    nll   = -log sum_j s_j exp(-e_j)      (log-sum-exp stabilized)

The max-sum-mixture split expresses the same value (up to an offset that
does not depend on ``p``) as one whitened 2-vector residual for the dominant
component ``k = argmax_j s_j exp(-e_j)`` plus a scalar correction residual

    rho2 = sqrt(2 d),  d = log(N * max_j s_j) - e_k - log sum_j s_j exp(-e_j)

which is nonnegative because ``sum_j l_j <= N l_k`` and ``s_k <= max_j s_j``.
Jacobians differentiate the dominant/argmax indices as locally constant but
carry every smooth dependence, including the derivative of the evaluation
covariance, so central finite differences of the residuals match.
"""

from __future__ import annotations

import numpy as np

# Below this, the correction residual is treated as exactly zero and its
# Jacobian row suppressed (the sqrt derivative is singular at d = 0).
_D_EPS = 1e-12


def backend_name() -> str:
    return "python"


def _mixture_terms(points, point_covs, means, covs, log_weights):
    """Shared per-(point, component) quantities.

    Returns (q0, q1, a, b, c, det, g0, g1, e, log_s, log_l) with shape (K, N)
    each, where (a, b, c) are the unique entries of C = S_j + P_i and
    (g0, g1) = C^-1 q.
    """
    q = points[:, None, :] - means[None, :, :]
    a = covs[None, :, 0, 0] + point_covs[:, None, 0, 0]
    b = covs[None, :, 0, 1] + point_covs[:, None, 0, 1]
    c = covs[None, :, 1, 1] + point_covs[:, None, 1, 1]
    det = a * c - b * b
    if np.any(det <= 0.0) or np.any(a <= 0.0):
        raise np.linalg.LinAlgError("combined component covariance not positive definite")
    q0 = q[..., 0]
    q1 = q[..., 1]
    g0 = (c * q0 - b * q1) / det
    g1 = (a * q1 - b * q0) / det
    e = 0.5 * (q0 * g0 + q1 * g1)
    log_s = log_weights[None, :] - 0.5 * np.log(det)
    log_l = log_s - e
    return q0, q1, a, b, c, det, g0, g1, e, log_s, log_l


def _logsumexp_rows(log_l):
    m = log_l.max(axis=1)
    return m + np.log(np.exp(log_l - m[:, None]).sum(axis=1))


def gmm_nll(points, point_covs, means, covs, log_weights):
    """Exact mixture negative log-likelihood for each evaluation point.

    Returns an array of shape (K,).
    """
    *_, log_l = _mixture_terms(points, point_covs, means, covs, log_weights)
    return -_logsumexp_rows(log_l)


def _chol2(a, b, c):
    l11 = np.sqrt(a)
    l21 = b / l11
    l22 = np.sqrt(c - l21 * l21)
    return l11, l21, l22


def _msm_core(points, point_covs, means, covs, log_weights):
    terms = _mixture_terms(points, point_covs, means, covs, log_weights)
    q0, q1, a, b, c, det, g0, g1, e, log_s, log_l = terms
    k_pts = points.shape[0]
    n = means.shape[0]
    rows = np.arange(k_pts)
    lse = _logsumexp_rows(log_l)
    kidx = np.argmax(log_l, axis=1)
    jstar = np.argmax(log_s, axis=1)
    d = np.log(n) + log_s[rows, jstar] - e[rows, kidx] - lse
    d = np.maximum(d, 0.0)

    l11, l21, l22 = _chol2(a[rows, kidx], b[rows, kidx], c[rows, kidx])
    r0 = q0[rows, kidx] / l11
    r1 = (q1[rows, kidx] - l21 * r0) / l22

    res = np.empty((k_pts, 3))
    res[:, 0] = r0
    res[:, 1] = r1
    res[:, 2] = np.sqrt(2.0 * d)
    cost = e[rows, kidx] + d
    nll = -lse
    return res, cost, nll, kidx, jstar, d, lse, terms, (l11, l21, l22)


def msm_residuals(points, point_covs, means, covs, log_weights):
    """Max-sum-mixture residual blocks without Jacobians.

    Returns (residuals (K, 3), cost (K,), nll (K,), dominant_index (K,))
    where cost[i] = 0.5 * ||residuals[i]||^2 = nll[i] + log(N * max_j s_j).
    """
    res, cost, nll, kidx, *_ = _msm_core(points, point_covs, means, covs, log_weights)
    return res, cost, nll, kidx


def msm_linearize(points, dp_dphi, point_covs, dcov_dphi, means, covs, log_weights, n_tcols):
    """Residual blocks plus analytic Jacobian w.r.t. the state.

    The state columns are ``n_tcols`` translation components followed by one
    rotation column.  ``dp_dphi`` is the rotation derivative of each
    evaluation point and ``dcov_dphi`` the rotation derivative of its
    covariance; translation derivatives are the canonical basis vectors.

    Returns (residuals (K, 3), jacobian (K, 3, n_tcols + 1), cost (K,)).
    """
    core = _msm_core(points, point_covs, means, covs, log_weights)
    res, cost, nll, kidx, jstar, d, lse, terms, chol = core
    q0, q1, a, b, c, det, g0, g1, e, log_s, log_l = terms
    l11, l21, l22 = chol
    k_pts = points.shape[0]
    rows = np.arange(k_pts)
    ncols = n_tcols + 1

    adot = dcov_dphi[:, 0, 0][:, None]
    bdot = dcov_dphi[:, 0, 1][:, None]
    cdot = dcov_dphi[:, 1, 1][:, None]
    dp0 = dp_dphi[:, 0][:, None]
    dp1 = dp_dphi[:, 1][:, None]

    # de_j/dphi = g^T dp - 0.5 g^T Cdot g;  dlogs_j/dphi = -0.5 tr(C^-1 Cdot)
    de_dphi = g0 * dp0 + g1 * dp1 - 0.5 * (g0 * g0 * adot + 2.0 * g0 * g1 * bdot + g1 * g1 * cdot)
    dlogs_dphi = -0.5 * (c * adot - 2.0 * b * bdot + a * cdot) / det

    omega = np.exp(log_l - lse[:, None])
    dnll_dt0 = (omega * g0).sum(axis=1)
    dnll_dt1 = (omega * g1).sum(axis=1)
    dnll_dphi = -(omega * (dlogs_dphi - de_dphi)).sum(axis=1)

    dd = np.empty((k_pts, ncols))
    dd[:, 0] = -g0[rows, kidx] + dnll_dt0
    if n_tcols == 2:
        dd[:, 1] = -g1[rows, kidx] + dnll_dt1
    dd[:, -1] = dlogs_dphi[rows, jstar] - de_dphi[rows, kidx] + dnll_dphi

    jac = np.zeros((k_pts, 3, ncols))
    # Whitened-residual rows: translation columns are columns of L^-1.
    inv_l11 = 1.0 / l11
    inv_l22 = 1.0 / l22
    jac[:, 0, 0] = inv_l11
    jac[:, 1, 0] = -l21 * inv_l11 * inv_l22
    if n_tcols == 2:
        jac[:, 1, 1] = inv_l22
    # Rotation column: L^-1 (dp_dphi - Ldot rho1) with Ldot from the
    # differentiated 2x2 Cholesky factorization.
    ak_dot = dcov_dphi[:, 0, 0]
    bk_dot = dcov_dphi[:, 0, 1]
    ck_dot = dcov_dphi[:, 1, 1]
    l11_dot = ak_dot / (2.0 * l11)
    l21_dot = (bk_dot - l21 * l11_dot) / l11
    l22_dot = (ck_dot - 2.0 * l21 * l21_dot) / (2.0 * l22)
    r0 = res[:, 0]
    r1 = res[:, 1]
    v0 = dp_dphi[:, 0] - l11_dot * r0
    v1 = dp_dphi[:, 1] - (l21_dot * r0 + l22_dot * r1)
    w0 = v0 * inv_l11
    jac[:, 0, -1] = w0
    jac[:, 1, -1] = (v1 - l21 * w0) * inv_l22
    # Correction row: d(sqrt(2d))/dx = dd/dx / sqrt(2d), suppressed at d ~ 0.
    rho2 = res[:, 2]
    safe = d > _D_EPS
    scale = np.where(safe, 1.0 / np.where(safe, rho2, 1.0), 0.0)
    jac[:, 2, :] = dd * scale[:, None]
    return res, jac, cost
