# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mixture evaluation kernels.

Loop-for-loop mirror of ``_reference.py`` (the semantic ground truth); see
that module for the math.  Kept branch-identical so both backends agree to
floating-point roundoff, including argmax tie-breaking (first maximum wins).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

cdef double D_EPS = 1e-12
cdef double NEG_INF = float("-inf")


def backend_name():
    return "native"


cdef inline double _logsumexp(double[::1] ll, Py_ssize_t n, double m) noexcept:
    cdef Py_ssize_t j
    cdef double s = 0.0
    for j in range(n):
        s += exp(ll[j] - m)
    return m + log(s)


def gmm_nll(const double[:, ::1] points, const double[:, :, ::1] point_covs,
            const double[:, ::1] means, const double[:, :, ::1] covs, const double[::1] log_w):
    cdef Py_ssize_t k_pts = points.shape[0]
    cdef Py_ssize_t n = means.shape[0]
    out_arr = np.empty(k_pts)
    ll_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double[::1] ll = ll_arr
    cdef Py_ssize_t i, j
    cdef double pa, pb, pc, a, b, c, det, q0, q1, g0, g1, e, m
    for i in range(k_pts):
        pa = point_covs[i, 0, 0]
        pb = point_covs[i, 0, 1]
        pc = point_covs[i, 1, 1]
        m = NEG_INF
        for j in range(n):
            a = covs[j, 0, 0] + pa
            b = covs[j, 0, 1] + pb
            c = covs[j, 1, 1] + pc
            det = a * c - b * b
            if det <= 0.0 or a <= 0.0:
                raise np.linalg.LinAlgError(
                    "combined component covariance not positive definite")
            q0 = points[i, 0] - means[j, 0]
            q1 = points[i, 1] - means[j, 1]
            g0 = (c * q0 - b * q1) / det
            g1 = (a * q1 - b * q0) / det
            e = 0.5 * (q0 * g0 + q1 * g1)
            ll[j] = log_w[j] - 0.5 * log(det) - e
            if ll[j] > m:
                m = ll[j]
        out[i] = -_logsumexp(ll, n, m)
    return out_arr


def msm_residuals(const double[:, ::1] points, const double[:, :, ::1] point_covs,
                  const double[:, ::1] means, const double[:, :, ::1] covs, const double[::1] log_w):
    cdef Py_ssize_t k_pts = points.shape[0]
    cdef Py_ssize_t n = means.shape[0]
    res_arr = np.empty((k_pts, 3))
    cost_arr = np.empty(k_pts)
    nll_arr = np.empty(k_pts)
    kidx_arr = np.empty(k_pts, dtype=np.intp)
    ll_arr = np.empty(n)
    ls_arr = np.empty(n)
    e_arr = np.empty(n)
    cdef double[:, ::1] res = res_arr
    cdef double[::1] cost = cost_arr
    cdef double[::1] nll = nll_arr
    cdef Py_ssize_t[::1] kidx = kidx_arr
    cdef double[::1] ll = ll_arr
    cdef double[::1] ls = ls_arr
    cdef double[::1] evals = e_arr
    cdef Py_ssize_t i, j, kbest, jstar
    cdef double pa, pb, pc, a, b, c, det, q0, q1, g0, g1, e
    cdef double m, lse, d, l11, l21, l22, r0, r1
    cdef double log_n = log(<double> n)
    for i in range(k_pts):
        pa = point_covs[i, 0, 0]
        pb = point_covs[i, 0, 1]
        pc = point_covs[i, 1, 1]
        m = NEG_INF
        kbest = 0
        jstar = 0
        for j in range(n):
            a = covs[j, 0, 0] + pa
            b = covs[j, 0, 1] + pb
            c = covs[j, 1, 1] + pc
            det = a * c - b * b
            if det <= 0.0 or a <= 0.0:
                raise np.linalg.LinAlgError(
                    "combined component covariance not positive definite")
            q0 = points[i, 0] - means[j, 0]
            q1 = points[i, 1] - means[j, 1]
            g0 = (c * q0 - b * q1) / det
            g1 = (a * q1 - b * q0) / det
            e = 0.5 * (q0 * g0 + q1 * g1)
            ls[j] = log_w[j] - 0.5 * log(det)
            evals[j] = e
            ll[j] = ls[j] - e
            if ll[j] > m:
                m = ll[j]
                kbest = j
            if ls[j] > ls[jstar]:
                jstar = j
        lse = _logsumexp(ll, n, m)
        d = log_n + ls[jstar] - evals[kbest] - lse
        if d < 0.0:
            d = 0.0
        a = covs[kbest, 0, 0] + pa
        b = covs[kbest, 0, 1] + pb
        c = covs[kbest, 1, 1] + pc
        l11 = sqrt(a)
        l21 = b / l11
        l22 = sqrt(c - l21 * l21)
        q0 = points[i, 0] - means[kbest, 0]
        q1 = points[i, 1] - means[kbest, 1]
        r0 = q0 / l11
        r1 = (q1 - l21 * r0) / l22
        res[i, 0] = r0
        res[i, 1] = r1
        res[i, 2] = sqrt(2.0 * d)
        cost[i] = evals[kbest] + d
        nll[i] = -lse
        kidx[i] = kbest
    return res_arr, cost_arr, nll_arr, kidx_arr


def msm_linearize(const double[:, ::1] points, const double[:, ::1] dp_dphi,
                  const double[:, :, ::1] point_covs, const double[:, :, ::1] dcov_dphi,
                  const double[:, ::1] means, const double[:, :, ::1] covs, const double[::1] log_w,
                  Py_ssize_t n_tcols):
    cdef Py_ssize_t k_pts = points.shape[0]
    cdef Py_ssize_t n = means.shape[0]
    cdef Py_ssize_t ncols = n_tcols + 1
    res_arr = np.empty((k_pts, 3))
    jac_arr = np.zeros((k_pts, 3, ncols))
    cost_arr = np.empty(k_pts)
    ll_arr = np.empty(n)
    ls_arr = np.empty(n)
    e_arr = np.empty(n)
    g0_arr = np.empty(n)
    g1_arr = np.empty(n)
    dephi_arr = np.empty(n)
    dlsphi_arr = np.empty(n)
    cdef double[:, ::1] res = res_arr
    cdef double[:, :, ::1] jac = jac_arr
    cdef double[::1] cost = cost_arr
    cdef double[::1] ll = ll_arr
    cdef double[::1] ls = ls_arr
    cdef double[::1] evals = e_arr
    cdef double[::1] g0s = g0_arr
    cdef double[::1] g1s = g1_arr
    cdef double[::1] dephi = dephi_arr
    cdef double[::1] dlsphi = dlsphi_arr
    cdef Py_ssize_t i, j, kbest, jstar
    cdef double pa, pb, pc, adot, bdot, cdot, dp0, dp1
    cdef double a, b, c, det, q0, q1, g0, g1, e
    cdef double m, lse, d, l11, l21, l22, r0, r1
    cdef double w, dnll_t0, dnll_t1, dnll_phi
    cdef double dd_t0, dd_t1, dd_phi, inv_l11, inv_l22
    cdef double l11_dot, l21_dot, l22_dot, v0, v1, w0, scale
    cdef double log_n = log(<double> n)
    for i in range(k_pts):
        pa = point_covs[i, 0, 0]
        pb = point_covs[i, 0, 1]
        pc = point_covs[i, 1, 1]
        adot = dcov_dphi[i, 0, 0]
        bdot = dcov_dphi[i, 0, 1]
        cdot = dcov_dphi[i, 1, 1]
        dp0 = dp_dphi[i, 0]
        dp1 = dp_dphi[i, 1]
        m = NEG_INF
        kbest = 0
        jstar = 0
        for j in range(n):
            a = covs[j, 0, 0] + pa
            b = covs[j, 0, 1] + pb
            c = covs[j, 1, 1] + pc
            det = a * c - b * b
            if det <= 0.0 or a <= 0.0:
                raise np.linalg.LinAlgError(
                    "combined component covariance not positive definite")
            q0 = points[i, 0] - means[j, 0]
            q1 = points[i, 1] - means[j, 1]
            g0 = (c * q0 - b * q1) / det
            g1 = (a * q1 - b * q0) / det
            e = 0.5 * (q0 * g0 + q1 * g1)
            ls[j] = log_w[j] - 0.5 * log(det)
            evals[j] = e
            ll[j] = ls[j] - e
            g0s[j] = g0
            g1s[j] = g1
            dephi[j] = g0 * dp0 + g1 * dp1 - 0.5 * (
                g0 * g0 * adot + 2.0 * g0 * g1 * bdot + g1 * g1 * cdot)
            dlsphi[j] = -0.5 * (c * adot - 2.0 * b * bdot + a * cdot) / det
            if ll[j] > m:
                m = ll[j]
                kbest = j
            if ls[j] > ls[jstar]:
                jstar = j
        lse = _logsumexp(ll, n, m)
        d = log_n + ls[jstar] - evals[kbest] - lse
        if d < 0.0:
            d = 0.0
        dnll_t0 = 0.0
        dnll_t1 = 0.0
        dnll_phi = 0.0
        for j in range(n):
            w = exp(ll[j] - lse)
            dnll_t0 += w * g0s[j]
            dnll_t1 += w * g1s[j]
            dnll_phi -= w * (dlsphi[j] - dephi[j])
        dd_t0 = -g0s[kbest] + dnll_t0
        dd_t1 = -g1s[kbest] + dnll_t1
        dd_phi = dlsphi[jstar] - dephi[kbest] + dnll_phi

        a = covs[kbest, 0, 0] + pa
        b = covs[kbest, 0, 1] + pb
        c = covs[kbest, 1, 1] + pc
        l11 = sqrt(a)
        l21 = b / l11
        l22 = sqrt(c - l21 * l21)
        q0 = points[i, 0] - means[kbest, 0]
        q1 = points[i, 1] - means[kbest, 1]
        r0 = q0 / l11
        r1 = (q1 - l21 * r0) / l22
        res[i, 0] = r0
        res[i, 1] = r1
        res[i, 2] = sqrt(2.0 * d)
        cost[i] = evals[kbest] + d

        inv_l11 = 1.0 / l11
        inv_l22 = 1.0 / l22
        jac[i, 0, 0] = inv_l11
        jac[i, 1, 0] = -l21 * inv_l11 * inv_l22
        if n_tcols == 2:
            jac[i, 1, 1] = inv_l22
        l11_dot = adot / (2.0 * l11)
        l21_dot = (bdot - l21 * l11_dot) / l11
        l22_dot = (cdot - 2.0 * l21 * l21_dot) / (2.0 * l22)
        v0 = dp0 - l11_dot * r0
        v1 = dp1 - (l21_dot * r0 + l22_dot * r1)
        w0 = v0 * inv_l11
        jac[i, 0, ncols - 1] = w0
        jac[i, 1, ncols - 1] = (v1 - l21 * w0) * inv_l22
        if d > D_EPS:
            scale = 1.0 / sqrt(2.0 * d)
            jac[i, 2, 0] = dd_t0 * scale
            if n_tcols == 2:
                jac[i, 2, 1] = dd_t1 * scale
            jac[i, 2, ncols - 1] = dd_phi * scale
    return res_arr, jac_arr, cost_arr
