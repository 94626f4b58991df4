"""Parity between the compiled kernel backend and the numpy reference."""

import numpy as np
import pytest

from radarreg import kernels
from radarreg.kernels import _reference

native = pytest.importorskip("radarreg.kernels._gmmkern")


def random_inputs(rng, k=9, n=6):
    def pd(scale):
        a = rng.normal(size=(2, 2)) * scale
        return a @ a.T + 0.05 * np.eye(2)

    points = rng.normal(0, 8, (k, 2))
    point_covs = np.stack([pd(0.4) for _ in range(k)])
    means = rng.normal(0, 8, (n, 2))
    covs = np.stack([pd(0.5) for _ in range(n)])
    w = rng.uniform(0.2, 2.0, n)
    log_w = np.log(w / w.sum())
    dp = rng.normal(size=(k, 2))
    dcov = np.empty((k, 2, 2))
    a = point_covs[:, 0, 0]
    b = point_covs[:, 0, 1]
    c = point_covs[:, 1, 1]
    dcov[:, 0, 0] = -2 * b
    dcov[:, 0, 1] = dcov[:, 1, 0] = a - c
    dcov[:, 1, 1] = 2 * b
    return points, point_covs, means, covs, log_w, dp, dcov


@pytest.mark.parametrize("seed", range(5))
def test_gmm_nll_parity(seed):
    rng = np.random.default_rng(seed)
    pts, pcov, means, covs, log_w, _, _ = random_inputs(rng)
    a = _reference.gmm_nll(pts, pcov, means, covs, log_w)
    b = native.gmm_nll(pts, pcov, means, covs, log_w)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_msm_residuals_parity(seed):
    rng = np.random.default_rng(100 + seed)
    pts, pcov, means, covs, log_w, _, _ = random_inputs(rng)
    res_a, cost_a, nll_a, k_a = _reference.msm_residuals(pts, pcov, means, covs, log_w)
    res_b, cost_b, nll_b, k_b = native.msm_residuals(pts, pcov, means, covs, log_w)
    np.testing.assert_allclose(res_a, res_b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cost_a, cost_b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(nll_a, nll_b, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(k_a, k_b)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("n_tcols", [1, 2])
def test_msm_linearize_parity(seed, n_tcols):
    rng = np.random.default_rng(200 + seed)
    pts, pcov, means, covs, log_w, dp, dcov = random_inputs(rng)
    res_a, jac_a, cost_a = _reference.msm_linearize(pts, dp, pcov, dcov, means, covs, log_w, n_tcols)
    res_b, jac_b, cost_b = native.msm_linearize(pts, dp, pcov, dcov, means, covs, log_w, n_tcols)
    np.testing.assert_allclose(res_a, res_b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(jac_a, jac_b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cost_a, cost_b, rtol=1e-12, atol=1e-12)


def test_single_component_correction_is_zero_in_both():
    rng = np.random.default_rng(33)
    pts, pcov, _, covs, _, dp, dcov = random_inputs(rng, k=4, n=1)
    means = rng.normal(0, 3, (1, 2))
    log_w = np.zeros(1)
    # With one component the correction vanishes and the cost differs from
    # the exact NLL by log(s_1), the determinant-normalized weight.
    dets = np.linalg.det(covs[:1] + pcov)
    log_s = log_w[0] - 0.5 * np.log(dets)
    for impl in (_reference, native):
        res, cost, nll, _ = impl.msm_residuals(pts, pcov, means, covs[:1], log_w)
        np.testing.assert_array_equal(res[:, 2], 0.0)
        np.testing.assert_allclose(cost, nll + log_s, rtol=1e-12)


def test_non_pd_covariance_raises_in_both():
    rng = np.random.default_rng(44)
    pts, pcov, means, covs, log_w, _, _ = random_inputs(rng, k=2, n=2)
    bad = covs.copy()
    bad[0] = -np.eye(2)
    for impl in (_reference, native):
        with pytest.raises(np.linalg.LinAlgError):
            impl.gmm_nll(pts, pcov, means, bad, log_w)


def test_set_backend_switches_and_restores():
    original = kernels.BACKEND
    try:
        assert kernels.set_backend("python") == "python"
        assert kernels.gmm_nll is _reference.gmm_nll
        if "native" in kernels.available_backends():
            assert kernels.set_backend("native") == "native"
        with pytest.raises(ValueError):
            kernels.set_backend("fortran")
    finally:
        kernels.set_backend(original)


def test_kernels_accept_readonly_arrays():
    rng = np.random.default_rng(55)
    pts, pcov, means, covs, log_w, _, _ = random_inputs(rng, k=3, n=3)
    for arr in (pts, pcov, means, covs, log_w):
        arr.flags.writeable = False
    native.gmm_nll(pts, pcov, means, covs, log_w)
    _reference.gmm_nll(pts, pcov, means, covs, log_w)
