import math

import numpy as np
import pytest

from radarreg.doppler import doppler_residual, doppler_variance, predicted_doppler_translation
from radarreg.geometry import Dof, MotionState, RadarTarget, SensorMount, TimingInfo


def state2(tx, rot):
    return MotionState(dof=Dof.TWO, translation=[tx], rotation=rot)


def target(theta=0.2, v=-1.0, sv=0.3, stheta=0.05):
    return RadarTarget(
        range_m=10.0, azimuth_rad=theta, range_std=0.2, azimuth_std=stheta, doppler=v, doppler_std=sv
    )


class TestPredictedDopplerTranslation:
    def test_zero_offsets_forward_motion(self):
        # Driving forward makes a boresight target approach: prediction -t_x.
        assert predicted_doppler_translation(state2(1.0, 0.0), 0.0, SensorMount()) == pytest.approx(-1.0)

    def test_stationary_is_zero_everywhere(self):
        st = state2(0.0, 0.0)
        for theta in np.linspace(-1.5, 1.5, 11):
            assert predicted_doppler_translation(st, theta, SensorMount()) == 0.0

    def test_hand_evaluated_with_mount(self):
        mount = SensorMount(x_offset=1.0, y_offset=0.5, yaw_offset=0.0)
        st = state2(0.3, 0.1)
        theta = 0.2
        expected = (0.1 * 0.5 - 0.3) * math.cos(0.2) - 0.1 * 1.0 * math.sin(0.2)
        assert predicted_doppler_translation(st, theta, mount) == pytest.approx(expected, rel=1e-12)

    def test_three_dof_rejected(self):
        st = MotionState(dof=Dof.THREE, translation=[0.1, 0.0], rotation=0.0)
        with pytest.raises(ValueError):
            predicted_doppler_translation(st, 0.0, SensorMount())


class TestDopplerVariance:
    def test_measurement_only_term(self):
        st = state2(0.0, 0.0)
        t = target(stheta=1e-12, sv=0.3)
        var = doppler_variance(st, t, SensorMount(), TimingInfo(dt=0.5, dt_std=0.0))
        assert var == pytest.approx((0.5 * 0.3) ** 2, rel=1e-9)

    def test_stationary_state_kills_model_term(self):
        st = state2(0.0, 0.0)
        t = target(stheta=0.5)
        var = doppler_variance(st, t, SensorMount(), TimingInfo(dt=0.5, dt_std=0.0))
        assert var == pytest.approx((0.5 * 0.3) ** 2, rel=1e-12)

    def test_matches_finite_difference_of_prediction(self):
        rng = np.random.default_rng(8)
        mount = SensorMount(x_offset=0.8, y_offset=-0.4, yaw_offset=0.15)
        timing = TimingInfo(dt=0.1, dt_std=0.002)
        for _ in range(50):
            st = state2(rng.normal(0, 0.3), rng.normal(0, 0.2))
            t = target(theta=rng.normal(0, 0.6), v=rng.normal(0, 2.0))
            h = 1e-6
            up = predicted_doppler_translation(st, t.azimuth_rad + h, mount)
            dn = predicted_doppler_translation(st, t.azimuth_rad - h, mount)
            dudtheta = (up - dn) / (2 * h)
            expected = (dudtheta * t.azimuth_std) ** 2
            expected += (timing.dt * t.doppler_std) ** 2 + (t.doppler * timing.dt_std) ** 2
            got = doppler_variance(st, t, mount, timing)
            assert got == pytest.approx(expected, rel=1e-6)

    def test_missing_doppler_rejected(self):
        t = RadarTarget(range_m=5.0, azimuth_rad=0.0, range_std=0.1, azimuth_std=0.05)
        with pytest.raises(ValueError):
            doppler_variance(state2(0.0, 0.0), t, SensorMount(), TimingInfo(dt=0.1))


class TestDopplerResidual:
    def test_perfect_agreement_is_zero(self):
        st = state2(0.5, 0.0)
        dt = 0.1
        v = -0.5 * math.cos(0.3) / dt
        t = target(theta=0.3, v=v)
        res = doppler_residual(st, t, SensorMount(), TimingInfo(dt=dt))
        assert res == pytest.approx(0.0, abs=1e-12)

    def test_squared_half_matches_density_log(self):
        rng = np.random.default_rng(15)
        mount = SensorMount(x_offset=0.3, y_offset=0.1, yaw_offset=-0.05)
        timing = TimingInfo(dt=0.1, dt_std=0.005)
        for _ in range(50):
            st = state2(rng.normal(0, 0.3), rng.normal(0, 0.2))
            t = target(theta=rng.normal(0, 0.5), v=rng.normal(0, 2.0))
            res = doppler_residual(st, t, mount, timing)
            var = doppler_variance(st, t, mount, timing)
            u_hat = predicted_doppler_translation(st, t.azimuth_rad, mount)
            density = math.exp(-0.5 * (u_hat - t.doppler * timing.dt) ** 2 / var) / math.sqrt(
                2.0 * math.pi * var
            )
            assert 0.5 * res**2 == pytest.approx(
                -math.log(density) - 0.5 * math.log(2.0 * math.pi * var), abs=1e-10
            )

    def test_whitening_scale(self):
        st = state2(0.4, 0.0)
        timing = TimingInfo(dt=1.0, dt_std=0.0)
        t1 = target(theta=0.0, v=1.0, sv=0.3, stheta=1e-12)
        t2 = target(theta=0.0, v=1.0, sv=0.6, stheta=1e-12)
        r1 = doppler_residual(st, t1, SensorMount(), timing)
        r2 = doppler_residual(st, t2, SensorMount(), timing)
        assert abs(r1) == pytest.approx(2.0 * abs(r2), rel=1e-9)

    def test_variance_strictly_positive(self):
        st = state2(0.2, 0.1)
        t = target()
        var = doppler_variance(st, t, SensorMount(), TimingInfo(dt=0.05, dt_std=0.0))
        assert var > 0.0
