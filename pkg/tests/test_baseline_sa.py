import math

import numpy as np
import pytest

from radarreg.baseline_sa import sa_objective, sa_register
from radarreg.estimator import EstimatorConfig, register
from radarreg.geometry import Dof, MotionState, RadarTarget, Scan, TimingInfo
from radarreg.mixture import OutlierConfig, build_model_gmm, gmm_nll
from radarreg.geometry import apply_transform, polar_to_cartesian, rotate_covariance
from radarreg.simulation import make_pair, sim_preset

TIMING = TimingInfo(dt=0.1)


def scan_from_polar(polar, timestamp=0.0, sr=0.2, sth=0.02):
    targets = [RadarTarget(r, th, sr, sth) for r, th in polar]
    return Scan(targets=targets, timestamp=timestamp)


def state2(tx, rot=0.0):
    return MotionState(dof=Dof.TWO, translation=[tx], rotation=rot)


class TestSaObjective:
    def test_single_target_equals_gmm_nll(self):
        prev = scan_from_polar([(3.0, 0.1), (5.0, -0.2), (8.0, 0.4)])
        cur = scan_from_polar([(4.0, 0.05)], timestamp=0.1)
        x = state2(0.3, 0.1)
        model = build_model_gmm(prev)
        ct = polar_to_cartesian(cur.targets[0])
        expected = gmm_nll(model, apply_transform(x, ct.mean), rotate_covariance(x, ct.covariance))
        assert sa_objective(prev, cur, x) == pytest.approx(expected, abs=1e-12)

    def test_invariant_to_target_order(self):
        rng = np.random.default_rng(3)
        polar = [(float(r), float(t)) for r, t in zip(rng.uniform(2, 30, 9), rng.uniform(-0.8, 0.8, 9))]
        prev = scan_from_polar([(float(r), float(t)) for r, t in zip(rng.uniform(2, 30, 8), rng.uniform(-0.8, 0.8, 8))])
        x = state2(0.2, -0.05)
        a = sa_objective(prev, scan_from_polar(polar, 0.1), x)
        b = sa_objective(prev, scan_from_polar(polar[::-1], 0.1), x)
        assert a == pytest.approx(b, abs=1e-12)

    def test_brute_force_summation_oracle(self):
        rng = np.random.default_rng(11)
        prev = scan_from_polar(
            [(float(r), float(t)) for r, t in zip(rng.uniform(2, 30, 6), rng.uniform(-0.8, 0.8, 6))]
        )
        cur = scan_from_polar(
            [(float(r), float(t)) for r, t in zip(rng.uniform(2, 30, 5), rng.uniform(-0.8, 0.8, 5))],
            timestamp=0.1,
        )
        model = build_model_gmm(prev)
        for _ in range(20):
            x = state2(float(rng.normal(0, 0.3)), float(rng.normal(0, 0.2)))
            acc = np.longdouble(0.0)
            for t in cur.targets:
                ct = polar_to_cartesian(t)
                nll = gmm_nll(
                    model, apply_transform(x, ct.mean), rotate_covariance(x, ct.covariance)
                )
                acc += np.exp(np.longdouble(-nll))
            expected = -float(np.log(acc))
            assert sa_objective(prev, cur, x) == pytest.approx(expected, abs=1e-10)

    def test_stable_for_125_targets(self):
        rng = np.random.default_rng(4)
        mk = lambda n, t0: scan_from_polar(
            [(float(r), float(t)) for r, t in zip(rng.uniform(2, 38, n), rng.uniform(-0.9, 0.9, n))],
            timestamp=t0,
        )
        prev, cur = mk(125, 0.0), mk(125, 0.1)
        val = sa_objective(prev, cur, state2(0.1, 0.02))
        assert math.isfinite(val)


class TestSaRegister:
    CFG = EstimatorConfig(dof=Dof.TWO, outlier=OutlierConfig(outlier_weight=0.0))

    def test_identity_recovery(self):
        prev = scan_from_polar([(5.0, -0.5), (9.0, 0.2), (14.0, 0.6), (20.0, -0.1)])
        cur = scan_from_polar([(5.0, -0.5), (9.0, 0.2), (14.0, 0.6), (20.0, -0.1)], timestamp=0.1)
        st = sa_register(prev, cur, self.CFG, TIMING)
        assert st.converged
        assert np.linalg.norm(st.vector()) < 1e-4

    def test_multimodal_toy_problem(self):
        # Two collinear landmarks shifted by 0.4 m plus one far
        # non-corresponding target: the summed score has several optima along
        # the shift axis, while the robust full likelihood reaches the global
        # one from zero init.
        prev = scan_from_polar([(3.0, 0.0), (5.0, 0.0)])
        truth_tx = 0.4
        cur = scan_from_polar(
            [(3.0 - truth_tx, 0.0), (5.0 - truth_tx, 0.0), (15.0, 0.0)], timestamp=0.1
        )

        txs = np.linspace(-2.5, 3.0, 1101)
        vals = np.array([sa_objective(prev, cur, state2(t)) for t in txs])
        interior_minima = [
            i for i in range(1, txs.size - 1) if vals[i] < vals[i - 1] and vals[i] < vals[i + 1]
        ]
        assert len(interior_minima) >= 2

        msm_cfg = EstimatorConfig(
            dof=Dof.TWO,
            outlier=OutlierConfig(s_min=1.0, s_max=20.0, sigma_theta=0.3, outlier_weight=0.25),
        )
        st = register(prev, cur, msm_cfg, TIMING)
        assert st.converged
        assert st.translation[0] == pytest.approx(truth_tx, abs=0.05)

    def test_indefinite_hessian_marks_covariance_invalid(self, monkeypatch):
        import radarreg.baseline_sa as mod

        monkeypatch.setattr(mod, "_numeric_hessian", lambda f, x: np.diag([1.0, -1.0]))
        prev = scan_from_polar([(5.0, 0.0), (9.0, 0.3)])
        cur = scan_from_polar([(5.0, 0.0), (9.0, 0.3)], timestamp=0.1)
        st = sa_register(prev, cur, self.CFG, TIMING)
        assert st.covariance is None
        assert st.converged

    def test_sim_pair_end_to_end(self):
        cfg_sim = sim_preset("sim")
        pair, _ = make_pair(cfg_sim, 0, 0)
        st = sa_register(pair.prev, pair.cur, self.CFG, cfg_sim.timing)
        assert st.converged
        assert st.covariance is None or st.covariance.shape == (2, 2)
        assert math.isfinite(st.cost)

    def test_empty_scan_rejected(self):
        prev = scan_from_polar([(5.0, 0.0)])
        with pytest.raises(ValueError):
            sa_register(prev, Scan(targets=(), timestamp=0.1), self.CFG, TIMING)
