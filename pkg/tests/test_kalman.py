import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slftrack.kalman import (KfModel, KfState, SingularInnovation, _gain, _joseph, init_cov, kf_init, kf_predict,
                             kf_run, kf_run_batch, kf_update, steady_state_cov, steady_state_position_rmse)
from slftrack.simkit import Gaussian, GaussianMeas, ScenarioConfig, simulate_tracks, stack_tracks


@pytest.fixture
def model():
    return KfModel.cv(1.0, 30.0, 20.0)


def random_psd(rng, n=4):
    A = rng.normal(size=(n, n))
    return A @ A.T + 1e-3 * np.eye(n)


class TestInit:
    def test_finite_difference(self, model):
        s = kf_init((0, 0), (1, 1), model, 1.0)
        np.testing.assert_array_equal(s.mean, [1, 1, 1, 1])

    def test_identical_points_zero_velocity(self, model):
        s = kf_init((3, -2), (3, -2), model, 1.0)
        assert s.mean[1] == 0 and s.mean[3] == 0

    def test_position_block_is_r(self, model):
        P = kf_init((0, 0), (1, 1), model, 1.0).cov
        np.testing.assert_array_equal(P[[0, 2]][:, [0, 2]], model.R)

    def test_cov_matches_differencing_error(self, model):
        # errors of (z2, (z2 - z1)/dt) for independent measurement noise, plus process noise on the velocity
        dt = 0.5
        P = init_cov(model, dt)
        np.testing.assert_allclose(P[:2, :2], [[30, 60], [60, 2 * 30 / dt**2 + model.Q[1, 1]]])
        assert np.linalg.eigvalsh(P).min() > 0

    def test_rejects_bad_dt(self, model):
        with pytest.raises(ValueError):
            kf_init((0, 0), (1, 1), model, 0.0)


class TestPredictUpdate:
    def test_predict_noiseless(self):
        m = KfModel.cv(0.0, 30, 20)
        s = kf_predict(KfState(np.array([0.0, 1, 0, 1]), np.zeros((4, 4))), m)
        np.testing.assert_array_equal(s.mean, [1, 1, 1, 1])
        np.testing.assert_array_equal(s.cov, 0)

    def test_predict_identity_transition(self, model):
        m = KfModel(np.eye(4), model.H, model.Q, model.R)
        np.testing.assert_array_equal(kf_predict(KfState(np.zeros(4), np.eye(4)), m).cov, np.eye(4) + model.Q)

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_predict_keeps_symmetry(self, seed):
        P = random_psd(np.random.default_rng(seed))
        out = kf_predict(KfState(np.zeros(4), P), KfModel.cv(1.0, 30, 20)).cov
        assert np.abs(out - out.T).max() <= 1e-12 * max(1.0, np.abs(out).max())

    def test_perfect_measurement(self, model):
        m = KfModel(model.F, model.H, model.Q, np.diag([1e-12, 1e-12]))
        s = kf_update(KfState(np.array([0.0, 1, 0, 1]), np.eye(4)), (5.0, -3.0), m)
        np.testing.assert_allclose(s.mean[[0, 2]], [5, -3], atol=1e-9)

    def test_perfect_prior(self, model):
        mean = np.array([1.0, 2, 3, 4])
        s = kf_update(KfState(mean, np.zeros((4, 4))), (100.0, 100.0), model)
        np.testing.assert_array_equal(s.mean, mean)
        np.testing.assert_array_equal(s.cov, 0)

    @pytest.mark.parametrize("prior, meas", [(4.0, 30.0), (100.0, 20.0), (0.5, 0.5)])
    def test_scalar_fusion(self, prior, meas):
        m = KfModel.cv(1.0, meas, meas)
        s = kf_update(KfState(np.zeros(4), np.diag([prior, 1.0, prior, 1.0])), (1.0, 1.0), m)
        want = 1.0 / (1.0 / prior + 1.0 / meas)
        assert s.cov[0, 0] == pytest.approx(want, rel=1e-12)
        assert s.cov[2, 2] == pytest.approx(want, rel=1e-12)
        assert s.mean[0] == pytest.approx(prior / (prior + meas), rel=1e-12)

    def test_singular_innovation(self):
        m = KfModel.cv(1.0, 0.0, 0.0)
        with pytest.raises(SingularInnovation):
            kf_update(KfState(np.zeros(4), np.zeros((4, 4))), (1.0, 1.0), m)

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1))
    def test_joseph_matches_standard_form(self, seed):
        rng = np.random.default_rng(seed)
        P = random_psd(rng)
        R = random_psd(rng, 2)
        m = KfModel(np.eye(4), KfModel.cv(1, 1, 1).H, np.zeros((4, 4)), R)
        K = _gain(P, m)
        standard = (np.eye(4) - K @ m.H) @ P
        np.testing.assert_allclose(_joseph(P, K, m), standard, atol=1e-8 * max(1.0, np.abs(P).max()))

    def test_long_run_stays_symmetric_psd(self, model):
        rng = np.random.default_rng(0)
        s = kf_init((0, 0), (1, 1), model, 1.0)
        for _ in range(10_000):
            s = kf_update(kf_predict(s, model), rng.normal(size=2) * 5, model)
            assert np.abs(s.cov - s.cov.T).max() < 1e-9
        assert np.linalg.eigvalsh(s.cov).min() >= -1e-9


@pytest.fixture(scope="module")
def matched():
    truth, meas = stack_tracks(simulate_tracks(ScenarioConfig(T=50, n_tracks=1000, seed=21)))
    est = kf_run_batch(meas, KfModel.cv(1.0, 30, 20), 1.0)
    pos = truth[..., [0, 2]]
    rmse = lambda a: np.sqrt(np.mean(np.sum((a - pos) ** 2, axis=-1), axis=0))
    return rmse(est), rmse(meas)


class TestRun:
    def test_noiseless_matched(self):
        cfg = ScenarioConfig(T=50, n_tracks=1, proc=Gaussian(0.0), meas=GaussianMeas(0.0, 0.0), seed=3)
        tp = simulate_tracks(cfg)[0]
        est = kf_run(tp.measurements(), KfModel.cv(0.0, 30, 20), 1.0)
        assert np.abs(est[-1] - tp.positions[-1]).max() < 1e-6

    def test_length_two(self, model):
        est = kf_run([(0.0, 0.0), (1.0, 2.0)], model, 1.0)
        np.testing.assert_array_equal(est, [[0, 0], [1, 2]])

    def test_too_short(self, model):
        with pytest.raises(ValueError):
            kf_run([(0.0, 0.0)], model, 1.0)

    def test_batch_matches_single(self, model):
        _, meas = stack_tracks(simulate_tracks(ScenarioConfig(T=25, n_tracks=6, seed=4)))
        batch = kf_run_batch(meas, model, 1.0)
        for i in range(len(meas)):
            np.testing.assert_allclose(batch[i], kf_run(meas[i], model, 1.0), rtol=0, atol=1e-9)

    def test_rmse_trend_after_burn_in(self, matched):
        kf, _ = matched
        k = np.arange(5, 51)
        assert np.polyfit(k, kf[4:], 1)[0] <= 0

    def test_beats_measurements_at_30(self, matched):
        kf, meas = matched
        # 3-sigma margin on the Monte Carlo estimate of the measurement RMSE (about 1.6% per sigma at N=1000)
        assert kf[29] <= meas[29] * (1 - 3 * 0.016)


class TestSteadyState:
    def test_fixed_point(self, model):
        P = steady_state_cov(model)
        pred = model.F @ P @ model.F.T + model.Q
        nxt = _joseph(pred, _gain(pred, model), model)
        assert np.abs(nxt - P).max() < 1e-9
        assert 0 < steady_state_position_rmse(model) < np.sqrt(50)

    def test_more_process_noise_more_variance(self, model):
        big = KfModel(model.F, model.H, 100 * model.Q, model.R)
        P, Pb = steady_state_cov(model), steady_state_cov(big)
        assert Pb[0, 0] > P[0, 0] and Pb[2, 2] > P[2, 2]

    def test_axes_decoupled(self, model):
        other = KfModel.cv(1.0, 30.0, 3.0)
        P, Po = steady_state_cov(model), steady_state_cov(other)
        np.testing.assert_allclose(P[:2, :2], Po[:2, :2], rtol=1e-9)
        np.testing.assert_array_equal(P[:2, 2:], 0)
