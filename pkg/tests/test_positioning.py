import numpy as np
import pytest
from scipy.stats import spearmanr

from beaconfi.autodiff import SingularMatrixError
from beaconfi.positioning import (EkfState, EpochMeasurement, FusedPositioner, HypothesisState,
                                  WifiPositioner, ekf_init, ekf_predict, ekf_update, mh_init,
                                  mh_predict, mh_transition_jacobian, mh_update,
                                  mh_update_and_select, range_model, rotation, select_aps)

APS = np.array([[0.0, 0.0], [10.0, 0.0], [3.0, 8.0]])


def _exact(z, aps=APS, s=1e-3):
    return EpochMeasurement(aps, np.linalg.norm(aps - z, axis=1), np.full(len(aps), s))


# -- AP selection ---------------------------------------------------------------

def test_select_all_when_fewer_than_n_max():
    assert sorted(select_aps([4, 9, 2], [-60, -70, -50], 5)) == [0, 1, 2]


def test_select_five_strongest_of_seven():
    rss = [-80, -40, -55, -62, -90, -45, -70]
    assert list(select_aps(np.arange(7), rss, 5)) == [1, 5, 2, 3, 6]


def test_select_ties_go_to_lower_ap_id():
    assert list(select_aps([8, 3, 5], [-50, -50, -60], 1)) == [1]


def test_select_with_no_eligible_ap():
    assert select_aps([], [], 5).size == 0


# -- 2-state EKF -----------------------------------------------------------------

def test_init_centroid_and_covariance():
    np.testing.assert_array_equal(ekf_init([[0, 0], [2, 0]]).z_hat, [1.0, 0.0])
    np.testing.assert_array_equal(ekf_init([[3, 4]]).z_hat, [3.0, 4.0])
    np.testing.assert_array_equal(ekf_init([[0, 0]], 5.0, 5.0).P, 25.0 * np.eye(2))


def test_predict_adds_half_squared_step():
    st = EkfState([1.0, 2.0], np.eye(2))
    np.testing.assert_array_equal(ekf_predict(st, 0.0, 1.0).P, np.eye(2))
    np.testing.assert_array_equal(ekf_predict(st, 1.0, 1.0).P, 1.5 * np.eye(2))
    out = ekf_predict(st, 0.3, 0.9)
    assert np.trace(out.P) > np.trace(st.P)
    np.testing.assert_array_equal(out.z_hat, st.z_hat)


def test_predict_rejects_bad_arguments():
    st = EkfState([0.0, 0.0], np.eye(2))
    with pytest.raises(ValueError):
        ekf_predict(st, -1.0, 1.0)
    with pytest.raises(ValueError):
        ekf_predict(st, 1.0, 0.0)


def test_range_model_at_3_4():
    r, H, keep = range_model(np.array([3.0, 4.0]), np.zeros((1, 2)))
    assert r[0] == 5.0 and keep[0]
    np.testing.assert_allclose(H[0], [0.6, 0.8], rtol=1e-15)


def test_exact_ranges_converge_within_20_updates():
    truth = np.array([4.0, 3.0])
    st = ekf_init(APS)
    for i in range(20):
        st, _ = ekf_update(st, _exact(truth))
        st.check()
    assert np.linalg.norm(st.z_hat - truth) < 1e-2


def test_huge_std_barely_moves_estimate():
    st = ekf_init(APS)
    meas = EpochMeasurement(APS, [1.0, 1.0, 1.0], [1e6] * 3)
    out, _ = ekf_update(st, meas)
    assert np.linalg.norm(out.z_hat - st.z_hat) < 1e-8


def test_ap_on_top_of_estimate_is_dropped():
    st = EkfState([0.0, 0.05], 4 * np.eye(2))
    out, e = ekf_update(st, EpochMeasurement(APS, [5.0, 6.0, 7.0], [1.0] * 3))
    assert e.shape == (2,)
    only_close = EpochMeasurement([[0.0, 0.0]], [3.0], [1.0])
    out, e = ekf_update(st, only_close)
    assert e.size == 0 and np.array_equal(out.z_hat, st.z_hat)


def test_singular_innovation_covariance_reports_condition():
    st = EkfState([5.0, 5.0], np.zeros((2, 2)))
    with pytest.raises(SingularMatrixError):
        ekf_update(st, EpochMeasurement(APS, [5.0, 5.0, 5.0], [1e-300] * 3))


def test_joseph_and_short_form_agree_for_optimal_gain():
    st = ekf_init(APS, 3.0, 4.0)
    meas = EpochMeasurement(APS, [5.0, 6.0, 4.0], [0.5, 1.0, 2.0])
    a, _ = ekf_update(st, meas, joseph=True)
    b, _ = ekf_update(st, meas, joseph=False)
    np.testing.assert_allclose(a.z_hat, b.z_hat, rtol=1e-13)
    np.testing.assert_allclose(a.P, b.P, rtol=1e-10, atol=1e-12)


def test_joint_scaling_of_lambda_and_p_keeps_estimate():
    st = EkfState([2.0, 2.0], np.array([[3.0, 0.4], [0.4, 2.0]]))
    meas = EpochMeasurement(APS, [5.0, 6.0, 4.0], [0.5, 1.0, 2.0])
    c = 7.3
    a, _ = ekf_update(st, meas)
    b, _ = ekf_update(EkfState(st.z_hat, c * st.P), EpochMeasurement(APS, meas.d, np.sqrt(c) * meas.s))
    np.testing.assert_allclose(a.z_hat, b.z_hat, rtol=1e-12)


def test_measurement_dimension_may_change_between_epochs():
    st = ekf_init(APS)
    for n in (3, 1, 2, 3):
        st, e = ekf_update(ekf_predict(st), _exact([4.0, 3.0], APS[:n], s=0.5))
        assert e.shape == (n,)
        st.check()


def test_measurement_validation():
    with pytest.raises(ValueError):
        EpochMeasurement(np.zeros((0, 2)), [], [])
    with pytest.raises(ValueError):
        EpochMeasurement([[0, 0]], [0.0], [1.0])
    with pytest.raises(ValueError):
        EpochMeasurement([[0, 0]], [1.0], [1.0, 2.0])


def test_wifi_positioner_tracks_static_device():
    truth = np.array([6.0, 2.0])
    times = np.arange(30) * 0.9
    meas = [None, None] + [_exact(truth, s=0.2) for _ in times[2:]]
    res = WifiPositioner().predict(times, meas)
    assert np.all(np.isnan(res.positions[:2]))
    assert np.linalg.norm(res.positions[-1] - truth) < 1e-2


# -- multi-hypothesis ---------------------------------------------------------------

def test_mh_init_angles_and_shared_start():
    hyps = mh_init(APS, 4, 2.0, 3.0, np.pi)
    np.testing.assert_allclose([h.phi_ref for h in hyps], [np.pi / 2, np.pi, 3 * np.pi / 2, 0.0])
    assert all(np.array_equal(h.z_hat, APS.mean(axis=0)) for h in hyps)
    np.testing.assert_array_equal(hyps[0].P_tilde, np.diag([4.0, 9.0, np.pi ** 2]))


def test_mh_predict_with_zero_increment_keeps_state():
    h = HypothesisState([1.0, 2.0, 0.7], np.diag([1.0, 2.0, 3.0]))
    out = mh_predict(h, [0.0, 0.0])
    np.testing.assert_array_equal(out.zeta, h.zeta)
    np.testing.assert_array_equal(out.P_tilde, h.P_tilde)


def test_mh_predict_unrotated_step():
    h = HypothesisState([1.0, 2.0, 0.0], np.eye(3))
    np.testing.assert_allclose(mh_predict(h, [0.0, 1.0]).z_hat, [1.0, 3.0], atol=1e-15)


def test_transition_jacobian_matches_finite_difference():
    phi, dp, eps = 1.1, np.array([0.4, -0.7]), 1e-6
    F = mh_transition_jacobian(phi, dp)
    col = (rotation(phi + eps) @ dp - rotation(phi - eps) @ dp) / (2 * eps)
    np.testing.assert_allclose(F[:2, 2], col, rtol=1e-9)
    np.testing.assert_array_equal(F[:, :2], np.eye(3)[:, :2])


def test_pdr_noise_inflates_position_variance():
    h = HypothesisState([0.0, 0.0, 0.3], np.eye(3))
    a = mh_predict(h, [0.6, 0.8], pdr_noise=0.0)
    b = mh_predict(h, [0.6, 0.8], pdr_noise=0.1)
    np.testing.assert_allclose(np.diag(b.P_tilde - a.P_tilde), [0.01, 0.01, 0.0], atol=1e-15)


def test_mh_update_leaves_angle_row_of_h_empty():
    h = HypothesisState([2.0, 2.0, 1.0], np.diag([4.0, 4.0, 0.0]))
    out, _ = mh_update(h, _exact([4.0, 3.0]), t=0.0)
    assert out.phi_ref == pytest.approx(1.0, abs=1e-15)


def test_single_hypothesis_is_selected():
    hyps = mh_init(APS, 1)
    _, best, _ = mh_update_and_select(hyps, _exact([4.0, 3.0]), 0.0)
    assert best == 0


def test_innovation_window_forgets_old_entries():
    h = HypothesisState([0, 0, 0], np.eye(3), window=10.0)
    for t in range(15):
        h.push_innovation(float(t), 1.0)
    assert h.accumulated_innovation == 10.0


def test_instantaneous_selection_switch():
    hyps = mh_init(APS, 3)
    hyps[1].push_innovation(-1.0, 1e6)
    meas = _exact([4.0, 3.0])
    _, best_acc, _ = mh_update_and_select(hyps, meas, 0.0, accumulated=True)
    _, best_now, es = mh_update_and_select(hyps, meas, 0.0, accumulated=False)
    assert best_acc != 1
    assert best_now == int(np.argmin([e @ e for e in es]))


def _square_walk(phi_ref, n=120, dt=0.9, speed=1.1):
    # device walks a 12 m square; PDR increments are expressed in a frame rotated by -phi_ref
    aps = np.array([[0.0, 0.0], [20.0, 0.0], [20.0, 20.0], [0.0, 20.0], [10.0, 25.0]])
    s = np.arange(n) * dt * speed
    side = (s // 12) % 4
    u = s % 12
    corners = np.array([[4.0, 4.0], [16.0, 4.0], [16.0, 16.0], [4.0, 16.0]])
    nxt = np.roll(corners, -1, axis=0)
    truth = corners[side.astype(int)] + (nxt - corners)[side.astype(int)] * (u / 12)[:, None]
    pdr = (rotation(-phi_ref) @ (truth - truth[0]).T).T
    times = np.arange(n) * dt
    meas = [_exact(z, aps, s=0.3) for z in truth]
    return times, meas, pdr, truth


def test_fused_positioner_finds_reference_direction():
    phi = np.radians(40.0)
    times, meas, pdr, truth = _square_walk(phi)
    res = FusedPositioner(n_hypotheses=90).predict(times, meas, pdr)
    err = np.degrees(np.abs(np.angle(np.exp(1j * (res.phi_ref[-1] - phi)))))
    assert err < 5.0
    assert len(set(res.selected[times > 11.0])) == 1
    assert np.linalg.norm(res.positions[-1] - truth[-1]) < 0.5


def test_hypotheses_farther_from_truth_accumulate_more_innovation():
    phi = np.radians(40.0)
    # the 10 s warm-up window; later, hypotheses near the truth all converge to it
    times, meas, pdr, _ = _square_walk(phi, n=12)
    _, trace = FusedPositioner(n_hypotheses=12, warmup=1e9).predict(
        times, meas, pdr, return_hypotheses=True)
    _, ids, acc, _ = trace[-1]
    init = 2 * np.pi * (np.asarray(ids) + 1) / 12
    dist = np.abs(np.angle(np.exp(1j * (init - phi))))
    assert spearmanr(dist, acc)[0] > 0.8
    assert np.argmin(acc) == np.argmin(dist)


def test_covariances_stay_symmetric_psd_over_random_steps():
    rng = np.random.default_rng(0)
    st = ekf_init(APS)
    h = mh_init(APS, 1)[0]
    for i in range(2000):
        z = rng.uniform(-5, 15, 2)
        meas = EpochMeasurement(APS, np.abs(np.linalg.norm(APS - z, axis=1) + rng.normal(0, 1, 3)) + 0.1,
                                rng.uniform(0.1, 5, 3))
        st, _ = ekf_update(ekf_predict(st, rng.uniform(0, 2), rng.uniform(0.1, 1)), meas)
        st.check()
        h, _ = mh_update(mh_predict(h, rng.normal(0, 1, 2), 0.1), meas, float(i))
        assert np.allclose(h.P_tilde, h.P_tilde.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(h.P_tilde)) >= -1e-9
