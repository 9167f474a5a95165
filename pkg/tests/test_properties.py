"""Property tests for invariants that should hold for any valid input."""

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beaconfi.channel import rss_from_csi
from beaconfi.pdr import heading_vector, step_length
from beaconfi.positioning import (EkfState, EpochMeasurement, HypothesisState, check_covariance,
                                  ekf_predict, ekf_update, mh_predict, select_aps)
from beaconfi.ranging.baselines import PathLossParams, edp_ratio, pathloss_distance
from beaconfi.ranging.network import NnModel, Topology
from beaconfi.training.alignment import optimal_transform, rotation, sensor_cost
from beaconfi.training.evaluate import nearest_rank

coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-np.pi, np.pi, allow_nan=False)
seeds = st.integers(0, 2 ** 32 - 1)


@st.composite
def trajectory_pair(draw, min_k=3, max_k=30):
    k = draw(st.integers(min_k, max_k))
    rng = np.random.default_rng(draw(seeds))
    return rng.normal(size=(k, 2)) * 5, rng.normal(size=(k, 2)) * 5


@st.composite
def covariance(draw):
    rng = np.random.default_rng(draw(seeds))
    A = rng.normal(size=(2, 2)) * draw(st.floats(0.1, 10))
    return A @ A.T + 1e-3 * np.eye(2)


# -- alignment ---------------------------------------------------------------------

@given(trajectory_pair(), angle, coord, coord)
def test_alignment_cost_ignores_rigid_motion_of_pdr(pair, theta, cx, cy):
    Z, P = pair
    moved = P @ rotation(theta).T + [cx, cy]
    a, b = optimal_transform(Z, P).cost, optimal_transform(Z, moved).cost
    assert abs(a - b) <= 1e-9 * max(1.0, a)


@given(trajectory_pair(), angle, coord, coord)
def test_sensor_cost_is_invariant_to_moving_both_trajectories(pair, theta, cx, cy):
    Z, P = pair
    R = rotation(theta)
    a = sensor_cost(Z, P)
    b = sensor_cost(Z @ R.T + [cx, cy], P @ R.T - [cy, cx])
    assert abs(a - b) <= 1e-9 * max(1.0, a)


@given(trajectory_pair(), angle)
def test_optimal_cost_bounds(pair, phi):
    Z, P = pair
    res = optimal_transform(Z, P)
    centred = Z - Z.mean(axis=0)
    assert -1e-9 <= res.cost <= np.sum(centred ** 2) + np.sum((P - P.mean(axis=0)) ** 2) + 1e-9
    # no other angle with its best offset does better
    Q = P @ rotation(phi).T
    other = np.sum((Z - Q - (Z - Q).mean(axis=0)) ** 2)
    assert res.cost <= other * (1 + 1e-12) + 1e-12


# -- EKF -----------------------------------------------------------------------------

@given(covariance(), coord, coord, st.integers(1, 6), seeds)
def test_update_keeps_covariance_psd_and_never_grows(P, x, y, n, seed):
    rng = np.random.default_rng(seed)
    aps = rng.uniform(-60, 60, (n, 2))
    assume(np.min(np.linalg.norm(aps - [x, y], axis=1)) > 0.5)
    meas = EpochMeasurement(aps, rng.uniform(0.5, 40, n), rng.uniform(0.1, 5, n))
    new, _ = ekf_update(EkfState([x, y], P), meas)
    check_covariance(new.P)
    assert np.min(np.linalg.eigvalsh(P - new.P)) >= -1e-9 * np.trace(P)


@given(covariance(), st.floats(0, 3), st.floats(0.05, 5))
def test_predict_adds_isotropic_noise(P, v, dt):
    new = ekf_predict(EkfState([0.0, 0.0], P), v, dt)
    np.testing.assert_allclose(new.P - P, 0.5 * (v * dt) ** 2 * np.eye(2), atol=1e-12)


@given(st.floats(-np.pi, np.pi), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 0.5), seeds)
def test_hypothesis_predict_keeps_covariance_psd(phi, dx, dy, noise, seed):
    A = np.random.default_rng(seed).normal(size=(3, 3))
    hyp = HypothesisState(np.r_[0.0, 0.0, phi], A @ A.T + 1e-6 * np.eye(3))
    out = mh_predict(hyp, [dx, dy], noise)
    assert np.allclose(out.P_tilde, out.P_tilde.T)
    assert np.min(np.linalg.eigvalsh(out.P_tilde)) >= -1e-9 * np.trace(out.P_tilde)
    assert np.isclose(np.cos(out.zeta[2] - phi), 1.0, rtol=0, atol=1e-12)
    assert np.isclose(np.hypot(*out.zeta[:2]), np.hypot(dx, dy), rtol=1e-12, atol=1e-12)


@given(st.lists(st.floats(-95, -20), min_size=0, max_size=12), st.integers(1, 6))
def test_select_aps_keeps_strongest(rss, n_max):
    rss = np.array(rss)
    ids = np.arange(len(rss))[::-1]
    idx = select_aps(ids, rss, n_max)
    assert len(idx) == min(n_max, len(rss)) and len(set(idx)) == len(idx)
    if len(idx):
        assert np.all(np.diff(rss[idx]) <= 0)
        assert rss[idx].min() >= np.max(np.delete(rss, idx), initial=-np.inf)


# -- ranging -----------------------------------------------------------------------

@given(st.floats(-95, -20), st.floats(0.01, 20), st.floats(1.5, 6), st.floats(-40, -15))
def test_pathloss_distance_is_monotone_and_scales_by_decades(rss, delta, eta, rss_d0):
    p = PathLossParams(rss_d0, eta)
    assert pathloss_distance(rss, p) > pathloss_distance(rss + delta, p)
    ratio = pathloss_distance(rss - 10 * eta, p) / pathloss_distance(rss, p)
    assert np.isclose(ratio, 10.0, rtol=1e-12)


@given(seeds, st.floats(0.01, 100), angle)
def test_edp_ratio_is_bounded_and_gain_invariant(seed, gain, phase):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(3, 2, 4, 52)) + 1j * rng.normal(size=(3, 2, 4, 52))
    r = edp_ratio(h)
    assert np.all((r >= 0) & (r <= 1 + 1e-12))
    np.testing.assert_allclose(edp_ratio(gain * np.exp(1j * phase) * h), r, rtol=1e-10)


@given(seeds, st.floats(1e-3, 1e3))
def test_rss_from_csi_shifts_by_twenty_log_gain(seed, gain):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=52) + 1j * rng.normal(size=52)
    assert np.isclose(rss_from_csi(gain * h) - rss_from_csi(h), 20 * np.log10(gain), atol=1e-9)


_TOPO = Topology(n_beacons=2, n_filters=2, hidden=(8,))


@given(seeds, seeds, st.floats(-120, 0), st.floats(-20, 20))
def test_network_outputs_are_bounded_and_offsets_shift_rss(model_seed, data_seed, level, c):
    rng = np.random.default_rng(data_seed)
    model = NnModel.create(_TOPO, model_seed % 1000, ap_ids=[7])
    model.params["offsets"].data[:] = c
    csi = rng.uniform(0, 3, (4, 2, 2, 52))
    rss = level + rng.normal(0, 5, (4, 2, 2))
    d, s = model(csi, rss, ap_ids=[7] * 4)
    assert np.all((d.data >= 0) & (d.data <= _TOPO.d_max) & (s.data >= 0) & (s.data <= _TOPO.s_max))
    d0, s0 = model(csi, rss + c)
    np.testing.assert_allclose(d.data, d0.data, rtol=1e-12)
    np.testing.assert_allclose(s.data, s0.data, rtol=1e-12)


# -- PDR and metrics -----------------------------------------------------------------

@given(st.floats(-20, 20), st.floats(0, 20), st.floats(0, 20))
def test_step_length_grows_with_swing(valley, swing, extra):
    assert step_length(valley + swing, valley) <= step_length(valley + swing + extra, valley)
    assert np.isclose(step_length(swing, 0.0), 0.55 * swing ** 0.25, rtol=1e-12)


@given(arrays(float, st.integers(1, 50), elements=st.floats(-10, 10)))
def test_heading_vectors_are_unit_length(phi):
    np.testing.assert_allclose(np.linalg.norm(heading_vector(phi), axis=-1), 1.0, rtol=1e-12)


@given(arrays(float, st.integers(1, 40), elements=st.floats(0, 100)), st.floats(0, 1),
       st.floats(0, 1))
def test_nearest_rank_is_a_sample_value_and_monotone(x, q1, q2):
    lo, hi = sorted((q1, q2))
    a, b = nearest_rank(x, lo), nearest_rank(x, hi)
    assert a in x and b in x and a <= b
    assert np.mean(x <= b) >= hi - 1e-12
