"""Range-based EKF positioning and the multi-hypothesis reference-direction filter."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff.ops import MAX_CONDITION, SingularMatrixError

# Rows whose AP lies closer than this to the prior estimate are dropped;
# the range Jacobian is undefined at zero distance.
MIN_JACOBIAN_RANGE = 0.1


@dataclass
class EkfState:
    z_hat: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.z_hat = np.asarray(self.z_hat, dtype=float).reshape(2)
        self.P = np.asarray(self.P, dtype=float).reshape(2, 2)

    def check(self, tol=1e-9):
        check_covariance(self.P, tol)
        return self


@dataclass
class EpochMeasurement:
    """Ranging results from the APs selected at one epoch."""

    ap_positions: np.ndarray
    d: np.ndarray
    s: np.ndarray
    ap_ids: np.ndarray = None

    def __post_init__(self):
        self.ap_positions = np.asarray(self.ap_positions, dtype=float).reshape(-1, 2)
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        self.s = np.asarray(self.s, dtype=float).reshape(-1)
        n = len(self.ap_positions)
        if n < 1 or self.d.shape != (n,) or self.s.shape != (n,):
            raise ValueError("need N >= 1 APs with one distance and one std each")
        if np.any(self.d <= 0) or np.any(self.s <= 0):
            raise ValueError("distances and standard deviations must be positive")
        if self.ap_ids is not None:
            self.ap_ids = np.asarray(self.ap_ids, dtype=int).reshape(n)

    def __len__(self):
        return len(self.d)

    @property
    def covariance(self):
        return np.diag(self.s ** 2)


@dataclass
class HypothesisState:
    zeta: np.ndarray
    P_tilde: np.ndarray
    innovations: list = field(default_factory=list)
    window: float = 10.0

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float).reshape(3)
        self.zeta[2] = self.zeta[2] % (2 * np.pi)
        self.P_tilde = np.asarray(self.P_tilde, dtype=float).reshape(3, 3)

    @property
    def z_hat(self):
        return self.zeta[:2]

    @property
    def phi_ref(self):
        return float(self.zeta[2])

    @property
    def accumulated_innovation(self):
        """Sum of squared innovation norms within the sliding window."""
        return float(sum(e for _, e in self.innovations))

    def push_innovation(self, t, sq_norm):
        self.innovations.append((t, float(sq_norm)))
        cutoff = t - self.window
        self.innovations = [(ti, e) for ti, e in self.innovations if ti > cutoff]


def check_covariance(P, tol=1e-9):
    if not np.allclose(P, P.T, atol=1e-12, rtol=0):
        raise FloatingPointError("covariance lost symmetry")
    if np.min(np.linalg.eigvalsh(P)) < -tol:
        raise FloatingPointError("covariance is not positive semi-definite")


def rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def select_aps(ap_ids, mean_rss, n_max=5):
    """Indices of up to ``n_max`` APs by descending mean RSS, ties to lower ap_id."""
    ap_ids = np.asarray(ap_ids)
    mean_rss = np.asarray(mean_rss, dtype=float)
    if ap_ids.size == 0:
        return np.array([], dtype=int)
    order = np.lexsort((ap_ids, -mean_rss))
    return order[:n_max]


def ekf_init(ap_positions, s_x=10.0, s_y=10.0):
    ap = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    if len(ap) < 1:
        raise ValueError("need at least one AP to initialize")
    return EkfState(ap.mean(axis=0), np.diag([s_x ** 2, s_y ** 2]))


def process_noise(v, dt):
    """Random-direction motion covariance, 0.5 (v dt)^2 I."""
    if v < 0 or dt <= 0:
        raise ValueError("need v >= 0 and dt > 0")
    return 0.5 * (v * dt) ** 2 * np.eye(2)


def epoch_dts(times):
    """Gaps between epochs; the first epoch reuses the first gap (1 s if K = 1)."""
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    return np.r_[dt[0] if dt.size else 1.0, dt]


def ekf_predict(state, v=1.0, dt=1.0):
    return EkfState(state.z_hat.copy(), state.P + process_noise(v, dt))


def _safe_inv(S):
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(float(cond), S.shape)
    return np.linalg.inv(S)


def range_model(z, ap_positions):
    """Predicted ranges and their Jacobian rows, dropping APs too close to ``z``."""
    diff = z[None, :] - ap_positions
    r = np.sqrt(np.sum(diff ** 2, axis=1))
    keep = r >= MIN_JACOBIAN_RANGE
    return r, diff / np.where(keep, r, 1.0)[:, None], keep


def _kalman_update(x, P, H, e, lam, joseph):
    S = H @ P @ H.T + lam
    G = P @ H.T @ _safe_inv(S)
    x = x + G @ e
    A = np.eye(len(x)) - G @ H
    if joseph:
        P = A @ P @ A.T + G @ lam @ G.T
    else:
        P = A @ P
    return x, 0.5 * (P + P.T)


def ekf_update(state, meas, joseph=True):
    """Range update; returns (new state, innovation over the used rows)."""
    r, H, keep = range_model(state.z_hat, meas.ap_positions)
    if not np.any(keep):
        return EkfState(state.z_hat.copy(), state.P.copy()), np.zeros(0)
    e = meas.d[keep] - r[keep]
    z, P = _kalman_update(state.z_hat, state.P, H[keep], e, np.diag(meas.s[keep] ** 2), joseph)
    return EkfState(z, P), e


def mh_init(ap_positions, M, s_x=10.0, s_y=10.0, s_phi=np.pi, window=10.0):
    """M hypotheses sharing the AP-centroid start, reference angles 2*pi*m/M."""
    base = ekf_init(ap_positions, s_x, s_y)
    P0 = np.diag([s_x ** 2, s_y ** 2, s_phi ** 2])
    return [HypothesisState(np.r_[base.z_hat, 2 * np.pi * m / M], P0.copy(), window=window)
            for m in range(1, M + 1)]


def mh_transition_jacobian(phi, dp):
    F = np.eye(3)
    F[:2, 2] = rotation(phi + np.pi / 2) @ dp
    return F


def mh_predict(hyp, dp, pdr_noise=0.0):
    """Advance by the rotated PDR increment.

    ``pdr_noise`` adds (pdr_noise * |dp|)^2 to each position variance; zero
    reproduces the pure F P F^T propagation.
    """
    dp = np.asarray(dp, dtype=float).reshape(2)
    phi = hyp.zeta[2]
    F = mh_transition_jacobian(phi, dp)
    zeta = hyp.zeta.copy()
    zeta[:2] = zeta[:2] + rotation(phi) @ dp
    P = F @ hyp.P_tilde @ F.T
    if pdr_noise > 0:
        q = (pdr_noise * np.linalg.norm(dp)) ** 2
        P[0, 0] += q
        P[1, 1] += q
    return HypothesisState(zeta, P, list(hyp.innovations), hyp.window)


def mh_update(hyp, meas, t, joseph=True):
    r, H, keep = range_model(hyp.zeta[:2], meas.ap_positions)
    if not np.any(keep):
        out = HypothesisState(hyp.zeta.copy(), hyp.P_tilde.copy(), list(hyp.innovations), hyp.window)
        out.push_innovation(t, 0.0)
        return out, np.zeros(0)
    e = meas.d[keep] - r[keep]
    Ht = np.c_[H[keep], np.zeros(int(keep.sum()))]
    zeta, P = _kalman_update(hyp.zeta, hyp.P_tilde, Ht, e, np.diag(meas.s[keep] ** 2), joseph)
    out = HypothesisState(zeta, P, list(hyp.innovations), hyp.window)
    out.push_innovation(t, e @ e)
    return out, e


def mh_update_and_select(hypotheses, meas, t, accumulated=True, joseph=True):
    """Update every hypothesis; return (hypotheses, best index, innovations)."""
    updated, innovations = [], []
    for hyp in hypotheses:
        h, e = mh_update(hyp, meas, t, joseph)
        updated.append(h)
        innovations.append(e)
    if accumulated:
        score = [h.accumulated_innovation for h in updated]
    else:
        score = [float(e @ e) for e in innovations]
    return updated, int(np.argmin(score)), innovations


# -- estimators ----------------------------------------------------------------

@dataclass
class PositioningResult:
    times: np.ndarray
    positions: np.ndarray
    selected: np.ndarray
    innovation_norm: np.ndarray
    phi_ref: np.ndarray = None


class WifiPositioner(BaseEstimator):
    """2-state EKF over a sequence of epochs (Wi-Fi only).

    ``predict(times, measurements)`` takes epoch times and one
    :class:`EpochMeasurement` (or None for an epoch without ranging) per
    epoch; the filter starts at the centroid of the first available APs.
    """

    def __init__(self, s_x=10.0, s_y=10.0, v=1.0, joseph=True):
        self.s_x = s_x
        self.s_y = s_y
        self.v = v
        self.joseph = joseph

    def fit(self, X=None, y=None):
        return self

    def predict(self, times, measurements):
        times = np.asarray(times, dtype=float)
        state = None
        out, innov = [], []
        for t, dt, meas in zip(times, epoch_dts(times), measurements):
            if state is None:
                if meas is None:
                    out.append(np.full(2, np.nan))
                    innov.append(0.0)
                    continue
                state = ekf_init(meas.ap_positions, self.s_x, self.s_y)
            state = ekf_predict(state, self.v, dt)
            e = np.zeros(0)
            if meas is not None:
                state, e = ekf_update(state, meas, self.joseph)
            out.append(state.z_hat.copy())
            innov.append(float(np.linalg.norm(e)))
        n = len(times)
        return PositioningResult(times, np.array(out).reshape(n, 2), np.zeros(n, dtype=int),
                                 np.array(innov))


class FusedPositioner(BaseEstimator):
    """Wi-Fi ranging plus PDR increments with M reference-direction hypotheses.

    After ``warmup`` seconds only the currently best hypothesis is kept.
    """

    def __init__(self, n_hypotheses=90, s_x=10.0, s_y=10.0, s_phi=np.pi, window=10.0,
                 warmup=10.0, accumulated=True, pdr_noise=0.1, joseph=True):
        self.n_hypotheses = n_hypotheses
        self.s_x = s_x
        self.s_y = s_y
        self.s_phi = s_phi
        self.window = window
        self.warmup = warmup
        self.accumulated = accumulated
        self.pdr_noise = pdr_noise
        self.joseph = joseph

    def fit(self, X=None, y=None):
        return self

    def predict(self, times, measurements, pdr_positions, return_hypotheses=False):
        times = np.asarray(times, dtype=float)
        pdr_positions = np.asarray(pdr_positions, dtype=float).reshape(-1, 2)
        hyps, ids = None, None
        t_start = None
        out, sel, innov, phis = [], [], [], []
        trace = []
        for k, (t, meas) in enumerate(zip(times, measurements)):
            if hyps is None:
                if meas is None:
                    out.append(np.full(2, np.nan))
                    sel.append(-1)
                    innov.append(0.0)
                    phis.append(np.nan)
                    continue
                hyps = mh_init(meas.ap_positions, self.n_hypotheses, self.s_x, self.s_y,
                               self.s_phi, self.window)
                ids = np.arange(len(hyps))
                t_start = t
            else:
                dp = pdr_positions[k] - pdr_positions[k - 1]
                hyps = [mh_predict(h, dp, self.pdr_noise) for h in hyps]
            if meas is not None:
                hyps, best, es = mh_update_and_select(hyps, meas, t, self.accumulated, self.joseph)
                e_best = es[best]
            else:
                best = int(np.argmin([h.accumulated_innovation for h in hyps])) \
                    if self.accumulated else 0
                e_best = np.zeros(0)
            if return_hypotheses:
                trace.append((t, ids.copy(), [h.accumulated_innovation for h in hyps],
                              [h.phi_ref for h in hyps]))
            out.append(hyps[best].z_hat.copy())
            sel.append(int(ids[best]))
            innov.append(float(np.linalg.norm(e_best)))
            phis.append(hyps[best].phi_ref)
            if len(hyps) > 1 and t - t_start >= self.warmup:
                hyps, ids = [hyps[best]], ids[best:best + 1]
        n = len(times)
        res = PositioningResult(times, np.array(out).reshape(n, 2), np.array(sel),
                                np.array(innov), np.array(phis))
        return (res, trace) if return_hypotheses else res
