"""Pedestrian dead reckoning: step detection, step length and trajectory integration."""

from dataclasses import dataclass

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator, TransformerMixin

DEFAULT_ALPHA = 0.55


@dataclass(frozen=True)
class StepEvent:
    time: float
    length: float
    peak_accel: float
    valley_accel: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("step length must be positive")
        if not self.peak_accel > self.valley_accel:
            raise ValueError("peak acceleration must exceed valley acceleration")


@dataclass
class PdrTrajectory:
    """Piecewise-constant positions: ``positions[i]`` holds from ``times[i]`` on."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(self.times) != len(self.positions):
            raise ValueError("one time per position required")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("PDR positions must be finite")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("PDR times must be non-decreasing")

    def __len__(self):
        return len(self.times)

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])


def step_length(peak, valley, alpha=DEFAULT_ALPHA):
    """Fourth-root step length model."""
    return alpha * (peak - valley) ** 0.25


def heading_vector(phi):
    """Unit moving direction for heading ``phi``; 0 points north (+y)."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([-np.sin(phi), np.cos(phi)], axis=-1)


def lowpass_z(accel_z, rate_hz, cutoff_hz=3.0, order=2):
    """Zero-phase Butterworth low-pass of a uniformly sampled stream."""
    nyq = 0.5 * rate_hz
    if not 0 < cutoff_hz < nyq:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={nyq} Hz)")
    x = np.asarray(accel_z, dtype=float)
    b, a = signal.butter(order, cutoff_hz, fs=rate_hz)
    padlen = min(3 * max(len(a), len(b)), x.size - 1)
    if x.size < 2:
        return x.copy()
    return signal.filtfilt(b, a, x, padlen=padlen)


def detect_steps(filtered, times, alpha=DEFAULT_ALPHA, min_prominence=0.5, min_spacing=0.3):
    """Pair each prominent peak with the next valley before the following peak.

    The step is stamped at the valley time.
    """
    x = np.asarray(filtered, dtype=float)
    t = np.asarray(times, dtype=float)
    if x.size < 3:
        return []
    rate = 1.0 / float(np.median(np.diff(t)))
    dist = max(1, int(round(min_spacing * rate)))
    peaks, _ = signal.find_peaks(x, prominence=min_prominence, distance=dist)
    valleys, _ = signal.find_peaks(-x, prominence=min_prominence, distance=dist)
    steps = []
    vi = 0
    for i, p in enumerate(peaks):
        nxt = peaks[i + 1] if i + 1 < len(peaks) else x.size
        while vi < len(valleys) and valleys[vi] <= p:
            vi += 1
        if vi >= len(valleys):
            break
        v = valleys[vi]
        if v >= nxt:
            continue
        steps.append(StepEvent(float(t[v]), float(step_length(x[p], x[v], alpha)),
                               float(x[p]), float(x[v])))
    return steps


def integrate(steps, heading_times, headings, start=(0.0, 0.0), t0=None):
    """Dead-reckon positions from step events and a heading stream.

    Each step moves along the mean (unwrapped) heading over the step
    interval, from the previous step time to this one; the first step
    uses a window of one median step period. Returns a trajectory whose
    first sample is ``start`` at ``t0`` (default: first heading time).
    """
    ht = np.asarray(heading_times, dtype=float)
    hv = np.unwrap(np.asarray(headings, dtype=float))
    t0 = float(ht[0]) if t0 is None else float(t0)
    st = np.array([s.time for s in steps], dtype=float)
    if np.any((st < ht[0]) | (st > ht[-1])):
        bad = st[(st < ht[0]) | (st > ht[-1])][0]
        raise ValueError(f"no heading available at step time {bad:.3f} s")
    period = float(np.median(np.diff(st))) if st.size > 1 else 0.0
    lo = np.r_[st[0] - period if st.size else 0.0, st[:-1]]
    times = [t0]
    pos = [np.asarray(start, dtype=float)]
    for s, a, b in zip(steps, lo, st):
        sel = (ht > a) & (ht <= b)
        phi = hv[sel].mean() if np.any(sel) else np.interp(b, ht, hv)
        pos.append(pos[-1] + s.length * heading_vector(phi))
        times.append(s.time)
    return PdrTrajectory(np.array(times), np.array(pos))


def synchronize(traj, epoch_times):
    """Sample-and-hold the trajectory at each epoch time.

    A step stamped exactly at an epoch time is already applied.
    """
    tk = np.asarray(epoch_times, dtype=float)
    lo, hi = traj.span
    if np.any(tk < lo) or np.any(tk > hi):
        bad = tk[(tk < lo) | (tk > hi)][0]
        raise ValueError(f"epoch time {bad:.3f} s outside trajectory span [{lo:.3f}, {hi:.3f}]")
    idx = np.searchsorted(traj.times, tk, side="right") - 1
    return traj.positions[idx]


class PedestrianDeadReckoning(TransformerMixin, BaseEstimator):
    """IMU stream to PDR trajectory.

    ``transform`` takes an object with ``times``, ``accel_z`` and ``heading``
    arrays (e.g. :class:`beaconfi.simulate.ImuStream`). Nothing is learned;
    ``fit`` only validates parameters.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, cutoff_hz=3.0, order=2, min_prominence=0.5,
                 min_spacing=0.3):
        self.alpha = alpha
        self.cutoff_hz = cutoff_hz
        self.order = order
        self.min_prominence = min_prominence
        self.min_spacing = min_spacing

    def fit(self, imu=None, y=None):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        return self

    def steps(self, imu):
        rate = 1.0 / float(np.median(np.diff(imu.times)))
        filt = lowpass_z(imu.accel_z, rate, self.cutoff_hz, self.order)
        return detect_steps(filt, imu.times, self.alpha, self.min_prominence, self.min_spacing)

    def transform(self, imu):
        traj = integrate(self.steps(imu), imu.times, imu.heading)
        # extend the hold to the end of the IMU record
        return PdrTrajectory(np.r_[traj.times, imu.times[-1]],
                             np.vstack([traj.positions, traj.positions[-1]]))
