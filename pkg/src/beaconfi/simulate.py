"""Virtual indoor site: AP layout, device walks, IMU streams and beacon receptions."""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .channel import N_SUBCARRIERS, CsiFrame, csi_on_grid, draw_taps, quantize_csi, rss_from_csi

GRAVITY = 9.80665


@dataclass
class SiteConfig:
    """AP layout, scan schedule and synthetic radio parameters.

    Radio defaults are synthetic; nothing here is calibrated to a real site.
    ``tx_power_dbm`` is the received power at 1 m in LOS; when omitted it is
    ``rss_d0_dbm`` plus a per-AP offset drawn uniformly within
    ``+-tx_spread_db`` from ``rng_seed``.
    """

    ap_positions: np.ndarray
    channel_assignment: np.ndarray = None
    beacon_interval: float = 0.1
    dwell_per_channel: float = 0.3
    rng_seed: int = 0
    ssids_per_ap: int = 2
    walls: np.ndarray = None
    tx_power_dbm: np.ndarray = None
    rss_d0_dbm: float = -30.0
    tx_spread_db: float = 4.0
    pathloss_exponent: float = 3.0
    wall_loss_db: float = 6.0
    shadowing_db: float = 2.0
    noise_floor_dbm: float = -95.0
    sensitivity_dbm: float = -88.0
    beacon_loss_prob: float = 0.02
    los_power_fraction: float = 0.6
    los_power_fraction_max: float = 0.9
    rms_delay_spread: float = 50e-9
    n_taps: int = 20
    tap_spacing: float = 10e-9
    quantize: bool = False

    def __post_init__(self):
        ap = np.atleast_2d(np.asarray(self.ap_positions, dtype=float))
        if ap.size == 0 or ap.shape[1] != 2:
            raise ValueError("ap_positions must be a non-empty list of 2D points")
        if not np.all(np.isfinite(ap)):
            raise ValueError("AP coordinates must be finite")
        if not self.beacon_interval > 0:
            raise ValueError("beacon_interval must be positive")
        if not self.dwell_per_channel > 0:
            raise ValueError("dwell_per_channel must be positive")
        self.ap_positions = ap
        n = len(ap)
        if self.channel_assignment is None:
            self.channel_assignment = np.array([(1, 6, 11)[i % 3] for i in range(n)])
        self.channel_assignment = np.asarray(self.channel_assignment, dtype=int)
        if self.channel_assignment.shape != (n,):
            raise ValueError("need one channel per AP")
        self.walls = (np.zeros((0, 4)) if self.walls is None
                      else np.atleast_2d(np.asarray(self.walls, dtype=float)).reshape(-1, 4))
        if self.tx_power_dbm is None:
            rng = np.random.default_rng([self.rng_seed, 7])
            self.tx_power_dbm = self.rss_d0_dbm + rng.uniform(-self.tx_spread_db, self.tx_spread_db, n)
        self.tx_power_dbm = np.asarray(self.tx_power_dbm, dtype=float)
        if self.tx_power_dbm.shape != (n,):
            raise ValueError("need one transmit power per AP")

    @property
    def n_aps(self):
        return len(self.ap_positions)

    @property
    def scan_channels(self):
        return np.unique(self.channel_assignment)

    @property
    def epoch_period(self):
        return self.dwell_per_channel * len(self.scan_channels)

    @property
    def beacons_per_ssid(self):
        return int(np.floor(self.dwell_per_channel / self.beacon_interval + 1e-9))

    def bounds(self, margin=0.0):
        lo = self.ap_positions.min(axis=0) - margin
        hi = self.ap_positions.max(axis=0) + margin
        return lo, hi

    def walls_crossed(self, a, b):
        """Number of wall segments intersecting the segment a-b."""
        return int(walls_crossed(self.walls, a, b)[0])


def default_site(rng_seed=0, **overrides):
    """40 m x 20 m office floor, 12 APs on a grid, three interior walls."""
    xs, ys = np.meshgrid([2.0, 14.0, 26.0, 38.0], [2.0, 10.0, 18.0])
    aps = np.c_[xs.ravel(), ys.ravel()]
    walls = np.array([
        [8.0, 0.0, 8.0, 13.0],
        [20.0, 7.0, 20.0, 20.0],
        [32.0, 0.0, 32.0, 13.0],
    ])
    kw = dict(ap_positions=aps, walls=walls, rng_seed=rng_seed)
    kw.update(overrides)
    return SiteConfig(**kw)


def grid_site(n_aps, width, height, rng_seed=0, **overrides):
    """Roughly square grid of ``n_aps`` APs over a width x height floor."""
    cols = int(np.ceil(np.sqrt(n_aps * width / height)))
    rows = int(np.ceil(n_aps / cols))
    xs = (np.arange(cols) + 0.5) * width / cols
    ys = (np.arange(rows) + 0.5) * height / rows
    gx, gy = np.meshgrid(xs, ys)
    aps = np.c_[gx.ravel(), gy.ravel()][:n_aps]
    return SiteConfig(ap_positions=aps, rng_seed=rng_seed, **overrides)


@dataclass
class ImuConfig:
    """IMU synthesis parameters.

    The vertical waveform amplitude is set so that the step-length model
    applied to the low-pass output reproduces ``step_length``; the filter
    gain at the step frequency is pre-compensated.
    """

    rate_hz: float = 100.0
    step_length: float = 0.7
    alpha: float = 0.55
    lpf_cutoff_hz: float = 3.0
    lpf_order: int = 2
    accel_noise_std: float = 0.0
    heading_noise_std: float = 0.0
    still_time: float = 1.0

    @classmethod
    def noisy(cls, **kw):
        """Default noise: 0.2 m/s^2 accelerometer, 0.03 rad heading."""
        kw.setdefault("accel_noise_std", 0.2)
        kw.setdefault("heading_noise_std", 0.03)
        return cls(**kw)


@dataclass
class WalkTruth:
    times: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    reference_offset: float
    step_times: np.ndarray
    step_lengths: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("truth positions must be finite")
        if len(self.headings) != len(self.times):
            raise ValueError("one heading per tick required")

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, 0]),
                         np.interp(t, self.times, self.positions[:, 1])], axis=-1)

    @property
    def walked_distance(self):
        return float(np.sum(self.step_lengths))


@dataclass
class ImuStream:
    """Vertical GCS-frame acceleration and heading relative to an unknown reference."""

    times: np.ndarray
    accel_z: np.ndarray
    heading: np.ndarray

    @property
    def rate_hz(self):
        return 1.0 / float(np.median(np.diff(self.times)))


@dataclass
class BeaconLog:
    """Column store of beacon receptions, one row per (beacon, antenna).

    ``truth_xy``/``los`` carry the device ground truth at reception time and
    are not available to estimators.
    """

    ap_id: np.ndarray
    antenna: np.ndarray
    timestamp: np.ndarray
    epoch: np.ndarray
    rss_dbm: np.ndarray
    csi: np.ndarray
    truth_xy: np.ndarray
    los: np.ndarray
    epoch_times: np.ndarray
    ap_positions: np.ndarray

    def __len__(self):
        return len(self.ap_id)

    def frames(self):
        for i in range(len(self)):
            yield CsiFrame(int(self.ap_id[i]), int(self.antenna[i]), float(self.timestamp[i]),
                           self.csi[i], float(self.rss_dbm[i]))

    def select(self, mask):
        return BeaconLog(self.ap_id[mask], self.antenna[mask], self.timestamp[mask],
                         self.epoch[mask], self.rss_dbm[mask], self.csi[mask],
                         self.truth_xy[mask], self.los[mask], self.epoch_times, self.ap_positions)


@dataclass
class Walk:
    truth: WalkTruth
    imu: ImuStream
    beacons: BeaconLog


def lpf_gain(freq_hz, cutoff_hz, rate_hz, order=2):
    """Amplitude gain of a forward-backward Butterworth at ``freq_hz``."""
    b, a = signal.butter(order, cutoff_hz, fs=rate_hz)
    _, h = signal.freqz(b, a, worN=[freq_hz], fs=rate_hz)
    return float(np.abs(h[0]) ** 2)


def _polyline(waypoints):
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 2:
        raise ValueError("need at least two 2D waypoints")
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 0
    if not np.any(keep):
        raise ValueError("waypoint polyline has zero length")
    wp = np.vstack([wp[0], wp[1:][keep]])
    seg, seg_len = seg[keep], seg_len[keep]
    return wp, seg, seg_len, np.r_[0.0, np.cumsum(seg_len)]


def snap_to_steps(waypoints, step_length):
    """Shorten or stretch each leg to a whole number of steps, keeping its direction.

    Turns then fall between steps, as they do for a walking person. A
    single straight leg has no turn and is returned unchanged.
    """
    wp, seg, seg_len, _ = _polyline(waypoints)
    if len(seg) == 1:
        return wp
    n = np.maximum(np.round(seg_len / step_length), 1.0)
    legs = seg / seg_len[:, None] * (n * step_length)[:, None]
    return np.vstack([wp[0], wp[0] + np.cumsum(legs, axis=0)])


def _along(s, wp, seg, seg_len, cum):
    s = np.clip(s, 0.0, cum[-1])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[i]) / seg_len[i]
    pos = wp[i] + frac[:, None] * seg[i]
    heading = np.arctan2(-seg[i, 0], seg[i, 1])
    return pos, heading


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def generate_walk(site, waypoints, speed, imu_noise=None, rng=None, *, reference_offset=None,
                  start_time=0.0):
    """Simulate a constant-speed walk along ``waypoints``.

    Returns a :class:`Walk` with ground truth, a 100 Hz IMU stream (vertical
    acceleration and offset heading) and every beacon reception during the
    channel-scan schedule. The device position is frozen per beacon at the
    beacon timestamp. Scan epochs end at multiples of ``site.epoch_period``.
    Legs are first snapped to whole steps of ``imu_noise.step_length``.
    """
    if not speed > 0:
        raise ValueError("speed must be positive")
    imu_cfg = imu_noise if imu_noise is not None else ImuConfig()
    rng = np.random.default_rng(site.rng_seed) if rng is None else rng
    wp, seg, seg_len, cum = _polyline(snap_to_steps(waypoints, imu_cfg.step_length))
    length = cum[-1]
    if reference_offset is None:
        reference_offset = float(rng.uniform(0.0, 2.0 * np.pi))

    # -- truth and IMU
    dt = 1.0 / imu_cfg.rate_hz
    walk_time = length / speed
    t0 = start_time + imu_cfg.still_time
    total = walk_time + 2.0 * imu_cfg.still_time
    times = start_time + np.arange(int(np.floor(total / dt)) + 1) * dt
    s = speed * (times - t0)
    pos, heading = _along(s, wp, seg, seg_len, cum)

    n_steps = int(round(length / imu_cfg.step_length))
    step_len = length / n_steps
    period = step_len / speed
    gain = lpf_gain(1.0 / period, imu_cfg.lpf_cutoff_hz, imu_cfg.rate_hz, imu_cfg.lpf_order)
    amp = 0.5 * (step_len / imu_cfg.alpha) ** 4 / gain
    tw = times - t0
    t_end = n_steps * period
    walking = (tw >= 0) & (tw <= t_end)
    # one cosine period per step: peak mid-step, valley when the step completes;
    # half-period ramps lead into the first valley and out of the last one
    ramp = np.clip(np.maximum(-tw, tw - t_end) / (0.5 * period), 0.0, 1.0)
    wave = np.where(walking, -np.cos(2 * np.pi * tw / period),
                    -0.5 * (1.0 + np.cos(np.pi * ramp)))
    accel = GRAVITY + amp * wave
    if imu_cfg.accel_noise_std > 0:
        accel = accel + rng.normal(0.0, imu_cfg.accel_noise_std, accel.shape)
    meas_heading = heading - reference_offset
    if imu_cfg.heading_noise_std > 0:
        meas_heading = meas_heading + rng.normal(0.0, imu_cfg.heading_noise_std, heading.shape)
    step_times = t0 + (np.arange(n_steps) + 1.0) * period
    truth = WalkTruth(times, pos, heading, float(reference_offset), step_times,
                      np.full(n_steps, step_len))
    imu = ImuStream(times, accel, wrap_angle(meas_heading))

    beacons = _simulate_beacons(site, truth, rng, start_time, times[-1])
    return Walk(truth, imu, beacons)


def _beacon_schedule(site, rng, t_start, n_epochs):
    """Times and AP ids of every beacon broadcast inside the matching channel dwell."""
    period = site.epoch_period
    channels = list(site.scan_channels)
    slot_of_ap = np.array([channels.index(c) for c in site.channel_assignment])
    phases = rng.uniform(0.0, site.beacon_interval, (site.n_aps, site.ssids_per_ap))
    n_tx = int(np.ceil(n_epochs * period / site.beacon_interval)) + 1
    rel = phases[:, :, None] + np.arange(n_tx)[None, None, :] * site.beacon_interval
    ap = np.broadcast_to(np.arange(site.n_aps)[:, None, None], rel.shape)
    rel, ap = rel.ravel(), ap.ravel()
    epoch = np.floor(rel / period + 1e-12).astype(int)
    slot = np.floor((rel - epoch * period) / site.dwell_per_channel + 1e-12).astype(int)
    keep = (epoch < n_epochs) & (slot == slot_of_ap[ap])
    rel, ap, epoch = rel[keep], ap[keep], epoch[keep]
    order = np.lexsort((ap, rel))
    return t_start + rel[order], ap[order], epoch[order]


def _simulate_beacons(site, truth, rng, t_start, t_end, chunk=2048):
    period = site.epoch_period
    n_epochs = int(np.floor((t_end - t_start) / period + 1e-9))
    times, ap, epoch = _beacon_schedule(site, rng, t_start, n_epochs)
    shadow = rng.normal(0.0, site.shadowing_db, (n_epochs, site.n_aps))

    dev = truth.position_at(times).reshape(-1, 2)
    ap_pos = site.ap_positions[ap]
    dist = np.linalg.norm(dev - ap_pos, axis=1)
    # directly under an AP: nudge so the channel model stays defined
    close = dist < 0.1
    dev[close] = ap_pos[close] + np.array([0.1, 0.0])
    dist = np.maximum(dist, 0.1)
    walls = walls_crossed(site.walls, ap_pos, dev)
    p_large = (site.tx_power_dbm[ap] - 10.0 * site.pathloss_exponent * np.log10(dist)
               - site.wall_loss_db * walls + shadow[epoch, ap])
    lost = rng.random(times.size) < site.beacon_loss_prob
    ok = (p_large >= site.sensitivity_dbm) & ~lost
    times, ap, epoch, dev, dist, walls, p_large = (
        x[ok] for x in (times, ap, epoch, dev, dist, walls, p_large))

    # two antennas per reception, independent small-scale draws
    rep = np.repeat(np.arange(times.size), 2)
    antenna = np.tile([0, 1], times.size)
    los = walls[rep] == 0
    noise = 10.0 ** ((site.noise_floor_dbm - p_large[rep]) / 10.0)
    csi = np.empty((rep.size, N_SUBCARRIERS), dtype=complex)
    rss = np.empty(rep.size)
    for i0 in range(0, rep.size, chunk):
        sl = slice(i0, i0 + chunk)
        coeffs, delays = draw_taps(dist[rep[sl]], los[sl], rng,
                                   los_power_fraction=site.los_power_fraction,
                                   los_power_fraction_max=site.los_power_fraction_max,
                                   rms_delay_spread=site.rms_delay_spread,
                                   n_taps=site.n_taps, tap_spacing=site.tap_spacing)
        h = csi_on_grid(coeffs, delays[:, 0], delays[0] - delays[0, 0], noise[sl], rng)
        rss[sl] = rss_from_csi(h, p_large[rep[sl]])
        csi[sl] = quantize_csi(h) if site.quantize else h
    epoch_times = t_start + (np.arange(n_epochs) + 1) * period
    return BeaconLog(ap[rep], antenna, times[rep], epoch[rep], rss, csi, dev[rep], los,
                     epoch_times, site.ap_positions.copy())


def walls_crossed(walls, a, b):
    """Per-row count of wall segments crossing the segment a[i]-b[i]."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if len(walls) == 0:
        return np.zeros(len(a), dtype=int)
    r = (b - a)[:, None, :]
    q, s = walls[None, :, :2], (walls[:, 2:] - walls[:, :2])[None]
    denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
    qp = q - a[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
        u = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
    hit = (denom != 0) & (t > 0) & (t < 1) & (u >= 0) & (u <= 1)
    return hit.sum(axis=1)


# -- path helpers -------------------------------------------------------------

def random_waypoints(site, n, rng, margin=1.0):
    """Uniform random waypoints inside the AP bounding box shrunk by ``margin``."""
    lo, hi = site.bounds(-margin)
    return rng.uniform(lo, hi, (n, 2))


def random_walk_waypoints(site, length, rng, margin=1.0, max_leg=12.0, min_leg=3.0):
    """Waypoints of a random piecewise-linear walk of at least ``length`` meters."""
    lo, hi = site.bounds(-margin)
    pts = [rng.uniform(lo, hi)]
    total = 0.0
    while total < length:
        for _ in range(100):
            cand = rng.uniform(lo, hi)
            leg = np.linalg.norm(cand - pts[-1])
            if min_leg <= leg <= max_leg:
                break
        pts.append(cand)
        total += leg
    return np.array(pts)


def lawnmower_waypoints(site, spacing=4.0, margin=1.0):
    """Serpentine calibration path covering the AP bounding box."""
    lo, hi = site.bounds(-margin)
    ys = np.arange(lo[1], hi[1] + 1e-9, spacing)
    pts = []
    for i, y in enumerate(ys):
        xs = (lo[0], hi[0]) if i % 2 == 0 else (hi[0], lo[0])
        pts.extend([(xs[0], y), (xs[1], y)])
    return np.array(pts)


def loop_waypoints(site, margin=4.0):
    """Closed rectangular test path inset from the AP bounding box."""
    lo, hi = site.bounds(-margin)
    return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]], [lo[0], lo[1]]])
