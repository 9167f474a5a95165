"""Multipath channel synthesis and beacon CSI frames for a legacy 20 MHz OFDM link."""

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 2.998e8  # m/s
SUBCARRIER_SPACING = 312.5e3  # Hz
SAMPLE_PERIOD = 1.0 / 20e6  # s
N_DFT = 64
SUBCARRIERS = np.r_[-26:0, 1:27]
N_SUBCARRIERS = SUBCARRIERS.size
SUBCARRIER_FREQS = SUBCARRIERS * SUBCARRIER_SPACING

QUANT_MIN, QUANT_MAX = -512, 511

LOS, NLOS = "LOS", "NLOS"


@dataclass
class MultipathProfile:
    """Channel impulse response as a sparse set of complex taps."""

    coefficients: np.ndarray
    delays: np.ndarray
    los_flag: bool = False

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=complex))
        d = np.atleast_1d(np.asarray(self.delays, dtype=float))
        if c.size == 0 or c.shape != d.shape:
            raise ValueError("profile needs at least one tap and one delay per tap")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
            raise ValueError("tap coefficients and delays must be finite")
        if np.any(d < 0):
            raise ValueError("tap delays must be non-negative")
        if np.any(np.diff(d) < 0):
            raise ValueError("taps must be sorted by ascending delay")
        self.coefficients = c
        self.delays = d
        self.los_flag = bool(self.los_flag)

    @classmethod
    def from_taps(cls, taps, los_flag=False):
        taps = list(taps)
        return cls([c for c, _ in taps], [t for _, t in taps], los_flag)

    @property
    def taps(self):
        return list(zip(self.coefficients, self.delays))

    @property
    def power(self):
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def __len__(self):
        return self.coefficients.size


@dataclass
class CsiFrame:
    """CSI of one beacon reception on one antenna.

    ``h`` is ordered by sub-carrier index -26..-1, 1..26.
    """

    ap_id: int
    antenna_id: int
    timestamp: float
    h: np.ndarray
    rss_dbm: float
    quantized: bool = field(default=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.shape != (N_SUBCARRIERS,):
            raise ValueError(f"CSI must have {N_SUBCARRIERS} sub-carriers, got {h.shape}")
        if not np.all(np.isfinite(h)) or not np.isfinite(self.rss_dbm):
            raise ValueError("CSI values and RSS must be finite")
        if self.antenna_id not in (0, 1):
            raise ValueError(f"antenna_id must be 0 or 1, got {self.antenna_id}")
        if self.quantized:
            parts = np.concatenate([h.real, h.imag])
            if np.any(parts != np.round(parts)) or parts.min() < QUANT_MIN or parts.max() > QUANT_MAX:
                raise ValueError("quantized CSI must fit signed 10-bit integers")
        self.h = h


def draw_taps(dist, los, rng, *, power=1.0, los_power_fraction=0.6, los_power_fraction_max=0.9,
              rms_delay_spread=50e-9, n_taps=20, tap_spacing=10e-9):
    """Vectorized tap draw for many links at once.

    ``dist`` and ``los`` are length-n arrays. Returns complex coefficients
    and delays, both of shape (n, n_taps). See :func:`synthesize_cir`.
    """
    dist = np.atleast_1d(np.asarray(dist, dtype=float))
    los = np.broadcast_to(np.asarray(los, dtype=bool), dist.shape)
    if n_taps < 1:
        raise ValueError("n_taps must be at least 1")
    if not 0.0 < los_power_fraction <= los_power_fraction_max < 1.0:
        raise ValueError("need 0 < los_power_fraction <= los_power_fraction_max < 1")
    n = dist.size
    tau0 = dist / SPEED_OF_LIGHT
    # NLOS rows use excess-delay slots 0..T-1; LOS rows put the direct path
    # in slot 0 and the diffuse tail in slots 1..T-1.
    slots = np.arange(n_taps) * tap_spacing
    mean_pow = np.exp(-slots / rms_delay_spread)
    g = (rng.standard_normal((n, n_taps)) + 1j * rng.standard_normal((n, n_taps))) \
        * np.sqrt(mean_pow / 2.0)
    direct_phase = np.exp(2j * np.pi * rng.random(n))
    frac = rng.uniform(los_power_fraction, los_power_fraction_max, n)
    if n_taps == 1:
        g[los, 0] = direct_phase[los]
    else:
        tail_pow = np.sum(np.abs(g[:, 1:]) ** 2, axis=1)
        g[los, 1:] *= np.sqrt((1.0 - frac[los]) / tail_pow[los])[:, None]
        g[los, 0] = np.sqrt(frac[los]) * direct_phase[los]
    nl = ~los
    g[nl] *= np.sqrt(1.0 / np.sum(np.abs(g[nl]) ** 2, axis=1))[:, None]
    coeffs = g * np.sqrt(power)
    delays = tau0[:, None] + slots[None, :]
    return coeffs, delays


def synthesize_cir(ap_pos, dev_pos, scenario, rng, *, power=1.0, los_power_fraction=0.6,
                   los_power_fraction_max=0.9, rms_delay_spread=50e-9, n_taps=20,
                   tap_spacing=10e-9):
    """Draw a multipath profile between an AP and the device.

    NLOS: ``n_taps`` Rayleigh taps on an exponential power-delay profile.
    LOS: a direct tap carrying a fraction of ``power`` drawn uniformly from
    [``los_power_fraction``, ``los_power_fraction_max``] plus the same
    diffuse tail scaled to the remainder.
    The realized taps are normalized so their powers sum to ``power``.
    The first tap arrives at distance / c.
    """
    dist = float(np.linalg.norm(np.asarray(ap_pos, float) - np.asarray(dev_pos, float)))
    if dist == 0.0:
        raise ValueError("AP and device positions coincide; distance is zero")
    if scenario not in (LOS, NLOS):
        raise ValueError(f"scenario must be {LOS!r} or {NLOS!r}, got {scenario!r}")
    c, d = draw_taps([dist], [scenario == LOS], rng, power=power,
                     los_power_fraction=los_power_fraction,
                     los_power_fraction_max=los_power_fraction_max,
                     rms_delay_spread=rms_delay_spread,
                     n_taps=n_taps, tap_spacing=tap_spacing)
    return MultipathProfile(c[0], d[0], los_flag=scenario == LOS)


def _add_noise(h, noise_power, rng):
    noise_power = np.broadcast_to(np.asarray(noise_power, dtype=float), (h.shape[0],))
    if np.any(noise_power < 0):
        raise ValueError("noise_power must be non-negative")
    if np.any(noise_power > 0):
        w = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        h = h + w * np.sqrt(noise_power / 2.0)[:, None]
    return h


def csi_batch(coeffs, delays, noise_power, rng):
    """Noisy sub-carrier responses for (n, T) tap arrays; returns (n, 52)."""
    phase = np.exp(-2j * np.pi * delays[:, None, :] * SUBCARRIER_FREQS[None, :, None])
    return _add_noise(np.einsum("nkt,nt->nk", phase, coeffs), noise_power, rng)


def csi_on_grid(coeffs, first_delay, excess, noise_power, rng):
    """As :func:`csi_batch` for taps at ``first_delay[i] + excess[t]``."""
    grid = np.exp(-2j * np.pi * np.outer(SUBCARRIER_FREQS, excess))
    ramp = np.exp(-2j * np.pi * np.outer(first_delay, SUBCARRIER_FREQS))
    return _add_noise(ramp * (coeffs @ grid.T), noise_power, rng)


def rss_from_csi(h, power_ref_dbm=0.0):
    mean_pow = np.mean(np.abs(h) ** 2, axis=-1)
    return power_ref_dbm + 10.0 * np.log10(np.maximum(mean_pow, 1e-30))


def frequency_response(profile):
    """Noiseless response of ``profile`` on the 52 used sub-carriers."""
    phase = np.exp(-2j * np.pi * np.outer(SUBCARRIER_FREQS, profile.delays))
    return phase @ profile.coefficients


def quantize_csi(h):
    """Scale each row to the full 10-bit range (AGC-like) and round real/imag parts."""
    h = np.asarray(h, dtype=complex)
    peak = np.maximum(np.abs(h.real).max(axis=-1, keepdims=True),
                      np.abs(h.imag).max(axis=-1, keepdims=True))
    scale = np.divide(QUANT_MAX, peak, out=np.zeros_like(peak), where=peak > 0)
    re = np.clip(np.round(h.real * scale), QUANT_MIN, QUANT_MAX)
    im = np.clip(np.round(h.imag * scale), QUANT_MIN, QUANT_MAX)
    return re + 1j * im


def cir_to_csi(profile, noise_power, rng, *, power_ref_dbm=0.0, quantize=False,
               ap_id=0, antenna_id=0, timestamp=0.0):
    """Sample ``profile`` on the sub-carrier grid and add complex Gaussian noise.

    RSS is the mean sub-carrier power in dB on top of ``power_ref_dbm``,
    computed before quantization.
    """
    if noise_power < 0:
        raise ValueError(f"noise_power must be non-negative, got {noise_power}")
    h = csi_batch(profile.coefficients[None], profile.delays[None], noise_power, rng)[0]
    rss = float(rss_from_csi(h, power_ref_dbm))
    if quantize:
        h = quantize_csi(h)
    return CsiFrame(ap_id, antenna_id, float(timestamp), h, rss, quantized=quantize)


def coherence_profile(h, max_lag=None):
    """Normalized magnitude of the frequency autocorrelation of ``h``."""
    h = np.asarray(h, dtype=complex)
    n = h.size
    max_lag = n - 1 if max_lag is None else max_lag
    r0 = np.vdot(h, h).real
    return np.array([abs(np.vdot(h[:n - lag], h[lag:])) / r0 * n / (n - lag)
                     for lag in range(max_lag + 1)])
