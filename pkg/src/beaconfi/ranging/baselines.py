"""Model-based ranging backends: path loss, quadratic polynomial and CUPID."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .inputs import RangingInput, infer_beacons, split_features

D_MIN, D_MAX = 0.1, 100.0
S_MIN, S_MAX = 0.1, 10.0


@dataclass
class RangingOutput:
    d_hat: np.ndarray
    s_hat: np.ndarray

    def __post_init__(self):
        self.d_hat = np.asarray(self.d_hat, dtype=float)
        self.s_hat = np.asarray(self.s_hat, dtype=float)

    def check(self, d_max=D_MAX, s_max=S_MAX):
        if not (np.all(self.d_hat > 0) and np.all(self.d_hat < d_max)
                and np.all(self.s_hat > 0) and np.all(self.s_hat < s_max)):
            raise ValueError("ranging output outside its bounds")
        return self


@dataclass
class PathLossParams:
    rss_d0: float = -25.8
    eta: float = 3.9
    d0: float = 1.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("path-loss exponent must be positive")


@dataclass
class PolynomialParams:
    g2: float = 0.0138
    g1: float = 1.1642
    g0: float = 27.7688


@dataclass
class StdModel:
    slope: float
    intercept: float

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError("std model slope must be non-negative")

    def __call__(self, d):
        return self.slope * np.asarray(d, dtype=float) + self.intercept


@dataclass
class CupidParams:
    # Synthetic defaults; fit them on labeled data before use.
    rss_d0: float = -25.8
    eta_los: float = 3.0
    eta_nlos: float = 4.2
    edp_ratio_threshold: float = 0.15

    def __post_init__(self):
        if not (self.eta_los > 0 and self.eta_nlos > 0):
            raise ValueError("path-loss exponents must be positive")


def _default_std():
    return {
        "pathloss": StdModel(0.1897, 0.3672),
        "polynomial": StdModel(0.1622, 0.6156),
        "cupid": StdModel(0.1897, 0.3672),
    }


@dataclass
class CalibrationParams:
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    polynomial: PolynomialParams = field(default_factory=PolynomialParams)
    cupid: CupidParams = field(default_factory=CupidParams)
    std: dict = field(default_factory=_default_std)

    def to_flat(self):
        """Flat ``section.key -> float`` mapping, in a fixed order."""
        out = {}
        for sec in ("pathloss", "polynomial", "cupid"):
            for k, v in asdict(getattr(self, sec)).items():
                out[f"{sec}.{k}"] = float(v)
        for name in sorted(self.std):
            out[f"std.{name}.slope"] = float(self.std[name].slope)
            out[f"std.{name}.intercept"] = float(self.std[name].intercept)
        return out

    @classmethod
    def from_flat(cls, flat):
        groups = {}
        for key, v in flat.items():
            sec, _, rest = key.partition(".")
            groups.setdefault(sec, {})[rest] = float(v)
        std = {}
        for key, v in groups.pop("std", {}).items():
            name, _, attr = key.rpartition(".")
            std.setdefault(name, {})[attr] = v
        return cls(PathLossParams(**groups.get("pathloss", {})),
                   PolynomialParams(**groups.get("polynomial", {})),
                   CupidParams(**groups.get("cupid", {})),
                   {k: StdModel(**v) for k, v in std.items()} or _default_std())


def clamp_output(d, s, d_max=D_MAX, s_max=S_MAX):
    """Clip into [0.1, d_max) and [0.1, s_max) so the EKF sees positive variances."""
    d = np.clip(d, D_MIN, np.nextafter(d_max, 0.0))
    s = np.clip(s, S_MIN, np.nextafter(s_max, 0.0))
    return RangingOutput(d, s)


def _unpack(x, n_beacons=None):
    """(csi, rss) arrays with a leading batch axis from an input, list or feature matrix."""
    if isinstance(x, RangingInput):
        return x.csi_image[None], x.rss_vectors[None]
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], RangingInput):
        return np.stack([i.csi_image for i in x]), np.stack([i.rss_vectors for i in x])
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if n_beacons is None:
        n_beacons = infer_beacons(X)
    return split_features(X, n_beacons)


def mean_rss(x):
    _, rss = _unpack(x)
    return rss.reshape(rss.shape[0], -1).mean(axis=1)


def pathloss_distance(rss, params):
    """Unclamped path-loss inversion."""
    return params.d0 * 10.0 ** ((params.rss_d0 - np.asarray(rss, dtype=float)) / (10.0 * params.eta))


def polynomial_distance(rss, params):
    r = np.asarray(rss, dtype=float)
    return params.g2 * r * r + params.g1 * r + params.g0


def edp_ratio(csi):
    """Energy of the first impulse-response tap over total energy, averaged over rows.

    Tap 0 of the inverse DFT over the used sub-carriers is mean(H), and by
    Parseval the total is mean|H|^2. Complex CSI is used as is; real input
    is taken as amplitudes with zero phase. Flat CSI gives 1.
    """
    a = np.asarray(csi)
    if not np.iscomplexobj(a):
        a = a.astype(float)
    num = np.abs(a.mean(axis=-1)) ** 2
    den = np.maximum((np.abs(a) ** 2).mean(axis=-1), 1e-300)
    r = num / den
    return r.reshape(r.shape[0], -1).mean(axis=1) if r.ndim > 1 else r


def pathloss_range(x, cal=None, csi=None):
    cal = cal or CalibrationParams()
    d = pathloss_distance(mean_rss(x), cal.pathloss)
    return clamp_output(d, cal.std["pathloss"](d))


def polynomial_range(x, cal=None, csi=None):
    cal = cal or CalibrationParams()
    d = polynomial_distance(mean_rss(x), cal.polynomial)
    return clamp_output(d, cal.std["polynomial"](d))


def cupid_is_los(x, cal=None, csi=None):
    """LOS decision per row; ``csi`` may supply complex CSI matching ``x`` row for row."""
    cal = cal or CalibrationParams()
    if csi is None:
        csi, _ = _unpack(x)
    return edp_ratio(csi) >= cal.cupid.edp_ratio_threshold


def cupid_range(x, cal=None, csi=None):
    cal = cal or CalibrationParams()
    c = cal.cupid
    los = cupid_is_los(x, cal, csi)
    eta = np.where(los, c.eta_los, c.eta_nlos)
    d = 10.0 ** ((c.rss_d0 - mean_rss(x)) / (10.0 * eta))
    return clamp_output(d, cal.std["cupid"](d))


BACKENDS = {
    "pathloss": pathloss_range,
    "polynomial": polynomial_range,
    "cupid": cupid_range,
}
