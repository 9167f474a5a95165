"""CNN and FC rangers on the autodiff tape.

The CNN reads a (2, B, 52) CSI amplitude image: a B x 4 convolution
collapses the beacon rows, three 1 x 4 convolutions follow, with a 1 x 2
max-pool after the second and fourth. The flattened map is concatenated
with the 2B offset-adjusted RSS values and passed through fully connected
layers to two sigmoid heads, d = d_max * sigmoid(.) and s = s_max * sigmoid(.).
The FC variant uses the RSS values only.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..autodiff import ops
from ..autodiff.optim import ParamSet
from ..autodiff.tensor import Tensor
from ..channel import N_SUBCARRIERS
from .baselines import RangingOutput, _unpack
from .inputs import ApOffsetTable

ARCHS = ("cnn", "fc")


@dataclass(frozen=True)
class Topology:
    arch: str = "cnn"
    n_beacons: int = 4
    n_filters: int = 64
    kernel_width: int = 4
    hidden: tuple = (256, 256, 256)
    n_aps: int = 0
    d_max: float = 100.0
    s_max: float = 10.0
    padding: str = "valid"
    # fixed input scaling: CSI rows divided by their RMS, RSS mapped by (rss - center) / scale
    rss_center: float = -60.0
    rss_scale: float = 20.0
    # head biases start at logit(d_init / d_max) and logit(s_init / s_max); None gives 0
    d_init: float = 10.0
    s_init: float = 3.0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.padding != "valid":
            raise ValueError("only 'valid' padding is implemented")
        if self.n_beacons < 1 or self.n_filters < 1 or not self.hidden:
            raise ValueError("need n_beacons >= 1, n_filters >= 1 and at least one hidden layer")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for v, hi in ((self.d_init, self.d_max), (self.s_init, self.s_max)):
            if v is not None and not 0 < v < hi:
                raise ValueError("initial outputs must lie strictly inside the output bounds")
        if self.arch == "cnn" and self.conv_out_width() < 1:
            raise ValueError("kernel too wide for the 52-sub-carrier input")

    @classmethod
    def fc(cls, **kw):
        kw.setdefault("hidden", (128, 128))
        return cls(arch="fc", **kw)

    def conv_out_width(self):
        k = self.kernel_width
        w = N_SUBCARRIERS - k + 1      # conv1 (B x k)
        w = (w - k + 1) // 2           # conv2, pool
        w = w - k + 1                  # conv3
        return (w - k + 1) // 2        # conv4, pool

    def input_width(self):
        rss = 2 * self.n_beacons
        if self.arch == "fc":
            return rss
        return self.n_filters * self.conv_out_width() + rss

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "hidden": tuple(d["hidden"])})


def param_shapes(topo):
    """Ordered (name, shape) pairs for the topology."""
    shapes = []
    F, B, k = topo.n_filters, topo.n_beacons, topo.kernel_width
    if topo.arch == "cnn":
        shapes += [("conv1.w", (F, 2, B, k)), ("conv1.b", (F,))]
        for i in (2, 3, 4):
            shapes += [(f"conv{i}.w", (F, F, k)), (f"conv{i}.b", (F,))]
    width = topo.input_width()
    for i, h in enumerate(topo.hidden, 1):
        shapes += [(f"fc{i}.w", (width, h)), (f"fc{i}.b", (h,))]
        width = h
    shapes += [("W_d", (width,)), ("b_d", ()), ("W_s", (width,)), ("b_s", ())]
    shapes += [("offsets", (topo.n_aps,))]
    return shapes


def _fan_in(name, shape):
    if name.startswith("conv"):
        return int(np.prod(shape[1:]))
    return shape[0]


def _logit(p):
    return float(np.log(p / (1.0 - p)))


def init_params(topo, seed=0):
    """He-uniform weights, zero AP offsets, zero hidden biases; head biases per topology."""
    rng = np.random.default_rng(seed)
    params = ParamSet()
    heads = {"b_d": (topo.d_init, topo.d_max), "b_s": (topo.s_init, topo.s_max)}
    for name, shape in param_shapes(topo):
        if name.endswith(".w") or name in ("W_d", "W_s"):
            lim = np.sqrt(6.0 / _fan_in(name, shape))
            params[name] = rng.uniform(-lim, lim, shape)
        elif name in heads and heads[name][0] is not None:
            v, hi = heads[name]
            params[name] = np.full(shape, _logit(v / hi))
        else:
            params[name] = np.zeros(shape)
    return params


def check_params(params, topo):
    expect = dict(param_shapes(topo))
    if set(expect) != set(params):
        raise ValueError(f"parameter names do not match topology: "
                         f"missing {sorted(set(expect) - set(params))}, "
                         f"extra {sorted(set(params) - set(expect))}")
    for name, shape in expect.items():
        if params[name].shape != tuple(shape):
            raise ValueError(f"{name}: shape {params[name].shape} != {tuple(shape)}")


def normalize_csi(csi):
    """Divide each beacon row by its RMS amplitude."""
    csi = np.asarray(csi, dtype=float)
    rms = np.sqrt(np.mean(csi * csi, axis=-1, keepdims=True))
    return csi / np.where(rms > 0, rms, 1.0)


def forward(params, topo, csi, rss, ap_index=None):
    """Return (d_hat, s_hat) tensors of shape (n,).

    ``csi`` is (n, 2, B, 52) amplitudes, ``rss`` (n, 2, B) raw dBm and
    ``ap_index`` positions into the ``offsets`` vector (None: no offsets).
    """
    csi = np.asarray(csi, dtype=float)
    rss = np.asarray(rss, dtype=float)
    n, B = rss.shape[0], topo.n_beacons
    if rss.shape != (n, 2, B) or (topo.arch == "cnn" and csi.shape != (n, 2, B, N_SUBCARRIERS)):
        raise ValueError(f"inputs do not match topology with B={B}: csi {csi.shape}, rss {rss.shape}")
    r = Tensor(rss.reshape(n, 2 * B))
    if ap_index is not None and topo.n_aps > 0:
        off = ops.getitem(params["offsets"], np.asarray(ap_index, dtype=int))
        r = r + ops.reshape(off, (n, 1))
    r = (r - topo.rss_center) * (1.0 / topo.rss_scale)
    if topo.arch == "cnn":
        x = ops.conv2d(normalize_csi(csi), params["conv1.w"], params["conv1.b"])
        x = ops.relu(ops.reshape(x, (n, topo.n_filters, x.shape[-1])))
        x = ops.relu(ops.conv1d(x, params["conv2.w"], params["conv2.b"]))
        x = ops.maxpool1d(x, 2)
        x = ops.relu(ops.conv1d(x, params["conv3.w"], params["conv3.b"]))
        x = ops.relu(ops.conv1d(x, params["conv4.w"], params["conv4.b"]))
        x = ops.maxpool1d(x, 2)
        h = ops.concat([ops.reshape(x, (n, -1)), r], axis=1)
    else:
        h = r
    for i in range(1, len(topo.hidden) + 1):
        h = ops.relu(h @ params[f"fc{i}.w"] + params[f"fc{i}.b"])
    d = ops.sigmoid(h @ params["W_d"] + params["b_d"]) * topo.d_max
    s = ops.sigmoid(h @ params["W_s"] + params["b_s"]) * topo.s_max
    return d, s


@dataclass
class NnModel:
    topology: Topology
    params: ParamSet
    ap_ids: tuple = field(default_factory=tuple)

    def __post_init__(self):
        check_params(self.params, self.topology)
        self.ap_ids = tuple(int(a) for a in self.ap_ids)
        if len(self.ap_ids) != self.topology.n_aps:
            raise ValueError("one ap_id per offset entry required")

    @classmethod
    def create(cls, topology, seed=0, ap_ids=()):
        ap_ids = tuple(ap_ids)
        if topology.n_aps != len(ap_ids):
            topology = replace(topology, n_aps=len(ap_ids))
        return cls(topology, init_params(topology, seed), ap_ids)

    def ap_index(self, ap_ids):
        if ap_ids is None or not self.ap_ids:
            return None
        lookup = {a: i for i, a in enumerate(self.ap_ids)}
        try:
            return np.array([lookup[int(a)] for a in np.atleast_1d(ap_ids)], dtype=int)
        except KeyError as e:
            raise KeyError(f"AP {e.args[0]} has no offset entry in this model") from None

    def offset_table(self):
        table = ApOffsetTable()
        for a, o in zip(self.ap_ids, self.params["offsets"].data):
            table[a] = o
        return table

    def __call__(self, csi, rss, ap_ids=None):
        return forward(self.params, self.topology, csi, rss, self.ap_index(ap_ids))


def nn_range(x, model, ap_ids=None):
    """Numeric (d, s) from a :class:`RangingInput`, list of inputs or feature matrix.

    Learned offsets are applied only when ``ap_ids`` is given; inputs built
    with ``model.offset_table()`` already carry them.
    """
    csi, rss = _unpack(x, model.topology.n_beacons)
    d, s = model(csi, rss, ap_ids)
    return RangingOutput(d.data, s.data)
