"""Versioned binary checkpoint for NN rangers.

Layout: 8-byte magic, little-endian uint32 format version, uint64 header
length, a UTF-8 JSON header with sorted keys, then raw little-endian
float64 arrays in header order (parameters, then Adam moments if present).
No timestamps are stored, so identical models give identical bytes.
"""

import json
import struct

import numpy as np

from ..autodiff.optim import AdamState, ParamSet
from .network import NnModel, Topology

MAGIC = b"BEACONFI"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _blobs(arrays):
    return [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]


def dumps(model, adam=None, epoch=None, meta=None):
    names = list(model.params)
    arrays = [model.params[n].data for n in names]
    header = {
        "format_version": FORMAT_VERSION,
        "topology": model.topology.to_dict(),
        "ap_ids": list(model.ap_ids),
        "bounds": {"d_max": model.topology.d_max, "s_max": model.topology.s_max},
        "params": [[n, list(model.params[n].shape)] for n in names],
        "epoch": epoch,
        "meta": meta or {},
        "adam": None,
    }
    if adam is not None:
        header["adam"] = {"beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t,
                          "names": [n for n in names if n in adam.m]}
        for key in ("m", "v"):
            arrays += [getattr(adam, key)[n] for n in header["adam"]["names"]]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return b"".join([MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(head)), head, *_blobs(arrays)])


def loads(buf):
    """Return (model, adam state or None, header dict)."""
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", buf, off)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(buf[off:off + hlen].decode())
    off += hlen

    def take(shape):
        nonlocal off
        count = int(np.prod(shape, dtype=int))
        if off + 8 * count > len(buf):
            raise CheckpointError("checkpoint truncated")
        a = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
        off += 8 * count
        return a

    params = ParamSet()
    shapes = {}
    for name, shape in header["params"]:
        shapes[name] = tuple(shape)
        params[name] = take(tuple(shape))
    model = NnModel(Topology.from_dict(header["topology"]), params, header["ap_ids"])
    adam = None
    if header["adam"] is not None:
        a = header["adam"]
        adam = AdamState(a["beta1"], a["beta2"], a["eps"], a["t"])
        adam.m = {n: take(shapes[n]) for n in a["names"]}
        adam.v = {n: take(shapes[n]) for n in a["names"]}
    if off != len(buf):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return model, adam, header


def save_checkpoint(path, model, adam=None, epoch=None, meta=None):
    with open(path, "wb") as f:
        f.write(dumps(model, adam, epoch, meta))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return loads(f.read())
