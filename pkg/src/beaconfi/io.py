"""Plain-text file formats: run configs, walk records and result tables.

Every file written here starts with ``#`` header lines carrying the tool
version, the seed and a SHA-256 digest of each input, followed by one
``# columns <tag>: ...`` line per record type. Floats are written with
``repr`` so they read back bit-exact.

Walk record file, one record per line, first field is the record type::

    A,ap_id,x,y,channel
    E,epoch,time
    I,time,accel_z,heading[,x_true,y_true]
    B,ap_id,antenna,timestamp,rss_dbm,re_0,im_0,...,re_51,im_51,epoch[,x_true,y_true,los]

The truth columns appear only when the header says ``labeled=true`` and
the CSI pairs only when it says ``csi=true``.
"""

import configparser
import csv
import hashlib
import io
import os
from dataclasses import dataclass

import numpy as np

from .channel import N_SUBCARRIERS
from .simulate import BeaconLog, ImuStream

VERSION = "0.1.0"
TOOL = f"beaconfi {VERSION}"


class FormatError(ValueError):
    pass


# -- config ------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text):
    t = str(text).strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_floats(text):
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def parse_ints(text):
    return tuple(int(x) for x in str(text).replace(",", " ").split())


CONVERTERS = {bool: parse_bool, int: int, float: float, str: str,
              "floats": parse_floats, "ints": parse_ints}


def read_config(path, schema, env=None, path_keys=()):
    """Read a flat ``key = value`` file against ``schema``.

    ``schema`` maps key -> (type, default). Unknown keys and unparsable
    values raise ValueError. Keys in ``path_keys`` may be overridden by the
    environment variable ``BEACONFI_<KEY>``; relative paths in the file are
    resolved against the file's directory.
    """
    env = os.environ if env is None else env
    raw = {}
    base = ""
    if path is not None:
        with open(path, encoding="utf-8") as f:
            text = f.read()
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string("[run]\n" + text, source=str(path))
        except configparser.Error as e:
            raise ValueError(f"bad config file {path}: {e}") from None
        raw = dict(parser["run"])
        base = os.path.dirname(os.path.abspath(path))
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, (kind, default) in schema.items():
        value = raw.get(key)
        if key in path_keys:
            env_val = env.get("BEACONFI_" + key.upper())
            if env_val:
                out[key] = env_val
                continue
            if value:
                out[key] = os.path.join(base, value)
                continue
        if value is None or value == "":
            out[key] = default
            continue
        try:
            out[key] = CONVERTERS[kind](value)
        except ValueError as e:
            raise ValueError(f"config key {key!r}: {e}") from None
    return out


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return "" if v is None else str(v)


# -- provenance header -------------------------------------------------------

def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance(seed, inputs=(), **extra):
    """Header fields: tool version, seed, one digest per input file, then ``extra``."""
    fields = [("tool", TOOL), ("seed", format_value(seed))]
    for p in inputs:
        fields.append(("input", f"{os.path.basename(p)}:sha256={file_digest(p)}"))
    fields += [(k, format_value(v)) for k, v in extra.items()]
    return fields


def header_lines(fields, columns=()):
    lines = [f"# {k}={v}" for k, v in fields]
    lines += [f"# columns {tag}: {','.join(cols)}" for tag, cols in columns]
    return lines


def read_header(path):
    """Header of a text output as a dict; repeated keys collect into lists."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("columns "):
                tag, _, cols = body[len("columns "):].partition(":")
                out.setdefault("columns", {})[tag.strip()] = cols.strip().split(",")
                continue
            k, _, v = body.partition("=")
            if k in out:
                out[k] = out[k] if isinstance(out[k], list) else [out[k]]
                out[k].append(v)
            else:
                out[k] = v
    return out


def _write_text(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _fmt(x):
    return repr(float(x))


# -- walk records -------------------------------------------------------------

@dataclass
class RecordedTruth:
    """Ground-truth positions at the IMU ticks, interpolated on request."""

    times: np.ndarray
    positions: np.ndarray

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, 0]),
                         np.interp(t, self.times, self.positions[:, 1])], axis=-1)


@dataclass
class RecordedWalk:
    """A walk read back from a record file; ``truth`` is None when unlabeled."""

    truth: RecordedTruth
    imu: ImuStream
    beacons: BeaconLog
    channels: np.ndarray
    header: dict

    @property
    def labeled(self):
        return self.truth is not None

    @property
    def has_csi(self):
        return parse_bool(self.header.get("csi", "true"))


def _columns(labeled, csi):
    pairs = [f"{p}_{n}" for n in range(N_SUBCARRIERS) for p in ("re", "im")] if csi else []
    truth = ["x_true", "y_true"]
    return [
        ("A", ["ap_id", "x", "y", "channel"]),
        ("E", ["epoch", "time"]),
        ("I", ["time", "accel_z", "heading"] + (truth if labeled else [])),
        ("B", ["ap_id", "antenna", "timestamp", "rss_dbm"] + pairs + ["epoch"]
         + (truth + ["los"] if labeled else [])),
    ]


def write_walk(path, walk, channels, fields, labeled=True, csi=True):
    """Write ``walk`` (simulated or recorded) as a record file."""
    fields = list(fields) + [("kind", "walk"), ("labeled", format_value(labeled)),
                             ("csi", format_value(csi))]
    lines = header_lines(fields, _columns(labeled, csi))
    log, imu = walk.beacons, walk.imu
    for i, (x, y) in enumerate(log.ap_positions):
        lines.append(f"A,{i},{_fmt(x)},{_fmt(y)},{int(channels[i])}")
    for k, t in enumerate(log.epoch_times):
        lines.append(f"E,{k},{_fmt(t)}")
    truth = walk.truth.position_at(imu.times) if labeled else None
    for i, t in enumerate(imu.times):
        rec = [_fmt(t), _fmt(imu.accel_z[i]), _fmt(imu.heading[i])]
        if labeled:
            rec += [_fmt(truth[i, 0]), _fmt(truth[i, 1])]
        lines.append("I," + ",".join(rec))
    for i in range(len(log)):
        rec = [str(int(log.ap_id[i])), str(int(log.antenna[i])), _fmt(log.timestamp[i]),
               _fmt(log.rss_dbm[i])]
        if csi:
            h = log.csi[i]
            rec += [_fmt(v) for v in np.column_stack([h.real, h.imag]).ravel()]
        rec.append(str(int(log.epoch[i])))
        if labeled:
            rec += [_fmt(log.truth_xy[i, 0]), _fmt(log.truth_xy[i, 1]), str(int(bool(log.los[i])))]
        lines.append("B," + ",".join(rec))
    _write_text(path, lines)


def read_walk(path):
    """Parse a record file back into a :class:`RecordedWalk`."""
    header = read_header(path)
    if header.get("kind") != "walk":
        raise FormatError(f"{path}: not a walk record file")
    try:
        labeled = parse_bool(header.get("labeled", "false"))
        has_csi = parse_bool(header.get("csi", "true"))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
    cols = dict(_columns(labeled, has_csi))
    if header.get("columns", {}).get("B") != cols["B"]:
        raise FormatError(f"{path}: beacon columns do not match the declared format")
    rows = {"A": [], "E": [], "I": [], "B": []}
    with open(path, encoding="utf-8") as f:
        reader = csv.reader(line for line in f if not line.startswith("#"))
        for n, rec in enumerate(reader, 1):
            if not rec:
                continue
            tag = rec[0]
            if tag not in rows:
                raise FormatError(f"{path}: unknown record type {tag!r} in record {n}")
            if len(rec) - 1 != len(cols[tag]):
                raise FormatError(f"{path}: record {n} ({tag}) has {len(rec) - 1} fields, "
                                  f"expected {len(cols[tag])}")
            rows[tag].append(rec[1:])
    try:
        arr = {t: np.array(r, dtype=float).reshape(len(r), len(cols[t])) for t, r in rows.items()}
    except ValueError as e:
        raise FormatError(f"{path}: non-numeric field ({e})") from None
    a, e, i, b = arr["A"], arr["E"], arr["I"], arr["B"]
    if len(a) == 0 or len(i) == 0:
        raise FormatError(f"{path}: needs AP and IMU records")
    if not np.array_equal(a[:, 0], np.arange(len(a))):
        raise FormatError(f"{path}: AP records must list ids 0..n-1 in order")
    n_aps = len(a)
    ap_id = b[:, 0].astype(int)
    if np.any((ap_id < 0) | (ap_id >= n_aps)):
        raise FormatError(f"{path}: beacon refers to an undeclared AP")
    if has_csi:
        pairs = b[:, 4:4 + 2 * N_SUBCARRIERS].reshape(len(b), N_SUBCARRIERS, 2)
        csi = pairs[..., 0] + 1j * pairs[..., 1]
        rest = b[:, 4 + 2 * N_SUBCARRIERS:]
    else:
        csi = np.full((len(b), N_SUBCARRIERS), np.nan + 0j)
        rest = b[:, 4:]
    if labeled:
        truth_xy, los = rest[:, 1:3], rest[:, 3] > 0.5
        truth = RecordedTruth(i[:, 0], i[:, 3:5])
    else:
        truth_xy, los, truth = np.full((len(b), 2), np.nan), np.zeros(len(b), bool), None
    log = BeaconLog(ap_id, b[:, 1].astype(int), b[:, 2], rest[:, 0].astype(int), b[:, 3], csi,
                    truth_xy, los, e[:, 1], a[:, 1:3])
    imu = ImuStream(i[:, 0], i[:, 1], i[:, 2])
    return RecordedWalk(truth, imu, log, a[:, 3].astype(int), header)


# -- result tables ------------------------------------------------------------

def write_table(path, fields, columns, rows, formats=None):
    """CSV table with a provenance header; ``rows`` is an iterable of sequences."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else format_value(v)
                    for v in r])
    body = buf.getvalue().splitlines()
    _write_text(path, header_lines(fields, [("rows", columns)]) + body)


def read_table(path):
    """Return (header dict, column names, float array); empty fields read as NaN."""
    header = read_header(path)
    cols = header.get("columns", {}).get("rows")
    if cols is None:
        raise FormatError(f"{path}: missing column line")
    with open(path, encoding="utf-8") as f:
        data = [[v or "nan" for v in r]
                for r in csv.reader(line for line in f if not line.startswith("#")) if r]
    return header, cols, np.array(data, dtype=float).reshape(len(data), len(cols))


def write_keyvalues(path, fields, values):
    """``key = value`` file (metrics, calibration parameters) with a provenance header."""
    lines = header_lines(fields)
    lines += [f"{k} = {format_value(v)}" for k, v in values.items()]
    _write_text(path, lines)


def read_keyvalues(path):
    """Return (header dict, {key: str value}) from a :func:`write_keyvalues` file."""
    header = read_header(path)
    values = {}
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, sep, v = line.partition("=")
            if not sep:
                raise FormatError(f"{path}: line {n} is not 'key = value'")
            values[k.strip()] = v.strip()
    return header, values
