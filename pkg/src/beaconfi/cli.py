"""Command line entry points: simulate, fit-baselines, train, evaluate.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import io
from .positioning import FusedPositioner, WifiPositioner
from .ranging.baselines import BACKENDS, CalibrationParams
from .ranging.calibration import fit_baselines
from .ranging.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ranging.network import NnModel, Topology
from .simulate import (ImuConfig, default_site, generate_walk, grid_site, lawnmower_waypoints,
                       loop_waypoints, random_walk_waypoints)
from .training.dataset import build_datasets, epoch_observations
from .training.pipeline import MODES, NN_BACKENDS, evaluate_dataset
from .training.trainer import History, TrainConfig, train

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
ALL_BACKENDS = tuple(BACKENDS) + NN_BACKENDS

SIMULATE_KEYS = {
    "seed": (int, 0),
    "site": (str, "default"),
    "site_seed": (int, 0),
    "n_aps": (int, 59),
    "width": (float, 80.0),
    "height": (float, 40.0),
    "walk": (str, "random"),
    "length": (float, 300.0),
    "spacing": (float, 4.0),
    "laps": (int, 1),
    "speed": (float, 1.2),
    "imu_noise": (bool, True),
    "reference_offset_deg": (float, None),
    "ssids_per_ap": (int, 2),
    "quantize": (bool, False),
    "labeled": (bool, False),
    "csi": (bool, True),
}

FIT_KEYS = {
    "seed": (int, 0),
    "n_beacons": (int, 4),
}

EKF_KEYS = {
    "s_x": (float, 10.0),
    "s_y": (float, 10.0),
    "v": (float, 1.0),
    "joseph": (bool, True),
}

TRAIN_KEYS = {
    "seed": (int, 0),
    "mu1": (float, 1.0),
    "mu2": (float, 1.0),
    "lr": (float, 1e-3),
    "epochs": (int, 50),
    "split": (float, 0.7),
    "K": (int, 100),
    "n_beacons": (int, 4),
    "n_max": (int, 5),
    "n_filters": (int, 64),
    "kernel_width": (int, 4),
    "hidden": ("ints", None),
    "d_init": (float, 10.0),
    "s_init": (float, 3.0),
    "resume": (str, None),
    **EKF_KEYS,
}

EVALUATE_KEYS = {
    "seed": (int, 0),
    "n_beacons": (int, 4),
    "n_max": (int, 5),
    "calibration": (str, None),
    "checkpoint": (str, None),
    "n_hypotheses": (int, 90),
    "window": (float, 10.0),
    "warmup": (float, 10.0),
    "accumulated": (bool, True),
    "pdr_noise": (float, 0.1),
    **EKF_KEYS,
}

PATH_KEYS = ("resume", "calibration", "checkpoint")


class UsageError(ValueError):
    pass


def _config(args, schema):
    cfg = io.read_config(args.config, schema, path_keys=PATH_KEYS)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args):
    out = os.environ.get("BEACONFI_OUT") or args.out
    if not out:
        raise UsageError("--out is required")
    os.makedirs(out, exist_ok=True)
    return out


def _inputs(args):
    paths = list(args.inputs)
    if not paths:
        raise UsageError("at least one input file is required")
    for p in paths:
        if not os.path.isfile(p):
            raise UsageError(f"input file not found: {p}")
    return paths


def _config_inputs(args):
    return [args.config] if args.config else []


# -- simulate -----------------------------------------------------------------

def _site(cfg):
    kw = dict(ssids_per_ap=cfg["ssids_per_ap"], quantize=cfg["quantize"])
    if cfg["site"] == "default":
        return default_site(cfg["site_seed"], **kw)
    if cfg["site"] == "grid":
        if cfg["n_aps"] < 1 or not (cfg["width"] > 0 and cfg["height"] > 0):
            raise UsageError("grid site needs n_aps >= 1 and positive width and height")
        return grid_site(cfg["n_aps"], cfg["width"], cfg["height"], cfg["site_seed"], **kw)
    raise UsageError(f"site must be 'default' or 'grid', got {cfg['site']!r}")


def _waypoints(site, cfg, rng):
    if cfg["walk"] == "random":
        return random_walk_waypoints(site, cfg["length"], rng)
    if cfg["walk"] == "lawnmower":
        return lawnmower_waypoints(site, cfg["spacing"])
    if cfg["walk"] == "loop":
        lap = loop_waypoints(site)
        return np.vstack([lap] + [lap[1:]] * (cfg["laps"] - 1))
    raise UsageError(f"walk must be random, lawnmower or loop, got {cfg['walk']!r}")


def cmd_simulate(args):
    cfg = _config(args, SIMULATE_KEYS)
    out = _out_dir(args)
    site = _site(cfg)
    rng = np.random.default_rng(cfg["seed"])
    imu = ImuConfig.noisy() if cfg["imu_noise"] else ImuConfig()
    offset = cfg["reference_offset_deg"]
    walk = generate_walk(site, _waypoints(site, cfg, rng), cfg["speed"], imu, rng,
                         reference_offset=None if offset is None else math.radians(offset))
    fields = io.provenance(cfg["seed"], _config_inputs(args), command="simulate",
                           n_aps=site.n_aps, epoch_period=site.epoch_period)
    path = os.path.join(out, "walk.csv")
    io.write_walk(path, walk, site.channel_assignment, fields, cfg["labeled"], cfg["csi"])
    return path


# -- fit-baselines ------------------------------------------------------------

def cmd_fit_baselines(args):
    cfg = _config(args, FIT_KEYS)
    inputs = _inputs(args)
    out = _out_dir(args)
    walks = [io.read_walk(p) for p in inputs]
    if not all(w.labeled for w in walks):
        raise UsageError("calibration needs labeled walks (ground-truth columns)")
    has_csi = all(w.has_csi for w in walks)
    if args.backend == "cupid" and not has_csi:
        raise UsageError("the cupid backend needs CSI columns, which the input lacks")
    if args.backend in NN_BACKENDS:
        raise UsageError("fit-baselines covers pathloss, polynomial and cupid only")
    obs = [epoch_observations(w.beacons, cfg["n_beacons"], None) for w in walks]
    csi = np.concatenate([o.csi_complex for o in obs])
    rss = np.concatenate([o.rss for o in obs])
    d = np.concatenate([o.truth_dist for o in obs])
    los = np.concatenate([o.los for o in obs]) if has_csi else None
    if len(d) == 0:
        raise UsageError("no complete beacon groups in the calibration data")
    cal = fit_baselines(csi, rss, d, los)
    fields = io.provenance(cfg["seed"], _config_inputs(args) + inputs, command="fit-baselines",
                           kind="calibration", cupid_fitted=has_csi, rows=len(d))
    path = os.path.join(out, "calibration.txt")
    io.write_keyvalues(path, fields, cal.to_flat())
    return path


def load_calibration(path):
    header, values = io.read_keyvalues(path)
    if header.get("kind") != "calibration":
        raise io.FormatError(f"{path}: not a calibration file")
    try:
        return CalibrationParams.from_flat({k: float(v) for k, v in values.items()})
    except TypeError as e:
        raise io.FormatError(f"{path}: {e}") from None


# -- train --------------------------------------------------------------------

def _datasets(paths, n_beacons, n_max, K):
    """Training windows from every walk, plus the number of APs the walks declare."""
    out, n_aps = [], 0
    for p in paths:
        walk = io.read_walk(p)
        n_aps = max(n_aps, len(walk.beacons.ap_positions))
        out += build_datasets(walk, n_beacons, n_max or None, K)
    return out, n_aps


def _train_config(cfg):
    return TrainConfig(mu1=cfg["mu1"], mu2=cfg["mu2"], lr=cfg["lr"], epochs=cfg["epochs"],
                       split=cfg["split"], K=cfg["K"], seed=cfg["seed"], s_x=cfg["s_x"],
                       s_y=cfg["s_y"], v=cfg["v"], joseph=cfg["joseph"])


def _topology(cfg, backend):
    hidden = cfg["hidden"] or ((256, 256, 256) if backend == "cnn" else (128, 128))
    return Topology(arch=backend, n_beacons=cfg["n_beacons"], n_filters=cfg["n_filters"],
                    kernel_width=cfg["kernel_width"], hidden=hidden, d_init=cfg["d_init"],
                    s_init=cfg["s_init"])


# settings a resumed run must share with the run that wrote the checkpoint
_RESUME_FIXED = ("seed", "mu1", "mu2", "lr", "split", "K", "s_x", "s_y", "v", "joseph")


def _history_from(meta):
    h = History()
    for k, v in meta["history"].items():
        setattr(h, k, [x if x is not None else np.nan for x in v])
    return h


def _history_meta(history):
    return {k: [None if isinstance(x, float) and math.isnan(x) else x for x in v]
            for k, v in vars(history).items()}


def cmd_train(args):
    cfg = _config(args, TRAIN_KEYS)
    backend = args.backend or "cnn"
    if backend not in NN_BACKENDS:
        raise UsageError(f"train needs an NN backend ({', '.join(NN_BACKENDS)}), got {backend!r}")
    inputs = _inputs(args)
    out = _out_dir(args)
    tcfg = _train_config(cfg)
    datasets, n_aps = _datasets(inputs, cfg["n_beacons"], cfg["n_max"], cfg["K"])
    if len(datasets) < 2:
        raise UsageError(f"only {len(datasets)} complete K={cfg['K']} datasets in the input")
    # every declared AP gets an offset; APs never ranged in training keep zero
    ap_ids = np.arange(n_aps)

    adam, start, history = None, 0, None
    if cfg["resume"]:
        model, adam, header = load_checkpoint(cfg["resume"])
        meta = header["meta"]
        prev = meta.get("train_config", {})
        changed = [k for k in _RESUME_FIXED if prev.get(k) != tcfg.as_dict()[k]]
        if changed:
            raise UsageError(f"resume config differs in: {', '.join(changed)}")
        if model.topology.arch != backend:
            raise UsageError(f"checkpoint holds a {model.topology.arch!r} model")
        start, history = int(header["epoch"]), _history_from(meta)
    else:
        model = NnModel.create(_topology(cfg, backend), cfg["seed"], ap_ids)

    model, history, adam = train(datasets, model, tcfg, adam=adam, start_epoch=start,
                                 history=history)
    meta = {"train_config": tcfg.as_dict(), "history": _history_meta(history),
            "scenario": tcfg.scenario}
    ckpt = os.path.join(out, "model.ckpt")
    save_checkpoint(ckpt, model, adam, epoch=history.epoch[-1], meta=meta)

    fields = io.provenance(cfg["seed"], _config_inputs(args) + inputs, command="train",
                           backend=backend, scenario=tcfg.scenario, mu1=tcfg.mu1, mu2=tcfg.mu2,
                           lr=tcfg.lr, adam="beta1=0.9 beta2=0.999 eps=1e-08",
                           train_idx=history.train_idx, val_idx=history.val_idx,
                           n_datasets=len(datasets))
    rows = zip(history.epoch, history.train_cost, history.val_cost)
    io.write_table(os.path.join(out, "history.csv"), fields,
                   ["epoch", "train_cost", "val_cost"], rows)
    return ckpt


# -- evaluate -----------------------------------------------------------------

def cmd_evaluate(args):
    cfg = _config(args, EVALUATE_KEYS)
    backend = args.backend or "pathloss"
    mode = args.mode or "wifi_only"
    if backend not in ALL_BACKENDS:
        raise UsageError(f"backend must be one of {', '.join(ALL_BACKENDS)}")
    if mode not in MODES:
        raise UsageError(f"mode must be one of {', '.join(MODES)}")
    inputs = _inputs(args)
    if len(inputs) != 1:
        raise UsageError("evaluate takes exactly one test walk")
    out = _out_dir(args)
    walk = io.read_walk(inputs[0])
    if not walk.labeled:
        raise UsageError("evaluation needs a labeled test walk")
    if backend == "cupid" and not walk.has_csi:
        raise UsageError("the cupid backend needs CSI columns, which the input lacks")
    cal, model, used = None, None, []
    if backend in NN_BACKENDS:
        if not cfg["checkpoint"]:
            raise UsageError(f"backend {backend!r} needs a checkpoint")
        model = load_checkpoint(cfg["checkpoint"])[0]
        used.append(cfg["checkpoint"])
    elif cfg["calibration"]:
        cal = load_calibration(cfg["calibration"])
        used.append(cfg["calibration"])
    ds = build_datasets(walk, cfg["n_beacons"], cfg["n_max"] or None, None)[0]
    wifi = WifiPositioner(cfg["s_x"], cfg["s_y"], cfg["v"], cfg["joseph"])
    fused = FusedPositioner(cfg["n_hypotheses"], cfg["s_x"], cfg["s_y"], window=cfg["window"],
                            warmup=cfg["warmup"], accumulated=cfg["accumulated"],
                            pdr_noise=cfg["pdr_noise"], joseph=cfg["joseph"])
    metrics, res = evaluate_dataset(ds, backend, mode, cal, model, wifi, fused)

    fields = io.provenance(cfg["seed"], _config_inputs(args) + inputs + used,
                           command="evaluate", backend=backend, mode=mode)
    io.write_keyvalues(os.path.join(out, "metrics.txt"), fields + [("kind", "metrics")],
                       metrics.as_dict())
    err = np.linalg.norm(res.positions - ds.truth, axis=1)
    rows = zip(res.times, res.positions[:, 0], res.positions[:, 1], ds.truth[:, 0],
               ds.truth[:, 1], err, res.selected, res.innovation_norm)
    io.write_table(os.path.join(out, "trajectory.csv"), fields,
                   ["time", "x", "y", "x_true", "y_true", "error", "selected",
                    "innovation_norm"], rows)
    io.write_table(os.path.join(out, "cdf.csv"), fields, ["error", "cdf"],
                   zip(metrics.cdf_x, metrics.cdf_y))
    return metrics


# -- entry point --------------------------------------------------------------

COMMANDS = {
    "simulate": cmd_simulate,
    "fit-baselines": cmd_fit_baselines,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="beaconfi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=io.TOOL)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value run configuration")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", help="output directory (env BEACONFI_OUT overrides)")
        if name != "simulate":
            sp.add_argument("--backend", choices=ALL_BACKENDS)
            sp.add_argument("inputs", nargs="*", help="walk record files")
        if name == "evaluate":
            sp.add_argument("--mode", choices=MODES)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"beaconfi: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, CheckpointError) as e:
        print(f"beaconfi: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
