"""Central finite differences against the tape gradients."""

import numpy as np

from beaconfi.autodiff import Tape, Tensor


def numeric_grad(f, arrays, i, h=1e-6):
    x = [np.array(a, dtype=float) for a in arrays]
    g = np.zeros_like(x[i])
    it = np.nditer(x[i], flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[i][idx]
        x[i][idx] = orig + h
        fp = float(np.sum(f(*[Tensor(a) for a in x]).data))
        x[i][idx] = orig - h
        fm = float(np.sum(f(*[Tensor(a) for a in x]).data))
        x[i][idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def tape_grads(f, arrays):
    ts = [Tensor(np.array(a, dtype=float), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = f(*ts)
    tape.backward(out, np.ones_like(out.data))
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in ts]


def rel_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def max_rel_error(f, arrays, h=1e-6):
    """Largest per-input relative error between tape and central-difference gradients."""
    analytic = tape_grads(f, arrays)
    return max(rel_error(analytic[i], numeric_grad(f, arrays, i, h)) for i in range(len(arrays)))


def elementwise_rel_error(f, arrays, h=1e-5, floor=1e-6):
    """Largest entrywise |analytic - numeric| / max(|analytic|, |numeric|, floor)."""
    analytic = tape_grads(f, arrays)
    worst = 0.0
    for i in range(len(arrays)):
        n = numeric_grad(f, arrays, i, h)
        a = analytic[i]
        worst = max(worst, float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor))))
    return worst
