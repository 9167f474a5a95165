"""Parameter containers and the Adam optimizer."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name):
        self.param = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


class ParamSet(dict):
    """Ordered mapping of unique names to trainable tensors."""

    def __setitem__(self, name, value):
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        if not isinstance(value, Tensor):
            value = Tensor(value)
        value.requires_grad = True
        value.name = name
        super().__setitem__(name, value)

    def zero_grad(self):
        for t in self.values():
            t.grad = None

    def grads(self):
        """Gradients keyed by name; parameters that got none map to zeros."""
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad)
                for k, t in self.items()}

    def arrays(self):
        return {k: t.data for k, t in self.items()}

    def copy(self):
        out = ParamSet()
        for k, t in self.items():
            out[k] = Tensor(t.data.copy())
        return out


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr=1e-3):
    """Apply one Adam update in place and return the (mutated) state.

    ``grads`` maps parameter names to arrays of matching shape; names
    missing from ``grads`` are treated as zero gradient.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != params[name].shape:
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape "
                             f"{params[name].shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
