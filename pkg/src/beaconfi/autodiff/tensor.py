"""Tensor and tape objects for reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are appended to it in
execution order, so replaying the records backwards is a valid topological
order. Outside a tape, operations compute values only.
"""

import threading

import numpy as np

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    """Return the innermost active tape of this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class TapeError(RuntimeError):
    pass


class Tensor:
    """Dense float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "grad", "requires_grad", "name")
    # make numpy defer to our reflected operators (ndarray @ Tensor etc.)
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags.writeable:
            arr = arr.copy()
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # Operator sugar; the implementations live in ``ops``.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("output", "inputs", "backward")

    def __init__(self, output, inputs, backward):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager; every op run inside the block whose inputs
    require gradients is recorded. :meth:`backward` may be called once.

    >>> x = Tensor(2.0, requires_grad=True)
    >>> with Tape() as tape:
    ...     y = x * x
    >>> tape.backward(y)
    >>> float(x.grad)
    4.0
    """

    def __init__(self):
        self.records = []
        self._done = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, output, inputs, backward):
        if self._done:
            raise TapeError("tape already consumed by a backward pass")
        output.requires_grad = True
        self.records.append(_Record(output, inputs, backward))

    def backward(self, root, seed=None):
        """Accumulate d(root)/d(t) into ``t.grad`` for every recorded tensor."""
        if self._done:
            raise TapeError("backward already ran on this tape")
        if seed is None:
            if root.data.size != 1:
                raise ValueError("backward needs a scalar root or an explicit seed")
            seed = np.ones_like(root.data)
        self._done = True
        root.grad = np.asarray(seed, dtype=np.float64).reshape(root.data.shape)
        for rec in reversed(self.records):
            g = rec.output.grad
            if g is None:
                continue
            in_grads = rec.backward(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(gi, dtype=np.float64, copy=True)
                else:
                    t.grad = t.grad + gi
