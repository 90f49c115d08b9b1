"""Dense tensors with reverse-mode differentiation on an explicit tape.

Production compute is 32-bit; gradient checks run the same code paths in a
64-bit shadow mode by constructing float64 tensors (operations preserve the
wider dtype whenever any input carries it).
"""

import numpy as np

from .errors import ContractError

_TAPE_STACK = []


class Tensor:
    """N-dimensional real array, optionally tracked for gradients.

    A tensor with ``requires_grad`` owns a same-shape ``grad`` buffer that
    ``backward`` accumulates into. Tensors without the flag are treated as
    immutable inputs and never receive gradients.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        # working precision is float32; the float64 shadow mode is opt-in via
        # an explicit dtype (ops then propagate the wider type downstream)
        arr = np.asarray(data).astype(dtype or np.float32, copy=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0

    def item(self):
        if self.data.size != 1:
            raise ContractError("item() requires a single-element tensor, got shape %s" % (self.shape,))
        return float(self.data.reshape(()))

    def __repr__(self):
        return "Tensor(shape=%s, dtype=%s, grad=%s)" % (
            self.shape, self.data.dtype.name, self.requires_grad)


class Tape:
    """Ordered record of executed differentiable operations.

    Operations append themselves in execution order, which is by construction
    a topological order of the compute graph; ``backward`` replays the records
    in reverse. One tape belongs to one logical thread.
    """

    def __init__(self):
        self._records = []  # (output tensor, pull-back callable)

    def record(self, out, backward_fn):
        self._records.append((out, backward_fn))

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False


def active_tape():
    """The innermost open tape, or None outside any recording context."""
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(loss, tape):
    """Populate gradients of every grad-flagged tensor reachable from loss.

    Replays the tape in reverse, accumulating (+=) at fan-out points, so a
    DAG with shared subexpressions gets the same gradients as the expanded
    tree. Gradients of leaf tensors are accumulated, not overwritten; call
    ``zero_grad`` between steps.
    """
    if loss.data.size != 1:
        raise ContractError("backward requires a scalar loss, got shape %s" % (loss.shape,))
    produced = any(out is loss for out, _ in tape._records)
    if not produced and not loss.requires_grad:
        raise ContractError("loss tensor is not reachable from the tape")
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad[...] = 1
    for out, fn in reversed(tape._records):
        if out.grad is not None:
            fn(out.grad)


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()
