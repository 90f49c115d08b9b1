"""Finite-difference gradient verification.

Runs the function under test in float64 and compares analytic gradients from
the tape against central differences. Production code stays float32; checks
promote the same code paths to float64 by feeding float64 tensors through.
"""

import numpy as np

from .tensor import Tape, Tensor, active_tape, backward, zero_grads


def weighted_sum(x, weights):
    """Differentiable scalar probe <x, weights>.

    A plain sum hides direction-dependent gradient terms (normalization,
    softmax-like couplings); projecting onto fixed random weights does not.
    """
    w = np.asarray(weights, dtype=x.data.dtype)
    if w.shape != x.data.shape:
        raise AssertionError("probe weights must match, got %s vs %s" % (w.shape, x.shape))
    out = Tensor(np.asarray((x.data * w).sum()), requires_grad=x.requires_grad,
                 dtype=x.data.dtype)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        def fn(grad):
            x.grad += grad.reshape(()) * w
        tape.record(out, fn)
    return out


def numeric_grad(f, tensors, index, step=1e-3):
    """Central-difference gradient of scalar f() w.r.t. tensors[index]."""
    t = tensors[index]
    g = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f().data)
        flat[i] = orig - step
        lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def check_gradients(f, tensors, step=1e-3, rtol=1e-3):
    """Compare tape gradients of scalar-valued f against central differences.

    All tensors must be float64 with requires_grad set. Returns the worst
    relative error seen; raises AssertionError past rtol.
    """
    for t in tensors:
        if t.data.dtype != np.float64:
            raise AssertionError("gradient checks must run in float64")
        if not t.requires_grad:
            raise AssertionError("gradient check target must require gradients")

    zero_grads(tensors)
    with Tape() as tape:
        loss = f()
    backward(loss, tape)

    worst = 0.0
    for i, t in enumerate(tensors):
        num = numeric_grad(f, tensors, i, step=step)
        denom = np.maximum(np.abs(num), np.abs(t.grad))
        err = np.abs(t.grad - num) / np.maximum(denom, 1e-8)
        # ignore coordinates where both gradients vanish
        err[(np.abs(num) < 1e-10) & (np.abs(t.grad) < 1e-10)] = 0.0
        worst = max(worst, float(err.max()) if err.size else 0.0)
    if worst > rtol:
        raise AssertionError("gradient mismatch: relative error %.3e > %.3e" % (worst, rtol))
    return worst
