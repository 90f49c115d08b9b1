"""Adam optimizer over named parameter collections."""

import numpy as np

from .errors import ContractError


class Adam:
    """Adam with bias correction. State arrays mirror each parameter's dtype."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ContractError("Adam lr must be > 0, got %g" % lr)
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if eps <= 0:
            raise ContractError("Adam eps must be > 0, got %g" % eps)
        self.params = dict(params)
        for name, p in self.params.items():
            if not p.requires_grad:
                raise ContractError("Adam parameter %r does not require gradients" % name)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        """Apply one update from the gradients currently stored on the params."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= np.asarray(self.lr, p.data.dtype) * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
