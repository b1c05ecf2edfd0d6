"""
optim.py - Adam over a ParameterStore
"""

import numpy as np

from .errors import ContractViolation


class Adam:
    """Bias-corrected Adam. Moments are kept per parameter name."""

    def __init__(self, lr=1e-5, betas=(0.9, 0.999), eps=1e-8):
        if not lr > 0:
            raise ContractViolation(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, store, names):
        self.t += 1
        correction1 = 1 - self.beta1**self.t
        correction2 = 1 - self.beta2**self.t
        for name in names:
            node = store[name]
            g = node.gradient
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            update = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            store.set_value(name, node.value - update)

    def settings(self):
        return {"lr": self.lr, "betas": [self.beta1, self.beta2], "eps": self.eps}

    def state_arrays(self):
        arrays = {"adam.t": np.array(float(self.t))}
        for name in sorted(self.m):
            arrays[f"adam.m/{name}"] = np.asarray(self.m[name])
            arrays[f"adam.v/{name}"] = np.asarray(self.v[name])
        return arrays

    def load_state(self, arrays):
        self.t = int(arrays.get("adam.t", 0))
        self.m = {k[len("adam.m/"):]: v for k, v in arrays.items() if k.startswith("adam.m/")}
        self.v = {k[len("adam.v/"):]: v for k, v in arrays.items() if k.startswith("adam.v/")}
