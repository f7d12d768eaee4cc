"""He initialization, Adam, and the stepwise-halving learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def he_init(shape, fan_in, rng, dtype=np.float32):
    """Zero-mean Gaussian array with variance 2 / fan_in.

    The recommended initializer for ReLU-family networks; biases are
    initialized separately (zeros, except modulation-scale biases).
    """
    if fan_in <= 0:
        raise ValueError(f"he_init: fan_in must be positive, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(size=shape) * std).astype(dtype)


@dataclass(frozen=True)
class Schedule:
    """lr(t) = initial_lr * 0.5 ** min(t // halve_every, num_halvings)."""

    initial_lr: float = 1e-4
    halve_every: int = 100_000
    num_halvings: int = 4


def lr_at(sched, t):
    if t < 0:
        raise ValueError(f"lr_at: iteration must be >= 0, got {t}")
    if sched.num_halvings <= 0 or sched.halve_every <= 0:
        return sched.initial_lr
    halvings = min(t // sched.halve_every, sched.num_halvings)
    return sched.initial_lr * 0.5 ** halvings


class Adam:
    """Bias-corrected Adam over a named parameter store.

    Moment buffers are keyed by parameter name so the state can be
    checkpointed and restored alongside the weights.
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()
                  if p.requires_grad}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()
                  if p.requires_grad}

    def step(self, params, lr):
        """One update over every trainable parameter; consumes .grad buffers."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name in self.m:
            p = params[name]
            if p.grad is None:
                raise RuntimeError(f"adam: parameter {name!r} has no gradient")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state_arrays(self):
        """Flat name -> array view of the state, for checkpointing."""
        out = {"adam.step": np.array([[[[float(self.step_count)]]]], dtype=np.float32)}
        for name, arr in self.m.items():
            out[f"adam.m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"adam.v.{name}"] = arr
        return out

    def load_state_arrays(self, arrays):
        self.step_count = int(round(float(arrays["adam.step"][0, 0, 0, 0])))
        for name in self.m:
            self.m[name] = arrays[f"adam.m.{name}"].astype(self.m[name].dtype)
            self.v[name] = arrays[f"adam.v.{name}"].astype(self.v[name].dtype)
