"""Adam and plain gradient descent over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DivergenceError(FloatingPointError):
    """Raised when a non-finite gradient or loss shows up during training."""


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, shape, **hyper):
        return cls(np.zeros(shape), np.zeros(shape), **hyper)


def adam_step(params, grads, state):
    """One bias-corrected Adam update. Returns (new_params, state); state is updated in place."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError(f"adam_step shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("non-finite gradient passed to adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    return params - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps), state


class Adam:
    """Adam over a list of Tensors; reads ``.grad`` and writes ``.data``."""

    def __init__(self, params, alpha=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.states = [AdamState.fresh(p.shape, alpha=alpha, beta1=beta1, beta2=beta2, eps=eps)
                       for p in self.params]

    def step(self):
        for p, s in zip(self.params, self.states):
            g = p.grad if p.grad is not None else np.zeros(p.shape)
            p.data, _ = adam_step(p.data, g, s)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class SGD:
    """The bare ``phi <- phi - alpha * grad`` step."""

    def __init__(self, params, alpha=2e-4):
        self.params = list(params)
        self.alpha = alpha

    def step(self):
        for p in self.params:
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError("non-finite gradient in SGD step")
            p.data = p.data - self.alpha * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def make_optimizer(kind, params, alpha):
    if kind == "adam":
        return Adam(params, alpha=alpha)
    if kind == "sgd":
        return SGD(params, alpha=alpha)
    raise ValueError(f"unknown optimizer {kind!r}")
