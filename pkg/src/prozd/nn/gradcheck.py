"""Central finite-difference checks for reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from prozd.nn.params import Parameters
from prozd.nn.tensor import Tensor

DEFAULT_EPS = 1e-5


def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place and restoring it."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        hi = f()
        x[i] = orig - eps
        lo = f()
        x[i] = orig
        grad[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(num / den)


def check_parameters(loss_fn: Callable[[], Tensor], params: Parameters, eps: float = DEFAULT_EPS) -> dict[str, float]:
    """Relative error between analytic and numerical gradients for each parameter."""
    params.zero_grad()
    loss_fn().backward()
    analytic = params.grads()
    out = {}
    for name, t in params.items():
        numeric = numerical_gradient(lambda: float(loss_fn().data), t.data, eps)
        out[name] = relative_error(analytic[name], numeric)
    return out


def check_inputs(loss_fn: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = DEFAULT_EPS) -> float:
    """Relative error of the gradient with respect to an input array."""
    xt = Tensor(x.copy(), requires_grad=True)
    loss_fn(xt).backward()
    probe = x.copy()
    numeric = numerical_gradient(lambda: float(loss_fn(Tensor(probe)).data), probe, eps)
    return relative_error(xt.grad, numeric)
