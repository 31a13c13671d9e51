"""Pure numpy implementations of the hot elementwise kernels.

Semantics here define the contract; the compiled backend in ``_cy.pyx``
must match it (up to floating-point rounding of transcendental functions).
"""

from __future__ import annotations

import numpy as np


def tanh_fwd(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_bwd(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient through tanh given its output y = tanh(x)."""
    return grad_out * (1.0 - y * y)


def softplus_fwd(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) computed stably for large |x|."""
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def softplus_bwd(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient through softplus: grad * sigmoid(x), stable at both tails."""
    pos = x >= 0
    sig = np.empty_like(x)
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)
    return grad_out * sig


def sq_norm(x: np.ndarray) -> float:
    x = x.ravel()
    return float(x @ x)


def scale_inplace(x: np.ndarray, s: float) -> None:
    x *= s


def adamw_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
) -> None:
    """One decoupled-weight-decay Adam step, in place. `step` is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param)
