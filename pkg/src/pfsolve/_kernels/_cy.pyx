# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused C loops for the training hot path.

Only the kernels where a single fused pass beats numpy live here: the
activation/decode backward products and the AdamW update, which numpy has to
express as chains of whole-array temporaries. The transcendental forward
maps (tanh, softplus) stay on numpy's SIMD implementations -- a scalar libm
loop is several times slower, measured in benchmarks/bench_kernels.py.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

from ._np import softplus_fwd, sq_norm, tanh_fwd  # numpy SIMD wins these


def tanh_bwd(grad_out, y):
    """grad_out * (1 - y^2) in one fused pass."""
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    out = np.empty_like(grad_out)
    cdef double[::1] gv = grad_out.ravel()
    cdef double[::1] yv = y.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    for i in range(n):
        ov[i] = gv[i] * (1.0 - yv[i] * yv[i])
    return out


def softplus_bwd(grad_out, x):
    """grad_out * sigmoid(x), stable at both tails, one fused pass."""
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(grad_out)
    cdef double[::1] gv = grad_out.ravel()
    cdef double[::1] xv = x.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    cdef double xi, ex
    for i in range(n):
        xi = xv[i]
        if xi >= 0.0:
            ov[i] = gv[i] / (1.0 + exp(-xi))
        else:
            ex = exp(xi)
            ov[i] = gv[i] * ex / (1.0 + ex)
    return out


def scale_inplace(x, double s):
    if not x.flags.c_contiguous:
        raise ValueError("in-place kernel requires a C-contiguous array")
    cdef double[::1] xv = x.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    for i in range(n):
        xv[i] *= s


def adamw_update(
    param,
    grad,
    m,
    v,
    Py_ssize_t step,
    double lr,
    double beta1,
    double beta2,
    double eps,
    double weight_decay,
):
    """One decoupled-weight-decay Adam step, fused and in place."""
    for arr in (param, m, v):
        if not arr.flags.c_contiguous:
            raise ValueError("in-place kernel requires C-contiguous arrays")
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    cdef double[::1] pv = param.ravel()
    cdef double[::1] gv = grad.ravel()
    cdef double[::1] mv = m.ravel()
    cdef double[::1] vv = v.ravel()
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double bc1 = 1.0 - beta1**step
    cdef double bc2 = 1.0 - beta2**step
    cdef double gi, m_hat, v_hat
    for i in range(n):
        gi = gv[i]
        mv[i] = beta1 * mv[i] + (1.0 - beta1) * gi
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * gi * gi
        m_hat = mv[i] / bc1
        v_hat = vv[i] / bc2
        pv[i] -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * pv[i])
