"""MLP mapping load perturbations to decoded power-flow states.

Raw network output layout (length d_out = n_pv + 2 * n_pq):

    [theta logits for PV buses in index order;
     (V logit, theta logit) interleaved per PQ bus in index order]

Decoding turns logits into physical quantities: PQ magnitudes go through
softplus(z) + 0.5 (positive, near 1), every free angle through
theta_scale * tanh(z); slack and PV magnitudes are pinned to the case
reference values.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .cases import CaseData
from .network import StateVector

CHECKPOINT_FORMAT_VERSION = 1

_ALLOWED_LAYERS = (5, 6, 7, 8)
_MIN_WIDTH, _MAX_WIDTH = 256, 512


@dataclass(frozen=True)
class ArchitectureSpec:
    d_in: int
    d_out: int
    d_hidden: int
    layers: int
    use_layernorm: bool
    theta_scale: float = math.pi / 2
    # Output-slot split; required to build/initialize a network, optional for
    # pure width/depth sizing queries.
    n_pv: int | None = None
    n_pq: int | None = None

    def __post_init__(self):
        if self.layers not in _ALLOWED_LAYERS:
            raise ValueError(f"layers must be one of {_ALLOWED_LAYERS}, got {self.layers}")
        if not _MIN_WIDTH <= self.d_hidden <= _MAX_WIDTH:
            raise ValueError(
                f"d_hidden must be in [{_MIN_WIDTH}, {_MAX_WIDTH}], got {self.d_hidden}"
            )
        if self.theta_scale <= 0:
            raise ValueError("theta_scale must be positive")
        if self.n_pv is not None and self.n_pq is not None:
            if self.d_in != 2 * self.n_pq + self.n_pv:
                raise ValueError("d_in does not match 2*n_pq + n_pv")
            if self.d_out != self.n_pv + 2 * self.n_pq:
                raise ValueError("d_out does not match n_pv + 2*n_pq")


def auto_config(
    d_in: int,
    d_out: int,
    *,
    d_hidden: int | None = None,
    layers: int | None = None,
    use_layernorm: bool | None = None,
    theta_scale: float | None = None,
    n_pv: int | None = None,
    n_pq: int | None = None,
) -> ArchitectureSpec:
    """Size the network from the input dimension; explicit overrides win.

    Width is min(max(2 * d_in, 256), 512); depth steps through 5/6/7/8 at
    d_in thresholds 50/150/300. Layer normalization defaults to on for
    depth >= 7.
    """
    if d_hidden is None:
        d_hidden = min(max(2 * d_in, _MIN_WIDTH), _MAX_WIDTH)
    if layers is None:
        if d_in <= 50:
            layers = 5
        elif d_in <= 150:
            layers = 6
        elif d_in <= 300:
            layers = 7
        else:
            layers = 8
    if use_layernorm is None:
        use_layernorm = layers >= 7
    if theta_scale is None:
        theta_scale = math.pi / 2
    return ArchitectureSpec(
        d_in=d_in,
        d_out=d_out,
        d_hidden=d_hidden,
        layers=layers,
        use_layernorm=use_layernorm,
        theta_scale=theta_scale,
        n_pv=n_pv,
        n_pq=n_pq,
    )


def auto_config_for_case(case: CaseData, **overrides) -> ArchitectureSpec:
    return auto_config(
        case.d_in,
        case.d_out,
        n_pv=len(case.pv_idxs),
        n_pq=len(case.pq_idxs),
        **overrides,
    )


@dataclass
class NetworkParams:
    """Weight matrices are (fan_out, fan_in); layer l computes h @ W.T + b."""

    arch: ArchitectureSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    ln_gains: list[np.ndarray]
    ln_offsets: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """All parameter tensors in a fixed canonical order."""
        return [*self.weights, *self.biases, *self.ln_gains, *self.ln_offsets]

    def array_names(self) -> list[str]:
        return (
            [f"W{i}" for i in range(len(self.weights))]
            + [f"b{i}" for i in range(len(self.biases))]
            + [f"ln_g{i}" for i in range(len(self.ln_gains))]
            + [f"ln_b{i}" for i in range(len(self.ln_offsets))]
        )

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            arch=self.arch,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            ln_gains=[g.copy() for g in self.ln_gains],
            ln_offsets=[o.copy() for o in self.ln_offsets],
        )


def output_bias_pattern(arch: ArchitectureSpec) -> np.ndarray:
    """Physical-prior output bias: 1.0 on PQ-voltage slots, 0 on angle slots."""
    if arch.n_pv is None or arch.n_pq is None:
        raise ValueError("architecture lacks the n_pv/n_pq output-slot split")
    bias = np.zeros(arch.d_out)
    bias[arch.n_pv :: 2] = 1.0  # PQ voltage logits
    return bias


def init_network(arch: ArchitectureSpec, seed: int) -> NetworkParams:
    """Xavier-uniform hidden layers, N(0, 0.1^2) output weights, prior biases."""
    rng = np.random.default_rng(seed)
    dims = [arch.d_in] + [arch.d_hidden] * (arch.layers - 1) + [arch.d_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-2], dims[1:-1]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    weights.append(rng.normal(0.0, 0.1, size=(arch.d_out, dims[-2])))
    biases.append(output_bias_pattern(arch).copy())

    n_hidden = arch.layers - 1
    ln_gains = [np.ones(arch.d_hidden) for _ in range(n_hidden)] if arch.use_layernorm else []
    ln_offsets = [np.zeros(arch.d_hidden) for _ in range(n_hidden)] if arch.use_layernorm else []
    return NetworkParams(arch, weights, biases, ln_gains, ln_offsets)


_LN_EPS = 1e-5


def layernorm(h: np.ndarray, gain: np.ndarray, offset: np.ndarray) -> np.ndarray:
    mu = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    return (h - mu) / np.sqrt(var + _LN_EPS) * gain + offset


def forward(params: NetworkParams, u: np.ndarray) -> np.ndarray:
    """Raw network output for one perturbation vector or a (B, d_in) batch."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    h = np.atleast_2d(u)
    if h.shape[1] != params.arch.d_in:
        raise ValueError(
            f"input has dimension {h.shape[1]}, expected {params.arch.d_in}"
        )
    n_hidden = params.arch.layers - 1
    for l in range(n_hidden):
        h = K.tanh_fwd(h @ params.weights[l].T + params.biases[l])
        if params.arch.use_layernorm:
            h = layernorm(h, params.ln_gains[l], params.ln_offsets[l])
    z = h @ params.weights[-1].T + params.biases[-1]
    return z[0] if single else z


def decode_batch(
    raw: np.ndarray, case: CaseData, theta_scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Raw logits (B, d_out) -> full-state (V, theta) arrays of shape (B, n)."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    nb = raw.shape[0]
    p = len(case.pv_idxs)
    vset = case.voltage_setpoints

    v = np.empty((nb, case.n))
    theta = np.empty((nb, case.n))
    v[:, case.slack_idx] = vset[case.slack_idx]
    theta[:, case.slack_idx] = case.slack_va_rad
    v[:, case.pv_idxs] = vset[case.pv_idxs]
    theta[:, case.pv_idxs] = theta_scale * K.tanh_fwd(raw[:, :p])
    v[:, case.pq_idxs] = K.softplus_fwd(raw[:, p::2]) + 0.5
    theta[:, case.pq_idxs] = theta_scale * K.tanh_fwd(raw[:, p + 1 :: 2])
    return v, theta


def decode(raw: np.ndarray, case: CaseData, theta_scale: float = math.pi / 2) -> StateVector:
    v, theta = decode_batch(raw, case, theta_scale)
    return StateVector(v[0], theta[0])


def solve_nn(params: NetworkParams, case: CaseData, u: np.ndarray) -> StateVector:
    """One forward pass plus decoding: the neural power-flow solution."""
    return decode(forward(params, u), case, params.arch.theta_scale)


# ---------------------------------------------------------------------------
# Checkpoints: a single .npz holding the parameter arrays plus a JSON header.

def save_checkpoint(path, params: NetworkParams, metadata: dict | None = None) -> None:
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": asdict(params.arch),
        "metadata": metadata or {},
    }
    arrays = dict(zip(params.array_names(), params.arrays()))
    np.savez(path, __header__=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    with np.load(path) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint format {header.get('format_version')!r}"
            )
        arch = ArchitectureSpec(**header["arch"])
        n_lin = arch.layers
        weights = [data[f"W{i}"] for i in range(n_lin)]
        biases = [data[f"b{i}"] for i in range(n_lin)]
        n_ln = n_lin - 1 if arch.use_layernorm else 0
        ln_gains = [data[f"ln_g{i}"] for i in range(n_ln)]
        ln_offsets = [data[f"ln_b{i}"] for i in range(n_ln)]
    params = NetworkParams(arch, weights, biases, ln_gains, ln_offsets)
    return params, header["metadata"]
