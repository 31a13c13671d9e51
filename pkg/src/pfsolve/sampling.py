"""Perturbation-space samplers and the three-stage training schedule.

Stages split the epoch budget 30/40/30: quasi-random Sobol exploration,
Latin hypercube refinement, then residual-guided adaptive LHS with an
online augmentation buffer. All emitted points live in the box
[-delta, delta]^dim (clipped where noise is added).
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import qmc

_SOBOL_MAX_DIM = 21201  # direction-number table limit of the generator


@dataclass
class SamplingConfig:
    delta: float = 0.10
    stage_fractions: tuple[float, float, float] = (0.30, 0.40, 0.30)
    adapt_update_period: int = 200
    top_fraction: float = 0.25
    local_sd: float = 0.1
    aug_sd_factor: float = 0.15
    buffer_capacity: int = 4096
    buffer_loss_threshold: float = 5e-3
    # When set, local densification noise uses the literal sd instead of
    # sd * delta (the paper-noted alternative reading).
    literal_local_sd: bool = False

    def __post_init__(self):
        if abs(sum(self.stage_fractions) - 1.0) > 1e-12:
            raise ValueError("stage fractions must sum to 1")
        if not 0.0 < self.top_fraction < 1.0:
            raise ValueError("top_fraction must lie in (0, 1)")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


class Stage(Enum):
    SOBOL_EXPLORE = "sobol"
    LHS_REFINE = "lhs"
    ADAPTIVE_AUGMENT = "adaptive"


def stage_for_epoch(
    epoch: int, total_epochs: int, config: SamplingConfig | None = None
) -> Stage:
    f1, f2, _ = (config or SamplingConfig()).stage_fractions
    frac = epoch / total_epochs
    if frac < f1:
        return Stage.SOBOL_EXPLORE
    if frac < f1 + f2:
        return Stage.LHS_REFINE
    return Stage.ADAPTIVE_AUGMENT


def sobol_batch(dim: int, n: int, index_offset: int, delta: float) -> np.ndarray:
    """Points index_offset .. index_offset+n of the unscrambled Sobol sequence,
    affinely mapped from [0, 1)^dim to [-delta, delta]^dim."""
    if not 1 <= dim <= _SOBOL_MAX_DIM:
        raise ValueError(f"Sobol dimension must be in [1, {_SOBOL_MAX_DIM}], got {dim}")
    engine = qmc.Sobol(d=dim, scramble=False)
    if index_offset:
        engine.fast_forward(index_offset)
    with warnings.catch_warnings():
        # The generator warns about balance when n is not a power of two;
        # sequential batches are intentional here.
        warnings.simplefilter("ignore", UserWarning)
        pts = engine.random(n)
    return pts * (2.0 * delta) - delta


def lhs_batch(dim: int, n: int, rng: np.random.Generator, delta: float) -> np.ndarray:
    """Latin hypercube: per dimension, one uniform point in each of n strata."""
    out = np.empty((n, dim))
    for d in range(dim):
        perm = rng.permutation(n)
        out[:, d] = (perm + rng.random(n)) / n
    return out * (2.0 * delta) - delta


def adaptive_lhs_batch(
    evaluator,
    dim: int,
    n: int,
    rng: np.random.Generator,
    config: SamplingConfig,
) -> np.ndarray:
    """Residual-guided sampling: LHS exploration plus local densification.

    Half the budget (rounded up) goes to fresh LHS points; `evaluator` maps
    that (m, dim) array to per-point residual norms, the top quarter by
    residual (ties broken by lower index) become centers, and the remaining
    budget is Gaussian noise around the centers cycled round-robin, clipped
    to the box.
    """
    if n < 2:
        raise ValueError("adaptive sampling needs n >= 2")
    n_init = math.ceil(n / 2)
    initial = lhs_batch(dim, n_init, rng, config.delta)
    u_vals = np.asarray(evaluator(initial), dtype=float)
    if u_vals.shape != (n_init,):
        raise ValueError("evaluator must return one residual norm per point")

    n_centers = math.ceil(config.top_fraction * n_init)
    order = np.argsort(-u_vals, kind="stable")
    centers = initial[order[:n_centers]]

    n_local = n - n_init
    sd = config.local_sd if config.literal_local_sd else config.local_sd * config.delta
    noise = rng.normal(0.0, sd, size=(n_local, dim))
    local = centers[np.arange(n_local) % n_centers] + noise
    np.clip(local, -config.delta, config.delta, out=local)
    return np.vstack([initial, local])


def select_top_residual_indices(u_vals: np.ndarray, count: int) -> np.ndarray:
    """Indices of the `count` highest residuals, ties broken by lower index."""
    return np.argsort(-np.asarray(u_vals), kind="stable")[:count]


@dataclass
class AugmentationBuffer:
    """FIFO ring of well-fitted perturbation vectors."""

    capacity: int
    _store: deque = field(init=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._store = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._store)

    def contents(self) -> np.ndarray:
        return np.array(self._store)


def buffer_push(
    buffer: AugmentationBuffer,
    u: np.ndarray,
    observed_loss: float,
    config: SamplingConfig,
) -> AugmentationBuffer:
    """Insert u iff its loss is strictly below the threshold; FIFO eviction."""
    if observed_loss < config.buffer_loss_threshold:
        buffer._store.append(np.array(u, dtype=float))
    return buffer


def buffer_sample_augmented(
    buffer: AugmentationBuffer,
    k: int,
    rng: np.random.Generator,
    config: SamplingConfig,
) -> np.ndarray:
    """k uniform draws (with replacement) plus N(0, (aug_sd_factor*delta)^2)."""
    if len(buffer) == 0:
        raise ValueError("augmentation buffer is empty")
    stored = buffer.contents()
    picks = stored[rng.integers(0, len(buffer), size=k)]
    sd = config.aug_sd_factor * config.delta
    out = picks + rng.normal(0.0, sd, size=picks.shape)
    np.clip(out, -config.delta, config.delta, out=out)
    return out
