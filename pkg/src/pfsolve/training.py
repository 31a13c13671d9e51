"""Unsupervised training loop for the neural power-flow solver.

Batches are sourced per stage (Sobol stream -> LHS -> adaptive pool plus
augmentation buffer), the loss is the physics residual alone, and updates
are AdamW with a cosine-annealed learning rate multiplied by a plateau
back-off factor. Everything is deterministic given the config seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import _kernels as K
from .autodiff import (
    PhysicsContext,
    batch_energies,
    batch_residual_norms,
    loss_and_gradient,
)
from .cases import CaseData
from .model import ArchitectureSpec, NetworkParams, init_network, save_checkpoint
from .sampling import (
    AugmentationBuffer,
    SamplingConfig,
    Stage,
    adaptive_lhs_batch,
    buffer_push,
    buffer_sample_augmented,
    lhs_batch,
    sobol_batch,
    stage_for_epoch,
)

SCHEDULES = ("three_stage", "lhs_only", "random_uniform")


@dataclass
class TrainingConfig:
    epochs: int = 2000
    batch_size: int = 64
    lr_init: float = 5e-4
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    plateau_factor: float = 0.5
    plateau_patience: int = 500
    plateau_rel_eps: float = 0.0
    clip_max_norm: float = 1.0
    smoothing_sd: float = 5e-4  # applied in the adaptive stage only
    p_weight: float = 1.0
    schedule: str = "three_stage"
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    seed: int = 0
    log_period: int = 1
    adaptive_pool_factor: int = 8
    buffer_batch_fraction: float = 0.5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.lr_init > self.lr_min > 0:
            raise ValueError("need lr_init > lr_min > 0")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingConfig":
        doc = dict(doc)
        sampling = doc.pop("sampling", {})
        if isinstance(sampling, dict):
            sampling = SamplingConfig(**sampling)
        return cls(sampling=sampling, **doc)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class OptimizerState:
    """AdamW moment accumulators, one pair per parameter tensor."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams) -> "OptimizerState":
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
        )


@dataclass
class PlateauState:
    best: float = math.inf
    counter: int = 0
    factor: float = 1.0


@dataclass
class TrajectoryRecord:
    epoch: int
    stage: str
    loss: float
    lr: float
    mean_dP: float
    mean_dQ: float
    energy: float
    buffer_size: int


@dataclass
class TrajectoryLog:
    records: list[TrajectoryRecord] = field(default_factory=list)

    def append(self, record: TrajectoryRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("trajectory epochs must be strictly increasing")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# pfsolve {__version__}\n")
            for key, value in (meta or {}).items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "stage", "loss", "lr", "mean_dP", "mean_dQ", "energy", "buffer_size"]
            )
            for r in self.records:
                writer.writerow(
                    [r.epoch, r.stage, repr(r.loss), repr(r.lr), repr(r.mean_dP),
                     repr(r.mean_dQ), repr(r.energy), r.buffer_size]
                )

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        log = cls()
        with open(path) as fh:
            rows = [line for line in fh if not line.startswith("#")]
        for row in csv.DictReader(io.StringIO("".join(rows))):
            log.append(
                TrajectoryRecord(
                    epoch=int(row["epoch"]),
                    stage=row["stage"],
                    loss=float(row["loss"]),
                    lr=float(row["lr"]),
                    mean_dP=float(row["mean_dP"]),
                    mean_dQ=float(row["mean_dQ"]),
                    energy=float(row["energy"]),
                    buffer_size=int(row["buffer_size"]),
                )
            )
        return log


class TrainingDivergedError(RuntimeError):
    """Raised when the loss turns non-finite; carries the last state."""

    def __init__(self, epoch: int, params: NetworkParams, log: TrajectoryLog):
        self.epoch = epoch
        self.params = params
        self.log = log
        super().__init__(f"non-finite loss at epoch {epoch}")


# ---------------------------------------------------------------------------
# Schedulers and update steps

def cosine_lr(t: int, t_max: int, lr_max: float, lr_min: float) -> float:
    return lr_min + (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / t_max)) / 2.0


def plateau_update(
    state: PlateauState, current_loss: float, config: TrainingConfig
) -> float:
    """Halve the factor after `patience` epochs without improvement."""
    improved = not math.isfinite(state.best) or (
        current_loss < state.best - config.plateau_rel_eps * abs(state.best)
    )
    if improved:
        state.best = current_loss
        state.counter = 0
    else:
        state.counter += 1
        if state.counter > config.plateau_patience:
            floor = config.lr_min / config.lr_init
            state.factor = max(state.factor * config.plateau_factor, floor)
            state.counter = 0
    return state.factor


def global_grad_norm(grads: list[np.ndarray]) -> float:
    return math.sqrt(sum(K.sq_norm(g) for g in grads))


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            K.scale_inplace(g, scale)
    return grads


def adamw_step(
    params: NetworkParams,
    grads: list[np.ndarray],
    opt: OptimizerState,
    lr: float,
    weight_decay: float,
) -> None:
    opt.step += 1
    for p, g, m, v in zip(params.arrays(), grads, opt.m, opt.v):
        K.adamw_update(p, g, m, v, opt.step, lr, opt.beta1, opt.beta2, opt.eps, weight_decay)


# ---------------------------------------------------------------------------

_PROBE_SIZE = 64
# The probe batch is carved from a far segment of the Sobol sequence so it
# never collides with the stage-1 training stream (which starts at index 0).
_PROBE_OFFSET = 1 << 20


def train(
    case: CaseData,
    net_spec: ArchitectureSpec,
    config: TrainingConfig,
    checkpoint_dir=None,
    checkpoint_period: int | None = None,
) -> tuple[NetworkParams, TrajectoryLog]:
    """Run the unsupervised training loop; returns trained params and the log."""
    if net_spec.d_in != case.d_in or net_spec.d_out != case.d_out:
        raise ValueError("architecture dimensions do not match the case")
    ctx = PhysicsContext.from_case(case)
    scfg = config.sampling
    d = case.d_in

    params = init_network(net_spec, config.seed)
    opt = OptimizerState.for_params(params)
    plateau = PlateauState()
    buffer = AugmentationBuffer(scfg.buffer_capacity)
    log = TrajectoryLog()

    rng_lhs, rng_adaptive, rng_buffer, rng_smooth, rng_uniform = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(5)
    )
    probe = sobol_batch(d, _PROBE_SIZE, _PROBE_OFFSET, scfg.delta)
    sobol_cursor = 0
    pool = None
    pool_age = 0

    def evaluator(points):
        return batch_residual_norms(params, points, ctx)

    def checkpoint(tag):
        if checkpoint_dir is not None:
            save_checkpoint(
                f"{checkpoint_dir}/checkpoint_{tag}.npz",
                params,
                metadata={"epoch": tag, "config_digest": config.digest()},
            )

    for epoch in range(config.epochs):
        # --- source the batch
        if config.schedule == "three_stage":
            stage = stage_for_epoch(epoch, config.epochs, scfg)
        elif config.schedule == "lhs_only":
            stage = Stage.LHS_REFINE
        else:
            stage = None  # random_uniform baseline

        smoothing = 0.0
        if stage is Stage.SOBOL_EXPLORE:
            batch = sobol_batch(d, config.batch_size, sobol_cursor, scfg.delta)
            sobol_cursor += config.batch_size
        elif stage is Stage.LHS_REFINE:
            batch = lhs_batch(d, config.batch_size, rng_lhs, scfg.delta)
        elif stage is Stage.ADAPTIVE_AUGMENT:
            if pool is None or pool_age >= scfg.adapt_update_period:
                pool = adaptive_lhs_batch(
                    evaluator, d, config.adaptive_pool_factor * config.batch_size,
                    rng_adaptive, scfg,
                )
                pool_age = 0
            pool_age += 1
            n_buf = 0
            if len(buffer) > 0:
                n_buf = int(config.buffer_batch_fraction * config.batch_size)
            picks = rng_adaptive.integers(0, len(pool), size=config.batch_size - n_buf)
            parts = [pool[picks]]
            if n_buf:
                parts.append(buffer_sample_augmented(buffer, n_buf, rng_buffer, scfg))
            batch = np.vstack(parts)
            smoothing = config.smoothing_sd
        else:
            batch = rng_uniform.uniform(
                -scfg.delta, scfg.delta, size=(config.batch_size, d)
            )

        # --- loss, gradient, update
        bundle = loss_and_gradient(
            params, batch, ctx, smoothing, rng_smooth, config.p_weight
        )
        if not math.isfinite(bundle.loss):
            checkpoint("diverged")
            raise TrainingDivergedError(epoch, params, log)

        grads = clip_gradients(bundle.arrays(), config.clip_max_norm)
        factor = plateau_update(plateau, bundle.loss, config)
        lr = cosine_lr(epoch, config.epochs, config.lr_init, config.lr_min) * factor
        assert lr == cosine_lr(epoch, config.epochs, config.lr_init, config.lr_min) * plateau.factor
        adamw_step(params, grads, opt, lr, config.weight_decay)

        if bundle.loss < scfg.buffer_loss_threshold:
            for u in batch:
                buffer_push(buffer, u, bundle.loss, scfg)

        # --- log
        if epoch % config.log_period == 0 or epoch == config.epochs - 1:
            probe_energy = float(np.mean(batch_energies(params, probe, ctx)))
            stage_label = stage.value if stage is not None else "random"
            log.append(
                TrajectoryRecord(
                    epoch=epoch,
                    stage=stage_label,
                    loss=bundle.loss,
                    lr=lr,
                    mean_dP=bundle.mean_abs_dp,
                    mean_dQ=bundle.mean_abs_dq,
                    energy=probe_energy,
                    buffer_size=len(buffer),
                )
            )

        if checkpoint_period and (epoch + 1) % checkpoint_period == 0:
            checkpoint(str(epoch + 1))

    checkpoint("final")
    return params, log
