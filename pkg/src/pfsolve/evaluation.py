"""Evaluation harness: metrics, benchmarks, ablation, and figure-data export.

The CSV/JSON files written by :func:`export_figure_data` are the sole
contract with the plotting component, so their schemas are fixed: column
order is stable and floats are written with full round-trip precision.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import median

import numpy as np

from . import __version__
from .autodiff import PhysicsContext, batch_residual_norms
from .cases import CaseData
from .model import ArchitectureSpec, NetworkParams, solve_nn
from .network import apply_perturbation, mismatch, residual_norm, spec_injections
from .newton import NewtonOptions, solve_newton
from .training import TrainingConfig, TrajectoryLog, train


def wrap_angle_deg(d: np.ndarray) -> np.ndarray:
    """Wrap angle differences (degrees) into (-180, 180]."""
    w = (np.asarray(d, dtype=float) + 180.0) % 360.0 - 180.0
    return np.where(w == -180.0, 180.0, w)


def angle_differences_deg(
    theta_a_rad: np.ndarray, theta_b_rad: np.ndarray, slack_idx: int
) -> np.ndarray:
    """Slack-aligned per-bus angle differences in degrees.

    Both angle vectors are referenced to their own slack entry before
    differencing, so adding a constant to either side changes nothing.
    """
    a = np.degrees(theta_a_rad - theta_a_rad[slack_idx])
    b = np.degrees(theta_b_rad - theta_b_rad[slack_idx])
    return wrap_angle_deg(a - b)


@dataclass
class EvalReport:
    case_name: str
    u: list[float]
    residual_norm: float
    newton_converged: bool
    newton_iterations: int
    newton_time_s: float
    nn_inference_time_s: float
    v_nn: list[float]
    theta_nn_deg: list[float]
    v_newton: list[float] | None = None
    theta_newton_deg: list[float] | None = None
    dv_max: float | None = None
    dv_mean: float | None = None
    dtheta_max_deg: float | None = None
    dtheta_mean_deg: float | None = None

    def to_json(self) -> str:
        doc = {"pfsolve_version": __version__, **asdict(self)}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        doc.pop("pfsolve_version", None)
        return cls(**doc)


def evaluate(
    params: NetworkParams,
    case: CaseData,
    u: np.ndarray | None = None,
    opts: NewtonOptions | None = None,
    timing_reps: int = 100,
) -> EvalReport:
    """Compare the neural solution against Newton for one load perturbation."""
    if u is None:
        u = np.zeros(case.d_in)
    u = np.asarray(u, dtype=float)
    spec_u = apply_perturbation(spec_injections(case), u, case)

    t0 = time.perf_counter()
    newton = solve_newton(case, spec_u, opts)
    newton_time = time.perf_counter() - t0

    nn_state = solve_nn(params, case, u)
    times = []
    for _ in range(max(1, timing_reps)):
        t0 = time.perf_counter()
        solve_nn(params, case, u)
        times.append(time.perf_counter() - t0)

    res = mismatch(nn_state, spec_u, case)
    report = EvalReport(
        case_name=case.name,
        u=u.tolist(),
        residual_norm=residual_norm(res, case),
        newton_converged=newton.converged,
        newton_iterations=newton.iterations,
        newton_time_s=newton_time,
        nn_inference_time_s=float(median(times)),
        v_nn=nn_state.V.tolist(),
        theta_nn_deg=np.degrees(nn_state.theta).tolist(),
    )
    if newton.converged:
        dv = np.abs(nn_state.V - newton.state.V)
        dth = np.abs(
            angle_differences_deg(nn_state.theta, newton.state.theta, case.slack_idx)
        )
        report = replace(
            report,
            v_newton=newton.state.V.tolist(),
            theta_newton_deg=np.degrees(newton.state.theta).tolist(),
            dv_max=float(dv.max()),
            dv_mean=float(dv.mean()),
            dtheta_max_deg=float(dth.max()),
            dtheta_mean_deg=float(dth.mean()),
        )
    return report


@dataclass
class BenchmarkResult:
    """Wall-clock comparison; informational only, never asserted on."""

    k: int
    nn_batch_time_s: float = 0.0
    newton_total_time_s: float = 0.0
    newton_converged: int = 0
    threads: int = 1
    speedup: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def batch_benchmark(
    params: NetworkParams, case: CaseData, scenarios: np.ndarray, threads: int = 1
) -> BenchmarkResult:
    """Batched NN inference vs independent Newton solves over k scenarios.

    `threads` caps the scenario-parallel fan-out of the Newton side; the
    default keeps it sequential, matching the batch-vs-iterative comparison.
    """
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    k = scenarios.shape[0] if scenarios.size else 0
    if k == 0:
        return BenchmarkResult(k=0, threads=threads)

    from .model import decode_batch, forward

    forward(params, scenarios[:1])  # warm-up
    t0 = time.perf_counter()
    decode_batch(forward(params, scenarios), case, params.arch.theta_scale)
    nn_time = time.perf_counter() - t0

    base = spec_injections(case)
    specs = [apply_perturbation(base, u, case) for u in scenarios]
    t0 = time.perf_counter()
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: solve_newton(case, s), specs))
    else:
        results = [solve_newton(case, s) for s in specs]
    newton_time = time.perf_counter() - t0
    converged = sum(int(r.converged) for r in results)

    return BenchmarkResult(
        k=k,
        nn_batch_time_s=nn_time,
        newton_total_time_s=newton_time,
        newton_converged=converged,
        threads=threads,
        speedup=newton_time / nn_time if nn_time > 0 else None,
    )


_ABLATION_TEST_SEED = 99


@dataclass
class AblationRow:
    strategy: str
    seed: int
    final_loss: float  # physics loss on the shared held-out test set
    final_train_loss: float  # last training-batch loss (strategy-dependent batch)
    residual_norm: float  # mean residual norm over the test set


@dataclass
class AblationTable:
    rows: list[AblationRow] = field(default_factory=list)

    def median_final_loss(self, strategy: str) -> float:
        return median(r.final_loss for r in self.rows if r.strategy == strategy)

    def median_residual_norm(self, strategy: str) -> float:
        return median(r.residual_norm for r in self.rows if r.strategy == strategy)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["strategy", "seed", "final_loss", "final_train_loss", "residual_norm"]
            )
            for r in self.rows:
                writer.writerow(
                    [r.strategy, r.seed, repr(r.final_loss),
                     repr(r.final_train_loss), repr(r.residual_norm)]
                )


def ablation_sampling(
    case: CaseData,
    net_spec: ArchitectureSpec,
    config: TrainingConfig,
    seeds: list[int],
    strategies: tuple[str, ...] = ("three_stage", "random_uniform"),
) -> AblationTable:
    """Train once per (strategy, seed) and tabulate final losses.

    Strategies are compared on a held-out test set shared by every run (the
    last training batch differs between strategies by construction -- the
    adaptive stage deliberately fills it with the hardest samples -- so its
    loss is not a like-for-like measure). The test set is a fixed 1024-point
    Latin hypercube drawn with a dedicated seed, giving a low-variance
    estimate of the expected physics loss over the perturbation box.
    """
    from .autodiff import loss as physics_loss
    from .sampling import lhs_batch

    table = AblationTable()
    ctx = PhysicsContext.from_case(case)
    test_set = lhs_batch(
        case.d_in, 1024, np.random.default_rng(_ABLATION_TEST_SEED),
        config.sampling.delta,
    )
    for strategy in strategies:
        for seed in seeds:
            run_cfg = replace(config, schedule=strategy, seed=seed)
            params, log = train(case, net_spec, run_cfg)
            test_loss = physics_loss(params, test_set, ctx, p_weight=config.p_weight)
            rn = float(batch_residual_norms(params, test_set, ctx).mean())
            table.rows.append(
                AblationRow(
                    strategy=strategy,
                    seed=seed,
                    final_loss=test_loss,
                    final_train_loss=log.records[-1].loss,
                    residual_norm=rn,
                )
            )
    return table


# ---------------------------------------------------------------------------
# Figure-data export (the contract consumed by the plotting component)

TRAJECTORY_COLUMNS = ["epoch", "stage", "mean_dP", "mean_dQ", "energy", "loss", "lr"]
COMPARISON_COLUMNS = ["bus", "V_nn", "V_newton", "theta_nn_deg", "theta_newton_deg"]


def write_comparison_csv(
    report: EvalReport | None, path, case: CaseData | None = None
) -> None:
    """One row per bus comparing NN and Newton solutions (header-only if
    the report is absent or Newton failed)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_COLUMNS)
        if report is None or report.v_newton is None:
            return
        bus_ids = (
            [b.id for b in case.buses]
            if case is not None
            else list(range(1, len(report.v_nn) + 1))
        )
        for i, bus in enumerate(bus_ids):
            writer.writerow(
                [bus, repr(report.v_nn[i]), repr(report.v_newton[i]),
                 repr(report.theta_nn_deg[i]), repr(report.theta_newton_deg[i])]
            )


def export_figure_data(
    log: TrajectoryLog | None,
    report: EvalReport | None,
    out_dir,
    case: CaseData | None = None,
    config_digest: str = "",
) -> dict[str, Path]:
    """Write trajectory.csv, comparison.csv and meta.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out / "trajectory.csv",
        "comparison": out / "comparison.csv",
        "meta": out / "meta.json",
    }

    with open(paths["trajectory"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for r in log.records if log is not None else []:
            writer.writerow(
                [r.epoch, r.stage, repr(r.mean_dP), repr(r.mean_dQ),
                 repr(r.energy), repr(r.loss), repr(r.lr)]
            )

    write_comparison_csv(report, paths["comparison"], case=case)

    meta = {
        "pfsolve_version": __version__,
        "case": (case.name if case is not None else
                 report.case_name if report is not None else ""),
        "config_digest": config_digest,
        "n_records": len(log) if log is not None else 0,
    }
    paths["meta"].write_text(json.dumps(meta, indent=1))
    return paths


def read_trajectory_csv(path) -> list[dict]:
    """Re-parse an exported trajectory.csv into typed records."""
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    out = []
    for row in csv.DictReader(io.StringIO("".join(rows))):
        rec = {"epoch": int(row["epoch"]), "stage": row["stage"]}
        for key in ("mean_dP", "mean_dQ", "energy", "loss", "lr"):
            rec[key] = float(row[key])
        out.append(rec)
    return out


def read_comparison_csv(path) -> list[dict]:
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    out = []
    for row in csv.DictReader(io.StringIO("".join(rows))):
        out.append(
            {
                "bus": int(row["bus"]),
                "V_nn": float(row["V_nn"]),
                "V_newton": float(row["V_newton"]),
                "theta_nn_deg": float(row["theta_nn_deg"]),
                "theta_newton_deg": float(row["theta_newton_deg"]),
            }
        )
    return out
