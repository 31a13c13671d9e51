"""Command-line entry point.

Subcommands: info, solve, train, eval, ablate, export-figures-data.
Exit codes: 0 success, 2 bad path, 3 validation/config failure, 4 Newton
non-convergence in `solve`. Every artifact lands under --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cases import ParseError, SchemaError, ValidationError, load_case
from .evaluation import (
    EvalReport,
    ablation_sampling,
    evaluate,
    export_figure_data,
    write_comparison_csv,
)
from .model import auto_config_for_case, load_checkpoint, save_checkpoint
from .network import spec_injections
from .newton import NewtonOptions, solve_newton
from .training import TrainingConfig, TrajectoryLog, train

EXIT_OK = 0
EXIT_BAD_PATH = 2
EXIT_VALIDATION = 3
EXIT_NO_CONVERGENCE = 4


def _fail(code: int, kind: str, message: str) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def _parse_set_overrides(pairs: list[str]) -> dict:
    """Turn --set a.b=c strings into a nested dict; values parse as JSON."""
    out: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


def _deep_update(base: dict, overrides: dict) -> dict:
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _load_config(args) -> tuple[TrainingConfig, dict]:
    doc: dict = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    _deep_update(doc, _parse_set_overrides(args.set or []))
    if args.seed is not None:
        doc["seed"] = args.seed
    arch_overrides = doc.pop("arch", {})
    config = TrainingConfig.from_dict(doc)
    return config, arch_overrides


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_info(args) -> int:
    case = load_case(args.case)
    config, arch_overrides = _load_config(args)
    arch = auto_config_for_case(case, **arch_overrides)
    print(f"case: {case.name}")
    print(f"buses: {case.n} (slack=1, PV={len(case.pv_idxs)}, PQ={len(case.pq_idxs)})")
    print(f"branches: {len(case.branches)}")
    print(f"generators: {len(case.gens)}")
    print(f"d_in={case.d_in} d_out={case.d_out}")
    print(
        f"auto_config: d_hidden={arch.d_hidden} layers={arch.layers} "
        f"layernorm={arch.use_layernorm}"
    )
    print(f"config_digest: {config.digest()}")
    return EXIT_OK


def cmd_solve(args) -> int:
    case = load_case(args.case)
    config, _ = _load_config(args)
    out = _out_dir(args)
    result = solve_newton(case, spec_injections(case), NewtonOptions())
    if not result.converged:
        history = ",".join(f"{h:.3e}" for h in result.mismatch_history)
        print(
            f"error: newton-no-convergence: iterations={result.iterations} "
            f"final_mismatch={result.final_mismatch_inf:.3e} history={history}",
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE
    path = out / "solution.csv"
    with open(path, "w") as fh:
        fh.write(f"# pfsolve {__version__}\n")
        fh.write(f"# config_digest={config.digest()}\n")
        fh.write("bus_id,Vm_pu,Va_deg\n")
        for bus, vm, va in zip(
            case.buses, result.state.V, np.degrees(result.state.theta)
        ):
            fh.write(f"{bus.id},{vm!r},{va!r}\n")
    print(f"solved {case.name} in {result.iterations} iterations -> {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    case = load_case(args.case)
    config, arch_overrides = _load_config(args)
    out = _out_dir(args)
    arch = auto_config_for_case(case, **arch_overrides)
    params, log = train(case, arch, config)
    digest = config.digest()
    save_checkpoint(
        out / "checkpoint.npz",
        params,
        metadata={"case": case.name, "config_digest": digest, "seed": config.seed},
    )
    log.to_csv(out / "trajectory.csv", meta={"config_digest": digest})
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1))
    print(
        f"trained {config.epochs} epochs on {case.name}; "
        f"final loss {log.records[-1].loss:.3e} -> {out}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    case = load_case(args.case)
    out = _out_dir(args)
    ckpt = args.checkpoint or str(out / "checkpoint.npz")
    params, _meta = load_checkpoint(ckpt)
    report = evaluate(params, case)
    (out / "report.json").write_text(report.to_json())
    write_comparison_csv(report, out / "comparison.csv", case=case)
    print(
        f"evaluated {case.name}: residual_norm={report.residual_norm:.3e} "
        f"dV_max={report.dv_max} -> {out / 'report.json'}"
    )
    if args.benchmark:
        import numpy as np

        from .evaluation import batch_benchmark
        from .sampling import lhs_batch

        config, _ = _load_config(args)
        scenarios = lhs_batch(
            case.d_in, args.benchmark,
            np.random.default_rng(config.seed), config.sampling.delta,
        )
        result = batch_benchmark(params, case, scenarios, threads=args.threads)
        (out / "benchmark.json").write_text(json.dumps(result.to_dict(), indent=1))
        print(
            f"benchmark k={result.k}: NN {result.nn_batch_time_s * 1e3:.1f} ms, "
            f"Newton {result.newton_total_time_s * 1e3:.1f} ms "
            f"(threads={result.threads})"
        )
    return EXIT_OK


def cmd_ablate(args) -> int:
    case = load_case(args.case)
    config, arch_overrides = _load_config(args)
    out = _out_dir(args)
    arch = auto_config_for_case(case, **arch_overrides)
    seeds = [int(s) for s in (args.seeds or "0,1,2").split(",")]
    table = ablation_sampling(case, arch, config, seeds)
    table.to_csv(out / "ablation.csv")
    summary = {
        strategy: {
            "median_final_loss": table.median_final_loss(strategy),
            "median_residual_norm": table.median_residual_norm(strategy),
        }
        for strategy in sorted({r.strategy for r in table.rows})
    }
    (out / "ablation.json").write_text(json.dumps(summary, indent=1))
    for strategy, stats in summary.items():
        print(f"{strategy}: median final loss {stats['median_final_loss']:.3e}")
    return EXIT_OK


def cmd_export_figures_data(args) -> int:
    out = _out_dir(args)
    config, _ = _load_config(args)
    log_path = out / "trajectory.csv"
    report_path = out / "report.json"
    log = TrajectoryLog.from_csv(log_path) if log_path.exists() else None
    report = (
        EvalReport.from_json(report_path.read_text()) if report_path.exists() else None
    )
    if log is None and report is None:
        return _fail(
            EXIT_BAD_PATH, "missing-input",
            f"neither {log_path} nor {report_path} exists",
        )
    case = load_case(args.case) if args.case else None
    paths = export_figure_data(
        log, report, out / "figures_data", case=case, config_digest=config.digest()
    )
    print(f"exported figure data -> {paths['trajectory'].parent}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfsolve",
        description="Newton-Raphson power flow plus a label-free neural solver",
    )
    parser.add_argument("--version", action="version", version=f"pfsolve {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, case_required=True):
        p.add_argument("--case", required=case_required, help="case file or bundled name")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (default cwd)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--threads", type=int,
            default=int(os.environ.get("PFSOLVE_THREADS", "1")),
            help="cap for parallel fan-out",
        )
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override, e.g. --set sampling.delta=0.2")

    common(sub.add_parser("info", help="print case summary and sizing"))
    common(sub.add_parser("solve", help="run the Newton reference solver"))
    common(sub.add_parser("train", help="train the neural solver"))
    p_eval = sub.add_parser("eval", help="compare a checkpoint against Newton")
    common(p_eval)
    p_eval.add_argument("--checkpoint", help="path to checkpoint.npz")
    p_eval.add_argument(
        "--benchmark", type=int, metavar="K", default=0,
        help="also time batched NN inference vs K independent Newton solves",
    )
    p_abl = sub.add_parser("ablate", help="sampling-strategy ablation")
    common(p_abl)
    p_abl.add_argument("--seeds", help="comma-separated seeds (default 0,1,2)")
    common(
        sub.add_parser(
            "export-figures-data", help="re-emit figure CSVs from stored logs"
        ),
        case_required=False,
    )
    return parser


_COMMANDS = {
    "info": cmd_info,
    "solve": cmd_solve,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "export-figures-data": cmd_export_figures_data,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        return _fail(EXIT_BAD_PATH, "bad-path", str(exc))
    except (ParseError, SchemaError, ValidationError, ValueError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))


if __name__ == "__main__":
    sys.exit(main())
