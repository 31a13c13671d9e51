"""Evaluation harness: metrics, benchmark guards, ablation smoke, exports."""

import json

import numpy as np
import pytest

from pfsolve.evaluation import (
    EvalReport,
    angle_differences_deg,
    batch_benchmark,
    ablation_sampling,
    evaluate,
    export_figure_data,
    read_comparison_csv,
    read_trajectory_csv,
    wrap_angle_deg,
    write_comparison_csv,
)
from pfsolve.model import auto_config_for_case, init_network
from pfsolve.network import spec_injections
from pfsolve.newton import solve_newton
from pfsolve.training import TrainingConfig, TrajectoryLog, TrajectoryRecord

from conftest import constant_output_params, encode_state


def newton_stub_params(case):
    solution = solve_newton(case, spec_injections(case)).state
    arch = auto_config_for_case(case)
    z = encode_state(solution, case, arch.theta_scale)
    return constant_output_params(z, case)


class TestAngleMath:
    def test_wrap_into_half_open_interval(self):
        assert wrap_angle_deg(181.0) == pytest.approx(-179.0)
        assert wrap_angle_deg(-181.0) == pytest.approx(179.0)
        assert wrap_angle_deg(-180.0) == 180.0
        assert wrap_angle_deg(180.0) == 180.0
        assert wrap_angle_deg(540.0) == 180.0

    def test_slack_alignment_shift_invariance(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, 10)
        b = rng.uniform(-1, 1, 10)
        base = angle_differences_deg(a, b, slack_idx=3)
        shifted = angle_differences_deg(a + 0.7, b, slack_idx=3)
        assert np.allclose(base, shifted, atol=1e-12)
        assert base[3] == 0.0


class TestEvaluate:
    def test_oracle_stub_zero_differences(self, case14):
        report = evaluate(newton_stub_params(case14), case14, timing_reps=3)
        assert report.newton_converged
        assert report.dv_max <= 1e-12
        assert report.dtheta_max_deg <= 1e-12
        assert report.residual_norm <= 1e-6

    def test_oracle_stub_on_larger_case(self, case39):
        report = evaluate(newton_stub_params(case39), case39, timing_reps=3)
        assert report.dv_max <= 1e-12
        assert report.dtheta_max_deg <= 1e-12

    def test_untrained_model_sanity_floor(self, case14):
        params = init_network(auto_config_for_case(case14), 0)
        report = evaluate(params, case14, timing_reps=3)
        assert report.residual_norm > 0.1

    def test_maxima_bound_means(self, case14, mini_trained14):
        params, _ = mini_trained14
        report = evaluate(params, case14, timing_reps=3)
        assert report.dv_max >= report.dv_mean >= 0.0
        assert report.dtheta_max_deg >= report.dtheta_mean_deg >= 0.0

    def test_report_json_round_trip(self, case14):
        report = evaluate(newton_stub_params(case14), case14, timing_reps=3)
        again = EvalReport.from_json(report.to_json())
        assert again == report


class TestBatchBenchmark:
    def test_empty_guard(self, case14):
        params = init_network(auto_config_for_case(case14), 0)
        result = batch_benchmark(params, case14, np.zeros((0, case14.d_in)))
        assert result.k == 0
        assert result.speedup is None

    def test_single_scenario(self, case14, mini_trained14):
        params, _ = mini_trained14
        result = batch_benchmark(params, case14, np.zeros((1, case14.d_in)))
        assert result.k == 1
        assert result.newton_converged == 1
        assert result.nn_batch_time_s > 0
        assert result.newton_total_time_s > 0
        assert result.speedup is not None

    def test_many_scenarios_counts(self, case14, mini_trained14):
        params, _ = mini_trained14
        rng = np.random.default_rng(1)
        scenarios = rng.uniform(-0.05, 0.05, (20, case14.d_in))
        result = batch_benchmark(params, case14, scenarios)
        assert result.k == 20
        assert result.newton_converged == 20

    def test_threaded_path_counts(self, case14, mini_trained14):
        params, _ = mini_trained14
        rng = np.random.default_rng(2)
        scenarios = rng.uniform(-0.05, 0.05, (8, case14.d_in))
        result = batch_benchmark(params, case14, scenarios, threads=4)
        assert result.newton_converged == 8
        assert result.threads == 4


class TestAblation:
    def test_smoke_run_populates_table(self, case14):
        config = TrainingConfig(epochs=2, batch_size=8)
        table = ablation_sampling(case14, auto_config_for_case(case14), config, seeds=[0])
        assert len(table.rows) == 2
        for row in table.rows:
            assert np.isfinite(row.final_loss)
            assert np.isfinite(row.residual_norm)

    def test_same_seed_reproducible(self, case14):
        config = TrainingConfig(epochs=3, batch_size=8)
        arch = auto_config_for_case(case14)
        a = ablation_sampling(case14, arch, config, seeds=[5], strategies=("three_stage",))
        b = ablation_sampling(case14, arch, config, seeds=[5], strategies=("three_stage",))
        assert a.rows[0].final_loss == b.rows[0].final_loss

    def test_csv_written(self, case14, tmp_path):
        config = TrainingConfig(epochs=2, batch_size=8)
        table = ablation_sampling(case14, auto_config_for_case(case14), config, seeds=[0])
        path = tmp_path / "ablation.csv"
        table.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 strategies


class TestFigureDataExport:
    def make_log(self, epochs=6):
        log = TrajectoryLog()
        stages = ["sobol", "sobol", "lhs", "lhs", "adaptive", "adaptive"]
        for e in range(epochs):
            log.append(
                TrajectoryRecord(e, stages[e % 6], 1.0 / (e + 1), 5e-4,
                                 0.1 / (e + 1), 0.2 / (e + 1), 2.0 / (e + 1), e)
            )
        return log

    def test_empty_log_header_only(self, tmp_path):
        paths = export_figure_data(None, None, tmp_path / "fig")
        trajectory = (paths["trajectory"]).read_text().strip().splitlines()
        comparison = (paths["comparison"]).read_text().strip().splitlines()
        assert len(trajectory) == 1
        assert len(comparison) == 1
        meta = json.loads(paths["meta"].read_text())
        assert "config_digest" in meta

    def test_row_counts_and_round_trip(self, tmp_path, case14):
        log = self.make_log()
        report = evaluate(newton_stub_params(case14), case14, timing_reps=1)
        paths = export_figure_data(log, report, tmp_path, case=case14, config_digest="d1")
        rows = read_trajectory_csv(paths["trajectory"])
        assert len(rows) == len(log)
        assert {r["stage"] for r in rows} == {"sobol", "lhs", "adaptive"}
        assert rows[2]["loss"] == log.records[2].loss  # exact float round trip
        comp = read_comparison_csv(paths["comparison"])
        assert len(comp) == case14.n
        assert comp[0]["bus"] == case14.buses[0].id

    def test_comparison_header_only_when_newton_missing(self, tmp_path):
        write_comparison_csv(None, tmp_path / "comparison.csv")
        lines = (tmp_path / "comparison.csv").read_text().strip().splitlines()
        assert lines == ["bus,V_nn,V_newton,theta_nn_deg,theta_newton_deg"]
