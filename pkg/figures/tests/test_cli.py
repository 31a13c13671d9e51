"""CLI surface: flags, exit codes, placeholder warnings."""

from pf_figures.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_render_single_figure(capsys, export_dir, tmp_path):
    code, out, _ = run(
        capsys, "--in", str(export_dir), "--out", str(tmp_path / "img"),
        "--figure", "trajectory",
    )
    assert code == 0
    assert "trajectory.png" in out
    assert (tmp_path / "img" / "trajectory.png").exists()


def test_render_all(capsys, export_dir, tmp_path):
    code, out, _ = run(
        capsys, "--in", str(export_dir), "--out", str(tmp_path / "img"),
        "--figure", "all",
    )
    assert code == 0
    images = list((tmp_path / "img").glob("*.png"))
    assert len(images) == 6


def test_empty_inputs_warn_but_succeed(capsys, empty_export_dir, tmp_path):
    code, out, err = run(
        capsys, "--in", str(empty_export_dir), "--out", str(tmp_path / "img"),
        "--figure", "energy-decay",
    )
    assert code == 0
    assert "warning:" in err
    assert (tmp_path / "img" / "energy-decay.png").exists()


def test_missing_input_dir(capsys, tmp_path):
    code, _, err = run(
        capsys, "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "img"),
        "--figure", "scatter",
    )
    assert code == 2
    assert "missing-input" in err


def test_missing_column_exit_code(capsys, tmp_path):
    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "trajectory.csv").write_text("epoch,stage\n")
    code, _, err = run(
        capsys, "--in", str(broken), "--out", str(tmp_path / "img"),
        "--figure", "trajectory",
    )
    assert code == 3
    assert "mean_dP" in err


def test_unknown_figure_exit_code(capsys, export_dir, tmp_path):
    code, _, err = run(
        capsys, "--in", str(export_dir), "--out", str(tmp_path / "img"),
        "--figure", "pie",
    )
    assert code == 3
