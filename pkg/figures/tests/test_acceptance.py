"""B1: render every figure type from a real desk-scale run's exports.

Drives the solver package strictly through its command line (train, eval,
export-figures-data) so this component exercises nothing but the documented
file contract. Skips if the `pfsolve` CLI is not installed.
"""

import shutil
import subprocess
from pathlib import Path

import pytest

from pf_figures.render import FIGURES, FigureJob, render

pytestmark = pytest.mark.skipif(
    shutil.which("pfsolve") is None, reason="pfsolve CLI not installed"
)


@pytest.fixture(scope="module")
def desk_exports(tmp_path_factory):
    """Exports of the desk-scale IEEE14 run (2000 epochs, three-stage)."""
    out = tmp_path_factory.mktemp("desk_run")
    for argv in (
        ["pfsolve", "train", "--case", "ieee14", "--out", str(out),
         "--seed", "0", "--set", "epochs=2000"],
        ["pfsolve", "eval", "--case", "ieee14", "--out", str(out)],
        ["pfsolve", "export-figures-data", "--case", "ieee14", "--out", str(out)],
    ):
        subprocess.run(argv, check=True, capture_output=True, timeout=600)
    return out / "figures_data"


def test_b1_all_figures_render(desk_exports, tmp_path, figure_spy):
    img_dir = tmp_path / "img"
    rendered = []
    for figure in FIGURES:
        path = render(
            FigureJob(input_dir=Path(desk_exports), out_dir=img_dir, figure=figure)
        )
        rendered.append(path)
        print(f"[B1] rendered {path.name}")
    assert len(rendered) == 6
    assert all(p.exists() and p.stat().st_size > 1000 for p in rendered)

    # Trajectory legend carries exactly the three stage entries.
    trajectory_fig = figure_spy[0]
    legend = trajectory_fig.axes[0].get_legend()
    labels = [t.get_text() for t in legend.get_texts()]
    assert sorted(labels) == ["adaptive", "lhs", "sobol"]
    print(f"[B1] trajectory legend entries: {labels}")

    # Scatter panels include the ideal line.
    scatter_fig = figure_spy[FIGURES.index("scatter")]
    for ax in scatter_fig.axes:
        assert "ideal" in [l.get_label() for l in ax.get_lines()]
    print("[B1] scatter ideal line present")
