"""Fixtures: synthetic export directories conforming to the pfsolve contract."""

from __future__ import annotations

import json
import math

import pytest


def write_trajectory(path, rows):
    header = "epoch,stage,mean_dP,mean_dQ,energy,loss,lr"
    lines = [header] + [
        f"{e},{stage},{dp!r},{dq!r},{en!r},{lo!r},{lr!r}"
        for (e, stage, dp, dq, en, lo, lr) in rows
    ]
    path.write_text("\n".join(lines) + "\n")


def write_comparison(path, rows):
    header = "bus,V_nn,V_newton,theta_nn_deg,theta_newton_deg"
    lines = [header] + [
        f"{bus},{vn!r},{vw!r},{tn!r},{tw!r}" for (bus, vn, vw, tn, tw) in rows
    ]
    path.write_text("\n".join(lines) + "\n")


def make_export_dir(root, epochs=30, buses=14):
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for e in range(epochs):
        if e < int(0.3 * epochs):
            stage = "sobol"
        elif e < int(0.7 * epochs):
            stage = "lhs"
        else:
            stage = "adaptive"
        decay = math.exp(-0.2 * e)
        rows.append((e, stage, 0.3 * decay, 0.2 * decay, 0.5 * decay**2, decay**2, 5e-4))
    write_trajectory(root / "trajectory.csv", rows)

    comparison = []
    for b in range(1, buses + 1):
        v = 1.0 + 0.03 * math.sin(b)
        t = -8.0 * math.cos(b)
        comparison.append((b, v + 1e-4, v, t + 0.01, t))
    write_comparison(root / "comparison.csv", comparison)

    (root / "meta.json").write_text(
        json.dumps({"case": "synthetic14", "config_digest": "cafe01234567"})
    )
    return root


@pytest.fixture
def export_dir(tmp_path):
    return make_export_dir(tmp_path / "exports")


@pytest.fixture
def empty_export_dir(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    write_trajectory(root / "trajectory.csv", [])
    write_comparison(root / "comparison.csv", [])
    (root / "meta.json").write_text(json.dumps({"case": "none", "config_digest": ""}))
    return root


@pytest.fixture
def figure_spy(monkeypatch):
    """Capture each rendered matplotlib figure just before it is saved."""
    import importlib

    # pf_figures.render (the module) is shadowed by the re-exported render()
    # function on the package, so resolve the module explicitly.
    render_mod = importlib.import_module("pf_figures.render")

    captured = []
    real_finish = render_mod._finish

    def spy(fig, job, name):
        captured.append(fig)
        return real_finish(fig, job, name)

    monkeypatch.setattr(render_mod, "_finish", spy)
    return captured
