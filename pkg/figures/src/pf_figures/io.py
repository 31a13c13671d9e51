"""Readers for the pfsolve figure-data contract.

Three files make up the interface: trajectory.csv (per-epoch training
records), comparison.csv (per-bus NN vs Newton solutions) and meta.json.
Readers validate the column set and fail naming the missing column.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRAJECTORY_COLUMNS = ("epoch", "stage", "mean_dP", "mean_dQ", "energy", "loss", "lr")
COMPARISON_COLUMNS = ("bus", "V_nn", "V_newton", "theta_nn_deg", "theta_newton_deg")


class MissingColumnError(ValueError):
    def __init__(self, path, column: str):
        self.column = column
        super().__init__(f"{path}: missing required column {column!r}")


@dataclass
class Trajectory:
    epoch: np.ndarray
    stage: list[str]
    mean_dP: np.ndarray
    mean_dQ: np.ndarray
    energy: np.ndarray
    loss: np.ndarray
    lr: np.ndarray

    def __len__(self) -> int:
        return len(self.epoch)

    def stage_names(self) -> list[str]:
        seen = []
        for s in self.stage:
            if s not in seen:
                seen.append(s)
        return seen


@dataclass
class Comparison:
    bus: np.ndarray
    v_nn: np.ndarray
    v_newton: np.ndarray
    theta_nn_deg: np.ndarray
    theta_newton_deg: np.ndarray

    def __len__(self) -> int:
        return len(self.bus)


@dataclass
class Meta:
    case: str = ""
    config_digest: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def caption(self) -> str:
        digest = self.config_digest or "unknown"
        return f"{self.case or 'case'} | config {digest}"


def _read_rows(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    return reader.fieldnames or [], list(reader)


def read_trajectory(path) -> Trajectory:
    fields, rows = _read_rows(path)
    for column in TRAJECTORY_COLUMNS:
        if column not in fields:
            raise MissingColumnError(path, column)
    return Trajectory(
        epoch=np.array([int(r["epoch"]) for r in rows]),
        stage=[r["stage"] for r in rows],
        mean_dP=np.array([float(r["mean_dP"]) for r in rows]),
        mean_dQ=np.array([float(r["mean_dQ"]) for r in rows]),
        energy=np.array([float(r["energy"]) for r in rows]),
        loss=np.array([float(r["loss"]) for r in rows]),
        lr=np.array([float(r["lr"]) for r in rows]),
    )


def read_comparison(path) -> Comparison:
    fields, rows = _read_rows(path)
    for column in COMPARISON_COLUMNS:
        if column not in fields:
            raise MissingColumnError(path, column)
    return Comparison(
        bus=np.array([int(r["bus"]) for r in rows]),
        v_nn=np.array([float(r["V_nn"]) for r in rows]),
        v_newton=np.array([float(r["V_newton"]) for r in rows]),
        theta_nn_deg=np.array([float(r["theta_nn_deg"]) for r in rows]),
        theta_newton_deg=np.array([float(r["theta_newton_deg"]) for r in rows]),
    )


def read_meta(path) -> Meta:
    doc = json.loads(Path(path).read_text())
    return Meta(
        case=doc.get("case", ""),
        config_digest=doc.get("config_digest", ""),
        extra={k: v for k, v in doc.items() if k not in ("case", "config_digest")},
    )
