"""Offline figure rendering for pfsolve CSV/JSON exports."""

__version__ = "0.1.0"

from .io import read_comparison, read_meta, read_trajectory  # noqa: F401
from .render import FIGURES, FigureJob, render  # noqa: F401
