"""Toolkit for turning recorded computer-use demonstrations into training data and scoring agents offline."""

__version__ = "0.1.0"

from .dsl import parse_action, parse_actions, extract_response, render_action
from .errors import CuakitError
from .model import RawDemonstration, Step, Trajectory
from .reduce import ReducerConfig, reduce
from .align import AlignerConfig, build_trajectory

__all__ = [
    "__version__", "parse_action", "parse_actions", "extract_response", "render_action", "CuakitError",
    "RawDemonstration", "Step", "Trajectory", "ReducerConfig", "reduce", "AlignerConfig",
    "build_trajectory",
]
