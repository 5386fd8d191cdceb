"""scikit-learn style wrappers around the pipeline stages.

They add ``get_params``/``set_params`` and the fit/transform protocol so the
stages compose with sklearn tooling; the plain functions remain the primary
API. None of the stages learn anything, so ``fit`` only validates parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .align import AlignerConfig, build_trajectory
from .bench.evaluate import BenchTask, aggregate, evaluate_task
from .bench.matching import MatchConfig
from .model import Action, RawDemonstration
from .reduce import ReducerConfig, reduce
from .storage import load_demonstration


@dataclass(frozen=True)
class ReducedDemo:
    demo: RawDemonstration
    actions: list[tuple[Action, tuple[int, int]]]


def _demos(X) -> list[RawDemonstration]:
    return [x if isinstance(x, RawDemonstration) else load_demonstration(x) for x in X]


class ActionReducer(TransformerMixin, BaseEstimator):
    """Demonstrations (objects or directory paths) -> :class:`ReducedDemo` records."""

    def __init__(self, double_click_window=500, multi_click_radius=0.01, drag_min_distance=0.005,
                 scroll_merge_gap=1000, typing_merge_gap=2000):
        self.double_click_window = double_click_window
        self.multi_click_radius = multi_click_radius
        self.drag_min_distance = drag_min_distance
        self.scroll_merge_gap = scroll_merge_gap
        self.typing_merge_gap = typing_merge_gap

    def config(self) -> ReducerConfig:
        return ReducerConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self.config()
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or self.config()
        return [ReducedDemo(d, reduce(d, cfg)) for d in _demos(X)]


class KeyframeAligner(TransformerMixin, BaseEstimator):
    """:class:`ReducedDemo` records -> trajectories with keyframes and a terminal step."""

    def __init__(self, idle_gap=300, diff_threshold=0.02, downsample=(64, 36)):
        self.idle_gap = idle_gap
        self.diff_threshold = diff_threshold
        self.downsample = downsample

    def config(self) -> AlignerConfig:
        return AlignerConfig(self.idle_gap, self.diff_threshold, tuple(self.downsample))

    def fit(self, X=None, y=None):
        self.config_ = self.config()
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or self.config()
        return [build_trajectory(r.demo, r.actions, cfg) for r in X]


class StepMatcher(BaseEstimator):
    """Scores per-task prediction lists (``X``) against benchmark tasks (``y``)."""

    def __init__(self, check_status=True):
        self.check_status = check_status

    def fit(self, X=None, y=None):
        return self

    def predict(self, X: Sequence, y: Sequence[BenchTask]):
        """Step results for each (predictions, task) pair."""
        cfg = MatchConfig(self.check_status)
        return [evaluate_task(task, preds, cfg) for preds, task in zip(X, y, strict=True)]

    def score(self, X, y) -> float:
        """Step success rate in [0, 1]."""
        results = self.predict(X, y)
        report = aggregate(list(y), {t.id: r for t, r in zip(y, results)})
        return report.average_sr / 100.0
