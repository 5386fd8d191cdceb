"""Offline benchmark scoring, multi-run aggregation and corpus statistics."""

from .evaluate import (
    BenchStep,
    BenchTask,
    EvalReport,
    aggregate,
    bench_to_dict,
    evaluate_benchmark,
    evaluate_task,
    load_bench,
    load_predictions,
)
from .matching import (
    BBox,
    GoldOption,
    MatchConfig,
    StepResult,
    category_of,
    levenshtein,
    match_step,
    normalized_edit_distance,
    option_matches,
)
from .passn import RunMatrix, average_success_rate, pass_at_n
from .report import parse_report, render_report, run_summary
from .stats import corpus_stats

__all__ = [
    "BenchStep", "BenchTask", "EvalReport", "aggregate", "bench_to_dict", "evaluate_benchmark",
    "evaluate_task", "load_bench", "load_predictions", "BBox", "GoldOption", "MatchConfig",
    "StepResult", "category_of", "levenshtein", "match_step", "normalized_edit_distance",
    "option_matches", "RunMatrix", "average_success_rate", "pass_at_n", "parse_report",
    "render_report", "run_summary", "corpus_stats",
]
