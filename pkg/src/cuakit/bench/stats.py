"""Corpus statistics: task counts, step lengths and action-type distributions per OS."""

from __future__ import annotations

from collections import Counter
from typing import Iterable

from ..errors import InputError
from ..model import Trajectory, action_label
from .evaluate import BenchTask


def _kinds(item) -> list[str]:
    if isinstance(item, BenchTask):
        return [s.options[0].kind for s in item.steps]
    if isinstance(item, Trajectory):
        return [action_label(s.action) for s in item.steps]
    raise InputError(f"cannot compute statistics for {type(item).__name__}")


def _dist(counts: Counter) -> dict:
    total = sum(counts.values())
    return {k: 100.0 * v / total for k, v in sorted(counts.items())}


def corpus_stats(items: Iterable) -> dict:
    """Totals, mean steps per task and action-type counts/percentages, overall and per OS."""
    items = list(items)
    if not items:
        raise InputError("corpus is empty")
    overall: Counter = Counter()
    per_os: dict[str, Counter] = {}
    tasks_per_os: Counter = Counter()
    steps = 0
    for it in items:
        kinds = _kinds(it)
        steps += len(kinds)
        overall.update(kinds)
        per_os.setdefault(it.os, Counter()).update(kinds)
        tasks_per_os[it.os] += 1
    return {
        "total_tasks": len(items),
        "total_steps": steps,
        "avg_steps": steps / len(items),
        "counts": dict(sorted(overall.items())),
        "percentages": _dist(overall),
        "per_os": {
            os_: {"tasks": tasks_per_os[os_], "counts": dict(sorted(c.items())), "percentages": _dist(c)}
            for os_, c in sorted(per_os.items())
        },
    }
