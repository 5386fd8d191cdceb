"""Multi-run aggregation: Pass@n and the mean of per-run success rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import InputError


@dataclass(frozen=True)
class RunMatrix:
    """Success flags with one row per run and one column per task."""

    cells: tuple[tuple[bool, ...], ...]
    budget: str = ""
    task_ids: tuple[str, ...] = ()

    def __post_init__(self):
        cells = tuple(tuple(bool(v) for v in row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        if not cells or not cells[0]:
            raise InputError("a run matrix needs at least one run and one task")
        if any(len(r) != len(cells[0]) for r in cells):
            raise InputError("run matrix rows must all have the same length")
        if self.task_ids and len(self.task_ids) != len(cells[0]):
            raise InputError("task_ids must name every column")

    @property
    def runs(self) -> int:
        return len(self.cells)

    @property
    def tasks(self) -> int:
        return len(self.cells[0])

    def run_rates(self) -> list[float]:
        return [100.0 * sum(r) / self.tasks for r in self.cells]

    def to_dict(self) -> dict:
        return {"budget": self.budget, "task_ids": list(self.task_ids),
                "cells": [[int(v) for v in r] for r in self.cells]}

    @classmethod
    def from_dict(cls, d) -> "RunMatrix":
        return cls(tuple(tuple(bool(v) for v in r) for r in d["cells"]), d.get("budget", ""),
                   tuple(d.get("task_ids", ())))


def average_success_rate(rates: Sequence[float]) -> float:
    """Mean of per-run success rates (the "Avg." row of a multi-run table)."""
    if not rates:
        raise InputError("no runs to average")
    return sum(rates) / len(rates)


def pass_at_n(matrix: RunMatrix, n: int, average: bool = False) -> float:
    """Percent of tasks solved by at least one of the first ``n`` runs.

    With ``average=True`` returns the mean per-run success rate over those
    runs instead.
    """
    if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= matrix.runs:
        raise InputError(f"n={n!r} outside 1..{matrix.runs}")
    rows = matrix.cells[:n]
    if average:
        return average_success_rate([100.0 * sum(r) / matrix.tasks for r in rows])
    solved = sum(any(r[j] for r in rows) for j in range(matrix.tasks))
    return 100.0 * solved / matrix.tasks
