"""Offline benchmark evaluation: per-step matching and category success rates."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from ..dsl import extract_response
from ..errors import CuakitError, InputError
from .matching import CATEGORIES, GoldOption, MatchConfig, StepResult, match_step

BENCH_FORMAT = "cuakit.bench/1"


@dataclass(frozen=True)
class BenchStep:
    options: tuple[GoldOption, ...]
    screenshot: Optional[str] = None

    def __post_init__(self):
        if not self.options:
            raise InputError("every benchmark step needs at least one gold option")


@dataclass(frozen=True)
class BenchTask:
    id: str
    instruction: str
    os: str
    resolution: tuple[int, int]
    steps: tuple[BenchStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise InputError(f"task {self.id} has no steps")
        if not any(o.kind == "terminate" for o in self.steps[-1].options):
            raise InputError(f"task {self.id}: the final step must offer a terminate option")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instruction": self.instruction,
            "os": self.os,
            "resolution": list(self.resolution),
            "steps": [
                {"screenshot": s.screenshot, "options": [o.to_dict() for o in s.options]}
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "BenchTask":
        try:
            steps = tuple(
                BenchStep(tuple(GoldOption.from_dict(o) for o in s["options"]), s.get("screenshot"))
                for s in d["steps"]
            )
            return cls(d["id"], d.get("instruction", ""), d.get("os", ""), tuple(d["resolution"]), steps)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed task {d.get('id', '?') if isinstance(d, dict) else '?'}: {exc}") from None


def load_bench(path) -> list[BenchTask]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != BENCH_FORMAT:
        raise InputError(f"{path} is not a benchmark file")
    return [BenchTask.from_dict(t) for t in doc["tasks"]]


def bench_to_dict(tasks: Sequence[BenchTask]) -> dict:
    return {"format": BENCH_FORMAT, "tasks": [t.to_dict() for t in tasks]}


def load_predictions(path) -> dict[str, dict[int, str]]:
    """preds.jsonl rows ``{"task", "step", "response"}`` grouped by task."""
    out: dict[str, dict[int, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                task, step, resp = row["task"], int(row["step"]), row["response"]
            except (ValueError, KeyError, TypeError) as exc:
                raise InputError(f"{path}:{n}: bad prediction row ({exc})") from None
            steps = out.setdefault(task, {})
            if step in steps:
                raise InputError(f"{path}:{n}: duplicate prediction for {task} step {step}")
            steps[step] = resp
    return out


def evaluate_task(task: BenchTask, predictions, cfg: Optional[MatchConfig] = None) -> list[StepResult]:
    """Judge each step on its own; ``predictions`` is a sequence or step->text mapping."""
    if isinstance(predictions, Mapping):
        if set(predictions) != set(range(len(task.steps))):
            raise InputError(f"task {task.id}: predictions cover steps {sorted(predictions)}, "
                             f"expected 0..{len(task.steps) - 1}")
        predictions = [predictions[i] for i in range(len(task.steps))]
    if len(predictions) != len(task.steps):
        raise InputError(f"task {task.id}: {len(predictions)} predictions for {len(task.steps)} steps")
    results = []
    for i, (step, text) in enumerate(zip(task.steps, predictions)):
        action, error = None, None
        if text is None:
            error = "no_action"
        else:
            try:
                action = extract_response(text, task.resolution).action
            except CuakitError as exc:
                error = exc.code
        results.append(match_step(action, step.options, cfg, step=i, error=error))
    return results


def _pct(num: int, den: int) -> Optional[float]:
    return 100.0 * num / den if den else None


@dataclass(frozen=True)
class EvalReport:
    results: Mapping[str, tuple[StepResult, ...]]
    category_sr: Mapping[str, Optional[float]]
    average_sr: float
    counts: Mapping[str, tuple[int, int]]  # category -> (successes, steps)
    action_counts: Mapping[str, int]  # gold kind of each step's first option
    task_success: Mapping[str, bool] = field(default_factory=dict)

    @property
    def task_sr(self) -> float:
        return _pct(sum(self.task_success.values()), len(self.task_success)) or 0.0

    def check_consistency(self) -> list[str]:
        """Recount everything from the step results; returns a list of disagreements."""
        problems = []
        tally = {c: [0, 0] for c in CATEGORIES}
        for tid, steps in self.results.items():
            for r in steps:
                tally[r.category][0] += r.success
                tally[r.category][1] += 1
                if r.success and r.matched is None:
                    problems.append(f"{tid} step {r.step}: success without a matched option")
            if self.task_success.get(tid) != all(r.success for r in steps):
                problems.append(f"{tid}: task success flag disagrees with its steps")
        for c in CATEGORIES:
            if tuple(tally[c]) != tuple(self.counts.get(c, (0, 0))):
                problems.append(f"{c}: counts {self.counts.get(c)} but recount gives {tuple(tally[c])}")
            if self.category_sr.get(c) != _pct(*tally[c]):
                problems.append(f"{c}: SR {self.category_sr.get(c)} but recount gives {_pct(*tally[c])}")
        succ = sum(t[0] for t in tally.values())
        total = sum(t[1] for t in tally.values())
        if self.average_sr != (_pct(succ, total) or 0.0):
            problems.append(f"average SR {self.average_sr} but recount gives {_pct(succ, total)}")
        if not 0.0 <= self.average_sr <= 100.0:
            problems.append("average SR outside [0, 100]")
        if sum(self.action_counts.values()) != total:
            problems.append("action-type counts do not cover every step")
        return problems

    def to_dict(self) -> dict:
        return {
            "results": {t: [r.to_dict() for r in rs] for t, rs in sorted(self.results.items())},
            "category_sr": dict(sorted(self.category_sr.items())),
            "average_sr": self.average_sr,
            "counts": {c: list(v) for c, v in sorted(self.counts.items())},
            "action_counts": dict(sorted(self.action_counts.items())),
            "task_success": dict(sorted(self.task_success.items())),
        }

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls(
            results={t: tuple(StepResult.from_dict(r) for r in rs) for t, rs in d["results"].items()},
            category_sr=dict(d["category_sr"]),
            average_sr=d["average_sr"],
            counts={c: tuple(v) for c, v in d["counts"].items()},
            action_counts=dict(d["action_counts"]),
            task_success=dict(d.get("task_success", {})),
        )


def aggregate(tasks: Sequence[BenchTask], results: Mapping[str, Sequence[StepResult]]) -> EvalReport:
    tally = {c: [0, 0] for c in CATEGORIES}
    kinds: dict[str, int] = {}
    ordered = {}
    for task in sorted(tasks, key=lambda t: t.id):
        rs = tuple(results[task.id])
        ordered[task.id] = rs
        for step, r in zip(task.steps, rs):
            tally[r.category][0] += r.success
            tally[r.category][1] += 1
            k = step.options[0].kind
            kinds[k] = kinds.get(k, 0) + 1
    succ = sum(t[0] for t in tally.values())
    total = sum(t[1] for t in tally.values())
    return EvalReport(
        results=ordered,
        category_sr={c: _pct(*tally[c]) for c in CATEGORIES},
        average_sr=_pct(succ, total) or 0.0,
        counts={c: tuple(tally[c]) for c in CATEGORIES},
        action_counts=dict(sorted(kinds.items())),
        task_success={t: all(r.success for r in rs) for t, rs in ordered.items()},
    )


def evaluate_benchmark(tasks: Sequence[BenchTask], predictions: Mapping[str, object],
                       cfg: Optional[MatchConfig] = None, workers: int = 1) -> EvalReport:
    """Score every task; tasks run concurrently but the fold is in task-id order."""
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate task ids in benchmark")
    missing = [t for t in ids if t not in predictions]
    if missing:
        raise InputError(f"no predictions for task {missing[0]}")

    def one(task):
        try:
            return evaluate_task(task, predictions[task.id], cfg)
        except InputError as exc:
            raise InputError(f"{task.id}: {exc}") from None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(ids, pool.map(one, tasks)))
    else:
        results = {t.id: one(t) for t in tasks}
    return aggregate(tasks, results)
