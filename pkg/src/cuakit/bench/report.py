"""Markdown and JSON renderings of evaluation reports and multi-run matrices."""

from __future__ import annotations

import json
from typing import Optional, Union

from ..errors import InputError
from .evaluate import EvalReport
from .matching import CATEGORIES
from .passn import RunMatrix, average_success_rate, pass_at_n

FORMATS = ("md", "json")


def _fmt(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def run_summary(m: RunMatrix) -> dict:
    rates = m.run_rates()
    return {
        "budget": m.budget,
        "runs": m.runs,
        "tasks": m.tasks,
        "run_rates": rates,
        "average": average_success_rate(rates),
        "pass_at": {str(n): pass_at_n(m, n) for n in range(1, m.runs + 1)},
    }


def _eval_md(r: EvalReport, label: str) -> str:
    lines = [
        "# Offline evaluation",
        "",
        "| Model | Coord SR | Content SR | Func SR | Avg. SR |",
        "|---|---:|---:|---:|---:|",
        f"| {label} | " + " | ".join(_fmt(r.category_sr.get(c)) for c in CATEGORIES)
        + f" | {_fmt(r.average_sr)} |",
        "",
        "| Category | Successes | Steps |",
        "|---|---:|---:|",
    ]
    lines += [f"| {c} | {r.counts[c][0]} | {r.counts[c][1]} |" for c in CATEGORIES]
    lines += ["", f"Tasks fully solved: {sum(r.task_success.values())} of {len(r.task_success)}"
              f" ({_fmt(r.task_sr)}%)", "", "| Action type | Steps |", "|---|---:|"]
    lines += [f"| {k} | {v} |" for k, v in sorted(r.action_counts.items())]
    problems = r.check_consistency()
    lines += ["", "Consistency check: " + ("passed" if not problems else "FAILED")]
    lines += [f"- {p}" for p in problems]
    return "\n".join(lines) + "\n"


def _runs_md(m: RunMatrix, label: str) -> str:
    s = run_summary(m)
    heads = [f"Run {i + 1}" for i in range(m.runs)] + ["Avg."] + [f"Pass@{n}" for n in s["pass_at"]]
    vals = [_fmt(v) for v in s["run_rates"]] + [_fmt(s["average"])] + [_fmt(v) for v in s["pass_at"].values()]
    lines = [
        "# Multi-run success",
        "",
        "| Model | Budget | " + " | ".join(heads) + " |",
        "|---|---|" + "---:|" * len(heads),
        f"| {label} | {m.budget or '-'} | " + " | ".join(vals) + " |",
    ]
    return "\n".join(lines) + "\n"


def render_report(report: Union[EvalReport, RunMatrix], fmt: str = "md", label: str = "model") -> str:
    """Deterministic document for ``report``; ``json`` output parses back with :func:`parse_report`."""
    if fmt not in FORMATS:
        raise InputError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    if isinstance(report, EvalReport):
        if fmt == "md":
            return _eval_md(report, label)
        doc = {"type": "eval", "label": label, "report": report.to_dict(),
               "consistency": report.check_consistency()}
    elif isinstance(report, RunMatrix):
        if fmt == "md":
            return _runs_md(report, label)
        doc = {"type": "runs", "label": label, "matrix": report.to_dict(), "summary": run_summary(report)}
    else:
        raise InputError(f"cannot render {type(report).__name__}")
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_report(text: str) -> Union[EvalReport, RunMatrix]:
    doc = json.loads(text)
    if doc.get("type") == "eval":
        return EvalReport.from_dict(doc["report"])
    if doc.get("type") == "runs":
        return RunMatrix.from_dict(doc["matrix"])
    raise InputError("not a report document")
