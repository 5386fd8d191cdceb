"""Reflector, generator and summarizer calls, plus the privacy classifier.

Each role sends a :class:`ChatRequest` and expects a reply with fixed XML-ish
tags, for example ``<verdict>correct</verdict>``. Parsing is strict: a reply
that breaks the contract raises :class:`VerdictParseError`, which the retry
policy treats like a transient failure.
"""

from __future__ import annotations

import logging
import re
from dataclasses import replace
from typing import Optional

from ..dsl import render_action, split_sections
from ..errors import BackendError, CueNotApplicable, VerdictParseError
from ..model import ReflectionVerdict, StructuredCoT, Trajectory, TrajectorySummary
from .client import ChatRequest, ModelClient, RetryPolicy, complete_parsed, image_part, text_part
from .cues import render_visual_cues

logger = logging.getLogger(__name__)

PRIVACY_LEVELS = ("none", "low", "medium", "high")

REFLECT_SYSTEM = (
    "You check one step of a recorded computer task. You get the goal, the action code, "
    "and screenshots taken before and after the action. Decide whether the action was "
    "correct, incorrect or redundant. Answer with <verdict>...</verdict>. For a correct step "
    "describe the visible effect in <state_change>...</state_change>; otherwise explain the "
    "problem in <rationale>...</rationale>."
)
GENERATE_SYSTEM = (
    "You write the reasoning behind one step of a recorded computer task, as if you were the "
    "agent about to act. Use the goal, earlier steps and their reviews, the screenshot and the "
    "action code. Reply with <observation>what the screen shows</observation>, "
    "<thought>why this step comes next</thought> and <action>a one-sentence description of "
    "the action</action>."
)
SUMMARIZE_SYSTEM = (
    "You review a whole recorded computer task. Rewrite the user's goal so it states exactly "
    "what the recording accomplishes, inside <refined_instruction>...</refined_instruction>. "
    "Then rate the recording from 1 to 10 in <score_alignment>, <score_efficiency> and "
    "<score_difficulty>."
)
PRIVACY_SYSTEM = (
    "You judge how much personal information a recorded computer task exposes. Answer with "
    "<privacy_sensitivity>None|Low|Medium|High</privacy_sensitivity>."
)


# ---------------------------------------------------------------------------
# reply parsing


def tag(text: str, name: str) -> Optional[str]:
    m = None
    for m in re.finditer(rf"<{name}>\s*(.*?)\s*</{name}>", text, re.S | re.I):
        pass
    return m.group(1) if m else None


def parse_verdict(text: str) -> ReflectionVerdict:
    status = (tag(text, "verdict") or "").strip().lower()
    if status not in ("correct", "incorrect", "redundant"):
        raise VerdictParseError(f"reply has no valid <verdict> (got {status or 'nothing'!r})")
    try:
        return ReflectionVerdict(status, tag(text, "rationale") or "", tag(text, "state_change"))
    except ValueError as exc:
        raise VerdictParseError(str(exc)) from None


def parse_cot(text: str) -> StructuredCoT:
    obs, thought, action = (tag(text, n) for n in ("observation", "thought", "action"))
    if action is None:
        # fall back to markdown headers
        sec = split_sections(text)
        obs, thought, action = sec.get("Observation"), sec.get("Thought"), sec.get("Action")
    if not action:
        raise VerdictParseError("reply has no action description")
    try:
        return StructuredCoT(action_description=action, thought=thought or None, observation=obs or None)
    except ValueError as exc:
        raise VerdictParseError(str(exc)) from None


def parse_summary(text: str) -> TrajectorySummary:
    refined = tag(text, "refined_instruction")
    scores = {}
    for name in ("alignment", "efficiency", "difficulty"):
        raw = tag(text, f"score_{name}")
        try:
            scores[name] = int((raw or "").strip())
        except ValueError:
            raise VerdictParseError(f"score_{name} is not an integer: {raw!r}") from None
    try:
        return TrajectorySummary(refined_instruction=refined or "", **scores)
    except ValueError as exc:
        raise VerdictParseError(str(exc)) from None


def parse_privacy(text: str) -> str:
    raw = tag(text, "privacy_sensitivity")
    label = (raw if raw is not None else text).strip().strip(".").lower()
    if label not in PRIVACY_LEVELS:
        raise VerdictParseError(f"unknown privacy level {label!r}")
    return label


# ---------------------------------------------------------------------------
# requests


def _goal(traj: Trajectory) -> str:
    return traj.refined_instruction or traj.instruction


def reflect_request(traj: Trajectory, i: int) -> ChatRequest:
    step = traj.steps[i]
    after = traj.steps[i + 1].state if i + 1 < len(traj.steps) else step.state
    body = [
        text_part(f"Goal: {_goal(traj)}\nStep: {i + 1} of {len(traj.steps)}\n"
                  f"Action code: {render_action(step.action)}"),
        text_part("Before the action:"),
        image_part(step.state.image),
        text_part("After the action:"),
        image_part(after.image),
    ]
    return ChatRequest(REFLECT_SYSTEM, ({"role": "user", "content": body},), task="reflect")


def generate_request(traj: Trajectory, i: int, cue_dir=None) -> ChatRequest:
    """One history message per earlier step, then the current step."""
    history = []
    for j in range(i):
        s = traj.steps[j]
        line = f"Step {j + 1}: {render_action(s.action)}"
        if s.cot is not None:
            line += f"\nDescription: {s.cot.action_description}"
        if s.verdict is not None:
            note = s.verdict.state_change if s.verdict.status == "correct" else s.verdict.rationale
            line += f"\nReview: {s.verdict.status}; {note}"
        history.append({"role": "assistant", "content": [text_part(line)]})
    step = traj.steps[i]
    content = [
        text_part(f"Goal: {_goal(traj)}\nStep: {i + 1} of {len(traj.steps)}\n"
                  f"Action code: {render_action(step.action)}"),
        image_part(step.state.image),
    ]
    if cue_dir is not None:
        try:
            content.append(image_part(render_visual_cues(step.state, step.action, cue_dir)))
        except CueNotApplicable:
            pass
    if step.verdict is not None and step.verdict.state_change:
        content.append(text_part(f"Observed effect: {step.verdict.state_change}"))
    return ChatRequest(GENERATE_SYSTEM, tuple(history) + ({"role": "user", "content": content},), task="generate")


def summarize_request(traj: Trajectory) -> ChatRequest:
    lines = [f"Original instruction: {traj.instruction}"]
    for j, s in enumerate(traj.steps):
        desc = s.cot.action_description if s.cot else render_action(s.action)
        status = s.verdict.status if s.verdict else "unreviewed"
        lines.append(f"Step {j + 1} [{status}]: {desc}")
    content = [text_part("\n".join(lines)), image_part(traj.steps[-1].state.image)]
    return ChatRequest(SUMMARIZE_SYSTEM, ({"role": "user", "content": content},), task="summarize")


def privacy_request(traj: Trajectory) -> ChatRequest:
    lines = [f"Instruction: {traj.instruction}"]
    for j, s in enumerate(traj.steps):
        lines.append(f"Step {j + 1}: {s.cot.action_description if s.cot else render_action(s.action)}")
    return ChatRequest(PRIVACY_SYSTEM, ({"role": "user", "content": [text_part("\n".join(lines))]},), task="privacy")


# ---------------------------------------------------------------------------
# operations


def reflect_step(client: ModelClient, traj: Trajectory, i: int, policy: Optional[RetryPolicy] = None):
    return complete_parsed(client, reflect_request(traj, i), parse_verdict, policy)


def generate_cot(client: ModelClient, traj: Trajectory, i: int, cue_dir=None,
                 policy: Optional[RetryPolicy] = None) -> StructuredCoT:
    return complete_parsed(client, generate_request(traj, i, cue_dir), parse_cot, policy)


def summarize_trajectory(client: ModelClient, traj: Trajectory,
                         policy: Optional[RetryPolicy] = None) -> TrajectorySummary:
    return complete_parsed(client, summarize_request(traj), parse_summary, policy)


def classify_privacy(client: ModelClient, traj: Trajectory, policy: Optional[RetryPolicy] = None) -> str:
    return complete_parsed(client, privacy_request(traj), parse_privacy, policy)


def annotate_trajectory(client: ModelClient, traj: Trajectory, cue_dir=None,
                        policy: Optional[RetryPolicy] = None) -> Trajectory:
    """Reflect on and describe every step in order, then summarize and classify.

    A step whose calls keep failing is recorded in ``failed_steps`` and left
    without CoT; the remaining steps still run.
    """
    failed = []
    for i in range(len(traj.steps)):
        try:
            verdict = reflect_step(client, traj, i, policy)
            traj = traj.with_step(i, verdict=verdict)
            cot = generate_cot(client, traj, i, cue_dir, policy)
            traj = traj.with_step(i, cot=cot)
        except (BackendError, VerdictParseError) as exc:
            logger.warning("trajectory %s step %d not annotated: %s", traj.traj_id, i, exc)
            traj = traj.with_step(i, cot=None, verdict=None)
            failed.append(i)
    traj = replace(traj, failed_steps=tuple(failed))
    meta = dict(traj.meta)
    try:
        summary = summarize_trajectory(client, traj, policy)
        traj = replace(traj, summary=summary, refined_instruction=summary.refined_instruction)
    except (BackendError, VerdictParseError) as exc:
        logger.warning("trajectory %s not summarized: %s", traj.traj_id, exc)
        meta["summary_failed"] = True
    try:
        traj = replace(traj, privacy=classify_privacy(client, traj, policy))
    except (BackendError, VerdictParseError) as exc:
        logger.warning("trajectory %s privacy unknown: %s", traj.traj_id, exc)
        meta["privacy_failed"] = True
    return replace(traj, meta=meta)
