"""Training sample emission in the L1/L2/L3 chat format.

A sample for step ``i`` holds, in order: the level's system prompt, one
assistant message listing the steps too old to keep their screenshots, then
screenshot/action pairs for the most recent steps inside the image window,
the current screenshot with the task instruction, and the supervised target.
History is always written as L1 action lines whatever the target level.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Mapping, Optional

import jsonschema

from ..dsl import render_action
from ..errors import EmissionError
from ..model import Step, Trajectory
from .client import image_part, text_part

LEVELS = ("L1", "L2", "L3")
SECTIONS = {
    "L1": ("Action", "Code"),
    "L2": ("Thought", "Action", "Code"),
    "L3": ("Observation", "Thought", "Action", "Code"),
}

_COMMON = (
    "Actions are Python calls: pyautogui.click/doubleClick/tripleClick/middleClick/moveTo/dragTo "
    "with x and y given as fractions of the screen width and height, pyautogui.scroll/hscroll, "
    "pyautogui.write, pyautogui.press, pyautogui.hotkey, plus computer.wait() and "
    "computer.terminate(status='success' or 'failure') when the task is over. "
    "Emit exactly one action per turn inside a ```python block under '## Code:'."
)
SYSTEM_PROMPTS = {
    "L1": "You control a desktop computer through screenshots to finish the user's task. "
          "Reply with '## Action:' (one sentence) and then '## Code:'. " + _COMMON,
    "L2": "You control a desktop computer through screenshots to finish the user's task. "
          "Reply with '## Thought:' (your reasoning about progress and the next step), "
          "'## Action:' (one sentence) and then '## Code:'. " + _COMMON,
    "L3": "You control a desktop computer through screenshots to finish the user's task. "
          "Reply with '## Observation:' (what the current screen shows), '## Thought:' (your "
          "reasoning about progress and the next step), '## Action:' (one sentence) and then "
          "'## Code:'. " + _COMMON,
}


@dataclass(frozen=True)
class SampleConfig:
    level: str = "L2"
    history_images: int = 3
    history_text: str = "L1_actions"
    drop_flagged_steps: bool = True

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        if self.history_images < 1:
            raise ValueError("history_images must be at least 1")
        if self.history_text != "L1_actions":
            raise ValueError("only L1 action history is supported")


def _history_line(k: int, step: Step) -> str:
    desc = step.cot.action_description if step.cot is not None else render_action(step.action)
    return f"# Step {k + 1}:\n## Action:\n{desc}"


def render_target(step: Step, level: str) -> str:
    c = step.cot
    parts = []
    if level == "L3":
        parts.append(f"## Observation:\n{c.observation}")
    if level in ("L2", "L3"):
        parts.append(f"## Thought:\n{c.thought}")
    parts.append(f"## Action:\n{c.action_description}")
    parts.append(f"## Code:\n```python\n{render_action(step.action)}\n```")
    return "\n\n".join(parts)


def _has_level(step: Step, level: str) -> bool:
    c = step.cot
    if c is None:
        return False
    return {"L1": True, "L2": c.thought is not None, "L3": c.observation is not None}[level]


def eligible(traj: Trajectory, i: int, cfg: SampleConfig) -> bool:
    if not cfg.drop_flagged_steps:
        return True
    step = traj.steps[i]
    return i not in traj.failed_steps and not step.flagged


def build_sample(traj: Trajectory, i: int, level: str, cfg: SampleConfig) -> dict:
    step = traj.steps[i]
    if not _has_level(step, level):
        raise EmissionError(f"trajectory {traj.traj_id or '?'} step {i} has no {level} chain of thought")
    window = cfg.history_images - 1  # earlier steps that keep their screenshot
    first_img = max(0, i - window)
    msgs = [{"role": "system", "content": [text_part(SYSTEM_PROMPTS[level])]}]
    if first_img > 0:
        lines = "\n\n".join(_history_line(k, traj.steps[k]) for k in range(first_img))
        msgs.append({"role": "assistant", "content": [text_part(lines)]})
    for k in range(first_img, i):
        msgs.append({"role": "user", "content": [image_part(traj.steps[k].state.image)]})
        msgs.append({"role": "assistant", "content": [text_part(_history_line(k, traj.steps[k]))]})
    goal = traj.refined_instruction or traj.instruction
    msgs.append({"role": "user", "content": [image_part(step.state.image),
                                             text_part(f"# Task Instruction:\n{goal}")]})
    msgs.append({"role": "assistant", "content": [text_part(render_target(step, level))]})
    return {
        "id": f"{traj.traj_id}:{i}",
        "trajectory": traj.traj_id,
        "step": i,
        "level": level,
        "messages": msgs,
    }


def choose_level(mixture: Mapping[str, float], seed: int, traj_id: str, step: int) -> str:
    """Deterministic draw from ``mixture`` keyed on (seed, trajectory, step)."""
    total = sum(mixture.values())
    if total <= 0 or any(v < 0 for v in mixture.values()):
        raise ValueError("mixture weights must be non-negative with a positive sum")
    h = hashlib.sha256(f"{seed}:{traj_id}:{step}".encode()).digest()
    u = int.from_bytes(h[:8], "big") / 2**64 * total
    acc = 0.0
    for level in LEVELS:
        acc += mixture.get(level, 0.0)
        if u < acc:
            return level
    return [lv for lv in LEVELS if mixture.get(lv, 0) > 0][-1]


def emit_training_samples(traj: Trajectory, cfg: Optional[SampleConfig] = None,
                          mixture: Optional[Mapping[str, float]] = None, seed: int = 0) -> list[dict]:
    """Samples in step order. With ``mixture`` each step draws its level; otherwise ``cfg.level``."""
    cfg = cfg or SampleConfig()
    out = []
    for i in range(len(traj.steps)):
        if not eligible(traj, i, cfg):
            continue
        level = choose_level(mixture, seed, traj.traj_id, i) if mixture else cfg.level
        out.append(build_sample(traj, i, level, cfg))
    return out


def image_count(sample: dict) -> int:
    return sum(1 for m in sample["messages"] for p in m["content"] if p["type"] == "image")


# ---------------------------------------------------------------------------
# schema

_SEC = {
    name: rf"## {name}:\n(?:(?!## )[^\n]*\n?)+?"
    for name in ("Observation", "Thought", "Action")
}
_CODE = r"## Code:\n```python\n[^\n]+\n```$"


def _target_pattern(level: str) -> str:
    body = "\n".join(_SEC[s] for s in SECTIONS[level] if s != "Code")
    return "^" + body + "\n" + _CODE


def sample_schema(level: str) -> dict:
    text = {"type": "object", "required": ["type", "text"], "additionalProperties": False,
            "properties": {"type": {"const": "text"}, "text": {"type": "string", "minLength": 1}}}
    image = {"type": "object", "required": ["type", "image"], "additionalProperties": False,
             "properties": {"type": {"const": "image"}, "image": {"type": "string", "minLength": 1}}}
    message = {
        "type": "object",
        "required": ["role", "content"],
        "additionalProperties": False,
        "properties": {
            "role": {"enum": ["system", "user", "assistant"]},
            "content": {"type": "array", "minItems": 1, "items": {"oneOf": [text, image]}},
        },
    }
    target = {
        "type": "object",
        "required": ["role", "content"],
        "properties": {
            "role": {"const": "assistant"},
            "content": {"type": "array", "minItems": 1, "maxItems": 1, "items": {
                "type": "object", "required": ["type", "text"],
                "properties": {"type": {"const": "text"},
                               "text": {"type": "string", "pattern": _target_pattern(level)}},
            }},
        },
    }
    system = {"type": "object", "properties": {"role": {"const": "system"}}}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["id", "trajectory", "step", "level", "messages"],
        "additionalProperties": False,
        "properties": {
            "id": {"type": "string"},
            "trajectory": {"type": "string"},
            "step": {"type": "integer", "minimum": 0},
            "level": {"const": level},
            "messages": {
                "type": "array",
                "minItems": 3,
                "items": message,
                "prefixItems": [system],
                "contains": target,
            },
        },
    }


def validate_sample(sample: dict) -> None:
    """Raise :class:`jsonschema.ValidationError` unless ``sample`` has the shape of its level."""
    level = sample.get("level")
    if level not in LEVELS:
        raise jsonschema.ValidationError(f"unknown level {level!r}")
    jsonschema.Draft202012Validator(sample_schema(level)).validate(sample)
    last = sample["messages"][-1]
    jsonschema.Draft202012Validator(sample_schema(level)["properties"]["messages"]["contains"]).validate(last)
