"""Domain types shared by every pipeline stage.

All values are frozen after construction. Agent actions validate and
normalize their fields on construction, so an action that exists is a
well-formed action; raw events stay permissive because malformed recordings
are reported by :func:`cuakit.validation.validate_demonstration` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, ClassVar, Literal, Mapping, Optional, Union

from .errors import DomainError
from .keys import KeyNameError, canonical_key, is_modifier, order_combo

OS = Literal["windows", "macos", "ubuntu"]
OS_NAMES = ("windows", "macos", "ubuntu")
BUTTONS = ("left", "right", "middle")
COORD_DECIMALS = 4


def norm_coord(value: Any, name: str = "coordinate") -> float:
    """Validate a normalized coordinate and quantize it to the canonical precision."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DomainError(f"{name} must be a number, got {value!r}")
    v = float(value)
    if math.isnan(v) or v < 0.0 or v > 1.0:
        raise DomainError(f"{name}={value!r} outside [0, 1]")
    return round(v, COORD_DECIMALS) + 0.0


def _key(name: str) -> str:
    try:
        return canonical_key(name)
    except KeyNameError as exc:
        raise DomainError(str(exc)) from None


def _set(obj, name, value):
    object.__setattr__(obj, name, value)


# ---------------------------------------------------------------------------
# Agent actions


class Action:
    """Base of the agent action union. Subclasses are frozen dataclasses."""

    kind: ClassVar[str] = ""

    @property
    def point(self) -> Optional[tuple[float, float]]:
        x = getattr(self, "x", None)
        y = getattr(self, "y", None)
        if x is None or y is None:
            return None
        return (x, y)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _check_button(button: str, allowed=BUTTONS) -> str:
    if button not in allowed:
        raise DomainError(f"button must be one of {allowed}, got {button!r}")
    return button


@dataclass(frozen=True)
class _Pointed(Action):
    x: float
    y: float

    def __post_init__(self):
        _set(self, "x", norm_coord(self.x, "x"))
        _set(self, "y", norm_coord(self.y, "y"))


@dataclass(frozen=True)
class Click(_Pointed):
    """Single click. Middle clicks are :class:`MiddleClick`."""

    kind: ClassVar[str] = "click"
    button: str = "left"

    def __post_init__(self):
        super().__post_init__()
        _check_button(self.button, ("left", "right"))


@dataclass(frozen=True)
class MiddleClick(_Pointed):
    kind: ClassVar[str] = "middleClick"


@dataclass(frozen=True)
class DoubleClick(_Pointed):
    kind: ClassVar[str] = "doubleClick"
    button: str = "left"

    def __post_init__(self):
        super().__post_init__()
        _check_button(self.button)


@dataclass(frozen=True)
class TripleClick(_Pointed):
    kind: ClassVar[str] = "tripleClick"
    button: str = "left"

    def __post_init__(self):
        super().__post_init__()
        _check_button(self.button)


@dataclass(frozen=True)
class MoveTo(_Pointed):
    kind: ClassVar[str] = "moveTo"


@dataclass(frozen=True)
class DragTo(_Pointed):
    kind: ClassVar[str] = "dragTo"


def _wheel_count(v: Any, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v) or v == 0:
        raise DomainError(f"{name} must be a nonzero integer, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class Scroll(Action):
    """Vertical wheel scroll; positive ``dy`` scrolls up. Position is optional."""

    kind: ClassVar[str] = "scroll"
    dy: int
    x: Optional[float] = None
    y: Optional[float] = None

    def __post_init__(self):
        _set(self, "dy", _wheel_count(self.dy, "dy"))
        _scroll_pos(self)

    @property
    def dx(self) -> int:
        return 0


@dataclass(frozen=True)
class HScroll(Action):
    """Horizontal wheel scroll; negative ``dx`` scrolls left."""

    kind: ClassVar[str] = "hscroll"
    dx: int
    x: Optional[float] = None
    y: Optional[float] = None

    def __post_init__(self):
        _set(self, "dx", _wheel_count(self.dx, "dx"))
        _scroll_pos(self)

    @property
    def dy(self) -> int:
        return 0


def _scroll_pos(a):
    if (a.x is None) != (a.y is None):
        raise DomainError("scroll position needs both x and y")
    if a.x is not None:
        _set(a, "x", norm_coord(a.x, "x"))
        _set(a, "y", norm_coord(a.y, "y"))


@dataclass(frozen=True)
class Write(Action):
    kind: ClassVar[str] = "write"
    text: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text:
            raise DomainError("write text must be a non-empty string")


@dataclass(frozen=True)
class Press(Action):
    kind: ClassVar[str] = "press"
    key: str

    def __post_init__(self):
        _set(self, "key", _key(self.key))


@dataclass(frozen=True)
class Hotkey(Action):
    kind: ClassVar[str] = "hotkey"
    keys: tuple[str, ...]

    def __post_init__(self):
        if isinstance(self.keys, str):
            raise DomainError("hotkey keys must be a sequence of key names")
        try:
            keys = order_combo(self.keys)
        except KeyNameError as exc:
            raise DomainError(str(exc)) from None
        if len(keys) < 2:
            raise DomainError("hotkey needs at least two keys")
        if len(set(keys)) != len(keys):
            raise DomainError(f"hotkey repeats a key: {keys}")
        _set(self, "keys", keys)

    @property
    def modifiers(self) -> tuple[str, ...]:
        return tuple(k for k in self.keys if is_modifier(k))


@dataclass(frozen=True)
class Wait(Action):
    kind: ClassVar[str] = "wait"


@dataclass(frozen=True)
class Terminate(Action):
    kind: ClassVar[str] = "terminate"
    status: str = "success"

    def __post_init__(self):
        if self.status not in ("success", "failure"):
            raise DomainError(f"terminate status must be success or failure, got {self.status!r}")


AgentAction = Union[
    Click, MiddleClick, DoubleClick, TripleClick, MoveTo, DragTo,
    Scroll, HScroll, Write, Press, Hotkey, Wait, Terminate,
]

ACTION_TYPES: dict[str, type] = {
    cls.kind: cls
    for cls in (Click, MiddleClick, DoubleClick, TripleClick, MoveTo, DragTo,
                Scroll, HScroll, Write, Press, Hotkey, Wait, Terminate)
}
CLICK_KINDS = frozenset({"click", "middleClick", "doubleClick", "tripleClick"})
POINTER_KINDS = CLICK_KINDS | {"moveTo", "dragTo"}


def action_from_dict(d: Mapping[str, Any]) -> Action:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in ACTION_TYPES:
        raise DomainError(f"unknown action kind {kind!r}")
    if kind == "hotkey":
        d["keys"] = tuple(d.get("keys", ()))
    return ACTION_TYPES[kind](**d)


def action_label(action: Action) -> str:
    """Benchmark-table label; right clicks count as ``rightClick``."""
    if isinstance(action, Click) and action.button == "right":
        return "rightClick"
    return action.kind


# ---------------------------------------------------------------------------
# Raw recording


@dataclass(frozen=True)
class RawEvent:
    timestamp: int
    device: str
    kind: str
    position: Optional[tuple[float, float]] = None
    button: Optional[str] = None
    wheel_delta: Optional[tuple[int, int]] = None
    key: Optional[str] = None

    def to_record(self) -> dict:
        rec: dict[str, Any] = {"t": self.timestamp, "device": self.device, "kind": self.kind}
        if self.position is not None:
            rec["x"], rec["y"] = self.position
        if self.button is not None:
            rec["button"] = self.button
        if self.wheel_delta is not None:
            rec["dx"], rec["dy"] = self.wheel_delta
        if self.key is not None:
            rec["key"] = self.key
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RawEvent":
        pos = None
        if "x" in rec or "y" in rec:
            pos = (rec.get("x"), rec.get("y"))
        wheel = None
        if "dx" in rec or "dy" in rec:
            wheel = (rec.get("dx", 0), rec.get("dy", 0))
        key = rec.get("key")
        if key is not None:
            try:
                key = canonical_key(key)
            except KeyNameError:
                pass  # left for validation to report
        return cls(
            timestamp=rec["t"],
            device=rec["device"],
            kind=rec["kind"],
            position=pos,
            button=rec.get("button"),
            wheel_delta=wheel,
            key=key,
        )


@dataclass(frozen=True)
class Frame:
    index: int
    timestamp: int
    image: str
    width: int
    height: int


@dataclass(frozen=True)
class RawDemonstration:
    instruction: str
    os: str
    resolution: tuple[int, int]
    events: tuple[RawEvent, ...]
    frames: tuple[Frame, ...]
    axtree_snapshots: Mapping[int, str] = field(default_factory=dict)
    status: str = "success"
    demo_id: str = ""


# ---------------------------------------------------------------------------
# Synthesized annotations


@dataclass(frozen=True)
class ReflectionVerdict:
    status: str
    rationale: str = ""
    state_change: Optional[str] = None

    def __post_init__(self):
        if self.status not in ("correct", "incorrect", "redundant"):
            raise ValueError(f"unknown verdict status {self.status!r}")
        if self.status == "correct" and not self.state_change:
            raise ValueError("a correct verdict needs a state_change description")
        if self.status != "correct" and not self.rationale:
            raise ValueError(f"a {self.status} verdict needs a rationale")


@dataclass(frozen=True)
class StructuredCoT:
    action_description: str
    thought: Optional[str] = None
    observation: Optional[str] = None

    def __post_init__(self):
        if not self.action_description:
            raise ValueError("action_description is required")
        if self.observation is not None and self.thought is None:
            raise ValueError("observation requires thought")

    @property
    def level(self) -> str:
        if self.observation is not None:
            return "L3"
        if self.thought is not None:
            return "L2"
        return "L1"


@dataclass(frozen=True)
class TrajectorySummary:
    refined_instruction: str
    alignment: int
    efficiency: int
    difficulty: int

    def __post_init__(self):
        if not self.refined_instruction:
            raise ValueError("refined_instruction must be non-empty")
        for name in ("alignment", "efficiency", "difficulty"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 10:
                raise ValueError(f"{name} score {v!r} outside 1..10")


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class Step:
    state: Frame
    action: Action
    span: Optional[tuple[int, int]]
    cot: Optional[StructuredCoT] = None
    verdict: Optional[ReflectionVerdict] = None

    def __post_init__(self):
        if self.span is not None:
            a, b = self.span
            if a > b or a < 0:
                raise ValueError(f"invalid span {self.span}")
        elif not isinstance(self.action, Terminate):
            raise ValueError("only the appended terminate step may lack a span")

    @property
    def flagged(self) -> bool:
        return self.verdict is not None and self.verdict.status != "correct"


@dataclass(frozen=True)
class Trajectory:
    instruction: str
    os: str
    steps: tuple[Step, ...]
    resolution: tuple[int, int] = (1920, 1080)
    refined_instruction: Optional[str] = None
    summary: Optional[TrajectorySummary] = None
    privacy: Optional[str] = None
    failed_steps: tuple[int, ...] = ()
    traj_id: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _set(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("a trajectory needs at least the terminate step")
        terms = [i for i, s in enumerate(self.steps) if isinstance(s.action, Terminate)]
        if terms != [len(self.steps) - 1]:
            raise ValueError("exactly one terminate action is required, as the final step")
        last_end = -1
        for s in self.steps:
            if s.span is None:
                continue
            if s.span[0] <= last_end:
                raise ValueError("step spans must be disjoint and ordered")
            last_end = s.span[1]

    @property
    def terminal_index(self) -> int:
        return len(self.steps) - 1

    def with_step(self, i: int, **changes) -> "Trajectory":
        steps = list(self.steps)
        steps[i] = replace(steps[i], **changes)
        return replace(self, steps=tuple(steps))
