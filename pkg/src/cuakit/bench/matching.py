"""Per-step action matching against annotated gold options."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

from ..dsl import render_action
from ..errors import DomainError
from ..keys import KeyNameError, order_combo
from ..model import Action, action_label

COORD_KINDS = frozenset({"click", "rightClick", "middleClick", "doubleClick", "tripleClick",
                         "moveTo", "dragTo", "scroll"})
CONTENT_KINDS = frozenset({"write", "press", "hotkey"})
FUNCTION_KINDS = frozenset({"terminate", "wait"})
OPTION_KINDS = COORD_KINDS | CONTENT_KINDS | FUNCTION_KINDS
CATEGORIES = ("coord", "content", "function")
DIRECTIONS = ("up", "down", "left", "right")
_KEY_KINDS = ("press", "hotkey")


def category_of(kind: str) -> str:
    if kind in COORD_KINDS or kind == "hscroll":
        return "coord"
    if kind in CONTENT_KINDS:
        return "content"
    return "function"


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert, delete and substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return levenshtein(a, b) / longest if longest else 0.0


@dataclass(frozen=True)
class BBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (0 <= self.x_min <= self.x_max <= 1 and 0 <= self.y_min <= self.y_max <= 1):
            raise DomainError(f"bbox {self} is not well-ordered inside [0, 1]")

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min, "y_max": self.y_max}


@dataclass(frozen=True)
class GoldOption:
    """One acceptable action at a benchmark step; which fields apply depends on ``kind``."""

    kind: str
    bbox: Optional[BBox] = None
    text: Optional[str] = None
    max_distance: float = 0.1
    case_sensitive: bool = True
    keys: Optional[tuple[str, ...]] = None
    direction: Optional[str] = None
    status: Optional[str] = None
    button: Optional[str] = None

    def __post_init__(self):
        kind = "scroll" if self.kind == "hscroll" else self.kind
        object.__setattr__(self, "kind", kind)
        if kind not in OPTION_KINDS:
            raise DomainError(f"unknown gold option kind {self.kind!r}")
        if isinstance(self.bbox, Mapping):
            object.__setattr__(self, "bbox", BBox(**self.bbox))
        if kind in COORD_KINDS - {"scroll"} and self.bbox is None:
            raise DomainError(f"{kind} option needs a bbox")
        if kind == "write":
            if self.text is None:
                raise DomainError("write option needs target text")
            if not 0 <= self.max_distance <= 1:
                raise DomainError("max_distance must be in [0, 1]")
        if kind in _KEY_KINDS:
            if not self.keys:
                raise DomainError(f"{kind} option needs keys")
            try:
                object.__setattr__(self, "keys", order_combo(self.keys))
            except KeyNameError as exc:
                raise DomainError(str(exc)) from None
        if kind == "scroll" and self.direction not in DIRECTIONS:
            raise DomainError(f"scroll option needs a direction in {DIRECTIONS}")
        if kind == "terminate" and self.status not in (None, "success", "failure"):
            raise DomainError(f"terminate status {self.status!r}")

    @property
    def category(self) -> str:
        return category_of(self.kind)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.bbox is not None:
            d["bbox"] = self.bbox.to_dict()
        if self.kind == "write":
            d["text"] = self.text
            d["max_distance"] = self.max_distance
            d["case_sensitive"] = self.case_sensitive
        if self.keys is not None:
            d["keys"] = list(self.keys)
        for name in ("direction", "status", "button"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GoldOption":
        d = dict(d)
        if "keys" in d and d["keys"] is not None:
            d["keys"] = tuple(d["keys"])
        return cls(**d)


@dataclass(frozen=True)
class MatchConfig:
    check_status: bool = True


@dataclass(frozen=True)
class StepResult:
    step: int
    predicted: Optional[str]  # canonical action code, or None when nothing parsed
    error: Optional[str]  # error code when the response had no usable action
    matched: Optional[int]
    success: bool
    category: str

    def __post_init__(self):
        if self.success and self.matched is None:
            raise ValueError("a successful step must name the matched option")

    def to_dict(self) -> dict:
        return {"step": self.step, "predicted": self.predicted, "error": self.error,
                "matched": self.matched, "success": self.success, "category": self.category}

    @classmethod
    def from_dict(cls, d) -> "StepResult":
        return cls(**d)


def _scroll_direction(a: Action) -> Optional[str]:
    if a.kind == "scroll":
        return "up" if a.dy > 0 else "down"
    if a.kind == "hscroll":
        return "right" if a.dx > 0 else "left"
    return None


def option_matches(pred: Action, opt: GoldOption, cfg: MatchConfig = MatchConfig()) -> bool:
    label = action_label(pred)
    kind = opt.kind
    if kind == "scroll":
        direction = _scroll_direction(pred)
        if direction != opt.direction:
            return False
        if opt.bbox is None:
            return True
        return pred.point is not None and opt.bbox.contains(*pred.point)
    if kind in COORD_KINDS:
        if label != kind:
            return False
        if opt.button is not None and getattr(pred, "button", "left") != opt.button:
            return False
        return opt.bbox.contains(pred.x, pred.y)
    if kind == "write":
        if label != "write":
            return False
        a, b = pred.text, opt.text
        if not opt.case_sensitive:
            a, b = a.lower(), b.lower()
        return normalized_edit_distance(a, b) <= opt.max_distance
    if kind in _KEY_KINDS:
        if label not in _KEY_KINDS:
            return False
        keys = (pred.key,) if label == "press" else pred.keys
        return tuple(keys) == tuple(opt.keys)
    if kind == "terminate":
        if label != "terminate":
            return False
        return not (cfg.check_status and opt.status is not None and pred.status != opt.status)
    if kind == "wait":
        return label == "wait"
    return False


def step_category(options: Sequence[GoldOption]) -> str:
    """A step's category follows its first (preferred) gold option."""
    return options[0].category


def match_step(predicted: Optional[Action], options: Sequence[GoldOption],
               cfg: Optional[MatchConfig] = None, step: int = 0, error: Optional[str] = None) -> StepResult:
    if not options:
        raise ValueError("a benchmark step needs at least one gold option")
    cfg = cfg or MatchConfig()
    cat = step_category(options)
    if predicted is None:
        return StepResult(step, None, error or "no_action", None, False, cat)
    for k, opt in enumerate(options):
        if option_matches(predicted, opt, cfg):
            return StepResult(step, render_action(predicted), None, k, True, cat)
    return StepResult(step, render_action(predicted), None, None, False, cat)
