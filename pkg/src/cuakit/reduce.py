"""Rule-based compression of raw input events into agent actions.

One left-to-right pass over the event stream. At most one action is
pending at any time (a typing run, a scroll run, or a click group that may
still grow into a double or triple click); starting anything else flushes
it, so emitted actions are already in timestamp order. Each action owns a
span of raw event indices. Pointer moves outside a button hold belong to no
span: only their end position survives, as the coordinates of the next
click or as the start of a drag.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

from .keys import canonical_key, is_modifier, is_text_key, order_combo, typed_char
from .model import (
    Action,
    Click,
    DoubleClick,
    DragTo,
    HScroll,
    Hotkey,
    MiddleClick,
    MoveTo,
    Press,
    RawDemonstration,
    RawEvent,
    Scroll,
    TripleClick,
    Write,
)

logger = logging.getLogger(__name__)

Span = tuple[int, int]


@dataclass(frozen=True)
class ReducerConfig:
    double_click_window: int = 500
    multi_click_radius: float = 0.01
    drag_min_distance: float = 0.005
    scroll_merge_gap: int = 1000
    typing_merge_gap: int = 2000
    modifier_set: frozenset = frozenset({"ctrl", "shift", "alt", "cmd", "win"})

    def __post_init__(self):
        for name in ("double_click_window", "scroll_merge_gap", "typing_merge_gap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("multi_click_radius", "drag_min_distance"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1)")


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


class _Pending:
    __slots__ = ("kind", "start", "end", "last_t", "text", "axis", "total", "pos",
                 "button", "count", "last_down_t")

    def __init__(self, kind, start, end, last_t):
        self.kind = kind
        self.start = start
        self.end = end
        self.last_t = last_t


class _Reducer:
    def __init__(self, cfg: ReducerConfig):
        self.cfg = cfg
        self.out: list[list] = []  # [action, start, end]
        self.pending: Optional[_Pending] = None
        self.held: dict[str, int] = {}
        self.mod_start: Optional[int] = None  # first modifier down not yet owned by an action
        self.pointer = None
        self.anchor = None  # pointer position after the last emitted action
        self.press = None

    # -- span bookkeeping -------------------------------------------------

    def _last_end(self) -> int:
        if self.pending is not None:
            return self.pending.end
        return self.out[-1][2] if self.out else -1

    def _claim_start(self, i: int) -> int:
        start = i if self.mod_start is None else min(self.mod_start, i)
        self.mod_start = None
        return max(start, self._last_end() + 1)

    def _emit(self, action: Action, start: int, end: int):
        self.out.append([action, start, end])

    def _attach(self, i: int):
        """Give event ``i`` to the most recent action, if any."""
        if self.pending is not None:
            self.pending.end = max(self.pending.end, i)
        elif self.out:
            self.out[-1][2] = max(self.out[-1][2], i)

    def flush(self):
        p = self.pending
        if p is None:
            return
        self.pending = None
        if p.kind == "typing":
            self._emit(Write(p.text), p.start, p.end)
        elif p.kind == "scroll":
            x, y = p.pos
            cls = Scroll if p.axis == "v" else HScroll
            self._emit(cls(p.total, x, y), p.start, p.end)
            self.anchor = p.pos
        elif p.kind == "clicks":
            x, y = p.pos
            if p.count == 1:
                a = MiddleClick(x, y) if p.button == "middle" else Click(x, y, p.button)
            elif p.count == 2:
                a = DoubleClick(x, y, p.button)
            else:
                a = TripleClick(x, y, p.button)
            self._emit(a, p.start, p.end)
            self.anchor = p.pos

    # -- keyboard ---------------------------------------------------------

    def key_down(self, i: int, ev: RawEvent):
        key = canonical_key(ev.key)
        if is_modifier(key) and key in self.cfg.modifier_set:
            if key in self.held:
                self._attach(i)  # auto-repeat
                return
            self.held[key] = i
            if self.mod_start is None:
                self.mod_start = i
            if key != "shift" and self.pending is not None:
                self.flush()
            elif self.pending is not None and self.pending.kind != "typing":
                self.flush()
            return
        non_shift = [k for k in self.held if k != "shift"]
        shift = "shift" in self.held
        if non_shift:
            self.flush()
            start = self._claim_start(i)
            self._emit(Hotkey(order_combo(list(self.held) + [key])), start, i)
            return
        if is_text_key(key):
            ch = typed_char(key, shift)
            p = self.pending
            if p is not None and p.kind == "typing" and ev.timestamp - p.last_t <= self.cfg.typing_merge_gap:
                p.text += ch
                p.end = i
                p.last_t = ev.timestamp
                self.mod_start = None
                return
            self.flush()
            start = self._claim_start(i)
            p = _Pending("typing", start, i, ev.timestamp)
            p.text = ch
            self.pending = p
            return
        self.flush()
        start = self._claim_start(i)
        action = Hotkey(("shift", key)) if shift else Press(key)
        self._emit(action, start, i)

    def key_up(self, i: int, ev: RawEvent):
        key = canonical_key(ev.key)
        if key in self.held:
            del self.held[key]
            if self.mod_start is not None and not self.held:
                # modifiers pressed and released with nothing in between
                taps = [k for k in order_combo(self._tapped(i))]
                self.flush()
                start = self._claim_start(self._first_tap)
                if len(taps) == 1:
                    self._emit(Press(taps[0]), start, i)
                else:
                    self._emit(Hotkey(tuple(taps)), start, i)
                return
            if self.mod_start is not None:
                return  # still part of an unclaimed modifier group
        self._attach(i)

    def _tapped(self, i):
        self._first_tap = self.mod_start
        keys = []
        for j in range(self.mod_start, i + 1):
            ev = self._events[j]
            if ev.device == "keyboard" and ev.kind == "key_down":
                k = canonical_key(ev.key)
                if is_modifier(k) and k not in keys:
                    keys.append(k)
        return keys

    # -- mouse ------------------------------------------------------------

    def move(self, i: int, ev: RawEvent):
        self.pointer = ev.position
        if self.press is not None:
            return
        p = self.pending
        if p is not None and p.kind in ("typing", "scroll"):
            self.flush()

    def button_down(self, i: int, ev: RawEvent):
        pos = ev.position
        p = self.pending
        grow = (
            p is not None
            and p.kind == "clicks"
            and p.button == ev.button
            and p.count < 3
            and ev.timestamp - p.last_down_t <= self.cfg.double_click_window
            and _dist(pos, p.pos) <= self.cfg.multi_click_radius
        )
        if grow:
            p.last_down_t = ev.timestamp
            self.mod_start = None
            start = None
        else:
            self.flush()
            start = self._claim_start(i)
        self.press = {"button": ev.button, "down": i, "pos": pos, "start": start, "grow": grow}
        self.pointer = pos

    def button_up(self, i: int, ev: RawEvent):
        pr = self.press
        if pr is None or pr["button"] != ev.button:
            logger.warning("button_up without matching press at event %d", i)
            self._attach(i)
            return
        self.press = None
        pos = ev.position
        self.pointer = pos
        if not pr["grow"] and _dist(pr["pos"], pos) >= self.cfg.drag_min_distance:
            start = pr["start"]
            if self.anchor is None or self.anchor != pr["pos"]:
                self._emit(MoveTo(*pr["pos"]), start, pr["down"])
                start = pr["down"] + 1
            self._emit(DragTo(*pos), start, i)
            self.anchor = pos
            return
        if pr["grow"]:
            p = self.pending
            p.count += 1
            p.end = i
            p.pos = pos
            return
        p = _Pending("clicks", pr["start"], i, ev.timestamp)
        p.button = ev.button
        p.count = 1
        p.pos = pos
        p.last_down_t = self._events[pr["down"]].timestamp
        self.pending = p

    def wheel(self, i: int, ev: RawEvent):
        self.pointer = ev.position
        dx, dy = ev.wheel_delta or (0, 0)
        if dy:
            axis, amount = "v", dy
        elif dx:
            axis, amount = "h", dx
        else:
            self._attach(i)
            return
        p = self.pending
        if (
            p is not None
            and p.kind == "scroll"
            and p.axis == axis
            and (p.total > 0) == (amount > 0)
            and ev.timestamp - p.last_t <= self.cfg.scroll_merge_gap
        ):
            p.total += amount
            p.end = i
            p.last_t = ev.timestamp
            p.pos = ev.position
            self.mod_start = None
            return
        self.flush()
        start = self._claim_start(i)
        p = _Pending("scroll", start, i, ev.timestamp)
        p.axis = axis
        p.total = amount
        p.pos = ev.position
        self.pending = p

    def run(self, events) -> list[tuple[Action, Span]]:
        self._events = events
        handlers = {
            ("keyboard", "key_down"): self.key_down,
            ("keyboard", "key_up"): self.key_up,
            ("mouse", "move"): self.move,
            ("mouse", "button_down"): self.button_down,
            ("mouse", "button_up"): self.button_up,
            ("mouse", "wheel"): self.wheel,
        }
        for i, ev in enumerate(events):
            h = handlers.get((ev.device, ev.kind))
            if h is None:
                logger.warning("ignoring event %d of kind %s/%s", i, ev.device, ev.kind)
                continue
            h(i, ev)
        if self.press is not None:
            logger.warning("stream ends with %s button held; press dropped", self.press["button"])
        self.flush()
        return [(a, (s, e)) for a, s, e in self.out]


def reduce(demo: RawDemonstration, cfg: Optional[ReducerConfig] = None) -> list[tuple[Action, Span]]:
    """Compress ``demo.events`` into ``(action, (first_event, last_event))`` pairs."""
    return reduce_events(demo.events, cfg)


def reduce_events(events, cfg: Optional[ReducerConfig] = None) -> list[tuple[Action, Span]]:
    return _Reducer(cfg or ReducerConfig()).run(list(events))
