"""Deterministic desktop simulator used as the equivalence oracle for reduction.

Actions and raw events drive the same machine. The click log records
primitive button presses and releases, and text goes to a buffer keyed by
the position of the last press, so a stream and its reduction are judged by
their effect alone, with no reference to the reducer's grouping thresholds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .keys import canonical_key, is_modifier, is_text_key, order_combo, typed_char
from .model import Action, RawEvent

logger = logging.getLogger(__name__)

Point = tuple[float, float]


def _pt(p) -> Point:
    return (round(float(p[0]), 4) + 0.0, round(float(p[1]), 4) + 0.0)


@dataclass(frozen=True)
class SimState:
    pointer: Optional[Point] = None
    focus: Optional[Point] = None
    buffers: tuple = ()  # sorted ((focus, text), ...)
    scroll: tuple[int, int] = (0, 0)
    modifiers: frozenset = frozenset()
    clicks: tuple = ()  # (("down" | "up", button, point), ...)
    keys: tuple = ()  # key combinations that produced no text
    status: Optional[str] = None

    def text_at(self, focus=None) -> str:
        return dict(self.buffers).get(focus, "")


class _Sim:
    def __init__(self, s: SimState):
        self.pointer = s.pointer
        self.focus = s.focus
        self.buffers = dict(s.buffers)
        self.scroll = list(s.scroll)
        self.modifiers = set(s.modifiers)
        self.clicks = list(s.clicks)
        self.keys = list(s.keys)
        self.status = s.status
        # raw-event modifier tracking
        self.tap: list[str] = []
        self.tap_used = False

    def freeze(self) -> SimState:
        buffers = tuple(sorted(self.buffers.items(), key=lambda kv: (kv[0] is not None, kv[0] or (0, 0))))
        return SimState(
            pointer=self.pointer,
            focus=self.focus,
            buffers=buffers,
            scroll=tuple(self.scroll),
            modifiers=frozenset(self.modifiers),
            clicks=tuple(self.clicks),
            keys=tuple(self.keys),
            status=self.status,
        )

    # primitives shared by both interpretations

    def down(self, button, p):
        self.pointer = _pt(p)
        self.focus = self.pointer
        self.clicks.append(("down", button, self.pointer))

    def up(self, button, p):
        self.pointer = _pt(p)
        self.clicks.append(("up", button, self.pointer))

    def stroke(self, mods: Iterable[str], key: str):
        mods = set(mods)
        if is_text_key(key) and not (mods - {"shift"}):
            ch = typed_char(key, "shift" in mods)
            self.buffers[self.focus] = self.buffers.get(self.focus, "") + ch
        else:
            self.keys.append(order_combo(list(mods) + [key]))

    # action interpretation

    def act(self, a: Action):
        k = a.kind
        if k in ("click", "middleClick", "doubleClick", "tripleClick"):
            button = "middle" if k == "middleClick" else a.button
            n = {"doubleClick": 2, "tripleClick": 3}.get(k, 1)
            for _ in range(n):
                self.down(button, (a.x, a.y))
                self.up(button, (a.x, a.y))
        elif k == "moveTo":
            self.pointer = _pt((a.x, a.y))
        elif k == "dragTo":
            self.down("left", self.pointer if self.pointer is not None else (a.x, a.y))
            self.up("left", (a.x, a.y))
        elif k in ("scroll", "hscroll"):
            if a.x is not None:
                self.pointer = _pt((a.x, a.y))
            self.scroll[0] += a.dx
            self.scroll[1] += a.dy
        elif k == "write":
            for ch in a.text:
                self.buffers[self.focus] = self.buffers.get(self.focus, "") + ch
        elif k == "press":
            self.stroke((), a.key)
        elif k == "hotkey":
            keys = list(a.keys)
            if all(is_modifier(x) for x in keys):
                self.keys.append(tuple(keys))
            else:
                self.stroke(keys[:-1], keys[-1])
        elif k == "wait":
            pass
        elif k == "terminate":
            self.status = a.status
        else:
            logger.warning("replay: unknown action %r ignored", a)

    # raw event interpretation

    def event(self, ev: RawEvent):
        if ev.device == "mouse":
            if ev.kind == "move":
                self.pointer = _pt(ev.position)
            elif ev.kind == "button_down":
                self.down(ev.button, ev.position)
            elif ev.kind == "button_up":
                self.up(ev.button, ev.position)
            elif ev.kind == "wheel":
                self.pointer = _pt(ev.position)
                dx, dy = ev.wheel_delta or (0, 0)
                self.scroll[0] += dx
                self.scroll[1] += dy
            else:
                logger.warning("replay: unknown mouse event %s", ev.kind)
            return
        if ev.device != "keyboard":
            logger.warning("replay: unknown device %s", ev.device)
            return
        key = canonical_key(ev.key)
        if ev.kind == "key_down":
            if is_modifier(key):
                if not self.modifiers:
                    self.tap = []
                    self.tap_used = False
                if key not in self.modifiers:
                    self.modifiers.add(key)
                    if key not in self.tap:
                        self.tap.append(key)
                return
            if self.modifiers:
                self.tap_used = True
            self.stroke(self.modifiers, key)
        elif ev.kind == "key_up":
            if key in self.modifiers:
                self.modifiers.discard(key)
                if not self.modifiers:
                    if self.tap and not self.tap_used:
                        self.keys.append(order_combo(self.tap))
                    self.tap = []
                    self.tap_used = False
        else:
            logger.warning("replay: unknown keyboard event %s", ev.kind)


def replay(actions: Iterable[Action], initial: SimState = SimState()) -> SimState:
    sim = _Sim(initial)
    for a in actions:
        sim.act(a)
    return sim.freeze()


def replay_events(events: Iterable[RawEvent], initial: SimState = SimState()) -> SimState:
    sim = _Sim(initial)
    for ev in events:
        sim.event(ev)
    return sim.freeze()
