"""Synthetic ground truth: random action scripts, their raw-event lowering, and demo corpora.

A script is a list of canonical actions, meaning actions the reducer can
recover exactly: no adjacent writes, a moveTo only as the start of a drag
that begins away from the current pointer, hotkeys that do not type text.
:func:`lower` turns a script into a jittered event stream with human-like
timing and records where each action's events start, which is what the
keyframe tests need as ground truth.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .bench.evaluate import BENCH_FORMAT
from .dsl import render_action
from .keys import keystroke_for
from .model import (
    Action,
    Click,
    DoubleClick,
    DragTo,
    Frame,
    HScroll,
    Hotkey,
    MiddleClick,
    MoveTo,
    Press,
    RawDemonstration,
    RawEvent,
    Scroll,
    Terminate,
    TripleClick,
    Write,
    action_label,
)
from .storage import save_demonstration

TEXT_ALPHABET = string.ascii_letters + string.digits + " .,-_@!?:/'\"()#"
PRESS_KEYS = ("enter", "tab", "esc", "backspace", "delete", "up", "down", "left", "right",
              "home", "end", "pageup", "pagedown", "f2", "f5")
HOTKEY_KEYS = tuple(string.ascii_lowercase + string.digits) + ("tab", "enter", "delete", "left", "right", "f4")

_KIND_WEIGHTS = {
    "click": 24, "rightClick": 4, "middleClick": 2, "doubleClick": 6, "tripleClick": 2,
    "drag": 6, "scroll": 8, "hscroll": 2, "write": 15, "press": 10, "hotkey": 10, "modtap": 2,
}


def _coord(rng: random.Random) -> float:
    return round(rng.uniform(0.02, 0.98), 4)


def _point(rng):
    return (_coord(rng), _coord(rng))


def random_script(rng: random.Random, length: int) -> list[Action]:
    """A canonical script of roughly ``length`` actions (a drag counts as two)."""
    kinds, weights = zip(*_KIND_WEIGHTS.items())
    out: list[Action] = []
    pointer = None
    while len(out) < length:
        kind = rng.choices(kinds, weights)[0]
        if kind == "write" and out and isinstance(out[-1], Write):
            continue
        if kind in ("click", "rightClick", "middleClick", "doubleClick", "tripleClick"):
            x, y = pointer if pointer and rng.random() < 0.15 else _point(rng)
            if kind == "click":
                a = Click(x, y)
            elif kind == "rightClick":
                a = Click(x, y, "right")
            elif kind == "middleClick":
                a = MiddleClick(x, y)
            elif kind == "doubleClick":
                a = DoubleClick(x, y, "right" if rng.random() < 0.1 else "left")
            else:
                a = TripleClick(x, y)
            out.append(a)
            pointer = (a.x, a.y)
        elif kind == "drag":
            start = pointer if pointer and rng.random() < 0.3 else _point(rng)
            while True:
                end = _point(rng)
                if abs(end[0] - start[0]) + abs(end[1] - start[1]) >= 0.05:
                    break
            if start != pointer:
                out.append(MoveTo(*start))
            out.append(DragTo(*end))
            pointer = end
        elif kind in ("scroll", "hscroll"):
            x, y = pointer if pointer and rng.random() < 0.3 else _point(rng)
            n = rng.randint(1, 10) * rng.choice((-1, 1))
            out.append(Scroll(n, x, y) if kind == "scroll" else HScroll(n, x, y))
            pointer = (x, y)
        elif kind == "write":
            text = "".join(rng.choice(TEXT_ALPHABET) for _ in range(rng.randint(1, 12)))
            out.append(Write(text))
        elif kind == "press":
            out.append(Press(rng.choice(PRESS_KEYS)))
        elif kind == "hotkey":
            mods = rng.sample(("ctrl", "alt", rng.choice(("cmd", "win"))), rng.choice((1, 1, 1, 2)))
            if rng.random() < 0.25:
                mods.append("shift")
            if rng.random() < 0.1:
                out.append(Hotkey(("shift", rng.choice(PRESS_KEYS))))
            else:
                out.append(Hotkey(tuple(mods) + (rng.choice(HOTKEY_KEYS),)))
        else:
            if rng.random() < 0.7:
                out.append(Press(rng.choice(("ctrl", "shift", "alt", "cmd"))))
            else:
                out.append(Hotkey(tuple(rng.sample(("ctrl", "alt", "shift"), 2))))
    return out


# ---------------------------------------------------------------------------
# lowering


@dataclass
class ActionMark:
    """Ground-truth timing of one lowered action.

    ``first_event``/``last_event`` bound the events the action owns: pre-movement
    moves are not owned, so for press-initiated actions the span opens at the press.
    """

    action: Action
    first_event: int
    last_event: int
    t_first: int
    t_last: int
    t_press: Optional[int] = None  # button down, for press-initiated actions
    t_move: Optional[int] = None  # start of the pre-movement phase (== t_press when no motion)


@dataclass
class Lowered:
    events: list[RawEvent]
    marks: list[ActionMark]
    end_t: int


class _Lowerer:
    def __init__(self, rng: random.Random, t0: int = 500):
        self.rng = rng
        self.t = t0
        self.events: list[RawEvent] = []
        self.pointer = None
        self.rest_after = 0  # minimum idle before the next action
        self._move_start = None

    def emit(self, dt_min, dt_max, device, kind, **kw):
        self.t += self.rng.randint(dt_min, dt_max)
        self.events.append(RawEvent(self.t, device, kind, **kw))
        return len(self.events) - 1

    def mouse(self, kind, pos, dt=(25, 45), **kw):
        i = self.emit(*dt, "mouse", kind, position=pos, **kw)
        if kind == "move":
            self.pointer = pos
        return i

    def travel(self, target, dt_first) -> Optional[int]:
        """Jittered moves ending exactly on ``target``; returns the first move index."""
        if self.pointer == target:
            return None
        src = self.pointer or _point(self.rng)
        n = self.rng.randint(5, 10)
        first = None
        for k in range(1, n + 1):
            f = k / n
            if k < n:
                x = min(1.0, max(0.0, src[0] + (target[0] - src[0]) * f + self.rng.uniform(-0.01, 0.01)))
                y = min(1.0, max(0.0, src[1] + (target[1] - src[1]) * f + self.rng.uniform(-0.01, 0.01)))
                pos = (round(x, 6), round(y, 6))
            else:
                pos = target
            i = self.mouse("move", pos, dt_first if k == 1 else (25, 45))
            first = i if first is None else first
        return first

    def key(self, kind, key, dt=(40, 120)):
        return self.emit(*dt, "keyboard", kind, key=key)

    def idle(self, lo, hi):
        return (max(lo, self.rest_after), max(hi, self.rest_after + 50))

    def lower(self, a: Action, nxt: Optional[Action]) -> ActionMark:
        rng = self.rng
        start = len(self.events)
        t_press = t_move = None
        k = a.kind
        if k in ("click", "middleClick", "doubleClick", "tripleClick", "moveTo", "dragTo"):
            if k == "dragTo":
                # button goes down where a preceding moveTo left the pointer
                if self.events and self.events[-1].kind == "button_down":
                    start = len(self.events)
                else:
                    t_move, t_press = self._press(self.pointer, "left", self.idle(350, 700))
                    start = len(self.events) - 1
                moves = rng.randint(6, 12)
                src = self.pointer
                for j in range(1, moves + 1):
                    f = j / moves
                    pos = (a.x, a.y) if j == moves else (
                        round(src[0] + (a.x - src[0]) * f, 6), round(src[1] + (a.y - src[1]) * f, 6))
                    self.mouse("move", pos)
                self.mouse("button_up", (a.x, a.y), (40, 100), button="left")
                self.rest_after = 600
            elif k == "moveTo":
                t_move, t_press = self._press((a.x, a.y), "left", self.idle(350, 700), pause=(80, 150))
                start = len(self.events) - 1
            else:
                button = "middle" if k == "middleClick" else a.button
                n = {"doubleClick": 2, "tripleClick": 3}.get(k, 1)
                t_move, t_press = self._press((a.x, a.y), button, self.idle(350, 700))
                start = len(self.events) - 1
                self.mouse("button_up", (a.x, a.y), (50, 90), button=button)
                for _ in range(n - 1):
                    self.mouse("button_down", (a.x, a.y), (60, 120), button=button)
                    self.mouse("button_up", (a.x, a.y), (50, 90), button=button)
                self.rest_after = 600
        elif k in ("scroll", "hscroll"):
            amount = a.dy if k == "scroll" else a.dx
            moved = self.travel((a.x, a.y), self.idle(350, 700)) is not None
            first_wheel = len(self.events)
            sign = 1 if amount > 0 else -1
            left = abs(amount)
            dt = (40, 90) if moved else self.idle(300, 500)
            while left:
                c = min(left, rng.randint(1, 3))
                left -= c
                delta = (0, sign * c) if k == "scroll" else (sign * c, 0)
                self.mouse("wheel", (a.x, a.y), dt, wheel_delta=delta)
                dt = (40, 90)
            start = first_wheel
            self.rest_after = 1100
        elif k == "write":
            self._type(a.text)
            self.rest_after = 2100 if isinstance(nxt, Write) else 300
        elif k == "press":
            self.key("key_down", a.key, self.idle(250, 500))
            self.key("key_up", a.key, (50, 100))
            self.rest_after = 300
        elif k == "hotkey":
            mods = [x for x in a.keys if x in ("ctrl", "alt", "shift", "cmd", "win")]
            rest = [x for x in a.keys if x not in mods]
            rng.shuffle(mods)
            dt = self.idle(250, 500)
            for m in mods:
                self.key("key_down", m, dt)
                dt = (30, 80)
            for x in rest:
                self.key("key_down", x, (30, 80))
                self.key("key_up", x, (40, 90))
            ups = list(mods)
            rng.shuffle(ups)
            for m in ups:
                self.key("key_up", m, (20, 60))
            self.rest_after = 300
        else:
            raise ValueError(f"cannot lower {a!r}")
        end = len(self.events) - 1
        return ActionMark(a, start, end, self.events[start].timestamp, self.events[end].timestamp,
                          t_press, t_move)

    def _press(self, target, button, idle, pause=(30, 120)):
        self._move_start = None
        first = self.travel(target, idle)
        if first is not None:
            self._move_start = first
            i = self.mouse("button_down", target, pause, button=button)
            return self.events[first].timestamp, self.events[i].timestamp
        i = self.mouse("button_down", target, idle, button=button)
        return self.events[i].timestamp, self.events[i].timestamp

    def _type(self, text: str):
        rng = self.rng
        dt = self.idle(250, 500)
        pending_up = None  # key still held for rollover
        for ch in text:
            key, shift = keystroke_for(ch)
            if pending_up == key:
                self.key("key_up", pending_up, (30, 80))
                pending_up = None
            if shift:
                if pending_up:
                    self.key("key_up", pending_up, (30, 80))
                    pending_up = None
                self.key("key_down", "shift", dt)
                self.key("key_down", key, (30, 80))
                self.key("key_up", key, (40, 90))
                self.key("key_up", "shift", (20, 60))
            else:
                self.key("key_down", key, dt)
                if pending_up:
                    self.key("key_up", pending_up, (10, 30))
                    pending_up = None
                if rng.random() < 0.2:
                    pending_up = key
                else:
                    self.key("key_up", key, (40, 90))
            dt = (40, 150)
        if pending_up:
            self.key("key_up", pending_up, (30, 80))


def lower(script: list[Action], rng: random.Random, t0: int = 500) -> Lowered:
    """Raw events that a person performing ``script`` could have produced."""
    lw = _Lowerer(rng, t0)
    marks = []
    for i, a in enumerate(script):
        nxt = script[i + 1] if i + 1 < len(script) else None
        marks.append(lw.lower(a, nxt))
    return Lowered(lw.events, marks, lw.t)


# ---------------------------------------------------------------------------
# synthetic demonstrations with frames


FRAME_SIZE = (128, 72)
FRAME_PERIOD = 100
RESOLUTIONS = ((1920, 1080), (1280, 720), (2560, 1440))


@dataclass
class SynthDemo:
    demo: RawDemonstration
    script: list[Action]
    marks: list[ActionMark]
    change_times: list[int]  # scene changes; frames straddling one differ by >= 0.1
    path: Optional[Path] = None
    seed: int = 0
    meta: dict = field(default_factory=dict)


def _scene_changes(rng: random.Random, marks: list[ActionMark]) -> list[int]:
    """Screen-change times: reactions to actions, hover effects during pre-movement, and noise."""
    cands = []
    prev_end = 0
    for m in marks:
        if m.t_move is not None and m.t_press is not None and m.t_press - m.t_move > 60 and rng.random() < 0.35:
            cands.append(rng.randint(m.t_move + 1, m.t_press - 1))  # hover highlight
        if m.t_first - prev_end > 200 and rng.random() < 0.15:
            cands.append(rng.randint(prev_end + 1, m.t_first - 1))
        if rng.random() < 0.8:
            cands.append(m.t_last + rng.randint(100, 250))
        prev_end = m.t_last
    out: list[int] = []
    for t in sorted(cands):
        # keep at most one change per frame period so every change is observable
        if not out or t // FRAME_PERIOD > out[-1] // FRAME_PERIOD:
            out.append(t)
    return out


def _next_scene(rng: random.Random, img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    rw = rng.randrange(w // 2, w + 1, 2)
    rh = rng.randrange(h // 2, h + 1, 2)
    x0 = rng.randrange(0, w - rw + 1, 2)
    y0 = rng.randrange(0, h - rh + 1, 2)
    out = img.copy()
    region = out[y0:y0 + rh, x0:x0 + rw]
    # every pixel moves the same direction, so the downsampled distance is at least 0.1
    region[...] = 230 if region.mean() < 128 else 25
    return out


def synth_demo(seed: int, root, demo_id: Optional[str] = None, length: Optional[int] = None,
               status: Optional[str] = None) -> SynthDemo:
    """Generate, render and write one synthetic demonstration directory under ``root``."""
    rng = random.Random(seed)
    length = length if length is not None else rng.randint(3, 10)
    script = random_script(rng, length)
    low = lower(script, rng)
    changes = _scene_changes(rng, low.marks)
    status = status or ("failure" if rng.random() < 0.1 else "success")
    demo_id = demo_id or f"demo_{seed:05d}"
    root = Path(root) / demo_id
    (root / "frames").mkdir(parents=True, exist_ok=True)

    w, h = FRAME_SIZE
    scenes = [np.full((h, w), 128, dtype=np.uint8)]
    for _ in changes:
        scenes.append(_next_scene(rng, scenes[-1]))
    files = []
    for k, img in enumerate(scenes):
        path = root / "frames" / f"scene_{k:03d}.png"
        Image.fromarray(np.stack([img] * 3, axis=-1), "RGB").save(path, optimize=False)
        files.append(str(path.resolve()))

    frames = []
    scene = 0
    end = low.end_t + 500
    for idx, t in enumerate(range(0, end + 1, FRAME_PERIOD)):
        while scene < len(changes) and changes[scene] <= t:
            scene += 1
        frames.append(Frame(idx, t, files[scene], w, h))

    resolution = rng.choice(RESOLUTIONS)
    demo = RawDemonstration(
        instruction=f"Synthetic task {demo_id}: carry out {len(script)} recorded steps",
        os=rng.choice(("windows", "macos", "ubuntu")),
        resolution=resolution,
        events=tuple(low.events),
        frames=tuple(frames),
        status=status,
        demo_id=demo_id,
    )
    save_demonstration(demo, root)
    return SynthDemo(demo, script, low.marks, changes, root, seed)


def synth_corpus(root, n: int, seed: int = 0) -> list[SynthDemo]:
    base = random.Random(seed)
    seeds = [base.randrange(1 << 30) for _ in range(n)]
    return [synth_demo(s, root, demo_id=f"demo_{i:04d}") for i, s in enumerate(seeds)]


# ---------------------------------------------------------------------------
# benchmark fixtures


def _box(x, y, r):
    return {"x_min": round(max(0.0, x - r), 4), "x_max": round(min(1.0, x + r), 4),
            "y_min": round(max(0.0, y - r), 4), "y_max": round(min(1.0, y + r), 4)}


def gold_options(a: Action, rng: random.Random) -> list[dict]:
    """Gold options for one scripted action, occasionally with an alternative."""

    k = a.kind
    if a.point is not None and k not in ("scroll", "hscroll"):
        opts = [{"kind": action_label(a), "bbox": _box(a.x, a.y, 0.03)}]
        if k == "click" and a.button == "left" and rng.random() < 0.2:
            opts.append({"kind": "doubleClick", "bbox": _box(a.x, a.y, 0.03)})
        return opts
    if k in ("scroll", "hscroll"):
        direction = ("up" if a.dy > 0 else "down") if k == "scroll" else ("right" if a.dx > 0 else "left")
        return [{"kind": "scroll", "direction": direction, "bbox": _box(a.x, a.y, 0.1)}]
    if k == "write":
        return [{"kind": "write", "text": a.text, "max_distance": 0.1, "case_sensitive": True}]
    if k == "press":
        return [{"kind": "press", "keys": [a.key]}]
    if k == "hotkey":
        opts = [{"kind": "hotkey", "keys": list(a.keys)}]
        if rng.random() < 0.1:
            opts.append({"kind": "press", "keys": [a.keys[-1]]})
        return opts
    if k == "terminate":
        return [{"kind": "terminate", "status": a.status}]
    return [{"kind": "wait"}]


def _mock_response(a: Action, opts: list[dict], rng: random.Random, terminal: bool) -> str:
    """An agent-style reply: usually right, sometimes off target, malformed or premature."""
    from dataclasses import replace as _replace


    u = rng.random()
    pred: Optional[Action] = a
    if u < 0.08:
        pred = Terminate("success") if not terminal else Click(0.5, 0.5)
    elif u < 0.16 and a.point is not None and a.kind not in ("scroll", "hscroll"):
        pred = _replace(a, x=round((a.x + 0.5) % 1.0, 4))
    elif u < 0.22 and a.kind == "write":
        pred = Write(a.text[::-1] + "xx")
    elif u < 0.26:
        return "## Thought:\nI cannot tell what to do next.\n\n## Action:\nHold on."
    code = render_action(pred)
    return (f"## Thought:\nContinuing with the task.\n\n## Action:\nDo the next step.\n\n"
            f"## Code:\n```python\n{code}\n```")


def bench_fixture(demos: list[SynthDemo], seed: int = 0) -> tuple[dict, list[dict]]:
    """A benchmark document and mock predictions derived from synthetic scripts."""

    rng = random.Random(seed)
    tasks, preds = [], []
    for sd in demos:
        script = list(sd.script) + [Terminate("failure" if sd.demo.status == "failure" else "success")]
        steps = [{"screenshot": None, "options": gold_options(a, rng)} for a in script]
        tid = sd.demo.demo_id
        tasks.append({"id": tid, "instruction": sd.demo.instruction, "os": sd.demo.os,
                      "resolution": list(sd.demo.resolution), "steps": steps})
        for i, a in enumerate(script):
            preds.append({"task": tid, "step": i,
                          "response": _mock_response(a, steps[i]["options"], rng, i == len(script) - 1)})
    return {"format": BENCH_FORMAT, "tasks": tasks}, preds
