"""Structural checks on raw demonstrations."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import OS_NAMES, RawDemonstration
from .keys import KeyNameError, canonical_key

MOUSE_KINDS = frozenset({"move", "button_down", "button_up", "wheel"})
KEY_KINDS = frozenset({"key_down", "key_up"})


@dataclass(frozen=True)
class Finding:
    severity: str  # "warn" | "error"
    code: str
    message: str
    location: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "code": self.code,
                "message": self.message, "location": self.location}


def has_errors(findings) -> bool:
    return any(f.severity == "error" for f in findings)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_demonstration(demo: RawDemonstration) -> list[Finding]:
    """Return findings in a fixed order: manifest, frames, then events."""
    out: list[Finding] = []

    def err(code, msg, loc):
        out.append(Finding("error", code, msg, loc))

    def warn(code, msg, loc):
        out.append(Finding("warn", code, msg, loc))

    if demo.os not in OS_NAMES:
        err("bad_os", f"unknown os {demo.os!r}", "manifest")
    w, h = demo.resolution
    if not (_is_int(w) and _is_int(h) and w > 0 and h > 0):
        err("bad_resolution", f"resolution {demo.resolution!r} must be positive pixels", "manifest")
    if not demo.instruction.strip():
        warn("empty_instruction", "instruction is empty", "manifest")

    if not demo.frames:
        err("no_frames", "a demonstration needs at least one frame", "frames")
    prev_t = None
    for i, fr in enumerate(demo.frames):
        loc = f"frames[{i}]"
        if not _is_int(fr.timestamp):
            err("bad_timestamp", f"frame timestamp {fr.timestamp!r} is not an integer", loc)
            continue
        if fr.index != i:
            err("frame_index", f"frame index {fr.index} at position {i}", loc)
        if prev_t is not None and fr.timestamp <= prev_t:
            err("frame_order", f"frame timestamp {fr.timestamp} after {prev_t}", loc)
        prev_t = fr.timestamp
        if not (_is_int(fr.width) and _is_int(fr.height) and fr.width > 0 and fr.height > 0):
            err("frame_size", f"frame size {fr.width}x{fr.height} must be positive", loc)

    prev_t = None
    buttons_down: dict[str, int] = {}
    keys_down: dict[str, int] = {}
    for i, ev in enumerate(demo.events):
        loc = f"events[{i}]"
        if not _is_int(ev.timestamp):
            err("bad_timestamp", f"event timestamp {ev.timestamp!r} is not an integer", loc)
            continue
        if prev_t is not None and ev.timestamp < prev_t:
            err("event_order", f"event timestamp {ev.timestamp} after {prev_t}", loc)
        prev_t = ev.timestamp

        if ev.device == "mouse":
            if ev.kind not in MOUSE_KINDS:
                err("bad_kind", f"{ev.kind!r} is not a mouse event kind", loc)
                continue
            if ev.key is not None:
                err("unexpected_key", "mouse events carry no key", loc)
            if ev.position is None:
                err("missing_position", "mouse events need a position", loc)
            else:
                x, y = ev.position
                if not all(isinstance(v, (int, float)) and not math.isnan(v) and 0 <= v <= 1
                           for v in (x, y)):
                    err("coord_range", f"position {ev.position!r} outside [0, 1]", loc)
            if ev.kind in ("button_down", "button_up"):
                if ev.button not in ("left", "right", "middle"):
                    err("missing_button", f"button {ev.button!r} invalid", loc)
                    continue
                if ev.kind == "button_down":
                    if ev.button in buttons_down:
                        warn("unmatched_button", f"{ev.button} pressed twice without release", loc)
                    buttons_down[ev.button] = i
                elif buttons_down.pop(ev.button, None) is None:
                    warn("unmatched_button", f"{ev.button} released without press", loc)
            elif ev.kind == "wheel":
                d = ev.wheel_delta
                if d is None or not all(_is_int(v) for v in d):
                    err("bad_wheel", f"wheel delta {d!r} must be integer counts", loc)
                elif d[0] and d[1]:
                    warn("diagonal_wheel", "wheel event moves both axes; horizontal part ignored", loc)
        elif ev.device == "keyboard":
            if ev.kind not in KEY_KINDS:
                err("bad_kind", f"{ev.kind!r} is not a keyboard event kind", loc)
                continue
            if ev.position is not None:
                err("unexpected_position", "keyboard events carry no position", loc)
            if ev.key is None:
                err("missing_key", "keyboard events need a key", loc)
                continue
            try:
                key = canonical_key(ev.key)
            except KeyNameError as exc:
                err("bad_key", str(exc), loc)
                continue
            if ev.kind == "key_down":
                keys_down.setdefault(key, i)  # repeated downs are auto-repeat
            elif keys_down.pop(key, None) is None:
                warn("unmatched_key", f"{key!r} released without press", loc)
        else:
            err("bad_device", f"unknown device {ev.device!r}", loc)

    for b, i in sorted(buttons_down.items(), key=lambda kv: kv[1]):
        warn("unmatched_button", f"{b} pressed but never released", f"events[{i}]")
    for k, i in sorted(keys_down.items(), key=lambda kv: kv[1]):
        warn("unmatched_key", f"{k!r} pressed but never released", f"events[{i}]")
    return out
