"""Canonical key vocabulary shared by ingest, the action language and matching."""

from __future__ import annotations

from typing import Iterable

MODIFIERS = ("ctrl", "alt", "shift", "cmd", "win")
# cmd and win never co-occur on one OS; they share a rank
_MODIFIER_RANK = {"ctrl": 0, "alt": 1, "shift": 2, "cmd": 3, "win": 3}

NAMED_KEYS = frozenset(
    {
        "enter", "esc", "tab", "space", "backspace", "delete", "insert",
        "up", "down", "left", "right", "home", "end", "pageup", "pagedown",
        "capslock", "numlock", "printscreen", "menu",
        *(f"f{i}" for i in range(1, 25)),
    }
    | set(MODIFIERS)
)

SYNONYMS = {
    "control": "ctrl",
    "ctl": "ctrl",
    "ctrlleft": "ctrl",
    "ctrlright": "ctrl",
    "lctrl": "ctrl",
    "rctrl": "ctrl",
    "option": "alt",
    "altleft": "alt",
    "altright": "alt",
    "lalt": "alt",
    "ralt": "alt",
    "shiftleft": "shift",
    "shiftright": "shift",
    "lshift": "shift",
    "rshift": "shift",
    "command": "cmd",
    "meta": "cmd",
    "super": "win",
    "windows": "win",
    "winleft": "win",
    "winright": "win",
    "return": "enter",
    "escape": "esc",
    "del": "delete",
    "back": "backspace",
    "bksp": "backspace",
    "spacebar": "space",
    " ": "space",
    "arrowup": "up",
    "arrowdown": "down",
    "arrowleft": "left",
    "arrowright": "right",
    "uparrow": "up",
    "downarrow": "down",
    "leftarrow": "left",
    "rightarrow": "right",
    "pgup": "pageup",
    "pgdn": "pagedown",
    "page_up": "pageup",
    "page_down": "pagedown",
    "ins": "insert",
    "caps_lock": "capslock",
    "\n": "enter",
    "\t": "tab",
}

# US layout: the character produced by shift + key
SHIFTED = dict(zip("`1234567890-=[]\\;',./", '~!@#$%^&*()_+{}|:"<>?'))
SHIFTED.update({c: c.upper() for c in "abcdefghijklmnopqrstuvwxyz"})
UNSHIFTED = {v: k for k, v in SHIFTED.items()}


class KeyNameError(ValueError):
    """Raised for a key name outside the canonical vocabulary."""


def canonical_key(name: str) -> str:
    """Map a raw or synonym key name to the canonical vocabulary.

    Single printable characters are lowercased; the shifted form of a
    character is recovered from the shift state, not from the key name.
    """
    if not isinstance(name, str) or not name:
        raise KeyNameError(f"invalid key name: {name!r}")
    if len(name) == 1:
        if name in SYNONYMS:
            return SYNONYMS[name]
        if not name.isprintable():
            raise KeyNameError(f"non-printable key: {name!r}")
        return name.lower()
    low = name.strip().lower()
    low = SYNONYMS.get(low, low)
    if low in NAMED_KEYS:
        return low
    if len(low) == 1:
        return low
    raise KeyNameError(f"unknown key name: {name!r}")


def is_modifier(key: str) -> bool:
    return key in _MODIFIER_RANK


def is_text_key(key: str) -> bool:
    """True for keys that produce a character when typed without modifiers."""
    return key == "space" or (len(key) == 1 and key.isprintable())


def typed_char(key: str, shift: bool) -> str:
    if key == "space":
        return " "
    return SHIFTED.get(key, key) if shift else key


def keystroke_for(char: str) -> tuple[str, bool]:
    """Inverse of :func:`typed_char`: the (key, needs_shift) producing ``char``."""
    if char == " ":
        return "space", False
    if char in UNSHIFTED:
        return UNSHIFTED[char], True
    if len(char) == 1 and char.isprintable():
        return char, False
    raise KeyNameError(f"character has no single keystroke: {char!r}")


def order_combo(keys: Iterable[str]) -> tuple[str, ...]:
    """Canonical hotkey order: modifiers by rank, then other keys as given."""
    keys = [canonical_key(k) for k in keys]
    mods = sorted({k for k in keys if is_modifier(k)}, key=lambda k: (_MODIFIER_RANK[k], k))
    rest = [k for k in keys if not is_modifier(k)]
    return tuple(mods + rest)
