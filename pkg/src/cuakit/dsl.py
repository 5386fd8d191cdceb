"""Parser and printer for the agent action language.

The language is the whitelisted subset of ``pyautogui`` calls plus the
``computer.*`` function actions (``terminate``, ``wait``,
``triple_click``). Call expressions are read with :mod:`ast`; nothing is
ever evaluated. The grammar is written out in ``docs/action_grammar.md``.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import (
    ActionParseError,
    CuakitError,
    DomainError,
    NoActionError,
    UnsupportedActionError,
)
from .keys import KeyNameError, canonical_key
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
    Scroll,
    Terminate,
    TripleClick,
    Wait,
    Write,
    norm_coord,
)

_NAMESPACES = ("pyautogui", "computer", "time")

# timing/cosmetic keyword arguments that carry no action semantics
_IGNORED_KWARGS = {"duration", "interval", "tween", "_pause", "logScreenshot", "pause"}

_ALIASES = {
    "click": "click",
    "leftClick": "click",
    "rightClick": "rightClick",
    "right_click": "rightClick",
    "middleClick": "middleClick",
    "middle_click": "middleClick",
    "doubleClick": "doubleClick",
    "double_click": "doubleClick",
    "tripleClick": "tripleClick",
    "triple_click": "tripleClick",
    "moveTo": "moveTo",
    "move_to": "moveTo",
    "dragTo": "dragTo",
    "drag_to": "dragTo",
    "scroll": "scroll",
    "vscroll": "scroll",
    "hscroll": "hscroll",
    "write": "write",
    "typewrite": "write",
    "type": "write",
    "press": "press",
    "hotkey": "hotkey",
    "wait": "wait",
    "sleep": "wait",
    "terminate": "terminate",
}

_FENCE_RE = re.compile(r"(```|''')(?:[ \t]*([A-Za-z0-9_+-]+)[ \t]*\r?\n)?(.*?)\1", re.S)
_CALL_RE = re.compile(
    r"(?:\b(?:pyautogui|computer|time)\.)?\b(" + "|".join(sorted(_ALIASES, key=len, reverse=True)) + r")\s*\("
)
_HEADER_RE = re.compile(
    r"^[ \t]*(?:#{1,6}[ \t]*)?(?:\*\*)?(observation|thought|action|code)(?:\*\*)?[ \t]*:(?:\*\*)?[ \t]*(.*)$",
    re.I,
)
_STEP_RE = re.compile(r"^[ \t]*#{1,6}[ \t]*step\b.*$", re.I)


# ---------------------------------------------------------------------------
# rendering


def _num(v: float) -> str:
    return f"{v:.4f}"


def quote(text: str) -> str:
    """Single-quoted Python string literal, escaping only what must be escaped."""
    out = ["'"]
    for ch in text:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "'":
            out.append("\\'")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif not ch.isprintable():
            o = ord(ch)
            out.append(f"\\x{o:02x}" if o < 0x100 else f"\\u{o:04x}" if o < 0x10000 else f"\\U{o:08x}")
        else:
            out.append(ch)
    out.append("'")
    return "".join(out)


def _xy(a) -> str:
    return f"x={_num(a.x)}, y={_num(a.y)}"


def render_action(action: Action) -> str:
    """Canonical single-line code for ``action``; deterministic."""
    k = action.kind
    if k == "click":
        extra = ", button='right'" if action.button == "right" else ""
        return f"pyautogui.click({_xy(action)}{extra})"
    if k in ("doubleClick", "tripleClick"):
        extra = f", button={quote(action.button)}" if action.button != "left" else ""
        return f"pyautogui.{k}({_xy(action)}{extra})"
    if k in ("middleClick", "moveTo", "dragTo"):
        return f"pyautogui.{k}({_xy(action)})"
    if k in ("scroll", "hscroll"):
        n = action.dy if k == "scroll" else action.dx
        pos = f", {_xy(action)}" if action.x is not None else ""
        return f"pyautogui.{k}({n}{pos})"
    if k == "write":
        return f"pyautogui.write({quote(action.text)})"
    if k == "press":
        return f"pyautogui.press({quote(action.key)})"
    if k == "hotkey":
        return "pyautogui.hotkey(" + ", ".join(quote(x) for x in action.keys) + ")"
    if k == "wait":
        return "computer.wait()"
    if k == "terminate":
        return f"computer.terminate(status={quote(action.status)})"
    raise TypeError(f"not an agent action: {action!r}")


# ---------------------------------------------------------------------------
# parsing


def _strip_fence(text: str) -> tuple[str, int]:
    """Return the expression inside an optional fence and its char offset in ``text``."""
    m = _FENCE_RE.search(text)
    if m and not text[: m.start()].strip() and not text[m.end():].strip():
        body = m.group(3)
        start = m.start(3)
    else:
        body, start = text, 0
    lead = len(body) - len(body.lstrip())
    return body.strip(), start + lead


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


class _Call:
    """A recognized call: canonical name, literal args and kwargs, plus node offsets."""

    def __init__(self, name, args, kwargs, offset):
        self.name = name
        self.args = args
        self.kwargs = kwargs
        self.offset = offset


def _func_name(node: ast.expr) -> Optional[str]:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute) and isinstance(node.value, ast.Name):
        if node.value.id in _NAMESPACES:
            return node.attr
    return None


def _read_call(node: ast.Call, source: str, base: int) -> _Call:
    """``base`` is the byte offset of ``source`` within the caller's original text."""
    lines = source.split("\n")

    def off(n: ast.AST) -> int:
        line = getattr(n, "lineno", 1)
        prefix = sum(len(x.encode("utf-8")) + 1 for x in lines[: line - 1])
        return base + prefix + getattr(n, "col_offset", 0)

    raw = _func_name(node.func)
    if raw is None:
        raise UnsupportedActionError(f"unsupported call target at byte {off(node)}")
    name = _ALIASES.get(raw)
    if name is None:
        raise UnsupportedActionError(f"unsupported action {raw!r}")
    args = []
    for a in node.args:
        if isinstance(a, ast.Starred):
            raise ActionParseError("star arguments are not allowed", off(a))
        try:
            args.append(ast.literal_eval(a))
        except (ValueError, SyntaxError):
            raise ActionParseError("arguments must be literals", off(a)) from None
    kwargs = {}
    for kw in node.keywords:
        if kw.arg is None:
            raise ActionParseError("** arguments are not allowed", off(kw.value))
        try:
            kwargs[kw.arg] = ast.literal_eval(kw.value)
        except (ValueError, SyntaxError):
            raise ActionParseError(f"argument {kw.arg!r} must be a literal", off(kw.value)) from None
    return _Call(name, args, kwargs, off(node))


class _Args:
    """Binds positional and keyword arguments to a parameter list."""

    def __init__(self, call: _Call, params: tuple[str, ...]):
        self.call = call
        self.values: dict[str, Any] = {}
        if len(call.args) > len(params):
            raise ActionParseError(f"{call.name} takes at most {len(params)} positional arguments", call.offset)
        for p, v in zip(params, call.args):
            self.values[p] = v
        for k, v in call.kwargs.items():
            if k in _IGNORED_KWARGS:
                continue
            if k not in params:
                raise ActionParseError(f"{call.name} got unexpected argument {k!r}", call.offset)
            if k in self.values:
                raise ActionParseError(f"{call.name} got multiple values for {k!r}", call.offset)
            self.values[k] = v

    def get(self, name, default=None):
        return self.values.get(name, default)

    def require(self, name):
        if name not in self.values:
            raise ActionParseError(f"{self.call.name} is missing argument {name!r}", self.call.offset)
        return self.values[name]


def _coord(v: Any, name: str, extent: Optional[int], offset: int) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ActionParseError(f"{name} must be a number", offset)
    if isinstance(v, int) and v > 1:
        if extent is None:
            raise DomainError(f"pixel {name}={v} given without a resolution")
        v = v / extent
    return norm_coord(v, name)


def _point(args: _Args, resolution, required=True):
    x, y = args.get("x"), args.get("y")
    if isinstance(x, (tuple, list)) and y is None and len(x) == 2:
        x, y = x
    if x is None or y is None:
        if required:
            raise ActionParseError(f"{args.call.name} needs x and y", args.call.offset)
        return None, None
    w, h = resolution if resolution else (None, None)
    return _coord(x, "x", w, args.call.offset), _coord(y, "y", h, args.call.offset)


def _button(args: _Args, default="left") -> str:
    b = args.get("button", default)
    if not isinstance(b, str) or b.lower() not in ("left", "right", "middle", "primary", "secondary"):
        raise ActionParseError(f"invalid button {b!r}", args.call.offset)
    return {"primary": "left", "secondary": "right"}.get(b.lower(), b.lower())


def _keyname(v: Any, offset: int) -> str:
    if not isinstance(v, str):
        raise ActionParseError(f"key name must be a string, got {v!r}", offset)
    try:
        return canonical_key(v)
    except KeyNameError as exc:
        raise DomainError(str(exc)) from None


def _count(v: Any, name: str, offset: int) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ActionParseError(f"{name} must be an integer", offset)
    return int(v)


def _build(call: _Call, resolution) -> list[Action]:
    """Actions for one call; a press with a repeat count yields one action per press."""
    n, off = call.name, call.offset
    if n in ("click", "rightClick", "middleClick", "doubleClick", "tripleClick"):
        params = ("x", "y", "clicks", "button") if n == "click" else ("x", "y", "button")
        a = _Args(call, params)
        x, y = _point(a, resolution)
        button = "right" if n == "rightClick" else _button(a)
        clicks = _count(a.get("clicks", 1), "clicks", off) if n == "click" else 1
        if n == "middleClick":
            button = "middle"
        if n in ("click", "rightClick", "middleClick"):
            if clicks == 2:
                return [DoubleClick(x, y, button)]
            if clicks == 3:
                return [TripleClick(x, y, button)]
            if clicks != 1:
                raise ActionParseError(f"unsupported click count {clicks}", off)
            return [MiddleClick(x, y) if button == "middle" else Click(x, y, button)]
        return [(DoubleClick if n == "doubleClick" else TripleClick)(x, y, button)]
    if n in ("moveTo", "dragTo"):
        a = _Args(call, ("x", "y", "button") if n == "dragTo" else ("x", "y"))
        x, y = _point(a, resolution)
        return [MoveTo(x, y) if n == "moveTo" else DragTo(x, y)]
    if n in ("scroll", "hscroll"):
        a = _Args(call, ("clicks", "x", "y", "dx", "dy"))
        x, y = _point(a, resolution, required=False)
        if "clicks" in a.values:
            c = _count(a.get("clicks"), "clicks", off)
            dx, dy = (c, 0) if n == "hscroll" else (0, c)
        else:
            dx = _count(a.get("dx", 0), "dx", off)
            dy = _count(a.get("dy", 0), "dy", off)
        if dx and dy:
            raise ActionParseError("a scroll moves along one axis", off)
        if dy:
            return [Scroll(dy, x, y)]
        if dx:
            return [HScroll(dx, x, y)]
        raise DomainError("scroll amount must be nonzero")
    if n == "write":
        a = _Args(call, ("message",))
        text = a.require("message")
        if not isinstance(text, str):
            raise ActionParseError("write expects a string", off)
        return [Write(text)]
    if n == "press":
        a = _Args(call, ("keys", "presses"))
        keys = a.require("keys")
        keys = list(keys) if isinstance(keys, (list, tuple)) else [keys]
        if not keys:
            raise ActionParseError("press needs a key", off)
        presses = _count(a.get("presses", 1), "presses", off)
        if presses < 1:
            raise DomainError("presses must be positive")
        return [Press(_keyname(k, off)) for _ in range(presses) for k in keys]
    if n == "hotkey":
        if len(call.args) == 1 and isinstance(call.args[0], (list, tuple)):
            keys = list(call.args[0])
        elif "keys" in call.kwargs and not call.args:
            keys = list(call.kwargs["keys"])
        else:
            keys = list(call.args)
        extra = set(call.kwargs) - _IGNORED_KWARGS - {"keys"}
        if extra:
            raise ActionParseError(f"hotkey got unexpected arguments {sorted(extra)}", off)
        names = [_keyname(k, off) for k in keys]
        if len(names) == 1:
            return [Press(names[0])]
        return [Hotkey(tuple(names))]
    if n == "wait":
        _Args(call, ("seconds", "secs"))
        return [Wait()]
    if n == "terminate":
        a = _Args(call, ("status",))
        status = a.require("status")
        if not isinstance(status, str):
            raise ActionParseError("status must be a string", off)
        status = status.lower()
        if status == "fail":
            status = "failure"
        if status not in ("success", "failure"):
            raise DomainError(f"terminate status {status!r}")
        return [Terminate(status)]
    raise UnsupportedActionError(f"unsupported action {n!r}")


def _parse_expr(expr: str, base: int, resolution) -> list[Action]:
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        lines = expr.split("\n")
        line = min((exc.lineno or 1) - 1, len(lines) - 1)
        prefix = sum(len(x.encode("utf-8")) + 1 for x in lines[:line])
        col = len(lines[line][:max((exc.offset or 1) - 1, 0)].encode("utf-8"))  # offset counts characters
        raise ActionParseError(f"syntax error: {exc.msg}", base + prefix + col) from None
    if not isinstance(tree.body, ast.Call):
        raise ActionParseError("expected a single call expression", base)
    return _build(_read_call(tree.body, expr, base), resolution)


def parse_action(text: str, resolution: Optional[tuple[int, int]] = None) -> Action:
    """Parse one action expression, optionally wrapped in a code fence.

    ``resolution`` enables integer pixel coordinates. A ``press`` with a
    repeat count parses to its single keystroke; :func:`parse_actions`
    expands the repetitions.
    """
    expr, start = _strip_fence(text)
    if expr.lower().startswith("python\n"):
        start += 7
        expr = expr[7:].lstrip()
    if not expr:
        raise ActionParseError("empty action", 0)
    return _parse_expr(expr, _byte_offset(text, start), resolution)[0]


def parse_actions(code: str, resolution: Optional[tuple[int, int]] = None) -> list[Action]:
    """Parse every whitelisted call statement in a code block, in order."""
    body, start = _strip_fence(code)
    base = _byte_offset(code, start)
    try:
        tree = ast.parse(body, mode="exec")
    except SyntaxError as exc:
        raise ActionParseError(f"syntax error: {exc.msg}", base) from None
    out: list[Action] = []
    for stmt in tree.body:
        if isinstance(stmt, (ast.Import, ast.ImportFrom)):
            continue
        if not (isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Call)):
            raise ActionParseError("only call statements are allowed", base)
        out.extend(_build(_read_call(stmt.value, body, base), resolution))
    return out


# ---------------------------------------------------------------------------
# full responses


@dataclass(frozen=True)
class ParsedResponse:
    sections: dict[str, str]
    action: Action
    raw: str = field(repr=False)


def split_sections(text: str) -> dict[str, str]:
    """Map labelled sections (Observation, Thought, Action, Code) to their text.

    A repeated label keeps its last occurrence, moved to the end of the order.
    """
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        if _STEP_RE.match(line):
            current = None
            continue
        m = _HEADER_RE.match(line)
        if m:
            current = m.group(1).capitalize()
            sections.pop(current, None)
            sections[current] = [m.group(2)] if m.group(2).strip() else []
        elif current is not None:
            sections[current].append(line)
    return {k: "\n".join(v).strip() for k, v in sections.items()}


def _last_action_in_code(code: str, resolution) -> tuple[bool, Optional[Action]]:
    """(saw a whitelisted call, parsed action or None). The last call decides."""
    body, _ = _strip_fence(code)
    if body.lower().startswith("python\n"):
        body = body[7:]
    try:
        tree = ast.parse(body, mode="exec")
    except SyntaxError:
        action = _last_action_in_prose(body, resolution)
        return action is not None, action
    calls = [s.value for s in tree.body if isinstance(s, ast.Expr) and isinstance(s.value, ast.Call)]
    for call in reversed(calls):
        if _func_name(call.func) not in _ALIASES:
            continue
        try:
            return True, _build(_read_call(call, body, 0), resolution)[-1]
        except CuakitError:
            return True, None
    return False, None


def _last_action_in_prose(text: str, resolution) -> Optional[Action]:
    for line in reversed(text.splitlines()):
        for m in reversed(list(_CALL_RE.finditer(line))):
            start = m.start()
            # widen to the namespace prefix and take the shortest parsable call
            close = start
            while True:
                close = line.find(")", close + 1)
                if close < 0:
                    break
                try:
                    return _parse_expr(line[start:close + 1], 0, resolution)[-1]
                except CuakitError:
                    continue
    return None


def extract_response(text: str, resolution: Optional[tuple[int, int]] = None) -> ParsedResponse:
    """Split a model response into sections and parse its final action.

    The action comes from the last fenced code block, else the ``Code``
    section, else the last call found anywhere in the text.
    """
    sections = split_sections(text)
    candidates = []
    fences = list(_FENCE_RE.finditer(text))
    if fences:
        candidates.append(("code", fences[-1].group(0)))
    if sections.get("Code"):
        candidates.append(("code", sections["Code"]))
    candidates.append(("prose", text))
    for kind, chunk in candidates:
        if kind == "code":
            seen, action = _last_action_in_code(chunk, resolution)
            if seen and action is None:
                break
        else:
            action = _last_action_in_prose(chunk, resolution)
        if action is not None:
            return ParsedResponse(sections=sections, action=action, raw=text)
    raise NoActionError("no parsable action in response")
