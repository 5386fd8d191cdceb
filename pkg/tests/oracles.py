"""Independent reference implementations used as test oracles.

None of these import the code under test for the quantity they check; they
recompute it from definitions with deliberately naive algorithms.
"""

from __future__ import annotations

import functools
import itertools
import random
import string

import numpy as np
from PIL import Image

from cuakit.keys import MODIFIERS, NAMED_KEYS
from cuakit.model import (
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
)

# ---------------------------------------------------------------------------
# action space, table driven: one generator per action function

PRINTABLE_KEYS = sorted(set(string.ascii_lowercase + string.digits + "`-=[]\\;',./"))
ALL_KEYS = sorted(NAMED_KEYS) + PRINTABLE_KEYS
NON_MODIFIERS = [k for k in ALL_KEYS if k not in MODIFIERS]
TEXT_ALPHABET = string.printable + "éüß中文😀\x07"


def _c(rng):
    # mix of grid values, edges and arbitrary precision
    r = rng.random()
    if r < 0.1:
        return rng.choice([0.0, 1.0, 0.5])
    if r < 0.5:
        return round(rng.random(), 4)
    return rng.random()


def _text(rng):
    return "".join(rng.choice(TEXT_ALPHABET) for _ in range(rng.randint(1, 30)))


def _wheel(rng):
    return rng.choice([-1, 1]) * rng.randint(1, 40)


def _maybe_pos(rng):
    return (_c(rng), _c(rng)) if rng.random() < 0.5 else (None, None)


ACTION_TABLE = {
    "click": lambda r: Click(_c(r), _c(r), r.choice(["left", "right"])),
    "middleClick": lambda r: MiddleClick(_c(r), _c(r)),
    "doubleClick": lambda r: DoubleClick(_c(r), _c(r), r.choice(["left", "right", "middle"])),
    "tripleClick": lambda r: TripleClick(_c(r), _c(r), r.choice(["left", "right", "middle"])),
    "moveTo": lambda r: MoveTo(_c(r), _c(r)),
    "dragTo": lambda r: DragTo(_c(r), _c(r)),
    "scroll": lambda r: Scroll(_wheel(r), *_maybe_pos(r)),
    "hscroll": lambda r: HScroll(_wheel(r), *_maybe_pos(r)),
    "write": lambda r: Write(_text(r)),
    "press": lambda r: Press(r.choice(ALL_KEYS)),
    "hotkey": lambda r: Hotkey(tuple(r.sample(list(MODIFIERS), r.randint(1, 3))) + (r.choice(NON_MODIFIERS),)),
    "wait": lambda r: Wait(),
    "terminate": lambda r: Terminate(r.choice(["success", "failure"])),
}


def random_action(rng: random.Random):
    return ACTION_TABLE[rng.choice(sorted(ACTION_TABLE))](rng)


# ---------------------------------------------------------------------------
# edit distance by the recursive definition


def levenshtein_ref(a: str, b: str) -> int:
    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


# ---------------------------------------------------------------------------
# Pass@n by enumerating the runs


def pass_at_n_ref(cells, n):
    """Percentage of tasks solved by at least one of the first ``n`` runs."""
    tasks = len(cells[0])
    solved = set()
    for run in cells[:n]:
        solved |= {t for t in range(tasks) if run[t]}
    return 100.0 * len(solved) / tasks


def best_subset_ref(cells, n):
    """Best Pass over any n-subset of runs (an upper envelope, also monotone in n)."""
    tasks = len(cells[0])
    best = 0
    for combo in itertools.combinations(range(len(cells)), n):
        best = max(best, sum(any(cells[r][t] for r in combo) for t in range(tasks)))
    return 100.0 * best / tasks


# ---------------------------------------------------------------------------
# full-resolution frame distance


def full_res_distance(path_a, path_b) -> float:
    def luma(p):
        with Image.open(p) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
        return (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0

    return float(np.abs(luma(path_a) - luma(path_b)).mean())


# ---------------------------------------------------------------------------
# keyframe scanner driven by ground truth instead of pixels


def reference_keyframes(frame_times, change_times, marks):
    """Expected keyframe index per action from the generator's known timings.

    A frame counts as distinct when a scene change happened between the
    previous frame and it. Press actions look back from the pre-movement start
    to the previous keyframe; other actions take the last frame before their
    first event.
    """
    def distinct(k):
        return k > 0 and any(frame_times[k - 1] < c <= frame_times[k] for c in change_times)

    out, prev = [], -1
    for m in marks:
        if m.t_press is not None:
            last = max(k for k, t in enumerate(frame_times) if t <= m.t_move)
            k = next((j for j in range(last, prev, -1) if distinct(j)), last)
        else:
            k = max(j for j, t in enumerate(frame_times) if t <= m.t_first)
        out.append(k)
        prev = k
    return out
