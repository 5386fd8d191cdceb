"""State-action matching: choose one leakage-free keyframe per reduced action.

Keyboard, scroll and wait actions take the last frame captured before their
first event. Press-initiated pointer actions look further back: the frame
must predate the pre-movement phase, because the pointer travelling to its
target (and any hover feedback on the way) already reveals the answer.
"""

from __future__ import annotations

import functools
import logging
import os
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import AlignmentError, ImageIOError
from .model import Action, Frame, RawDemonstration, RawEvent, Step, Terminate, Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignerConfig:
    idle_gap: int = 300
    diff_threshold: float = 0.02
    downsample: tuple[int, int] = (64, 36)

    def __post_init__(self):
        if self.idle_gap <= 0:
            raise ValueError("idle_gap must be positive")
        if not 0 < self.diff_threshold < 1:
            raise ValueError("diff_threshold must be in (0, 1)")
        w, h = self.downsample
        if w < 1 or h < 1:
            raise ValueError("downsample size must be positive")

    def to_dict(self) -> dict:
        return {"idle_gap": self.idle_gap, "diff_threshold": self.diff_threshold,
                "downsample": list(self.downsample)}


@functools.lru_cache(maxsize=4096)
def _luma(path: str, size: tuple[int, int], mtime: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from None
    y = (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0
    small = Image.fromarray(y.astype(np.float32), mode="F").resize(size, Image.Resampling.BOX)
    return np.asarray(small, dtype=np.float64)


def luminance(path: str, size=(64, 36)) -> np.ndarray:
    try:
        mtime = os.stat(path).st_mtime_ns
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from None
    return _luma(path, tuple(size), mtime)


def visual_distance(a: Frame, b: Frame, cfg: Optional[AlignerConfig] = None) -> float:
    """Mean absolute grayscale difference of the two frames at the downsampled size, in [0, 1]."""
    if a.image == b.image:
        return 0.0
    size = (cfg or AlignerConfig()).downsample
    return float(np.mean(np.abs(luminance(a.image, size) - luminance(b.image, size))))


def premovement_start(events: Sequence[RawEvent], press: int, idle_gap: int) -> int:
    """Timestamp where the pointer started its final approach to the press at ``press``.

    Walks back over move events while consecutive gaps stay within
    ``idle_gap``; with no such motion it is the press time itself.
    """
    t = events[press].timestamp
    j = press - 1
    while j >= 0:
        ev = events[j]
        if ev.device != "mouse" or ev.kind != "move" or t - ev.timestamp > idle_gap:
            break
        t = ev.timestamp
        j -= 1
    return t


def _press_index(events, span) -> Optional[int]:
    s, e = span
    for i in range(s, e + 1):
        ev = events[i]
        if ev.device == "mouse" and ev.kind == "button_down":
            return i
        if ev.device == "mouse" and ev.kind in ("move", "button_up"):
            return None
    return None


def select_keyframe(
    frames: Sequence[Frame],
    action: Action,
    span: tuple[int, int],
    events: Sequence[RawEvent],
    cfg: Optional[AlignerConfig] = None,
    after: int = -1,
) -> int:
    """Index of the keyframe for one action; only frames with index > ``after`` qualify."""
    cfg = cfg or AlignerConfig()
    times = [f.timestamp for f in frames]
    press = _press_index(events, span) if action.kind in ("click", "middleClick", "doubleClick",
                                                          "tripleClick", "moveTo", "dragTo") else None
    if press is None:
        t = events[span[0]].timestamp
        k = bisect_right(times, t) - 1
        if k <= after:
            raise AlignmentError(f"no unused frame at or before t={t}")
        return k
    t0 = premovement_start(events, press, cfg.idle_gap)
    last = bisect_right(times, t0) - 1
    if last <= after:
        raise AlignmentError(f"no unused frame at or before pre-movement start t={t0}")
    # later frames win ties: scan backwards and stop at the first distinct one
    for k in range(last, max(after, 0), -1):
        if visual_distance(frames[k - 1], frames[k], cfg) > cfg.diff_threshold:
            return k
    return last


def build_trajectory(
    demo: RawDemonstration,
    reduced: Sequence[tuple[Action, tuple[int, int]]],
    cfg: Optional[AlignerConfig] = None,
) -> Trajectory:
    cfg = cfg or AlignerConfig()
    if not reduced:
        raise AlignmentError("nothing to align: the reduced action list is empty")
    frames = demo.frames
    steps = []
    prev = -1
    for i, (action, span) in enumerate(reduced):
        try:
            k = select_keyframe(frames, action, span, demo.events, cfg, after=prev)
        except AlignmentError as exc:
            raise AlignmentError(str(exc), step=i) from None
        steps.append(Step(frames[k], action, tuple(span)))
        prev = k
    status = "failure" if demo.status == "failure" else "success"
    steps.append(Step(frames[-1], Terminate(status), None))
    return Trajectory(
        instruction=demo.instruction,
        os=demo.os,
        steps=tuple(steps),
        resolution=tuple(demo.resolution),
        traj_id=demo.demo_id,
        meta={"aligner": cfg.to_dict()},
    )
