"""Visual cues for coordinate actions: a red marker plus a magnified crop."""

from __future__ import annotations

import hashlib
from pathlib import Path

from PIL import Image, ImageDraw

from ..dsl import render_action
from ..errors import CueNotApplicable, ImageIOError
from ..model import Action, Frame
from ..storage import file_digest

MARKER_RGB = (255, 0, 0)
ZOOM = 2


def cue_geometry(width: int, height: int, x: float, y: float):
    """Pixel marker centre and the crop box ``(left, top, right, bottom)`` clamped inside the image."""
    px = min(width - 1, int(x * width))
    py = min(height - 1, int(y * height))
    cw, ch = max(1, width // 4), max(1, height // 4)
    left = min(max(0, px - cw // 2), width - cw)
    top = min(max(0, py - ch // 2), height - ch)
    return (px, py), (left, top, left + cw, top + ch)


def render_visual_cues(frame: Frame, action: Action, out_dir) -> str:
    """Write an annotated copy of ``frame`` and return its path.

    The left part is the frame with a red disc at the action point; the
    right part is a 2x magnification of the region around it. The file name
    depends only on the frame content and the action, so reruns are no-ops.
    """
    point = action.point
    if point is None:
        raise CueNotApplicable(f"{action.kind} has no screen coordinate")
    out_dir = Path(out_dir)
    try:
        key = hashlib.sha256((file_digest(frame.image) + render_action(action)).encode()).hexdigest()[:20]
    except OSError as exc:
        raise ImageIOError(f"cannot read {frame.image}: {exc}") from None
    out = out_dir / f"cue_{key}.png"
    if out.exists():
        return str(out.resolve())
    try:
        with Image.open(frame.image) as im:
            base = im.convert("RGB")
    except OSError as exc:
        raise ImageIOError(f"cannot read {frame.image}: {exc}") from None
    w, h = base.size
    (px, py), box = cue_geometry(w, h, *point)
    r = max(2, min(w, h) // 40)
    ImageDraw.Draw(base).ellipse((px - r, py - r, px + r, py + r), fill=MARKER_RGB)
    crop = base.crop(box)
    crop = crop.resize((crop.width * ZOOM, crop.height * ZOOM), Image.Resampling.NEAREST)
    canvas = Image.new("RGB", (w + crop.width, max(h, crop.height)), (0, 0, 0))
    canvas.paste(base, (0, 0))
    canvas.paste(crop, (w, 0))
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = out.with_suffix(f".{id(canvas)}.tmp")
    canvas.save(tmp, format="PNG")
    tmp.replace(out)
    return str(out.resolve())
