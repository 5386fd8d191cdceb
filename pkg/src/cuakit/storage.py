"""File formats: demonstration directories, reduced and aligned trajectories.

Paths written into JSON documents are relative to the document's own
directory, so output trees can be moved and compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Optional

from .dsl import parse_action, render_action
from .errors import DemoFormatError
from .model import (
    Action,
    Frame,
    RawDemonstration,
    RawEvent,
    ReflectionVerdict,
    Step,
    StructuredCoT,
    Trajectory,
    TrajectorySummary,
)
from .validation import Finding, validate_demonstration

TRAJECTORY_FORMAT = "cuakit.trajectory/1"
REDUCED_FORMAT = "cuakit.reduced/1"


def dumps(obj: Any) -> str:
    """Canonical JSON used for every written document."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(path: str, base: Path) -> str:
    return Path(os.path.relpath(path, base)).as_posix()


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DemoFormatError(f"{path.name}:{n}: {exc.msg}") from None
    return rows


# ---------------------------------------------------------------------------
# demonstration directories


def load_demonstration(path) -> RawDemonstration:
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        events = [RawEvent.from_record(r) for r in _read_jsonl(root / "events.jsonl")]
        frames = [
            Frame(
                index=r["index"],
                timestamp=r["t"],
                image=str((root / r["file"]).resolve()),
                width=r["w"],
                height=r["h"],
            )
            for r in _read_jsonl(root / "frames.jsonl")
        ]
        axtree = {}
        if (root / "axtree.jsonl").exists():
            axtree = {r["t"]: r["text"] for r in _read_jsonl(root / "axtree.jsonl")}
        res = manifest["resolution"]
        return RawDemonstration(
            instruction=manifest["instruction"],
            os=manifest["os"],
            resolution=(res[0], res[1]),
            events=tuple(events),
            frames=tuple(frames),
            axtree_snapshots=axtree,
            status=manifest.get("status", "success"),
            demo_id=manifest.get("id", root.name),
        )
    except DemoFormatError:
        raise
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise DemoFormatError(f"{root}: {type(exc).__name__}: {exc}") from None


def validate_path(path) -> list[Finding]:
    try:
        demo = load_demonstration(path)
    except DemoFormatError as exc:
        return [Finding("error", "unreadable", str(exc), str(path))]
    return validate_demonstration(demo)


def save_demonstration(demo: RawDemonstration, path, epoch: int = 0) -> None:
    """Write manifest, events and frame index; frame images must already live under ``path``."""
    root = Path(path)
    manifest = {
        "id": demo.demo_id or root.name,
        "instruction": demo.instruction,
        "os": demo.os,
        "resolution": list(demo.resolution),
        "epoch": epoch,
        "status": demo.status,
    }
    atomic_write_text(root / "manifest.json", dumps(manifest))
    atomic_write_text(
        root / "events.jsonl",
        "".join(json.dumps(e.to_record(), sort_keys=True) + "\n" for e in demo.events),
    )
    atomic_write_text(
        root / "frames.jsonl",
        "".join(
            json.dumps({"index": f.index, "t": f.timestamp, "file": _rel(f.image, root),
                        "w": f.width, "h": f.height}, sort_keys=True) + "\n"
            for f in demo.frames
        ),
    )


def find_demonstrations(path) -> list[Path]:
    """A demo directory itself, or the sorted demo directories directly under a corpus root."""
    root = Path(path)
    if (root / "manifest.json").exists():
        return [root]
    return sorted(p for p in root.iterdir() if (p / "manifest.json").exists())


# ---------------------------------------------------------------------------
# reduced action lists


def reduced_to_dict(demo: RawDemonstration, reduced, demo_dir, out_dir) -> dict:
    return {
        "format": REDUCED_FORMAT,
        "id": demo.demo_id,
        "demo": _rel(str(Path(demo_dir).resolve()), Path(out_dir).resolve()),
        "instruction": demo.instruction,
        "os": demo.os,
        "resolution": list(demo.resolution),
        "steps": [{"action": render_action(a), "span": list(span), "frame": None} for a, span in reduced],
    }


def load_reduced(path) -> tuple[Path, list[tuple[Action, tuple[int, int]]]]:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != REDUCED_FORMAT:
        raise DemoFormatError(f"{path} is not a reduced action file")
    res = tuple(doc["resolution"])
    steps = [(parse_action(s["action"], res), (s["span"][0], s["span"][1])) for s in doc["steps"]]
    return (path.parent / doc["demo"]).resolve(), steps


# ---------------------------------------------------------------------------
# trajectories


def _cot_dict(c: Optional[StructuredCoT]):
    if c is None:
        return None
    return {"observation": c.observation, "thought": c.thought, "action": c.action_description}


def _verdict_dict(v: Optional[ReflectionVerdict]):
    if v is None:
        return None
    return {"status": v.status, "rationale": v.rationale, "state_change": v.state_change}


def trajectory_to_dict(traj: Trajectory, out_dir) -> dict:
    base = Path(out_dir).resolve()
    s = traj.summary
    return {
        "format": TRAJECTORY_FORMAT,
        "id": traj.traj_id,
        "instruction": traj.instruction,
        "refined_instruction": traj.refined_instruction,
        "os": traj.os,
        "resolution": list(traj.resolution),
        "privacy": traj.privacy,
        "failed_steps": list(traj.failed_steps),
        "summary": None if s is None else {
            "refined_instruction": s.refined_instruction,
            "alignment": s.alignment,
            "efficiency": s.efficiency,
            "difficulty": s.difficulty,
        },
        "meta": dict(traj.meta),
        "steps": [
            {
                "action": render_action(st.action),
                "span": list(st.span) if st.span is not None else None,
                "frame": st.state.index,
                "t": st.state.timestamp,
                "image": _rel(st.state.image, base),
                "w": st.state.width,
                "h": st.state.height,
                "cot": _cot_dict(st.cot),
                "verdict": _verdict_dict(st.verdict),
            }
            for st in traj.steps
        ],
    }


def trajectory_from_dict(doc: dict, base_dir) -> Trajectory:
    if doc.get("format") != TRAJECTORY_FORMAT:
        raise DemoFormatError("not a trajectory document")
    base = Path(base_dir)
    res = tuple(doc["resolution"])
    steps = []
    for s in doc["steps"]:
        frame = Frame(s["frame"], s["t"], str((base / s["image"]).resolve()), s["w"], s["h"])
        cot = None
        if s.get("cot"):
            c = s["cot"]
            cot = StructuredCoT(action_description=c["action"], thought=c.get("thought"),
                                observation=c.get("observation"))
        verdict = None
        if s.get("verdict"):
            v = s["verdict"]
            verdict = ReflectionVerdict(v["status"], v.get("rationale") or "", v.get("state_change"))
        span = tuple(s["span"]) if s.get("span") is not None else None
        steps.append(Step(frame, parse_action(s["action"], res), span, cot, verdict))
    summ = doc.get("summary")
    return Trajectory(
        instruction=doc["instruction"],
        os=doc["os"],
        steps=tuple(steps),
        resolution=res,
        refined_instruction=doc.get("refined_instruction"),
        summary=TrajectorySummary(**summ) if summ else None,
        privacy=doc.get("privacy"),
        failed_steps=tuple(doc.get("failed_steps", ())),
        traj_id=doc.get("id", ""),
        meta=doc.get("meta", {}),
    )


def save_trajectory(traj: Trajectory, path) -> None:
    path = Path(path)
    atomic_write_text(path, dumps(trajectory_to_dict(traj, path.parent)))


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    return trajectory_from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows))


def read_jsonl(path) -> list[dict]:
    return _read_jsonl(Path(path))
