import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from cuakit.model import (  # noqa: E402
    Click,
    Frame,
    Hotkey,
    ReflectionVerdict,
    Step,
    StructuredCoT,
    Terminate,
    Trajectory,
    Write,
)

CRITERIA = {
    1: "parser round trip",
    2: "reduction replay equivalence",
    3: "keyframe anti-leakage",
    4: "metric reproduction",
    5: "step matching",
    6: "sample emission laws",
    7: "pipeline determinism",
    8: "end-to-end smoke",
}
_outcomes: dict[int, list[bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _outcomes.get(n)
        if results is None:
            continue
        verdict = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n} ({CRITERIA[n]}): {verdict} [{sum(results)}/{len(results)} checks]")


# ---------------------------------------------------------------------------
# fixtures


def write_frames(directory: Path, n: int, size=(64, 36)) -> list[Frame]:
    directory.mkdir(parents=True, exist_ok=True)
    frames = []
    for k in range(n):
        img = np.full((size[1], size[0], 3), (k * 23) % 256, dtype=np.uint8)
        p = directory / f"f{k:03d}.png"
        Image.fromarray(img).save(p)
        frames.append(Frame(k, k * 100, str(p.resolve()), size[0], size[1]))
    return frames


def annotated_trajectory(root: Path, n_steps: int = 10, flagged=(), failed=(), traj_id="fixture") -> Trajectory:
    """``n_steps`` steps (the last one terminate) carrying L3 CoT and verdicts."""
    frames = write_frames(root / traj_id, n_steps)
    steps = []
    for i in range(n_steps):
        if i == n_steps - 1:
            action, span = Terminate("success"), None
        elif i % 3 == 1:
            action, span = Write(f"text {i}"), (i * 10, i * 10 + 5)
        elif i % 3 == 2:
            action, span = Hotkey(("ctrl", "s")), (i * 10, i * 10 + 3)
        else:
            action, span = Click(0.1 + 0.05 * i, 0.5), (i * 10, i * 10 + 1)
        if i in flagged:
            verdict = ReflectionVerdict("incorrect", rationale=f"step {i} missed its target")
        else:
            verdict = ReflectionVerdict("correct", state_change=f"screen updated after step {i}")
        cot = None if i in failed else StructuredCoT(
            action_description=f"Do step {i}.",
            thought=f"Step {i} moves the task forward.",
            observation=f"The screen before step {i}.",
        )
        steps.append(Step(frames[i], action, span, cot=cot, verdict=None if i in failed else verdict))
    return Trajectory("Finish the fixture task", "ubuntu", steps, resolution=(1920, 1080),
                      failed_steps=tuple(failed), traj_id=traj_id)


@pytest.fixture
def ten_step(tmp_path):
    return annotated_trajectory(tmp_path, 10, flagged=(4,))
