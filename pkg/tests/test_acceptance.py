"""Acceptance criteria 1-8, one marker per criterion.

The terminal summary prints a PASS/FAIL line per criterion (see conftest).
"""

import hashlib
import json
import random
import time
from pathlib import Path

import pytest

from cuakit import cli
from cuakit.bench import RunMatrix, average_success_rate, levenshtein, pass_at_n
from cuakit.cot import LEVELS, SampleConfig, emit_training_samples, image_count, validate_sample
from cuakit.cot.samples import SECTIONS, render_target
from cuakit.dsl import parse_action, render_action
from cuakit.model import Click, Terminate
from cuakit.reduce import reduce, reduce_events
from cuakit.align import build_trajectory
from cuakit.replay import replay, replay_events
from cuakit.synth import lower, random_script, synth_demo

from matcher_cases import CASES
from oracles import best_subset_ref, pass_at_n_ref, random_action, reference_keyframes
from test_matching import run_case


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


# 1 ---------------------------------------------------------------------------

@pytest.mark.acceptance(1)
def test_round_trip_10k():
    rng = random.Random(2024)
    actions = [random_action(rng) for _ in range(10_000)]
    t = time.perf_counter()
    back = [parse_action(render_action(a)) for a in actions]
    elapsed = time.perf_counter() - t
    assert back == actions
    assert elapsed < 5.0, f"{elapsed:.2f}s"


@pytest.mark.acceptance(1)
def test_literals():
    assert parse_action("pyautogui.click(x=0.157, y=0.1229)") == Click(0.157, 0.1229)
    assert parse_action("computer.terminate(status='success')") == Terminate("success")
    assert render_action(Click(0.157, 0.1229)) == "pyautogui.click(x=0.1570, y=0.1229)"
    assert render_action(Terminate("success")) == "computer.terminate(status='success')"


# 2 ---------------------------------------------------------------------------

@pytest.mark.acceptance(2)
def test_reduction_recovers_scripts():
    exact = equivalent = 0
    n = 1000
    t = time.perf_counter()
    for seed in range(n):
        rng = random.Random(seed)
        script = random_script(rng, rng.randint(3, 15))
        lowered = lower(script, rng)
        actions = [a for a, _ in reduce_events(lowered.events)]
        exact += actions == script
        equivalent += replay(actions) == replay_events(lowered.events)
    elapsed = time.perf_counter() - t
    print(f"exact {exact}/{n}, state-equivalent {equivalent}/{n}, {elapsed:.1f}s")
    assert exact / n >= 0.995
    assert equivalent == n
    assert elapsed < 60


# 3 ---------------------------------------------------------------------------

@pytest.mark.acceptance(3)
def test_keyframes_never_leak(tmp_path):
    checked = 0
    for seed in range(200):
        sd = synth_demo(seed, tmp_path)
        traj = build_trajectory(sd.demo, reduce(sd.demo))
        times = [f.timestamp for f in sd.demo.frames]
        idx = [s.state.index for s in traj.steps[: len(sd.marks)]]
        assert idx == reference_keyframes(times, sd.change_times, sd.marks), f"seed {seed}"
        for m, s in zip(sd.marks, traj.steps):
            if m.t_press is not None:
                assert s.state.timestamp <= m.t_move, f"seed {seed}"
                checked += 1
    assert checked > 200


# 4 ---------------------------------------------------------------------------

@pytest.mark.acceptance(4)
def test_average_row():
    assert abs(average_success_rate([28.29, 30.56, 30.28]) - 29.71) <= 0.005


@pytest.mark.acceptance(4)
def test_pass_at_n_monotone_and_exact():
    rng = random.Random(11)
    for _ in range(1000):
        runs, tasks = rng.randint(1, 6), rng.randint(1, 8)
        cells = [[rng.random() < rng.random() for _ in range(tasks)] for _ in range(runs)]
        m = RunMatrix(cells)
        vals = [pass_at_n(m, n) for n in range(1, runs + 1)]
        assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
        for n, v in enumerate(vals, 1):
            assert v == pytest.approx(pass_at_n_ref(cells, n))
        assert vals[-1] == pytest.approx(best_subset_ref(cells, runs))


# 5 ---------------------------------------------------------------------------

@pytest.mark.acceptance(5)
def test_matcher_fixtures():
    assert len(CASES) >= 40
    wrong = [c[0] for c in CASES if (lambda r: (r.success, r.matched))(run_case(c[1], c[2])) != (c[3], c[4])]
    assert wrong == []
    assert levenshtein("Helo", "Hello") == 1


# 6 ---------------------------------------------------------------------------

@pytest.mark.acceptance(6)
@pytest.mark.parametrize("level", LEVELS)
def test_sample_laws(ten_step, level):
    out = emit_training_samples(ten_step, SampleConfig(level=level, history_images=3))
    flagged = {i for i, s in enumerate(ten_step.steps) if s.verdict and s.verdict.status != "correct"}
    assert flagged
    assert [s["step"] for s in out] == [i for i in range(10) if i not in flagged]
    for s in out:
        validate_sample(s)
        assert image_count(s) == min(3, s["step"] + 1)
        heads = [ln for ln in s["messages"][-1]["content"][0]["text"].splitlines() if ln.startswith("## ")]
        assert heads == [f"## {name}:" for name in SECTIONS[level]]
        assert s["messages"][-1]["content"][0]["text"] == render_target(ten_step.steps[s["step"]], level)


# 7 ---------------------------------------------------------------------------

def _pipeline(root: Path, workers: int, backend: str, cache: Path) -> dict:
    w = ["--workers", str(workers)]
    steps = [
        ["reduce", "--in", str(root / "fx" / "demos"), "--out", str(root / "reduced")],
        ["align", "--in", str(root / "reduced"), "--out", str(root / "trajs")],
        ["annotate", "--in", str(root / "trajs"), "--out", str(root / "ann"), "--backend", backend,
         "--cache", str(cache)],
        ["emit", "--in", str(root / "ann"), "--out", str(root / "samples.jsonl"), "--mixture", "L1=1,L2=1,L3=1"],
        ["eval", "--bench", str(root / "fx" / "bench.json"), "--preds", str(root / "fx" / "preds.jsonl"),
         "--out", str(root / "eval")],
    ]
    for argv in steps:
        assert cli.main(argv + w) == 0, argv
    return {k: v for k, v in tree_digest(root).items() if not k.startswith("fx/")}


@pytest.mark.acceptance(7)
def test_pipeline_is_byte_identical(tmp_path):
    cache = tmp_path / "cache"
    runs = []
    for name in ("a", "b", "c"):
        root = tmp_path / name
        assert cli.main(["synth-fixture", "--out", str(root / "fx"), "--n", "6", "--seed", "3"]) == 0
        runs.append(root)
    # fill the cache once, then both compared runs answer from it alone
    _pipeline(runs[0], 1, "mock", cache)
    one = _pipeline(runs[1], 1, "replay", cache)
    eight = _pipeline(runs[2], 8, "replay", cache)
    assert one == eight
    assert len(one) > 20
    assert tree_digest(runs[1] / "fx") == tree_digest(runs[2] / "fx")


# 8 ---------------------------------------------------------------------------

@pytest.mark.acceptance(8)
def test_end_to_end_50(tmp_path):
    t = time.perf_counter()
    fx = tmp_path / "fx"
    assert cli.main(["synth-fixture", "--out", str(fx), "--n", "50", "--seed", "7"]) == 0
    _pipeline(tmp_path, 4, "mock", tmp_path / "cache")
    elapsed = time.perf_counter() - t
    rep = json.loads((tmp_path / "eval" / "report.json").read_text())
    assert rep["type"] == "eval"
    assert "Consistency check: passed" in (tmp_path / "eval" / "report.md").read_text()
    lines = (tmp_path / "samples.jsonl").read_text().splitlines()
    assert lines
    for line in lines:
        validate_sample(json.loads(line))
    assert elapsed < 300, f"{elapsed:.0f}s"
