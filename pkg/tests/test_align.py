import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from PIL import Image

from cuakit.align import AlignerConfig, build_trajectory, select_keyframe, visual_distance
from cuakit.errors import AlignmentError, ImageIOError
from cuakit.model import Frame, Terminate
from cuakit.reduce import reduce, reduce_events
from cuakit.synth import synth_demo

from events import click, demo, move, tap
from oracles import full_res_distance, reference_keyframes


def _img(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
    return str(path)


@pytest.fixture
def images(tmp_path):
    h, w = 72, 128
    black = _img(tmp_path / "black.png", np.zeros((h, w)))
    white = _img(tmp_path / "white.png", np.full((h, w), 255))
    quad = np.full((h, w), 90)
    quad[: h // 2, : w // 2] = 200
    toggled = _img(tmp_path / "quad.png", quad)
    gray = _img(tmp_path / "gray.png", np.full((h, w), 90))
    return {"black": black, "white": white, "quad": toggled, "gray": gray}


def _f(path, i=0):
    return Frame(i, i * 100, path, 128, 72)


class TestDistance:
    def test_identity_and_extremes(self, images):
        assert visual_distance(_f(images["gray"]), _f(images["gray"])) == 0.0
        assert visual_distance(_f(images["black"]), _f(images["white"])) == pytest.approx(1.0)

    def test_quadrant_matches_full_resolution(self, images):
        got = visual_distance(_f(images["gray"]), _f(images["quad"]))
        assert got == pytest.approx(full_res_distance(images["gray"], images["quad"]), abs=1e-6)
        assert got == pytest.approx(0.25 * 110 / 255, abs=1e-6)

    def test_symmetric(self, images):
        a, b = _f(images["quad"]), _f(images["black"])
        assert visual_distance(a, b) == visual_distance(b, a)

    def test_unreadable(self, tmp_path, images):
        bad = tmp_path / "bad.png"
        bad.write_text("not an image")
        with pytest.raises(ImageIOError):
            visual_distance(_f(str(bad)), _f(images["gray"]))

    def test_config_bounds(self):
        with pytest.raises(ValueError):
            AlignerConfig(diff_threshold=1.0)
        with pytest.raises(ValueError):
            AlignerConfig(idle_gap=0)


def _sequence(images, change_at=400, n=10):
    return [Frame(k, k * 100, images["quad"] if k * 100 >= change_at else images["gray"], 128, 72)
            for k in range(n)]


class TestSelectKeyframe:
    def test_click_backtracks_before_premovement(self, images):
        frames = _sequence(images)
        events = [move(t, 0.1 + t / 2000, 0.5) for t in range(450, 700, 50)] + click(700, 0.45, 0.5)
        (action, span), = reduce_events(events)
        assert select_keyframe(frames, action, span, events, AlignerConfig()) == 4

    def test_key_takes_frame_before_event(self, images):
        frames = _sequence(images)
        events = tap(350, "a")
        (action, span), = reduce_events(events)
        assert select_keyframe(frames, action, span, events, AlignerConfig()) == 3

    def test_click_without_motion(self, images):
        frames = _sequence(images, change_at=200)
        events = click(650, 0.5, 0.5)
        (action, span), = reduce_events(events)
        assert select_keyframe(frames, action, span, events, AlignerConfig()) == 2

    def test_no_change_falls_back_to_last_frame_before_t0(self, images):
        frames = [Frame(k, k * 100, images["gray"], 128, 72) for k in range(10)]
        events = [move(520, 0.2, 0.2), move(560, 0.3, 0.3)] + click(600, 0.3, 0.3)
        (action, span), = reduce_events(events)
        assert select_keyframe(frames, action, span, events, AlignerConfig()) == 5

    def test_no_frame_before_action(self, images):
        frames = [Frame(k, 1000 + k * 100, images["gray"], 128, 72) for k in range(3)]
        events = tap(500, "a")
        (action, span), = reduce_events(events)
        with pytest.raises(AlignmentError):
            select_keyframe(frames, action, span, events, AlignerConfig())


class TestBuildTrajectory:
    def test_terminal_step_and_status(self, images):
        frames = _sequence(images)
        events = tap(100, "a") + tap(300, "enter") + click(600, 0.5, 0.5)
        for status in ("success", "failure"):
            d = demo(events, frames=frames, status=status)
            t = build_trajectory(d, reduce(d))
            assert len(t.steps) == 4
            assert t.steps[-1].action == Terminate(status)
            assert t.steps[-1].state.index == 9
            assert t.meta["aligner"]["diff_threshold"] == 0.02

    def test_error_names_step(self, images):
        # both keys fall after frame 0 and before frame 1, so step 1 has no frame of its own
        frames = [Frame(0, 0, images["gray"], 128, 72), Frame(1, 1000, images["quad"], 128, 72)]
        d = demo(tap(100, "enter") + tap(300, "tab"), frames=frames)
        with pytest.raises(AlignmentError) as e:
            build_trajectory(d, reduce(d))
        assert e.value.step == 1


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 10**6))
def test_synthetic_keyframes(tmp_path, seed):
    sd = synth_demo(seed, tmp_path)
    t1 = build_trajectory(sd.demo, reduce(sd.demo))
    idx = [s.state.index for s in t1.steps[:-1]]
    assert all(a < b for a, b in zip(idx, idx[1:]))
    times = [f.timestamp for f in sd.demo.frames]
    assert idx == reference_keyframes(times, sd.change_times, sd.marks)
    for m, s in zip(sd.marks, t1.steps):
        if m.t_press is not None:
            assert s.state.timestamp <= m.t_move
    assert build_trajectory(sd.demo, reduce(sd.demo)) == t1
