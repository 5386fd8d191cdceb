import json
from dataclasses import replace

import httpx
import numpy as np
import pytest
from PIL import Image

from cuakit.cot import (
    BackendConfig,
    CachedClient,
    ChatRequest,
    HTTPClient,
    MockClient,
    ReplayClient,
    RetryPolicy,
    annotate_trajectory,
    classify_privacy,
    complete_parsed,
    generate_cot,
    reflect_step,
    render_visual_cues,
    summarize_trajectory,
)
from cuakit.cot.cues import cue_geometry
from cuakit.cot.synthesis import generate_request, parse_verdict
from cuakit.errors import BackendError, CueNotApplicable, VerdictParseError
from cuakit.model import Click, DragTo, Frame, Write

from conftest import annotated_trajectory

NO_SLEEP = RetryPolicy(attempts=3, backoff=0.5, sleep=lambda s: None)


@pytest.fixture
def traj(tmp_path):
    t = annotated_trajectory(tmp_path, 5)
    # strip annotations so the pipeline has something to do
    steps = [replace(s, cot=None, verdict=None) for s in t.steps]
    return replace(t, steps=tuple(steps))


class TestClients:
    def test_digest_ignores_image_path_but_not_content(self, tmp_path):
        a, b, c = tmp_path / "a.png", tmp_path / "b.png", tmp_path / "c.png"
        for p, v in ((a, 1), (b, 1), (c, 2)):
            Image.fromarray(np.full((4, 4), v, dtype=np.uint8)).save(p)

        def req(p, attempt=0):
            return ChatRequest("sys", ({"role": "user", "content": [{"type": "image", "image": str(p)}]},),
                               "reflect", attempt)

        assert req(a).digest() == req(b).digest()
        assert req(a).digest() != req(c).digest()
        assert req(a).digest() != req(a, attempt=1).digest()

    def test_cache_hit_skips_backend(self, tmp_path, traj):
        inner = MockClient()
        cached = CachedClient(inner, tmp_path / "cache")
        v1 = reflect_step(cached, traj, 0)
        v2 = reflect_step(cached, traj, 0)
        assert v1 == v2
        assert len(inner.calls) == 1
        assert (cached.hits, cached.misses) == (1, 1)
        replay = ReplayClient(tmp_path / "cache")
        assert reflect_step(replay, traj, 0) == v1

    def test_replay_miss(self, tmp_path, traj):
        with pytest.raises(BackendError):
            reflect_step(ReplayClient(tmp_path / "empty"), traj, 0)

    def test_mock_is_deterministic(self, traj):
        r = generate_request(traj, 1)
        assert MockClient().complete(r) == MockClient().complete(r)


class TestHTTP:
    def test_payload_and_auth(self, monkeypatch, traj):
        seen = {}

        def handler(request: httpx.Request):
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "<verdict>redundant</verdict>"
                                                                                 "<rationale>again</rationale>"}}]})

        monkeypatch.setenv("TEST_TOKEN", "s3cret")
        cfg = BackendConfig(kind="http", endpoint="https://example.invalid/v1/chat", model="m",
                            token_env="TEST_TOKEN")
        client = HTTPClient(cfg, transport=httpx.MockTransport(handler))
        v = reflect_step(client, traj, 0)
        assert v.status == "redundant"
        assert seen["auth"] == "Bearer s3cret"
        body = seen["body"]
        assert body["model"] == "m" and body["messages"][0]["role"] == "system"
        urls = [p["image_url"]["url"] for m in body["messages"][1:] for p in m["content"] if p["type"] == "image_url"]
        assert urls and all(u.startswith("data:image/png;base64,") for u in urls)

    def test_retry_then_success(self, traj):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={"choices": [{"message": {"content": "<privacy_sensitivity>Low"
                                                                                 "</privacy_sensitivity>"}}]})

        cfg = BackendConfig(kind="http", endpoint="https://example.invalid/x")
        client = HTTPClient(cfg, transport=httpx.MockTransport(handler))
        assert classify_privacy(client, traj, NO_SLEEP) == "low"
        assert len(calls) == 3

    def test_gives_up(self, traj):
        cfg = BackendConfig(kind="http", endpoint="https://example.invalid/x")
        client = HTTPClient(cfg, transport=httpx.MockTransport(lambda r: httpx.Response(500)))
        with pytest.raises(BackendError):
            classify_privacy(client, traj, NO_SLEEP)


def test_retry_sends_new_attempt_and_backs_off():
    slept, attempts = [], []

    class Flaky:
        def complete(self, request):
            attempts.append(request.attempt)
            return "garbage" if request.attempt < 2 else "<verdict>incorrect</verdict><rationale>r</rationale>"

    policy = RetryPolicy(attempts=3, backoff=0.5, sleep=slept.append)
    v = complete_parsed(Flaky(), ChatRequest("s", (), "reflect"), parse_verdict, policy)
    assert v.status == "incorrect"
    assert attempts == [0, 1, 2]
    assert slept == [0.5, 1.0]


class TestCues:
    @pytest.fixture
    def frame(self, tmp_path):
        p = tmp_path / "frame.png"
        Image.fromarray(np.full((80, 160, 3), 255, dtype=np.uint8)).save(p)
        return Frame(0, 0, str(p), 160, 80)

    def test_center_geometry(self):
        (px, py), box = cue_geometry(160, 80, 0.5, 0.5)
        assert (px, py) == (80, 40)
        assert box == (60, 30, 100, 50)

    def test_corner_clamped(self):
        (px, py), (l, t, r, b) = cue_geometry(160, 80, 0.0, 0.0)
        assert (px, py) == (0, 0)
        assert (l, t) == (0, 0) and (r - l, b - t) == (40, 20)

    def test_marker_is_red_and_source_untouched(self, tmp_path, frame):
        before = open(frame.image, "rb").read()
        out = render_visual_cues(frame, Click(0.25, 0.5), tmp_path / "cues")
        with Image.open(out) as im:
            assert im.size == (160 + 80, 80)
            r, g, b = im.convert("RGB").getpixel((40, 40))
        assert r > 200 and g < 60 and b < 60
        assert open(frame.image, "rb").read() == before

    def test_drag_cues_end_point(self, tmp_path, frame):
        out = render_visual_cues(frame, DragTo(0.75, 0.5), tmp_path / "cues")
        with Image.open(out) as im:
            assert im.convert("RGB").getpixel((120, 40))[1] < 60

    def test_not_applicable(self, tmp_path, frame):
        with pytest.raises(CueNotApplicable):
            render_visual_cues(frame, Write("x"), tmp_path)


class TestRoles:
    def test_reflect_passthrough(self, traj):
        ok = MockClient({"reflect": "<verdict>correct</verdict><state_change>menu opened</state_change>"})
        assert reflect_step(ok, traj, 0).state_change == "menu opened"
        bad = MockClient({"reflect": "<verdict>incorrect</verdict><rationale>wrong tab</rationale>"})
        v = reflect_step(bad, traj, 0)
        assert v.status == "incorrect"

    def test_generate_sections(self, traj):
        reply = ("## Observation:\nA settings window is open.\n## Thought:\nThe toggle is visible, so switch it.\n"
                 "## Action:\nClick the toggle.\n## Code:\n```python\npyautogui.click(x=0.1, y=0.5)\n```")
        cot = generate_cot(MockClient({"generate": reply}), traj, 0)
        assert cot.observation == "A settings window is open."
        assert cot.thought == "The toggle is visible, so switch it."
        assert cot.action_description == "Click the toggle."

    def test_terminal_step(self, traj):
        mock = MockClient()
        cot = generate_cot(mock, traj, traj.terminal_index)
        assert "computer.terminate" in cot.action_description

    def test_context_message_count(self, tmp_path, traj):
        mock = MockClient()
        for i in range(len(traj.steps)):
            generate_cot(mock, traj, i, tmp_path / "cues")
        for i, req in enumerate(mock.calls):
            assert req.system
            assert len(req.messages) == i + 1
            assert req.messages[-1]["role"] == "user"
        # the click step carries its cue image next to the screenshot
        assert sum(p["type"] == "image" for p in mock.calls[0].messages[-1]["content"]) == 2

    def test_summary(self, traj):
        mock = MockClient({"summarize": "<refined_instruction>Save the file as report.txt</refined_instruction>"
                                        "<score_alignment>7</score_alignment><score_efficiency>8</score_efficiency>"
                                        "<score_difficulty>5</score_difficulty>"})
        s = summarize_trajectory(mock, traj)
        assert (s.alignment, s.efficiency, s.difficulty) == (7, 8, 5)
        bad = MockClient({"summarize": "<refined_instruction>x</refined_instruction><score_alignment>11"
                                       "</score_alignment><score_efficiency>8</score_efficiency>"
                                       "<score_difficulty>5</score_difficulty>"})
        with pytest.raises(VerdictParseError):
            summarize_trajectory(bad, traj, NO_SLEEP)

    @pytest.mark.parametrize("label,expected", [("None", "none"), ("High", "high"), ("medium", "medium")])
    def test_privacy(self, traj, label, expected):
        mock = MockClient({"privacy": f"<privacy_sensitivity>{label}</privacy_sensitivity>"})
        assert classify_privacy(mock, traj) == expected

    def test_privacy_unknown(self, traj):
        with pytest.raises(VerdictParseError):
            classify_privacy(MockClient({"privacy": "<privacy_sensitivity>Secret</privacy_sensitivity>"}), traj,
                             NO_SLEEP)


class TestAnnotate:
    def test_full_pass(self, tmp_path, traj):
        t = annotate_trajectory(MockClient(incorrect_rate=0, redundant_rate=0), traj, tmp_path / "cues")
        assert all(s.cot is not None and s.verdict.status == "correct" for s in t.steps)
        assert t.summary is not None and t.refined_instruction == t.summary.refined_instruction
        assert t.privacy in ("none", "low", "medium", "high")
        assert t.failed_steps == ()

    def test_failed_step_continues(self, tmp_path, traj):
        def gen(req):
            return "nothing useful" if "Step: 2 of" in req.texts() else MockClient()._default(req)

        t = annotate_trajectory(MockClient({"generate": gen}), traj, tmp_path / "cues", NO_SLEEP)
        assert t.failed_steps == (1,)
        assert t.steps[1].cot is None and t.steps[2].cot is not None

    def test_reflect_runs_before_generate(self, tmp_path, traj):
        mock = MockClient()
        annotate_trajectory(mock, traj, tmp_path / "cues")
        tasks = [r.task for r in mock.calls]
        assert tasks[: 2 * len(traj.steps)] == ["reflect", "generate"] * len(traj.steps)
        assert tasks[-2:] == ["summarize", "privacy"]
