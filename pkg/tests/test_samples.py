from collections import Counter
from dataclasses import replace

import jsonschema
import pytest

from cuakit.cot import LEVELS, SampleConfig, emit_training_samples, image_count, validate_sample
from cuakit.cot.samples import choose_level, render_target
from cuakit.errors import EmissionError
from cuakit.model import StructuredCoT

from conftest import annotated_trajectory


def images_of(sample):
    return [p["image"] for m in sample["messages"] for p in m["content"] if p["type"] == "image"]


def target(sample):
    return sample["messages"][-1]["content"][0]["text"]


def test_five_step_window(tmp_path):
    t = annotated_trajectory(tmp_path, 5)
    out = emit_training_samples(t, SampleConfig(level="L2", history_images=3))
    assert [s["step"] for s in out] == [0, 1, 2, 3, 4]
    assert [image_count(s) for s in out] == [1, 2, 3, 3, 3]


def test_flagged_step_excluded_but_kept_in_history(tmp_path):
    t = annotated_trajectory(tmp_path, 6, flagged=(2,))
    out = emit_training_samples(t, SampleConfig(level="L1"))
    assert 2 not in [s["step"] for s in out]
    s3 = next(s for s in out if s["step"] == 3)
    history = "\n".join(p["text"] for m in s3["messages"][1:-2] for p in m["content"] if p["type"] == "text")
    assert "# Step 3:\n## Action:\nDo step 2." in history


def test_keep_flagged_switch(tmp_path):
    t = annotated_trajectory(tmp_path, 6, flagged=(2,))
    out = emit_training_samples(t, SampleConfig(level="L1", drop_flagged_steps=False))
    assert len(out) == 6


def test_no_future_frames(tmp_path):
    t = annotated_trajectory(tmp_path, 8)
    for s in emit_training_samples(t, SampleConfig(level="L3")):
        allowed = {t.steps[k].state.image for k in range(s["step"] + 1)}
        assert set(images_of(s)) <= allowed
        assert images_of(s)[-1] == t.steps[s["step"]].state.image


def test_level_sections(tmp_path):
    t = annotated_trajectory(tmp_path, 3)
    step = t.steps[0]
    heads = {lv: [ln for ln in render_target(step, lv).splitlines() if ln.startswith("## ")] for lv in LEVELS}
    assert heads["L1"] == ["## Action:", "## Code:"]
    assert heads["L2"] == ["## Thought:", "## Action:", "## Code:"]
    assert heads["L3"] == ["## Observation:", "## Thought:", "## Action:", "## Code:"]


def test_missing_cot_for_level(tmp_path):
    t = annotated_trajectory(tmp_path, 3)
    t = t.with_step(1, cot=StructuredCoT("only an action"))
    assert len(emit_training_samples(t, SampleConfig(level="L1"))) == 3
    with pytest.raises(EmissionError, match="step 1"):
        emit_training_samples(t, SampleConfig(level="L2"))


def test_failed_steps_skipped(tmp_path):
    t = annotated_trajectory(tmp_path, 5, failed=(1,))
    assert [s["step"] for s in emit_training_samples(t)] == [0, 2, 3, 4]


def test_schema_rejects_wrong_sections(tmp_path):
    t = annotated_trajectory(tmp_path, 3)
    s = emit_training_samples(t, SampleConfig(level="L1"))[0]
    validate_sample(s)
    bad = dict(s, level="L3")
    with pytest.raises(jsonschema.ValidationError):
        validate_sample(bad)


def test_mixture_is_deterministic_and_roughly_uniform():
    draws = [choose_level({"L1": 1, "L2": 1, "L3": 1}, 5, "t", i) for i in range(3000)]
    assert draws == [choose_level({"L1": 1, "L2": 1, "L3": 1}, 5, "t", i) for i in range(3000)]
    c = Counter(draws)
    assert all(900 < c[lv] < 1100 for lv in LEVELS)
    assert {choose_level({"L3": 1}, s, "t", 0) for s in range(20)} == {"L3"}


def test_refined_instruction_used(tmp_path):
    t = replace(annotated_trajectory(tmp_path, 2), refined_instruction="Precise goal")
    s = emit_training_samples(t)[0]
    assert "# Task Instruction:\nPrecise goal" in s["messages"][-2]["content"][1]["text"]
