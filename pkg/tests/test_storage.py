import json

import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from cuakit.bench import BenchTask
from cuakit.errors import DemoFormatError
from cuakit.estimators import ActionReducer, KeyframeAligner, StepMatcher
from cuakit.reduce import reduce
from cuakit.align import build_trajectory
from cuakit.storage import (
    file_digest,
    load_demonstration,
    load_reduced,
    load_trajectory,
    reduced_to_dict,
    save_trajectory,
    validate_path,
)
from cuakit.synth import bench_fixture, synth_corpus, synth_demo

from conftest import annotated_trajectory


def test_demo_round_trip(tmp_path):
    sd = synth_demo(4, tmp_path)
    assert load_demonstration(sd.path) == sd.demo


def test_reduced_round_trip(tmp_path):
    sd = synth_demo(5, tmp_path / "demos")
    red = reduce(sd.demo)
    out = tmp_path / "out"
    out.mkdir()
    doc = reduced_to_dict(sd.demo, red, sd.path, out)
    (out / "r.json").write_text(json.dumps(doc))
    demo_dir, steps = load_reduced(out / "r.json")
    assert demo_dir == sd.path.resolve()
    assert steps == red


def test_trajectory_round_trip_with_annotations(tmp_path):
    t = annotated_trajectory(tmp_path, 6, flagged=(2,), failed=(4,))
    save_trajectory(t, tmp_path / "t.json")
    assert load_trajectory(tmp_path / "t.json") == t
    doc = json.loads((tmp_path / "t.json").read_text())
    assert not any(s["image"].startswith("/") for s in doc["steps"])


def test_broken_manifest(tmp_path):
    sd = synth_demo(6, tmp_path)
    (sd.path / "manifest.json").write_text("{not json")
    with pytest.raises(DemoFormatError):
        load_demonstration(sd.path)
    (f,) = validate_path(sd.path)
    assert f.severity == "error"


def test_synth_is_reproducible(tmp_path):
    a = synth_corpus(tmp_path / "a", 3, seed=12)
    b = synth_corpus(tmp_path / "b", 3, seed=12)
    for x, y in zip(a, b):
        files = sorted(p.relative_to(x.path) for p in x.path.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(y.path) for p in y.path.rglob("*") if p.is_file())
        assert all(file_digest(x.path / f) == file_digest(y.path / f) for f in files)
    assert bench_fixture(a, 1) == bench_fixture(b, 1)


class TestEstimators:
    def test_params_and_clone(self):
        r = ActionReducer(double_click_window=300)
        assert r.get_params()["double_click_window"] == 300
        c = clone(r).set_params(typing_merge_gap=900)
        assert c.config().typing_merge_gap == 900 and r.typing_merge_gap == 2000

    def test_pipeline_matches_functions(self, tmp_path):
        demos = synth_corpus(tmp_path, 3, seed=2)
        pipe = make_pipeline(ActionReducer(), KeyframeAligner())
        trajs = pipe.fit_transform([d.path for d in demos])
        assert trajs == [build_trajectory(d.demo, reduce(d.demo)) for d in demos]

    def test_step_matcher_score(self, tmp_path):
        demos = synth_corpus(tmp_path, 4, seed=8)
        bench, rows = bench_fixture(demos, 8)
        tasks = [BenchTask.from_dict(t) for t in bench["tasks"]]
        by_task = {}
        for r in rows:
            by_task.setdefault(r["task"], []).append(r["response"])
        X = [by_task[t.id] for t in tasks]
        m = StepMatcher().fit(X, tasks)
        results = m.predict(X, tasks)
        total = sum(len(r) for r in results)
        assert m.score(X, tasks) == pytest.approx(sum(x.success for r in results for x in r) / total)
