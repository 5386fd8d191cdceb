import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuakit.bench import GoldOption, MatchConfig, levenshtein, match_step, normalized_edit_distance
from cuakit.bench.matching import category_of
from cuakit.dsl import parse_action
from cuakit.errors import DomainError

from matcher_cases import CASES, NO_STATUS_CASES
from oracles import levenshtein_ref, random_action


def run_case(code, options, cfg=None):
    return match_step(parse_action(code), [GoldOption.from_dict(o) for o in options], cfg)


@pytest.mark.parametrize("name,code,options,success,matched", CASES, ids=[c[0] for c in CASES])
def test_rule_table(name, code, options, success, matched):
    r = run_case(code, options)
    assert (r.success, r.matched) == (success, matched)


@pytest.mark.parametrize("name,code,options,success", NO_STATUS_CASES, ids=[c[0] for c in NO_STATUS_CASES])
def test_status_switch(name, code, options, success):
    assert run_case(code, options, MatchConfig(check_status=False)).success is success


def test_levenshtein_examples():
    assert levenshtein("Helo", "Hello") == 1
    assert normalized_edit_distance("Helo", "Hello") == pytest.approx(0.2)
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "sitting") == 3
    assert normalized_edit_distance("", "") == 0.0


_text = st.text(alphabet="abcXY é", max_size=12)


@settings(max_examples=300, deadline=None)
@given(a=_text, b=_text, c=_text)
def test_levenshtein_properties(a, b, c):
    d = levenshtein(a, b)
    assert d == levenshtein_ref(a, b)
    assert d == levenshtein(b, a)
    assert levenshtein(a, c) <= d + levenshtein(b, c)
    assert (d == 0) == (a == b)


def test_categories():
    assert category_of("write") == "content"
    assert category_of("terminate") == "function"
    assert category_of("dragTo") == "coord"
    assert category_of("rightClick") == "coord"
    assert category_of("hotkey") == "content"


def test_no_action_fails_with_error():
    r = match_step(None, [GoldOption("wait")], error="no_action")
    assert not r.success and r.error == "no_action" and r.predicted is None


@pytest.mark.parametrize("bad", [
    dict(kind="click"),
    dict(kind="click", bbox={"x_min": 0.6, "x_max": 0.4, "y_min": 0, "y_max": 1}),
    dict(kind="write", text="a", max_distance=1.5),
    dict(kind="scroll", direction="sideways"),
    dict(kind="hotkey", keys=[]),
    dict(kind="swipe"),
])
def test_option_validation(bad):
    with pytest.raises(DomainError):
        GoldOption.from_dict(bad)


def _random_option(rng):
    box = sorted([round(rng.random(), 4) for _ in range(2)]) + sorted([round(rng.random(), 4) for _ in range(2)])
    bbox = dict(x_min=box[0], x_max=box[1], y_min=box[2], y_max=box[3])
    return GoldOption.from_dict(rng.choice([
        dict(kind="click", bbox=bbox),
        dict(kind="doubleClick", bbox=bbox),
        dict(kind="scroll", direction=rng.choice(["up", "down", "left", "right"])),
        dict(kind="write", text=rng.choice(["abc", "hello", "x"]), max_distance=rng.choice([0.0, 0.1, 0.5])),
        dict(kind="press", keys=[rng.choice(["enter", "a", "tab"])]),
        dict(kind="hotkey", keys=["ctrl", rng.choice(["c", "v"])]),
        dict(kind="terminate", status=rng.choice(["success", "failure"])),
        dict(kind="wait"),
    ]))


@settings(max_examples=400, deadline=None)
@given(seed=st.integers(0, 10**9))
def test_disjunction_properties(seed):
    rng = random.Random(seed)
    pred = random_action(rng)
    opts = [_random_option(rng) for _ in range(rng.randint(1, 5))]
    base = match_step(pred, opts)
    shuffled = opts[:]
    rng.shuffle(shuffled)
    assert match_step(pred, shuffled).success == base.success
    extra = opts + [_random_option(rng)]
    if base.success:
        assert match_step(pred, extra).success
    assert match_step(pred, opts) == base
    if base.success:
        assert base.matched is not None
