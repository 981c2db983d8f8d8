import json

import pytest
from hypothesis import given

from conftest import events, traces
from histate.core import (
    Alphabet,
    AlphabetError,
    ConfigError,
    Event,
    SeqFn,
    Trace,
    append,
    concat,
    count_fn,
    eval_seq_fn,
    freeze,
    read_trace,
    write_trace,
)


def test_append_to_empty():
    a = Event("a")
    assert append(Trace(), a) == Trace((a,))


def test_append_is_definitional():
    a, b = Event("a"), Event("b")
    assert append(Trace((a,)), b) == Trace((a, b))


@given(traces(), events())
def test_append_grows_length_by_one(w, a):
    assert len(append(w, a)) == len(w) + 1


@given(traces(), traces())
def test_concat_length(w, z):
    assert len(concat(w, z)) == len(w) + len(z)


@given(traces())
def test_concat_identity(w):
    assert concat(w, Trace()) == w
    assert concat(Trace(), w) == w


@given(traces(max_size=6), traces(max_size=6), traces(max_size=6))
def test_concat_associative(w, z, u):
    assert concat(concat(w, z), u) == concat(w, concat(z, u))


def test_append_rejects_unknown_tag():
    alphabet = Alphabet(("a", "b"))
    with pytest.raises(AlphabetError):
        append(Trace(), Event("z"), alphabet)


def test_payload_schema_enforced():
    alphabet = Alphabet(("go",), {"go": ("core",)})
    alphabet.validate(Event("go", {"core": 1}))
    with pytest.raises(AlphabetError):
        alphabet.validate(Event("go", {"other": 1}))


def test_duration_must_be_non_negative():
    with pytest.raises(ValueError):
        Event("a", dur=-1)


def test_count_at_empty_is_zero():
    assert eval_seq_fn(count_fn(), Trace()) == 0


def test_count_of_three_events(abc_trace):
    assert eval_seq_fn(count_fn(), abc_trace) == 3


def test_count_of_any_length_five_trace():
    w = Trace(tuple(Event("a") for _ in range(5)))
    assert count_fn().eval(w) == 5


@given(traces(), events())
def test_count_step_increments(w, a):
    f = count_fn()
    assert f.eval(append(w, a)) - f.eval(w) == 1


@given(traces(max_size=8), traces(max_size=8))
def test_count_monotone_under_extension(w, u):
    f = count_fn()
    assert f.eval(w) <= f.eval(concat(w, u))


@given(traces(max_size=8), traces(max_size=8))
def test_fold_compositionality(w, z):
    # resuming the fold from the accumulator at w equals folding the whole
    # concatenation from scratch
    f = SeqFn(initial=(0, 0), step=lambda acc, e: (acc[0] + 1, acc[1] + e.dur))
    direct = f.accumulate(concat(w, z))
    resumed = f.resume(f.accumulate(w), z)
    assert direct == resumed


@given(traces())
def test_evaluation_is_deterministic(w):
    f = count_fn()
    assert f.eval(w) == f.eval(w)


def test_seq_fn_validates_alphabet():
    f = count_fn(Alphabet(("a",)))
    with pytest.raises(AlphabetError):
        f.eval(Trace((Event("z"),)))


def test_output_projection_defaults_to_accumulator():
    f = SeqFn(initial=7, step=lambda n, e: n)
    assert f.eval(Trace()) == 7
    g = SeqFn(initial=7, step=lambda n, e: n + 1, output=lambda n: n % 2)
    assert g.eval(Trace((Event("a"),))) == 0


def test_freeze_canonicalizes_containers():
    assert freeze({"b": 2, "a": [1, 2]}) == (("a", (1, 2)), ("b", 2))
    assert freeze((1, {"x": 1})) == (1, (("x", 1),))
    assert hash(freeze({"a": {"b": [1]}})) == hash(freeze({"a": {"b": (1,)}}))


def test_trace_file_round_trip(tmp_path):
    w = Trace((Event("a", {"core": 0}, 1), Event("b", {}, 2)))
    path = tmp_path / "trace.jsonl"
    write_trace(path, w)
    assert read_trace(path) == w


def test_trace_file_blank_line_terminates(tmp_path):
    path = tmp_path / "trace.jsonl"
    path.write_text(
        json.dumps({"tag": "a", "payload": {}, "dur": 0})
        + "\n\n"
        + json.dumps({"tag": "b", "payload": {}, "dur": 0})
        + "\n"
    )
    assert read_trace(path) == Trace((Event("a"),))


def test_trace_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json\n")
    with pytest.raises(ConfigError):
        read_trace(path)


def test_alphabet_file_round_trip(tmp_path):
    alphabet = Alphabet(("a", "go"), {"go": ("core",)})
    doc = alphabet.to_json()
    assert Alphabet.from_json(doc) == alphabet


def test_trace_slicing_and_prefix(abc_trace):
    assert abc_trace.prefix(2) == abc_trace[:2]
    assert abc_trace[0] == Event("a")
    assert abc_trace.tags() == ("a", "b", "c")
