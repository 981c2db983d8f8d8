import hypothesis.strategies as st
import pytest

from histate.core import Event, Trace

DEFAULT_TAGS = ("a", "b", "c")


def events(tags=DEFAULT_TAGS, max_dur=5):
    return st.builds(
        Event,
        tag=st.sampled_from(tags),
        payload=st.just({}),
        dur=st.integers(min_value=0, max_value=max_dur),
    )


def traces(tags=DEFAULT_TAGS, max_size=12):
    return st.lists(events(tags), max_size=max_size).map(lambda evs: Trace(tuple(evs)))


@pytest.fixture
def abc_trace():
    return Trace((Event("a"), Event("b"), Event("c")))
