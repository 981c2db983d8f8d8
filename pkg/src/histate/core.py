"""Events, traces, and variables defined by recursion over event histories.

A trace is a finite sequence of events; the empty trace plays the role of
the initial state.  A ``SeqFn`` is a variable whose value at a trace is
obtained by folding a step rule over the events, starting from the value
at the empty trace.  The fold accumulator is a first-class object so that
the reachable internal states of a function can be enumerated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping


class HistateError(Exception):
    """Base class for every error raised by this package."""


class AlphabetError(HistateError):
    """An event does not conform to the declared alphabet."""


class ConfigError(HistateError):
    """A configuration or input file is malformed."""


def freeze(value: Any) -> Any:
    """Canonical hashable form of a value.

    Maps become sorted tuples of pairs, sequences become tuples.  Values
    are expected to be built from integers, booleans, strings and finite
    tuples/maps of those.
    """
    if isinstance(value, dict):
        return tuple(sorted((k, freeze(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    if isinstance(value, (set, frozenset)):
        return tuple(sorted(freeze(v) for v in value))
    return value


def value_from_json(value: Any) -> Any:
    """Normalize a JSON-decoded value (lists become tuples, recursively)."""
    if isinstance(value, list):
        return tuple(value_from_json(v) for v in value)
    if isinstance(value, dict):
        return {k: value_from_json(v) for k, v in value.items()}
    return value


def value_to_json(value: Any) -> Any:
    if isinstance(value, tuple):
        return [value_to_json(v) for v in value]
    if isinstance(value, dict):
        return {k: value_to_json(v) for k, v in value.items()}
    return value


@dataclass(frozen=True)
class Alphabet:
    """A declared finite set of event tags, with optional payload schemas.

    ``payload_fields`` maps a tag to the exact set of payload field names
    events with that tag must carry.  Tags without an entry accept any
    payload.
    """

    tags: tuple[str, ...]
    payload_fields: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __contains__(self, tag: str) -> bool:
        return tag in self.tags

    def validate(self, event: "Event") -> None:
        if event.tag not in self.tags:
            raise AlphabetError(f"unknown event tag {event.tag!r}; alphabet is {self.tags}")
        schema = self.payload_fields.get(event.tag)
        if schema is not None and set(event.payload) != set(schema):
            raise AlphabetError(
                f"event {event.tag!r} payload fields {sorted(event.payload)} "
                f"do not match declared schema {sorted(schema)}"
            )

    def to_json(self) -> list:
        out = []
        for tag in self.tags:
            if tag in self.payload_fields:
                out.append({"tag": tag, "payload": list(self.payload_fields[tag])})
            else:
                out.append(tag)
        return out

    @classmethod
    def from_json(cls, doc: Any) -> "Alphabet":
        if not isinstance(doc, list):
            raise ConfigError("alphabet: expected a JSON list of tag declarations")
        tags: list[str] = []
        fields: dict[str, tuple[str, ...]] = {}
        for i, entry in enumerate(doc):
            if isinstance(entry, str):
                tags.append(entry)
            elif isinstance(entry, dict):
                try:
                    tag = entry["tag"]
                except KeyError:
                    raise ConfigError(f"alphabet[{i}]: missing 'tag'") from None
                tags.append(tag)
                if "payload" in entry:
                    fields[tag] = tuple(entry["payload"])
            else:
                raise ConfigError(f"alphabet[{i}]: expected string or object")
        return cls(tuple(tags), fields)


@dataclass(frozen=True)
class Event:
    """A single event: a tag from the alphabet, an integer-valued payload,
    and a non-negative integer duration in time units."""

    tag: str
    payload: Mapping[str, int] = field(default_factory=dict)
    dur: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "payload", dict(self.payload))
        if self.dur < 0:
            raise ValueError(f"event duration must be >= 0, got {self.dur}")

    def __hash__(self) -> int:
        return hash((self.tag, tuple(sorted(self.payload.items())), self.dur))

    def to_json(self) -> dict:
        return {"tag": self.tag, "payload": dict(self.payload), "dur": self.dur}

    @classmethod
    def from_json(cls, doc: Any) -> "Event":
        if not isinstance(doc, dict) or "tag" not in doc:
            raise ConfigError(f"event: expected an object with a 'tag', got {doc!r}")
        return cls(doc["tag"], doc.get("payload", {}), doc.get("dur", 0))


@dataclass(frozen=True)
class Trace:
    """A finite, immutable sequence of events.  ``Trace()`` is the empty trace."""

    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return Trace(self.events[index])
        return self.events[index]

    def append(self, event: Event, alphabet: Alphabet | None = None) -> "Trace":
        """The trace extended by one event, validated against ``alphabet`` if given."""
        if alphabet is not None:
            alphabet.validate(event)
        return Trace(self.events + (event,))

    def concat(self, other: "Trace") -> "Trace":
        return Trace(self.events + other.events)

    __add__ = concat

    def prefix(self, n: int) -> "Trace":
        return Trace(self.events[:n])

    def tags(self) -> tuple[str, ...]:
        return tuple(e.tag for e in self.events)


def append(w: Trace, a: Event, alphabet: Alphabet | None = None) -> Trace:
    return w.append(a, alphabet)


def concat(w: Trace, z: Trace) -> Trace:
    return w.concat(z)


_MISSING = object()


@dataclass(frozen=True)
class SeqFn:
    """A variable defined by recursion on traces.

    ``initial`` is the fold accumulator at the empty trace and ``step``
    produces the accumulator after one more event.  The observable value
    at a trace is ``output(accumulator)``; when ``output`` is ``None`` the
    accumulator itself is the value, so ``eval(empty) == initial``.

    Evaluation is pure: the same trace always yields the same value, and
    evaluation of a concatenation can be resumed from the accumulator of
    the left part.
    """

    initial: Any
    step: Callable[[Any, Event], Any]
    output: Callable[[Any], Any] | None = None
    alphabet: Alphabet | None = None
    name: str = ""

    def accumulate(self, w: Iterable[Event]) -> Any:
        """Fold ``step`` over ``w`` from ``initial``; the final accumulator."""
        return self.resume(self.initial, w)

    def resume(self, acc: Any, w: Iterable[Event]) -> Any:
        """Continue the fold from a given accumulator."""
        for event in w:
            if self.alphabet is not None:
                self.alphabet.validate(event)
            acc = self.step(acc, event)
        return acc

    def value_of(self, acc: Any) -> Any:
        return acc if self.output is None else self.output(acc)

    def eval(self, w: Iterable[Event]) -> Any:
        return self.value_of(self.accumulate(w))


def eval_seq_fn(f: SeqFn, w: Trace) -> Any:
    return f.eval(w)


def count_fn(alphabet: Alphabet | None = None) -> SeqFn:
    """The variable that counts all events: 0 at the empty trace, +1 per event."""
    return SeqFn(initial=0, step=lambda n, _a: n + 1, alphabet=alphabet, name="count")


# ---------------------------------------------------------------------------
# File formats.  Traces are stored one JSON event per line; a blank line or
# end of file terminates the trace.

def write_trace(path, trace: Trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in trace:
            fh.write(json.dumps(event.to_json(), sort_keys=True))
            fh.write("\n")


def read_trace(path, alphabet: Alphabet | None = None) -> Trace:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                break
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            event = Event.from_json(doc)
            if alphabet is not None:
                alphabet.validate(event)
            events.append(event)
    return Trace(tuple(events))


def write_alphabet(path, alphabet: Alphabet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(alphabet.to_json(), fh, indent=2)
        fh.write("\n")


def read_alphabet(path) -> Alphabet:
    with open(path, "r", encoding="utf-8") as fh:
        return Alphabet.from_json(json.load(fh))
