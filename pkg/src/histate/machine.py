"""Finite Moore machines and their correspondence with history functions.

A machine is the quotient view of a finitely-representable ``SeqFn``: its
states are classes of traces that no suffix can tell apart, its output map
gives the value of the function at any trace in the class.  This module
builds that quotient by enumerating reachable fold accumulators and
refining by output-indistinguishability, converts machines back into
functions, minimizes explicit machines, and computes the transformation
monoid induced by traces (two traces are identified exactly when no
surrounding context can tell them apart).
"""

from __future__ import annotations

import json
import os
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .core import (
    Alphabet,
    ConfigError,
    Event,
    HistateError,
    SeqFn,
    Trace,
    freeze,
    value_from_json,
    value_to_json,
)

DEFAULT_STATE_CAP = 10_000
STATE_CAP_ENV = "HISTATE_CAP"


class MachineError(HistateError):
    """A machine is malformed or an operation's precondition fails."""


class StateCapError(HistateError):
    """Reachable-state enumeration exceeded the configured cap."""


def state_cap(cap: int | None = None) -> int:
    """Effective state cap: explicit argument, else HISTATE_CAP, else default."""
    if cap is not None:
        return cap
    env = os.environ.get(STATE_CAP_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{STATE_CAP_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_STATE_CAP


@dataclass(frozen=True)
class MooreMachine:
    """An explicit finite Moore machine.

    ``delta`` must be total on states x alphabet and ``gamma`` total on
    states.  State ids are dense integers assigned in breadth-first
    discovery order by the constructors in this module, which makes all
    derived artifacts deterministic across runs.
    """

    alphabet: tuple[str, ...]
    states: tuple[int, ...]
    initial: int
    delta: dict[tuple[int, str], int]
    gamma: dict[int, Any]

    def __post_init__(self) -> None:
        states = set(self.states)
        if not states:
            raise MachineError("machine must have at least one state")
        if self.initial not in states:
            raise MachineError(f"initial state {self.initial} not in states")
        for s in self.states:
            if s not in self.gamma:
                raise MachineError(f"gamma is not total: missing state {s}")
            for tag in self.alphabet:
                if (s, tag) not in self.delta:
                    raise MachineError(f"delta is not total: missing ({s}, {tag!r})")
                if self.delta[(s, tag)] not in states:
                    raise MachineError(f"delta({s}, {tag!r}) leaves the state set")

    def step(self, state: int, tag: str) -> int:
        try:
            return self.delta[(state, tag)]
        except KeyError:
            raise MachineError(f"no transition for ({state}, {tag!r})") from None

    def run(self, w: Iterable) -> int:
        """The state reached from the initial state on a trace (or tag sequence)."""
        state = self.initial
        for item in w:
            state = self.step(state, item.tag if isinstance(item, Event) else item)
        return state

    def output(self, w: Iterable) -> Any:
        return self.gamma[self.run(w)]

    def to_seq_fn(self) -> SeqFn:
        """The history function computed by this machine: gamma after delta-star."""
        alphabet = Alphabet(self.alphabet)
        return SeqFn(
            initial=self.initial,
            step=lambda s, e: self.step(s, e.tag),
            output=lambda s: self.gamma[s],
            alphabet=alphabet,
            name="machine",
        )

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "states": list(self.states),
            "initial": self.initial,
            "delta": [[s, tag, t] for (s, tag), t in sorted(self.delta.items())],
            "gamma": [[s, value_to_json(v)] for s, v in sorted(self.gamma.items())],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MooreMachine":
        try:
            return cls(
                alphabet=tuple(doc["alphabet"]),
                states=tuple(doc["states"]),
                initial=doc["initial"],
                delta={(s, tag): t for s, tag, t in doc["delta"]},
                gamma={s: value_from_json(v) for s, v in doc["gamma"]},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"machine file: {exc}") from None


def save_machine(path, machine: MooreMachine) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(machine.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_machine(path) -> MooreMachine:
    with open(path, "r", encoding="utf-8") as fh:
        return MooreMachine.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Construction from a history function.

def machine_from_seq_fn(f: SeqFn, cap: int | None = None) -> MooreMachine:
    """The minimal machine computing ``f``.

    Reachable fold accumulators are enumerated breadth-first over the
    declared alphabet (bare events: empty payload, zero duration), then
    quotiented by output-indistinguishability via partition refinement.
    Raises ``StateCapError`` when more than ``cap`` accumulators are
    reachable: the function is not finitely representable at this cap.
    """
    if f.alphabet is None:
        raise MachineError("machine_from_seq_fn requires a SeqFn with a declared alphabet")
    cap = state_cap(cap)
    tags = f.alphabet.tags
    probes = {tag: Event(tag) for tag in tags}

    reps = [f.initial]
    ids = {freeze(f.initial): 0}
    trans: list[list[int]] = []
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        row = []
        for tag in tags:
            nxt = f.step(reps[sid], probes[tag])
            key = freeze(nxt)
            if key not in ids:
                if len(reps) >= cap:
                    raise StateCapError(
                        f"{f.name or 'function'} is not finitely representable "
                        f"at cap {cap}: more than {cap} reachable accumulators"
                    )
                ids[key] = len(reps)
                reps.append(nxt)
                queue.append(ids[key])
            row.append(ids[key])
        trans.append(row)
        # rows are appended in BFS order, so trans[sid] is always fresh
    outputs = [f.value_of(rep) for rep in reps]
    return _quotient(len(reps), 0, tags, trans, outputs)


def seq_fn_from_machine(machine: MooreMachine) -> SeqFn:
    return machine.to_seq_fn()


# ---------------------------------------------------------------------------
# Minimization by partition refinement.

def _quotient(n: int, initial: int, tags: tuple[str, ...],
              trans: list[list[int]], outputs: list[Any]) -> MooreMachine:
    """Quotient a reachable transition graph by output-indistinguishability
    and relabel classes in BFS discovery order from the initial class."""
    # initial partition: states with equal output share a block
    block: dict[int, int] = {}
    by_out: dict[Any, int] = {}
    for s in range(n):
        key = freeze(outputs[s])
        if key not in by_out:
            by_out[key] = len(by_out)
        block[s] = by_out[key]

    n_blocks = len(by_out)
    while True:
        sig_ids: dict[tuple, int] = {}
        new_block: dict[int, int] = {}
        for s in range(n):
            sig = (block[s], tuple(block[t] for t in trans[s]))
            if sig not in sig_ids:
                sig_ids[sig] = len(sig_ids)
            new_block[s] = sig_ids[sig]
        if len(sig_ids) == n_blocks:
            break
        block = new_block
        n_blocks = len(sig_ids)

    # canonical relabeling: BFS from the initial block, alphabet order
    rep_of_block: dict[int, int] = {}
    for s in range(n):
        rep_of_block.setdefault(block[s], s)
    order: dict[int, int] = {block[initial]: 0}
    queue = deque([block[initial]])
    while queue:
        b = queue.popleft()
        rep = rep_of_block[b]
        for j in range(len(tags)):
            nb = block[trans[rep][j]]
            if nb not in order:
                order[nb] = len(order)
                queue.append(nb)

    states = tuple(range(len(order)))
    delta = {}
    gamma = {}
    for b, sid in order.items():
        rep = rep_of_block[b]
        gamma[sid] = outputs[rep]
        for j, tag in enumerate(tags):
            delta[(sid, tag)] = order[block[trans[rep][j]]]
    return MooreMachine(tags, states, 0, delta, gamma)


def minimize(machine: MooreMachine) -> MooreMachine:
    """The minimal machine with the same outputs on every trace.

    Only states reachable from the initial state are retained; no two
    states of the result are output-indistinguishable.
    """
    # restrict to the reachable part first
    reach = [machine.initial]
    seen = {machine.initial}
    for s in reach:
        for tag in machine.alphabet:
            t = machine.delta[(s, tag)]
            if t not in seen:
                seen.add(t)
                reach.append(t)
    index = {s: i for i, s in enumerate(reach)}
    trans = [[index[machine.delta[(s, tag)]] for tag in machine.alphabet] for s in reach]
    outputs = [machine.gamma[s] for s in reach]
    return _quotient(len(reach), 0, machine.alphabet, trans, outputs)


# ---------------------------------------------------------------------------
# Transformation monoid.

@dataclass(frozen=True)
class Monoid:
    """The monoid of state transformations induced by traces.

    Elements are the distinct maps state -> state realized by traces on
    the minimized machine; the operation is concatenation of traces, the
    identity is the empty trace's transformation.  ``representatives``
    holds a shortest witness word (tuple of tags) per element.
    """

    elements: tuple[int, ...]
    table: dict[tuple[int, int], int]
    identity: int
    representatives: dict[int, tuple[str, ...]]
    transformations: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    @property
    def order(self) -> int:
        return len(self.elements)

    def to_json(self) -> dict:
        n = len(self.elements)
        return {
            "order": n,
            "identity": self.identity,
            "table": [[self.table[(i, j)] for j in range(n)] for i in range(n)],
            "representatives": {str(i): list(self.representatives[i]) for i in self.elements},
        }


def syntactic_monoid(machine: MooreMachine) -> Monoid:
    """Monoid of trace actions on the minimized machine.

    On the minimized machine two traces induce the same state map exactly
    when no surrounding context distinguishes them, so the element set is
    the set of congruence classes and composition realizes concatenation.
    """
    m = minimize(machine)
    n = len(m.states)
    identity = tuple(range(n))
    gens = {tag: tuple(m.delta[(s, tag)] for s in range(n)) for tag in m.alphabet}

    elems: dict[tuple[int, ...], int] = {identity: 0}
    maps = [identity]
    reps: dict[int, tuple[str, ...]] = {0: ()}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        base = maps[i]
        for tag in m.alphabet:
            g = gens[tag]
            composed = tuple(g[x] for x in base)  # apply base first, then tag
            if composed not in elems:
                elems[composed] = len(maps)
                maps.append(composed)
                reps[elems[composed]] = reps[i] + (tag,)
                queue.append(elems[composed])

    table = {}
    for i, first in enumerate(maps):
        for j, second in enumerate(maps):
            combined = tuple(second[x] for x in first)
            table[(i, j)] = elems[combined]
    return Monoid(
        elements=tuple(range(len(maps))),
        table=table,
        identity=0,
        representatives=reps,
        transformations=tuple(maps),
    )


def save_monoid(path, monoid: Monoid) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(monoid.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Bounded equivalence checking.

@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    witness: Trace | None
    checked: int

    def __bool__(self) -> bool:
        return self.equivalent


def equivalent_up_to(f: SeqFn, g: SeqFn, depth: int,
                     events: tuple[Event, ...] | None = None) -> EquivalenceResult:
    """Compare two functions on every trace of length <= depth.

    Traces are enumerated breadth-first over ``events`` (by default, one
    bare event per tag of the declared alphabet), so a reported witness is
    a shortest differing trace.
    """
    if events is None:
        alphabet = f.alphabet or g.alphabet
        if alphabet is None:
            raise MachineError("equivalent_up_to needs a declared alphabet or explicit events")
        if f.alphabet is not None and g.alphabet is not None and f.alphabet.tags != g.alphabet.tags:
            raise MachineError(f"alphabets differ: {f.alphabet.tags} vs {g.alphabet.tags}")
        events = tuple(Event(tag) for tag in alphabet.tags)

    checked = 0
    queue = deque([((), f.initial, g.initial)])
    while queue:
        prefix, fa, ga = queue.popleft()
        checked += 1
        if f.value_of(fa) != g.value_of(ga):
            return EquivalenceResult(False, Trace(prefix), checked)
        if len(prefix) < depth:
            for event in events:
                queue.append((prefix + (event,), f.step(fa, event), g.step(ga, event)))
    return EquivalenceResult(True, None, checked)


# ---------------------------------------------------------------------------
# Seeded machine generation, for cross-checking constructions in tests and
# the product verifier.

def random_machine(seed: int, n_states: int, alphabet: tuple[str, ...],
                   outputs: tuple[Any, ...] = (0, 1)) -> MooreMachine:
    rng = random.Random(seed)
    states = tuple(range(n_states))
    delta = {(s, tag): rng.randrange(n_states) for s in states for tag in alphabet}
    gamma = {s: rng.choice(outputs) for s in states}
    return MooreMachine(tuple(alphabet), states, 0, delta, gamma)
