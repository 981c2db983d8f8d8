"""Abstract state processes and their synchronous network composition.

An abstract process is a history function over the local alphabet
``{step, send, receive[x, q]}`` whose value is one of ``running``,
``waiting[q]`` or ``sending[x, q]``.  A network derives, per global event,
at most one local event for every process: a matched send/receive pair
extends both endpoints simultaneously, a running process steps only when
the hosting scheduler says it is running, and everything else leaves the
local trace unchanged.  Unwanted local events are never generated, so
process behavior on them is unconstrained.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .core import Alphabet, ConfigError, Event, HistateError, SeqFn, Trace

RUNNING = ("running",)

LOCAL_ALPHABET = Alphabet(
    tags=("step", "send", "receive"),
    payload_fields={"step": (), "send": (), "receive": ("msg", "peer")},
)


class BehaviorError(HistateError):
    """A behavior table or output label is malformed."""


def waiting(peer: int) -> tuple:
    return ("waiting", peer)


def sending(msg: int, peer: int) -> tuple:
    return ("sending", msg, peer)


def step_event() -> Event:
    return Event("step")


def send_event() -> Event:
    return Event("send")


def receive_event(msg: int, peer: int) -> Event:
    return Event("receive", {"msg": msg, "peer": peer})


def output_from_json(doc: Any) -> tuple:
    if doc == "running":
        return RUNNING
    if isinstance(doc, list) and len(doc) == 2 and doc[0] == "waiting":
        return ("waiting", doc[1])
    if isinstance(doc, list) and len(doc) == 3 and doc[0] == "sending":
        return ("sending", doc[1], doc[2])
    raise ConfigError(f"behavior output must be 'running', [waiting, q] or [sending, x, q]; got {doc!r}")


def output_to_json(out: tuple) -> Any:
    return "running" if out == RUNNING else list(out)


# ---------------------------------------------------------------------------
# Table-driven behaviors.

def _event_key(event: Event) -> tuple:
    if event.tag == "receive":
        return ("receive", event.payload["msg"], event.payload["peer"])
    return (event.tag,)


@dataclass(frozen=True)
class Behavior:
    """A finite behavior: named local states with an output label each and
    transitions on local events.  Unlisted (state, event) pairs self-loop,
    matching the convention that unwanted events are left unconstrained.
    Receive transitions may use ``*`` for the message or the peer."""

    initial: str
    outputs: dict[str, tuple]
    transitions: dict[tuple, str]

    def __post_init__(self) -> None:
        if self.initial not in self.outputs:
            raise BehaviorError(f"initial state {self.initial!r} has no output")
        for (state, *_), target in self.transitions.items():
            if state not in self.outputs or target not in self.outputs:
                raise BehaviorError(f"transition {state!r} -> {target!r} uses unknown state")

    def next_state(self, state: str, event: Event) -> str:
        key = _event_key(event)
        if key[0] == "receive":
            _, msg, peer = key
            for candidate in (
                (state, "receive", msg, peer),
                (state, "receive", "*", peer),
                (state, "receive", msg, "*"),
                (state, "receive", "*", "*"),
            ):
                if candidate in self.transitions:
                    return self.transitions[candidate]
            return state
        return self.transitions.get((state,) + key, state)

    def to_seq_fn(self, name: str = "") -> SeqFn:
        return SeqFn(
            initial=self.initial,
            step=self.next_state,
            output=lambda s: self.outputs[s],
            alphabet=LOCAL_ALPHABET,
            name=name or "behavior",
        )

    def to_json(self) -> dict:
        rows = []
        for key, target in self.transitions.items():
            state = key[0]
            if key[1] == "receive":
                rows.append([state, ["receive", key[2], key[3]], target])
            else:
                rows.append([state, key[1], target])
        return {
            "initial": self.initial,
            "states": {s: output_to_json(o) for s, o in sorted(self.outputs.items())},
            "transitions": rows,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Behavior":
        try:
            outputs = {s: output_from_json(o) for s, o in doc["states"].items()}
            transitions = {}
            for i, row in enumerate(doc["transitions"]):
                if len(row) != 3:
                    raise ConfigError(f"behavior transitions[{i}]: expected [state, event, state]")
                state, ev, target = row
                if ev in ("step", "send"):
                    transitions[(state, ev)] = target
                elif isinstance(ev, list) and len(ev) == 3 and ev[0] == "receive":
                    transitions[(state, "receive", ev[1], ev[2])] = target
                else:
                    raise ConfigError(f"behavior transitions[{i}]: bad event {ev!r}")
            return cls(doc["initial"], outputs, transitions)
        except KeyError as exc:
            raise ConfigError(f"behavior file: missing field {exc}") from None


def load_behavior(path) -> Behavior:
    with open(path, "r", encoding="utf-8") as fh:
        return Behavior.from_json(json.load(fh))


@dataclass(frozen=True)
class AbstractProcess:
    """A process identity plus its behavior as a history function."""

    pid: int
    behavior: SeqFn

    @classmethod
    def from_table(cls, pid: int, behavior: Behavior) -> "AbstractProcess":
        return cls(pid, behavior.to_seq_fn(name=f"proc[{pid}]"))


# ---------------------------------------------------------------------------
# Validation of the abstract-process contract.

@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    witness: Trace | None
    clause: str | None
    checked: int

    def __bool__(self) -> bool:
        return self.valid


def validate_process(proc: AbstractProcess, peers: Iterable[int],
                     messages: Iterable[int], depth: int) -> ValidationResult:
    """Exhaustively check the process contract on local traces up to ``depth``.

    Clauses: values stay in the declared codomain, the process never waits
    for or sends to itself, a blocked process ignores ``step``, a matched
    ``send`` or ``receive`` returns the process to running.  Returns a
    shortest violating trace (breadth-first order) on failure.
    """
    others = sorted(set(peers) - {proc.pid})
    msgs = sorted(set(messages))
    pid_universe = set(others) | {proc.pid}
    events = [step_event(), send_event()] + [
        receive_event(x, q) for q in others for x in msgs
    ]
    f = proc.behavior

    def out_of(acc) -> tuple:
        return f.value_of(acc)

    checked = 0
    queue = deque([((), f.initial)])
    while queue:
        prefix, acc = queue.popleft()
        checked += 1
        out = out_of(acc)
        witness = Trace(prefix)
        if not _well_formed(out, pid_universe, msgs):
            return ValidationResult(False, witness, "codomain", checked)
        if out[0] == "waiting" and out[1] == proc.pid:
            return ValidationResult(False, witness, "self-wait", checked)
        if out[0] == "sending" and out[2] == proc.pid:
            return ValidationResult(False, witness, "self-send", checked)
        if out != RUNNING and out_of(f.step(acc, step_event())) != out:
            return ValidationResult(False, witness, "blocked-step", checked)
        if out[0] == "sending" and out_of(f.step(acc, send_event())) != RUNNING:
            return ValidationResult(False, witness, "send-completes", checked)
        if out[0] == "waiting":
            for x in msgs:
                if out_of(f.step(acc, receive_event(x, out[1]))) != RUNNING:
                    return ValidationResult(False, witness, "receive-completes", checked)
        if len(prefix) < depth:
            for event in events:
                queue.append((prefix + (event,), f.step(acc, event)))
    return ValidationResult(True, None, None, checked)


def _well_formed(out, pids, msgs) -> bool:
    if out == RUNNING:
        return True
    if isinstance(out, tuple) and len(out) == 2 and out[0] == "waiting":
        return out[1] in pids
    if isinstance(out, tuple) and len(out) == 3 and out[0] == "sending":
        return out[1] in msgs and out[2] in pids
    return False


# ---------------------------------------------------------------------------
# Networks.

@dataclass(frozen=True)
class Network:
    """A snapshot of a connected system of abstract processes.

    ``local_traces[p]`` is the trace the global history has induced for
    process ``p`` so far; ``local_accs`` caches the behavior accumulator at
    that trace.  ``host_running(i, p)`` gates ``step`` events with the
    hosting scheduler's view after ``i`` global events (the pre-event
    state); ``None`` means every process is always hosted as running.
    """

    processes: dict[int, AbstractProcess]
    local_traces: dict[int, Trace]
    local_accs: dict[int, Any]
    host_running: Callable[[int, int], int] | None = None
    global_len: int = 0

    def output(self, pid: int) -> tuple:
        return self.processes[pid].behavior.value_of(self.local_accs[pid])

    def outputs(self) -> dict[int, tuple]:
        return {p: self.output(p) for p in self.processes}


def initial_network(processes: Iterable[AbstractProcess],
                    host_running: Callable[[int, int], int] | None = None) -> Network:
    procs = {p.pid: p for p in processes}
    return Network(
        processes=procs,
        local_traces={p: Trace() for p in procs},
        local_accs={p: procs[p].behavior.initial for p in procs},
        host_running=host_running,
        global_len=0,
    )


def derived_local_events(network: Network) -> dict[int, Event | None]:
    """The local event each process gains from one global event, or None.

    All decisions read the pre-event snapshot, so a matched pair extends
    both endpoints in the same global event.
    """
    outs = network.outputs()
    result: dict[int, Event | None] = {}
    for p, out in outs.items():
        if out[0] == "waiting":
            q = out[1]
            qout = outs.get(q)
            if qout is not None and qout[0] == "sending" and qout[2] == p:
                result[p] = receive_event(qout[1], q)
                continue
        elif out[0] == "sending":
            q = out[2]
            qout = outs.get(q)
            if qout is not None and qout == ("waiting", p):
                result[p] = send_event()
                continue
        elif out == RUNNING:
            host = network.host_running
            if host is None or host(network.global_len, p):
                result[p] = step_event()
                continue
        result[p] = None
    return result


def step_network(network: Network, event: Event) -> Network:
    """The network after one global event.  The event's tag carries no
    information here; it marks one synchronous round of the coupling."""
    gained = derived_local_events(network)
    traces = dict(network.local_traces)
    accs = dict(network.local_accs)
    for p, local in gained.items():
        if local is not None:
            traces[p] = traces[p].append(local)
            accs[p] = network.processes[p].behavior.step(accs[p], local)
    return Network(
        processes=network.processes,
        local_traces=traces,
        local_accs=accs,
        host_running=network.host_running,
        global_len=network.global_len + 1,
    )


def eval_network(network: Network, w: Trace, pid: int) -> tuple:
    """Value of one process after replaying a global trace: its behavior
    evaluated on the local trace the replay derives for it."""
    if pid not in network.processes:
        raise ConfigError(f"network has no process {pid}")
    net = network
    for event in w:
        net = step_network(net, event)
    return net.output(pid)
