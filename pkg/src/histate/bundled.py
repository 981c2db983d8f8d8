"""Bundled example artifacts: machines, history functions, couplings,
scenarios, and process behaviors.

Everything here is deterministic and small enough to verify exhaustively;
``write_bundle`` exports the whole set as files in the documented formats
so the command line can consume them.
"""

from __future__ import annotations

import json
import os

from .core import Alphabet, SeqFn
from .machine import MooreMachine, save_machine
from .osmodel import (
    STATUS_READY,
    STATUS_VALID,
    Instr,
    ProcessConfig,
    Scenario,
    Symbol,
    save_scenario,
)
from .abstractproc import Behavior
from .product import Coupling, coupling_from_json


# ---------------------------------------------------------------------------
# History functions with finitely many reachable accumulators.

def parity_fn() -> SeqFn:
    return SeqFn(0, lambda n, _e: (n + 1) % 2,
                 alphabet=Alphabet(("a", "b")), name="parity")


def mod3_fn() -> SeqFn:
    return SeqFn(0, lambda n, _e: (n + 1) % 3,
                 alphabet=Alphabet(("t",)), name="mod3")


_REQUEST_GRANT = {
    ("idle", "req"): "pend",
    ("idle", "grant"): "idle",
    ("idle", "reset"): "idle",
    ("pend", "req"): "pend",
    ("pend", "grant"): "held",
    ("pend", "reset"): "idle",
    ("held", "req"): "held",
    ("held", "grant"): "held",
    ("held", "reset"): "idle",
}


def request_grant_fn() -> SeqFn:
    """Three-state request/grant variable: idle -> pend -> held -> idle."""
    return SeqFn("idle", lambda s, e: _REQUEST_GRANT[(s, e.tag)],
                 alphabet=Alphabet(("req", "grant", "reset")), name="request-grant")


def bundled_seq_fns() -> tuple[SeqFn, ...]:
    return (parity_fn(), mod3_fn(), request_grant_fn())


# ---------------------------------------------------------------------------
# Machines.

def parity_machine() -> MooreMachine:
    return MooreMachine(
        alphabet=("a", "b"), states=(0, 1), initial=0,
        delta={(0, "a"): 1, (0, "b"): 1, (1, "a"): 0, (1, "b"): 0},
        gamma={0: 0, 1: 1},
    )


def mod_counter(modulo: int) -> MooreMachine:
    states = tuple(range(modulo))
    return MooreMachine(
        alphabet=("t",), states=states, initial=0,
        delta={(s, "t"): (s + 1) % modulo for s in states},
        gamma={s: s for s in states},
    )


def duplicated_parity_machine() -> MooreMachine:
    """Four reachable states carrying only a parity's worth of output."""
    return MooreMachine(
        alphabet=("a",), states=(0, 1, 2, 3), initial=0,
        delta={(s, "a"): (s + 1) % 4 for s in range(4)},
        gamma={0: 0, 1: 1, 2: 0, 3: 1},
    )


# ---------------------------------------------------------------------------
# Couplings, defined as rule-table documents so the file format and the
# in-memory form are identical.

def identity_coupling_doc() -> dict:
    return {
        "components": ["../machines/parity.json"],
        "ids": ["x1"],
        "global_alphabet": ["a", "b"],
        "depends_on": {"x1": []},
        "rho": [
            ["*", "a", "x1", "a"],
            ["*", "b", "x1", "b"],
            ["*", "*", "x1", "SILENT"],
        ],
    }


def gated_pair_doc() -> dict:
    """Two mod-2 counters; the second only advances when the first shows 1."""
    return {
        "components": ["../machines/mod2.json", "../machines/mod2.json"],
        "ids": ["x1", "x2"],
        "global_alphabet": ["a"],
        "depends_on": {"x1": [], "x2": ["x1"]},
        "rho": [
            ["*", "*", "x1", "t"],
            [[1, "*"], "*", "x2", "t"],
            ["*", "*", "x2", "SILENT"],
        ],
    }


def ripple3_doc() -> dict:
    """Three-stage ripple: a feedback-free cascade of mod-2 counters."""
    return {
        "components": ["../machines/mod2.json", "../machines/mod2.json",
                       "../machines/mod2.json"],
        "ids": ["x1", "x2", "x3"],
        "global_alphabet": ["a", "b"],
        "depends_on": {"x1": [], "x2": ["x1"], "x3": ["x1", "x2"]},
        "rho": [
            ["*", "a", "x1", "t"],
            ["*", "b", "x1", "t"],
            ["*", "*", "x1", "SILENT"],
            [[1, "*", "*"], "a", "x2", "t"],
            ["*", "*", "x2", "SILENT"],
            [[1, 1, "*"], "*", "x3", "t"],
            ["*", "*", "x3", "SILENT"],
        ],
    }


def feedback_pair_doc() -> dict:
    """Mutual feedback: each counter is gated by the other's output."""
    return {
        "components": ["../machines/mod2.json", "../machines/mod2.json"],
        "ids": ["x1", "x2"],
        "global_alphabet": ["a"],
        "depends_on": {"x1": ["x2"], "x2": ["x1"]},
        "rho": [
            [["*", 0], "*", "x1", "t"],
            ["*", "*", "x1", "SILENT"],
            [[1, "*"], "*", "x2", "t"],
            ["*", "*", "x2", "SILENT"],
        ],
    }


_COUPLING_MACHINES = {
    "identity": lambda: [parity_machine()],
    "gated_pair": lambda: [mod_counter(2), mod_counter(2)],
    "ripple3": lambda: [mod_counter(2), mod_counter(2), mod_counter(2)],
    "feedback_pair": lambda: [mod_counter(2), mod_counter(2)],
}

_COUPLING_DOCS = {
    "identity": identity_coupling_doc,
    "gated_pair": gated_pair_doc,
    "ripple3": ripple3_doc,
    "feedback_pair": feedback_pair_doc,
}


def bundled_coupling(name: str) -> tuple[list[MooreMachine], Coupling]:
    machines = _COUPLING_MACHINES[name]()
    return machines, coupling_from_json(_COUPLING_DOCS[name](), machines)


def bundled_coupling_names() -> tuple[str, ...]:
    return tuple(sorted(_COUPLING_DOCS))


# ---------------------------------------------------------------------------
# Scenarios.  Process identifiers double as the addresses of their status
# words.  Stacks are 64 words on 64-word boundaries; the shared global at
# address 16 is the dma target, each process also owns a private global, a
# register variable and a stack slot.

_GSHARED_ADDR = 16


def _process(pid: int, index: int, stack_base: int, boot_core: int | None) -> ProcessConfig:
    symbols = {
        "next": Symbol("stack", 0, shared=False),
        "xloc": Symbol("stack", 0, shared=False),
        "rv": Symbol("reg", 1, shared=False),
        "gpriv": Symbol("global", 17 + index, shared=False),
        "gshared": Symbol("global", _GSHARED_ADDR, shared=True),
    }
    program = (
        Instr("push", val=100 + index),
        Instr("set", var="xloc", val=30 + index),
        Instr("inc", var="xloc"),
        Instr("set", var="rv", val=20 + index),
        Instr("set", var="gpriv", val=40 + index),
        Instr("pop"),
        Instr("nop"),
    )
    return ProcessConfig(
        pid=pid,
        stack_base=stack_base,
        stack_size=64,
        symbols=symbols,
        program=program,
        boot_core=boot_core,
        status=STATUS_VALID | STATUS_READY,
    )


def two_core_three_process(n_events: int = 10_000, seed: int = 1) -> Scenario:
    return Scenario(
        name="2core-3proc-roundrobin",
        n_cores=2,
        current_cells=(0, 1),
        processes={
            256: _process(256, 0, 1024, boot_core=0),
            512: _process(512, 1, 2048, boot_core=1),
            768: _process(768, 2, 3072, boot_core=None),
        },
        memory={_GSHARED_ADDR: 7},
        schedule={"gen": "round-robin", "events": n_events, "seed": seed},
    )


def one_core_two_process() -> Scenario:
    return Scenario(
        name="1core-2proc",
        n_cores=1,
        current_cells=(0,),
        processes={
            256: _process(256, 0, 1024, boot_core=0),
            512: _process(512, 1, 2048, boot_core=None),
        },
        memory={_GSHARED_ADDR: 7},
        schedule={"gen": "round-robin", "events": 2000, "seed": 1},
    )


def teardown_scenario() -> Scenario:
    """Like the one-core scenario; its tests tear a suspended process down
    by writing zero over its status word."""
    base = one_core_two_process()
    return Scenario(
        name="1core-2proc-teardown",
        n_cores=base.n_cores,
        current_cells=base.current_cells,
        processes=base.processes,
        memory=base.memory,
        schedule={"gen": "round-robin", "events": 500, "seed": 1},
    )


def bundled_scenarios() -> tuple[Scenario, ...]:
    return (two_core_three_process(), one_core_two_process(), teardown_scenario())


# ---------------------------------------------------------------------------
# Behaviors: a ping-pong pair plus an invalid self-waiter.

PING_A_PID = 256
PING_B_PID = 512
PING_MSG = 1


def ping_a_behavior(own: int = PING_A_PID, peer: int = PING_B_PID) -> Behavior:
    """Serve a ball, return to running after the matched send, then wait
    for the reply; a completed exchange returns the process to running."""
    return Behavior(
        initial="idle",
        outputs={
            "idle": ("running",),
            "serve": ("sending", PING_MSG, peer),
            "sent": ("running",),
            "await": ("waiting", peer),
        },
        transitions={
            ("idle", "step"): "serve",
            ("serve", "send"): "sent",
            ("sent", "step"): "await",
            ("await", "receive", "*", peer): "idle",
        },
    )


def ping_b_behavior(own: int = PING_B_PID, peer: int = PING_A_PID) -> Behavior:
    return Behavior(
        initial="wait",
        outputs={
            "wait": ("waiting", peer),
            "got": ("running",),
            "reply": ("sending", PING_MSG, peer),
            "done": ("running",),
        },
        transitions={
            ("wait", "receive", "*", peer): "got",
            ("got", "step"): "reply",
            ("reply", "send"): "done",
            ("done", "step"): "wait",
        },
    )


def self_waiting_behavior(own: int) -> Behavior:
    return Behavior(initial="stuck", outputs={"stuck": ("waiting", own)}, transitions={})


def ping_pong_network_doc() -> dict:
    return {
        "processes": [
            {"pid": PING_A_PID, "behavior": "../behaviors/ping_a.json"},
            {"pid": PING_B_PID, "behavior": "../behaviors/ping_b.json"},
        ],
        "host": None,
    }


# ---------------------------------------------------------------------------
# Export.

def write_bundle(outdir: str) -> list[str]:
    """Write every bundled artifact under ``outdir``; returns the paths."""
    paths = []

    def emit_json(relpath: str, doc) -> None:
        path = os.path.join(outdir, relpath)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)

    machines = {
        "parity": parity_machine(),
        "mod2": mod_counter(2),
        "mod3": mod_counter(3),
        "duplicated_parity": duplicated_parity_machine(),
    }
    for name, machine in machines.items():
        path = os.path.join(outdir, "machines", f"{name}.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_machine(path, machine)
        paths.append(path)

    for name, doc_fn in _COUPLING_DOCS.items():
        emit_json(os.path.join("couplings", f"{name}.json"), doc_fn())

    for scenario in bundled_scenarios():
        path = os.path.join(outdir, "scenarios", f"{scenario.name}.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_scenario(path, scenario)
        paths.append(path)

    emit_json(os.path.join("behaviors", "ping_a.json"), ping_a_behavior().to_json())
    emit_json(os.path.join("behaviors", "ping_b.json"), ping_b_behavior().to_json())
    emit_json(os.path.join("behaviors", "self_wait.json"),
              self_waiting_behavior(PING_A_PID).to_json())
    emit_json(os.path.join("networks", "ping_pong.json"), ping_pong_network_doc())
    return paths
