"""General product of Moore machines with output-feedback coupling.

Each component machine sees a local event computed by a coupling rule from
the outputs of every component plus the global event, all read from the
pre-step state; a rule may also return ``SILENT``, in which case that
component does not transition.  ``coupled_eval`` evaluates the same
composition directly through the recursion on per-component local traces
and serves as an independent oracle for the product construction.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .core import ConfigError, Event, HistateError, Trace, freeze, value_from_json
from .machine import MooreMachine, StateCapError, load_machine, state_cap


class CouplingError(HistateError):
    """A coupling is inconsistent with its components or its declaration."""


class _Silent:
    __slots__ = ()

    def __repr__(self) -> str:
        return "SILENT"


#: Marker a coupling rule returns when a component should not transition.
SILENT = _Silent()


@dataclass(frozen=True)
class Coupling:
    """Wiring for a product of ``len(component_ids)`` machines.

    ``rho(outputs, global_tag, component_id)`` returns the local tag fed to
    that component, or ``SILENT``.  ``depends_on`` declares, per component,
    which components' outputs its rule reads; the declaration is spot
    checked by sampling, not inferred.
    """

    component_ids: tuple[str, ...]
    rho: Callable[[tuple, str, str], Any]
    depends_on: dict[str, frozenset[str]] = field(default_factory=dict)
    global_alphabet: tuple[str, ...] = ()

    def deps(self, component_id: str) -> frozenset[str]:
        return frozenset(self.depends_on.get(component_id, ()))


def identity_coupling(tags: Sequence[str], component_id: str = "x1") -> Coupling:
    """k = 1 coupling that passes every global event through unchanged."""
    return Coupling(
        component_ids=(component_id,),
        rho=lambda outs, tag, cid: tag,
        depends_on={component_id: frozenset()},
        global_alphabet=tuple(tags),
    )


def _check_shapes(machines: Sequence[MooreMachine], coupling: Coupling) -> None:
    if len(machines) != len(coupling.component_ids):
        raise CouplingError(
            f"coupling declares {len(coupling.component_ids)} components, "
            f"got {len(machines)} machines"
        )
    if not coupling.global_alphabet:
        raise CouplingError("coupling must declare a global alphabet")


def _local_tag(coupling: Coupling, machines, outputs, tag, i):
    result = coupling.rho(outputs, tag, coupling.component_ids[i])
    if result is SILENT:
        return SILENT
    if result not in machines[i].alphabet:
        raise CouplingError(
            f"rho returned {result!r} for component {coupling.component_ids[i]!r}, "
            f"which is not in its alphabet {machines[i].alphabet}"
        )
    return result


def general_product(machines: Sequence[MooreMachine], coupling: Coupling,
                    cap: int | None = None) -> MooreMachine:
    """Product machine over the reachable tuples of component states.

    One step maps a state tuple by feeding every component the local tag
    computed from the pre-step outputs; the output of a product state is
    the tuple of component outputs.  Only the part reachable from the
    tuple of initial states is materialized.
    """
    _check_shapes(machines, coupling)
    cap = state_cap(cap)
    k = len(machines)
    tags = tuple(coupling.global_alphabet)

    init = tuple(m.initial for m in machines)
    ids: dict[tuple, int] = {init: 0}
    tuples = [init]
    delta: dict[tuple[int, str], int] = {}
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        s = tuples[sid]
        outputs = tuple(machines[i].gamma[s[i]] for i in range(k))
        for tag in tags:
            nxt = []
            for i in range(k):
                local = _local_tag(coupling, machines, outputs, tag, i)
                nxt.append(s[i] if local is SILENT else machines[i].delta[(s[i], local)])
            t = tuple(nxt)
            if t not in ids:
                if len(tuples) >= cap:
                    raise StateCapError(f"product exceeds reachable-state cap {cap}")
                ids[t] = len(tuples)
                tuples.append(t)
                queue.append(ids[t])
            delta[(sid, tag)] = ids[t]
    gamma = {
        sid: tuple(machines[i].gamma[tuples[sid][i]] for i in range(k))
        for sid in range(len(tuples))
    }
    return MooreMachine(tags, tuple(range(len(tuples))), 0, delta, gamma)


def coupled_eval(machines: Sequence[MooreMachine], coupling: Coupling,
                 w: Trace) -> tuple:
    """Outputs after ``w``, via the recursion on per-component local traces.

    Each global event appends the coupled local tag (or nothing, on
    ``SILENT``) to every component's local trace; component values are
    re-evaluated from scratch on their local traces, independently of the
    product-machine construction.
    """
    outs, _locals = coupled_run(machines, coupling, w)
    return outs


def coupled_run(machines: Sequence[MooreMachine], coupling: Coupling,
                w: Trace) -> tuple[tuple, tuple[tuple[str, ...], ...]]:
    _check_shapes(machines, coupling)
    k = len(machines)
    local: list[tuple[str, ...]] = [() for _ in range(k)]
    for event in w:
        if event.tag not in coupling.global_alphabet:
            raise CouplingError(f"global event tag {event.tag!r} not in coupling alphabet")
        outputs = tuple(machines[i].output(local[i]) for i in range(k))
        for i in range(k):
            tag = _local_tag(coupling, machines, outputs, event.tag, i)
            if tag is not SILENT:
                local[i] = local[i] + (tag,)
    return tuple(machines[i].output(local[i]) for i in range(k)), tuple(local)


def is_cascade(coupling: Coupling) -> bool:
    """True when every component depends only on strictly earlier components."""
    earlier: set[str] = set()
    for cid in coupling.component_ids:
        if not coupling.deps(cid) <= earlier:
            return False
        earlier.add(cid)
    return True


def spot_check_depends_on(machines: Sequence[MooreMachine], coupling: Coupling,
                          samples: int = 200, seed: int = 0) -> None:
    """Sampled consistency check of the declared dependencies.

    Randomizes outputs of components outside ``depends_on`` for each
    component and verifies the rule's result does not change; a change
    means the declaration is violated and raises ``CouplingError``.
    """
    _check_shapes(machines, coupling)
    rng = random.Random(seed)
    k = len(machines)
    ranges = []
    for m in machines:
        seen = {}
        for v in m.gamma.values():
            seen.setdefault(freeze(v), v)
        ranges.append(list(seen.values()))
    for _ in range(samples):
        outputs = tuple(rng.choice(ranges[i]) for i in range(k))
        tag = rng.choice(list(coupling.global_alphabet))
        for i, cid in enumerate(coupling.component_ids):
            deps = coupling.deps(cid)
            perturbed = list(outputs)
            for j in range(k):
                if coupling.component_ids[j] not in deps and len(ranges[j]) > 1:
                    perturbed[j] = rng.choice(ranges[j])
            base = coupling.rho(outputs, tag, cid)
            moved = coupling.rho(tuple(perturbed), tag, cid)
            if base is not moved and base != moved:
                raise CouplingError(
                    f"component {cid!r}: rho changed from {base!r} to {moved!r} "
                    f"when outputs outside depends_on={sorted(deps)} were perturbed"
                )


# ---------------------------------------------------------------------------
# Coupling files.  A rule table row is [outputs-pattern, global-tag, component,
# local-tag-or-"SILENT"]; "*" is a wildcard in the pattern and the tag slot.
# The first matching row wins; a default (all-wildcard) row is required per
# component.

def _pattern_matches(pattern, outputs) -> bool:
    if pattern == "*":
        return True
    if len(pattern) != len(outputs):
        return False
    return all(p == "*" or p == o for p, o in zip(pattern, outputs))


def _table_rho(rows, component_ids):
    by_component = {cid: [r for r in rows if r[2] == cid] for cid in component_ids}

    def rho(outputs, tag, cid):
        for pattern, row_tag, _cid, local in by_component[cid]:
            if (row_tag == "*" or row_tag == tag) and _pattern_matches(pattern, outputs):
                return SILENT if local == "SILENT" else local
        raise CouplingError(f"no rho row matched component {cid!r}")

    return rho


def coupling_from_json(doc: dict, machines: Sequence[MooreMachine]) -> Coupling:
    try:
        ids = tuple(doc.get("ids") or (f"x{i + 1}" for i in range(len(doc["components"]))))
        global_alphabet = tuple(doc["global_alphabet"])
        depends = {cid: frozenset(deps) for cid, deps in doc.get("depends_on", {}).items()}
        raw_rows = doc["rho"]
    except KeyError as exc:
        raise ConfigError(f"coupling file: missing field {exc}") from None
    rows = []
    for i, row in enumerate(raw_rows):
        if len(row) != 4:
            raise ConfigError(f"coupling file: rho[{i}]: expected 4 entries")
        pattern = row[0] if row[0] == "*" else [value_from_json(p) for p in row[0]]
        rows.append((pattern, row[1], row[2], row[3]))
    for cid in ids:
        has_default = any(
            r[2] == cid and r[1] == "*" and (r[0] == "*" or all(p == "*" for p in r[0]))
            for r in rows
        )
        if not has_default:
            raise ConfigError(f"coupling file: component {cid!r} has no default rho row")
        if cid not in depends:
            depends[cid] = frozenset()
    coupling = Coupling(ids, _table_rho(rows, ids), depends, global_alphabet)
    _check_shapes(machines, coupling)
    return coupling


def load_coupling(path) -> tuple[list[MooreMachine], Coupling]:
    """Load a coupling file plus the machine files it references."""
    import os

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    try:
        refs = doc["components"]
    except KeyError:
        raise ConfigError(f"{path}: missing 'components'") from None
    machines = [load_machine(os.path.join(base, ref)) for ref in refs]
    return machines, coupling_from_json(doc, machines)
