"""Trace-property monitors over replayed runs.

Each monitor is a pure function of (run, parameters) producing a
``PropertyResult``: pass with witnesses, fail with a shortest replayable
counterexample prefix, or vacuous when the property's hypothesis never
fired on the trace.  Vacuous is a first-class verdict so that a silently
green suite cannot hide an unexercised property.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .core import ConfigError
from .osmodel import ENTRY, FIXMMU, PANIC, RESUME_CALL, RETURN, SWITCH, SWITCH_IN, Run

PASS = "pass"
FAIL = "fail"
VACUOUS = "vacuous"

PROP_SWITCH_PATH = "1.1"
PROP_SWITCH_LIVENESS = "2.1"
PROP_STATE_PRESERVATION = "2.2"
PROP_LIVE = "live"
PROP_INVARIANTS = "invariants"


@dataclass
class PropertyResult:
    prop: str
    verdict: str
    witness: Any = None
    counterexample: dict | None = None
    stats: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_json(self) -> dict:
        return {
            "property": self.prop,
            "verdict": self.verdict,
            "witness": self.witness,
            "counterexample": self.counterexample,
            "stats": self.stats,
            "params": self.params,
        }


def _result(prop, verdict, witness=None, counterexample=None, stats=None, params=None):
    return PropertyResult(prop, verdict, witness, counterexample, stats or {}, params or {})


# ---------------------------------------------------------------------------
# Helpers over a run.

def _positions(run: Run, pid: int, line: int) -> list[int]:
    target = (SWITCH, line)
    return [i for i, l in enumerate(run.locs[pid]) if l == target]


def _first_at_or_after(positions: list[int], start: int) -> int | None:
    idx = bisect_left(positions, start)
    return positions[idx] if idx < len(positions) else None


def _require_next_symbol(run: Run) -> None:
    for pid in run.pids:
        if "next" not in run.scenario.processes[pid].symbols:
            raise ConfigError(
                f"pid {pid}: scenario must declare a 'next' stack symbol "
                "for switch properties"
            )


def _entry_instances(run: Run) -> dict[int, list[tuple[int, int]]]:
    """Per process, positions where it sits at the switch entry, with the
    value of its ``next`` argument there."""
    _require_next_symbol(run)
    out: dict[int, list[tuple[int, int]]] = {}
    for pid in run.pids:
        out[pid] = [(i, run.v(i, pid, "next")) for i in _positions(run, pid, ENTRY)]
    return out


# ---------------------------------------------------------------------------
# Safety of the switch path.

def check_switch_path(run: Run) -> PropertyResult:
    """Every completed switch admits the canonical decomposition.

    For each position where a process p1 sits at the switch entry with a
    target p2 != p1, and the earliest later position where p1 is back at
    the switch return line, find ordered positions where (1) p1 is at the
    resume call, (2) p2 is at the switching-in branch, (3) some other
    process sits at the switch entry (4) with p1 as its target.  Earliest
    satisfying indexes are searched first; since later choices only shrink
    the remaining windows, a backtracking pass is attempted only if the
    greedy pass fails.  Checking the earliest return position suffices:
    any later return only extends the final segment of the decomposition.
    """
    entries = _entry_instances(run)
    at2 = {p: _positions(run, p, RESUME_CALL) for p in run.pids}
    at4 = {p: _positions(run, p, FIXMMU) for p in run.pids}
    at7 = {p: _positions(run, p, RETURN) for p in run.pids}
    targeting: dict[int, list[tuple[int, int]]] = {}
    for pk in run.pids:
        for i, nxt in entries[pk]:
            targeting.setdefault(nxt, []).append((i, pk))
    for rows in targeting.values():
        rows.sort()

    witnesses = []
    failures = []
    fired = 0
    hypotheses = 0
    for p1 in run.pids:
        for i, p2 in entries[p1]:
            if p2 == p1:
                continue
            hypotheses += 1
            e = _first_at_or_after(at7[p1], i)
            if e is None:
                continue
            fired += 1
            found = _greedy_decomposition(run, p1, p2, i, e, at2, at4, targeting)
            if found is None:
                found = _backtrack_decomposition(run, p1, p2, i, e, at2, at4, targeting)
            if isinstance(found, dict):
                witnesses.append(found)
            else:
                failures.append({"prefix": e, "clause": found, "p1": p1, "p2": p2, "entry": i})

    stats = {"hypotheses": hypotheses, "completed": fired, "witnesses": len(witnesses)}
    if failures:
        worst = min(failures, key=lambda f: (f["prefix"], f["entry"]))
        return _result(PROP_SWITCH_PATH, FAIL, witnesses, worst, stats)
    if fired == 0:
        return _result(PROP_SWITCH_PATH, VACUOUS, stats=stats)
    return _result(PROP_SWITCH_PATH, PASS, witnesses, stats=stats)


def _greedy_decomposition(run, p1, p2, i, e, at2, at4, targeting):
    j1 = _first_at_or_after(at2[p1], i)
    if j1 is None or j1 > e:
        return "resume-call (1)"
    if p2 not in run.pids:
        return "fixmmu (2)"
    j2 = _first_at_or_after(at4[p2], j1)
    if j2 is None or j2 > e:
        return "fixmmu (2)"
    j3 = _find_switch_back(targeting, p1, j2, e)
    if j3 is None:
        return "switch-back (3,4)"
    return {"p1": p1, "p2": p2, "pk": j3[1], "entry": i,
            "u1": j1, "u2": j2, "u3": j3[0], "return": e}


def _find_switch_back(targeting, p1, start, end):
    rows = targeting.get(p1, [])
    idx = bisect_left(rows, (start, -1))
    while idx < len(rows) and rows[idx][0] <= end:
        if rows[idx][1] != p1:
            return rows[idx]
        idx += 1
    return None


def _backtrack_decomposition(run, p1, p2, i, e, at2, at4, targeting):
    """Exhaustive factorization search; only reached when greedy fails."""
    if p2 not in run.pids:
        return "fixmmu (2)"
    c1 = [j for j in at2[p1] if i <= j <= e]
    if not c1:
        return "resume-call (1)"
    clause = "fixmmu (2)"
    for j1 in c1:
        for j2 in at4[p2]:
            if j2 < j1 or j2 > e:
                continue
            clause = "switch-back (3,4)"
            hit = _find_switch_back(targeting, p1, j2, e)
            if hit is not None:
                return {"p1": p1, "p2": p2, "pk": hit[1], "entry": i,
                        "u1": j1, "u2": j2, "u3": hit[0], "return": e}
    return clause


# ---------------------------------------------------------------------------
# Timed liveness of the switch.

def check_switch_liveness(run: Run, t_switch: int | None = None) -> PropertyResult:
    """A switch target reaches the switched-in checkpoint within a bound.

    For each entry instance (p at the switch entry with target q) and
    every extension in which at least ``t_switch`` time units pass, some
    prefix of the extension must see q at the switched-in line.  Reports
    the minimal sufficient bound observed; with ``t_switch=None`` the
    measured bound is verified instead of a given one.
    """
    entries = _entry_instances(run)
    at5 = {p: _positions(run, p, SWITCH_IN) for p in run.pids}
    times = run.time
    n = run.n_events

    instances = []
    for p in run.pids:
        for i, q in entries[p]:
            j_star = _first_at_or_after(at5[q], i) if q in run.pids else None
            if j_star is None:
                minimal = times[n] - times[i] + 1  # nothing observed; bound past trace end
            elif j_star == i:
                minimal = 1
            else:
                minimal = times[j_star - 1] - times[i] + 1
            instances.append((i, p, q, j_star, minimal))

    measured = max((m for *_x, m in instances), default=None)
    bound = t_switch if t_switch is not None else measured
    params = {"t_switch": t_switch, "effective_bound": bound}
    if not instances or bound is None:
        return _result(PROP_SWITCH_LIVENESS, VACUOUS, stats={"instances": 0}, params=params)

    fired = 0
    completed = sum(1 for inst in instances if inst[3] is not None)
    failures = []
    for i, p, q, j_star, _minimal in instances:
        cross = bisect_left(times, times[i] + bound)
        if cross > n:
            continue  # the trace never accumulates enough time after this entry
        fired += 1
        if j_star is None or j_star > cross:
            failures.append({"prefix": cross, "entry": i, "p": p, "target": q,
                             "stalled_at": run.locs[q][cross] if q in run.pids else None})
    stats = {"instances": len(instances), "fired": fired, "completed": completed,
             "incomplete": len(instances) - completed, "measured_t_switch": measured}
    if failures:
        worst = min(failures, key=lambda f: (f["prefix"], f["entry"]))
        return _result(PROP_SWITCH_LIVENESS, FAIL, None, worst, stats, params)
    if fired == 0:
        return _result(PROP_SWITCH_LIVENESS, VACUOUS, stats=stats, params=params)
    return _result(PROP_SWITCH_LIVENESS, PASS, stats=stats, params=params)


# ---------------------------------------------------------------------------
# State preservation across a switch.

def check_state_preservation(run: Run) -> PropertyResult:
    """Non-shared variables and the stack survive a suspend/resume pair.

    A pair is a position where a process stops running and the first later
    position where it sits at the switched-in line; every non-shared
    variable and the frozen stack contents must be identical at the two
    points.  Shared variables are exempt: anything may write them while
    the owner is suspended.
    """
    at5 = {p: _positions(run, p, SWITCH_IN) for p in run.pids}
    pairs = []
    failures = []
    incomplete = 0
    for p in run.pids:
        flags = run.runnings[p]
        for i in range(1, run.n_events + 1):
            if not (flags[i - 1] and not flags[i]):
                continue
            s = i
            r = _first_at_or_after(at5[p], s)
            if r is None:
                incomplete += 1
                continue
            bad = None
            for name in run.non_shared_symbols(p):
                if run.v(s, p, name) != run.v(r, p, name):
                    bad = {"prefix": r, "pid": p, "variable": name, "suspend": s,
                           "resume": r, "before": run.v(s, p, name), "after": run.v(r, p, name)}
                    break
            if bad is None and run.stack(s, p) != run.stack(r, p):
                bad = {"prefix": r, "pid": p, "variable": "<stack-contents>",
                       "suspend": s, "resume": r}
            if bad is not None:
                failures.append(bad)
            else:
                pairs.append({"pid": p, "suspend": s, "resume": r})
    stats = {"pairs": len(pairs) + len(failures), "incomplete": incomplete}
    if failures:
        worst = min(failures, key=lambda f: (f["prefix"], f["suspend"]))
        return _result(PROP_STATE_PRESERVATION, FAIL, pairs, worst, stats)
    if not pairs:
        return _result(PROP_STATE_PRESERVATION, VACUOUS, stats=stats)
    return _result(PROP_STATE_PRESERVATION, PASS, pairs, stats=stats)


# ---------------------------------------------------------------------------
# Timed liveness of the whole system.

def check_live(run: Run, t_live: int) -> PropertyResult:
    """No process ever waits ``t_live`` or more time units (strict bound)."""
    if t_live <= 0:
        raise ConfigError("t_live must be positive")
    params = {"t_live": t_live}
    if run.n_events == 0:
        return _result(PROP_LIVE, VACUOUS, stats={"checked": 0}, params=params)
    measured = 0
    for i in range(run.n_events + 1):
        for p in run.pids:
            w = run.waiting(i, p)
            measured = max(measured, w)
            if w >= t_live:
                return _result(
                    PROP_LIVE, FAIL, None,
                    {"prefix": i, "pid": p, "waiting": w},
                    {"max_waiting_seen": measured}, params)
    return _result(PROP_LIVE, PASS, stats={"max_waiting": measured}, params=params)


# ---------------------------------------------------------------------------
# Generic invariant monitor and the bundled suite.

def check_invariant(run: Run, predicate: Callable[[Run, int], bool],
                    name: str = "invariant") -> PropertyResult:
    """Evaluate a total predicate on every prefix; first failure is the
    counterexample."""
    for i in range(run.n_events + 1):
        if not predicate(run, i):
            return _result(name, FAIL, None, {"prefix": i},
                           {"checked": i + 1})
    return _result(name, PASS, stats={"checked": run.n_events + 1})


def _inv_core_uniqueness(run: Run, i: int) -> bool:
    currents = run.core_current[i]
    return len(set(currents)) == len(currents)


def _inv_loc_stability(run: Run, i: int) -> bool:
    if i == 0:
        return True
    return all(
        run.loc(i, p) == run.loc(i - 1, p) or run.running(i - 1, p)
        for p in run.pids
    )


def _inv_status_order(run: Run, i: int) -> bool:
    return all(
        run.running(i, p) <= run.valid(i, p) and run.ready(i, p) <= run.valid(i, p)
        for p in run.pids
    )


def _inv_time_monotone(run: Run, i: int) -> bool:
    return i == 0 or run.time[i] >= run.time[i - 1]


def _inv_stack_freeze(run: Run, i: int) -> bool:
    if i == 0:
        return True
    return all(
        run.stack(i, p) == run.stack(i - 1, p) or run.running(i - 1, p)
        for p in run.pids
    )


def _inv_panic_unreachable(run: Run, i: int) -> bool:
    return all(run.loc(i, p) != (SWITCH, PANIC) for p in run.pids)


def invariant_suite() -> tuple[tuple[str, Callable[[Run, int], bool]], ...]:
    return (
        ("core-uniqueness", _inv_core_uniqueness),
        ("loc-stability", _inv_loc_stability),
        ("status-ordering", _inv_status_order),
        ("time-monotone", _inv_time_monotone),
        ("stack-freeze", _inv_stack_freeze),
        ("panic-unreachable", _inv_panic_unreachable),
    )


def check_invariants(run: Run) -> PropertyResult:
    """Run the bundled invariant suite; fails at the earliest violating
    prefix across all invariants."""
    suite = invariant_suite()
    for i in range(run.n_events + 1):
        for name, predicate in suite:
            if not predicate(run, i):
                return _result(
                    PROP_INVARIANTS, FAIL, None,
                    {"prefix": i, "invariant": name},
                    {"checked_prefixes": i + 1})
    return _result(PROP_INVARIANTS, PASS,
                   stats={"checked_prefixes": run.n_events + 1,
                          "invariants": [name for name, _ in suite]})


# ---------------------------------------------------------------------------
# Suite driver shared by the command line and tests.

def run_properties(run: Run, props: Iterable[str], t_switch: int | None = None,
                   t_live: int | None = None) -> list[PropertyResult]:
    results = []
    for prop in props:
        if prop == PROP_SWITCH_PATH:
            results.append(check_switch_path(run))
        elif prop == PROP_SWITCH_LIVENESS:
            results.append(check_switch_liveness(run, t_switch))
        elif prop == PROP_STATE_PRESERVATION:
            results.append(check_state_preservation(run))
        elif prop == PROP_LIVE:
            if t_live is None:
                # verify the measured bound plus one, and report it
                measured = _max_waiting(run)
                live_result = check_live(run, measured + 1)
                live_result.params["t_live_auto"] = True
                results.append(live_result)
            else:
                results.append(check_live(run, t_live))
        elif prop == PROP_INVARIANTS:
            results.append(check_invariants(run))
        else:
            raise ConfigError(f"unknown property {prop!r}")
    return results


def _max_waiting(run: Run) -> int:
    best = 0
    for p in run.pids:
        if run.waitings[p]:
            best = max(best, max(run.waitings[p]))
    return best


def exit_code(results: Iterable[PropertyResult]) -> int:
    results = list(results)
    if any(r.verdict == FAIL for r in results):
        return 1
    if results and all(r.verdict == VACUOUS for r in results):
        return 2
    return 0
