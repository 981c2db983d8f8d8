"""Command-line front end.

Subcommands: ``simulate`` (scenario -> trace + digests), ``check`` (trace +
scenario -> property verdicts), ``minimize``/``monoid``/``product`` (machine
algebra), ``abstract-net`` (synchronous process networks), ``mutate`` (the
bundled sabotage matrix), and ``bundle`` (export bundled artifacts).

Everything randomized is driven by an explicit seed, so identical
configuration yields byte-identical outputs.  ``check`` exits 0 when all
selected properties pass, 1 when any fails, and 2 when every verdict is
vacuous; configuration errors exit 3.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, field

from . import bundled
from .abstractproc import (
    AbstractProcess,
    Behavior,
    derived_local_events,
    initial_network,
    step_network,
    validate_process,
)
from .checker import (
    FAIL,
    PROP_INVARIANTS,
    PROP_LIVE,
    PROP_STATE_PRESERVATION,
    PROP_SWITCH_LIVENESS,
    PROP_SWITCH_PATH,
    exit_code,
    run_properties,
)
from .core import ConfigError, Event, HistateError, Trace, read_trace, write_trace
from .machine import (
    StateCapError,
    load_machine,
    minimize,
    save_machine,
    save_monoid,
    syntactic_monoid,
)
from .osmodel import (
    MUTATIONS,
    Scenario,
    generate_trace,
    load_scenario,
    replay,
)
from .product import coupled_eval, general_product, load_coupling, spot_check_depends_on

DEFAULT_PROPS = (PROP_SWITCH_PATH, PROP_SWITCH_LIVENESS, PROP_STATE_PRESERVATION, PROP_LIVE)
ALL_PROPS = DEFAULT_PROPS + (PROP_INVARIANTS,)


@dataclass
class RunConfig:
    """Everything a command run depends on; the seed fully determines any
    randomized generation."""

    command: str
    inputs: dict = field(default_factory=dict)
    seed: int = 0
    events: int | None = None
    cap: int | None = None
    depth: int = 4
    out: str = "out"

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        return cls(
            command=ns.command,
            inputs={k: v for k, v in vars(ns).items() if k.endswith("path")},
            seed=getattr(ns, "seed", 0) or 0,
            events=getattr(ns, "events", None),
            cap=getattr(ns, "cap", None),
            depth=getattr(ns, "depth", 4),
            out=getattr(ns, "out", "out"),
        )


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_scenario_arg(path: str | None) -> Scenario:
    if path is None:
        return bundled.two_core_three_process()
    return load_scenario(path)


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(ns: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(ns.scenario)
    sched = scenario.schedule or {}
    gen = ns.gen or sched.get("gen", "round-robin")
    n_events = ns.events if ns.events is not None else sched.get("events", 1000)
    seed = ns.seed if ns.seed is not None else sched.get("seed", 0)
    trace = generate_trace(scenario, gen, n_events, seed)
    run = replay(scenario, trace, mutation=ns.mutation, collect_digests=True)
    out = _outdir(ns.out)
    trace_path = os.path.join(out, "trace.jsonl")
    digest_path = os.path.join(out, "digests.txt")
    write_trace(trace_path, trace)
    with open(digest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(run.digests))
        fh.write("\n")
    print(f"simulated {len(trace)} events of {scenario.name!r} (gen={gen}, seed={seed})")
    print(f"wrote {trace_path} and {digest_path}")
    return 0


# ---------------------------------------------------------------------------
# check

def _parse_props(spec: str) -> tuple[str, ...]:
    if spec == "all":
        return ALL_PROPS
    props = tuple(p.strip() for p in spec.split(",") if p.strip())
    for p in props:
        if p not in ALL_PROPS:
            raise ConfigError(f"unknown property {p!r}; choose from {', '.join(ALL_PROPS)}")
    return props


def cmd_check(ns: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(ns.scenario)
    trace = read_trace(ns.trace)
    run = replay(scenario, trace, mutation=ns.mutation)
    props = _parse_props(ns.props)
    results = run_properties(run, props, t_switch=ns.t_switch, t_live=ns.t_live)
    out = _outdir(ns.out)
    for result in results:
        if result.verdict == FAIL and result.counterexample and "prefix" in result.counterexample:
            prefix = trace.prefix(result.counterexample["prefix"])
            name = result.prop.replace(".", "_")
            cx_path = os.path.join(out, f"counterexample_{name}.jsonl")
            write_trace(cx_path, prefix)
            result.counterexample["trace_file"] = cx_path
        print(f"{result.prop}: {result.verdict}"
              + (f" ({result.counterexample})" if result.verdict == FAIL else ""))
    report = {
        "scenario": scenario.name,
        "trace": ns.trace,
        "mutation": ns.mutation,
        "results": [r.to_json() for r in results],
    }
    code = exit_code(results)
    report["exit_code"] = code
    _write_json(os.path.join(out, "report.json"), report)
    return code


# ---------------------------------------------------------------------------
# machine algebra

def cmd_minimize(ns: argparse.Namespace) -> int:
    machine = load_machine(ns.machine)
    reduced = minimize(machine)
    out = _outdir(ns.out)
    path = os.path.join(out, "minimized.json")
    save_machine(path, reduced)
    print(f"minimized {len(machine.states)} -> {len(reduced.states)} states; wrote {path}")
    return 0


def cmd_monoid(ns: argparse.Namespace) -> int:
    machine = load_machine(ns.machine)
    monoid = syntactic_monoid(machine)
    out = _outdir(ns.out)
    path = os.path.join(out, "monoid.json")
    save_monoid(path, monoid)
    print(f"monoid order {monoid.order}; wrote {path}")
    return 0


def cmd_product(ns: argparse.Namespace) -> int:
    machines, coupling = load_coupling(ns.coupling)
    spot_check_depends_on(machines, coupling, samples=100, seed=ns.seed or 0)
    product = general_product(machines, coupling, cap=ns.cap)
    out = _outdir(ns.out)
    path = os.path.join(out, "product.json")
    save_machine(path, product)
    print(f"product has {len(product.states)} reachable states; wrote {path}")
    if ns.verify:
        rng = random.Random(ns.seed or 0)
        fn = product.to_seq_fn()
        for case in range(ns.verify):
            tags = [rng.choice(coupling.global_alphabet) for _ in range(rng.randint(0, 50))]
            w = Trace(tuple(Event(t) for t in tags))
            direct = coupled_eval(machines, coupling, w)
            via_product = fn.eval(w)
            if direct != via_product:
                print(f"verify: mismatch on case {case}: {direct} != {via_product}")
                return 1
        print(f"verify: product agrees with the coupled recursion on {ns.verify} seeded traces")
    return 0


# ---------------------------------------------------------------------------
# abstract networks

def _load_network(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    behaviors = []
    for i, entry in enumerate(doc.get("processes", [])):
        try:
            pid = entry["pid"]
            spec = entry["behavior"]
        except KeyError as exc:
            raise ConfigError(f"network processes[{i}]: missing {exc}") from None
        if isinstance(spec, str):
            with open(os.path.join(base, spec), "r", encoding="utf-8") as fh:
                behavior = Behavior.from_json(json.load(fh))
        else:
            behavior = Behavior.from_json(spec)
        behaviors.append((pid, behavior))
    if not behaviors:
        raise ConfigError("network declares no processes")
    return behaviors, doc.get("host")


def _network_messages(behaviors) -> tuple[int, ...]:
    msgs = set()
    for _pid, behavior in behaviors:
        for out in behavior.outputs.values():
            if out[0] == "sending":
                msgs.add(out[1])
    return tuple(sorted(msgs)) or (0,)


def cmd_abstract_net(ns: argparse.Namespace) -> int:
    behaviors, host_doc = _load_network(ns.network)
    procs = [AbstractProcess.from_table(pid, behavior) for pid, behavior in behaviors]
    pids = [p.pid for p in procs]
    messages = _network_messages(behaviors)
    for proc in procs:
        verdict = validate_process(proc, pids, messages, depth=ns.depth)
        if not verdict:
            print(f"process {proc.pid}: invalid ({verdict.clause}) "
                  f"witness length {len(verdict.witness)}")
            return 1
        print(f"process {proc.pid}: valid to depth {ns.depth} ({verdict.checked} traces)")

    if host_doc:
        host_scenario = load_scenario(
            os.path.join(os.path.dirname(os.path.abspath(ns.network)), host_doc["scenario"]))
        host_trace = generate_trace(
            host_scenario, host_doc.get("gen", "round-robin"),
            ns.events, host_doc.get("seed", ns.seed or 0))
        host_run = replay(host_scenario, host_trace)
        net = initial_network(procs, host_running=host_run.running)
        events = list(host_trace)
    else:
        net = initial_network(procs)
        events = [Event("tick", {}, 1) for _ in range(ns.events)]

    rows = []
    exchanged = 0
    for event in events:
        gained = derived_local_events(net)
        exchanged += sum(1 for ev in gained.values() if ev is not None and ev.tag == "receive")
        rows.append({
            "outputs": {str(p): list(net.output(p)) for p in net.processes},
            "gained": {str(p): (ev.tag if ev else None) for p, ev in gained.items()},
        })
        net = step_network(net, event)
    out = _outdir(ns.out)
    path = os.path.join(out, "net_trace.json")
    _write_json(path, {"steps": rows, "messages_exchanged": exchanged})
    print(f"ran {len(events)} global events; {exchanged} messages exchanged; wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# mutation matrix

EXPECTED_CATCH = {
    "drop-register-restore": {PROP_STATE_PRESERVATION},
    "move-suspended-pc": {PROP_INVARIANTS, PROP_STATE_PRESERVATION},
    "skip-fixmmu": {PROP_SWITCH_PATH},
    "misclassify-shared-as-nonshared": {PROP_STATE_PRESERVATION},
}


def mutation_matrix(scenario: Scenario, n_events: int, seed: int) -> dict:
    trace = generate_trace(scenario, "round-robin", n_events, seed)
    probe_props = (PROP_SWITCH_PATH, PROP_STATE_PRESERVATION, PROP_INVARIANTS)

    def verdicts(mutation):
        run = replay(scenario, trace, mutation=mutation)
        return {r.prop: r.verdict for r in run_properties(run, probe_props)}

    baseline = verdicts(None)
    rows = {}
    all_caught = all(v == "pass" for v in baseline.values())
    for mutation in MUTATIONS:
        row = verdicts(mutation)
        caught_by = sorted(p for p, v in row.items() if v == FAIL)
        expected = EXPECTED_CATCH[mutation]
        ok = bool(expected & set(caught_by))
        all_caught = all_caught and ok
        rows[mutation] = {"verdicts": row, "caught_by": caught_by,
                          "expected": sorted(expected), "caught": ok}
    return {"baseline": baseline, "mutations": rows, "all_caught": all_caught,
            "events": n_events, "seed": seed}


def cmd_mutate(ns: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(ns.scenario)
    matrix = mutation_matrix(scenario, ns.events or 4000, ns.seed or 1)
    out = _outdir(ns.out)
    _write_json(os.path.join(out, "mutation_matrix.json"), matrix)
    print(f"baseline: {matrix['baseline']}")
    for name, row in matrix["mutations"].items():
        status = "caught" if row["caught"] else "MISSED"
        print(f"{name}: {status} by {row['caught_by']} (expected {row['expected']})")
    return 0 if matrix["all_caught"] else 1


# ---------------------------------------------------------------------------
# bundle

def cmd_bundle(ns: argparse.Namespace) -> int:
    paths = bundled.write_bundle(_outdir(ns.out))
    print(f"wrote {len(paths)} bundled artifacts under {ns.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histate",
        description="simulate, check, and analyze history-state models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--seed", type=int, default=None)
        if out:
            p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("simulate", help="generate a trace and per-step digests")
    p.add_argument("--scenario", help="scenario file (default: bundled 2-core/3-process)")
    p.add_argument("--gen", help="round-robin | random | starve:<pid>")
    p.add_argument("--events", type=int)
    p.add_argument("--mutation", choices=MUTATIONS)
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("check", help="check trace properties")
    p.add_argument("--scenario")
    p.add_argument("--trace", required=True)
    p.add_argument("--props", default=",".join(DEFAULT_PROPS),
                   help="comma list of 1.1,2.1,2.2,live,invariants or 'all'")
    p.add_argument("--t-switch", type=int, dest="t_switch")
    p.add_argument("--t-live", type=int, dest="t_live")
    p.add_argument("--mutation", choices=MUTATIONS)
    common(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("minimize", help="minimize a machine file")
    p.add_argument("machine")
    common(p)
    p.set_defaults(fn=cmd_minimize)

    p = sub.add_parser("monoid", help="transformation monoid of a machine file")
    p.add_argument("machine")
    common(p)
    p.set_defaults(fn=cmd_monoid)

    p = sub.add_parser("product", help="general product of a coupling file")
    p.add_argument("coupling")
    p.add_argument("--cap", type=int)
    p.add_argument("--verify", type=int, default=0,
                   help="cross-check against the coupled recursion on N seeded traces")
    common(p)
    p.set_defaults(fn=cmd_product)

    p = sub.add_parser("abstract-net", help="validate and run a process network")
    p.add_argument("--network", required=True)
    p.add_argument("--events", type=int, default=20)
    p.add_argument("--depth", type=int, default=4)
    common(p)
    p.set_defaults(fn=cmd_abstract_net)

    p = sub.add_parser("mutate", help="run the bundled mutation-detection matrix")
    p.add_argument("--scenario")
    p.add_argument("--events", type=int)
    common(p)
    p.set_defaults(fn=cmd_mutate)

    p = sub.add_parser("bundle", help="export bundled machines, couplings, scenarios")
    common(p)
    p.set_defaults(fn=cmd_bundle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.fn(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except StateCapError as exc:
        print(f"state cap exceeded: {exc}", file=sys.stderr)
        return 1
    except HistateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
