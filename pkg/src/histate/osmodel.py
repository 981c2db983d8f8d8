"""Executable model of a small multicore machine running a context switch.

The machine is driven entirely by events: ``core-step`` lets the process
current on a core execute one line of its program, ``interrupt`` sends the
current process of a core into the switch routine with a chosen target,
``dma-write`` mutates memory with no process running, and ``tick`` only
advances the clock.  All per-run state lives in a ``MachineState``; every
observable variable (Running, Ready, Loc, V, Time, Waiting, ...) is a pure
function of the state reached by a trace, or a fold over the trace for the
history-dependent ones.

Memory is a single word-addressed store.  A process identifier doubles as
the base address of its status word (pid + procstatus offset), current
process identity lives in one memory cell per core, and each process owns
a fixed-size, power-of-two-aligned stack that grows downward, so the stack
boundary is recoverable by masking the stack pointer.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable

from .core import Alphabet, ConfigError, Event, HistateError, SeqFn, Trace

# Switch routine checkpoints.  The save checkpoint records a re-entry
# continuation at FIXMMU (the switching-in branch), so a suspended process
# is parked there; its first step after being reinstalled runs the opaque
# mmu fix and lands it at SWITCH_IN.  PANIC is unreachable in a correct
# run.  Line 6 does not exist.
ENTRY = 0
SAVE = 1
RESUME_CALL = 2
PANIC = 3
FIXMMU = 4
SWITCH_IN = 5
RETURN = 7

SWITCH = "switch"
USER = "user"

STATUS_VALID = 1
STATUS_READY = 2
STATUS_SCHEDULED = 4  # claimed as a switch target, not yet installed

TAG_CORE_STEP = "core-step"
TAG_INTERRUPT = "interrupt"
TAG_DMA = "dma-write"
TAG_TICK = "tick"

OS_ALPHABET = Alphabet(
    tags=(TAG_CORE_STEP, TAG_INTERRUPT, TAG_DMA, TAG_TICK),
    payload_fields={
        TAG_CORE_STEP: ("core",),
        TAG_INTERRUPT: ("core", "next"),
        TAG_DMA: ("addr", "val"),
        TAG_TICK: (),
    },
)

N_GPR = 4

# Bundled model mutations, selected by name at replay time.
MUT_DROP_REGISTER_RESTORE = "drop-register-restore"
MUT_MOVE_SUSPENDED_PC = "move-suspended-pc"
MUT_SKIP_FIXMMU = "skip-fixmmu"
MUT_MISCLASSIFY = "misclassify-shared-as-nonshared"
MUTATIONS = (
    MUT_DROP_REGISTER_RESTORE,
    MUT_MOVE_SUSPENDED_PC,
    MUT_SKIP_FIXMMU,
    MUT_MISCLASSIFY,
)


class ModelFault(HistateError):
    """The model was driven into a structurally impossible configuration."""


class UndefinedProcessError(HistateError):
    """A process identifier is not declared by the scenario."""


class UnknownSymbolError(HistateError):
    """A variable name is not in the process's symbol table."""


def core_step(core: int, dur: int = 1) -> Event:
    return Event(TAG_CORE_STEP, {"core": core}, dur)


def interrupt(core: int, next_pid: int, dur: int = 2) -> Event:
    return Event(TAG_INTERRUPT, {"core": core, "next": next_pid}, dur)


def dma_write(addr: int, val: int, dur: int = 0) -> Event:
    return Event(TAG_DMA, {"addr": addr, "val": val}, dur)


def tick(dur: int = 1) -> Event:
    return Event(TAG_TICK, {}, dur)


# ---------------------------------------------------------------------------
# Scenario: the static description of machine layout, processes, programs,
# symbol tables, and the event schedule.

@dataclass(frozen=True)
class Symbol:
    """One named variable of a process.

    kind 'global': ``loc`` is a memory address.
    kind 'stack':  ``loc`` is an offset added to the stack pointer.
    kind 'reg':    ``loc`` indexes the general-purpose register file.
    """

    kind: str
    loc: int
    shared: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("global", "stack", "reg"):
            raise ConfigError(f"symbol kind must be global/stack/reg, got {self.kind!r}")
        if self.kind == "reg" and not 0 <= self.loc < N_GPR:
            raise ConfigError(f"register symbol index {self.loc} out of range")


@dataclass(frozen=True)
class Instr:
    """One user-program line: nop | set var val | inc var | push val | pop."""

    op: str
    var: str | None = None
    val: int | None = None

    def __post_init__(self) -> None:
        if self.op not in ("nop", "set", "inc", "push", "pop"):
            raise ConfigError(f"unknown instruction op {self.op!r}")


@dataclass(frozen=True)
class ProcessConfig:
    pid: int
    stack_base: int
    stack_size: int
    symbols: dict[str, Symbol]
    program: tuple[Instr, ...]
    boot_core: int | None = None
    status: int = STATUS_VALID | STATUS_READY

    def __post_init__(self) -> None:
        if self.stack_size < 8 or self.stack_size & (self.stack_size - 1):
            raise ConfigError(f"pid {self.pid}: stack_size must be a power of two >= 8")
        if self.stack_base % self.stack_size:
            raise ConfigError(f"pid {self.pid}: stack_base must be stack_size aligned")
        if not self.program:
            raise ConfigError(f"pid {self.pid}: program must have at least one line")

    @property
    def stack_top(self) -> int:
        return self.stack_base + self.stack_size


@dataclass(frozen=True)
class Scenario:
    name: str
    n_cores: int
    current_cells: tuple[int, ...]
    processes: dict[int, ProcessConfig]
    procstatus: int = 0
    memory: dict[int, int] = field(default_factory=dict)
    schedule: dict | None = None

    def __post_init__(self) -> None:
        if len(self.current_cells) != self.n_cores:
            raise ConfigError("scenario: one current cell address per core required")
        boots = [p.boot_core for p in self.processes.values() if p.boot_core is not None]
        if sorted(boots) != list(range(self.n_cores)):
            raise ConfigError("scenario: exactly one boot process per core required")

    def pids(self) -> tuple[int, ...]:
        return tuple(sorted(self.processes))

    def shared_global_addrs(self) -> tuple[int, ...]:
        addrs = set()
        for cfg in self.processes.values():
            for sym in cfg.symbols.values():
                if sym.kind == "global" and sym.shared:
                    addrs.add(sym.loc)
        return tuple(sorted(addrs))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "cores": self.n_cores,
            "current_cells": list(self.current_cells),
            "procstatus": self.procstatus,
            "memory": {str(a): v for a, v in sorted(self.memory.items())},
            "schedule": self.schedule,
            "processes": [
                {
                    "pid": cfg.pid,
                    "stack_base": cfg.stack_base,
                    "stack_size": cfg.stack_size,
                    "boot_core": cfg.boot_core,
                    "status": cfg.status,
                    "symbols": {
                        name: {"kind": s.kind, "loc": s.loc, "shared": s.shared}
                        for name, s in sorted(cfg.symbols.items())
                    },
                    "program": [
                        {k: v for k, v in (("op", i.op), ("var", i.var), ("val", i.val))
                         if v is not None}
                        for i in cfg.program
                    ],
                }
                for _, cfg in sorted(self.processes.items())
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Scenario":
        def need(obj, key, where):
            try:
                return obj[key]
            except (KeyError, TypeError):
                raise ConfigError(f"scenario: {where}: missing field {key!r}") from None

        processes = {}
        for i, pdoc in enumerate(need(doc, "processes", "top level")):
            where = f"processes[{i}]"
            symbols = {}
            for name, sdoc in need(pdoc, "symbols", where).items():
                symbols[name] = Symbol(
                    kind=need(sdoc, "kind", f"{where}.symbols[{name!r}]"),
                    loc=need(sdoc, "loc", f"{where}.symbols[{name!r}]"),
                    shared=sdoc.get("shared", False),
                )
            program = tuple(
                Instr(op=need(idoc, "op", f"{where}.program[{j}]"),
                      var=idoc.get("var"), val=idoc.get("val"))
                for j, idoc in enumerate(need(pdoc, "program", where))
            )
            pid = need(pdoc, "pid", where)
            processes[pid] = ProcessConfig(
                pid=pid,
                stack_base=need(pdoc, "stack_base", where),
                stack_size=need(pdoc, "stack_size", where),
                symbols=symbols,
                program=program,
                boot_core=pdoc.get("boot_core"),
                status=pdoc.get("status", STATUS_VALID | STATUS_READY),
            )
        return cls(
            name=doc.get("name", "scenario"),
            n_cores=need(doc, "cores", "top level"),
            current_cells=tuple(need(doc, "current_cells", "top level")),
            processes=processes,
            procstatus=doc.get("procstatus", 0),
            memory={int(a): v for a, v in doc.get("memory", {}).items()},
            schedule=doc.get("schedule"),
        )


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return Scenario.from_json(doc)


# ---------------------------------------------------------------------------
# Machine state.

@dataclass
class RegisterFile:
    func: str
    line: int
    sp: int
    gpr: list[int]

    def copy(self) -> "RegisterFile":
        return RegisterFile(self.func, self.line, self.sp, list(self.gpr))


@dataclass
class MachineState:
    """A snapshot of the whole machine.

    Treat snapshots as immutable: ``step_machine`` returns a fresh state
    and never mutates its argument, so snapshots can be shared freely.
    """

    scenario: Scenario
    cores: list[RegisterFile]
    memory: dict[int, int]
    saved: dict[int, RegisterFile | None]
    clock: int = 0

    def copy(self) -> "MachineState":
        return MachineState(
            scenario=self.scenario,
            cores=[c.copy() for c in self.cores],
            memory=dict(self.memory),
            saved={p: (s.copy() if s else None) for p, s in self.saved.items()},
            clock=self.clock,
        )

    def mem(self, core: int, addr: int) -> int:
        # memory is a single coherent store; the core index is kept for
        # signature fidelity with the two-index read
        return self.memory.get(addr, 0)

    def reg(self, core: int, name: str) -> Any:
        regs = self.cores[core]
        if name == "PC":
            return (regs.func, regs.line)
        if name == "SP":
            return regs.sp
        if name.startswith("GPR"):
            return regs.gpr[int(name[3:])]
        raise ModelFault(f"unknown register {name!r}")

    def current(self, core: int) -> int:
        return self.memory.get(self.scenario.current_cells[core], 0)

    def digest(self) -> str:
        h = hashlib.md5()
        for addr, val in sorted(self.memory.items()):
            h.update(f"{addr}:{val};".encode())
        for pid, snap in sorted(self.saved.items()):
            if snap is not None:
                h.update(f"{pid}:{snap.func}:{snap.line}:{snap.sp}:{snap.gpr};".encode())
        cores = ",".join(
            f"c{i}={self.current(i)}@{r.func}:{r.line}:sp{r.sp}"
            for i, r in enumerate(self.cores)
        )
        return f"t={self.clock} {cores} #{h.hexdigest()[:10]}"


def _forged_entry_line(mutation: str | None) -> int:
    return SWITCH_IN if mutation == MUT_SKIP_FIXMMU else FIXMMU


def initial_state(scenario: Scenario, mutation: str | None = None) -> MachineState:
    memory = dict(scenario.memory)
    saved: dict[int, RegisterFile | None] = {}
    cores: list[RegisterFile | None] = [None] * scenario.n_cores
    for pid, cfg in sorted(scenario.processes.items()):
        memory[pid + scenario.procstatus] = cfg.status
        if cfg.boot_core is not None:
            memory[scenario.current_cells[cfg.boot_core]] = pid
            cores[cfg.boot_core] = RegisterFile(USER, 0, cfg.stack_top, [0] * N_GPR)
            saved[pid] = None
        else:
            # forged frame: suspended as if it had switched out at birth,
            # with a zero switch argument and a return to program line 0
            sp = cfg.stack_top - 2
            memory[sp] = 0
            memory[sp + 1] = 0
            saved[pid] = RegisterFile(SWITCH, _forged_entry_line(mutation), sp, [0] * N_GPR)
    return MachineState(scenario, cores, memory, saved, clock=0)


# ---------------------------------------------------------------------------
# Stepping.

def step_machine(state: MachineState, event: Event,
                 mutation: str | None = None) -> MachineState:
    """The successor state after one event.  Pure: returns a new snapshot."""
    new = state.copy()
    apply_event(new, event, mutation)
    return new


def apply_event(state: MachineState, event: Event, mutation: str | None = None) -> None:
    """In-place step, the fast path used by replay."""
    OS_ALPHABET.validate(event)
    scenario = state.scenario
    state.clock += event.dur
    if event.tag == TAG_TICK:
        return
    if event.tag == TAG_DMA:
        state.memory[event.payload["addr"]] = event.payload["val"]
        if mutation == MUT_MOVE_SUSPENDED_PC:
            _move_a_suspended_pc(state)
        return
    core = event.payload["core"]
    if not 0 <= core < scenario.n_cores:
        raise ModelFault(f"no such core {core}")
    pid = state.current(core)
    if pid not in scenario.processes or not state.memory.get(pid + scenario.procstatus, 0) & STATUS_VALID:
        raise ModelFault(f"core {core} current cell holds invalid process {pid}")
    if event.tag == TAG_INTERRUPT:
        _handle_interrupt(state, core, pid, event.payload["next"])
    else:
        _execute_line(state, core, pid, mutation)


def _move_a_suspended_pc(state: MachineState) -> None:
    # model sabotage: warp the lowest suspended process's saved location
    for pid in sorted(state.saved):
        snap = state.saved[pid]
        if snap is not None and snap.line != PANIC:
            snap.line = PANIC
            return


def _claimable(state: MachineState, target: int) -> bool:
    scenario = state.scenario
    if target not in scenario.processes:
        return False
    status = state.memory.get(target + scenario.procstatus, 0)
    if not status & STATUS_VALID or not status & STATUS_READY:
        return False
    if status & STATUS_SCHEDULED:
        return False
    if any(state.current(c) == target for c in range(scenario.n_cores)):
        return False
    return state.saved.get(target) is not None


def _handle_interrupt(state: MachineState, core: int, pid: int, target: int) -> None:
    regs = state.cores[core]
    if regs.func != USER:
        return  # interrupts are masked inside the switch routine
    if not _claimable(state, target):
        return  # nothing runnable to switch to; stay in user code
    scenario = state.scenario
    cfg = scenario.processes[pid]
    if regs.sp - 2 <= cfg.stack_base:
        raise ModelFault(f"pid {pid}: stack overflow entering switch")
    status_addr = target + scenario.procstatus
    state.memory[status_addr] = state.memory.get(status_addr, 0) | STATUS_SCHEDULED
    regs.sp -= 2
    state.memory[regs.sp] = target        # the switch argument
    state.memory[regs.sp + 1] = regs.line  # user line to return to
    regs.func = SWITCH
    regs.line = ENTRY


def _execute_line(state: MachineState, core: int, pid: int, mutation: str | None) -> None:
    regs = state.cores[core]
    scenario = state.scenario
    cfg = scenario.processes[pid]
    if regs.func == USER:
        _execute_user(state, regs, cfg)
        return
    line = regs.line
    if line == ENTRY:
        regs.line = SAVE
    elif line == SAVE:
        # capture the register file; the saved continuation re-enters on
        # the switching-in branch and reports "restored" to the caller
        state.saved[pid] = RegisterFile(SWITCH, _forged_entry_line(mutation), regs.sp, list(regs.gpr))
        regs.line = RESUME_CALL
    elif line == RESUME_CALL:
        _install(state, core, pid, regs, mutation)
    elif line == PANIC:
        pass  # spins; a checker observing this location flags the run
    elif line == FIXMMU:
        regs.line = SWITCH_IN
    elif line == SWITCH_IN:
        regs.line = RETURN
    elif line == RETURN:
        ret = state.memory.get(regs.sp + 1, 0)
        regs.sp += 2
        if regs.sp > cfg.stack_top:
            raise ModelFault(f"pid {pid}: stack underflow returning from switch")
        regs.func = USER
        regs.line = ret % len(cfg.program)
    else:
        raise ModelFault(f"pid {pid}: no line {line} in the switch routine")


def _install(state: MachineState, core: int, pid: int, regs: RegisterFile,
             mutation: str | None) -> None:
    scenario = state.scenario
    target = state.memory.get(regs.sp, 0)
    if target not in scenario.processes:
        raise ModelFault(f"switch argument {target} is not a process")
    snap = state.saved.get(target)
    if snap is None:
        raise ModelFault(f"switch target {target} has no saved state")
    if any(state.current(c) == target for c in range(scenario.n_cores)):
        raise ModelFault(f"switch target {target} is already running")
    if state.saved.get(pid) is None:
        raise ModelFault(f"pid {pid} reached the resume call without saving")
    state.memory[scenario.current_cells[core]] = target
    status_addr = target + scenario.procstatus
    state.memory[status_addr] = state.memory.get(status_addr, 0) & ~STATUS_SCHEDULED
    state.saved[target] = None
    keep_gpr = regs.gpr if mutation == MUT_DROP_REGISTER_RESTORE else list(snap.gpr)
    # the restore reinstates the saved location exactly, so the target's
    # observable location does not move during an event it does not run in;
    # its own next step executes the switching-in branch (the mmu fix) and
    # lands it at the switched-in checkpoint
    regs.func, regs.line, regs.sp, regs.gpr = snap.func, snap.line, snap.sp, list(keep_gpr)


def _execute_user(state: MachineState, regs: RegisterFile, cfg: ProcessConfig) -> None:
    instr = cfg.program[regs.line]
    if instr.op == "set":
        _write_symbol(state, regs, cfg, instr.var, instr.val)
    elif instr.op == "inc":
        _write_symbol(state, regs, cfg, instr.var,
                      _read_symbol_running(state, regs, cfg, instr.var) + 1)
    elif instr.op == "push":
        if regs.sp - 1 <= cfg.stack_base:
            raise ModelFault(f"pid {cfg.pid}: stack overflow on push")
        regs.sp -= 1
        state.memory[regs.sp] = instr.val if instr.val is not None else 0
    elif instr.op == "pop":
        if regs.sp + 1 > cfg.stack_top:
            raise ModelFault(f"pid {cfg.pid}: pop from empty stack")
        regs.sp += 1
    regs.line = (regs.line + 1) % len(cfg.program)


def _symbol(cfg: ProcessConfig, name: str) -> Symbol:
    try:
        return cfg.symbols[name]
    except KeyError:
        raise UnknownSymbolError(f"pid {cfg.pid} declares no symbol {name!r}") from None


def _write_symbol(state, regs, cfg, name, value) -> None:
    sym = _symbol(cfg, name)
    if sym.kind == "reg":
        regs.gpr[sym.loc] = value
    elif sym.kind == "global":
        state.memory[sym.loc] = value
    else:
        state.memory[sym.loc + regs.sp] = value


def _read_symbol_running(state, regs, cfg, name) -> int:
    sym = _symbol(cfg, name)
    if sym.kind == "reg":
        return regs.gpr[sym.loc]
    if sym.kind == "global":
        return state.memory.get(sym.loc, 0)
    return state.memory.get(sym.loc + regs.sp, 0)


# ---------------------------------------------------------------------------
# State variables: pure functions of a snapshot.

def _core_of(state: MachineState, pid: int) -> int | None:
    for c in range(state.scenario.n_cores):
        if state.current(c) == pid:
            return c
    return None


def running(state: MachineState, pid: int) -> int:
    """1 iff some core's current cell holds this process."""
    return 1 if _core_of(state, pid) is not None else 0


def valid_process(state: MachineState, pid: int) -> int:
    if pid not in state.scenario.processes:
        return 0
    status = state.memory.get(pid + state.scenario.procstatus, 0)
    return 1 if status & STATUS_VALID else 0


def ready(state: MachineState, pid: int) -> int:
    if not valid_process(state, pid):
        return 0
    status = state.memory.get(pid + state.scenario.procstatus, 0)
    return 1 if status & STATUS_READY else 0


def _regs_of(state: MachineState, pid: int) -> RegisterFile:
    core = _core_of(state, pid)
    if core is not None:
        return state.cores[core]
    snap = state.saved.get(pid)
    if snap is None:
        raise ModelFault(f"pid {pid} is neither running nor saved")
    return snap


def loc(state: MachineState, pid: int) -> tuple[str, int]:
    """Current (function, line) of a process: its core's program counter
    while running, the saved one otherwise, so it only moves while active."""
    if pid not in state.scenario.processes:
        raise UndefinedProcessError(f"no process {pid}")
    regs = _regs_of(state, pid)
    return (regs.func, regs.line)


def v(state: MachineState, pid: int, name: str) -> int:
    """Value of a named variable in the context of a process.

    Globals read their address, stack variables read offset + SP (the
    saved SP while the process is not running), registers read the live
    or saved register file.  Shared locations may change while the owner
    is suspended; non-shared ones only move while it runs.
    """
    if pid not in state.scenario.processes:
        raise UndefinedProcessError(f"no process {pid}")
    cfg = state.scenario.processes[pid]
    sym = _symbol(cfg, name)
    regs = _regs_of(state, pid)
    if sym.kind == "reg":
        return regs.gpr[sym.loc]
    if sym.kind == "global":
        return state.memory.get(sym.loc, 0)
    return state.memory.get(sym.loc + regs.sp, 0)


def stack_contents(state: MachineState, pid: int) -> tuple[int, ...]:
    """Words from SP up to the masked stack boundary, top of stack first.

    The caller is responsible for freeze semantics while the process is
    not running; ``Run`` keeps the last running value.  Uses the saved SP
    for a suspended process, which reads the same words as long as nothing
    else writes the region.
    """
    if pid not in state.scenario.processes:
        raise UndefinedProcessError(f"no process {pid}")
    cfg = state.scenario.processes[pid]
    regs = _regs_of(state, pid)
    sp = regs.sp
    if not cfg.stack_base < sp <= cfg.stack_top:
        raise ModelFault(f"pid {pid}: SP {sp} outside stack region")
    boundary = (sp + cfg.stack_size - 1) & ~(cfg.stack_size - 1)
    return tuple(state.memory.get(a, 0) for a in range(sp, boundary))


# ---------------------------------------------------------------------------
# Variables as history functions, for callers that want the recursive view.

def machine_fn(scenario: Scenario, mutation: str | None = None) -> SeqFn:
    return SeqFn(
        initial=initial_state(scenario, mutation),
        step=lambda s, e: step_machine(s, e, mutation),
        alphabet=OS_ALPHABET,
        name="machine-state",
    )


def _observed(scenario: Scenario, out: Callable[[MachineState], Any], name: str,
              mutation: str | None = None) -> SeqFn:
    base = machine_fn(scenario, mutation)
    return SeqFn(base.initial, base.step, output=out, alphabet=OS_ALPHABET, name=name)


def running_fn(scenario: Scenario, pid: int) -> SeqFn:
    return _observed(scenario, lambda s: running(s, pid), f"running[{pid}]")


def ready_fn(scenario: Scenario, pid: int) -> SeqFn:
    return _observed(scenario, lambda s: ready(s, pid), f"ready[{pid}]")


def valid_fn(scenario: Scenario, pid: int) -> SeqFn:
    return _observed(scenario, lambda s: valid_process(s, pid), f"valid[{pid}]")


def loc_fn(scenario: Scenario, pid: int) -> SeqFn:
    return _observed(scenario, lambda s: loc(s, pid), f"loc[{pid}]")


def v_fn(scenario: Scenario, pid: int, name: str) -> SeqFn:
    return _observed(scenario, lambda s: v(s, pid, name), f"v[{pid},{name}]")


def time_fn(scenario: Scenario) -> SeqFn:
    return _observed(scenario, lambda s: s.clock, "time")


def waiting_fn(scenario: Scenario, pid: int, mutation: str | None = None) -> SeqFn:
    """Accumulated duration while ready but not running; resets otherwise."""

    def step(acc, event):
        state, waited = acc
        accrue = ready(state, pid) and not running(state, pid)
        nxt = step_machine(state, event, mutation)
        return (nxt, waited + event.dur if accrue else 0)

    return SeqFn((initial_state(scenario, mutation), 0), step,
                 output=lambda acc: acc[1], alphabet=OS_ALPHABET, name=f"waiting[{pid}]")


def in_fn(scenario: Scenario, pid: int, mutation: str | None = None) -> SeqFn:
    """How many times the process has switched in: counts rises of Running."""

    def step(acc, event):
        state, count = acc
        was = running(state, pid)
        nxt = step_machine(state, event, mutation)
        return (nxt, count + 1 if was < running(nxt, pid) else count)

    return SeqFn((initial_state(scenario, mutation), 0), step,
                 output=lambda acc: acc[1], alphabet=OS_ALPHABET, name=f"in[{pid}]")


def stack_fn(scenario: Scenario, pid: int, mutation: str | None = None) -> SeqFn:
    """Stack contents, frozen at the last running value while suspended."""

    def freeze_step(acc, event):
        state, last = acc
        nxt = step_machine(state, event, mutation)
        return (nxt, stack_contents(nxt, pid) if running(nxt, pid) else last)

    s0 = initial_state(scenario, mutation)
    return SeqFn((s0, stack_contents(s0, pid)), freeze_step,
                 output=lambda acc: acc[1], alphabet=OS_ALPHABET, name=f"stack[{pid}]")


# ---------------------------------------------------------------------------
# Replay: one pass over a trace recording every observable per prefix.

@dataclass
class Run:
    """Per-prefix observations of one trace under one scenario.

    Index ``i`` refers to the state after the first ``i`` events;
    index 0 is the initial state.
    """

    scenario: Scenario
    trace: Trace
    mutation: str | None
    time: list[int]
    core_current: list[tuple[int, ...]]
    locs: dict[int, list[tuple[str, int]]]
    runnings: dict[int, list[int]]
    readys: dict[int, list[int]]
    valids: dict[int, list[int]]
    waitings: dict[int, list[int]]
    ins: dict[int, list[int]]
    values: dict[int, dict[str, list[int]]]
    stacks: dict[int, list[tuple[int, ...]]]
    digests: list[str] | None = None

    @property
    def n_events(self) -> int:
        return len(self.trace)

    @property
    def pids(self) -> tuple[int, ...]:
        return self.scenario.pids()

    def running(self, i: int, pid: int) -> int:
        return self.runnings[pid][i]

    def ready(self, i: int, pid: int) -> int:
        return self.readys[pid][i]

    def valid(self, i: int, pid: int) -> int:
        return self.valids[pid][i]

    def loc(self, i: int, pid: int) -> tuple[str, int]:
        return self.locs[pid][i]

    def waiting(self, i: int, pid: int) -> int:
        return self.waitings[pid][i]

    def in_count(self, i: int, pid: int) -> int:
        return self.ins[pid][i]

    def v(self, i: int, pid: int, name: str) -> int:
        try:
            return self.values[pid][name][i]
        except KeyError:
            raise UnknownSymbolError(f"pid {pid} declares no symbol {name!r}") from None

    def stack(self, i: int, pid: int) -> tuple[int, ...]:
        return self.stacks[pid][i]

    def symbols(self, pid: int) -> tuple[str, ...]:
        return tuple(sorted(self.scenario.processes[pid].symbols))

    def non_shared_symbols(self, pid: int) -> tuple[str, ...]:
        table = self.scenario.processes[pid].symbols
        if self.mutation == MUT_MISCLASSIFY:
            return tuple(sorted(table))
        return tuple(sorted(n for n, s in table.items() if not s.shared))


def replay(scenario: Scenario, trace: Trace, mutation: str | None = None,
           collect_digests: bool = False) -> Run:
    pids = scenario.pids()
    run = Run(
        scenario=scenario,
        trace=trace,
        mutation=mutation,
        time=[],
        core_current=[],
        locs={p: [] for p in pids},
        runnings={p: [] for p in pids},
        readys={p: [] for p in pids},
        valids={p: [] for p in pids},
        waitings={p: [] for p in pids},
        ins={p: [] for p in pids},
        values={p: {name: [] for name in scenario.processes[p].symbols} for p in pids},
        stacks={p: [] for p in pids},
        digests=[] if collect_digests else None,
    )
    state = initial_state(scenario, mutation)

    def record(event: Event | None) -> None:
        run.time.append(state.clock)
        run.core_current.append(tuple(state.current(c) for c in range(scenario.n_cores)))
        for p in pids:
            is_running = running(state, p)
            run.runnings[p].append(is_running)
            run.readys[p].append(ready(state, p))
            run.valids[p].append(valid_process(state, p))
            run.locs[p].append(loc(state, p))
            for name in run.values[p]:
                run.values[p][name].append(v(state, p, name))
            if event is None:
                run.waitings[p].append(0)
                run.ins[p].append(0)
                run.stacks[p].append(stack_contents(state, p))
            else:
                # runnings/readys already hold the post-event value at [-1],
                # so the pre-event value is at [-2]; waitings/ins/stacks have
                # not been extended yet, so their previous value is at [-1]
                was_running = run.runnings[p][-2]
                was_ready = run.readys[p][-2]
                run.waitings[p].append(
                    run.waitings[p][-1] + event.dur if (was_ready and not was_running) else 0)
                run.ins[p].append(run.ins[p][-1] + (1 if was_running < is_running else 0))
                run.stacks[p].append(
                    stack_contents(state, p) if is_running else run.stacks[p][-1])
        if run.digests is not None:
            tag = event.tag if event is not None else "-"
            run.digests.append(f"{len(run.time) - 1} {tag} {state.digest()}")

    record(None)
    for event in trace:
        apply_event(state, event, mutation)
        record(event)
    return run


# ---------------------------------------------------------------------------
# Schedule generators.  A generator is fully determined by (scenario, kind,
# length, seed).

GEN_ROUND_ROBIN = "round-robin"
GEN_RANDOM = "random"
GEN_STARVE = "starve"


def generate_trace(scenario: Scenario, gen: str, n_events: int, seed: int = 0) -> Trace:
    if gen == GEN_ROUND_ROBIN:
        return _gen_round_robin(scenario, n_events)
    if gen == GEN_RANDOM:
        return _gen_random(scenario, n_events, seed)
    if gen.startswith(GEN_STARVE + ":"):
        try:
            pid = int(gen.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"starve generator needs an integer pid, got {gen!r}") from None
        return _gen_starve(scenario, n_events, pid)
    raise ConfigError(f"unknown generator {gen!r} (round-robin | random | starve:<pid>)")


def _dma_target(scenario: Scenario) -> int | None:
    shared = scenario.shared_global_addrs()
    return shared[0] if shared else None


def _gen_round_robin(scenario: Scenario, n: int) -> Trace:
    pids = scenario.pids()
    cores = scenario.n_cores
    dma_addr = _dma_target(scenario)
    events = []
    for i in range(n):
        if i % 97 == 95:
            events.append(tick(dur=3))
        elif dma_addr is not None and i % 13 == 11:
            events.append(dma_write(dma_addr, i % 251, dur=0))
        elif i % 7 == 5:
            k = i // 7
            events.append(interrupt(k % cores, pids[k % len(pids)]))
        else:
            events.append(core_step(i % cores))
    return Trace(tuple(events))


def _gen_random(scenario: Scenario, n: int, seed: int) -> Trace:
    rng = random.Random(seed)
    pids = scenario.pids()
    cores = scenario.n_cores
    dma_addr = _dma_target(scenario)
    events = []
    for _ in range(n):
        r = rng.random()
        if r < 0.70:
            events.append(core_step(rng.randrange(cores)))
        elif r < 0.85:
            events.append(interrupt(rng.randrange(cores), rng.choice(pids)))
        elif r < 0.93 and dma_addr is not None:
            events.append(dma_write(dma_addr, rng.randrange(256), dur=0))
        else:
            events.append(tick(dur=rng.randint(1, 4)))
    return Trace(tuple(events))


def _gen_starve(scenario: Scenario, n: int, pid: int) -> Trace:
    """Begin one switch targeting ``pid`` and never step that core again.

    The target stays ready and never runs, so its wait grows without
    bound; the switch that names it never completes.  The starved process
    must not be a boot process.
    """
    if pid not in scenario.processes:
        raise ConfigError(f"starve: no process {pid}")
    if scenario.processes[pid].boot_core is not None:
        raise ConfigError(f"starve: process {pid} boots a core and cannot be starved")
    cores = scenario.n_cores
    dma_addr = _dma_target(scenario)
    events = [interrupt(0, pid)]
    for i in range(1, n):
        if i % 29 == 17:
            events.append(tick(dur=2))
        elif dma_addr is not None and i % 13 == 11:
            events.append(dma_write(dma_addr, i % 251, dur=0))
        elif cores > 1:
            events.append(core_step(1 + (i % (cores - 1))))
        else:
            events.append(tick(dur=1))
    return Trace(tuple(events[:n]))
