"""State variables as functions of event histories.

Defines traces and recursive history functions, converts them to and from
finite Moore machines (minimization, transformation monoids, general
products with feedback coupling), and applies the same machinery to an
executable multicore context-switch model whose safety, timed-liveness and
state-preservation properties are checked over generated traces.
"""

from .core import (
    Alphabet,
    AlphabetError,
    ConfigError,
    Event,
    HistateError,
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
from .machine import (
    EquivalenceResult,
    MachineError,
    Monoid,
    MooreMachine,
    StateCapError,
    equivalent_up_to,
    machine_from_seq_fn,
    minimize,
    random_machine,
    seq_fn_from_machine,
    syntactic_monoid,
)
from .product import (
    SILENT,
    Coupling,
    CouplingError,
    coupled_eval,
    coupled_run,
    general_product,
    identity_coupling,
    is_cascade,
    spot_check_depends_on,
)
from .osmodel import (
    MUTATIONS,
    ModelFault,
    Run,
    Scenario,
    UndefinedProcessError,
    UnknownSymbolError,
    generate_trace,
    initial_state,
    replay,
    step_machine,
)
from .checker import (
    PropertyResult,
    check_invariant,
    check_invariants,
    check_live,
    check_state_preservation,
    check_switch_liveness,
    check_switch_path,
    exit_code,
    run_properties,
)
from .abstractproc import (
    AbstractProcess,
    Behavior,
    Network,
    eval_network,
    initial_network,
    step_network,
    validate_process,
)

__version__ = "0.1.0"
