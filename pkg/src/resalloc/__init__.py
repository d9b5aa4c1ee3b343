"""Simulation and explicit-state checking of a multi-level resource
allocation protocol with registration, in the style of drinking
philosophers."""
from .invariants import CATALOGUE, INVARIANT_IDS, Violation, check, check_all, disabled_after, disabled_prom
from .job_model import NONE, Job, JobModel, compatible, conflict, level_requirement
from .liveness import (
    LockedSetReport,
    StarvationReport,
    check_theorem2,
    check_unless,
    is_locked,
    is_silent,
    monitor_starvation,
    silent_set,
    theorem2_failures,
)
from .network import Network, OverwriteInTransit
from .protocol import STANDARD, GlobalState, Step, Variant, apply, enabled, enabled_steps, initial_state
from .scenario import load_scenario, parse_scenario
from .simulator import (
    BoundExceeded,
    ExplorationReport,
    FiniteWorkload,
    InvariantViolation,
    RunStats,
    ScenarioConfig,
    Simulator,
    explore,
    message_stats,
    run,
)
from .trace import Trace, replay

__version__ = "0.1.0"
