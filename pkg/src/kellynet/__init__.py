"""Product-form equilibria of multiclass queueing networks with exponential
service: open networks with fixed routes and position-indexed disciplines,
closed networks with class switching, plus a simulator and brute-force
verifiers for both."""

from .chain import (
    CustomerTag,
    DetailedState,
    EventKind,
    TransitionEvent,
    apply_arrive,
    apply_depart,
    apply_transfer,
    enumerate_transitions,
    predecessors,
    total_outflow,
)
from .closed_solver import (
    PopulationState,
    TrafficSolution,
    marginal_node_pmf,
    solve_traffic,
    stationary_distribution,
    unnormalized_weight,
)
from .errors import (
    InstabilityError,
    KellynetError,
    ModelParseError,
    ModelValidationError,
    ReducibleChainError,
    StateSpaceTooLargeError,
)
from .model import (
    ClosedNetworkModel,
    OpenNetworkModel,
    PolicyKind,
    RouteSpec,
    ServicePolicy,
    builtin_policy,
    bundled_model,
    closed_model,
    load_model,
    open_model,
    validate_closed,
    validate_open,
)
from .open_solver import (
    analyze_open,
    composition_probability,
    detailed_state_probability,
    node_normalizer,
    queue_length_pmf,
    visit_rates,
)
from .simulator import SimConfig, compare_to_analytic, simulate, simulate_closed, simulate_open
from .verifier import balance_check, closed_oracle, independence_check, interior_states

__version__ = "0.1.0"
