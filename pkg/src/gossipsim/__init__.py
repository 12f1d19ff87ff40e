"""Deterministic simulator for duty-cycled gossip averaging on
anchor-rooted sensor networks."""

from .analysis import (
    SpectralReport,
    Trace,
    check_consensus_conditions,
    convergence_rounds,
    convergence_time,
    disagreement,
    disagreement_of,
    drift,
    expected_weight_matrix,
    second_eigenvalue_modulus,
    spectral_radius,
)
from .duty_cycle import (
    ActivationMode,
    ActivationState,
    DutyCycleParams,
    activation_sequence,
    beacon_period,
    stationary_active_fraction,
    step_activation,
    wake_time,
)
from .engine import (
    RunConfig,
    SwitchedSystem,
    closed_form_state,
    make_switched_system,
    run_agent_sim,
    run_matrix_sim,
    run_pairwise_baseline,
    step_matrix,
    ticks_per_cycle,
)
from .errors import (
    ConfigError,
    GossipSimError,
    LivenessError,
    SimulationError,
    TopologyError,
    UnconnectableTopologyError,
)
from .graph import (
    Graph,
    LayerAssignment,
    TopologyParams,
    assign_layers,
    build_topology,
    consensus_weight_matrix,
    from_edge_list,
    in_neighborhood,
    neighborhood,
    to_edge_list,
)
from .rules import RuleVariant, UpdateRule

__version__ = "0.1.0"
