"""ghostgrid: a desk-scale testbed where RL failures become data.

A deterministic gridworld trains a tabular Q-learning agent while every
episode is recorded as a replayable trajectory. Frozen policy snapshots
replay as translucent "ghosts" layered over the live agent; a human (or
script) injects typed disruptions and labels the behavioural failure modes
that follow; and the agent closes the loop by avoiding actions retrieved
from stored failure ghosts.
"""

from .agent import (
    Hyperparams,
    PolicySnapshot,
    QTable,
    epsilon_at,
    greedy_action,
    select_action,
    snapshot_policy,
    update,
)
from .disruptions import (
    Disruption,
    DisruptionJournal,
    DisruptionKind,
    ScheduledDisruption,
    apply_disruption,
    log_disruption,
    make_disruption,
    mark_applied,
    validate,
)
from .dualloop import (
    ExperimentConfig,
    ExperimentReport,
    PenaltyConfig,
    conditioned_action,
    episodes_to_criterion,
    run_experiment,
)
from .env import (
    Action,
    ACTIONS,
    CellContent,
    GridConfig,
    Observation,
    OcclusionMask,
    PhysicsParams,
    State,
    Transition,
    observe,
    optimal_return,
    reset,
    shortest_path_length,
    step,
    validate_config,
)
from .errors import (
    BindError,
    ConfigError,
    EpisodeDone,
    GhostgridError,
    ParseError,
    StateError,
    StorageError,
    ValidationError,
)
from .ghosts import (
    Ghost,
    GhostDatabase,
    GhostKind,
    LayerConfig,
    Trajectory,
    alpha_for_age,
    get_failure_actions,
    greedy_rollout,
    load,
    make_trajectory,
    persist,
    retrieve_ghosts,
    spawn_ghosts,
)
from .taxonomy import (
    BehaviourMetrics,
    FailureMode,
    Thresholds,
    classify,
    cohen_kappa,
    compute_metrics,
    drift_score,
    fit_thresholds,
    fleiss_kappa,
)
from .training import TrainResult, run_training

__version__ = "0.1.0"
