"""Plan orchestration over a four-dimension design space, with impedance scoring and preference-data tooling."""

from .adaptation import AdaptDecision, meta_verify, propose_revision, prune_trigger, should_adapt
from .agents import NodeOutcome, ScriptedExecutor
from .core import (
    AgentSystemSpec,
    Budgets,
    ContextPolicy,
    Directive,
    NavigationPolicy,
    NodeKind,
    NodeStatus,
    PlanConfiguration,
    PlanEdge,
    PlanGraph,
    PlanNode,
    StrategySpec,
    TopologyKind,
    Trajectory,
    TrajectoryEvent,
    TriggerKind,
    TriggerSpec,
    decode,
    encode,
    recompute_aggregates,
    validate_graph,
)
from .datapipe import (
    CandidateResult,
    MetaContext,
    PreferenceRecord,
    SftRecord,
    build_context,
    build_preference_pairs,
    emit_corpora,
    execution_judge_filter,
    exploratory_synthesis,
)
from .engine import Backend, EpisodeParams, aggregate_context, execute_directive, run_episode, run_episode_detailed
from .igpo import PairLikelihoods, boltzmann_policy, igpo_loss, igpo_loss_grad, implicit_reward, kl_objective
from .impedance import ImpedanceBreakdown, ImpedanceParams, impedance, objective, stability_score
from .judge import JudgeMode, JudgeVerdict, judge
from .navigation import assign_role, next_directives, vote
from .paradigms import PARADIGM_NAMES, REGISTRY, initialize_plan, registry_lookup
from .topology import apply_atomic_ops, prune_completed, ready_set, to_dot, topological_order

__version__ = "0.1.0"
