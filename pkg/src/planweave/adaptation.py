"""When to revise a running plan, and what revision to make."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .core import (
    EventKind,
    NodeKind,
    NodeStatus,
    PlanEdge,
    PlanGraph,
    PlanNode,
    TopologyKind,
    Trajectory,
    TriggerKind,
    TriggerSpec,
    sorted_ids,
)
from .errors import AdaptationError, MarkupError, RevisionRejected
from .markup import parse_ops_markup
from .normalize import answers_match, normalize_answer
from .planners import QUERY_PREFIX, Planner, prompt_header
from .topology import AddEdge, AddNode, AtomicOp, ModifyNode, apply_atomic_ops, op_nodes, prune_completed

__all__ = [
    "AdaptDecision",
    "Proposal",
    "TriggerSpec",
    "default_critic",
    "meta_verify",
    "propose_revision",
    "prune_trigger",
    "retry_ops",
    "should_adapt",
]

ANOMALY = "anomaly"

Critic = Callable[[PlanGraph, Trajectory], "tuple[bool, str]"]


@dataclass(frozen=True)
class AdaptDecision:
    fired: bool
    kind: TriggerKind | None = None
    evidence: str = ""
    nodes: tuple[str, ...] = ()

    @classmethod
    def quiet(cls) -> AdaptDecision:
        return cls(False)


def default_critic(graph: PlanGraph, trajectory: Trajectory) -> tuple[bool, str]:
    """Flags Failed nodes that nobody has scheduled for another attempt."""
    stuck = [i for i in graph.node_ids() if graph.nodes[i].status is NodeStatus.FAILED and not graph.nodes[i].retry]
    if stuck:
        return True, "unresolved failures at " + ", ".join(stuck)
    return False, ""


def _latest_step_events(trajectory: Trajectory):
    if not trajectory.events:
        return []
    last = trajectory.events[-1].step
    return [e for e in trajectory.events if e.step == last]


def verification_conflicts(graph: PlanGraph) -> list[tuple[str, ...]]:
    """Groups of Succeeded Verification nodes on the same question whose answers disagree."""
    groups: dict[str, list[str]] = {}
    for node_id in graph.node_ids():
        node = graph.nodes[node_id]
        if node.kind is NodeKind.VERIFICATION and node.status is NodeStatus.SUCCEEDED:
            groups.setdefault(node.instruction, []).append(node_id)
    out = []
    for ids in groups.values():
        answers = [graph.nodes[i].result for i in ids]
        if any(not answers_match(answers[0], a) for a in answers[1:]):
            out.append(tuple(ids))
    return out


def _check(trigger: TriggerSpec, trajectory: Trajectory, graph: PlanGraph, critic: Critic) -> AdaptDecision | None:
    kind = trigger.kind
    n_steps = trajectory.aggregates.n_steps
    if kind is TriggerKind.NEVER:
        return None
    if kind is TriggerKind.PERIODIC:
        if n_steps > 0 and n_steps % trigger.period_n == 0:
            return AdaptDecision(True, kind, f"step {n_steps} is a multiple of {trigger.period_n}")
        return None
    if kind is TriggerKind.ON_FAILURE_SIGNAL:
        failures = [e for e in _latest_step_events(trajectory) if e.kind is EventKind.FAILURE_SIGNAL]
        if failures:
            nodes = tuple(sorted_ids({e.node for e in failures if e.node}))
            return AdaptDecision(True, kind, "; ".join(e.detail for e in failures) or "failure signal", nodes)
        return None
    if kind is TriggerKind.ENV_FEEDBACK:
        observations = [e for e in _latest_step_events(trajectory) if e.kind is EventKind.OBSERVATION]
        flagged = [e for e in observations if e.detail == ANOMALY]
        if flagged:
            nodes = tuple(sorted_ids({e.node for e in flagged if e.node}))
            return AdaptDecision(True, kind, "anomalous observation at " + ", ".join(nodes), nodes)
        return None
    if kind is TriggerKind.CRITIC_LOOP:
        if n_steps > 0 and n_steps % trigger.period_n == 0:
            needs_revision, why = critic(graph, trajectory)
            if needs_revision:
                failed = tuple(i for i in graph.node_ids() if graph.nodes[i].status is NodeStatus.FAILED)
                return AdaptDecision(True, kind, why or "critic requested revision", failed)
        return None
    if kind is TriggerKind.INCONSISTENCY:
        conflicts = verification_conflicts(graph)
        if conflicts:
            ids = conflicts[0]
            answers = ", ".join(f"{i}={normalize_answer(graph.nodes[i].result)!r}" for i in ids)
            return AdaptDecision(True, kind, "verifiers disagree: " + answers, ids)
        return None
    raise ValueError(f"unhandled trigger {kind}")


def should_adapt(
    trajectory: Trajectory,
    graph: PlanGraph,
    triggers: Sequence[TriggerSpec],
    critic: Critic | None = None,
) -> AdaptDecision:
    """First trigger (in declared order) whose condition holds at the current step.

    Failure signals and anomaly flags are read from the most recent dispatch
    round, since a concurrent round interleaves several nodes' events.
    """
    for trigger in triggers:
        decision = _check(trigger, trajectory, graph, critic or default_critic)
        if decision is not None:
            return decision
    return AdaptDecision.quiet()


# revision proposals -------------------------------------------------------------


@dataclass(frozen=True)
class Proposal:
    ops: tuple[AtomicOp, ...]
    tokens_in: int = 0
    tokens_out: int = 0
    attempts: int = 1


REVISE_HELP = (
    "You revise a running plan. Reply with exactly one fenced ```ops block holding "
    '{"ops": [...]}. Allowed ops: add_node {node}, remove_node {id}, add_edge {from, to}, '
    "remove_edge {from, to}, modify_node {id, patch}. Patchable fields: title, instruction, "
    "kind, role, retry, aux_validated. Set retry=true to run a Failed node again. An empty "
    "list keeps the plan as it is."
)


def graph_summary(graph: PlanGraph) -> str:
    lines = [f"topology: {graph.topology_kind.value}, revisions so far: {graph.revision_count}"]
    for node_id in graph.node_ids():
        n = graph.nodes[node_id]
        deps = ",".join(graph.predecessors(node_id)) or "-"
        result = f" -> {n.result}" if n.result is not None else ""
        lines.append(f"[{node_id}] {n.status.value} attempts={n.attempts} deps={deps} :: {n.instruction}{result}")
    return "\n".join(lines)


def recent_events(trajectory: Trajectory, k: int = 8) -> str:
    return "\n".join(
        f"step {e.step} {e.kind.value}" + (f" {e.node}" if e.node else "") + (f": {e.detail}" if e.detail else "")
        for e in trajectory.events[-k:]
    )


def propose_revision(
    graph: PlanGraph,
    trajectory: Trajectory,
    planner: Planner,
    decision: AdaptDecision,
    retries: int = 2,
) -> Proposal:
    """Ask the planner for a revision batch and vet it.

    A batch is rejected (and the planner asked again) when it does not parse,
    when a failure-triggered batch ignores the failed node, or when it would
    leave an invalid graph. Exhausting the retries raises AdaptationError.
    """
    kind = decision.kind.value if decision.kind else "Manual"
    failed = ",".join(decision.nodes)
    system = prompt_header(mode="revise", reason=kind, failed=failed or None) + REVISE_HELP
    context = (
        QUERY_PREFIX + trajectory.query
        + f"\n\nReason: {kind}: {decision.evidence}\n\nPlan:\n{graph_summary(graph)}"
        + f"\n\nRecent events:\n{recent_events(trajectory)}"
    )
    tokens_in = tokens_out = 0
    last = ""
    for attempt in range(1, retries + 2):
        completion = planner.complete(system, context)
        tokens_in += completion.tokens_in
        tokens_out += completion.tokens_out
        try:
            ops = parse_ops_markup(completion.text)
        except MarkupError as exc:
            last = str(exc)
        else:
            mentioned = set().union(*(op_nodes(o) for o in ops)) if ops else set()
            missing = [n for n in decision.nodes if n not in mentioned]
            if decision.kind is TriggerKind.ON_FAILURE_SIGNAL and missing:
                last = "revision must address failed node(s) " + ", ".join(missing)
            else:
                try:
                    apply_atomic_ops(graph, ops)
                except RevisionRejected as exc:
                    last = str(exc)
                else:
                    return Proposal(tuple(ops), tokens_in, tokens_out, attempt)
        context += f"\n\nYour previous revision was rejected: {last}"
    raise AdaptationError(f"no acceptable revision after {retries + 1} attempts: {last}", tokens_in, tokens_out)


def retry_ops(graph: PlanGraph, node_ids: Sequence[str], max_retries: int) -> list[AtomicOp]:
    """Rule-based local retry: flag each Failed node that still has retry budget."""
    ops: list[AtomicOp] = []
    for node_id in sorted_ids(set(node_ids)):
        node = graph.nodes.get(node_id)
        if node is not None and node.status is NodeStatus.FAILED and not node.retry and node.attempts <= max_retries:
            ops.append(ModifyNode(node_id, {"retry": True}))
    return ops


def meta_verify(graph: PlanGraph, judge: Callable[[str | None, str | None], bool] = answers_match) -> tuple[AdaptDecision, list[AtomicOp]]:
    """Cross-check paired verifiers and build the reconciliation structure they need.

    On disagreement: create a Resolution node over the disagreeing verifiers if
    none exists; if one exists and the pair has no arbiter yet, add a third
    verifier on the same question and widen the resolution to include it.
    """
    if graph.topology_kind is not TopologyKind.CROSS_CHECK_NET:
        raise ValueError("meta_verify needs a CrossCheckNet graph")
    groups: dict[str, list[str]] = {}
    for node_id in graph.node_ids():
        node = graph.nodes[node_id]
        if node.kind is NodeKind.VERIFICATION and node.status is not NodeStatus.PRUNED:
            groups.setdefault(node.instruction, []).append(node_id)

    for instruction, ids in groups.items():
        if len(ids) < 2 or any(graph.nodes[i].status is not NodeStatus.SUCCEEDED for i in ids):
            continue
        results = [graph.nodes[i].result for i in ids]
        if all(judge(results[0], r) for r in results[1:]):
            continue
        pair = tuple(ids)
        evidence = "verifiers disagree: " + ", ".join(f"{i}={graph.nodes[i].result!r}" for i in ids)
        decision = AdaptDecision(True, TriggerKind.INCONSISTENCY, evidence, pair)
        resolvers = [
            n for n in graph.node_ids()
            if graph.nodes[n].kind is NodeKind.RESOLUTION
            and all(graph.edge(i, n) is not None for i in ids[:2])
        ]
        taken = set(graph.nodes)
        if not resolvers:
            res_id = _fresh("R", taken)
            ops: list[AtomicOp] = [
                AddNode(PlanNode(res_id, "resolve", "resolve(" + ", ".join("{%s}" % i for i in ids) + ")", NodeKind.RESOLUTION))
            ]
            ops += [AddEdge(PlanEdge(i, res_id)) for i in ids]
            return decision, ops
        if len(ids) == 2:
            arbiter = _fresh("V", taken)
            res_id = resolvers[0]
            voters = list(ids) + [arbiter]
            ops = [
                AddNode(PlanNode(arbiter, "verify (arbiter)", instruction, NodeKind.VERIFICATION)),
                AddEdge(PlanEdge(arbiter, res_id)),
                ModifyNode(res_id, {"instruction": "resolve(" + ", ".join("{%s}" % v for v in voters) + ")"}),
            ]
            return decision, ops
        return decision, []
    return AdaptDecision.quiet(), []


def _fresh(prefix: str, taken: set[str]) -> str:
    i = 1
    while f"{prefix}{i}" in taken:
        i += 1
    return f"{prefix}{i}"


def prune_trigger(graph: PlanGraph, trajectory: Trajectory, period_n: int) -> PlanGraph | None:
    """Pruned graph on every ``period_n``-th step, else None."""
    if graph.topology_kind is not TopologyKind.DAG:
        raise ValueError("prune_trigger needs a Dag graph")
    if period_n < 1:
        raise ValueError("period_n must be >= 1")
    n = trajectory.aggregates.n_steps
    if n > 0 and n % period_n == 0:
        return prune_completed(graph)
    return None
