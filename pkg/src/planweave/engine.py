"""Episode loop: initialize, dispatch, execute, adapt, finalize, judge."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .adaptation import (
    AdaptDecision,
    Critic,
    default_critic,
    meta_verify,
    propose_revision,
    retry_ops,
    should_adapt,
)
from .agents import Executor, NodeOutcome
from .core import (
    RETRY_DETAIL,
    AgentSystemSpec,
    ContextPolicy,
    CostClass,
    Directive,
    EventKind,
    NavigationKind,
    NodeKind,
    NodeStatus,
    PlanConfiguration,
    PlanGraph,
    TopologyKind,
    Trajectory,
    TrajectoryEvent,
    TriggerKind,
    TriggerSpec,
    sorted_ids,
)
from .errors import AdaptationError, ConfigurationError, InitializationError, RevisionRejected, VerdictError
from .judge import JudgeMode, JudgeVerdict, judge
from .llm import ChatClient
from .navigation import assign_role, next_directives, vote
from .paradigms import check_configuration, initialize_plan
from .planners import Planner
from .topology import AtomicOp, apply_atomic_ops, prune_completed, sinks
from .world import TOOLS

log = logging.getLogger(__name__)

STOP_COMPLETE = "complete"
STOP_BUDGET = "budget"
STOP_STALLED = "stalled"
STOP_INIT = "init-error"
ANOMALY = "anomaly"


@dataclass
class Backend:
    executor: Executor
    planner: Planner
    judge_client: ChatClient | None = None
    judge_model: str = ""
    critic: Critic | None = None


@dataclass(frozen=True)
class EpisodeParams:
    judge_mode: JudgeMode = JudgeMode.EXACT
    # run a batch on a thread pool; results are merged in id order either way
    concurrent: bool = True
    parse_retries: int = 2
    revision_retries: int = 2


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    initial_graph: PlanGraph | None
    final_graph: PlanGraph | None
    stop_reason: str
    verdict: JudgeVerdict | None = None
    results: dict[str, str] = field(default_factory=dict)


def render_event(ev: TrajectoryEvent) -> str:
    text = f"step {ev.step} {ev.kind.value}"
    if ev.node:
        text += f" {ev.node}"
    if ev.detail:
        text += f": {ev.detail}"
    return text


def aggregate_context(trajectory: Trajectory, graph: PlanGraph | None, policy: ContextPolicy = ContextPolicy()) -> str:
    """Query, then Succeeded-node summaries in id order, then the last ``window_k`` events."""
    parts = [f"Query: {trajectory.query}"]
    if graph is not None and policy.include_summaries:
        done = [i for i in graph.node_ids() if graph.nodes[i].status is NodeStatus.SUCCEEDED]
        if done:
            parts.append("Completed:\n" + "\n".join(
                f"[{i}] {graph.nodes[i].title or graph.nodes[i].instruction}: {graph.nodes[i].result}" for i in done
            ))
    window = trajectory.events[-policy.window_k:] if policy.window_k > 0 else ()
    if window:
        parts.append("Recent:\n" + "\n".join(render_event(e) for e in window))
    return "\n\n".join(parts)


def execute_directive(directive: Directive, context: str, backend: Backend, results: Mapping[str, str]) -> NodeOutcome:
    start = time.perf_counter()
    outcome = backend.executor.execute(directive, context, results)
    wall = (time.perf_counter() - start) * 1000.0
    return NodeOutcome(
        outcome.status, outcome.output, outcome.tokens_in, outcome.tokens_out, wall, outcome.anomalous, outcome.tool_calls
    )


class _Episode:
    def __init__(self, query, gold, config, agent_spec, backend, seed, params) -> None:
        self.query: str = query
        self.gold: str | None = gold
        self.config: PlanConfiguration = config
        self.agent_spec: AgentSystemSpec = agent_spec
        self.backend: Backend = backend
        self.seed: int = seed
        self.params: EpisodeParams = params
        self.events: list[TrajectoryEvent] = []
        self.results: dict[str, str] = {}
        self.graph: PlanGraph | None = None
        self.initial: PlanGraph | None = None
        self.step = 0

    # helpers ------------------------------------------------------------------

    def trajectory(self, **kw) -> Trajectory:
        return Trajectory.from_events(self.query, self.events, **kw)

    def emit(self, kind: EventKind, cost: CostClass, tokens_in: int = 0, tokens_out: int = 0, node=None, detail="", wall_ms=0.0):
        self.events.append(TrajectoryEvent(self.step, kind, tokens_in, tokens_out, wall_ms, cost, node, detail))

    def role_for(self, node_id: str) -> str:
        node = self.graph.nodes[node_id]
        roster = self.agent_spec.roster
        if self.config.navigation_policy.kind is NavigationKind.CENTRALIZED_ROUTING:
            return assign_role(node, roster)
        return node.role or roster[0]

    def retry_eligible(self) -> list[str]:
        g = self.graph
        limit = self.config.budgets.max_retries
        out = []
        for node_id in g.node_ids():
            n = g.nodes[node_id]
            if n.status is NodeStatus.FAILED and n.retry and n.attempts - 1 < limit:
                if all(g.nodes[p].status is NodeStatus.SUCCEEDED for p in g.predecessors(node_id)):
                    out.append(node_id)
        return out

    def over_budget(self) -> bool:
        agg = self.trajectory().aggregates
        b = self.config.budgets
        return agg.n_steps >= b.max_steps or agg.c_total_tokens >= b.max_total_tokens

    # phases -------------------------------------------------------------------

    def initialize(self) -> bool:
        try:
            graph, event = initialize_plan(
                self.query, self.config, self.backend.planner, self.seed, self.params.parse_retries
            )
        except InitializationError as exc:
            self.emit(EventKind.FAILURE_SIGNAL, CostClass.PLAN, exc.tokens_in, exc.tokens_out, detail=f"init: {exc}")
            return False
        self.events.append(event)
        self.graph = self.initial = graph
        return True

    def batch(self) -> list[Directive]:
        cap = self.config.navigation_policy.max_concurrency
        retries = [
            Directive(i, self.graph.nodes[i].instruction, self.role_for(i), self.step, retry=True)
            for i in self.retry_eligible()
        ][:cap]
        fresh = next_directives(self.graph, self.config.navigation_policy, self.agent_spec.roster, self.step)
        taken = {d.node for d in retries}
        chosen = retries + [d for d in fresh if d.node not in taken][: cap - len(retries)]
        order = {i: k for k, i in enumerate(sorted_ids(d.node for d in chosen))}
        return sorted(chosen, key=lambda d: order[d.node])

    def dispatch(self, directives: Sequence[Directive]) -> None:
        base = self.trajectory()
        contexts = {}
        for d in directives:
            ctx = aggregate_context(base, self.graph, self.agent_spec.context_policy)
            notes = self.graph.nodes[d.node].notes
            if notes:
                ctx += "\n\nNotes:\n" + "\n".join(notes)
            contexts[d.node] = ctx
        for d in directives:
            self.graph = self.graph.with_status(d.node, NodeStatus.DISPATCHED)
        snapshot = dict(self.results)

        def run(d: Directive) -> NodeOutcome:
            return execute_directive(d, contexts[d.node], self.backend, snapshot)

        if self.params.concurrent and len(directives) > 1:
            with ThreadPoolExecutor(max_workers=len(directives)) as pool:
                outcomes = list(pool.map(run, directives))
        else:
            outcomes = [run(d) for d in directives]

        for d, out in zip(directives, outcomes):
            self.emit(EventKind.DISPATCH, CostClass.EXEC, node=d.node, detail=RETRY_DETAIL if d.retry else "")
            self.emit(EventKind.TOOL_CALL, CostClass.EXEC, out.tokens_in, 0, d.node, d.instruction[:120])
            flagged = out.anomalous or not out.succeeded
            self.emit(EventKind.OBSERVATION, CostClass.EXEC, 0, out.tokens_out, d.node, ANOMALY if flagged else "", out.wall_ms)
            if out.succeeded:
                self.graph = self.graph.with_status(d.node, NodeStatus.SUCCEEDED, result=out.output)
                self.results[d.node] = out.output
            else:
                self.graph = self.graph.with_status(d.node, NodeStatus.FAILED, result=None)
                self.emit(EventKind.FAILURE_SIGNAL, CostClass.EXEC, node=d.node, detail=out.output)

    def apply(self, ops: Sequence[AtomicOp], tokens_in: int, tokens_out: int, why: str) -> bool:
        if not ops:
            return False
        try:
            self.graph = apply_atomic_ops(self.graph, ops)
        except RevisionRejected as exc:
            self.emit(EventKind.FAILURE_SIGNAL, CostClass.PLAN, tokens_in, tokens_out, detail=f"revision rejected: {exc}")
            return False
        self.emit(EventKind.REVISION, CostClass.PLAN, tokens_in, tokens_out, detail=f"{why} ({len(ops)} ops)")
        return True

    def handle(self, decision: AdaptDecision) -> bool:
        """Carry out one fired trigger; True if the graph changed."""
        strategy = self.config.adaptation_strategy
        why = decision.kind.value if decision.kind else "manual"
        if decision.kind is TriggerKind.PERIODIC and strategy == "PeriodicPruning":
            if self.graph.topology_kind is TopologyKind.DAG:
                pruned = prune_completed(self.graph)
                changed = pruned != self.graph
                self.graph = pruned
                return changed
            return False
        if decision.kind is TriggerKind.INCONSISTENCY and self.graph.topology_kind is TopologyKind.CROSS_CHECK_NET:
            _, ops = meta_verify(self.graph)
            return self.apply(ops, 0, 0, why)
        if strategy == "ConsensusVoting":
            failed = decision.nodes or tuple(
                i for i in self.graph.node_ids() if self.graph.nodes[i].status is NodeStatus.FAILED
            )
            return self.apply(retry_ops(self.graph, failed, self.config.budgets.max_retries), 0, 0, why)
        try:
            proposal = propose_revision(
                self.graph, self.trajectory(), self.backend.planner, decision, self.params.revision_retries
            )
        except AdaptationError as exc:
            self.emit(EventKind.FAILURE_SIGNAL, CostClass.PLAN, exc.tokens_in, exc.tokens_out, detail=f"adaptation: {exc}")
            return False
        if not proposal.ops:
            if proposal.tokens_in or proposal.tokens_out:
                self.emit(EventKind.REVISION, CostClass.PLAN, proposal.tokens_in, proposal.tokens_out, detail=f"{why} (no change)")
            return False
        return self.apply(proposal.ops, proposal.tokens_in, proposal.tokens_out, why)

    def adapt(self) -> None:
        # every trigger is evaluated once per step, in declared order
        remaining: list[TriggerSpec] = list(self.config.adaptation_triggers)
        while remaining:
            decision = should_adapt(self.trajectory(), self.graph, remaining, self.backend.critic)
            if not decision.fired:
                return
            self.handle(decision)
            idx = next(k for k, t in enumerate(remaining) if t.kind is decision.kind)
            remaining = remaining[idx + 1:]

    def recover_stall(self) -> bool:
        """A critic loop is consulted immediately when nothing can run, rather than waiting for its period."""
        for trig in self.config.adaptation_triggers:
            if trig.kind is TriggerKind.CRITIC_LOOP:
                critic = self.backend.critic or default_critic
                needed, why = critic(self.graph, self.trajectory())
                if needed:
                    failed = tuple(i for i in self.graph.node_ids() if self.graph.nodes[i].status is NodeStatus.FAILED)
                    return self.handle(AdaptDecision(True, TriggerKind.CRITIC_LOOP, why, failed))
        return False

    def has_failed(self) -> bool:
        return any(n.status is NodeStatus.FAILED for n in self.graph.nodes.values())

    def work_left(self) -> bool:
        return bool(self.graph.pending() or self.retry_eligible())

    def loop(self) -> str:
        while True:
            if not self.work_left():
                if self.has_failed() and self.recover_stall() and self.work_left():
                    continue
                return STOP_COMPLETE
            if self.over_budget():
                return STOP_BUDGET
            self.step = self.trajectory().aggregates.n_steps + 1
            directives = self.batch()
            if not directives:
                self.step -= 1
                if self.recover_stall() and self.batch_possible():
                    continue
                return STOP_STALLED
            self.dispatch(directives)
            if self.graph.pending() or self.has_failed():
                self.adapt()

    def batch_possible(self) -> bool:
        saved = self.step
        self.step += 1
        try:
            return bool(self.batch())
        finally:
            self.step = saved

    def final_answer(self) -> str | None:
        g = self.graph
        if g is None:
            return None
        nav = self.config.navigation_policy.kind
        done = sinks(g, {NodeStatus.SUCCEEDED})
        if nav is NavigationKind.JOINT_DELIBERATION:
            if not done:
                return None
            return vote([(i, self.results[i]) for i in done])
        if nav is NavigationKind.CONFLICT_RESOLUTION:
            resolved = [
                i for i in g.node_ids()
                if g.nodes[i].kind is NodeKind.RESOLUTION and g.nodes[i].status is NodeStatus.SUCCEEDED
            ]
            return g.nodes[resolved[-1]].result if resolved else None
        live = sinks(g)
        if len(live) == 1:
            node = g.nodes[live[0]]
            return node.result if node.status is NodeStatus.SUCCEEDED else None
        if not done:
            return None
        return "; ".join(self.results[i] for i in done)

    def finish(self, stop: str) -> EpisodeResult:
        answer = self.final_answer()
        self.step = max((e.step for e in self.events), default=0)
        verdict = None
        success: bool | None = None
        if self.gold is not None:
            try:
                verdict = judge(
                    answer, self.gold, self.params.judge_mode, self.backend.judge_client, self.backend.judge_model
                )
                self.emit(EventKind.JUDGE, CostClass.PLAN, verdict.tokens_in, verdict.tokens_out,
                          detail=("success" if verdict.success else "failure") + f": {verdict.rationale}")
                success = verdict.success
            except VerdictError as exc:
                self.emit(EventKind.JUDGE, CostClass.PLAN, detail=f"error: {exc}")
                success = False
        if stop in (STOP_BUDGET, STOP_INIT):
            success = False
        self.emit(EventKind.FINAL, CostClass.PLAN, detail=stop)
        traj = self.trajectory(final_answer=answer, success=success)
        return EpisodeResult(traj, self.initial, self.graph, stop, verdict, dict(self.results))


def run_episode_detailed(
    query: str,
    gold: str | None,
    config: PlanConfiguration,
    agent_spec: AgentSystemSpec,
    backend: Backend,
    seed: int = 0,
    params: EpisodeParams | None = None,
) -> EpisodeResult:
    check_configuration(config)
    problems = agent_spec.validate(TOOLS)
    if problems:
        raise ConfigurationError("; ".join(problems))
    ep = _Episode(query, gold, config, agent_spec, backend, seed, params or EpisodeParams())
    if config.budgets.max_steps <= 0:
        return ep.finish(STOP_BUDGET)
    if not ep.initialize():
        return ep.finish(STOP_INIT)
    stop = ep.loop()
    log.debug("episode %r stopped: %s", query, stop)
    return ep.finish(stop)


def run_episode(
    query: str,
    gold: str | None,
    config: PlanConfiguration,
    agent_spec: AgentSystemSpec,
    backend: Backend,
    seed: int = 0,
    params: EpisodeParams | None = None,
) -> Trajectory:
    return run_episode_detailed(query, gold, config, agent_spec, backend, seed, params).trajectory


DEFAULT_ROSTER = ("planner", "searcher", "analyst", "verifier")


def default_agent_spec(roster: Sequence[str] = DEFAULT_ROSTER) -> AgentSystemSpec:
    tools = tuple(TOOLS)
    return AgentSystemSpec(tuple(roster), {r: tools for r in roster})
