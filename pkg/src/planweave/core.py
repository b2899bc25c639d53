"""Domain types for plans, configurations and trajectories.

Everything here is an immutable value. Operations that "change" a value
return a new one. Canonical JSON encoding lives at the bottom of the module;
records are byte-comparable because keys, node ids and edge pairs are sorted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence, Union

from .errors import OrderingError, SchemaError, TransitionError

NodeId = str

_ID_SPLIT = re.compile(r"(\d+)")


def node_sort_key(node_id: NodeId) -> tuple:
    """Total order on node ids: digit runs compare numerically ("n2" < "n10")."""
    parts = _ID_SPLIT.split(node_id)
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in parts if p != "") + (
        (2, 0, node_id),
    )


def sorted_ids(ids: Iterable[NodeId]) -> list[NodeId]:
    return sorted(ids, key=node_sort_key)


class NodeKind(str, Enum):
    TASK = "Task"
    VERIFICATION = "Verification"
    AGGREGATION = "Aggregation"
    RESOLUTION = "Resolution"


class NodeStatus(str, Enum):
    PENDING = "Pending"
    DISPATCHED = "Dispatched"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    PRUNED = "Pruned"


TERMINAL_STATUSES = frozenset({NodeStatus.SUCCEEDED, NodeStatus.FAILED, NodeStatus.PRUNED})

_LEGAL_TRANSITIONS = {
    (NodeStatus.PENDING, NodeStatus.DISPATCHED),
    (NodeStatus.DISPATCHED, NodeStatus.SUCCEEDED),
    (NodeStatus.DISPATCHED, NodeStatus.FAILED),
    (NodeStatus.FAILED, NodeStatus.DISPATCHED),
    (NodeStatus.SUCCEEDED, NodeStatus.PRUNED),
}


def is_legal_transition(old: NodeStatus, new: NodeStatus) -> bool:
    return (old, new) in _LEGAL_TRANSITIONS


class TopologyKind(str, Enum):
    LINEAR = "Linear"
    DAG = "Dag"
    HIERARCHY = "Hierarchy"
    THOUGHT_GRAPH = "ThoughtGraph"
    MODULAR_GRAPH = "ModularGraph"
    CROSS_CHECK_NET = "CrossCheckNet"


class TriggerKind(str, Enum):
    PERIODIC = "Periodic"
    ON_FAILURE_SIGNAL = "OnFailureSignal"
    CRITIC_LOOP = "CriticLoop"
    ENV_FEEDBACK = "EnvFeedback"
    INCONSISTENCY = "Inconsistency"
    NEVER = "Never"


class NavigationKind(str, Enum):
    SEQUENTIAL = "Sequential"
    DYNAMIC_DISPATCH = "DynamicDispatch"
    CONCURRENT_PATHS = "ConcurrentPaths"
    CENTRALIZED_ROUTING = "CentralizedRouting"
    GRAPH_TRAVERSAL = "GraphTraversal"
    JOINT_DELIBERATION = "JointDeliberation"
    CONFLICT_RESOLUTION = "ConflictResolution"


class EventKind(str, Enum):
    PLAN_INIT = "PlanInit"
    DISPATCH = "Dispatch"
    TOOL_CALL = "ToolCall"
    OBSERVATION = "Observation"
    REVISION = "Revision"
    FAILURE_SIGNAL = "FailureSignal"
    JUDGE = "Judge"
    FINAL = "Final"


class CostClass(str, Enum):
    PLAN = "Plan"
    EXEC = "Exec"


# --------------------------------------------------------------------------
# graph


@dataclass(frozen=True)
class PlanNode:
    id: NodeId
    title: str = ""
    instruction: str = ""
    kind: NodeKind = NodeKind.TASK
    status: NodeStatus = NodeStatus.PENDING
    role: str | None = None
    result: str | None = None
    attempts: int = 0
    # set by adaptation: a Failed node asking to be dispatched again
    retry: bool = False
    # set by adaptation: successors may be dispatched speculatively
    aux_validated: bool = False
    notes: tuple[str, ...] = ()

    def transition(self, new_status: NodeStatus) -> PlanNode:
        """Move to ``new_status``; dispatching bumps ``attempts``."""
        if not is_legal_transition(self.status, new_status):
            raise TransitionError(
                f"node {self.id}: {self.status.value} -> {new_status.value} is not allowed"
            )
        attempts = self.attempts + 1 if new_status is NodeStatus.DISPATCHED else self.attempts
        retry = False if new_status is NodeStatus.DISPATCHED else self.retry
        return replace(self, status=new_status, attempts=attempts, retry=retry)


@dataclass(frozen=True)
class PlanEdge:
    """``target`` depends on ``source``."""

    source: NodeId
    target: NodeId
    rewired: bool = field(default=False, compare=False)

    @property
    def pair(self) -> tuple[NodeId, NodeId]:
        return (self.source, self.target)


@dataclass(frozen=True)
class PlanGraph:
    nodes: Mapping[NodeId, PlanNode] = field(default_factory=dict)
    edges: frozenset[PlanEdge] = frozenset()
    topology_kind: TopologyKind = TopologyKind.DAG
    revision_count: int = 0

    @classmethod
    def build(
        cls,
        nodes: Iterable[PlanNode],
        edges: Iterable[PlanEdge | tuple[NodeId, NodeId]] = (),
        topology_kind: TopologyKind = TopologyKind.DAG,
        revision_count: int = 0,
    ) -> PlanGraph:
        node_map = {n.id: n for n in nodes}
        edge_set = frozenset(e if isinstance(e, PlanEdge) else PlanEdge(*e) for e in edges)
        return cls(node_map, edge_set, TopologyKind(topology_kind), revision_count)

    def node_ids(self) -> list[NodeId]:
        return sorted_ids(self.nodes)

    def predecessors(self, node_id: NodeId) -> list[NodeId]:
        return sorted_ids(e.source for e in self.edges if e.target == node_id)

    def successors(self, node_id: NodeId) -> list[NodeId]:
        return sorted_ids(e.target for e in self.edges if e.source == node_id)

    def edge(self, source: NodeId, target: NodeId) -> PlanEdge | None:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        return None

    def with_node(self, node: PlanNode) -> PlanGraph:
        nodes = dict(self.nodes)
        nodes[node.id] = node
        return replace(self, nodes=nodes)

    def with_status(self, node_id: NodeId, status: NodeStatus, **changes: Any) -> PlanGraph:
        node = self.nodes[node_id].transition(status)
        if changes:
            node = replace(node, **changes)
        return self.with_node(node)

    def pending(self) -> list[NodeId]:
        return sorted_ids(i for i, n in self.nodes.items() if n.status is NodeStatus.PENDING)

    def __len__(self) -> int:
        return len(self.nodes)


def find_cycle(node_ids: Iterable[NodeId], edges: Iterable[PlanEdge]) -> list[NodeId] | None:
    """Return one cycle as a node list (first node repeated at the end), or None."""
    adj: dict[NodeId, list[NodeId]] = {n: [] for n in node_ids}
    for e in edges:
        adj.setdefault(e.source, []).append(e.target)
        adj.setdefault(e.target, [])
    for succ in adj.values():
        succ.sort(key=node_sort_key)
    color = {n: 0 for n in adj}
    for root in sorted_ids(adj):
        if color[root]:
            continue
        path = [root]
        iters = [iter(adj[root])]
        color[root] = 1
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                color[path.pop()] = 2
                iters.pop()
            elif color[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif color[nxt] == 0:
                color[nxt] = 1
                path.append(nxt)
                iters.append(iter(adj[nxt]))
    return None


def validate_graph(graph: PlanGraph) -> list[str]:
    """List every structural violation; an empty list means the graph is valid.

    Pruned nodes are bookkeeping leftovers (edge-free) and are ignored by the
    topology-kind shape rules.
    """
    report: list[str] = []
    for key, node in graph.nodes.items():
        if key != node.id:
            report.append(f"node key {key} does not match id {node.id}")
        if node.attempts < 0:
            report.append(f"negative attempts at {node.id}")
    for e in sorted(graph.edges, key=lambda e: (node_sort_key(e.source), node_sort_key(e.target))):
        if e.source == e.target:
            report.append(f"self-loop at {e.source}")
        for end in (e.source, e.target):
            if end not in graph.nodes:
                report.append(f"dangling edge {e.source}->{e.target}: unknown node {end}")
    if report:
        return report

    cycle = find_cycle(graph.nodes, graph.edges)
    if cycle:
        report.append("cycle: " + " -> ".join(cycle))

    live = [i for i in graph.node_ids() if graph.nodes[i].status is not NodeStatus.PRUNED]
    indeg = {i: 0 for i in graph.nodes}
    outdeg = {i: 0 for i in graph.nodes}
    for e in graph.edges:
        outdeg[e.source] += 1
        indeg[e.target] += 1
    kind = graph.topology_kind
    if kind in (TopologyKind.LINEAR, TopologyKind.HIERARCHY):
        for i in live:
            if indeg[i] > 1:
                report.append(f"in-degree > 1 at {i}")
    if kind is TopologyKind.LINEAR:
        for i in live:
            if outdeg[i] > 1:
                report.append(f"out-degree > 1 at {i}")
        heads = [i for i in live if indeg[i] == 0]
        if live and len(heads) != 1:
            report.append(f"not a single chain: {len(heads)} heads")
    return report


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StrategySpec:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TriggerSpec:
    kind: TriggerKind
    period_n: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TriggerKind(self.kind))


@dataclass(frozen=True)
class NavigationPolicy:
    kind: NavigationKind
    max_concurrency: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NavigationKind(self.kind))


@dataclass(frozen=True)
class Budgets:
    max_steps: int = 40
    max_total_tokens: int = 200_000
    max_retries: int = 2


@dataclass(frozen=True)
class PlanConfiguration:
    topology_kind: TopologyKind
    init_strategy: StrategySpec
    adaptation_strategy: str
    adaptation_triggers: tuple[TriggerSpec, ...]
    navigation_policy: NavigationPolicy
    budgets: Budgets = Budgets()

    def __post_init__(self) -> None:
        object.__setattr__(self, "topology_kind", TopologyKind(self.topology_kind))
        object.__setattr__(self, "adaptation_triggers", tuple(self.adaptation_triggers))


def validate_configuration(config: PlanConfiguration) -> list[str]:
    report = []
    nav = config.navigation_policy
    if nav.max_concurrency < 1:
        report.append("max_concurrency must be >= 1")
    if nav.kind is NavigationKind.SEQUENTIAL and nav.max_concurrency != 1:
        report.append("Sequential navigation requires max_concurrency = 1")
    b = config.budgets
    if b.max_steps < 0:
        report.append("max_steps must be >= 0")
    if b.max_total_tokens <= 0:
        report.append("max_total_tokens must be > 0")
    if b.max_retries < 0:
        report.append("max_retries must be >= 0")
    for t in config.adaptation_triggers:
        if t.kind in (TriggerKind.PERIODIC, TriggerKind.CRITIC_LOOP):
            if t.period_n is None or t.period_n < 1:
                report.append(f"{t.kind.value} trigger needs period_n >= 1")
    return report


@dataclass(frozen=True)
class Directive:
    node: NodeId
    instruction: str
    role: str
    issued_at_step: int
    retry: bool = False


@dataclass(frozen=True)
class ContextPolicy:
    window_k: int = 6
    include_summaries: bool = True


@dataclass(frozen=True)
class AgentSystemSpec:
    roster: tuple[str, ...]
    toolset: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    context_policy: ContextPolicy = ContextPolicy()
    active_selector: str = "assign_role"

    def validate(self, tool_names: Iterable[str]) -> list[str]:
        known = set(tool_names)
        report = []
        if not self.roster:
            report.append("roster is empty")
        for role, tools in sorted(self.toolset.items()):
            for tool in tools:
                if tool not in known:
                    report.append(f"role {role}: unknown tool {tool}")
        return report


# --------------------------------------------------------------------------
# trajectory


@dataclass(frozen=True)
class TrajectoryEvent:
    step: int
    kind: EventKind
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: float = 0.0
    cost_class: CostClass = CostClass.EXEC
    node: NodeId | None = None
    detail: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "cost_class", CostClass(self.cost_class))

    @property
    def tokens(self) -> int:
        return self.tokens_in + self.tokens_out


@dataclass(frozen=True)
class Aggregates:
    c_total_tokens: int = 0
    c_plan_tokens: int = 0
    c_exec_tokens: int = 0
    n_fail: int = 0
    n_revisions: int = 0
    n_retries: int = 0
    n_steps: int = 0


@dataclass(frozen=True)
class Trajectory:
    query: str
    events: tuple[TrajectoryEvent, ...] = ()
    final_answer: str | None = None
    # None until judged
    success: bool | None = None
    aggregates: Aggregates = Aggregates()

    @classmethod
    def from_events(cls, query: str, events: Sequence[TrajectoryEvent], **kw: Any) -> Trajectory:
        events = tuple(events)
        return cls(query, events, aggregates=_fold(events), **kw)


RETRY_DETAIL = "retry"


def _fold(events: Sequence[TrajectoryEvent]) -> Aggregates:
    plan = exec_ = fails = revs = retries = 0
    steps: set[int] = set()
    last = None
    for ev in events:
        if last is not None and ev.step < last:
            raise OrderingError(f"event step {ev.step} follows step {last}")
        last = ev.step
        if ev.cost_class is CostClass.PLAN:
            plan += ev.tokens
        else:
            exec_ += ev.tokens
        if ev.kind is EventKind.FAILURE_SIGNAL:
            fails += 1
        elif ev.kind is EventKind.REVISION:
            revs += 1
        elif ev.kind is EventKind.DISPATCH:
            steps.add(ev.step)
            if ev.detail == RETRY_DETAIL:
                retries += 1
    return Aggregates(plan + exec_, plan, exec_, fails, revs, retries, len(steps))


def recompute_aggregates(trajectory: Trajectory) -> Aggregates:
    """Rebuild aggregates from the event log.

    A step is one dispatch round, so ``n_steps`` counts distinct steps that
    carry at least one Dispatch event.
    """
    return _fold(trajectory.events)


def check_event_classes(events: Iterable[TrajectoryEvent]) -> list[str]:
    report = []
    for i, ev in enumerate(events):
        if ev.kind in (EventKind.PLAN_INIT, EventKind.REVISION) and ev.cost_class is not CostClass.PLAN:
            report.append(f"event {i}: {ev.kind.value} must be Plan")
        if ev.kind in (EventKind.TOOL_CALL, EventKind.OBSERVATION) and ev.cost_class is not CostClass.EXEC:
            report.append(f"event {i}: {ev.kind.value} must be Exec")
        if ev.tokens_in < 0 or ev.tokens_out < 0:
            report.append(f"event {i}: negative tokens")
    return report


# --------------------------------------------------------------------------
# canonical encoding

Entity = Union[PlanGraph, Trajectory, PlanConfiguration]


def node_to_dict(node: PlanNode) -> dict[str, Any]:
    return {
        "id": node.id,
        "title": node.title,
        "instruction": node.instruction,
        "kind": node.kind.value,
        "status": node.status.value,
        "role": node.role,
        "result": node.result,
        "attempts": node.attempts,
        "retry": node.retry,
        "aux_validated": node.aux_validated,
        "notes": list(node.notes),
    }


def graph_to_dict(graph: PlanGraph) -> dict[str, Any]:
    edges = sorted(graph.edges, key=lambda e: (node_sort_key(e.source), node_sort_key(e.target)))
    return {
        "type": "graph",
        "topology_kind": graph.topology_kind.value,
        "revision_count": graph.revision_count,
        "nodes": [node_to_dict(graph.nodes[i]) for i in graph.node_ids()],
        "edges": [{"from": e.source, "to": e.target, "rewired": e.rewired} for e in edges],
    }


def config_to_dict(config: PlanConfiguration) -> dict[str, Any]:
    return {
        "type": "config",
        "topology_kind": config.topology_kind.value,
        "init_strategy": {"name": config.init_strategy.name, "params": dict(config.init_strategy.params)},
        "adaptation_strategy": config.adaptation_strategy,
        "adaptation_triggers": [
            {"kind": t.kind.value, "period_n": t.period_n} for t in config.adaptation_triggers
        ],
        "navigation_policy": {
            "kind": config.navigation_policy.kind.value,
            "max_concurrency": config.navigation_policy.max_concurrency,
        },
        "budgets": {
            "max_steps": config.budgets.max_steps,
            "max_total_tokens": config.budgets.max_total_tokens,
            "max_retries": config.budgets.max_retries,
        },
    }


def event_to_dict(ev: TrajectoryEvent, replay: bool = False) -> dict[str, Any]:
    return {
        "step": ev.step,
        "kind": ev.kind.value,
        "tokens_in": ev.tokens_in,
        "tokens_out": ev.tokens_out,
        "wall_ms": 0.0 if replay else ev.wall_ms,
        "cost_class": ev.cost_class.value,
        "node": ev.node,
        "detail": ev.detail,
    }


def aggregates_to_dict(agg: Aggregates) -> dict[str, int]:
    return {
        "c_total_tokens": agg.c_total_tokens,
        "c_plan_tokens": agg.c_plan_tokens,
        "c_exec_tokens": agg.c_exec_tokens,
        "n_fail": agg.n_fail,
        "n_revisions": agg.n_revisions,
        "n_retries": agg.n_retries,
        "n_steps": agg.n_steps,
    }


def trajectory_header(t: Trajectory) -> dict[str, Any]:
    return {
        "type": "trajectory",
        "query": t.query,
        "final_answer": t.final_answer,
        "success": t.success,
        "aggregates": aggregates_to_dict(t.aggregates),
    }


def trajectory_to_dict(t: Trajectory, replay: bool = False) -> dict[str, Any]:
    d = trajectory_header(t)
    d["events"] = [event_to_dict(e, replay) for e in t.events]
    return d


def to_dict(entity: Entity, replay: bool = False) -> dict[str, Any]:
    if isinstance(entity, PlanGraph):
        return graph_to_dict(entity)
    if isinstance(entity, Trajectory):
        return trajectory_to_dict(entity, replay)
    if isinstance(entity, PlanConfiguration):
        return config_to_dict(entity)
    raise TypeError(f"cannot encode {type(entity).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode(entity: Entity, replay: bool = False) -> str:
    """Canonical one-line JSON record. ``replay`` zeroes wall-clock fields."""
    return dumps(to_dict(entity, replay))


# decoding --------------------------------------------------------------------

_MISSING = object()


def _get(d: Mapping[str, Any], key: str, types: type | tuple, path: str, optional: bool = False) -> Any:
    where = f"{path}.{key}" if path else key
    value = d.get(key, _MISSING) if isinstance(d, Mapping) else _MISSING
    if value is _MISSING:
        if optional:
            return None
        raise SchemaError(where, "missing")
    if value is None and optional:
        return None
    # bool is an int subclass; keep them apart
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise SchemaError(where, f"expected {types}, got bool")
    if not isinstance(value, types):
        raise SchemaError(where, f"expected {types}, got {type(value).__name__}")
    return value


def _enum(enum_cls: type[Enum], value: Any, where: str) -> Any:
    try:
        return enum_cls(value)
    except ValueError:
        raise SchemaError(where, f"unknown {enum_cls.__name__} {value!r}") from None


def node_from_dict(d: Mapping[str, Any], path: str = "node") -> PlanNode:
    if not isinstance(d, Mapping):
        raise SchemaError(path, "expected object")
    notes = _get(d, "notes", list, path, optional=True) or []
    return PlanNode(
        id=_get(d, "id", str, path),
        title=_get(d, "title", str, path, optional=True) or "",
        instruction=_get(d, "instruction", str, path, optional=True) or "",
        kind=_enum(NodeKind, _get(d, "kind", str, path), f"{path}.kind"),
        status=_enum(NodeStatus, _get(d, "status", str, path), f"{path}.status"),
        role=_get(d, "role", str, path, optional=True),
        result=_get(d, "result", str, path, optional=True),
        attempts=_get(d, "attempts", int, path),
        retry=bool(_get(d, "retry", bool, path, optional=True)),
        aux_validated=bool(_get(d, "aux_validated", bool, path, optional=True)),
        notes=tuple(str(n) for n in notes),
    )


def graph_from_dict(d: Mapping[str, Any]) -> PlanGraph:
    kind = _enum(TopologyKind, _get(d, "topology_kind", str, ""), "topology_kind")
    revision_count = _get(d, "revision_count", int, "")
    raw_nodes = _get(d, "nodes", list, "")
    raw_edges = _get(d, "edges", list, "")
    nodes = [node_from_dict(n, f"nodes[{i}]") for i, n in enumerate(raw_nodes)]
    seen: set[str] = set()
    for i, n in enumerate(nodes):
        if n.id in seen:
            raise SchemaError(f"nodes[{i}].id", f"duplicate id {n.id}")
        seen.add(n.id)
    edges = []
    for i, e in enumerate(raw_edges):
        p = f"edges[{i}]"
        if not isinstance(e, Mapping):
            raise SchemaError(p, "expected object")
        edges.append(
            PlanEdge(
                _get(e, "from", str, p),
                _get(e, "to", str, p),
                bool(_get(e, "rewired", bool, p, optional=True)),
            )
        )
    return PlanGraph.build(nodes, edges, kind, revision_count)


def config_from_dict(d: Mapping[str, Any]) -> PlanConfiguration:
    kind = _enum(TopologyKind, _get(d, "topology_kind", str, ""), "topology_kind")
    init = _get(d, "init_strategy", Mapping, "")
    init_spec = StrategySpec(
        _get(init, "name", str, "init_strategy"),
        dict(_get(init, "params", Mapping, "init_strategy", optional=True) or {}),
    )
    strategy = _get(d, "adaptation_strategy", str, "")
    triggers = []
    for i, t in enumerate(_get(d, "adaptation_triggers", list, "")):
        p = f"adaptation_triggers[{i}]"
        if not isinstance(t, Mapping):
            raise SchemaError(p, "expected object")
        triggers.append(
            TriggerSpec(
                _enum(TriggerKind, _get(t, "kind", str, p), f"{p}.kind"),
                _get(t, "period_n", int, p, optional=True),
            )
        )
    nav = _get(d, "navigation_policy", Mapping, "")
    policy = NavigationPolicy(
        _enum(NavigationKind, _get(nav, "kind", str, "navigation_policy"), "navigation_policy.kind"),
        _get(nav, "max_concurrency", int, "navigation_policy"),
    )
    b = _get(d, "budgets", Mapping, "")
    budgets = Budgets(
        _get(b, "max_steps", int, "budgets"),
        _get(b, "max_total_tokens", int, "budgets"),
        _get(b, "max_retries", int, "budgets"),
    )
    return PlanConfiguration(kind, init_spec, strategy, tuple(triggers), policy, budgets)


def event_from_dict(d: Mapping[str, Any], path: str = "event") -> TrajectoryEvent:
    if not isinstance(d, Mapping):
        raise SchemaError(path, "expected object")
    return TrajectoryEvent(
        step=_get(d, "step", int, path),
        kind=_enum(EventKind, _get(d, "kind", str, path), f"{path}.kind"),
        tokens_in=_get(d, "tokens_in", int, path),
        tokens_out=_get(d, "tokens_out", int, path),
        wall_ms=float(_get(d, "wall_ms", (int, float), path)),
        cost_class=_enum(CostClass, _get(d, "cost_class", str, path), f"{path}.cost_class"),
        node=_get(d, "node", str, path, optional=True),
        detail=_get(d, "detail", str, path, optional=True) or "",
    )


def aggregates_from_dict(d: Mapping[str, Any], path: str = "aggregates") -> Aggregates:
    return Aggregates(**{k: _get(d, k, int, path) for k in aggregates_to_dict(Aggregates())})


def trajectory_from_dict(d: Mapping[str, Any], events: Sequence[TrajectoryEvent] | None = None) -> Trajectory:
    query = _get(d, "query", str, "")
    final = _get(d, "final_answer", str, "", optional=True)
    success = _get(d, "success", bool, "", optional=True)
    agg = aggregates_from_dict(_get(d, "aggregates", Mapping, ""))
    if events is None:
        events = [event_from_dict(e, f"events[{i}]") for i, e in enumerate(_get(d, "events", list, ""))]
    return Trajectory(query, tuple(events), final, success, agg)


_DECODERS = {
    "graph": graph_from_dict,
    "config": config_from_dict,
    "trajectory": trajectory_from_dict,
}


def from_dict(d: Mapping[str, Any]) -> Entity:
    if not isinstance(d, Mapping):
        raise SchemaError("record", "expected a JSON object")
    kind = _get(d, "type", str, "")
    try:
        decoder = _DECODERS[kind]
    except KeyError:
        raise SchemaError("type", f"unknown record type {kind!r}") from None
    return decoder(d)


def decode(record: str | bytes | Mapping[str, Any]) -> Entity:
    if isinstance(record, (str, bytes)):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise SchemaError("record", f"not JSON: {exc}") from None
    return from_dict(record)


# line-delimited trajectory logs ----------------------------------------------


def trajectory_log_lines(t: Trajectory, replay: bool = False, graph: PlanGraph | None = None) -> list[str]:
    """Header line, one line per event, then an optional final graph record."""
    lines = [dumps(trajectory_header(t))]
    lines += [dumps({"type": "event", **event_to_dict(e, replay)}) for e in t.events]
    if graph is not None:
        lines.append(encode(graph))
    return lines


def parse_trajectory_log(text: str) -> tuple[Trajectory, PlanGraph | None]:
    header = None
    events = []
    graph = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}", f"not JSON: {exc}") from None
        if not isinstance(rec, Mapping):
            raise SchemaError(f"line {lineno}", "expected object")
        kind = rec.get("type")
        if kind == "trajectory":
            header = rec
        elif kind == "event":
            events.append(event_from_dict(rec, f"line {lineno}"))
        elif kind == "graph":
            graph = graph_from_dict(rec)
        else:
            raise SchemaError(f"line {lineno}.type", f"unexpected {kind!r}")
    if header is None:
        raise SchemaError("type", "no trajectory header")
    return trajectory_from_dict(header, events), graph
