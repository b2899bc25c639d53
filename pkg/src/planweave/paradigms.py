"""The seven catalogued planning paradigms and the plan initialization strategies."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, TypeVar

from .core import (
    Budgets,
    CostClass,
    EventKind,
    NavigationKind,
    NavigationPolicy,
    NodeKind,
    PlanConfiguration,
    PlanEdge,
    PlanGraph,
    PlanNode,
    StrategySpec,
    TopologyKind,
    TrajectoryEvent,
    TriggerKind,
    TriggerSpec,
    config_to_dict,
    dumps,
    find_cycle,
    validate_configuration,
    validate_graph,
)
from .errors import ConfigurationError, InitializationError, MarkupError, NotFoundError
from .markup import parse_plan_markup
from .planners import QUERY_PREFIX, Planner, prompt_header
from .topology import topological_order

T = TypeVar("T")

PARSE_RETRIES = 2
FLOW_MAX_DEPTH = 4
FLOW_MAX_NODES = 24
DELIBERATION_WIDTH = 3

INIT_STRATEGIES = (
    "PlannerDecompose",
    "SopConfiguration",
    "RoleDefinition",
    "DependencyParsing",
    "HybridPlanning",
    "FlowConstruction",
    "InconsistencyTrigger",
)

ADAPTATION_STRATEGIES = (
    "ManagerIntervention",
    "CriticLoopFeedback",
    "EnvFeedback",
    "PeriodicPruning",
    "ConsensusVoting",
    "DynamicExpansion",
    "MetaVerification",
)


@dataclass(frozen=True)
class ParadigmEntry:
    name: str
    config: PlanConfiguration
    description: str
    table_row: tuple[str, str, str, str]


def _config(topology, init, adapt, triggers, nav, concurrency, **init_params) -> PlanConfiguration:
    return PlanConfiguration(
        topology_kind=topology,
        init_strategy=StrategySpec(init, init_params),
        adaptation_strategy=adapt,
        adaptation_triggers=tuple(triggers),
        navigation_policy=NavigationPolicy(nav, concurrency),
        budgets=Budgets(),
    )


_ENTRIES = (
    ParadigmEntry(
        "OWL",
        _config(TopologyKind.HIERARCHY, "PlannerDecompose", "ManagerIntervention",
                [TriggerSpec(TriggerKind.ON_FAILURE_SIGNAL)], NavigationKind.DYNAMIC_DISPATCH, 3),
        "Manager/worker split. One planner call turns the query into an ordered task list; "
        "workers broadcast failure signals and the planner re-plans the failed sub-task.",
        ("Dual Hierarchy", "Planner Decompose", "Manager Intervention", "Dynamic Dispatch"),
    ),
    ParadigmEntry(
        "OAgents",
        _config(TopologyKind.MODULAR_GRAPH, "SopConfiguration", "CriticLoopFeedback",
                [TriggerSpec(TriggerKind.CRITIC_LOOP, 3)], NavigationKind.SEQUENTIAL, 1),
        "Sub-tasks joined by prerequisite edges, executed one per loop iteration; "
        "every N steps a critic checks progress and can trigger a re-sequencing.",
        ("Modular Graph", "SOP Configuration", "Critic-Loop Feedback", "Loop Execution"),
    ),
    ParadigmEntry(
        "AgentOrchestra",
        _config(TopologyKind.HIERARCHY, "RoleDefinition", "EnvFeedback",
                [TriggerSpec(TriggerKind.ENV_FEEDBACK)], NavigationKind.CENTRALIZED_ROUTING, 3),
        "An orchestrator node heads a command chain; sub-tasks carry functional roles and "
        "are routed to matching agents. Anomalous observations trigger re-planning.",
        ("Orch. Hierarchy", "Role Definition", "Env Feedback", "Centralized Routing"),
    ),
    ParadigmEntry(
        "Flash-Searcher",
        _config(TopologyKind.DAG, "DependencyParsing", "PeriodicPruning",
                [TriggerSpec(TriggerKind.PERIODIC, 2), TriggerSpec(TriggerKind.ON_FAILURE_SIGNAL)],
                NavigationKind.CONCURRENT_PATHS, 4),
        "Full dependency DAG parsed in one call; every ready node runs concurrently and "
        "resolved nodes are pruned at fixed step intervals.",
        ("Parallel DAG", "Dependency Parsing", "Workflow Pruning", "Concurrent Paths"),
    ),
    ParadigmEntry(
        "JoyAgent",
        _config(TopologyKind.HIERARCHY, "HybridPlanning", "ConsensusVoting",
                [TriggerSpec(TriggerKind.ON_FAILURE_SIGNAL)], NavigationKind.JOINT_DELIBERATION, 3,
                deliberation_width=DELIBERATION_WIDTH),
        "Supervisor chain with react-style leaves that retry locally; several leaves answer "
        "the final sub-task and the answer is settled by consensus vote.",
        ("Collective Hierarchy", "Hybrid Planning", "Consensus Voting", "Joint Deliberation"),
    ),
    ParadigmEntry(
        "FlowSearch",
        _config(TopologyKind.THOUGHT_GRAPH, "FlowConstruction", "DynamicExpansion",
                [TriggerSpec(TriggerKind.ON_FAILURE_SIGNAL)], NavigationKind.GRAPH_TRAVERSAL, 3,
                max_depth=FLOW_MAX_DEPTH, max_nodes=FLOW_MAX_NODES),
        "Graph grown from the root task by repeatedly asking whether a node needs "
        "decomposition; nodes with the highest readiness run first and a refiner edits the "
        "graph with atomic operations.",
        ("Thought Graph", "Flow Construction", "Dynamic Expansion", "Graph Traversal"),
    ),
    ParadigmEntry(
        "Co-Sight",
        _config(TopologyKind.CROSS_CHECK_NET, "InconsistencyTrigger", "MetaVerification",
                [TriggerSpec(TriggerKind.INCONSISTENCY), TriggerSpec(TriggerKind.ON_FAILURE_SIGNAL)],
                NavigationKind.CONFLICT_RESOLUTION, 2),
        "Two redundant verifiers answer the same question and a resolution node reconciles "
        "them; disagreement triggers meta-verification with an extra arbiter.",
        ("Cross-Check Net", "Inconsistency Trigger", "Meta-Verification", "Conflict Resolution"),
    ),
)

REGISTRY: dict[str, ParadigmEntry] = {e.name: e for e in _ENTRIES}
PARADIGM_NAMES: tuple[str, ...] = tuple(REGISTRY)


def registry_lookup(name: str) -> ParadigmEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise NotFoundError(f"unknown paradigm {name!r}; known: {', '.join(PARADIGM_NAMES)}") from None


def registry_matrix() -> list[dict]:
    """Four-dimension matrix of every paradigm, as plain JSON-ready rows."""
    rows = []
    for e in _ENTRIES:
        c = e.config
        rows.append(
            {
                "name": e.name,
                "topology": c.topology_kind.value,
                "initialization": c.init_strategy.name,
                "adaptation": c.adaptation_strategy,
                "navigation": c.navigation_policy.kind.value,
                "labels": dict(zip(("topology", "initialization", "adaptation", "navigation"), e.table_row)),
                "config": config_to_dict(c),
            }
        )
    return rows


def tool_docs() -> str:
    """Documentation of the planning building blocks, generated from the registry."""
    parts = [
        "# Planning building blocks",
        "A configuration picks one option per dimension:",
        "- topology_kind: " + ", ".join(k.value for k in TopologyKind),
        "- init_strategy.name: " + ", ".join(INIT_STRATEGIES),
        "- adaptation_strategy: " + ", ".join(ADAPTATION_STRATEGIES),
        "- adaptation_triggers[].kind: " + ", ".join(k.value for k in TriggerKind)
        + " (Periodic and CriticLoop need period_n >= 1)",
        "- navigation_policy.kind: " + ", ".join(k.value for k in NavigationKind)
        + " (Sequential requires max_concurrency 1)",
        "- budgets: max_steps, max_total_tokens, max_retries",
        "",
        "# Catalogued systems",
    ]
    for e in _ENTRIES:
        c = e.config
        parts.append(
            f"## {e.name}: {c.topology_kind.value} / {c.init_strategy.name} / "
            f"{c.adaptation_strategy} / {c.navigation_policy.kind.value}"
        )
        parts.append(e.description)
    return "\n".join(parts) + "\n"


def check_configuration(config: PlanConfiguration) -> None:
    report = validate_configuration(config)
    if config.init_strategy.name not in INIT_STRATEGIES:
        report.append(f"unknown init strategy {config.init_strategy.name!r}")
    if config.adaptation_strategy not in ADAPTATION_STRATEGIES:
        report.append(f"unknown adaptation strategy {config.adaptation_strategy!r}")
    if report:
        raise ConfigurationError("; ".join(report))


# --------------------------------------------------------------------------
# initialization

_MARKUP_HELP = (
    "Reply with exactly one fenced ```plan block holding a JSON object: "
    '{"nodes": [{"id", "title", "instruction", "kind", "role"}], "edges": [[from, to], ...]}. '
    "An edge [X, Y] means Y depends on X. Instructions are tool calls such as "
    "lookup(relation, entity) or calc(expression); write {X} to use the result of node X."
)

_MODE_HELP = {
    "decompose": "Analyze the task and list its sub-tasks in execution order. Edges are not needed.",
    "sop": "Decompose the task into sub-tasks joined by prerequisite edges.",
    "roles": "Decompose the task and give every sub-task the role of the agent that should run it.",
    "dag": "Parse the task into a full dependency graph of sub-tasks in one pass.",
    "root": "Emit a single node: the root task whose result answers the query.",
    "expand": "Decide whether the named node needs further decomposition or supplemental "
    "context. Emit its direct prerequisite nodes with edges into it, or an empty node list.",
    "script": "Emit a single node whose instruction solves the whole query, as several "
    "assignments separated by ';' (for example: A = lookup(capital, X); B = lookup(population, {A})).",
}


def _system_prompt(mode: str, config: PlanConfiguration, seed: int, **extra) -> str:
    header = prompt_header(
        mode=mode, topology=config.topology_kind.value, strategy=config.init_strategy.name, seed=seed, **extra
    )
    return header + "You are the planner of a multi-agent system. " + _MODE_HELP[mode] + "\n" + _MARKUP_HELP


class _Ledger:
    def __init__(self) -> None:
        self.tokens_in = 0
        self.tokens_out = 0
        self.calls = 0


def _ask(planner: Planner, system: str, context: str, parse: Callable[[str], T], retries: int, ledger: _Ledger) -> T:
    last: Exception | None = None
    for _ in range(retries + 1):
        completion = planner.complete(system, context)
        ledger.calls += 1
        ledger.tokens_in += completion.tokens_in
        ledger.tokens_out += completion.tokens_out
        try:
            return parse(completion.text)
        except MarkupError as exc:
            last = exc
            context = context + f"\n\nYour previous reply was rejected ({exc}). Reply with exactly one well-formed block."
    raise InitializationError(f"planner markup unusable after {retries + 1} attempts: {last}",
                              ledger.tokens_in, ledger.tokens_out)


def _chain(ids: list[str]) -> list[PlanEdge]:
    return [PlanEdge(a, b) for a, b in zip(ids, ids[1:])]


def _conform(nodes: list[PlanNode], edges: list[PlanEdge], kind: TopologyKind) -> list[PlanEdge]:
    """Fit parsed edges to the topology kind; chain-shaped kinds get a topological chain."""
    if kind not in (TopologyKind.LINEAR, TopologyKind.HIERARCHY):
        return edges
    probe = PlanGraph.build(nodes, edges, TopologyKind.DAG)
    cycle = find_cycle(probe.nodes, probe.edges)
    if cycle:
        raise InitializationError("planner emitted a cyclic plan: " + " -> ".join(cycle))
    return _chain(topological_order(probe))


def _unique_id(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


def _flow_construction(query, config, planner, seed, retries, ledger) -> tuple[list[PlanNode], list[PlanEdge]]:
    params = config.init_strategy.params
    max_depth = int(params.get("max_depth", FLOW_MAX_DEPTH))
    max_nodes = int(params.get("max_nodes", FLOW_MAX_NODES))
    context = QUERY_PREFIX + query
    roots, _ = _ask(planner, _system_prompt("root", config, seed), context, parse_plan_markup, retries, ledger)
    if not roots:
        raise InitializationError("flow construction: planner emitted no root node", ledger.tokens_in, ledger.tokens_out)
    root = roots[0]
    nodes: dict[str, PlanNode] = {root.id: root}
    edges: set[PlanEdge] = set()
    depth = {root.id: 0}
    frontier = [root.id]
    while frontier:
        current = frontier.pop(0)
        if depth[current] >= max_depth or len(nodes) >= max_nodes:
            continue
        system = _system_prompt("expand", config, seed, node=current)
        known = tuple(nodes)
        new_nodes, new_edges = _ask(
            planner, system, context, lambda text: parse_plan_markup(text, known), retries, ledger
        )
        for n in new_nodes:
            if n.id not in nodes and len(nodes) < max_nodes:
                nodes[n.id] = n
                depth[n.id] = depth[current] + 1
                frontier.append(n.id)
        for e in new_edges:
            if e.source in nodes and e.target in nodes:
                edges.add(e)
    return list(nodes.values()), sorted(edges, key=lambda e: e.pair)


def initialize_plan(
    query: str,
    config: PlanConfiguration,
    planner: Planner,
    seed: int = 0,
    parse_retries: int = PARSE_RETRIES,
) -> tuple[PlanGraph, TrajectoryEvent]:
    """Instantiate the plan graph for ``query`` under ``config``'s init strategy.

    Returns the graph (all nodes Pending) and the PlanInit event carrying the
    planner's token usage.
    """
    check_configuration(config)
    strategy = config.init_strategy.name
    kind = config.topology_kind
    context = QUERY_PREFIX + query
    ledger = _Ledger()

    def ask(mode: str):
        return _ask(planner, _system_prompt(mode, config, seed), context, parse_plan_markup, parse_retries, ledger)

    if strategy == "PlannerDecompose":
        nodes, _ = ask("decompose")
        edges = _chain([n.id for n in nodes])
    elif strategy in ("SopConfiguration", "DependencyParsing"):
        nodes, edges = ask("sop" if strategy == "SopConfiguration" else "dag")
        edges = _conform(nodes, edges, kind)
    elif strategy == "RoleDefinition":
        nodes, edges = ask("roles")
        edges = _conform(nodes, edges, kind)
        root_id = _unique_id("root", (n.id for n in nodes))
        has_pred = {e.target for e in edges}
        heads = [n.id for n in nodes if n.id not in has_pred]
        nodes = [PlanNode(root_id, "orchestrator", f"note(route {len(nodes)} sub-tasks)", NodeKind.AGGREGATION,
                          role="planner")] + nodes
        edges = list(edges) + [PlanEdge(root_id, h) for h in heads]
    elif strategy == "HybridPlanning":
        width = int(config.init_strategy.params.get("deliberation_width", DELIBERATION_WIDTH))
        listed, _ = ask("decompose")
        if not listed:
            raise InitializationError("hybrid planning: empty task list", ledger.tokens_in, ledger.tokens_out)
        supervisor, last = listed[:-1], listed[-1]
        taken = {n.id for n in listed}
        leaves = []
        for i in range(1, width + 1):
            leaf_id = _unique_id(f"{last.id}_{i}", taken)
            taken.add(leaf_id)
            leaves.append(replace(last, id=leaf_id, title=f"{last.title} (voter {i})"))
        nodes = supervisor + leaves
        edges = _chain([n.id for n in supervisor])
        if supervisor:
            edges += [PlanEdge(supervisor[-1].id, leaf.id) for leaf in leaves]
    elif strategy == "FlowConstruction":
        nodes, edges = _flow_construction(query, config, planner, seed, parse_retries, ledger)
        edges = _conform(nodes, edges, kind)
    elif strategy == "InconsistencyTrigger":
        solved, _ = ask("script")
        if not solved:
            raise InitializationError("inconsistency trigger: planner emitted no node", ledger.tokens_in, ledger.tokens_out)
        script = solved[0].instruction
        nodes = [
            PlanNode("V1", "verify (first pass)", script, NodeKind.VERIFICATION),
            PlanNode("V2", "verify (second pass)", script, NodeKind.VERIFICATION),
            PlanNode("R", "resolve", "resolve({V1}, {V2})", NodeKind.RESOLUTION),
        ]
        edges = [PlanEdge("V1", "R"), PlanEdge("V2", "R")]
    else:  # guarded by check_configuration
        raise ConfigurationError(f"unknown init strategy {strategy!r}")

    graph = PlanGraph.build(nodes, edges, kind)
    report = validate_graph(graph)
    if report:
        raise InitializationError(
            f"{strategy} produced an invalid {kind.value} graph: " + "; ".join(report),
            ledger.tokens_in, ledger.tokens_out,
        )
    event = TrajectoryEvent(
        step=0,
        kind=EventKind.PLAN_INIT,
        tokens_in=ledger.tokens_in,
        tokens_out=ledger.tokens_out,
        cost_class=CostClass.PLAN,
        detail=f"{strategy}: {len(graph)} nodes, {ledger.calls} planner calls",
    )
    return graph, event


def registry_dump() -> str:
    return dumps(registry_matrix())
