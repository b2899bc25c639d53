"""Graph algorithms over PlanGraph: readiness, batch revisions, pruning, ordering."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence, Union

from .core import (
    NodeId,
    NodeStatus,
    PlanEdge,
    PlanGraph,
    PlanNode,
    find_cycle,
    node_sort_key,
    sorted_ids,
    validate_graph,
)
from .errors import CycleError, DanglingReferenceError, GraphValidationError, RevisionRejected


@dataclass(frozen=True)
class AddNode:
    node: PlanNode


@dataclass(frozen=True)
class RemoveNode:
    node_id: NodeId


@dataclass(frozen=True)
class AddEdge:
    edge: PlanEdge


@dataclass(frozen=True)
class RemoveEdge:
    edge: PlanEdge


PATCHABLE_FIELDS = frozenset({"title", "instruction", "kind", "role", "retry", "aux_validated", "notes"})


@dataclass(frozen=True)
class ModifyNode:
    node_id: NodeId
    patch: Mapping[str, Any] = field(default_factory=dict)


AtomicOp = Union[AddNode, RemoveNode, AddEdge, RemoveEdge, ModifyNode]


def op_nodes(op: AtomicOp) -> set[NodeId]:
    """Node ids an op mentions."""
    if isinstance(op, AddNode):
        return {op.node.id}
    if isinstance(op, (RemoveNode, ModifyNode)):
        return {op.node_id}
    return {op.edge.source, op.edge.target}


def _require_valid(graph: PlanGraph) -> None:
    report = validate_graph(graph)
    if report:
        raise GraphValidationError(report)


def ready_set(graph: PlanGraph) -> list[NodeId]:
    """Pending nodes whose predecessors all Succeeded, in id order."""
    _require_valid(graph)
    preds: dict[NodeId, list[NodeId]] = {i: [] for i in graph.nodes}
    for e in graph.edges:
        preds[e.target].append(e.source)
    out = []
    for node_id in graph.node_ids():
        if graph.nodes[node_id].status is not NodeStatus.PENDING:
            continue
        if all(graph.nodes[p].status is NodeStatus.SUCCEEDED for p in preds[node_id]):
            out.append(node_id)
    return out


def apply_atomic_ops(graph: PlanGraph, ops: Sequence[AtomicOp]) -> PlanGraph:
    """Apply ``ops`` as one all-or-nothing revision batch.

    An empty batch returns the graph untouched. Any failure raises and leaves
    the caller's graph as it was (graphs are immutable, so nothing leaks).
    """
    if not ops:
        return graph
    nodes = dict(graph.nodes)
    edges = set(graph.edges)
    for op in ops:
        if isinstance(op, AddNode):
            if op.node.id in nodes:
                raise RevisionRejected(f"AddNode: {op.node.id} already exists")
            nodes[op.node.id] = op.node
        elif isinstance(op, RemoveNode):
            node = nodes.get(op.node_id)
            if node is None:
                raise DanglingReferenceError(f"RemoveNode: unknown node {op.node_id}")
            if node.status is NodeStatus.DISPATCHED:
                raise RevisionRejected(f"RemoveNode: {op.node_id} is in flight")
            del nodes[op.node_id]
            edges = {e for e in edges if op.node_id not in (e.source, e.target)}
        elif isinstance(op, AddEdge):
            for end in (op.edge.source, op.edge.target):
                if end not in nodes:
                    raise DanglingReferenceError(
                        f"AddEdge {op.edge.source}->{op.edge.target}: unknown node {end}"
                    )
            if op.edge.source == op.edge.target:
                raise RevisionRejected(f"AddEdge: self-loop at {op.edge.source}", [op.edge.source] * 2)
            edges.add(op.edge)
        elif isinstance(op, RemoveEdge):
            if op.edge not in edges:
                raise DanglingReferenceError(f"RemoveEdge: no edge {op.edge.source}->{op.edge.target}")
            edges.discard(op.edge)
        elif isinstance(op, ModifyNode):
            node = nodes.get(op.node_id)
            if node is None:
                raise DanglingReferenceError(f"ModifyNode: unknown node {op.node_id}")
            bad = sorted(set(op.patch) - PATCHABLE_FIELDS)
            if bad:
                raise RevisionRejected(f"ModifyNode {op.node_id}: fields not patchable: {', '.join(bad)}")
            patch = dict(op.patch)
            if "notes" in patch:
                patch["notes"] = tuple(patch["notes"])
            if "kind" in patch:
                patch["kind"] = type(node.kind)(patch["kind"])
            nodes[op.node_id] = replace(node, **patch)
        else:
            raise TypeError(f"not an atomic op: {op!r}")

    cycle = find_cycle(nodes, edges)
    if cycle:
        raise RevisionRejected("revision creates cycle: " + " -> ".join(cycle), cycle)
    candidate = replace(graph, nodes=nodes, edges=frozenset(edges), revision_count=graph.revision_count + 1)
    report = validate_graph(candidate)
    if report:
        raise RevisionRejected("revision violates topology: " + "; ".join(report))
    return candidate


def prune_completed(graph: PlanGraph) -> PlanGraph:
    """Retire resolved work and rewire dependencies around it.

    A node is pruned when it Succeeded, all of its predecessors Succeeded, and
    none of its successors is in flight. Pruned nodes keep their record but
    lose their edges; each remaining pair linked only through pruned nodes gets
    a direct (rewired) edge, and pruned results are copied into the notes of
    the nearest remaining descendants.
    """
    status = {i: n.status for i, n in graph.nodes.items()}
    preds: dict[NodeId, set[NodeId]] = {i: set() for i in graph.nodes}
    succs: dict[NodeId, set[NodeId]] = {i: set() for i in graph.nodes}
    for e in graph.edges:
        preds[e.target].add(e.source)
        succs[e.source].add(e.target)

    doomed = {
        i
        for i in graph.nodes
        if status[i] is NodeStatus.SUCCEEDED
        and all(status[p] is NodeStatus.SUCCEEDED for p in preds[i])
        and all(status[s] is not NodeStatus.DISPATCHED for s in succs[i])
    }
    if not doomed:
        return graph

    def exits(start: NodeId) -> set[NodeId]:
        """Remaining nodes reachable from ``start`` through pruned nodes only."""
        found: set[NodeId] = set()
        stack = list(succs[start])
        seen: set[NodeId] = set()
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            if v in doomed:
                stack.extend(succs[v])
            else:
                found.add(v)
        return found

    keep = {e for e in graph.edges if e.source not in doomed and e.target not in doomed}
    new_edges = set(keep)
    for u in graph.nodes:
        if u in doomed:
            continue
        for mid in succs[u] & doomed:
            for v in exits(mid):
                if v != u and not any(e.source == u and e.target == v for e in new_edges):
                    new_edges.add(PlanEdge(u, v, rewired=True))

    notes: dict[NodeId, list[str]] = {}
    for p in sorted_ids(doomed):
        node = graph.nodes[p]
        if node.result is None:
            continue
        for v in sorted_ids(exits(p)):
            notes.setdefault(v, []).append(f"[{p}] {node.result}")

    nodes = dict(graph.nodes)
    for p in doomed:
        nodes[p] = nodes[p].transition(NodeStatus.PRUNED)
    for v, extra in notes.items():
        nodes[v] = replace(nodes[v], notes=nodes[v].notes + tuple(extra))
    return replace(graph, nodes=nodes, edges=frozenset(new_edges))


def topological_order(graph: PlanGraph) -> list[NodeId]:
    """Lexicographically smallest topological order (by node id)."""
    cycle = find_cycle(graph.nodes, graph.edges)
    if cycle:
        raise CycleError(cycle)
    indeg = {i: 0 for i in graph.nodes}
    succs: dict[NodeId, list[NodeId]] = {i: [] for i in graph.nodes}
    for e in graph.edges:
        indeg[e.target] += 1
        succs[e.source].append(e.target)
    heap = [(node_sort_key(i), i) for i, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, u = heapq.heappop(heap)
        order.append(u)
        for v in succs[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, (node_sort_key(v), v))
    return order


def remaining_depth(graph: PlanGraph) -> dict[NodeId, int]:
    """Longest edge count from each node to any sink."""
    depth: dict[NodeId, int] = {}
    succs: dict[NodeId, list[NodeId]] = {i: [] for i in graph.nodes}
    for e in graph.edges:
        succs[e.source].append(e.target)
    for u in reversed(topological_order(graph)):
        depth[u] = max((depth[v] + 1 for v in succs[u]), default=0)
    return depth


def sinks(graph: PlanGraph, statuses: Iterable[NodeStatus] | None = None) -> list[NodeId]:
    wanted = set(statuses) if statuses is not None else None
    has_out = {e.source for e in graph.edges}
    return [
        i
        for i in graph.node_ids()
        if i not in has_out
        and graph.nodes[i].status is not NodeStatus.PRUNED
        and (wanted is None or graph.nodes[i].status in wanted)
    ]


# --------------------------------------------------------------------------
# DOT export

_STATUS_STYLE = {
    NodeStatus.PENDING: 'color="gray40"',
    NodeStatus.DISPATCHED: 'color="orange", style="bold"',
    NodeStatus.SUCCEEDED: 'color="darkgreen"',
    NodeStatus.FAILED: 'color="red", style="bold"',
    NodeStatus.PRUNED: 'color="gray70", style="dotted"',
}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def to_dot(graph: PlanGraph, name: str = "plan") -> str:
    """Render as Graphviz DOT. Rewired edges are dashed."""
    lines = [f"digraph {name} {{"]
    for node_id in graph.node_ids():
        node = graph.nodes[node_id]
        label = _quote(node.title or node_id)[:-1] + f'\\n[{node.status.value}]"'
        lines.append(f"  {_quote(node_id)} [label={label}, shape=box, {_STATUS_STYLE[node.status]}];")
    for e in sorted(graph.edges, key=lambda e: (node_sort_key(e.source), node_sort_key(e.target))):
        style = ' [style="dashed"]' if e.rewired else ""
        lines.append(f"  {_quote(e.source)} -> {_quote(e.target)}{style};")
    lines.append("}")
    return "\n".join(lines) + "\n"
