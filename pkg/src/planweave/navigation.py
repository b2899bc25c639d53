"""Directive issuance: which ready nodes run next, and under which role."""

from __future__ import annotations

import zlib
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from .core import (
    Directive,
    NavigationKind,
    NavigationPolicy,
    NodeId,
    NodeKind,
    NodeStatus,
    PlanGraph,
    PlanNode,
    node_sort_key,
    sorted_ids,
)
from .errors import RoleResolutionError
from .normalize import normalize_answer
from .topology import ready_set, remaining_depth

__all__ = [
    "NavigationPolicy",
    "VoteBallot",
    "assign_role",
    "next_directives",
    "readiness_score",
    "vote",
]

VERIFIER_ROLE = "verifier"


def assign_role(node: PlanNode, roster: Sequence[str]) -> str:
    """Resolve the agent role for ``node``.

    Unassigned nodes are hashed onto the sorted roster, so reordering the
    roster never changes who gets what.
    """
    if not roster:
        raise RoleResolutionError("roster is empty")
    if node.role is not None:
        if node.role not in roster:
            raise RoleResolutionError(f"node {node.id}: role {node.role!r} not in roster")
        return node.role
    if node.kind is NodeKind.VERIFICATION and VERIFIER_ROLE in roster:
        return VERIFIER_ROLE
    ordered = sorted(set(roster))
    return ordered[zlib.crc32(node.id.encode("utf-8")) % len(ordered)]


def readiness_score(graph: PlanGraph, node_id: NodeId, depth: dict[NodeId, int] | None = None) -> tuple:
    """(satisfied predecessors, -remaining depth); larger runs first."""
    if depth is None:
        depth = remaining_depth(graph)
    satisfied = sum(1 for p in graph.predecessors(node_id) if graph.nodes[p].status is NodeStatus.SUCCEEDED)
    return (satisfied, -depth[node_id])


def _speculative(graph: PlanGraph, ready: Sequence[NodeId]) -> list[NodeId]:
    """Pending nodes whose every unmet predecessor carries the auxiliary-validated flag."""
    taken = set(ready)
    out = []
    for node_id in graph.pending():
        if node_id in taken:
            continue
        unmet = [p for p in graph.predecessors(node_id) if graph.nodes[p].status is not NodeStatus.SUCCEEDED]
        if unmet and all(graph.nodes[p].aux_validated for p in unmet):
            out.append(node_id)
    return out


def next_directives(
    graph: PlanGraph, policy: NavigationPolicy, roster: Sequence[str], step: int
) -> list[Directive]:
    ready = ready_set(graph)
    cap = policy.max_concurrency
    kind = policy.kind
    if kind is NavigationKind.SEQUENTIAL:
        chosen = ready[:1]
    elif kind is NavigationKind.CONCURRENT_PATHS:
        chosen = sorted_ids(ready + _speculative(graph, ready))[:cap]
    elif kind is NavigationKind.GRAPH_TRAVERSAL:
        depth = remaining_depth(graph)
        # score descending, id ascending on ties
        ranked = sorted(ready, key=node_sort_key)
        ranked.sort(key=lambda i: readiness_score(graph, i, depth), reverse=True)
        chosen = ranked[:cap]
    else:
        chosen = ready[:cap]

    out = []
    for node_id in chosen:
        node = graph.nodes[node_id]
        if kind is NavigationKind.CENTRALIZED_ROUTING:
            role = assign_role(node, roster)
        else:
            role = node.role or (roster[0] if roster else "worker")
        out.append(Directive(node_id, node.instruction, role, step))
    return out


@dataclass(frozen=True)
class VoteBallot:
    candidates: tuple[tuple[NodeId, str], ...]


def vote(ballot: VoteBallot | Sequence[tuple[NodeId, str]]) -> str:
    """Most common normalized answer; ties go to the answer backed by the smallest node id."""
    candidates = ballot.candidates if isinstance(ballot, VoteBallot) else tuple(ballot)
    if not candidates:
        raise ValueError("empty ballot")
    support: dict[str, list[NodeId]] = defaultdict(list)
    for source, text in candidates:
        support[normalize_answer(text)].append(source)
    return min(
        support,
        key=lambda a: (-len(support[a]), min(node_sort_key(s) for s in support[a])),
    )
