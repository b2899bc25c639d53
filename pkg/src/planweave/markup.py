"""Fenced-block markup that planners emit: plans, revision ops and configurations.

A block is a Markdown fence whose info string names the payload, holding one
JSON object::

    ```plan
    {"nodes": [{"id": "A", "title": "find capital", "instruction": "lookup(capital, France)"},
               {"id": "B", "instruction": "lookup(population, {A})"}],
     "edges": [["A", "B"]]}
    ```

``edges`` entries are ``[from, to]`` pairs (or ``{"from": .., "to": ..}``) and
mean *to depends on from*. Unknown keys are ignored everywhere.

Revision ops use an ``ops`` fence::

    ```ops
    {"ops": [{"op": "add_node", "node": {"id": "E", "instruction": "..."}},
             {"op": "add_edge", "from": "D", "to": "E"},
             {"op": "remove_node", "id": "X"},
             {"op": "remove_edge", "from": "A", "to": "C"},
             {"op": "modify_node", "id": "B", "patch": {"retry": true}}]}
    ```

Configurations use a ``config`` fence carrying the canonical config record.
"""

from __future__ import annotations

import json
import re
from typing import Any, Iterable, Iterator, Mapping

from .core import (
    NodeKind,
    PlanConfiguration,
    PlanEdge,
    PlanGraph,
    PlanNode,
    config_from_dict,
    config_to_dict,
    dumps,
    node_sort_key,
)
from .errors import MarkupError, SchemaError
from .topology import AddEdge, AddNode, AtomicOp, ModifyNode, PATCHABLE_FIELDS, RemoveEdge, RemoveNode

_FENCE = re.compile(r"```([A-Za-z0-9_-]*)[^\n]*\n(.*?)```", re.DOTALL)


def fenced_blocks(text: str) -> Iterator[tuple[str, str]]:
    for m in _FENCE.finditer(text):
        yield m.group(1).lower(), m.group(2)


def _json_blocks(text: str, tags: Iterable[str], key: str) -> Iterator[dict]:
    wanted = set(tags)
    for tag, body in fenced_blocks(text):
        if tag not in wanted:
            continue
        try:
            obj = json.loads(body)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and isinstance(obj.get(key), (list, dict)):
            yield obj


def _edge_pair(raw: Any) -> tuple[str, str]:
    if isinstance(raw, Mapping):
        src, dst = raw.get("from"), raw.get("to")
    elif isinstance(raw, (list, tuple)) and len(raw) == 2:
        src, dst = raw
    else:
        raise MarkupError(f"bad dependency declaration {raw!r}")
    if not isinstance(src, str) or not isinstance(dst, str):
        raise MarkupError(f"bad dependency declaration {raw!r}")
    return src, dst


def _node(raw: Any) -> PlanNode:
    if not isinstance(raw, Mapping) or not isinstance(raw.get("id"), str) or not raw["id"]:
        raise MarkupError(f"bad node declaration {raw!r}")
    kind = raw.get("kind", "Task")
    try:
        kind = NodeKind(kind)
    except ValueError:
        raise MarkupError(f"node {raw['id']}: unknown kind {kind!r}") from None
    role = raw.get("role")
    return PlanNode(
        id=raw["id"],
        title=str(raw.get("title") or raw["id"]),
        instruction=str(raw.get("instruction", "")),
        kind=kind,
        role=role if isinstance(role, str) and role else None,
    )


def parse_plan_markup(text: str, known_ids: Iterable[str] = ()) -> tuple[list[PlanNode], list[PlanEdge]]:
    """Parse the first well-formed ``plan`` block.

    ``known_ids`` lists nodes that already exist elsewhere (an incremental
    expansion may point edges at them without redeclaring them).
    """
    block = next(_json_blocks(text, ("plan", ""), "nodes"), None)
    if block is None:
        raise MarkupError("no fenced plan block found")
    if not isinstance(block["nodes"], list):
        raise MarkupError("plan block: nodes must be a list")
    nodes = [_node(raw) for raw in block["nodes"]]
    declared: set[str] = set()
    for n in nodes:
        if n.id in declared:
            raise MarkupError(f"duplicate node id {n.id}")
        declared.add(n.id)
    visible = declared | set(known_ids)
    edges = []
    for raw in block.get("edges") or block.get("deps") or []:
        src, dst = _edge_pair(raw)
        for end in (src, dst):
            if end not in visible:
                raise MarkupError(f"dependency references undeclared id {end}")
        edges.append(PlanEdge(src, dst))
    return nodes, edges


def render_plan_markup(nodes: Iterable[PlanNode], edges: Iterable[PlanEdge] = ()) -> str:
    payload = {
        "nodes": [
            {k: v for k, v in (("id", n.id), ("title", n.title), ("instruction", n.instruction),
                               ("kind", n.kind.value), ("role", n.role)) if v is not None}
            for n in nodes
        ],
        "edges": [[e.source, e.target] for e in sorted(edges, key=lambda e: (node_sort_key(e.source), node_sort_key(e.target)))],
    }
    return "```plan\n" + dumps(payload) + "\n```"


def graph_markup(graph: PlanGraph) -> str:
    return render_plan_markup([graph.nodes[i] for i in graph.node_ids()], graph.edges)


# ops --------------------------------------------------------------------------


def _op(raw: Any) -> AtomicOp:
    if not isinstance(raw, Mapping):
        raise MarkupError(f"bad op {raw!r}")
    name = raw.get("op")
    if name == "add_node":
        return AddNode(_node(raw.get("node")))
    if name in ("remove_node", "modify_node"):
        node_id = raw.get("id")
        if not isinstance(node_id, str):
            raise MarkupError(f"{name}: missing id")
        if name == "remove_node":
            return RemoveNode(node_id)
        patch = raw.get("patch") or {}
        if not isinstance(patch, Mapping):
            raise MarkupError("modify_node: patch must be an object")
        return ModifyNode(node_id, {k: v for k, v in patch.items() if k in PATCHABLE_FIELDS})
    if name in ("add_edge", "remove_edge"):
        src, dst = _edge_pair(raw)
        edge = PlanEdge(src, dst)
        return AddEdge(edge) if name == "add_edge" else RemoveEdge(edge)
    raise MarkupError(f"unknown op {name!r}")


def parse_ops_markup(text: str) -> list[AtomicOp]:
    block = next(_json_blocks(text, ("ops",), "ops"), None)
    if block is None:
        raise MarkupError("no fenced ops block found")
    if not isinstance(block["ops"], list):
        raise MarkupError("ops block: ops must be a list")
    return [_op(raw) for raw in block["ops"]]


def op_to_dict(op: AtomicOp) -> dict[str, Any]:
    if isinstance(op, AddNode):
        n = op.node
        node = {"id": n.id, "title": n.title, "instruction": n.instruction, "kind": n.kind.value}
        if n.role:
            node["role"] = n.role
        return {"op": "add_node", "node": node}
    if isinstance(op, RemoveNode):
        return {"op": "remove_node", "id": op.node_id}
    if isinstance(op, ModifyNode):
        return {"op": "modify_node", "id": op.node_id, "patch": dict(op.patch)}
    name = "add_edge" if isinstance(op, AddEdge) else "remove_edge"
    return {"op": name, "from": op.edge.source, "to": op.edge.target}


def render_ops_markup(ops: Iterable[AtomicOp]) -> str:
    return "```ops\n" + dumps({"ops": [op_to_dict(o) for o in ops]}) + "\n```"


# configurations ---------------------------------------------------------------


def parse_config_markup(text: str) -> PlanConfiguration:
    for tag, body in fenced_blocks(text):
        if tag != "config":
            continue
        try:
            obj = json.loads(body)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        try:
            return config_from_dict(obj)
        except SchemaError as exc:
            raise MarkupError(f"config block: {exc}") from None
    raise MarkupError("no fenced config block found")


def render_config_markup(config: PlanConfiguration) -> str:
    return "```config\n" + dumps(config_to_dict(config)) + "\n```"
