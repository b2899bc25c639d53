"""Planner interface plus the deterministic, table-driven planners used offline.

A planner is anything with ``complete(system, context) -> Completion``. Every
prompt built by this package starts with a header block of ``key: value``
lines (``mode``, ``topology``, ...) followed by a blank line, so scripted
planners can answer without understanding prose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence, Union

from .core import NodeKind, PlanEdge, PlanNode, sorted_ids
from .markup import render_ops_markup, render_plan_markup
from .topology import ModifyNode


@dataclass(frozen=True)
class Completion:
    text: str
    tokens_in: int = 0
    tokens_out: int = 0


class Planner(Protocol):
    def complete(self, system: str, context: str) -> Completion: ...


def approx_tokens(text: str) -> int:
    """Synthetic token count for offline components: four characters per token."""
    return math.ceil(len(text) / 4)


def prompt_header(**fields: Any) -> str:
    lines = [f"{k}: {v}" for k, v in fields.items() if v is not None]
    return "\n".join(lines) + "\n\n"


def parse_header(system: str) -> dict[str, str]:
    out = {}
    for line in system.splitlines():
        if not line.strip():
            break
        key, sep, value = line.partition(":")
        if sep:
            out[key.strip()] = value.strip()
    return out


QUERY_PREFIX = "Query: "


def context_query(context: str) -> str:
    first = context.split("\n", 1)[0]
    return first[len(QUERY_PREFIX):] if first.startswith(QUERY_PREFIX) else first


class ScriptedPlanner:
    """Replays canned completions in order (cycling), or delegates to a function."""

    def __init__(self, responses: Union[Sequence[str], Callable[[str, str], str]]) -> None:
        self._responses = responses
        self.calls: list[tuple[str, str]] = []

    def complete(self, system: str, context: str) -> Completion:
        idx = len(self.calls)
        self.calls.append((system, context))
        if callable(self._responses):
            text = self._responses(system, context)
        else:
            text = self._responses[idx % len(self._responses)]
        return Completion(text, approx_tokens(system + context), approx_tokens(text))


# table-driven task planner ----------------------------------------------------


@dataclass(frozen=True)
class RecipeStep:
    id: str
    instruction: str
    deps: tuple[str, ...] = ()
    title: str = ""

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RecipeStep:
        return cls(d["id"], d["instruction"], tuple(d.get("deps", ())), d.get("title", ""))

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "title": self.title, "instruction": self.instruction, "deps": list(self.deps)}


TOOL_ROLES = {"lookup": "searcher", "calc": "analyst", "argmax": "analyst", "argmin": "analyst"}


def _tool_of(instruction: str) -> str:
    return instruction.split("(", 1)[0].strip()


@dataclass(frozen=True)
class Recipe:
    """Known decomposition of one query: steps in dependency order."""

    steps: tuple[RecipeStep, ...]

    @classmethod
    def from_list(cls, raw: Iterable[Mapping[str, Any]]) -> Recipe:
        return cls(tuple(RecipeStep.from_dict(d) for d in raw))

    def to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.steps]

    def step(self, step_id: str) -> RecipeStep:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)

    @property
    def sink(self) -> RecipeStep:
        used = {d for s in self.steps for d in s.deps}
        return [s for s in self.steps if s.id not in used][-1]

    def node(self, step: RecipeStep, with_role: bool = False) -> PlanNode:
        role = TOOL_ROLES.get(_tool_of(step.instruction), "planner") if with_role else None
        return PlanNode(step.id, step.title or step.id, step.instruction, NodeKind.TASK, role=role)

    def edges(self) -> list[PlanEdge]:
        return [PlanEdge(d, s.id) for s in self.steps for d in s.deps]

    def script(self) -> str:
        """Whole recipe as one multi-call instruction."""
        return "; ".join(f"{s.id} = {s.instruction}" for s in self.steps)


class TaskPlanner:
    """Deterministic planner that answers from a table of known recipes.

    Unknown queries get a one-node plan whose instruction is the query itself,
    which is how single tool-call queries run offline.
    """

    def __init__(self, recipes: Mapping[str, Recipe] | None = None) -> None:
        self.recipes = dict(recipes or {})
        self.calls = 0

    def recipe_for(self, query: str) -> Recipe:
        recipe = self.recipes.get(query)
        if recipe is None:
            recipe = Recipe((RecipeStep("A", query, (), "answer"),))
        return recipe

    def respond(self, system: str, context: str) -> str:
        header = parse_header(system)
        mode = header.get("mode", "dag")
        recipe = self.recipe_for(header.get("query") or context_query(context))
        if mode == "decompose":
            return render_plan_markup([recipe.node(s) for s in recipe.steps])
        if mode in ("dag", "sop"):
            return render_plan_markup([recipe.node(s) for s in recipe.steps], recipe.edges())
        if mode == "roles":
            return render_plan_markup([recipe.node(s, True) for s in recipe.steps], recipe.edges())
        if mode == "root":
            return render_plan_markup([recipe.node(recipe.sink)])
        if mode == "expand":
            target = recipe.step(header["node"])
            children = [recipe.step(d) for d in target.deps]
            edges = [PlanEdge(c.id, target.id) for c in children]
            return render_plan_markup([recipe.node(c) for c in children], edges)
        if mode == "script":
            return render_plan_markup([PlanNode("S", "solve", recipe.script())])
        if mode == "revise":
            failed = [f for f in header.get("failed", "").split(",") if f.strip()]
            return render_ops_markup([ModifyNode(f.strip(), {"retry": True}) for f in sorted_ids(failed)])
        return "no plan"

    def complete(self, system: str, context: str) -> Completion:
        self.calls += 1
        text = self.respond(system, context)
        return Completion(text, approx_tokens(system + context), approx_tokens(text))
