"""Bundled offline task suite: fictional-country facts and 50 tasks with known decompositions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .datapipe import TaskSpec
from .errors import SchemaError
from .planners import Recipe, TaskPlanner
from .world import ScriptedWorld, load_world

DATA = resources.files("planweave") / "data"


@dataclass(frozen=True)
class SuiteTask:
    id: str
    query: str
    gold: str | None
    recipe: Recipe | None = None

    def spec(self) -> TaskSpec:
        return TaskSpec(self.id, self.query, self.gold)


def _task(rec: Mapping[str, Any], where: str) -> SuiteTask:
    for key in ("id", "query"):
        if not isinstance(rec.get(key), str):
            raise SchemaError(f"{where}.{key}", "missing or not a string")
    gold = rec.get("gold")
    if gold is not None and not isinstance(gold, (str, int, float)):
        raise SchemaError(f"{where}.gold", "not a scalar")
    recipe = rec.get("recipe")
    if recipe is not None and not isinstance(recipe, list):
        raise SchemaError(f"{where}.recipe", "not a list")
    return SuiteTask(rec["id"], rec["query"], None if gold is None else str(gold), Recipe.from_list(recipe) if recipe else None)


def parse_tasks(text: str, source: str = "tasks") -> list[SuiteTask]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{source}:{lineno}", f"not JSON: {exc}") from None
        if not isinstance(rec, dict):
            raise SchemaError(f"{source}:{lineno}", "expected object")
        out.append(_task(rec, f"{source}:{lineno}"))
    return out


def load_tasks(path: str | Path) -> list[SuiteTask]:
    return parse_tasks(Path(path).read_text(encoding="utf-8"), str(path))


def bundled_tasks() -> list[SuiteTask]:
    return parse_tasks((DATA / "suite.jsonl").read_text(encoding="utf-8"), "suite.jsonl")


def bundled_world() -> ScriptedWorld:
    with resources.as_file(DATA / "world.jsonl") as path:
        return load_world(path)


def task_planner(tasks: Iterable[SuiteTask]) -> TaskPlanner:
    return TaskPlanner({t.query: t.recipe for t in tasks if t.recipe is not None})
