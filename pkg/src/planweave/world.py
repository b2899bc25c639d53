"""Desk-scale scripted environment: a fact store, a few tools, scheduled failures.

Node instructions are tool calls, optionally several separated by ``;`` with
assignments::

    lookup(capital, France)
    A = lookup(capital, France); B = lookup(population, {A}); calc({B} * 2)

``{X}`` is replaced by the local variable ``X`` or, failing that, the result
of plan node ``X``. The value of the last statement is the node's output.
"""

from __future__ import annotations

import ast
import json
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import SchemaError
from .normalize import normalize_answer


class ToolError(Exception):
    """A tool call failed; the node fails with this message."""


class UnknownToolError(ToolError):
    pass


@dataclass(frozen=True)
class Fact:
    entity: str
    relation: str
    value: str


@dataclass(frozen=True)
class ToolContract:
    name: str
    signature: str
    description: str
    fn: Callable[["ScriptedWorld", str], str]


@dataclass
class ScriptedWorld:
    facts: dict[tuple[str, str], str] = field(default_factory=dict)
    # (step, node_id) pairs that fail regardless of the instruction
    failure_plan: frozenset[tuple[int, str]] = frozenset()

    @classmethod
    def from_facts(cls, facts: Iterable[Fact], failure_plan: Iterable[tuple[int, str]] = ()) -> ScriptedWorld:
        return cls({(f.entity, f.relation): f.value for f in facts}, frozenset(failure_plan))

    def lookup(self, relation: str, entity: str) -> str:
        key = (entity.strip(), relation.strip())
        if key in self.facts:
            return self.facts[key]
        folded = (key[0].lower(), key[1].lower())
        for (e, r), v in self.facts.items():
            if (e.lower(), r.lower()) == folded:
                return v
        raise ToolError(f"no fact for ({entity.strip()}, {relation.strip()})")

    def forced_failure(self, step: int, node_id: str) -> bool:
        return (step, node_id) in self.failure_plan

    def with_failures(self, failure_plan: Iterable[tuple[int, str]]) -> ScriptedWorld:
        return ScriptedWorld(self.facts, frozenset(failure_plan))

    def fact_list(self) -> list[Fact]:
        return [Fact(e, r, v) for (e, r), v in sorted(self.facts.items())]


# file formats -------------------------------------------------------------------


def _jsonl(path: Path) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}", f"not JSON: {exc}") from None
        if not isinstance(rec, dict):
            raise SchemaError(f"{path}:{lineno}", "expected object")
        out.append(rec)
    return out


def load_facts(path: str | Path) -> list[Fact]:
    facts = []
    for i, rec in enumerate(_jsonl(Path(path))):
        for key in ("entity", "relation", "value"):
            if not isinstance(rec.get(key), (str, int, float)) or isinstance(rec.get(key), bool):
                raise SchemaError(f"line {i + 1}.{key}", "missing or not a scalar")
        facts.append(Fact(str(rec["entity"]), str(rec["relation"]), str(rec["value"])))
    return facts


def load_failure_plan(path: str | Path) -> list[tuple[int, str]]:
    plan = []
    for i, rec in enumerate(_jsonl(Path(path))):
        if not isinstance(rec.get("step"), int) or isinstance(rec.get("step"), bool):
            raise SchemaError(f"line {i + 1}.step", "missing or not an integer")
        if not isinstance(rec.get("node_id"), str):
            raise SchemaError(f"line {i + 1}.node_id", "missing or not a string")
        plan.append((rec["step"], rec["node_id"]))
    return plan


def load_world(facts_path: str | Path, failure_path: str | Path | None = None) -> ScriptedWorld:
    failures = load_failure_plan(failure_path) if failure_path else ()
    return ScriptedWorld.from_facts(load_facts(facts_path), failures)


def dump_facts(facts: Iterable[Fact]) -> str:
    return "".join(
        json.dumps({"entity": f.entity, "relation": f.relation, "value": f.value}, sort_keys=True) + "\n"
        for f in facts
    )


# tools ------------------------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"abs": abs, "min": min, "max": max, "round": round}


def _eval(node: ast.AST):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        left, right = _eval(node.left), _eval(node.right)
        if isinstance(node.op, ast.Pow) and abs(right) > 64:
            raise ToolError("exponent too large")
        return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval(node.operand))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        return _FUNCS[node.func.id](*(_eval(a) for a in node.args))
    raise ToolError(f"unsupported expression element {type(node).__name__}")


def format_number(value: float | int) -> str:
    if isinstance(value, int):
        return str(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return format(value, ".12g")


def calc(expression: str) -> str:
    try:
        tree = ast.parse(expression.replace(",", "").strip(), mode="eval")
    except SyntaxError:
        raise ToolError(f"cannot parse expression {expression!r}") from None
    try:
        return format_number(_eval(tree))
    except ZeroDivisionError:
        raise ToolError("division by zero") from None


def split_args(text: str) -> list[str]:
    """Split on top-level commas."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or out:
        out.append(tail)
    return out


def _pick(args: str, best: Callable) -> str:
    pairs = []
    for item in split_args(args):
        label, sep, value = item.partition("=")
        if not sep:
            raise ToolError(f"expected label=value, got {item!r}")
        try:
            pairs.append((label.strip(), float(value.replace(",", ""))))
        except ValueError:
            raise ToolError(f"value for {label.strip()} is not a number: {value.strip()!r}") from None
    if not pairs:
        raise ToolError("no candidates")
    return best(pairs, key=lambda p: p[1])[0]


def _lookup(world: ScriptedWorld, args: str) -> str:
    parts = split_args(args)
    if len(parts) != 2:
        raise ToolError(f"lookup takes (relation, entity), got {len(parts)} arguments")
    return world.lookup(parts[0], parts[1])


def _resolve(world: ScriptedWorld, args: str) -> str:
    values = split_args(args)
    if not values:
        raise ToolError("resolve needs candidates")
    counts: dict[str, list[str]] = {}
    for v in values:
        counts.setdefault(normalize_answer(v), []).append(v)
    support = max(counts.values(), key=len)
    if len(support) * 2 <= len(values):
        raise ToolError(f"conflict: no majority among {values}")
    return support[0]


TOOLS: dict[str, ToolContract] = {
    t.name: t
    for t in (
        ToolContract("lookup", "lookup(relation, entity)", "Fetch the value of a relation for an entity from the fact store.", _lookup),
        ToolContract("calc", "calc(expression)", "Evaluate an arithmetic expression (+ - * / // % ** abs min max round).", lambda w, a: calc(a)),
        ToolContract("argmax", "argmax(label=value, ...)", "Return the label with the largest numeric value.", lambda w, a: _pick(a, max)),
        ToolContract("argmin", "argmin(label=value, ...)", "Return the label with the smallest numeric value.", lambda w, a: _pick(a, min)),
        ToolContract("note", "note(text)", "Record a note; returns the text.", lambda w, a: a.strip()),
        ToolContract("answer", "answer(text)", "Declare an answer; returns the text.", lambda w, a: a.strip()),
        ToolContract("resolve", "resolve(a, b, ...)", "Return the majority value among candidates; fails on conflict.", _resolve),
    )
}


def tool_descriptions(names: Iterable[str] | None = None) -> str:
    chosen = [TOOLS[n] for n in names] if names is not None else list(TOOLS.values())
    return "\n".join(f"- {t.signature}: {t.description}" for t in chosen)


_CALL = re.compile(r"^\s*(?:([A-Za-z_][\w.-]*)\s*=\s*)?([A-Za-z_]\w*)\s*\((.*)\)\s*$", re.DOTALL)
_REF = re.compile(r"\{([A-Za-z0-9_.-]+)\}")


def split_statements(instruction: str) -> list[str]:
    out, depth, cur = [], 0, []
    for ch in instruction:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == ";" and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [s.strip() for s in out if s.strip()]


def substitute(text: str, scope: Mapping[str, str]) -> str:
    def repl(m: re.Match) -> str:
        key = m.group(1)
        if key not in scope:
            raise ToolError(f"unresolved reference {{{key}}}")
        return scope[key]

    return _REF.sub(repl, text)


def run_call(world: ScriptedWorld, statement: str, scope: Mapping[str, str]) -> tuple[str | None, str]:
    """Run one ``[NAME =] tool(args)`` statement; returns (assigned name, output)."""
    m = _CALL.match(statement)
    if not m:
        raise UnknownToolError(f"not a tool call: {statement[:80]!r}")
    target, tool_name, raw_args = m.groups()
    tool = TOOLS.get(tool_name)
    if tool is None:
        raise UnknownToolError(f"unknown tool {tool_name!r}")
    return target, tool.fn(world, substitute(raw_args, scope))


def run_instruction(world: ScriptedWorld, instruction: str, results: Mapping[str, str]) -> str:
    statements = split_statements(instruction)
    if not statements:
        raise ToolError("empty instruction")
    local: dict[str, str] = {}
    output = ""
    for stmt in statements:
        target, output = run_call(world, stmt, {**results, **local})
        if target:
            local[target] = output
    return output
