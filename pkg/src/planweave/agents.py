"""Executor contract and the deterministic scripted executor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol

from .core import Directive, NodeStatus
from .planners import approx_tokens
from .world import ScriptedWorld, ToolError, run_instruction


@dataclass(frozen=True)
class NodeOutcome:
    status: NodeStatus
    output: str
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: float = 0.0
    anomalous: bool = False
    tool_calls: int = 0

    @property
    def succeeded(self) -> bool:
        return self.status is NodeStatus.SUCCEEDED


class Executor(Protocol):
    """Runs one directive. Must be safe to call from several threads at once."""

    def execute(self, directive: Directive, context: str, results: Mapping[str, str]) -> NodeOutcome: ...


class ScriptedExecutor:
    """Interprets node instructions as tool calls against a ScriptedWorld.

    Token use is synthetic: the agent reads context plus instruction and
    writes its output, each at four characters per token.
    """

    def __init__(self, world: ScriptedWorld) -> None:
        self.world = world

    def execute(self, directive: Directive, context: str, results: Mapping[str, str]) -> NodeOutcome:
        tokens_in = approx_tokens(context) + approx_tokens(directive.instruction)
        if self.world.forced_failure(directive.issued_at_step, directive.node):
            msg = f"forced failure at step {directive.issued_at_step}"
            return NodeOutcome(NodeStatus.FAILED, msg, tokens_in, approx_tokens(msg), anomalous=True)
        try:
            output = run_instruction(self.world, directive.instruction, results)
        except ToolError as exc:
            return NodeOutcome(NodeStatus.FAILED, str(exc), tokens_in, approx_tokens(str(exc)), anomalous=True, tool_calls=1)
        return NodeOutcome(NodeStatus.SUCCEEDED, output, tokens_in, approx_tokens(output), tool_calls=1)
