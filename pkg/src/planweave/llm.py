"""Chat-completions wire client and the LLM-backed planner and agent."""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import httpx

from .agents import NodeOutcome
from .core import AgentSystemSpec, Directive, NodeStatus
from .errors import ConfigurationError, TransportError
from .planners import Completion
from .world import TOOLS, ScriptedWorld, ToolError, UnknownToolError, run_call, tool_descriptions

log = logging.getLogger(__name__)

ENV_BASE_URL = "PF_BASE_URL"
ENV_API_KEY = "PF_API_KEY"
BACKOFF_SECONDS = (1.0, 2.0, 4.0)
TURN_CAP = 6


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Mapping[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def body(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    content: str
    tokens_in: int
    tokens_out: int


class ChatClient:
    """POST {base_url}/chat/completions with bearer auth.

    Transport errors and 5xx responses are retried with exponential backoff;
    other HTTP errors fail immediately.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 120.0,
        backoff: Sequence[float] = BACKOFF_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.backoff = tuple(backoff)
        self._sleep = sleep
        self._http = httpx.Client(transport=transport, timeout=timeout)

    @classmethod
    def from_env(cls, **kw: Any) -> ChatClient:
        base = os.environ.get(ENV_BASE_URL)
        if not base:
            raise ConfigurationError(f"{ENV_BASE_URL} is not set")
        return cls(base, os.environ.get(ENV_API_KEY), **kw)

    def send(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"
        last = ""
        for attempt in range(len(self.backoff) + 1):
            if attempt:
                self._sleep(self.backoff[attempt - 1])
            try:
                resp = self._http.post(url, json=request.body(), headers=headers)
            except httpx.HTTPError as exc:
                last = f"transport error: {exc}"
                log.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("chat request got %s (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return _parse_response(resp)
        raise TransportError(f"chat request failed after {len(self.backoff) + 1} attempts: {last}")

    def close(self) -> None:
        self._http.close()


def _parse_response(resp: httpx.Response) -> ChatResponse:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"] or ""
        usage = data.get("usage") or {}
        return ChatResponse(
            content,
            max(0, int(usage.get("prompt_tokens", 0))),
            max(0, int(usage.get("completion_tokens", 0))),
        )
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat response: {exc}") from None


class ChatPlanner:
    def __init__(self, client: ChatClient, model: str, temperature: float = 0.0, max_tokens: int = 2048) -> None:
        self.client = client
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens

    def complete(self, system: str, context: str) -> Completion:
        req = ChatRequest(
            self.model,
            ({"role": "system", "content": system}, {"role": "user", "content": context}),
            self.temperature,
            self.max_tokens,
        )
        resp = self.client.send(req)
        return Completion(resp.content, resp.tokens_in, resp.tokens_out)


# agent --------------------------------------------------------------------------


_FINAL = re.compile(r"FINAL:\s*(.+)", re.DOTALL)
_CALL_LINE = re.compile(r"^\s*CALL\s+(.+?)\s*$", re.MULTILINE)

AGENT_PROTOCOL = (
    "To use a tool, reply with one line: CALL tool(arguments). You will receive the observation. "
    "When you know the answer to your task, reply with: FINAL: <answer>. Keep answers short."
)


class ChatAgentExecutor:
    """Runs a directive as a short tool-using chat loop, capped at ``turn_cap`` turns."""

    def __init__(
        self,
        client: ChatClient,
        model: str,
        world: ScriptedWorld | None = None,
        agent_spec: AgentSystemSpec | None = None,
        turn_cap: int = TURN_CAP,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ) -> None:
        self.client = client
        self.model = model
        self.world = world or ScriptedWorld()
        self.agent_spec = agent_spec
        self.turn_cap = turn_cap
        self.temperature = temperature
        self.max_tokens = max_tokens

    def _tools_for(self, role: str) -> list[str]:
        if self.agent_spec and self.agent_spec.toolset.get(role):
            return [t for t in self.agent_spec.toolset[role] if t in TOOLS]
        return list(TOOLS)

    def execute(self, directive: Directive, context: str, results: Mapping[str, str]) -> NodeOutcome:
        allowed = self._tools_for(directive.role)
        system = f"You are the {directive.role} agent.\nTools:\n{tool_descriptions(allowed)}\n{AGENT_PROTOCOL}"
        messages: list[dict[str, str]] = [
            {"role": "system", "content": system},
            {"role": "user", "content": f"{context}\n\nYour task: {directive.instruction}"},
        ]
        tokens_in = tokens_out = calls = 0
        for _ in range(self.turn_cap):
            try:
                resp = self.client.send(
                    ChatRequest(self.model, tuple(messages), self.temperature, self.max_tokens)
                )
            except TransportError as exc:
                return NodeOutcome(NodeStatus.FAILED, f"transport: {exc}", tokens_in, tokens_out, anomalous=True, tool_calls=calls)
            tokens_in += resp.tokens_in
            tokens_out += resp.tokens_out
            messages.append({"role": "assistant", "content": resp.content})
            final = _FINAL.search(resp.content)
            call = _CALL_LINE.search(resp.content)
            if call and (not final or call.start() < final.start()):
                calls += 1
                statement = call.group(1)
                name = statement.split("(", 1)[0].strip()
                if name not in allowed:
                    return NodeOutcome(NodeStatus.FAILED, f"tool {name!r} not available to {directive.role}", tokens_in, tokens_out, anomalous=True, tool_calls=calls)
                try:
                    _, observation = run_call(self.world, statement, results)
                    messages.append({"role": "user", "content": f"Observation: {observation}"})
                except UnknownToolError as exc:
                    return NodeOutcome(NodeStatus.FAILED, str(exc), tokens_in, tokens_out, anomalous=True, tool_calls=calls)
                except ToolError as exc:
                    messages.append({"role": "user", "content": f"Error: {exc}"})
                continue
            if final:
                return NodeOutcome(NodeStatus.SUCCEEDED, final.group(1).strip(), tokens_in, tokens_out, tool_calls=calls)
            messages.append({"role": "user", "content": "Reply with a CALL line or a FINAL line."})
        return NodeOutcome(NodeStatus.FAILED, f"turn cap {self.turn_cap} exceeded", tokens_in, tokens_out, anomalous=True, tool_calls=calls)
