"""Answer judging: exact match after normalization, or one LLM call with a fixed rubric."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .errors import TransportError, VerdictError
from .llm import ChatClient, ChatRequest
from .normalize import answers_match, normalize_answer


class JudgeMode(str, Enum):
    EXACT = "ExactNormalized"
    LLM = "LlmJudge"


@dataclass(frozen=True)
class JudgeVerdict:
    success: bool
    normalized_answer: str
    rationale: str
    tokens_in: int = 0
    tokens_out: int = 0


RUBRIC = (
    "You grade answers to questions. Compare the candidate answer with the reference answer. "
    "The candidate is correct if it states the same fact or value as the reference; ignore "
    "formatting, casing and harmless extra words. Reply with a JSON object "
    '{"success": true|false, "rationale": "<one sentence>"} and nothing else.'
)

_BOOL = re.compile(r'"success"\s*:\s*(true|false)', re.IGNORECASE)


def _parse_llm_verdict(text: str) -> tuple[bool, str]:
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if match:
        try:
            data = json.loads(match.group(0))
            if isinstance(data.get("success"), bool):
                return data["success"], str(data.get("rationale", ""))
        except json.JSONDecodeError:
            pass
    m = _BOOL.search(text)
    if m:
        return m.group(1).lower() == "true", text.strip()
    word = text.strip().lower()
    if word.startswith("yes") or word.startswith("correct"):
        return True, text.strip()
    if word.startswith("no") or word.startswith("incorrect"):
        return False, text.strip()
    raise VerdictError(f"unparseable judge reply: {text[:120]!r}")


def judge(
    answer: str | None,
    gold: str,
    mode: JudgeMode | str = JudgeMode.EXACT,
    client: ChatClient | None = None,
    model: str = "",
) -> JudgeVerdict:
    mode = JudgeMode(mode)
    normalized = normalize_answer(answer)
    if mode is JudgeMode.EXACT:
        ok = answer is not None and answers_match(answer, gold)
        why = "normalized match" if ok else f"{normalized!r} != {normalize_answer(gold)!r}"
        return JudgeVerdict(ok, normalized, why)
    if client is None:
        raise VerdictError("LlmJudge needs a chat client")
    request = ChatRequest(
        model,
        (
            {"role": "system", "content": RUBRIC},
            {"role": "user", "content": f"Reference answer: {gold}\nCandidate answer: {answer or ''}"},
        ),
        0.0,
        256,
    )
    try:
        resp = client.send(request)
    except TransportError as exc:
        raise VerdictError(f"judge transport failure: {exc}") from exc
    ok, why = _parse_llm_verdict(resp.content)
    return JudgeVerdict(ok, normalized, why, resp.tokens_in, resp.tokens_out)
