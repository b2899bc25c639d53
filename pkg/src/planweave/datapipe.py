"""Bootstrap-and-filter corpus builder.

For each task: build a meta-context (query, building-block docs, three
reference configurations), sample K candidate configurations from a meta
planner, execute each one, keep the successes as SFT targets and turn the
candidate set into impedance-contrastive preference pairs.
"""

from __future__ import annotations

import json
import logging
import random
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

from .core import (
    CostClass,
    EventKind,
    PlanConfiguration,
    Trajectory,
    TrajectoryEvent,
    config_from_dict,
    config_to_dict,
    dumps,
)
from .engine import Backend, EpisodeParams, default_agent_spec, run_episode_detailed
from .errors import ConfigurationError, DataError, MarkupError, PlanweaveError, SchemaError, StateError, SynthesisError, TransportError
from .impedance import ImpedanceBreakdown, ImpedanceParams, impedance
from .markup import graph_markup, parse_config_markup, render_config_markup
from .paradigms import REGISTRY, check_configuration, tool_docs
from .planners import QUERY_PREFIX, Completion, Planner, approx_tokens, parse_header, prompt_header

log = logging.getLogger(__name__)

N_REFERENCES = 3
DEFAULT_K = 4
DEFAULT_RELATIVE_DELTA = 0.1

DEFAULT_SYSTEM_PROMPT = (
    "You design planning configurations for a multi-agent system. Study the building blocks "
    "and the reference configurations, then propose one configuration for the query, "
    "combining or modifying the references as you see fit. Reply with one fenced ```config block."
)


@dataclass(frozen=True)
class PromptPack:
    system_prompt: str = DEFAULT_SYSTEM_PROMPT


@dataclass(frozen=True)
class ReferenceExemplar:
    name: str
    config: PlanConfiguration
    description: str

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "config": config_to_dict(self.config), "description": self.description}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ReferenceExemplar:
        return cls(str(d["name"]), config_from_dict(d["config"]), str(d["description"]))


def registry_pool() -> list[ReferenceExemplar]:
    return [ReferenceExemplar(e.name, e.config, e.description) for e in REGISTRY.values()]


@dataclass(frozen=True)
class MetaContext:
    query: str
    system_prompt: str
    tool_docs: str
    references: tuple[ReferenceExemplar, ...]
    seed: int

    def __post_init__(self) -> None:
        if len(self.references) != N_REFERENCES:
            raise ConfigurationError(f"a meta-context needs exactly {N_REFERENCES} references")

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "system_prompt": self.system_prompt,
            "tool_docs": self.tool_docs,
            "references": [r.to_dict() for r in self.references],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> MetaContext:
        try:
            return cls(
                str(d["query"]), str(d["system_prompt"]), str(d["tool_docs"]),
                tuple(ReferenceExemplar.from_dict(r) for r in d["references"]), int(d["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError("context", f"malformed: {exc}") from None

    def user_prompt(self) -> str:
        refs = "\n\n".join(
            f"### Reference {i + 1}: {r.name}\n{r.description}\n{render_config_markup(r.config)}"
            for i, r in enumerate(self.references)
        )
        return f"{QUERY_PREFIX}{self.query}\n\n{self.tool_docs}\n# References\n\n{refs}\n"


def build_context(
    query: str,
    prompt_pack: PromptPack = PromptPack(),
    reference_pool: Sequence[ReferenceExemplar] | None = None,
    seed: int = 0,
) -> MetaContext:
    pool = list(reference_pool) if reference_pool is not None else registry_pool()
    if len(pool) < N_REFERENCES:
        raise ConfigurationError(f"reference pool has {len(pool)} entries, need {N_REFERENCES}")
    picks = sorted(random.Random(seed).sample(range(len(pool)), N_REFERENCES))
    return MetaContext(query, prompt_pack.system_prompt, tool_docs(), tuple(pool[i] for i in picks), seed)


# candidate synthesis ----------------------------------------------------------


@dataclass(frozen=True)
class SynthesizedConfig:
    config: PlanConfiguration
    fallback: bool = False
    tokens_in: int = 0
    tokens_out: int = 0


def derived_seed(*parts: Any) -> int:
    return zlib.crc32(":".join(map(str, parts)).encode())


_REFERENCE_LINE = re.compile(r"^### Reference \d+: (.+)$", re.MULTILINE)


class ScriptedMetaPlanner:
    """Offline stand-in for the meta planner.

    Sample ``i`` picks one of the context's references or another catalogued
    configuration, and may change its concurrency, all seeded by the
    ``seed`` and ``sample`` header fields.
    """

    def __init__(self, malformed: Iterable[int] = ()) -> None:
        self.malformed = frozenset(malformed)

    def complete(self, system: str, context: str) -> Completion:
        header = parse_header(system)
        sample = int(header.get("sample", 0))
        if sample in self.malformed:
            text = "I would use a hierarchy, probably."
            return Completion(text, approx_tokens(system + context), approx_tokens(text))
        rng = random.Random(derived_seed(header.get("seed", 0), sample))
        names = list(REGISTRY)
        refs = [n for n in _REFERENCE_LINE.findall(context) if n in REGISTRY]
        base = REGISTRY[rng.choice(refs) if refs and rng.random() < 0.5 else rng.choice(names)].config
        nav = base.navigation_policy
        if nav.kind.value != "Sequential" and rng.random() < 0.5:
            nav = type(nav)(nav.kind, rng.choice((1, 2, 3, 4)))
        config = PlanConfiguration(
            base.topology_kind, base.init_strategy, base.adaptation_strategy, base.adaptation_triggers, nav, base.budgets
        )
        text = "Proposed configuration:\n" + render_config_markup(config)
        return Completion(text, approx_tokens(system + context), approx_tokens(text))


def exploratory_synthesis(context: MetaContext, meta_planner: Planner, k: int = DEFAULT_K) -> list[SynthesizedConfig]:
    """K independent meta-planner samples; unparseable ones fall back to the first reference."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out: list[SynthesizedConfig] = []
    for i in range(k):
        system = prompt_header(mode="configure", seed=context.seed, sample=i) + context.system_prompt
        completion = meta_planner.complete(system, context.user_prompt())
        try:
            config = parse_config_markup(completion.text)
            check_configuration(config)
            out.append(SynthesizedConfig(config, False, completion.tokens_in, completion.tokens_out))
        except (MarkupError, ConfigurationError, SchemaError) as exc:
            log.info("sample %d unparseable (%s); using fallback", i, exc)
            out.append(SynthesizedConfig(context.references[0].config, True, completion.tokens_in, completion.tokens_out))
    if all(s.fallback for s in out):
        raise SynthesisError(f"all {k} samples were unparseable")
    return out


# execution and filtering ------------------------------------------------------


@dataclass(frozen=True)
class CandidateResult:
    context: MetaContext
    config: PlanConfiguration
    trajectory: Trajectory
    impedance: ImpedanceBreakdown
    plan_markup: str = ""
    fallback: bool = False

    @property
    def success(self) -> bool | None:
        return self.trajectory.success


def run_candidate(
    context: MetaContext,
    synth: SynthesizedConfig,
    gold: str | None,
    backend: Backend,
    seed: int,
    params: ImpedanceParams = ImpedanceParams(),
    episode_params: EpisodeParams | None = None,
) -> CandidateResult:
    try:
        result = run_episode_detailed(
            context.query, gold, synth.config, default_agent_spec(), backend, seed, episode_params
        )
        trajectory = result.trajectory
        markup = graph_markup(result.initial_graph) if result.initial_graph is not None else ""
    except TransportError:
        raise
    except PlanweaveError as exc:
        # a configuration that cannot run at all is a failed candidate
        trajectory = Trajectory.from_events(
            context.query, [TrajectoryEvent(0, EventKind.FINAL, cost_class=CostClass.PLAN, detail=f"error: {exc}")],
            success=False,
        )
        markup = ""
    return CandidateResult(context, synth.config, trajectory, impedance(trajectory, params), markup, synth.fallback)


def execution_judge_filter(candidates: Sequence[CandidateResult]) -> list[CandidateResult]:
    return [c for c in candidates if c.success is True]


@dataclass(frozen=True)
class SftRecord:
    context: MetaContext
    config: PlanConfiguration
    plan_markup: str

    def target(self) -> str:
        return render_config_markup(self.config) + ("\n" + self.plan_markup if self.plan_markup else "")


@dataclass(frozen=True)
class PreferenceRecord:
    context: MetaContext
    winner: PlanConfiguration
    loser: PlanConfiguration
    winner_impedance: float
    loser_impedance: float
    winner_success: bool
    loser_success: bool
    delta: float


def build_sft_records(candidates: Sequence[CandidateResult]) -> list[SftRecord]:
    return [SftRecord(c.context, c.config, c.plan_markup) for c in execution_judge_filter(candidates)]


def build_preference_pairs(candidates: Sequence[CandidateResult], delta: float | None = None) -> list[PreferenceRecord]:
    """Preference pairs over all unordered candidate pairs.

    A success beats a failure; two failures give nothing; two successes give a
    pair only when their impedance gap exceeds ``delta`` (strictly), with the
    lower impedance winning. ``delta=None`` means 0.1 times the winner's
    impedance.
    """
    for c in candidates:
        if c.success is None:
            raise StateError("every candidate must be judged before pairing")
    out = []
    for i, a in enumerate(candidates):
        for b in candidates[i + 1:]:
            ia, ib = a.impedance.impedance, b.impedance.impedance
            if a.success and b.success:
                w, l = (a, b) if ia <= ib else (b, a)
                threshold = delta if delta is not None else DEFAULT_RELATIVE_DELTA * w.impedance.impedance
                if abs(ia - ib) <= threshold:
                    continue
            elif a.success or b.success:
                w, l = (a, b) if a.success else (b, a)
                threshold = delta if delta is not None else DEFAULT_RELATIVE_DELTA * w.impedance.impedance
            else:
                continue
            out.append(PreferenceRecord(
                a.context, w.config, l.config, w.impedance.impedance, l.impedance.impedance,
                True, bool(l.success), threshold,
            ))
    return out


# validation and corpus files ------------------------------------------------------


def validate_sft(rec: SftRecord) -> list[str]:
    problems = []
    if len(rec.context.references) != N_REFERENCES:
        problems.append("context must carry exactly 3 references")
    try:
        check_configuration(rec.config)
    except ConfigurationError as exc:
        problems.append(f"invalid config: {exc}")
    return problems


def validate_preference(rec: PreferenceRecord) -> list[str]:
    problems = []
    if not rec.winner_success:
        problems.append("winner must have succeeded")
    if rec.loser_success and not rec.loser_impedance - rec.winner_impedance > rec.delta:
        problems.append("successful loser must trail the winner by more than delta")
    if rec.delta < 0:
        problems.append("delta must be nonnegative")
    for cfg in (rec.winner, rec.loser):
        try:
            check_configuration(cfg)
        except ConfigurationError as exc:
            problems.append(f"invalid config: {exc}")
    return problems


def sft_to_dict(rec: SftRecord) -> dict[str, Any]:
    return {
        "type": "sft",
        "context": rec.context.to_dict(),
        "target": {"config": config_to_dict(rec.config), "plan": rec.plan_markup},
    }


def preference_to_dict(rec: PreferenceRecord) -> dict[str, Any]:
    return {
        "type": "preference",
        "context": rec.context.to_dict(),
        "winner": config_to_dict(rec.winner),
        "loser": config_to_dict(rec.loser),
        "winner_impedance": rec.winner_impedance,
        "loser_impedance": rec.loser_impedance,
        "winner_success": rec.winner_success,
        "loser_success": rec.loser_success,
        "delta": rec.delta,
    }


def record_from_dict(d: Mapping[str, Any]) -> SftRecord | PreferenceRecord:
    kind = d.get("type")
    try:
        if kind == "sft":
            return SftRecord(MetaContext.from_dict(d["context"]), config_from_dict(d["target"]["config"]), str(d["target"]["plan"]))
        if kind == "preference":
            return PreferenceRecord(
                MetaContext.from_dict(d["context"]), config_from_dict(d["winner"]), config_from_dict(d["loser"]),
                float(d["winner_impedance"]), float(d["loser_impedance"]),
                bool(d["winner_success"]), bool(d["loser_success"]), float(d["delta"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(str(kind), f"malformed record: {exc}") from None
    raise SchemaError("type", f"unknown record type {kind!r}")


Record = Union[SftRecord, PreferenceRecord]


def emit_corpora(records: Sequence[Record], path: str | Path) -> int:
    """Write one record type as JSON lines after validating every record; returns the count."""
    kinds = {type(r) for r in records}
    if len(kinds) > 1:
        raise TypeError("emit_corpora takes records of a single type")
    lines = []
    for r in records:
        if isinstance(r, SftRecord):
            problems, d = validate_sft(r), sft_to_dict(r)
        elif isinstance(r, PreferenceRecord):
            problems, d = validate_preference(r), preference_to_dict(r)
        else:
            raise TypeError(f"not a corpus record: {type(r).__name__}")
        if problems:
            raise DataError("; ".join(problems))
        lines.append(dumps(d) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")
    return len(lines)


def read_corpus(path: str | Path) -> list[Record]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                out.append(record_from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {lineno}", str(exc)) from None
    return out


# whole pipeline ------------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    id: str
    query: str
    gold: str | None = None


@dataclass
class PipelineResult:
    candidates: list[CandidateResult] = field(default_factory=list)
    sft: list[SftRecord] = field(default_factory=list)
    pairs: list[PreferenceRecord] = field(default_factory=list)
    n_tasks: int = 0

    def summary(self) -> dict[str, Any]:
        imps = [c.impedance.impedance for c in self.candidates]
        return {
            "n_tasks": self.n_tasks,
            "n_candidates": len(self.candidates),
            "n_sft": len(self.sft),
            "n_pairs": len(self.pairs),
            "mean_impedance": sum(imps) / len(imps) if imps else 0.0,
        }


def run_pipeline(
    tasks: Sequence[TaskSpec],
    backend_factory: Callable[[], Backend],
    meta_planner: Planner,
    k: int = DEFAULT_K,
    delta: float | None = None,
    seed: int = 0,
    jobs: int = 4,
    pool: Sequence[ReferenceExemplar] | None = None,
    params: ImpedanceParams = ImpedanceParams(),
    episode_params: EpisodeParams | None = None,
) -> PipelineResult:
    result = PipelineResult(n_tasks=len(tasks))
    jobs_list = []
    for task in tasks:
        ctx = build_context(task.query, PromptPack(), pool, derived_seed(seed, task.id))
        for i, synth in enumerate(exploratory_synthesis(ctx, meta_planner, k)):
            jobs_list.append((task, ctx, synth, derived_seed(seed, task.id, i)))

    def run(job) -> CandidateResult:
        task, ctx, synth, s = job
        return run_candidate(ctx, synth, task.gold, backend_factory(), s, params, episode_params)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            candidates = list(ex.map(run, jobs_list))
    else:
        candidates = [run(j) for j in jobs_list]
    result.candidates = candidates
    by_task: dict[str, list[CandidateResult]] = {}
    for (task, *_), cand in zip(jobs_list, candidates):
        by_task.setdefault(task.id, []).append(cand)
    for task in tasks:
        group = by_task.get(task.id, [])
        result.sft.extend(build_sft_records(group))
        result.pairs.extend(build_preference_pairs(group, delta))
    return result
