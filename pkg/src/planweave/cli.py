"""Command line: run episodes, benchmark paradigms, build corpora, verify math, export graphs.

Exit codes: 0 success, 1 configuration or input error, 2 backend failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from .agents import ScriptedExecutor
from .core import (
    PlanConfiguration,
    PlanGraph,
    Trajectory,
    config_from_dict,
    config_to_dict,
    dumps,
    from_dict,
    parse_trajectory_log,
    trajectory_log_lines,
)
from .datapipe import (
    ReferenceExemplar,
    ScriptedMetaPlanner,
    emit_corpora,
    registry_pool,
    run_pipeline,
)
from .engine import Backend, EpisodeParams, EpisodeResult, default_agent_spec, run_episode_detailed
from .errors import ConfigurationError, PlanweaveError, SchemaError, TransportError
from .impedance import ImpedanceParams, TokenPrice, impedance
from .judge import JudgeMode
from .llm import ChatAgentExecutor, ChatClient, ChatPlanner
from .paradigms import PARADIGM_NAMES, check_configuration, registry_lookup, registry_matrix, tool_docs
from .suite import SuiteTask, bundled_tasks, bundled_world, load_tasks, task_planner
from .topology import to_dot
from .verify import run_math_suite
from .world import ScriptedWorld, load_failure_plan, load_world

log = logging.getLogger("planweave")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG) -> None:
        super().__init__(message)
        self.code = code


# settings -----------------------------------------------------------------------


@dataclass(frozen=True)
class Settings:
    """Resolved run settings: the JSON config file overlaid with command-line flags."""

    paradigm: str | None = None
    configuration: PlanConfiguration | None = None
    budgets: dict | None = None
    impedance: ImpedanceParams = ImpedanceParams()
    judge: JudgeMode = JudgeMode.EXACT
    backend: str = "scripted"
    model: str = ""
    world: str | None = None
    failures: str | None = None
    price: TokenPrice = TokenPrice()
    seed: int = 0
    jobs: int = 4


CONFIG_KEYS = {"paradigm", "configuration", "budgets", "impedance", "judge", "backend", "model", "world", "failures", "price"}


def load_settings(args: argparse.Namespace) -> Settings:
    raw: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise CliError("config file must hold a JSON object")
        unknown = set(raw) - CONFIG_KEYS
        if unknown:
            raise CliError("unknown config keys: " + ", ".join(sorted(unknown)))
    try:
        s = Settings(
            paradigm=raw.get("paradigm"),
            configuration=config_from_dict(raw["configuration"]) if "configuration" in raw else None,
            budgets=raw.get("budgets"),
            impedance=ImpedanceParams(**raw.get("impedance", {})),
            judge=JudgeMode(raw.get("judge", JudgeMode.EXACT.value)),
            backend=raw.get("backend", "scripted"),
            model=raw.get("model", ""),
            world=raw.get("world"),
            failures=raw.get("failures"),
            price=TokenPrice(**raw.get("price", {})),
        )
    except (TypeError, ValueError, SchemaError) as exc:
        raise CliError(f"invalid config: {exc}") from None
    overrides: dict[str, Any] = {"seed": args.seed, "jobs": args.jobs}
    if getattr(args, "paradigm", None):
        overrides["paradigm"] = args.paradigm
        overrides["configuration"] = None
    if args.backend:
        overrides["backend"] = args.backend
    if args.judge:
        overrides["judge"] = JudgeMode(args.judge)
    if args.model:
        overrides["model"] = args.model
    if args.world:
        overrides["world"] = args.world
    if args.failures:
        overrides["failures"] = args.failures
    s = replace(s, **overrides)
    if s.backend not in ("scripted", "llm"):
        raise CliError(f"unknown backend {s.backend!r}")
    if s.jobs < 1:
        raise CliError("--jobs must be >= 1")
    return s


def resolve_config(s: Settings, paradigm: str | None = None) -> tuple[str, PlanConfiguration]:
    if paradigm is None and s.configuration is not None:
        name, config = "custom", s.configuration
    else:
        name = paradigm or s.paradigm
        if not name:
            raise CliError("no paradigm given (use --paradigm or the config file)")
        try:
            config = registry_lookup(name).config
        except KeyError as exc:
            raise CliError(str(exc)) from None
    if s.budgets:
        try:
            config = replace(config, budgets=replace(config.budgets, **s.budgets))
        except TypeError as exc:
            raise CliError(f"invalid budgets: {exc}") from None
    try:
        check_configuration(config)
    except ConfigurationError as exc:
        raise CliError(str(exc)) from None
    return name, config


def resolve_tasks(path: str | None) -> list[SuiteTask]:
    if path is None:
        return bundled_tasks()
    if not Path(path).is_file():
        raise CliError(f"task file not found: {path}")
    return load_tasks(path)


def resolve_world(s: Settings) -> ScriptedWorld:
    if s.world is None:
        world = bundled_world()
        if s.failures:
            world = world.with_failures(load_failure_plan(s.failures))
        return world
    for p in (s.world, s.failures):
        if p and not Path(p).is_file():
            raise CliError(f"file not found: {p}")
    return load_world(s.world, s.failures)


class BackendFactory:
    def __init__(self, s: Settings, tasks: Sequence[SuiteTask]) -> None:
        self.s = s
        self.world = resolve_world(s)
        self.tasks = list(tasks)
        self.client: ChatClient | None = None
        if s.backend == "llm" or s.judge is JudgeMode.LLM:
            if not s.model:
                raise CliError("the llm backend and judge need a model id (--model or config 'model')")
            self.client = ChatClient.from_env()

    def __call__(self) -> Backend:
        if self.s.backend == "llm":
            executor = ChatAgentExecutor(self.client, self.s.model, self.world, default_agent_spec())
            planner = ChatPlanner(self.client, self.s.model)
        else:
            executor = ScriptedExecutor(self.world)
            planner = task_planner(self.tasks)
        return Backend(executor, planner, self.client, self.s.model)

    def meta_planner(self):
        if self.s.backend == "llm":
            return ChatPlanner(self.client, self.s.model, temperature=0.8)
        return ScriptedMetaPlanner()


# episodes and summaries -------------------------------------------------------------


def run_tasks(
    tasks: Sequence[SuiteTask], config: PlanConfiguration, factory: BackendFactory, s: Settings
) -> list[EpisodeResult]:
    params = EpisodeParams(judge_mode=s.judge)

    def one(task: SuiteTask) -> EpisodeResult:
        return run_episode_detailed(task.query, task.gold, config, default_agent_spec(), factory(), s.seed, params)

    if s.jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=s.jobs) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


def _mean(values: Sequence[float]) -> float:
    return statistics.fmean(values) if values else 0.0


def summarize(name: str, trajectories: Sequence[Trajectory], s: Settings, wall_clock: bool = False) -> dict[str, Any]:
    imps = [impedance(t, s.impedance).impedance for t in trajectories]
    row = {
        "paradigm": name,
        "n_tasks": len(trajectories),
        "accuracy": 100.0 * sum(1 for t in trajectories if t.success) / len(trajectories) if trajectories else 0.0,
        "mean_steps": _mean([t.aggregates.n_steps for t in trajectories]),
        "mean_tokens": _mean([t.aggregates.c_total_tokens for t in trajectories]),
        "mean_plan_tokens": _mean([t.aggregates.c_plan_tokens for t in trajectories]),
        "mean_exec_tokens": _mean([t.aggregates.c_exec_tokens for t in trajectories]),
        "mean_impedance": _mean(imps),
        "median_impedance": statistics.median(imps) if imps else 0.0,
        "mean_cost": _mean([s.price.cost(t) for t in trajectories]),
    }
    if wall_clock:
        row["mean_time_ms"] = _mean([sum(e.wall_ms for e in t.events) for t in trajectories])
    return row


class Writer:
    """Single point through which command output files are written."""

    def __init__(self, root: Path | None) -> None:
        self.root = root
        self._lock = threading.Lock()

    def write(self, rel: str, text: str) -> None:
        if self.root is None:
            return
        with self._lock:
            path = self.root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")


def _out(args) -> Writer:
    return Writer(Path(args.out) if args.out else None)


def cmd_run(args: argparse.Namespace) -> int:
    s = load_settings(args)
    name, config = resolve_config(s)
    if args.dry_run:
        print(dumps(config_to_dict(config)))
        return EXIT_OK
    tasks = resolve_tasks(args.tasks)
    factory = BackendFactory(s, tasks)
    results = run_tasks(tasks, config, factory, s)
    writer = _out(args)
    for task, r in zip(tasks, results):
        lines = trajectory_log_lines(r.trajectory, replay=not args.wall_clock, graph=r.final_graph)
        writer.write(f"trajectories/{task.id}.jsonl", "".join(line + "\n" for line in lines))
    summary = summarize(name, [r.trajectory for r in results], s, args.wall_clock)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    writer.write("summary.json", text)
    sys.stdout.write(text)
    return EXIT_OK


TABLE_COLUMNS = (
    ("paradigm", "Paradigm", "{}"),
    ("accuracy", "Acc %", "{:.1f}"),
    ("mean_steps", "Steps", "{:.2f}"),
    ("mean_plan_tokens", "Plan tok", "{:.1f}"),
    ("mean_exec_tokens", "Exec tok", "{:.1f}"),
    ("mean_tokens", "Total tok", "{:.1f}"),
    ("mean_impedance", "Impedance", "{:.1f}"),
)


def render_table(rows: Sequence[dict[str, Any]]) -> str:
    cells = [[h for _, h, _ in TABLE_COLUMNS]] + [[fmt.format(r[k]) for k, _, fmt in TABLE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def bench_rows(names: Sequence[str], tasks: Sequence[SuiteTask], s: Settings, wall_clock: bool = False) -> list[dict[str, Any]]:
    factory = BackendFactory(s, tasks)
    rows = []
    for name in names:
        _, config = resolve_config(s, name)
        results = run_tasks(tasks, config, factory, s)
        rows.append(summarize(name, [r.trajectory for r in results], s, wall_clock))
    return rows


def cmd_bench(args: argparse.Namespace) -> int:
    s = load_settings(args)
    names = [n.strip() for n in args.paradigm.split(",")] if args.paradigm else list(PARADIGM_NAMES)
    for n in names:
        if n not in PARADIGM_NAMES:
            raise CliError(f"unknown paradigm {n!r}; known: {', '.join(PARADIGM_NAMES)}")
    tasks = resolve_tasks(args.tasks)
    rows = bench_rows(names, tasks, s, args.wall_clock)
    table = render_table(rows)
    writer = _out(args)
    writer.write("bench.json", json.dumps(rows, indent=2, sort_keys=True) + "\n")
    writer.write("bench.txt", table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_dataset(args: argparse.Namespace) -> int:
    s = load_settings(args)
    if args.k < 1:
        raise CliError("--k must be >= 1")
    if args.mode in ("igpo", "all") and args.k < 2:
        raise CliError("preference pairs need --k >= 2")
    if args.delta is not None and args.delta < 0:
        raise CliError("--delta must be >= 0")
    tasks = resolve_tasks(args.tasks)
    factory = BackendFactory(s, tasks)
    pool: list[ReferenceExemplar] = registry_pool()
    if args.dry_run:
        print(json.dumps({"n_tasks": len(tasks), "k": args.k, "mode": args.mode, "delta": args.delta}, sort_keys=True))
        return EXIT_OK
    result = run_pipeline(
        [t.spec() for t in tasks], factory, factory.meta_planner(), args.k, args.delta, s.seed, s.jobs, pool, s.impedance,
        EpisodeParams(judge_mode=s.judge),
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.mode in ("sft", "all"):
            emit_corpora(result.sft, out / "sft.jsonl")
        if args.mode in ("igpo", "all"):
            emit_corpora(result.pairs, out / "igpo.jsonl")
    summary = result.summary()
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    _out(args).write("summary.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify_math(args: argparse.Namespace) -> int:
    results = run_math_suite(args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name.ljust(width)}  max_err={r.max_error:.3g}  {r.seconds:.2f}s  {r.detail}".rstrip())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CONFIG


def load_graph_file(path: str) -> PlanGraph:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"file not found: {path}")
    text = p.read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    try:
        if isinstance(obj, dict):
            entity = from_dict(obj)
            graph = entity if isinstance(entity, PlanGraph) else None
        else:
            _, graph = parse_trajectory_log(text)
    except (PlanweaveError, json.JSONDecodeError, ValueError) as exc:
        raise CliError(f"cannot decode {path}: {exc}") from None
    if graph is None:
        raise CliError(f"{path} holds no plan graph")
    return graph


def cmd_export_dot(args: argparse.Namespace) -> int:
    dot = to_dot(load_graph_file(args.input))
    if args.out:
        Path(args.out).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def cmd_impedance(args: argparse.Namespace) -> int:
    s = load_settings(args)
    report = {}
    for path in args.trajectories:
        p = Path(path)
        if not p.is_file():
            raise CliError(f"file not found: {path}")
        try:
            traj, _ = parse_trajectory_log(p.read_text(encoding="utf-8"))
        except PlanweaveError as exc:
            raise CliError(f"cannot decode {path}: {exc}") from None
        report[path] = impedance(traj, s.impedance).to_dict()
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_registry(args: argparse.Namespace) -> int:
    if args.docs:
        sys.stdout.write(tool_docs())
    else:
        print(json.dumps(registry_matrix(), indent=2, sort_keys=True))
    return EXIT_OK


# parser ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--tasks", help="JSONL task file {id, query, gold}; defaults to the bundled suite")
    p.add_argument("--backend", choices=("scripted", "llm"))
    p.add_argument("--model", help="model id for the llm backend and judge")
    p.add_argument("--judge", choices=[m.value for m in JudgeMode])
    p.add_argument("--world", help="JSONL fact file for the scripted world")
    p.add_argument("--failures", help="JSONL failure plan {step, node_id}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--out", help="output directory")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--wall-clock", action="store_true", help="keep wall-clock timings in logs and summaries")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planweave", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one paradigm or configuration over a task file")
    _common(p)
    p.add_argument("--paradigm")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="compare paradigms on a task file")
    _common(p)
    p.add_argument("--paradigm", help="comma-separated names; default all seven")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("dataset", help="build SFT and preference corpora")
    _common(p)
    p.add_argument("--mode", choices=("sft", "igpo", "all"), default="all")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--delta", type=float, default=None, help="absolute impedance gap; default 0.1 x winner impedance")
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("verify-math", help="run the preference-optimization math checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify_math)

    p = sub.add_parser("export-dot", help="render a graph or trajectory log as Graphviz DOT")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_export_dot)

    p = sub.add_parser("impedance", help="impedance breakdown of trajectory logs")
    _common(p)
    p.add_argument("trajectories", nargs="+")
    p.set_defaults(fn=cmd_impedance)

    p = sub.add_parser("registry", help="print the paradigm matrix")
    p.add_argument("--docs", action="store_true", help="print building-block docs instead")
    p.set_defaults(fn=cmd_registry)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TransportError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (PlanweaveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
