"""Cognitive impedance of a trajectory and the success-minus-cost objective."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

from .core import Aggregates, EventKind, Trajectory
from .errors import DataError, StateError


@dataclass(frozen=True)
class ImpedanceParams:
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda3: float = 1.0
    exec_epsilon: float = 1.0
    ratio_cap: float = 10.0
    objective_lambda: float = 0.1

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        for name in ("lambda1", "lambda2", "lambda3", "objective_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.exec_epsilon <= 0:
            raise ValueError("exec_epsilon must be > 0")
        if self.ratio_cap <= 0:
            raise ValueError("ratio_cap must be > 0")


@dataclass(frozen=True)
class ImpedanceBreakdown:
    c_tot: float
    c_plan: float
    c_exec: float
    n_fail: int
    s_stab: float
    plan_exec_ratio: float
    exponent: float
    impedance: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _check(agg: Aggregates) -> None:
    for name in ("c_total_tokens", "c_plan_tokens", "c_exec_tokens", "n_fail", "n_revisions", "n_retries", "n_steps"):
        if getattr(agg, name) < 0:
            raise DataError(f"negative {name}")


def stability_from_counts(n_revisions: int, n_retries: int, n_steps: int) -> float:
    return min(1.0, max(0.0, 1.0 - (n_revisions + n_retries) / max(1, n_steps)))


def stability_score(trajectory: Trajectory) -> float:
    """1 minus the density of revisions and retries per dispatch step, clamped to [0, 1]."""
    agg = trajectory.aggregates
    _check(agg)
    return stability_from_counts(agg.n_revisions, agg.n_retries, agg.n_steps)


def run_length_stability(trajectory: Trajectory) -> float:
    """Alternate scorer: longest run of steps free of failures, revisions and retries, over n_steps."""
    n_steps = trajectory.aggregates.n_steps
    if n_steps == 0:
        return 1.0
    disturbed = {
        e.step for e in trajectory.events
        if e.kind in (EventKind.FAILURE_SIGNAL, EventKind.REVISION)
        or (e.kind is EventKind.DISPATCH and e.detail == "retry")
    }
    steps = sorted({e.step for e in trajectory.events if e.kind is EventKind.DISPATCH})
    best = run = 0
    for s in steps:
        run = 0 if s in disturbed else run + 1
        best = max(best, run)
    return best / n_steps


StabilityScorer = Callable[[Trajectory], float]


def impedance_from_terms(
    c_tot: float, c_plan: float, c_exec: float, n_fail: int, s_stab: float, params: ImpedanceParams = ImpedanceParams()
) -> ImpedanceBreakdown:
    if min(c_tot, c_plan, c_exec, n_fail) < 0:
        raise DataError("token counts and failure count must be nonnegative")
    if not 0.0 <= s_stab <= 1.0:
        raise DataError(f"s_stab {s_stab} outside [0, 1]")
    ratio = min(c_plan / max(c_exec, params.exec_epsilon), params.ratio_cap)
    exponent = params.lambda1 * n_fail + params.lambda2 * (1.0 - s_stab) + params.lambda3 * ratio
    return ImpedanceBreakdown(
        float(c_tot), float(c_plan), float(c_exec), int(n_fail), float(s_stab), ratio, exponent,
        c_tot * math.exp(exponent),
    )


def impedance(
    trajectory: Trajectory, params: ImpedanceParams = ImpedanceParams(), stability: StabilityScorer = stability_score
) -> ImpedanceBreakdown:
    agg = trajectory.aggregates
    _check(agg)
    return impedance_from_terms(
        agg.c_total_tokens, agg.c_plan_tokens, agg.c_exec_tokens, agg.n_fail, stability(trajectory), params
    )


def objective(trajectory: Trajectory, params: ImpedanceParams = ImpedanceParams(), breakdown: ImpedanceBreakdown | None = None) -> float:
    if trajectory.success is None:
        raise StateError("objective needs a judged trajectory")
    value = (breakdown or impedance(trajectory, params)).impedance
    return (1.0 if trajectory.success else 0.0) - params.objective_lambda * value


@dataclass(frozen=True)
class TokenPrice:
    """Dollar price per million tokens, for cost reporting only."""

    input_per_mtok: float = 0.0
    output_per_mtok: float = 0.0

    def cost(self, trajectory: Trajectory) -> float:
        t_in = sum(e.tokens_in for e in trajectory.events)
        t_out = sum(e.tokens_out for e in trajectory.events)
        return (t_in * self.input_per_mtok + t_out * self.output_per_mtok) / 1e6
