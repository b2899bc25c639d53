"""Self-checks for the preference-optimization math, run by ``planweave verify-math``."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass

import numpy as np

from .igpo import PairLikelihoods, boltzmann_policy, igpo_loss, igpo_loss_grad, kl_objective, margin_loss, sigmoid

# floating-point slack when comparing the closed form against grid objectives
OBJECTIVE_SLACK = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    detail: str = ""
    seconds: float = 0.0


def random_pair(rng: random.Random, beta: float) -> PairLikelihoods:
    return PairLikelihoods(*(rng.uniform(-30.0, -0.1) for _ in range(4)), beta=beta)


def _pair_loss(p: PairLikelihoods, w: float, l: float) -> float:
    return igpo_loss([PairLikelihoods(w, p.logp_ref_w, l, p.logp_ref_l, p.beta)])


def gradient_check(n_pairs: int = 200, betas=(0.05, 0.1, 1.0), h: float = 1e-6, rtol: float = 1e-5, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    worst = 0.0
    for beta in betas:
        for _ in range(n_pairs):
            p = random_pair(rng, beta)
            gw, gl = igpo_loss_grad(p)
            fw = (_pair_loss(p, p.logp_theta_w + h, p.logp_theta_l) - _pair_loss(p, p.logp_theta_w - h, p.logp_theta_l)) / (2 * h)
            fl = (_pair_loss(p, p.logp_theta_w, p.logp_theta_l + h) - _pair_loss(p, p.logp_theta_w, p.logp_theta_l - h)) / (2 * h)
            for a, f in ((gw, fw), (gl, fl)):
                worst = max(worst, abs(a - f) / max(abs(a), 1e-300))
    return CheckResult("gradient vs central differences", worst <= rtol, worst, f"{len(betas) * n_pairs} pairs, rtol {rtol:g}")


def zero_margin_check(tol: float = 1e-12) -> CheckResult:
    err = abs(igpo_loss([PairLikelihoods(-1.0, -1.0, -2.0, -2.0, 0.1)]) - math.log(2.0))
    return CheckResult("loss at zero margin = ln 2", err <= tol, err)


def simplex_grid(step: float = 0.001) -> np.ndarray:
    n = round(1 / step)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    i, j = i[keep], j[keep]
    return np.stack([i, j, n - i - j], axis=1) / n


def grid_objective(grid: np.ndarray, pi_ref: np.ndarray, rewards: np.ndarray, beta: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(grid > 0, grid * np.log(grid / pi_ref), 0.0)
    return grid @ rewards - beta * terms.sum(axis=1)


def random_instance(rng: random.Random) -> tuple[list[float], list[float], float]:
    raw = [rng.gammavariate(1.0, 1.0) + 1e-3 for _ in range(3)]
    total = math.fsum(raw)
    pi_ref = [x / total for x in raw[:2]]
    pi_ref.append(1.0 - math.fsum(pi_ref))
    rewards = [rng.uniform(-1.0, 1.0) for _ in range(3)]
    beta = rng.uniform(0.1, 2.0)
    return pi_ref, rewards, beta


def optimality_check(n_instances: int = 50, step: float = 0.001, max_dist: float = 0.002, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    grid = simplex_grid(step)
    worst_dist = 0.0
    worst_excess = -math.inf
    for _ in range(n_instances):
        pi_ref, rewards, beta = random_instance(rng)
        star = boltzmann_policy(pi_ref, rewards, beta)
        best = kl_objective(star, pi_ref, rewards, beta)
        values = grid_objective(grid, np.array(pi_ref), np.array(rewards), beta)
        top = int(np.argmax(values))
        worst_excess = max(worst_excess, float(values[top]) - best)
        worst_dist = max(worst_dist, float(np.max(np.abs(grid[top] - np.array(star)))))
    ok = worst_excess <= OBJECTIVE_SLACK and worst_dist <= max_dist
    return CheckResult(
        "closed-form policy beats simplex grid", ok, worst_dist,
        f"max grid excess {worst_excess:.3g}, max argmax distance {worst_dist:.4f}",
    )


def antisymmetry_check(seed: int = 0, n: int = 1000) -> CheckResult:
    rng = random.Random(seed)
    worst = max(abs(sigmoid(-m) - (1.0 - sigmoid(m))) for m in (rng.uniform(-30, 30) for _ in range(n)))
    return CheckResult("sigmoid(-m) = 1 - sigmoid(m)", worst <= 1e-12, worst)


def monotone_check(seed: int = 0, n: int = 1000) -> CheckResult:
    rng = random.Random(seed)
    margins = sorted({rng.uniform(-20, 20) for _ in range(n)})
    losses = [margin_loss(m) for m in margins]
    ok = all(a > b for a, b in zip(losses, losses[1:]))
    return CheckResult("loss strictly decreasing in margin", ok, 0.0)


def shift_check(seed: int = 0, n: int = 200) -> CheckResult:
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(n):
        p = random_pair(rng, rng.choice((0.05, 0.1, 1.0)))
        c = rng.uniform(-3, 3)
        q = PairLikelihoods(p.logp_theta_w + c, p.logp_ref_w, p.logp_theta_l + c, p.logp_ref_l, p.beta)
        worst = max(worst, abs(igpo_loss([p]) - igpo_loss([q])), *(abs(a - b) for a, b in zip(igpo_loss_grad(p), igpo_loss_grad(q))))
    return CheckResult("shared log-likelihood shift leaves loss unchanged", worst <= 1e-9, worst)


def run_math_suite(seed: int = 0) -> list[CheckResult]:
    out = []
    for fn in (
        lambda: gradient_check(seed=seed),
        zero_margin_check,
        lambda: optimality_check(seed=seed),
        lambda: antisymmetry_check(seed),
        lambda: monotone_check(seed),
        lambda: shift_check(seed),
    ):
        t0 = time.perf_counter()
        r = fn()
        out.append(CheckResult(r.name, r.passed, r.max_error, r.detail, time.perf_counter() - t0))
    return out
