"""Preference-optimization math: implicit reward, sigmoid-margin loss, Boltzmann policy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DivergenceError

DEFAULT_BETA = 0.1


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {v}")


def _beta(beta: float) -> None:
    _finite(beta)
    if beta <= 0:
        raise ValueError("beta must be > 0")


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def softplus(x: float) -> float:
    """log(1 + e^x) without overflow."""
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@dataclass(frozen=True)
class PairLikelihoods:
    logp_theta_w: float
    logp_ref_w: float
    logp_theta_l: float
    logp_ref_l: float
    beta: float = DEFAULT_BETA

    def __post_init__(self) -> None:
        _finite(self.logp_theta_w, self.logp_ref_w, self.logp_theta_l, self.logp_ref_l)
        _beta(self.beta)

    @property
    def margin(self) -> float:
        return implicit_reward(self.logp_theta_w, self.logp_ref_w, self.beta) - implicit_reward(
            self.logp_theta_l, self.logp_ref_l, self.beta
        )


def implicit_reward(logp_theta: float, logp_ref: float, beta: float = DEFAULT_BETA) -> float:
    _finite(logp_theta, logp_ref)
    _beta(beta)
    return beta * (logp_theta - logp_ref)


def margin_loss(margin: float) -> float:
    """-log sigmoid(margin)."""
    return softplus(-margin)


def igpo_loss(pairs: Sequence[PairLikelihoods]) -> float:
    if not pairs:
        raise ValueError("igpo_loss needs at least one pair")
    return math.fsum(margin_loss(p.margin) for p in pairs) / len(pairs)


def igpo_loss_grad(pair: PairLikelihoods) -> tuple[float, float]:
    """Gradient of the single-pair loss with respect to (logp_theta_w, logp_theta_l)."""
    s = pair.beta * sigmoid(-pair.margin)
    return -s, s


# discrete policies ------------------------------------------------------------


def _probs(p: Sequence[float], what: str) -> list[float]:
    values = [float(x) for x in p]
    _finite(*values)
    if any(x < 0 for x in values):
        raise ValueError(f"{what} has negative mass")
    if abs(math.fsum(values) - 1.0) > 1e-12:
        raise ValueError(f"{what} does not sum to 1")
    return values


def boltzmann_policy(pi_ref: Sequence[float], rewards: Sequence[float], beta: float = DEFAULT_BETA) -> list[float]:
    """Normalized pi_ref * exp(r / beta), computed in log space."""
    _beta(beta)
    if len(pi_ref) != len(rewards):
        raise ValueError("pi_ref and rewards differ in length")
    _finite(*rewards)
    if any(x < 0 for x in pi_ref) or not any(x > 0 for x in pi_ref):
        raise DivergenceError("reference policy has no mass")
    logits = [math.log(p) + r / beta if p > 0 else -math.inf for p, r in zip(pi_ref, rewards)]
    top = max(logits)
    weights = [math.exp(v - top) if v != -math.inf else 0.0 for v in logits]
    total = math.fsum(weights)
    return [w / total for w in weights]


def kl_divergence(pi: Sequence[float], pi_ref: Sequence[float]) -> float:
    total = []
    for p, q in zip(pi, pi_ref):
        if p == 0:
            continue
        if q == 0:
            raise DivergenceError("pi puts mass where pi_ref has none")
        total.append(p * math.log(p / q))
    return math.fsum(total)


def kl_objective(pi: Sequence[float], pi_ref: Sequence[float], rewards: Sequence[float], beta: float = DEFAULT_BETA) -> float:
    """Expected reward minus beta * KL(pi || pi_ref)."""
    _beta(beta)
    if not len(pi) == len(pi_ref) == len(rewards):
        raise ValueError("length mismatch")
    _finite(*rewards)
    pi = _probs(pi, "pi")
    pi_ref = _probs(pi_ref, "pi_ref")
    expected = math.fsum(p * r for p, r in zip(pi, rewards))
    return expected - beta * kl_divergence(pi, pi_ref)
