"""Independent reference implementations used by the tests."""

import itertools

import mpmath

mpmath.mp.dps = 50


def impedance_mp(c_tot, c_plan, c_exec, n_fail, n_rev, n_retry, n_steps, lam=(0.5, 0.5, 1.0), eps=1.0, cap=10.0):
    s = 1 - mpmath.mpf(n_rev + n_retry) / max(1, n_steps)
    s = min(mpmath.mpf(1), max(mpmath.mpf(0), s))
    ratio = min(mpmath.mpf(c_plan) / max(mpmath.mpf(c_exec), mpmath.mpf(eps)), mpmath.mpf(cap))
    exponent = lam[0] * mpmath.mpf(n_fail) + lam[1] * (1 - s) + lam[2] * ratio
    return mpmath.mpf(c_tot) * mpmath.exp(exponent)


def neg_log_sigmoid_mp(m):
    return -mpmath.log(1 / (1 + mpmath.exp(-mpmath.mpf(m))))


def boltzmann_mp(pi_ref, r, beta):
    w = [mpmath.mpf(p) * mpmath.exp(mpmath.mpf(x) / beta) for p, x in zip(pi_ref, r)]
    z = sum(w)
    return [x / z for x in w]


def kl_objective_mp(pi, pi_ref, r, beta):
    exp_r = sum(mpmath.mpf(p) * x for p, x in zip(pi, r))
    kl = sum(mpmath.mpf(p) * mpmath.log(mpmath.mpf(p) / q) for p, q in zip(pi, pi_ref) if p > 0)
    return exp_r - beta * kl


def preference_rule(r_a, r_b, imp_a, imp_b, delta):
    """Winner label ('a'/'b') or None, written directly from the selection rule."""
    if r_a and not r_b:
        return "a"
    if r_b and not r_a:
        return "b"
    if not r_a and not r_b:
        return None
    if abs(imp_a - imp_b) <= delta:
        return None
    return "a" if imp_a < imp_b else "b"


def rule_cases(gaps=(0.0, 0.05, 0.1, 0.2, 0.5, 1.0)):
    for ra, rb, g in itertools.product((0, 1), (0, 1), gaps):
        yield ra, rb, g
