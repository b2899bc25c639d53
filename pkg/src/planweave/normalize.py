"""Answer normalization shared by the judge, voting and meta-verification."""

from __future__ import annotations

import math
import re

_WS = re.compile(r"\s+")
_STRIP = "\"'`.“”‘’"


def normalize_answer(text: str | None) -> str:
    """Lowercase, trim, collapse whitespace, strip surrounding quotes and periods."""
    if text is None:
        return ""
    out = _WS.sub(" ", text.strip().lower())
    prev = None
    while prev != out:
        prev = out
        out = out.strip(_STRIP).strip()
    return out


def as_number(text: str) -> float | None:
    try:
        value = float(text.replace(",", ""))
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def answers_match(a: str | None, b: str | None, rel_tol: float = 1e-6) -> bool:
    na, nb = normalize_answer(a), normalize_answer(b)
    xa, xb = as_number(na), as_number(nb)
    if xa is not None and xb is not None:
        if xa == xb:
            return True
        return abs(xa - xb) <= rel_tol * max(abs(xa), abs(xb))
    return na == nb
