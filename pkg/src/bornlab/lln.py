"""Exact binomial tail probabilities for the law of large numbers.

The central quantity is the chance that the relative frequency of an
outcome over n independent trials differs from its per-trial chance by
more than delta (strictly: boundary deviations are excluded).  Small n is
summed in exact rational arithmetic; large n switches to log-domain
summation to avoid overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

EXACT_N_LIMIT = 1000


@dataclass(frozen=True)
class LlnQuery:
    """Trial count, deviation threshold, per-trial chance."""

    n: int
    delta: float
    p: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("trial count must be at least 1")
        if not self.delta > 0:
            raise ValueError("deviation threshold must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("per-trial chance must lie in [0, 1]")


def _tail_indices(n: int, delta: Fraction, p: Fraction):
    for k in range(n + 1):
        if abs(Fraction(k, n) - p) > delta:
            yield k


def lln_tail_exact(n: int, delta, p) -> Fraction:
    """Exact P(|K/n - p| > delta) for binomial K, as a rational.

    Floats convert to their exact binary rationals, so dyadic inputs like
    0.5 are handled exactly.
    """
    query = LlnQuery(int(n), float(delta), float(p))
    n = query.n
    delta = Fraction(delta)
    p = Fraction(p)
    q = 1 - p
    total = Fraction(0)
    for k in _tail_indices(n, delta, p):
        total += math.comb(n, k) * p**k * q ** (n - k)
    return total


def _log_pmf(n: int, k: int, p: float) -> float:
    return (
        math.lgamma(n + 1)
        - math.lgamma(k + 1)
        - math.lgamma(n - k + 1)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )


def lln_tail(n: int, delta: float, p: float) -> float:
    """P(|K/n - p| > delta), exact summation (log-domain above n=1000)."""
    query = LlnQuery(int(n), float(delta), float(p))
    n, delta, p = query.n, query.delta, query.p
    if p == 0.0 or p == 1.0:
        # the frequency equals p with certainty; strict deviation needs
        # |k/n - p| > delta with k pinned at 0 or n
        return 0.0
    if n <= EXACT_N_LIMIT:
        return float(lln_tail_exact(n, delta, p))
    logs = [
        _log_pmf(n, k, p) for k in _tail_indices(n, Fraction(delta), Fraction(p))
    ]
    if not logs:
        return 0.0
    peak = max(logs)
    return float(math.exp(peak) * sum(math.exp(x - peak) for x in logs))


@dataclass(frozen=True)
class LimitScanReport:
    ns: tuple[int, ...]
    values: tuple[float, ...]
    final_is_minimum: bool
    strictly_decreasing: bool
    converged: bool
    threshold: float


def lln_limit_scan(
    p: float, delta: float, ns: Sequence[int], *, threshold: float = 1e-3
) -> LimitScanReport:
    """Tail values along increasing n, with a convergence verdict.

    ``converged`` means the final value dropped below ``threshold``; the
    report also notes whether the final value is the minimum and whether
    the sequence decreases strictly.
    """
    ns = tuple(int(n) for n in ns)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("trial counts must be strictly increasing")
    values = tuple(lln_tail(n, delta, p) for n in ns)
    final_is_minimum = values[-1] == min(values)
    strictly_decreasing = all(b < a for a, b in zip(values, values[1:])) or len(values) == 1
    return LimitScanReport(
        ns=ns,
        values=values,
        final_is_minimum=final_is_minimum,
        strictly_decreasing=strictly_decreasing,
        converged=values[-1] < threshold,
        threshold=threshold,
    )


@dataclass(frozen=True)
class AuditRow:
    outcome: int
    count: int
    frequency: float
    weight: float
    deviation: float
    surprise: float


@dataclass(frozen=True)
class FrequencyAudit:
    rows: tuple[AuditRow, ...]
    n: int

    def row(self, outcome: int) -> AuditRow:
        for row in self.rows:
            if row.outcome == outcome:
                return row
        raise KeyError(outcome)


def frequency_audit(outcomes: Sequence[int], weights: Sequence[float]) -> FrequencyAudit:
    """Per-outcome frequencies against a weight table, with surprise scores.

    The surprise score of an outcome is the exact chance of a deviation
    larger than the one observed, so small scores flag sequences a
    weight-distributed source would rarely produce.
    """
    outcomes = [int(o) for o in outcomes]
    if not outcomes:
        raise ValueError("outcome sequence must be nonempty")
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("weights must be a probability table")
    for o in outcomes:
        if not 0 <= o < len(weights):
            raise IndexError(f"outcome {o} outside the weight table")
    n = len(outcomes)
    rows = []
    for k, weight in enumerate(weights):
        count = sum(1 for o in outcomes if o == k)
        freq = count / n
        deviation = abs(freq - weight)
        surprise = lln_tail(n, deviation, weight) if deviation > 0 else (
            lln_tail(n, 1e-300, weight)
        )
        rows.append(
            AuditRow(
                outcome=k,
                count=count,
                frequency=freq,
                weight=weight,
                deviation=deviation,
                surprise=surprise,
            )
        )
    return FrequencyAudit(rows=tuple(rows), n=n)
