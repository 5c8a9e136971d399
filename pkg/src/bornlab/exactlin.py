"""Exact linear-constraint solving over the rationals.

Small dense Gaussian elimination on Fraction matrices with constraint
provenance: every working row remembers which original constraints were
combined into it, so an infeasible system can name a conflicting subset and
rank decisions are exact rather than floating-point guesses.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import InconsistentSystemError


@dataclass(frozen=True)
class LinearSolveResult:
    """Outcome of solving A x = b exactly.

    ``status`` is one of ``unique``, ``underdetermined``, ``infeasible``.
    For unique systems ``solution`` holds the values; otherwise
    ``solution`` is one particular solution (when feasible) and
    ``nullspace`` spans the solution space's direction vectors.
    """

    status: str
    rank: int
    n_unknowns: int
    solution: tuple[Fraction, ...] | None = None
    nullspace: tuple[tuple[Fraction, ...], ...] = ()
    conflict: tuple[str, ...] = ()

    @property
    def freedom(self) -> int:
        return len(self.nullspace)


def solve_exact(
    rows: Sequence[Sequence[Fraction]],
    rhs: Sequence[Fraction],
    labels: Sequence[str] | None = None,
) -> LinearSolveResult:
    """Row-reduce [A | b] over Q and classify the system.

    ``labels`` name the constraints for conflict reporting; defaults to
    row indices.
    """
    m = len(rows)
    if m == 0:
        raise ValueError("no constraints given")
    n = len(rows[0])
    if labels is None:
        labels = [f"row{i}" for i in range(m)]
    work = [[Fraction(x) for x in row] + [Fraction(rhs[i])] for i, row in enumerate(rows)]
    provenance: list[set[str]] = [{labels[i]} for i in range(m)]

    pivot_cols: list[int] = []
    pivot_row = 0
    for col in range(n):
        sel = None
        for r in range(pivot_row, m):
            if work[r][col] != 0:
                sel = r
                break
        if sel is None:
            continue
        work[pivot_row], work[sel] = work[sel], work[pivot_row]
        provenance[pivot_row], provenance[sel] = provenance[sel], provenance[pivot_row]
        pivot = work[pivot_row][col]
        work[pivot_row] = [x / pivot for x in work[pivot_row]]
        for r in range(m):
            if r != pivot_row and work[r][col] != 0:
                factor = work[r][col]
                work[r] = [a - factor * b for a, b in zip(work[r], work[pivot_row])]
                provenance[r] = provenance[r] | provenance[pivot_row]
        pivot_cols.append(col)
        pivot_row += 1
        if pivot_row == m:
            break

    rank = len(pivot_cols)
    for r in range(rank, m):
        if work[r][n] != 0:
            return LinearSolveResult(
                status="infeasible",
                rank=rank,
                n_unknowns=n,
                conflict=tuple(sorted(provenance[r])),
            )

    free_cols = [c for c in range(n) if c not in pivot_cols]
    particular = [Fraction(0)] * n
    for r, col in enumerate(pivot_cols):
        particular[col] = work[r][n]
    if not free_cols:
        return LinearSolveResult(
            status="unique", rank=rank, n_unknowns=n, solution=tuple(particular)
        )
    basis = []
    for free in free_cols:
        vec = [Fraction(0)] * n
        vec[free] = Fraction(1)
        for r, col in enumerate(pivot_cols):
            vec[col] = -work[r][free]
        basis.append(tuple(vec))
    return LinearSolveResult(
        status="underdetermined",
        rank=rank,
        n_unknowns=n,
        solution=tuple(particular),
        nullspace=tuple(basis),
    )


def require_feasible(result: LinearSolveResult, context: str) -> LinearSolveResult:
    if result.status == "infeasible":
        raise InconsistentSystemError(
            f"{context}: constraints {', '.join(result.conflict)} conflict",
            conflict=result.conflict,
        )
    return result
