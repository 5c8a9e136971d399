"""Consistency checking for projector histories.

A history is one projector per time step, drawn from a per-step resolution
of the identity, with a unitary applied before each step.  Two probability
computations are compared: the stepwise one, which reduces and renormalizes
the state at every projection, and the chained one, which applies the whole
operator string to the uncollapsed state.  For a single history the two
coincide identically (the renormalization factors telescope); genuine
disagreement appears on coarse-grained events, where the chained
computation picks up interference cross-terms while the stepwise one is
additive.  The consistency check therefore compares the two measures over
the event algebra: per history, per two-history union, and per final-time
marginal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, HistoryCountError, InvalidStateError
from .hilbert import Projector, StateVector

DEFAULT_EPSILON = 1e-8
DEFAULT_HISTORY_CAP = 10**6
DEFAULT_PAIR_CAP = 4096
RESOLUTION_TOL = 1e-10


def _as_unitary(matrix, dim: int) -> np.ndarray:
    arr = np.asarray(matrix, dtype=complex)
    if arr.shape != (dim, dim):
        raise DimensionMismatchError(f"unitary must be {dim}x{dim}")
    if np.max(np.abs(arr.conj().T @ arr - np.eye(dim))) > 1e-10:
        raise InvalidStateError("inter-step evolution must be unitary")
    return arr


@dataclass(frozen=True)
class HistoryStep:
    """One time step: a unitary followed by a resolution of the identity."""

    unitary: np.ndarray
    resolution: tuple[Projector, ...]

    def __init__(self, resolution, unitary=None):
        resolution = tuple(resolution)
        if not resolution:
            raise InvalidStateError("a step needs at least one projector")
        dim = resolution[0].dim
        total = np.zeros((dim, dim), dtype=complex)
        for proj in resolution:
            if proj.dim != dim:
                raise DimensionMismatchError("projectors in a step must share a dimension")
            total = total + proj.as_matrix()
        if np.max(np.abs(total - np.eye(dim))) > RESOLUTION_TOL:
            raise InvalidStateError("step projectors must sum to the identity")
        unitary = np.eye(dim, dtype=complex) if unitary is None else _as_unitary(unitary, dim)
        object.__setattr__(self, "resolution", resolution)
        object.__setattr__(self, "unitary", unitary)

    @property
    def dim(self) -> int:
        return self.resolution[0].dim


@dataclass(frozen=True)
class History:
    """An ordered choice of one projector per step."""

    steps: tuple[HistoryStep, ...]
    choices: tuple[int, ...]

    def projectors(self):
        return tuple(step.resolution[c] for step, c in zip(self.steps, self.choices))

    @property
    def times(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.steps) + 1))


@dataclass(frozen=True)
class HistorySet:
    """Every history over the chosen per-step resolutions."""

    steps: tuple[HistoryStep, ...]
    epsilon: float = DEFAULT_EPSILON

    def __init__(self, steps, epsilon: float = DEFAULT_EPSILON, cap: int = DEFAULT_HISTORY_CAP):
        steps = tuple(steps)
        if not steps:
            raise InvalidStateError("a history set needs at least one step")
        dim = steps[0].dim
        for step in steps:
            if step.dim != dim:
                raise DimensionMismatchError("steps live on different spaces")
        count = 1
        for step in steps:
            count *= len(step.resolution)
            if count > cap:
                raise HistoryCountError(
                    f"{count}+ histories exceed the cap of {cap}; coarsen the resolutions"
                )
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "epsilon", float(epsilon))

    @property
    def dim(self) -> int:
        return self.steps[0].dim

    @property
    def n_histories(self) -> int:
        count = 1
        for step in self.steps:
            count *= len(step.resolution)
        return count

    def histories(self):
        ranges = [range(len(step.resolution)) for step in self.steps]
        for choices in itertools.product(*ranges):
            yield History(self.steps, tuple(choices))


def _chain_vector(history: History, psi0: StateVector) -> np.ndarray:
    psi = psi0.normalized().amplitudes
    for step, choice in zip(history.steps, history.choices):
        if step.dim != psi.shape[0]:
            raise DimensionMismatchError("history and state dimensions differ")
        psi = step.resolution[choice].apply(step.unitary @ psi)
    return psi


def collapsed_probability(history: History, psi0: StateVector) -> float:
    """Product of stepwise reduction weights.

    Evolve, project, record the projection's weight, renormalize, repeat;
    a projection that annihilates the state ends the product at zero.
    """
    psi = psi0.normalized().amplitudes
    product = 1.0
    for step, choice in zip(history.steps, history.choices):
        if step.dim != psi.shape[0]:
            raise DimensionMismatchError("history and state dimensions differ")
        psi = step.unitary @ psi
        projected = step.resolution[choice].apply(psi)
        weight = float(np.real(np.vdot(projected, projected)))
        product *= weight
        if product == 0.0:
            return 0.0
        psi = projected / np.sqrt(weight)
    return product


def uncollapsed_probability(history: History, psi0: StateVector) -> float:
    """Squared norm of the full chained vector applied to the initial state."""
    chained = _chain_vector(history, psi0)
    return float(np.real(np.vdot(chained, chained)))


@dataclass(frozen=True)
class EventDiscrepancy:
    """Disagreement between the additive and chained measures on one event."""

    kind: str  # "history" | "pair" | "marginal"
    label: str
    additive: float
    chained: float

    @property
    def gap(self) -> float:
        return abs(self.additive - self.chained)


@dataclass(frozen=True)
class ConsistencyReport:
    verdict: str  # "CONSISTENT" | "INCONSISTENT"
    max_discrepancy: float
    worst: EventDiscrepancy | None
    epsilon: float
    collapsed_sum: float
    uncollapsed_sum: float
    n_histories: int
    discrepancies: tuple[EventDiscrepancy, ...]

    @property
    def consistent(self) -> bool:
        return self.verdict == "CONSISTENT"


def consistency_check(
    history_set: HistorySet,
    psi0: StateVector,
    *,
    pair_cap: int = DEFAULT_PAIR_CAP,
) -> ConsistencyReport:
    """Compare stepwise-reduction and uncollapsed-chain probabilities.

    Checks every history, every union of two histories, and every
    final-time marginal.  On a union the chained measure is the squared
    norm of the summed chain vectors, so any interference between branches
    shows up as a discrepancy; commuting chains agree to rounding.  The
    verdict is CONSISTENT iff the largest discrepancy is at most the set's
    epsilon.  Both per-history families must sum to one.
    """
    n = history_set.n_histories
    if n > pair_cap:
        raise HistoryCountError(
            f"{n} histories exceed the pairwise-analysis cap of {pair_cap}; "
            "coarsen the resolutions"
        )
    histories = list(history_set.histories())
    chains = np.array([_chain_vector(h, psi0) for h in histories])
    collapsed = np.array([collapsed_probability(h, psi0) for h in histories])
    chained = np.real(np.einsum("nd,nd->n", chains.conj(), chains))

    discrepancies: list[EventDiscrepancy] = []
    for h, p_add, p_chain in zip(histories, collapsed, chained):
        discrepancies.append(
            EventDiscrepancy(
                kind="history",
                label=str(h.choices),
                additive=float(p_add),
                chained=float(p_chain),
            )
        )

    # unions of two histories: chained measure of {h, h'} is |C_h psi + C_h' psi|^2
    gram = chains.conj() @ chains.T
    for i in range(n):
        for j in range(i + 1, n):
            additive = float(collapsed[i] + collapsed[j])
            chained_pair = float(chained[i] + chained[j] + 2.0 * np.real(gram[i, j]))
            discrepancies.append(
                EventDiscrepancy(
                    kind="pair",
                    label=f"{histories[i].choices}+{histories[j].choices}",
                    additive=additive,
                    chained=chained_pair,
                )
            )

    # final-time marginals: evolve without any projection, then project once
    psi = psi0.normalized().amplitudes
    for step in history_set.steps:
        psi = step.unitary @ psi
    last = history_set.steps[-1]
    for k, proj in enumerate(last.resolution):
        image = proj.apply(psi)
        marginal_chain = float(np.real(np.vdot(image, image)))
        marginal_additive = float(
            sum(
                p
                for h, p in zip(histories, collapsed)
                if h.choices[-1] == k
            )
        )
        discrepancies.append(
            EventDiscrepancy(
                kind="marginal",
                label=f"final={k}",
                additive=marginal_additive,
                chained=marginal_chain,
            )
        )

    worst = max(discrepancies, key=lambda d: d.gap)
    max_gap = worst.gap
    verdict = "CONSISTENT" if max_gap <= history_set.epsilon else "INCONSISTENT"
    return ConsistencyReport(
        verdict=verdict,
        max_discrepancy=max_gap,
        worst=worst,
        epsilon=history_set.epsilon,
        collapsed_sum=float(collapsed.sum()),
        uncollapsed_sum=float(chained.sum()),
        n_histories=n,
        discrepancies=tuple(discrepancies),
    )
