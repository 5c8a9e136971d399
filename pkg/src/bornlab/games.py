"""Decision calculus for quantum games.

A game is a prepared state, an observable with spectral data, and a payoff
function on the spectrum.  Games related by spectrum relabeling (with the
payoff pre-composed accordingly) or by unitary conjugation of state and
observable describe the same physical process and are recorded as
equipreferable; two further axioms constrain values across payoff shifts
(sure-thing) and payoff negation (zero-sum).  A linear solver over the
generated equivalence closure recovers forced game values, in particular
the equal-amplitude two-outcome value (half the summed payoffs) and the
equal-weight equivalence of projector games.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    LinearityError,
    PreconditionError,
    RelabelingError,
    UnitarityError,
)
from .hilbert import Projector, StateVector, SymmetryUnitary, born_weight
from .trace import GAME_RULES, DerivationTrace

SPECTRUM_TOL = 1e-10
WEIGHT_TOL = 1e-10
KEY_DECIMALS = 10


# ---------------------------------------------------------------------------
# payoffs and relabelings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffinePayoff:
    """Payoff x -> slope*x + offset.

    Linear (additive over label sums) exactly when the offset vanishes;
    nonzero offsets arise from composing a linear payoff with label shifts.
    """

    slope: float
    offset: float = 0.0

    def __call__(self, x: float) -> float:
        return self.slope * float(x) + self.offset

    @property
    def is_linear(self) -> bool:
        return self.offset == 0.0

    def key(self):
        return ("affine", round(self.slope, 12), round(self.offset, 12))

    def compose_affine(self, eps: float, c: float) -> "AffinePayoff":
        """Payoff composed with the label map x -> eps*x + c."""
        return AffinePayoff(self.slope * eps, self.offset + self.slope * c)


@dataclass(frozen=True)
class TabularPayoff:
    """Finite payoff table over spectrum values."""

    table: tuple[tuple[float, float], ...]

    def __init__(self, mapping):
        items = tuple(sorted((float(x), float(u)) for x, u in dict(mapping).items()))
        object.__setattr__(self, "table", items)

    def __call__(self, x: float) -> float:
        for key, value in self.table:
            if abs(key - float(x)) <= SPECTRUM_TOL:
                return value
        raise KeyError(f"payoff table has no entry for label {x}")

    @property
    def is_linear(self) -> bool:
        return False

    def key(self):
        return ("table", tuple((round(x, 10), round(u, 10)) for x, u in self.table))


def linear_payoff(slope: float = 1.0) -> AffinePayoff:
    return AffinePayoff(float(slope), 0.0)


@dataclass(frozen=True)
class Relabeling:
    """Invertible map on spectrum labels.

    ``shift``, ``negate`` and their compositions stay affine; finite
    permutations and general pairs of callables are supported for maps with
    no affine extension.
    """

    kind: str
    eps: float | None = None
    c: float | None = None
    mapping: tuple[tuple[float, float], ...] | None = None
    fwd: object = None
    inv: object = None

    @classmethod
    def shift(cls, s: float) -> "Relabeling":
        return cls(kind="shift", eps=1.0, c=float(s))

    @classmethod
    def negate(cls) -> "Relabeling":
        return cls(kind="negate", eps=-1.0, c=0.0)

    @classmethod
    def affine(cls, eps: float, c: float) -> "Relabeling":
        if eps == 0.0:
            raise RelabelingError("affine relabeling needs a nonzero scale")
        return cls(kind="affine", eps=float(eps), c=float(c))

    @classmethod
    def identity(cls) -> "Relabeling":
        return cls(kind="affine", eps=1.0, c=0.0)

    @classmethod
    def permutation(cls, mapping: dict) -> "Relabeling":
        pairs = tuple(sorted((float(a), float(b)) for a, b in mapping.items()))
        sources = [a for a, _ in pairs]
        targets = sorted(b for _, b in pairs)
        if len(set(sources)) != len(sources) or targets != sources:
            raise RelabelingError("permutation must be a bijection of the label set")
        return cls(kind="permutation", mapping=pairs)

    @classmethod
    def general(cls, fwd, inv) -> "Relabeling":
        return cls(kind="general", fwd=fwd, inv=inv)

    def __call__(self, x: float) -> float:
        x = float(x)
        if self.eps is not None:
            return self.eps * x + self.c
        if self.mapping is not None:
            for a, b in self.mapping:
                if abs(a - x) <= SPECTRUM_TOL:
                    return b
            raise RelabelingError(f"label {x} outside the permutation's domain")
        return float(self.fwd(x))

    def inverse(self, y: float) -> float:
        y = float(y)
        if self.eps is not None:
            return (y - self.c) / self.eps
        if self.mapping is not None:
            for a, b in self.mapping:
                if abs(b - y) <= SPECTRUM_TOL:
                    return a
            raise RelabelingError(f"label {y} outside the permutation's range")
        return float(self.inv(y))

    def as_affine(self) -> tuple[float, float] | None:
        if self.eps is not None:
            return (self.eps, self.c)
        return None


# ---------------------------------------------------------------------------
# games
# ---------------------------------------------------------------------------


def _round_key(values) -> tuple:
    arr = np.round(np.asarray(values, dtype=complex), KEY_DECIMALS) + 0.0
    return tuple(complex(v) for v in arr.ravel())


@dataclass(frozen=True)
class Game:
    """Prepared state, spectral observable, payoff.

    The observable is stored as spectral pairs (label, projector) with
    distinct labels and orthogonal projectors summing to the identity; the
    state is stored normalized.
    """

    state: np.ndarray
    spectral: tuple[tuple[float, Projector], ...]
    payoff: object

    def __init__(self, state, spectral, payoff):
        if isinstance(state, StateVector):
            state = state.amplitudes
        state = np.asarray(state, dtype=complex).reshape(-1)
        norm = np.linalg.norm(state)
        if norm == 0.0:
            raise PreconditionError("game needs a nonzero prepared state")
        state = state / norm
        state.setflags(write=False)
        spectral = tuple(
            (float(lam), proj) for lam, proj in sorted(spectral, key=lambda p: -p[0])
        )
        if not spectral:
            raise PreconditionError("game needs at least one outcome")
        dim = spectral[0][1].dim
        if dim != state.shape[0]:
            raise DimensionMismatchError("state and observable dimensions differ")
        labels = [lam for lam, _ in spectral]
        for a, b in itertools.combinations(labels, 2):
            if abs(a - b) <= SPECTRUM_TOL:
                raise PreconditionError(f"spectral labels {a} and {b} coincide")
        total = sum(proj.as_matrix() for _, proj in spectral)
        if np.max(np.abs(total - np.eye(dim))) > 1e-9:
            raise PreconditionError("spectral projectors must sum to the identity")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "spectral", spectral)
        object.__setattr__(self, "payoff", payoff)

    @classmethod
    def from_observable(cls, state, observable, payoff, *, tol: float = 1e-8) -> "Game":
        obs = np.asarray(observable, dtype=complex)
        if np.max(np.abs(obs - obs.conj().T)) > 1e-10:
            raise PreconditionError("observable must be Hermitian")
        eigvals, eigvecs = np.linalg.eigh(obs)
        spectral = []
        start = 0
        while start < len(eigvals):
            stop = start + 1
            while stop < len(eigvals) and abs(eigvals[stop] - eigvals[start]) <= tol:
                stop += 1
            cols = eigvecs[:, start:stop]
            spectral.append(
                (float(eigvals[start]), Projector.from_matrix(cols @ cols.conj().T, tol=1e-9))
            )
            start = stop
        return cls(state, spectral, payoff)

    @classmethod
    def projector_game(cls, state, proj: Projector, payoff) -> "Game":
        """Game measuring a single projector: labels 1 on it, 0 on the rest."""
        return cls(state, [(1.0, proj), (0.0, proj.complement())], payoff)

    @property
    def dim(self) -> int:
        return self.state.shape[0]

    @property
    def spectrum(self) -> tuple[float, ...]:
        return tuple(lam for lam, _ in self.spectral)

    def observable_matrix(self) -> np.ndarray:
        return sum(lam * proj.as_matrix() for lam, proj in self.spectral)

    def outcome_weights(self) -> tuple[float, ...]:
        psi = StateVector(self.state)
        return tuple(born_weight(psi, proj) for _, proj in self.spectral)

    def born_value(self) -> float:
        """Weighted payoff under the state's projector weights."""
        return float(
            sum(w * self.payoff(lam) for w, (lam, _) in zip(self.outcome_weights(), self.spectral))
        )

    def key(self):
        return (
            _round_key(self.state),
            tuple((round(lam, KEY_DECIMALS), proj.key()) for lam, proj in self.spectral),
            self.payoff.key(),
        )


def relabel_game(game: Game, f: Relabeling) -> Game:
    """Relabeled presentation: labels pushed through f, payoff pre-composed
    with its inverse.  The two games describe the same physical process."""
    new_labels = [f(lam) for lam in game.spectrum]
    for a, b in itertools.combinations(new_labels, 2):
        if abs(a - b) <= SPECTRUM_TOL:
            raise RelabelingError("relabeling collapses two spectrum labels")
    for lam, new in zip(game.spectrum, new_labels):
        if abs(f.inverse(new) - lam) > 1e-9:
            raise RelabelingError("relabeling is not invertible on the spectrum")
    affine = f.as_affine()
    if affine is not None and isinstance(game.payoff, AffinePayoff):
        eps, c = affine
        # payoff o f^{-1}: x -> payoff((x - c)/eps)
        new_payoff = game.payoff.compose_affine(1.0 / eps, -c / eps)
    else:
        new_payoff = TabularPayoff(
            {new: game.payoff(lam) for lam, new in zip(game.spectrum, new_labels)}
        )
    spectral = tuple((new, proj) for new, (_, proj) in zip(new_labels, game.spectral))
    return Game(game.state, spectral, new_payoff)


def transform_game(game: Game, unitary) -> Game:
    """Conjugated presentation: state and observable moved by one unitary."""
    if isinstance(unitary, SymmetryUnitary):
        matrix = unitary.matrix
    else:
        matrix = np.asarray(unitary, dtype=complex)
        dev = np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0])))
        if matrix.shape != (game.dim, game.dim) or dev > 1e-10:
            raise UnitarityError("transformation must be unitary on the game's space")
    spectral = []
    for lam, proj in game.spectral:
        moved = matrix @ proj.as_matrix() @ matrix.conj().T
        spectral.append((lam, Projector.from_matrix(moved, tol=1e-9)))
    return Game(matrix @ game.state, spectral, game.payoff)


# ---------------------------------------------------------------------------
# constraints and the value solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """Linear relation sum(coeff * V(game)) = const."""

    terms: tuple[tuple[tuple, float], ...]  # (game key, coefficient)
    const: float
    kind: str
    note: str = ""

    def residual(self, assignment: dict) -> float:
        return abs(sum(c * assignment[k] for k, c in self.terms) - self.const)


@dataclass(frozen=True)
class GameValue:
    """Solved value of one game, with the trace that produced it."""

    value: float | None
    game_key: tuple
    provenance: DerivationTrace | None = None

    @property
    def known(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class ValueSolveResult:
    values: dict
    rank: int
    n_unknowns: int
    freedom: int
    constraints: tuple[Constraint, ...]
    _solution: np.ndarray | None = None
    _null_basis: np.ndarray | None = None
    _index: dict | None = None

    @property
    def full_rank(self) -> bool:
        return self.freedom == 0

    def value_of(self, game: Game) -> float | None:
        gv = self.values.get(game.key())
        return gv.value if gv is not None else None

    def difference(self, a: Game, b: Game) -> float | None:
        """V(a) - V(b) when the constraints pin that difference, else None.

        A difference can be forced (e.g. by a recorded equivalence) even
        when the individual values float freely.
        """
        ia, ib = self._index.get(a.key()), self._index.get(b.key())
        if ia is None or ib is None:
            return None
        if self._null_basis is not None and self._null_basis.size:
            drift = self._null_basis[:, ia] - self._null_basis[:, ib]
            if np.max(np.abs(drift)) > 1e-9:
                return None
        return float(self._solution[ia] - self._solution[ib])


def _swap_unitary(game: Game, j: int, k: int) -> np.ndarray | None:
    """State-preserving unitary exchanging the j-th and k-th eigenspaces.

    Exists when the two projectors have equal rank and the state's
    components in them have equal norm: the components map onto each other
    and the remaining range directions pair off arbitrarily.
    """
    _, pj = game.spectral[j]
    _, pk = game.spectral[k]
    if pj.rank != pk.rank:
        return None
    vj = pj.apply(game.state)
    vk = pk.apply(game.state)
    nj, nk = np.linalg.norm(vj), np.linalg.norm(vk)
    if abs(nj - nk) > WEIGHT_TOL:
        return None

    def range_basis(proj, lead):
        mat = proj.as_matrix()
        eigvals, eigvecs = np.linalg.eigh(mat)
        cols = [c for c in eigvecs[:, eigvals > 0.5].T]
        if lead is not None:
            ordered = [lead]
            for c in cols:
                r = c - sum(np.vdot(b, c) * b for b in ordered)
                norm = np.linalg.norm(r)
                if norm > 1e-9:
                    ordered.append(r / norm)
            return ordered[: proj.rank]
        return cols[: proj.rank]

    lead_j = vj / nj if nj > WEIGHT_TOL else None
    lead_k = vk / nk if nk > WEIGHT_TOL else None
    basis_j = range_basis(pj, lead_j)
    basis_k = range_basis(pk, lead_k)
    dim = game.dim
    u = np.eye(dim, dtype=complex)
    u -= pj.as_matrix() + pk.as_matrix()
    for bj, bk in zip(basis_j, basis_k):
        u += np.outer(bk, bj.conj()) + np.outer(bj, bk.conj())
    return u


class ValueSolver:
    """Registry of games, recorded equivalences, and axiom constraints."""

    def __init__(self):
        self.games: dict[tuple, Game] = {}
        self.constraints: list[Constraint] = []

    def register(self, game: Game) -> tuple:
        key = game.key()
        self.games.setdefault(key, game)
        return key

    def _equate(self, a: Game, b: Game, kind: str, note: str) -> None:
        ka, kb = self.register(a), self.register(b)
        if ka == kb:
            return
        self.constraints.append(
            Constraint(terms=((ka, 1.0), (kb, -1.0)), const=0.0, kind=kind, note=note)
        )

    def relabel(self, game: Game, f: Relabeling) -> Game:
        moved = relabel_game(game, f)
        self._equate(game, moved, "payoff-equivalence", f"relabel {f.kind}")
        return moved

    def transform(self, game: Game, unitary) -> Game:
        moved = transform_game(game, unitary)
        self._equate(game, moved, "measurement-equivalence", "unitary conjugation")
        return moved

    def sure_thing(self, game: Game, s: float) -> Game:
        """Shifted game: same observable, payoff pre-composed with x -> x+s.

        The value offset equals the payoff of the shift only for a linear
        payoff, so (like negation) the axiom is emitted for linear bases.
        """
        if not (isinstance(game.payoff, AffinePayoff) and game.payoff.is_linear):
            raise LinearityError("the shift axiom needs a linear payoff")
        shifted = Game(game.state, game.spectral, game.payoff.compose_affine(1.0, s))
        ka, kb = self.register(game), self.register(shifted)
        if s != 0.0:
            self.constraints.append(
                Constraint(
                    terms=((kb, 1.0), (ka, -1.0)),
                    const=game.payoff(s),
                    kind="sure-thing",
                    note=f"shift {s}",
                )
            )
        return shifted

    def zero_sum(self, game: Game) -> Game:
        """Negated game: payoff pre-composed with x -> -x; values negate.

        Reversing the labels negates every outcome's payoff only for a
        linear (odd) payoff, so affine offsets are rejected.
        """
        if not (isinstance(game.payoff, AffinePayoff) and game.payoff.is_linear):
            raise LinearityError("the negation axiom needs a linear payoff")
        negated = Game(game.state, game.spectral, game.payoff.compose_affine(-1.0, 0.0))
        ka, kb = self.register(game), self.register(negated)
        self.constraints.append(
            Constraint(
                terms=((ka, 1.0), (kb, 1.0)),
                const=0.0,
                kind="zero-sum",
                note="negation",
            )
        )
        return negated

    # -- canonical closure ---------------------------------------------------

    def expand_game(self, game: Game) -> list[Game]:
        """Apply every canonical move available on one game.

        Moves: state-preserving eigenspace swaps (conjugation), the matching
        label swap (relabeling; affine on two-point spectra), the shift
        decomposition of an affine payoff, and payoff negation.
        """
        produced = []
        n = len(game.spectral)
        weights = game.outcome_weights()
        for j in range(n):
            for k in range(j + 1, n):
                if abs(weights[j] - weights[k]) > WEIGHT_TOL:
                    continue
                u = _swap_unitary(game, j, k)
                if u is None:
                    continue
                produced.append(self.transform(game, u))
                lam_j, lam_k = game.spectral[j][0], game.spectral[k][0]
                if n == 2:
                    swap = Relabeling.affine(-1.0, lam_j + lam_k)
                else:
                    mapping = {lam: lam for lam in game.spectrum}
                    mapping[lam_j], mapping[lam_k] = lam_k, lam_j
                    swap = Relabeling.permutation(mapping)
                produced.append(self.relabel(game, swap))
        if isinstance(game.payoff, AffinePayoff):
            if game.payoff.offset != 0.0 and game.payoff.slope != 0.0:
                produced.append(
                    self.sure_thing(
                        Game(
                            game.state,
                            game.spectral,
                            AffinePayoff(game.payoff.slope, 0.0),
                        ),
                        game.payoff.offset / game.payoff.slope,
                    )
                )
            if game.payoff.is_linear:
                produced.append(self.zero_sum(game))
        return produced

    def expand(self, depth: int) -> None:
        for _ in range(max(0, int(depth))):
            for game in list(self.games.values()):
                self.expand_game(game)

    def solve(self) -> ValueSolveResult:
        keys = list(self.games)
        index = {k: i for i, k in enumerate(keys)}
        if not self.constraints:
            values = {k: GameValue(None, k) for k in keys}
            return ValueSolveResult(
                values=values,
                rank=0,
                n_unknowns=len(keys),
                freedom=len(keys),
                constraints=(),
                _solution=np.zeros(len(keys)),
                _null_basis=np.eye(len(keys)),
                _index=index,
            )
        rows = np.zeros((len(self.constraints), len(keys)))
        rhs = np.zeros(len(self.constraints))
        for r, con in enumerate(self.constraints):
            for key, coeff in con.terms:
                rows[r, index[key]] += coeff
            rhs[r] = con.const
        solution = np.linalg.lstsq(rows, rhs, rcond=None)[0]
        _, singular, vh = np.linalg.svd(rows)
        cutoff = max(rows.shape) * np.finfo(float).eps * (singular[0] if singular.size else 0.0)
        rank = int(np.sum(singular > max(cutoff, 1e-12)))
        null_basis = vh[rank:]
        values = {}
        for key, i in index.items():
            free = null_basis.size and np.max(np.abs(null_basis[:, i])) > 1e-9
            values[key] = GameValue(None if free else float(solution[i]), key)
        return ValueSolveResult(
            values=values,
            rank=rank,
            n_unknowns=len(keys),
            freedom=len(keys) - rank,
            constraints=tuple(self.constraints),
            _solution=solution,
            _null_basis=null_basis,
            _index=index,
        )


def axiom_constraints(
    game: Game, *, shifts: Sequence[float] = (), negate: bool = True
) -> list[Constraint]:
    """Constraints the two decision axioms impose on one game's value.

    Shift constraints need a linear payoff; requesting them for a
    nonlinear payoff raises :class:`LinearityError`.
    """
    solver = ValueSolver()
    solver.register(game)
    if shifts and not getattr(game.payoff, "is_linear", False):
        raise LinearityError("shift constraints need a linear payoff")
    for s in shifts:
        solver.sure_thing(game, float(s))
    if negate:
        if isinstance(game.payoff, AffinePayoff):
            solver.zero_sum(game)
    return list(solver.constraints)


def born_assignment(games: Iterable[Game]) -> dict:
    return {g.key(): g.born_value() for g in games}


def verify_soundness(
    constraints: Iterable[Constraint], games: Iterable[Game], *, tol: float = 1e-10
) -> float:
    """Largest residual of the weight-consistent value assignment.

    The assignment V(g) = sum of projector weights times payoffs satisfies
    every recorded equivalence and axiom; the return value is the worst
    residual (should be below ``tol``; callers assert).
    """
    assignment = born_assignment(games)
    worst = 0.0
    for con in constraints:
        worst = max(worst, con.residual(assignment))
    return worst


# ---------------------------------------------------------------------------
# the equal-amplitude two-outcome derivation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PivotalResult:
    value: GameValue
    solver: ValueSolver
    trace: DerivationTrace
    relation_only: bool = False


def derive_pivotal(
    x1: float,
    x2: float,
    payoff: AffinePayoff | None = None,
    *,
    amplitudes: Sequence[complex] = (1.0, 1.0),
    spectator_amplitude: complex = 0.0,
) -> PivotalResult:
    """Forced value of the equal-amplitude two-outcome game.

    Replays the four-step chain: a state-preserving swap of the two
    eigenspaces (measurement equivalence), the matching label swap (payoff
    equivalence), the shift decomposition of the swapped payoff
    (sure-thing), and payoff negation (zero-sum).  The chain closes to
    2V = payoff(x1) + payoff(x2).  Each step is numerically validated
    against the weight-consistent assignment.

    With a spectator component (a third, zero-labelled outcome holding
    part of the state), the label swap is no longer affine and only the
    symmetry relation between the two outcomes is forced.
    """
    payoff = payoff if payoff is not None else linear_payoff(1.0)
    if not isinstance(payoff, AffinePayoff) or not payoff.is_linear:
        raise LinearityError("the derivation needs a linear payoff")
    if abs(float(x1) - float(x2)) <= SPECTRUM_TOL:
        return _degenerate_pivotal(x1, payoff)
    a1, a2 = complex(amplitudes[0]), complex(amplitudes[1])
    if abs(abs(a1) - abs(a2)) > WEIGHT_TOL or abs(a1) == 0.0:
        raise PreconditionError(
            "the derivation needs equal-modulus amplitudes on the two outcomes"
        )
    c3 = complex(spectator_amplitude)
    if c3 == 0.0:
        state = np.array([a1, a2])
        spectral = [
            (float(x1), Projector.from_cells([0], 2)),
            (float(x2), Projector.from_cells([1], 2)),
        ]
    else:
        state = np.array([a1, a2, c3])
        spectral = [
            (float(x1), Projector.from_cells([0], 3)),
            (float(x2), Projector.from_cells([1], 3)),
            (0.0, Projector.from_cells([2], 3)),
        ]
        if any(abs(lam) <= SPECTRUM_TOL for lam in (float(x1), float(x2))):
            raise PreconditionError(
                "spectator derivations need both labels distinct from 0"
            )

    solver = ValueSolver()
    trace = DerivationTrace(rules=GAME_RULES)
    game = Game(state, spectral, payoff)
    solver.register(game)

    u = _swap_unitary(game, 0, 1)
    conjugated = solver.transform(game, u)
    _validate_step(trace, "measurement-equivalence", game, conjugated, 0.0)

    if c3 == 0.0:
        swap = Relabeling.affine(-1.0, float(x1) + float(x2))
    else:
        swap = Relabeling.permutation(
            {float(x1): float(x2), float(x2): float(x1), 0.0: 0.0}
        )
    relabeled = solver.relabel(conjugated, swap)
    _validate_step(trace, "payoff-equivalence", conjugated, relabeled, 0.0)

    if c3 != 0.0:
        # the swapped payoff has no affine extension fixing the spectator
        # label, so the chain stops at the forced symmetry relation
        return PivotalResult(
            value=GameValue(None, game.key(), provenance=trace),
            solver=solver,
            trace=trace,
            relation_only=True,
        )

    # relabeled payoff is (payoff o -I) o shift(-(x1+x2)); peel the shift
    negated_payoff_game = Game(game.state, game.spectral, payoff.compose_affine(-1.0, 0.0))
    shift = -(float(x1) + float(x2))
    shifted = solver.sure_thing(negated_payoff_game, shift)
    if shifted.key() != relabeled.key() and shift != 0.0:
        raise AssertionError("shift decomposition failed to close the chain")
    _validate_step(
        trace,
        "sure-thing",
        shifted,
        negated_payoff_game,
        negated_payoff_game.payoff(shift),
    )

    negated = solver.zero_sum(game)
    _validate_step(trace, "zero-sum", game, negated, None)

    result = solver.solve()
    value = result.value_of(game)
    expected = 0.5 * (payoff(x1) + payoff(x2))
    if value is None or abs(value - expected) > 1e-9:
        raise AssertionError(
            f"pivotal chain solved to {value}, expected {expected}"
        )
    trace.add(
        "sure-thing",
        f"chain closes: twice the value equals payoff({x1}) + payoff({x2}); "
        f"value = {expected}",
        premises=("sure-thing", "zero-sum"),
        payload={"value": expected, "rank": result.rank, "unknowns": result.n_unknowns},
    )
    return PivotalResult(
        value=GameValue(value, game.key(), provenance=trace),
        solver=solver,
        trace=trace,
    )


def _degenerate_pivotal(x: float, payoff: AffinePayoff) -> PivotalResult:
    """Both labels equal: the game pays payoff(x) on every outcome."""
    state = np.array([1.0, 1.0])
    game = Game(state, [(float(x), Projector.from_cells([0, 1], 2))], payoff)
    solver = ValueSolver()
    key = solver.register(game)
    trace = DerivationTrace(rules=GAME_RULES)
    trace.add(
        "sure-thing",
        f"single-outcome game pays payoff({x}) with certainty",
        premises=("sure-thing",),
        payload={"value": payoff(x)},
    )
    return PivotalResult(
        value=GameValue(payoff(x), key, provenance=trace), solver=solver, trace=trace
    )


def _validate_step(trace, rule, left: Game, right: Game, offset: float | None) -> None:
    """Record a chain step, checking it against the weight assignment.

    ``offset`` None marks a negation step (values must be opposite);
    otherwise V(left) = V(right) + offset must hold.
    """
    lv, rv = left.born_value(), right.born_value()
    residual = abs(lv + rv) if offset is None else abs(lv - rv - offset)
    if residual > 1e-10:
        raise AssertionError(f"{rule} step fails under the weight assignment: {residual}")
    claim = (
        "values negate under payoff reversal"
        if offset is None
        else ("values agree" if offset == 0.0 else f"values differ by {offset}")
    )
    trace.add(
        rule,
        claim,
        premises=(rule,),
        payload={"left": lv, "right": rv, "residual": residual},
    )


def general_equivalence_check(
    result: ValueSolveResult, games: Sequence[Game], *, tol: float = 1e-9
) -> list[dict]:
    """Check solved values across games with matching outcome statistics.

    Two games whose (weight, payoff) outcome profiles coincide — possibly
    with different states and observables — should be valued equally.
    This is checked on solved values, never assumed as an axiom; pairs
    whose difference the constraints leave open are reported as such.
    """

    def profile(game: Game):
        return tuple(
            sorted(
                (round(w, 10), round(game.payoff(lam), 10))
                for w, (lam, _) in zip(game.outcome_weights(), game.spectral)
            )
        )

    rows = []
    profiles = [profile(g) for g in games]
    for i in range(len(games)):
        for j in range(i + 1, len(games)):
            if profiles[i] != profiles[j]:
                continue
            diff = result.difference(games[i], games[j])
            rows.append(
                {
                    "pair": (i, j),
                    "difference": diff,
                    "equal": diff is not None and abs(diff) <= tol,
                    "determined": diff is not None,
                }
            )
    return rows


def value_solve(
    games: Sequence[Game],
    closure_depth: int,
    *,
    relabelings: Sequence[Relabeling] = (),
    unitaries: Sequence[np.ndarray] = (),
) -> ValueSolveResult:
    """Solve for game values over the generated equivalence closure.

    Canonical moves (eigenspace swaps, label swaps, shift decompositions,
    negations) are applied ``closure_depth`` times, together with any
    explicitly supplied relabelings and unitaries.  Depth zero emits no
    constraints and leaves everything undetermined.
    """
    solver = ValueSolver()
    for game in games:
        solver.register(game)
    for _ in range(max(0, int(closure_depth))):
        for game in list(solver.games.values()):
            solver.expand_game(game)
            for f in relabelings:
                try:
                    solver.relabel(game, f)
                except RelabelingError:
                    continue
            for u in unitaries:
                if np.asarray(u).shape == (game.dim, game.dim):
                    solver.transform(game, u)
    return solver.solve()
