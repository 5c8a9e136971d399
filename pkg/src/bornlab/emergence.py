"""Coarse-graining derivation laboratory.

Executable versions of the symmetry constructions that force probability
weights on a grained configuration space: phase elimination, the
equiprobable case, equal-mass refinement of a block, rational-weight
states, the continuity limit to arbitrary states, and a linear-constraint
solver that decides whether a graining family pins the weight table
uniquely.

Exact rational arithmetic is used wherever a rank or equality decision
matters; floating point only enters at the boundary (irrational masses,
reported values).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    ConvergenceFailureError,
    DegeneracyViolationError,
    DimensionMismatchError,
    InvalidGrainingError,
    InvalidStateError,
    PreconditionError,
    ResolutionError,
)
from .exactlin import LinearSolveResult, require_feasible, solve_exact
from .hilbert import (
    CoarseGraining,
    GrainingFamily,
    MeasureTable,
    Projector,
    SeparatingSet,
    StateVector,
    born_weight,
    permutation_unitary,
)
from .trace import DERIVATION_RULES, DerivationTrace

DEFAULT_SUBDIVISION_CAP = 2**40
DEFAULT_DENOMINATOR_CAP = 10**6


def hypercube_split_count(n: int) -> int:
    """Number of half-scale sub-cells of an n-dimensional hypercube cell.

    Sizes resolution errors: one halving step multiplies the cell count by
    this factor.
    """
    n = int(n)
    if n <= 0:
        raise ValueError(f"cube dimension must be positive, got {n}")
    return 2**n


def halving_depth(required_subcells: int, n_dims: int = 1) -> int:
    """Halving steps of an n-cube cell needed to reach the given sub-cell count."""
    per_step = hypercube_split_count(n_dims)
    depth, count = 0, 1
    while count < required_subcells:
        count *= per_step
        depth += 1
    return depth


# ---------------------------------------------------------------------------
# mass profiles and rational states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MassProfile:
    """Per-cell nonnegative masses (|amplitude|^2, cell volume included).

    ``exact`` marks profiles whose masses are Fractions; those flow through
    the exact refinement and solver paths.
    """

    masses: tuple
    exact: bool

    def __init__(self, masses):
        masses = tuple(masses)
        if not masses:
            raise InvalidStateError("mass profile needs at least one cell")
        exact = all(isinstance(m, (Fraction, int)) for m in masses)
        if exact:
            masses = tuple(Fraction(m) for m in masses)
        else:
            masses = tuple(float(m) for m in masses)
        if any(m < 0 for m in masses):
            raise InvalidStateError("masses must be nonnegative")
        if sum(masses) <= 0:
            raise InvalidStateError("total mass must be positive")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "exact", exact)

    @classmethod
    def from_state(cls, psi: StateVector) -> "MassProfile":
        return cls(psi.masses().tolist())

    @property
    def dim(self) -> int:
        return len(self.masses)

    @property
    def total(self):
        return sum(self.masses)

    def block_mass(self, start: int, stop: int):
        return sum(self.masses[start:stop])

    def as_fractions(self) -> tuple[Fraction, ...]:
        """Masses as exact rationals (floats convert exactly, base 2)."""
        if self.exact:
            return self.masses
        return tuple(Fraction(m) for m in self.masses)


@dataclass(frozen=True)
class RationalState:
    """A state whose block masses are proportional to integers.

    ``weights[k]`` is the integer mass carried by block ``k`` of the
    graining; ``profiles[k]`` optionally shapes how that mass spreads over
    the block's cells (rational, summing to 1; default uniform).
    """

    weights: tuple[int, ...]
    graining: CoarseGraining
    profiles: tuple[tuple[Fraction, ...], ...]

    def __init__(self, weights, graining: CoarseGraining, profiles=None):
        weights = tuple(int(w) for w in weights)
        if len(weights) != graining.n_blocks:
            raise DimensionMismatchError("one weight per block required")
        if any(w < 0 for w in weights):
            raise InvalidStateError("weights must be nonnegative integers")
        if not any(w > 0 for w in weights):
            raise InvalidStateError("at least one weight must be positive")
        if profiles is None:
            profiles = tuple(
                tuple(Fraction(1, stop - start) for _ in range(start, stop))
                for start, stop in graining.blocks
            )
        else:
            profiles = tuple(tuple(Fraction(p) for p in prof) for prof in profiles)
            for prof, (start, stop) in zip(profiles, graining.blocks):
                if len(prof) != stop - start:
                    raise DimensionMismatchError("profile length must match block size")
                if any(p < 0 for p in prof):
                    raise InvalidStateError("profile entries must be nonnegative")
                if sum(prof) != 1:
                    raise InvalidStateError("each block profile must sum to 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "graining", graining)
        object.__setattr__(self, "profiles", profiles)

    @property
    def total_weight(self) -> int:
        return sum(self.weights)

    def cell_masses(self) -> MassProfile:
        masses = []
        for weight, prof in zip(self.weights, self.profiles):
            masses.extend(Fraction(weight) * p for p in prof)
        return MassProfile(masses)

    def to_state(self) -> StateVector:
        return StateVector([math.sqrt(float(m)) for m in self.cell_masses().masses])

    def separating_set(self) -> SeparatingSet:
        return SeparatingSet.from_graining(self.to_state(), self.graining)


# ---------------------------------------------------------------------------
# equal-mass refinement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EqualMassRefinement:
    """Result of splitting one block into equal-mass pieces.

    The refined graining lives on a subdivided grid: every original cell
    becomes ``subdivision`` sub-cells of equal mass, so each cut lands on a
    sub-cell boundary.  ``cuts`` are the cut positions in original cell
    coordinates; ``pieces`` are the new block projectors on the refined
    grid.
    """

    graining: CoarseGraining
    pieces: tuple[Projector, ...]
    piece_masses: tuple
    subdivision: int
    cuts: tuple
    exact: bool

    @property
    def block_mass(self):
        return sum(self.piece_masses)


def _resolve_block(graining: CoarseGraining, block) -> int:
    if isinstance(block, int):
        if not 0 <= block < graining.n_blocks:
            raise InvalidGrainingError(f"no block {block} in graining")
        return block
    if isinstance(block, Projector):
        for i in range(graining.n_blocks):
            if graining.block_projector(i) == block:
                return i
        raise InvalidGrainingError("projector is not a block of the graining")
    raise TypeError("block must be an index or a block projector")


def _span_mass_fractional(masses, lo: Fraction, hi: Fraction) -> Fraction:
    """Mass of [lo, hi] in cell coordinates, uniform density within cells."""
    total = Fraction(0)
    for cell in range(math.floor(lo), math.ceil(hi)):
        overlap = min(hi, Fraction(cell + 1)) - max(lo, Fraction(cell))
        if overlap > 0:
            total += masses[cell] * overlap
    return total


def _exact_cuts(masses, start, stop, m):
    """Cut positions (Fractions, original cell coordinates) splitting
    masses[start:stop] into m equal-mass runs."""
    total = sum(masses[start:stop])
    cuts = []
    cum = Fraction(0)
    cell = start
    for j in range(1, m):
        target = total * j / m
        while cum + masses[cell] < target or masses[cell] == 0:
            cum += masses[cell]
            cell += 1
            if cell >= stop:  # numerical safety; cannot trigger with exact sums
                cell = stop - 1
                break
        q = (target - cum) / masses[cell]
        cuts.append(cell + q)
    return cuts


def equal_mass_refine(
    state_or_masses,
    graining: CoarseGraining,
    block,
    m: int,
    *,
    max_subdivision: int = DEFAULT_SUBDIVISION_CAP,
    mass_tol: float = 1e-10,
) -> EqualMassRefinement:
    """Split one block of a graining into ``m`` disjoint equal-mass pieces.

    The running mass of the state over the block is inverted at the m-1
    equal-mass targets (each cell's mass spreads uniformly across the
    cell), and the grid is subdivided just enough for every cut to land on
    a sub-cell boundary.  Rational masses give an exact split; float masses
    are quantized to relative accuracy ``mass_tol``.  A zero-mass block is
    split into m equal-width pieces.

    Raises :class:`ResolutionError` when the required subdivision exceeds
    ``max_subdivision``.
    """
    if m < 1:
        raise ValueError("piece count m must be >= 1")
    if isinstance(state_or_masses, StateVector):
        profile = MassProfile.from_state(state_or_masses)
    elif isinstance(state_or_masses, MassProfile):
        profile = state_or_masses
    else:
        profile = MassProfile(state_or_masses)
    if profile.dim != graining.dim:
        raise DimensionMismatchError("mass profile and graining disagree on grid size")
    index = _resolve_block(graining, block)
    start, stop = graining.blocks[index]
    block_mass = profile.block_mass(start, stop)

    if block_mass == 0:
        # zero restriction: any split will do; use equal widths
        width = Fraction(stop - start, m)
        cuts = [start + width * j for j in range(1, m)]
        exact = True
    elif profile.exact:
        cuts = _exact_cuts(profile.masses, start, stop, m)
        exact = True
    else:
        masses = profile.as_fractions()
        raw_cuts = _exact_cuts(masses, start, stop, m)
        max_cell = max(masses[start:stop])
        exact_block = sum(masses[start:stop])
        allowed = Fraction(mass_tol) * exact_block

        def mass_deviation(candidate) -> Fraction:
            bounds = [Fraction(start)] + list(candidate) + [Fraction(stop)]
            worst = Fraction(0)
            for j in range(m):
                piece = _span_mass_fractional(masses, bounds[j], bounds[j + 1])
                worst = max(worst, abs(piece - exact_block / m))
            return worst

        # best small-denominator cuts first (recovers exactly rational
        # float inputs); fall back to one power-of-two grid meeting mass_tol
        cuts = [c.limit_denominator(max_subdivision) for c in raw_cuts]
        if (
            cuts
            and math.lcm(*(c.denominator for c in cuts)) <= max_subdivision
            and mass_deviation(cuts) <= allowed
        ):
            pass
        else:
            needed = float(2 * max_cell / allowed) if allowed > 0 else math.inf
            grid = 1
            while grid < needed:
                grid *= 2
                if grid > max_subdivision:
                    raise ResolutionError(
                        f"float split of block {index} into {m} pieces needs "
                        f"{grid} sub-cells per cell (cap {max_subdivision})",
                        required_subcells=grid,
                    )
            cuts = [Fraction(round(c * grid), grid) for c in raw_cuts]
        exact = False

    denom = math.lcm(*(Fraction(c).denominator for c in cuts)) if cuts else 1
    if denom > max_subdivision:
        raise ResolutionError(
            f"splitting block {index} into {m} equal-mass pieces needs "
            f"{denom} sub-cells per cell ({halving_depth(denom)} halving "
            f"steps; cap {max_subdivision})",
            required_subcells=denom,
        )
    L = denom
    fine_dim = graining.dim * L

    def scaled(x) -> int:
        return int(x * L)

    cut_positions = [scaled(Fraction(c)) for c in cuts]
    if any(
        not (start * L < pos < stop * L) for pos in cut_positions
    ) or sorted(set(cut_positions)) != cut_positions:
        raise ResolutionError(
            f"block {index} cannot support {m} distinct equal-mass pieces at "
            f"subdivision {L}",
            required_subcells=L,
        )

    piece_bounds = [start * L] + cut_positions + [stop * L]
    pieces = tuple(
        Projector.from_cells([(piece_bounds[j], piece_bounds[j + 1])], fine_dim)
        for j in range(m)
    )

    fine_masses = profile.as_fractions()

    def span_mass(lo: int, hi: int) -> Fraction:
        total = Fraction(0)
        first_cell, last_cell = lo // L, (hi - 1) // L
        for cell in range(first_cell, last_cell + 1):
            cell_lo, cell_hi = cell * L, (cell + 1) * L
            overlap = min(hi, cell_hi) - max(lo, cell_lo)
            total += fine_masses[cell] * Fraction(overlap, L)
        return total

    piece_masses = tuple(
        span_mass(piece_bounds[j], piece_bounds[j + 1]) for j in range(m)
    )

    blocks = []
    for i, (b_start, b_stop) in enumerate(graining.blocks):
        if i == index:
            blocks.extend(
                (piece_bounds[j], piece_bounds[j + 1]) for j in range(m)
            )
        else:
            blocks.append((b_start * L, b_stop * L))
    refined = CoarseGraining(fine_dim, blocks)

    if exact:
        out_masses = piece_masses
        out_cuts = tuple(cuts)
    else:
        out_masses = tuple(float(x) for x in piece_masses)
        out_cuts = tuple(float(c) for c in cuts)
    return EqualMassRefinement(
        graining=refined,
        pieces=pieces,
        piece_masses=out_masses,
        subdivision=L,
        cuts=out_cuts,
        exact=exact,
    )


@dataclass(frozen=True)
class EqualMassGrid:
    """A regrid of a rational profile into cells of one common mass.

    Cell ``i`` of the original grid becomes ``counts[i]`` new cells, each
    carrying the profile's mass quantum (the gcd of the cell masses).  The
    new grid is the desk-scale stand-in for refining until every cell is
    interchangeable, which is what makes permutation constraints dense
    enough to pin a weight table.
    """

    profile: MassProfile
    quantum: Fraction
    counts: tuple[int, ...]
    offsets: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.offsets[-1]

    def map_block(self, block: tuple[int, int]) -> tuple[int, int]:
        a, b = block
        return (self.offsets[a], self.offsets[b])

    def map_graining(self, graining: CoarseGraining) -> CoarseGraining:
        return CoarseGraining(self.dim, [self.map_block(b) for b in graining.blocks])

    def unit_graining(self) -> CoarseGraining:
        return CoarseGraining.unit_cells(self.dim)


def equal_mass_grid(profile: MassProfile) -> EqualMassGrid:
    """Regrid a strictly positive rational profile into equal-mass cells."""
    if not profile.exact:
        raise PreconditionError("equal-mass regridding needs exact rational masses")
    masses = profile.masses
    if any(m <= 0 for m in masses):
        raise PreconditionError("equal-mass regridding needs strictly positive masses")
    denom = math.lcm(*(m.denominator for m in masses))
    numerators = [int(m * denom) for m in masses]
    g = math.gcd(*numerators)
    quantum = Fraction(g, denom)
    counts = tuple(a // g for a in numerators)
    offsets = [0]
    for c in counts:
        offsets.append(offsets[-1] + c)
    refined = MassProfile([quantum] * offsets[-1])
    return EqualMassGrid(
        profile=refined, quantum=quantum, counts=counts, offsets=tuple(offsets)
    )


# ---------------------------------------------------------------------------
# equiprobable case
# ---------------------------------------------------------------------------


def _component_coefficients(psi: StateVector, separating: SeparatingSet, tol: float):
    coeffs = [
        complex(np.vdot(vec.amplitudes, psi.amplitudes)) for vec in separating.vectors
    ]
    residual = psi.amplitudes.copy()
    for c, vec in zip(coeffs, separating.vectors):
        residual = residual - c * vec.amplitudes
    if np.linalg.norm(residual) > tol * math.sqrt(psi.norm2):
        raise PreconditionError(
            "state has components outside the separating family's span"
        )
    return coeffs


def equiprobable_values(
    psi: StateVector,
    separating: SeparatingSet,
    lattice=None,
    *,
    tol: float = 1e-10,
) -> tuple[MeasureTable, DerivationTrace]:
    """Weight table forced for a state with equal-modulus coefficients.

    Every projector of the separating family receives 1/d and lattice
    projectors orthogonal to their sum receive 0.  The trace replays the
    forcing argument: phase elimination, permutation symmetry, the
    complement construction, and additivity.  The single-projector case is
    the eigenvector-eigenvalue rule and needs a lattice with at least three
    disjoint spare projectors.

    A non-constant modulus raises :class:`PreconditionError` naming the
    offending pair.
    """
    psi.require_nonzero()
    d = separating.size
    coeffs = _component_coefficients(psi, separating, tol)
    norm2 = psi.norm2
    moduli = [abs(c) ** 2 / norm2 for c in coeffs]
    for j in range(d):
        for k in range(j + 1, d):
            if abs(moduli[j] - moduli[k]) > tol:
                raise PreconditionError(
                    f"|c_{j}|^2 = {moduli[j]:.12g} and |c_{k}|^2 = {moduli[k]:.12g} "
                    f"differ; the equiprobable construction needs a constant modulus"
                )

    trace = DerivationTrace(rules=DERIVATION_RULES)
    table = MeasureTable()

    phases = [float(np.angle(c)) if abs(c) > 0 else 0.0 for c in coeffs]
    s_phase = trace.add(
        "phase-elim",
        "coefficients replaced by their moduli; all weights unchanged",
        premises=("invariance",),
        payload={"phases": phases},
    )

    if d == 1:
        return _eigenvector_rule(psi, separating, lattice, trace, s_phase, tol, table)

    witnessed = _permutation_witnessed(separating)
    s_perm = trace.add(
        "permutation",
        f"the {d} block weights are pairwise equal",
        premises=("invariance", "degeneracy", s_phase),
        payload={"witness": "constructed" if witnessed else "degeneracy axiom"},
    )
    s_comp = trace.add(
        "complement",
        "the first block extended by the family's complement carries the same "
        "weight, giving d equal projectors that sum to the identity",
        premises=("invariance", s_perm),
    )
    s_add = trace.add(
        "additivity",
        f"d equal weights summing to 1 are each 1/{d}",
        premises=("additivity", "normalization", s_comp),
    )

    for proj in separating.projectors:
        table.assign(proj, Fraction(1, d))
    if lattice is not None:
        covered = set()
        for proj in separating.projectors:
            if proj.cells is not None:
                covered |= proj.index_set()
        zeros = []
        for gen in lattice.generators:
            if proj_cells_disjoint(gen, covered):
                table.assign(gen, Fraction(0))
                zeros.append(gen.key()[2])
        if zeros:
            trace.add(
                "additivity",
                "projectors orthogonal to the family's span carry weight 0",
                premises=("additivity", s_add),
                payload={"zeroed": [str(z) for z in zeros]},
            )
    return table, trace


def proj_cells_disjoint(proj: Projector, covered: set[int]) -> bool:
    return proj.cells is not None and not (proj.index_set() & covered)


def _permutation_witnessed(separating: SeparatingSet) -> bool:
    """True when an explicit permutation unitary exists at this grid size."""
    try:
        if separating.size >= 2:
            swap = list(range(separating.size))
            swap[0], swap[1] = swap[1], swap[0]
            permutation_unitary(swap, separating)
        return True
    except DegeneracyViolationError:
        return False


def _eigenvector_rule(psi, separating, lattice, trace, s_phase, tol, table):
    proj = separating.projectors[0]
    inside = born_weight(psi, proj)
    if abs(inside - 1.0) > tol:
        raise PreconditionError(
            "the single-projector rule needs the state inside the projector's range"
        )
    if lattice is None:
        raise PreconditionError(
            "the single-projector rule needs a lattice with at least three "
            "disjoint spare projectors"
        )
    covered = proj.index_set() if proj.cells is not None else set()
    spares = [
        gen for gen in lattice.generators if proj_cells_disjoint(gen, covered)
    ]
    if len(spares) < 3:
        raise PreconditionError(
            f"only {len(spares)} disjoint spare projectors available; need 3"
        )
    s_perm = trace.add(
        "permutation",
        "the spare projectors all annihilate the state and are pairwise "
        "equiprobable under permutations fixing the supporting projector",
        premises=("invariance", "degeneracy", s_phase),
    )
    s_comp = trace.add(
        "complement",
        "merging two spares yields a projector equiprobable with a single "
        "spare; its weight equals both v and 2v",
        premises=("invariance", "degeneracy", s_perm),
    )
    s_zero = trace.add(
        "additivity",
        "v = 2v forces every spare weight to 0",
        premises=("additivity", s_comp),
    )
    trace.add(
        "additivity",
        "the supporting projector carries the full weight 1",
        premises=("additivity", "normalization", s_zero),
    )
    table.assign(proj, Fraction(1))
    for gen in spares:
        table.assign(gen, Fraction(0))
    return table, trace


# ---------------------------------------------------------------------------
# rational weights
# ---------------------------------------------------------------------------


def rational_born_values(
    rational: RationalState,
    graining: CoarseGraining | None = None,
    family: GrainingFamily | None = None,
    *,
    max_subdivision: int = DEFAULT_SUBDIVISION_CAP,
) -> tuple[MeasureTable, DerivationTrace]:
    """Weight table forced for integer-weight states: m_j / sum(m_k).

    Each block with weight m_k is split into m_k equal-mass pieces (via
    :func:`equal_mass_refine` on a common subdivided grid), the
    equiprobable argument runs on the refined family of sum(m_k) pieces,
    and additivity reassembles the block weights.  Exact rational
    arithmetic throughout.

    ``family`` (when given and not generated-closed) must already contain
    a fine-enough refinement; otherwise the refinement is generated.
    """
    graining = graining or rational.graining
    if graining.blocks != rational.graining.blocks:
        raise InvalidGrainingError("graining must match the rational state's blocks")
    weights = rational.weights
    total = rational.total_weight
    profile = rational.cell_masses()

    # common subdivided grid: collect cuts per block, then take one lcm
    per_block_cuts: dict[int, list[Fraction]] = {}
    denominators = [1]
    for k, weight in enumerate(weights):
        if weight == 0:
            continue
        start, stop = graining.blocks[k]
        block_mass = profile.block_mass(start, stop)
        if block_mass == 0:
            width = Fraction(stop - start, weight)
            cuts = [start + width * j for j in range(1, weight)]
        else:
            cuts = _exact_cuts(profile.masses, start, stop, weight)
        per_block_cuts[k] = cuts
        denominators.extend(Fraction(c).denominator for c in cuts)
    subdivision = math.lcm(*denominators)
    if subdivision > max_subdivision:
        raise ResolutionError(
            f"equal-mass refinement needs {subdivision} sub-cells per cell "
            f"({halving_depth(subdivision)} halving steps; cap {max_subdivision})",
            required_subcells=subdivision,
        )
    L = subdivision
    fine_dim = graining.dim * L
    fine_blocks: list[tuple[int, int]] = []
    piece_owner: list[int] = []
    for k, (start, stop) in enumerate(graining.blocks):
        if k in per_block_cuts:
            bounds = (
                [start * L]
                + [int(c * L) for c in per_block_cuts[k]]
                + [stop * L]
            )
            for j in range(len(bounds) - 1):
                fine_blocks.append((bounds[j], bounds[j + 1]))
                piece_owner.append(k)
        else:
            fine_blocks.append((start * L, stop * L))
            piece_owner.append(k)
    refined = CoarseGraining(fine_dim, fine_blocks)

    if family is not None and not family.allow_generated:
        if not _family_contains_refinement(family, graining, weights, profile):
            raise PreconditionError(
                "the graining family holds no refinement splitting every block "
                "into its weight's worth of equal-mass pieces"
            )

    trace = DerivationTrace(rules=DERIVATION_RULES)
    s_refine = trace.add(
        "refinement",
        f"each weight-m block split into m equal-mass pieces "
        f"({total} pieces total, subdivision {L})",
        premises=("stability",),
        payload={"subdivision": L, "weights": list(weights)},
    )
    s_phase = trace.add(
        "phase-elim",
        "piece coefficients replaced by moduli",
        premises=("invariance",),
    )
    s_perm = trace.add(
        "permutation",
        f"all {total} equal-mass pieces are pairwise equiprobable",
        premises=("invariance", "degeneracy", s_phase, s_refine),
    )
    s_equal = trace.add(
        "additivity",
        f"each piece carries weight 1/{total}",
        premises=("additivity", "normalization", s_perm),
    )

    table = MeasureTable()
    for k, weight in enumerate(weights):
        value = Fraction(weight, total)
        table.assign(graining.block_projector(k), value)
    trace.add(
        "additivity",
        "block weights reassemble as (pieces in block)/(total pieces)",
        premises=("additivity", "stability", s_equal),
        payload={
            "weights": {str(k): f"{weights[k]}/{total}" for k in range(len(weights))}
        },
    )
    # zero weight on refined-lattice projectors disjoint from the support
    for k, weight in enumerate(weights):
        if weight == 0:
            table.assign(graining.block_projector(k), Fraction(0))
    return table, trace


def _family_contains_refinement(family, graining, weights, profile) -> bool:
    for member in family.members:
        if member.dim != graining.dim or not member.refines(graining):
            continue
        ok = True
        for k, (start, stop) in enumerate(graining.blocks):
            if weights[k] == 0:
                continue
            inner = [b for b in member.blocks if start <= b[0] and b[1] <= stop]
            if len(inner) != weights[k]:
                ok = False
                break
            masses = [profile.block_mass(a, b) for a, b in inner]
            if len(set(masses)) > 1:
                ok = False
                break
        if ok:
            return True
    return False


# ---------------------------------------------------------------------------
# continuity limit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Approximant:
    denominator_cap: int
    weights: tuple[int, int]
    value: Fraction
    value_error: float
    state_error: float


@dataclass(frozen=True)
class BornLimitResult:
    value: float
    exact_value: Fraction
    record: tuple[Approximant, ...]
    converged: bool


def born_limit(
    psi: StateVector,
    proj: Projector,
    tol: float,
    *,
    start_denominator: int = 64,
    denominator_cap: int = DEFAULT_DENOMINATOR_CAP,
) -> BornLimitResult:
    """Approach an arbitrary state through integer-weight states.

    Builds a sequence of two-weight rational states separating ``proj``
    and its complement, converging to ``psi`` in norm; the weight of
    ``proj`` under each approximant is its rational weight ratio.  The
    recorded value-error sequence is non-increasing after the first term
    (each sweep step takes the best rational below the denominator cap).

    Raises :class:`ConvergenceFailureError` when the cap is reached before
    ``tol``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    psi.require_nonzero()
    target = born_weight(psi, proj)
    exact_target = Fraction(target)
    record: list[Approximant] = []
    cap = max(1, int(start_denominator))
    converged = False
    best: Fraction | None = None
    while True:
        frac = exact_target.limit_denominator(cap)
        if best is None or abs(frac - exact_target) <= abs(best - exact_target):
            best = frac
        m1 = best.numerator
        m2 = best.denominator - best.numerator
        value_error = float(abs(best - exact_target))
        state_error = math.sqrt(
            (math.sqrt(float(best)) - math.sqrt(target)) ** 2
            + (math.sqrt(float(1 - best)) - math.sqrt(1.0 - target)) ** 2
        )
        record.append(
            Approximant(
                denominator_cap=cap,
                weights=(m1, m2),
                value=best,
                value_error=value_error,
                state_error=state_error,
            )
        )
        if value_error < tol:
            converged = True
            break
        if cap >= denominator_cap:
            break
        cap = min(denominator_cap, cap * 2)
    if not converged:
        raise ConvergenceFailureError(
            f"no rational approximant below denominator {denominator_cap} "
            f"reaches tolerance {tol}",
            record=tuple(record),
        )
    final = record[-1]
    return BornLimitResult(
        value=float(final.value),
        exact_value=final.value,
        record=tuple(record),
        converged=True,
    )


# ---------------------------------------------------------------------------
# uniqueness solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniquenessResult:
    """Outcome of the weight-uniqueness linear solve.

    ``status`` is ``unique`` or ``underdetermined``.  For unique systems
    ``table`` holds the solved weights (exact rationals).  Otherwise
    ``freedom`` gives the solution-space dimension and ``witnesses`` two
    distinct valid tables.
    """

    status: str
    rank: int
    n_unknowns: int
    unknown_keys: tuple
    table: MeasureTable | None = None
    freedom: int = 0
    witnesses: tuple[MeasureTable, MeasureTable] | None = None
    constraint_count: int = 0

    @property
    def unique(self) -> bool:
        return self.status == "unique"


def measure_uniqueness_solve(
    state_or_profile,
    family: GrainingFamily,
    *,
    tol: float = 1e-10,
) -> UniquenessResult:
    """Decide whether additivity, invariance, and stability pin the weights.

    Unknowns are the block projectors across the family, identified across
    grainings by their cell ranges (stability).  Constraints: per-graining
    normalization, block-vs-refinement additivity for every refining pair,
    and equality of blocks related by a mass-profile-preserving cell
    permutation (the constructible invariance unitaries).  The system is
    assembled and solved in exact rational arithmetic.
    """
    if isinstance(state_or_profile, StateVector):
        profile = MassProfile.from_state(state_or_profile)
    elif isinstance(state_or_profile, MassProfile):
        profile = state_or_profile
    else:
        profile = MassProfile(state_or_profile)
    masses = profile.as_fractions()
    total = sum(masses)
    if total == 0:
        raise InvalidStateError("state must carry positive total mass")
    dims = {g.dim for g in family.members}
    if len(dims) != 1:
        raise DimensionMismatchError("family members must share one grid")
    if dims != {profile.dim}:
        raise DimensionMismatchError("profile and family disagree on grid size")

    unknowns: dict = {}

    def unknown_index(block: tuple[int, int]) -> int:
        key = block
        if key not in unknowns:
            unknowns[key] = len(unknowns)
        return unknowns[key]

    for graining in family.members:
        for block in graining.blocks:
            unknown_index(block)
    keys = list(unknowns)

    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    labels: list[str] = []

    def add_row(coeffs: dict[int, Fraction], value: Fraction, label: str) -> None:
        row = [Fraction(0)] * len(keys)
        for idx, coeff in coeffs.items():
            row[idx] += coeff
        rows.append(row)
        rhs.append(value)
        labels.append(label)

    for gi, graining in enumerate(family.members):
        add_row(
            {unknown_index(b): Fraction(1) for b in graining.blocks},
            Fraction(1),
            f"norm[g{gi}]",
        )
        # invariance: blocks whose mass profiles match as multisets swap
        # under a cell permutation preserving the (phase-stripped) state;
        # a chain of equalities per matching group spans all the pairs
        groups: dict = {}
        for i, (a, b) in enumerate(graining.blocks):
            groups.setdefault(tuple(sorted(masses[a:b])), []).append(i)
        for members in groups.values():
            for i, j in zip(members, members[1:]):
                add_row(
                    {
                        unknown_index(graining.blocks[i]): Fraction(1),
                        unknown_index(graining.blocks[j]): Fraction(-1),
                    },
                    Fraction(0),
                    f"invar[g{gi}]:{i}~{j}",
                )

    for gi, coarse in enumerate(family.members):
        for gj, fine in enumerate(family.members):
            if gi == gj or not fine.refines(coarse):
                continue
            for b_start, b_stop in coarse.blocks:
                inner = [
                    blk
                    for blk in fine.blocks
                    if b_start <= blk[0] and blk[1] <= b_stop
                ]
                if len(inner) == 1 and inner[0] == (b_start, b_stop):
                    continue
                coeffs = {unknown_index((b_start, b_stop)): Fraction(1)}
                for blk in inner:
                    idx = unknown_index(blk)
                    coeffs[idx] = coeffs.get(idx, Fraction(0)) - 1
                add_row(coeffs, Fraction(0), f"refine[g{gi}<g{gj}]:{b_start}-{b_stop}")

    result: LinearSolveResult = solve_exact(rows, rhs, labels)
    require_feasible(result, "weight-uniqueness system")

    dim0 = family.members[0].dim

    def block_projector(block: tuple[int, int]) -> Projector:
        return Projector.from_cells([block], dim0)

    if result.status == "unique":
        table = MeasureTable()
        for key, value in zip(keys, result.solution):
            table.assign(block_projector(key), value)
        return UniquenessResult(
            status="unique",
            rank=result.rank,
            n_unknowns=result.n_unknowns,
            unknown_keys=tuple(keys),
            table=table,
            constraint_count=len(rows),
        )

    # underdetermined: exhibit two distinct valid tables around the
    # reference additive solution (always feasible)
    reference = [profile.block_mass(a, b) / total for a, b in keys]
    direction = result.nullspace[0]
    t_limit = None
    for ref, step in zip(reference, direction):
        if step == 0:
            continue
        bound = (1 - ref) / step if step > 0 else ref / (-step)
        t_limit = bound if t_limit is None else min(t_limit, bound)
    scale = t_limit / 2 if t_limit is not None and t_limit > 0 else Fraction(1, 2)
    alt = [ref + scale * step for ref, step in zip(reference, direction)]
    table_a, table_b = MeasureTable(slack=1.0), MeasureTable(slack=1.0)
    for key, va, vb in zip(keys, reference, alt):
        table_a.assign(block_projector(key), va)
        table_b.assign(block_projector(key), vb)
    return UniquenessResult(
        status="underdetermined",
        rank=result.rank,
        n_unknowns=result.n_unknowns,
        unknown_keys=tuple(keys),
        freedom=result.freedom,
        witnesses=(table_a, table_b),
        constraint_count=len(rows),
    )
