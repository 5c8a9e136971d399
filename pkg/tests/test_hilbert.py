from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bornlab.errors import (
    DegeneracyViolationError,
    DimensionMismatchError,
    IncompleteMeasureError,
    InvalidDensityError,
    InvalidGrainingError,
    InvalidStateError,
    UnitarityError,
)
from bornlab.hilbert import (
    BooleanSublattice,
    CoarseGraining,
    DensityMatrix,
    GrainingFamily,
    MeasureTable,
    Projector,
    SeparatingSet,
    StateVector,
    SymmetryUnitary,
    born_weight,
    check_additivity,
    permutation_unitary,
    phase_unitary,
    sublattice_from_graining,
    trace_weight,
)


def unit_separating(d: int) -> SeparatingSet:
    return SeparatingSet(
        np.eye(d), [Projector.from_cells([i], d) for i in range(d)]
    )


def random_state(rng, d: int) -> StateVector:
    vec = rng.normal(size=d) + 1j * rng.normal(size=d)
    return StateVector(vec)


def haar_unitary(rng, d: int) -> np.ndarray:
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


class TestBornWeight:
    def test_eigenstate(self):
        psi = StateVector([1, 0])
        assert born_weight(psi, Projector.from_cells([0], 2)) == 1.0

    def test_equal_amplitudes(self):
        psi = StateVector([1, 1])
        assert born_weight(psi, Projector.from_cells([0], 2)) == pytest.approx(0.5)

    def test_two_one_masses(self):
        psi = StateVector([np.sqrt(2), 1, 0])
        assert born_weight(psi, Projector.from_cells([0], 3)) == pytest.approx(2 / 3)

    def test_zero_vector_rejected(self):
        with pytest.raises(InvalidStateError):
            born_weight(StateVector([0, 0]), Projector.from_cells([0], 2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            born_weight(StateVector([1, 0]), Projector.from_cells([0], 3))

    def test_unnormalized_input_accepted(self):
        psi = StateVector([3, 4])
        assert born_weight(psi, Projector.from_cells([0], 2)) == pytest.approx(9 / 25)

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_complement_sums_to_one(self, d, seed):
        rng = np.random.default_rng(seed)
        psi = random_state(rng, d)
        proj = Projector.from_cells(
            [i for i in range(d) if rng.integers(2)], d
        )
        total = born_weight(psi, proj) + born_weight(psi, proj.complement())
        assert total == pytest.approx(1.0, abs=1e-10)

    @given(st.integers(2, 5), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_scale_and_phase_invariance(self, d, seed):
        rng = np.random.default_rng(seed)
        psi = random_state(rng, d)
        proj = Projector.from_cells([0], d)
        scale = complex(rng.normal(), rng.normal())
        if abs(scale) < 1e-6:
            scale = 1j
        scaled = StateVector(psi.amplitudes * scale)
        assert born_weight(scaled, proj) == pytest.approx(
            born_weight(psi, proj), abs=1e-12
        )

    @given(st.integers(2, 5), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_unitary_covariance(self, d, seed):
        rng = np.random.default_rng(seed)
        psi = random_state(rng, d)
        proj = Projector.from_cells([0, 1], d)
        u = haar_unitary(rng, d)
        moved_psi = StateVector(u @ psi.amplitudes)
        moved_proj = Projector.from_matrix(
            u @ proj.as_matrix() @ u.conj().T, tol=1e-9
        )
        assert born_weight(moved_psi, moved_proj) == pytest.approx(
            born_weight(psi, proj), abs=1e-10
        )


class TestTraceWeight:
    def test_maximally_mixed(self):
        rho = DensityMatrix(np.eye(2) / 2)
        assert trace_weight(rho, Projector.from_cells([0], 2)) == pytest.approx(0.5)

    def test_orthogonal_support(self):
        rho = DensityMatrix([[1, 0], [0, 0]])
        assert trace_weight(rho, Projector.from_cells([1], 2)) == 0.0

    def test_mixture(self):
        rho = DensityMatrix([[0.3, 0], [0, 0.7]])
        assert trace_weight(rho, Projector.from_cells([0], 2)) == pytest.approx(0.3)

    def test_rejects_non_unit_trace(self):
        with pytest.raises(InvalidDensityError):
            DensityMatrix(np.eye(2))

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(InvalidDensityError):
            DensityMatrix([[1.5, 0], [0, -0.5]])

    @given(st.integers(2, 5), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_pure_density_matches_vector_rule(self, d, seed):
        rng = np.random.default_rng(seed)
        psi = random_state(rng, d)
        rho = DensityMatrix.pure(psi)
        proj = Projector.from_cells([0], d)
        assert trace_weight(rho, proj) == pytest.approx(
            born_weight(psi, proj), abs=1e-10
        )


class TestProjector:
    def test_matrix_form_validated(self):
        with pytest.raises(InvalidStateError):
            Projector.from_matrix([[0.5, 0.5], [0.5, 0.6]])

    def test_diagonal_matrix_canonicalizes_to_cells(self):
        proj = Projector.from_matrix(np.diag([1.0, 0.0, 1.0]))
        assert proj.cells == ((0, 1), (2, 3))

    def test_rank_and_complement(self):
        proj = Projector.from_cells([0, 2], 4)
        assert proj.rank == 2
        assert proj.complement().index_set() == {1, 3}

    def test_onto_vector(self):
        proj = Projector.onto_vector([1, 1])
        assert proj.rank == 1
        assert born_weight(StateVector([1, -1]), proj) == pytest.approx(0.0, abs=1e-12)


class TestGraining:
    def test_rejects_empty_block(self):
        with pytest.raises(InvalidGrainingError):
            CoarseGraining(2, [(0, 0), (0, 2)])

    def test_rejects_gap(self):
        with pytest.raises(InvalidGrainingError):
            CoarseGraining(3, [(0, 1), (2, 3)])

    def test_refines(self):
        fine = CoarseGraining.unit_cells(4)
        coarse = CoarseGraining(4, [(0, 2), (2, 4)])
        assert fine.refines(coarse)
        assert not coarse.refines(fine)

    def test_family_partial_order(self):
        family = GrainingFamily(
            [
                CoarseGraining.unit_cells(4),
                CoarseGraining(4, [(0, 2), (2, 4)]),
                CoarseGraining(4, [(0, 4)]),
            ]
        )
        assert family.is_partial_order_consistent()


class TestSublattice:
    def test_two_singleton_generators(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(2))
        keys = [p.key()[2] for p in lattice.generators]
        assert keys == [((0, 1),), ((1, 2),)]

    def test_block_generators(self):
        lattice = sublattice_from_graining(CoarseGraining(3, [(0, 2), (2, 3)]))
        assert [p.index_set() for p in lattice.generators] == [{0, 1}, {2}]

    def test_three_blocks_give_eight_elements(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(3))
        elements = list(lattice.elements())
        assert len(elements) == 8 == lattice.element_count
        ranks = sorted(p.rank for p in elements)
        assert ranks == [0, 1, 1, 1, 2, 2, 2, 3]

    def test_lazy_above_limit(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(25))
        assert lattice.element_count == 2**25
        gen = lattice.elements()
        assert next(gen).rank == 0

    def test_contains(self):
        lattice = sublattice_from_graining(CoarseGraining(4, [(0, 2), (2, 3), (3, 4)]))
        assert lattice.contains(Projector.from_cells([(0, 2), (3, 4)], 4))
        assert not lattice.contains(Projector.from_cells([0], 4))


class TestPermutationUnitary:
    def test_identity(self):
        sep = unit_separating(3)
        u = permutation_unitary([0, 1, 2], sep)
        assert np.allclose(u.matrix, np.eye(3))

    def test_swap_is_antidiagonal(self):
        sep = unit_separating(2)
        u = permutation_unitary([1, 0], sep)
        assert np.allclose(u.matrix, [[0, 1], [1, 0]])

    def test_three_cycle_conjugation(self):
        sep = unit_separating(3)
        u = permutation_unitary([1, 2, 0], sep)
        for k in range(3):
            moved = u.matrix @ sep.projectors[k].as_matrix() @ u.matrix.conj().T
            target = sep.projectors[(k + 1) % 3].as_matrix()
            assert np.max(np.abs(moved - target)) < 1e-10
            assert np.allclose(
                u.matrix @ sep.vectors[k].amplitudes,
                sep.vectors[(k + 1) % 3].amplitudes,
            )

    def test_multicell_blocks(self):
        graining = CoarseGraining(4, [(0, 2), (2, 4)])
        psi = StateVector([1, 2, 1, 2])
        sep = SeparatingSet.from_graining(psi, graining)
        u = permutation_unitary([1, 0], sep)
        moved = u.matrix @ sep.projectors[0].as_matrix() @ u.matrix.conj().T
        assert np.max(np.abs(moved - sep.projectors[1].as_matrix())) < 1e-10

    def test_unequal_blocks_rejected(self):
        graining = CoarseGraining(3, [(0, 2), (2, 3)])
        sep = SeparatingSet.from_graining(StateVector([1, 1, 1]), graining)
        with pytest.raises(DegeneracyViolationError):
            permutation_unitary([1, 0], sep)


class TestPhaseUnitary:
    def test_zero_phases(self):
        sep = unit_separating(2)
        u = phase_unitary([0.0, 0.0], sep)
        assert np.allclose(u.matrix, np.eye(2))

    def test_pi_zero(self):
        sep = unit_separating(2)
        u = phase_unitary([np.pi, 0.0], sep)
        assert np.allclose(u.matrix, np.diag([-1.0, 1.0]))

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            phase_unitary([0.1], unit_separating(2))

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_weights_invariant(self, seed):
        rng = np.random.default_rng(seed)
        d = 4
        sep = unit_separating(d)
        psi = random_state(rng, d)
        thetas = rng.uniform(0, 2 * np.pi, size=d)
        u = phase_unitary(thetas, sep)
        moved = StateVector(u.matrix @ psi.amplitudes)
        for proj in sep.projectors:
            conj = u.conjugate_projector(proj)
            assert conj == proj
            assert born_weight(moved, proj) == pytest.approx(
                born_weight(psi, proj), abs=1e-10
            )


class TestSymmetryUnitary:
    def test_rejects_nonunitary(self):
        with pytest.raises(UnitarityError):
            SymmetryUnitary([[1, 0], [0, 2]])


class TestSeparatingSet:
    def test_rejects_nonorthonormal(self):
        with pytest.raises(InvalidStateError):
            SeparatingSet(
                [[1, 0], [1, 1]],
                [Projector.from_cells([0], 2), Projector.from_cells([1], 2)],
            )

    def test_rejects_wrong_projector(self):
        with pytest.raises(InvalidStateError):
            SeparatingSet(
                np.eye(2),
                [Projector.from_cells([1], 2), Projector.from_cells([0], 2)],
            )


class TestCheckAdditivity:
    def test_born_table_is_additive(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(3))
        psi = StateVector([1, 2, 3])
        table = MeasureTable.born_table(psi, lattice.elements())
        report = check_additivity(table, lattice)
        assert report.ok

    def test_constructed_violation(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(2))
        table = MeasureTable()
        table.assign(lattice.generators[0], 0.5)
        table.assign(lattice.generators[1], 0.5)
        table.assign(lattice.identity(), 0.9)
        report = check_additivity(table, lattice)
        assert not report.ok
        assert len(report.violations) == 1

    def test_uniform_generator_table_extends(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(4))
        table = MeasureTable()
        for gen in lattice.generators:
            table.assign(gen, 0.25)
        report = check_additivity(table, lattice)
        assert report.ok

    def test_incomplete_table_raises(self):
        lattice = sublattice_from_graining(CoarseGraining.unit_cells(2))
        table = MeasureTable()
        table.assign(lattice.generators[0], 0.5)
        with pytest.raises(IncompleteMeasureError):
            check_additivity(table, lattice)


class TestBooleanSublatticeValidation:
    def test_overlapping_generators_rejected(self):
        with pytest.raises(InvalidGrainingError):
            BooleanSublattice(
                [Projector.from_cells([0, 1], 3), Projector.from_cells([1, 2], 3)]
            )

    def test_partial_cover_rejected(self):
        with pytest.raises(InvalidGrainingError):
            BooleanSublattice([Projector.from_cells([0], 2)])
