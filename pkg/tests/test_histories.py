from __future__ import annotations

import itertools

import numpy as np
import pytest

from bornlab.errors import DimensionMismatchError, HistoryCountError
from bornlab.hilbert import Projector, StateVector
from bornlab.histories import (
    History,
    HistorySet,
    HistoryStep,
    collapsed_probability,
    consistency_check,
    uncollapsed_probability,
)

HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)


def z_resolution():
    return [Projector.from_cells([0], 2), Projector.from_cells([1], 2)]


def plus():
    return StateVector(np.array([1.0, 1.0]) / np.sqrt(2))


class TestCollapsedProbability:
    def test_identity_projector_single_step(self):
        step = HistoryStep([Projector.from_cells([(0, 2)], 2)])
        history = History((step,), (0,))
        assert collapsed_probability(history, StateVector([0.6, 0.8])) == pytest.approx(1.0)

    def test_repeated_projection(self):
        steps = (HistoryStep(z_resolution()), HistoryStep(z_resolution()))
        e0 = StateVector([1, 0])
        assert collapsed_probability(History(steps, (0, 0)), e0) == pytest.approx(1.0)
        assert collapsed_probability(History(steps, (0, 1)), e0) == 0.0

    def test_hadamard_between_z_steps(self):
        steps = (
            HistoryStep(z_resolution()),
            HistoryStep(z_resolution(), HADAMARD),
        )
        value = collapsed_probability(History(steps, (0, 0)), StateVector([1, 0]))
        assert value == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        steps = (HistoryStep(z_resolution()),)
        with pytest.raises(DimensionMismatchError):
            collapsed_probability(History(steps, (0,)), StateVector([1, 0, 0]))


class TestUncollapsedProbability:
    def test_single_step_equals_collapsed(self):
        rng = np.random.default_rng(0)
        step = HistoryStep(z_resolution(), HADAMARD)
        for _ in range(10):
            psi = StateVector(rng.normal(size=2) + 1j * rng.normal(size=2))
            for choice in (0, 1):
                history = History((step,), (choice,))
                assert uncollapsed_probability(history, psi) == pytest.approx(
                    collapsed_probability(history, psi), abs=1e-12
                )

    def test_single_step_equals_weight_of_evolved_state(self):
        psi = StateVector([0.8, 0.6j])
        step = HistoryStep(z_resolution(), HADAMARD)
        history = History((step,), (0,))
        evolved = HADAMARD @ psi.normalized().amplitudes
        expected = abs(evolved[0]) ** 2
        assert uncollapsed_probability(history, psi) == pytest.approx(expected)

    def test_two_step_same_basis(self):
        steps = (HistoryStep(z_resolution()), HistoryStep(z_resolution()))
        psi = plus()
        for choices in itertools.product((0, 1), repeat=2):
            history = History(steps, choices)
            assert uncollapsed_probability(history, psi) == pytest.approx(
                collapsed_probability(history, psi), abs=1e-12
            )


class TestConsistencyCheck:
    def commuting_set(self):
        diag = np.diag([np.exp(0.4j), np.exp(-1.1j)])
        return HistorySet(
            [HistoryStep(z_resolution(), diag), HistoryStep(z_resolution(), diag)]
        )

    def interference_set(self, epsilon=1e-8):
        return HistorySet(
            [
                HistoryStep(z_resolution()),
                HistoryStep(z_resolution(), HADAMARD),
            ],
            epsilon=epsilon,
        )

    def test_commuting_chain_consistent(self):
        report = consistency_check(self.commuting_set(), plus())
        assert report.consistent
        assert report.max_discrepancy < 1e-12

    def test_interference_inconsistent_with_half_gap(self):
        report = consistency_check(self.interference_set(), plus())
        assert not report.consistent
        assert report.max_discrepancy == pytest.approx(0.5, abs=1e-12)
        assert report.worst.kind in ("pair", "marginal")

    def test_vacuous_epsilon(self):
        report = consistency_check(self.interference_set(epsilon=1.0), plus())
        assert report.consistent

    def test_collapsed_sums_to_one(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            psi = StateVector(rng.normal(size=2) + 1j * rng.normal(size=2))
            report = consistency_check(self.interference_set(), psi)
            assert report.collapsed_sum == pytest.approx(1.0, abs=1e-9)
            assert report.uncollapsed_sum == pytest.approx(1.0, abs=1e-9)

    def test_three_step_commuting(self):
        steps = [HistoryStep(z_resolution()) for _ in range(3)]
        report = consistency_check(HistorySet(steps), plus())
        assert report.consistent
        assert report.n_histories == 8

    def test_marginal_event_discrepancy(self):
        # preparing a superposition, measuring, then recombining: the final
        # marginal shows the interference between the two paths
        report = consistency_check(self.interference_set(), plus())
        marginals = [d for d in report.discrepancies if d.kind == "marginal"]
        assert max(d.gap for d in marginals) == pytest.approx(0.5, abs=1e-12)

    def test_pair_cap(self):
        steps = [HistoryStep(z_resolution()) for _ in range(3)]
        with pytest.raises(HistoryCountError):
            consistency_check(HistorySet(steps), plus(), pair_cap=4)

    def test_history_count_cap(self):
        with pytest.raises(HistoryCountError):
            HistorySet(
                [HistoryStep(z_resolution()) for _ in range(6)], cap=32
            )


class TestHistorySetValidation:
    def test_resolution_must_sum_to_identity(self):
        with pytest.raises(Exception):
            HistoryStep([Projector.from_cells([0], 2)])

    def test_enumeration_order(self):
        hs = HistorySet([HistoryStep(z_resolution()), HistoryStep(z_resolution())])
        assert [h.choices for h in hs.histories()] == [
            (0, 0),
            (0, 1),
            (1, 0),
            (1, 1),
        ]
        assert hs.n_histories == 4
