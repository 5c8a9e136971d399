from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bornlab.lln import (
    LlnQuery,
    frequency_audit,
    lln_limit_scan,
    lln_tail,
    lln_tail_exact,
)


def brute_force_tail(n: int, delta: float, p: float) -> float:
    # strict-deviation test in exact arithmetic (float comparison flips
    # boundary cases), probability mass accumulated in floats
    total = 0.0
    dlt, chance = Fraction(delta), Fraction(p)
    for k in range(n + 1):
        if abs(Fraction(k, n) - chance) > dlt:
            total += math.comb(n, k) * p**k * (1 - p) ** (n - k)
    return total


class TestLlnTail:
    def test_textbook_rational(self):
        assert lln_tail_exact(10, 0.2, 0.5) == Fraction(112, 1024)
        assert lln_tail(10, 0.2, 0.5) == 0.109375

    def test_boundary_deviation_excluded(self):
        # k=3 and k=7 sit exactly at |k/10 - 0.5| = 0.2 and must not count
        included = {k for k in range(11) if abs(Fraction(k, 10) - Fraction(1, 2)) > Fraction(1, 5)}
        assert included == {0, 1, 2, 8, 9, 10}

    def test_impossible_deviation(self):
        assert lln_tail(10, 0.6, 0.5) == 0.0
        assert lln_tail(7, 0.5, 0.5) == 0.0

    def test_degenerate_chance(self):
        assert lln_tail(100, 0.1, 0.0) == 0.0
        assert lln_tail(100, 0.1, 1.0) == 0.0

    def test_invalid_queries(self):
        with pytest.raises(ValueError):
            LlnQuery(0, 0.1, 0.5)
        with pytest.raises(ValueError):
            LlnQuery(10, 0.0, 0.5)
        with pytest.raises(ValueError):
            LlnQuery(10, 0.1, 1.5)

    def test_matches_brute_force_up_to_thirty(self):
        for n in range(1, 31):
            for p in (0.5, 0.3, 0.25):
                for delta in (0.05, 0.21, 0.4):
                    assert lln_tail(n, delta, p) == pytest.approx(
                        brute_force_tail(n, delta, p), abs=1e-14
                    )

    def test_log_domain_continuity(self):
        # exact and log-domain paths agree where both are usable
        exact = float(lln_tail_exact(1000, 0.05, 0.5))
        from bornlab import lln

        logs = [
            lln._log_pmf(1000, k, 0.5)
            for k in lln._tail_indices(1000, Fraction(1, 20), Fraction(1, 2))
        ]
        peak = max(logs)
        log_value = math.exp(peak) * sum(math.exp(x - peak) for x in logs)
        assert log_value == pytest.approx(exact, rel=1e-10)

    @given(
        st.integers(1, 200),
        st.floats(0.01, 0.9),
        st.floats(0.05, 0.95),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_delta(self, n, delta, p):
        wider = lln_tail(n, min(0.99, delta + 0.07), p)
        assert wider <= lln_tail(n, delta, p) + 1e-15

    @given(st.integers(1, 150), st.floats(0.01, 0.5), st.integers(1, 255))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_under_p_flip(self, n, delta, num):
        # dyadic chances make 1-p exact, so the identity holds to rounding
        p = num / 256.0
        assert lln_tail(n, delta, p) == pytest.approx(
            lln_tail(n, delta, 1.0 - p), abs=1e-14
        )

    def test_symmetry_exact(self):
        for num, den in ((1, 3), (2, 7), (13, 64)):
            p = Fraction(num, den)
            assert lln_tail_exact(40, Fraction(1, 10), p) == lln_tail_exact(
                40, Fraction(1, 10), 1 - p
            )


class TestLimitScan:
    def test_textbook_scan(self):
        report = lln_limit_scan(0.5, 0.1, (10, 100, 1000))
        assert all(v > 0 for v in report.values)
        assert report.strictly_decreasing
        assert report.values[-1] < 0.01

    def test_single_element(self):
        report = lln_limit_scan(0.5, 0.1, (1000,), threshold=1e-3)
        assert report.converged
        assert report.final_is_minimum

    def test_huge_delta_all_zero(self):
        report = lln_limit_scan(0.5, 0.9, (10, 100))
        assert report.values == (0.0, 0.0)
        assert report.converged

    def test_requires_increasing(self):
        with pytest.raises(ValueError):
            lln_limit_scan(0.5, 0.1, (100, 10))


class TestFrequencyAudit:
    def test_certain_outcome(self):
        audit = frequency_audit([0, 0, 0, 0], [1.0, 0.0])
        row = audit.row(0)
        assert row.deviation == 0.0
        assert row.surprise == 0.0

    def test_adversarial_sequence(self):
        audit = frequency_audit([0] * 100, [0.5, 0.5])
        assert audit.row(0).surprise < 1e-20

    def test_balanced_sequence_unsurprising(self):
        audit = frequency_audit([0, 1] * 50, [0.5, 0.5])
        assert audit.row(0).deviation == 0.0
        assert audit.row(0).surprise > 0.9

    def test_outcome_outside_table(self):
        with pytest.raises(IndexError):
            frequency_audit([0, 2], [0.5, 0.5])

    def test_collapse_ensemble_audit(self):
        # stochastic-reduction outcomes audited against the state's weights:
        # nothing should look rarer than a 3-sigma fluctuation
        import numpy as np

        from bornlab.collapse import CollapseModel, ensemble_outcomes
        from bornlab.hilbert import StateVector
        from bornlab.lln import lln_tail

        model = CollapseModel(np.zeros((2, 2)), [np.diag([1.0, -1.0])], gamma=1.0)
        psi0 = StateVector([np.sqrt(0.3), np.sqrt(0.7)])
        report = ensemble_outcomes(
            model, psi0, 800, t_max=30.0, dt=1e-3, seed=4321
        )
        assert all(o >= 0 for o in report.outcomes)
        weights = [row.born for row in report.rows]
        audit = frequency_audit(report.outcomes, weights)
        for row in audit.rows:
            three_sigma = 3.0 * (row.weight * (1 - row.weight) / audit.n) ** 0.5
            floor = lln_tail(audit.n, three_sigma, row.weight)
            assert row.surprise >= floor

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            frequency_audit([0], [0.5, 0.4])
