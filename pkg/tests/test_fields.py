"""
Tests for fields, generators and rearrangement primitives.
"""

import logging

import numpy as np
import pytest

from membraneopt.domain import build_domain
from membraneopt.exceptions import DomainMismatchError, PreconditionError
from membraneopt.fields import (
    Generator,
    ScalarField,
    align_decreasing,
    align_increasing,
    decreasing_rearrangement,
    distribution_function,
    in_weak_closure,
    increasing_rearrangement,
    inner,
    integrate,
    is_rearrangement,
    support_measure,
)
from membraneopt.models import RectangleSpec


@pytest.fixture
def strip3():
    """Three unit cells in a row."""
    return build_domain(RectangleSpec(width=3.0, height=1.0, resolution=3))


class TestScalarField:
    def test_constant(self, unit_square_3):
        f = ScalarField.constant(unit_square_3, 2.0)
        assert len(f) == 9
        assert f.max == f.min == 2.0

    def test_from_function(self, unit_square_3):
        f = ScalarField.from_function(unit_square_3, lambda x, y: x + 10 * y)
        assert f.values[1] == pytest.approx(0.5 + 10 / 6)

    def test_from_function_broadcasts_scalars(self, unit_square_3):
        f = ScalarField.from_function(unit_square_3, lambda x, y: 3.0)
        assert (f.values == 3.0).all()

    def test_wrong_length(self, unit_square_3):
        with pytest.raises(PreconditionError):
            ScalarField(unit_square_3, np.zeros(8))

    def test_non_finite(self, unit_square_3):
        values = np.zeros(9)
        values[3] = np.nan
        with pytest.raises(PreconditionError):
            ScalarField(unit_square_3, values)

    def test_values_are_copied_and_frozen(self, unit_square_3):
        source = np.ones(9)
        f = ScalarField(unit_square_3, source)
        source[0] = 5.0
        assert f.values[0] == 1.0
        with pytest.raises(ValueError):
            f.values[0] = 2.0


class TestGenerator:
    """Test suite for Generator builders and validation."""

    def test_two_valued(self, unit_square_3):
        gen = Generator.two_valued(unit_square_3, alpha=1.0, beta=0.2, k=2)
        assert gen.sorted_values.tolist() == [1.0, 1.0] + [0.2] * 7
        assert gen.ascending[0] == 0.2

    def test_two_valued_bad_k(self, unit_square_3):
        with pytest.raises(PreconditionError):
            Generator.two_valued(unit_square_3, 1.0, 0.0, 10)

    def test_from_fractions_largest_remainder(self, unit_square_3):
        gen = Generator.from_fractions(unit_square_3, [1.0, 0.5, 0.0], [0.5, 0.25, 0.25])
        values = gen.sorted_values.tolist()
        assert values.count(1.0) == 5
        assert values.count(0.5) == 2
        assert values.count(0.0) == 2

    def test_from_fractions_equal_remainders_go_first(self):
        d = build_domain(RectangleSpec(width=4.0, height=2.0, resolution=4))
        assert d.n_cells == 8
        gen = Generator.from_fractions(d, [0.9, 0.6, 0.3], [1 / 3, 1 / 3, 1 / 3])
        values = gen.sorted_values.tolist()
        assert (values.count(0.9), values.count(0.6), values.count(0.3)) == (3, 3, 2)

    def test_from_fractions_must_sum_to_one(self, unit_square_3):
        with pytest.raises(PreconditionError):
            Generator.from_fractions(unit_square_3, [1.0, 0.0], [0.5, 0.4])

    def test_rejects_negative_and_zero(self, unit_square_3):
        with pytest.raises(PreconditionError):
            Generator(unit_square_3, np.full(9, -1.0))
        with pytest.raises(PreconditionError):
            Generator(unit_square_3, np.zeros(9))

    def test_values_above_one_warn(self, unit_square_3, caplog):
        with caplog.at_level(logging.WARNING, logger="membraneopt.fields"):
            Generator(unit_square_3, np.full(9, 2.0))
        assert "exceeds 1" in caplog.text

    def test_singleton(self, unit_square_3):
        assert Generator(unit_square_3, np.full(9, 0.5)).is_singleton
        assert not Generator.two_valued(unit_square_3, 1.0, 0.0, 3).is_singleton

    def test_permuted_is_member(self, unit_square_8, rng):
        gen = Generator.two_valued(unit_square_8, 1.0, 0.0, 10)
        g = gen.permuted(rng)
        assert is_rearrangement(g, ScalarField(unit_square_8, gen.sorted_values))


class TestRearrangements:
    """Test suite for distribution functions and monotone rearrangements."""

    def test_distribution_function(self, strip3):
        f = ScalarField(strip3, np.array([0.2, 0.8, 0.5]))
        assert distribution_function(f, 0.5) == 2.0
        assert distribution_function(f, 0.0) == 3.0
        assert distribution_function(f, 0.9) == 0.0
        with pytest.raises(PreconditionError):
            distribution_function(f, -1.0)

    def test_decreasing_profile(self, strip3):
        f = ScalarField(strip3, np.array([0.2, 0.8, 0.5]))
        profile = decreasing_rearrangement(f)
        assert profile.breakpoints.tolist() == [1.0, 2.0, 3.0]
        assert profile.levels.tolist() == [0.8, 0.5, 0.2]
        assert profile.value_at(0.5) == 0.8
        assert profile.value_at(1.0) == 0.8
        assert profile.value_at(1.5) == 0.5
        assert profile.total_measure == 3.0

    def test_increasing_is_mirror(self, strip3):
        f = ScalarField(strip3, np.array([0.2, 0.8, 0.5]))
        assert increasing_rearrangement(f).levels.tolist() == [0.2, 0.5, 0.8]

    def test_compressed(self, strip3):
        f = ScalarField(strip3, np.array([1.0, 1.0, 0.0]))
        profile = decreasing_rearrangement(f).compressed()
        assert profile.breakpoints.tolist() == [2.0, 3.0]
        assert profile.levels.tolist() == [1.0, 0.0]

    def test_value_at_out_of_range(self, strip3):
        profile = decreasing_rearrangement(ScalarField.constant(strip3, 1.0))
        with pytest.raises(PreconditionError):
            profile.value_at(0.0)

    def test_negative_values_rejected(self, strip3):
        with pytest.raises(PreconditionError):
            decreasing_rearrangement(ScalarField(strip3, np.array([1.0, -1.0, 0.0])))

    def test_is_rearrangement(self, strip3):
        a = ScalarField(strip3, np.array([1.0, 0.0, 0.5]))
        b = ScalarField(strip3, np.array([0.5, 1.0, 0.0]))
        c = ScalarField(strip3, np.array([0.5, 1.0, 0.1]))
        assert is_rearrangement(a, b)
        assert not is_rearrangement(a, c)


class TestWeakClosure:
    """Test suite for in_weak_closure()."""

    def test_members(self, strip3):
        gen = Generator(strip3, np.array([1.0, 0.0, 0.0]))
        assert in_weak_closure(ScalarField(strip3, np.array([0.0, 1.0, 0.0])), gen)
        assert in_weak_closure(ScalarField.constant(strip3, 1 / 3), gen)
        assert in_weak_closure(ScalarField(strip3, np.array([0.5, 0.5, 0.0])), gen)

    def test_non_members(self, strip3):
        gen = Generator(strip3, np.array([1.0, 0.0, 0.0]))
        assert not in_weak_closure(ScalarField(strip3, np.array([1.2, -0.2, 0.0])), gen)
        assert not in_weak_closure(ScalarField(strip3, np.array([0.6, 0.6, 0.0])), gen)

    def test_convex_combinations_of_members(self, unit_square_8, rng):
        gen = Generator.from_fractions(unit_square_8, [1.0, 0.4, 0.0], [0.25, 0.25, 0.5])
        for _ in range(10):
            weights = rng.dirichlet(np.ones(4))
            mix = sum(w * gen.permuted(rng).values for w in weights)
            assert in_weak_closure(ScalarField(unit_square_8, mix), gen)

    def test_domain_mismatch(self, strip3, unit_square_3):
        gen = Generator(strip3, np.array([1.0, 0.0, 0.0]))
        with pytest.raises(DomainMismatchError):
            in_weak_closure(ScalarField.constant(unit_square_3, 0.1), gen)


class TestAlignment:
    """Test suite for align_increasing() / align_decreasing()."""

    def test_increasing_example(self, strip3):
        gen = Generator(strip3, np.array([0.0, 0.0, 1.0]))
        w = ScalarField(strip3, np.array([3.0, 1.0, 2.0]))
        assert align_increasing(gen, w).values.tolist() == [1.0, 0.0, 0.0]

    def test_decreasing_example(self, strip3):
        gen = Generator(strip3, np.array([0.0, 0.5, 1.0]))
        w = ScalarField(strip3, np.array([3.0, 1.0, 2.0]))
        assert align_decreasing(gen, w).values.tolist() == [0.0, 1.0, 0.5]

    def test_ties_break_by_cell_number(self, strip3):
        gen = Generator(strip3, np.array([1.0, 0.5, 0.0]))
        w = ScalarField.constant(strip3, 1.0)
        assert align_increasing(gen, w).values.tolist() == [0.0, 0.5, 1.0]
        assert align_decreasing(gen, w).values.tolist() == [1.0, 0.5, 0.0]

    def test_tie_tolerance(self, strip3):
        gen = Generator(strip3, np.array([1.0, 0.0, 0.0]))
        w = ScalarField(strip3, np.array([1.0 + 1e-12, 1.0, 0.0]))
        assert align_increasing(gen, w).values.tolist() == [1.0, 0.0, 0.0]
        assert align_increasing(gen, w, tie_tol=1e-9).values.tolist() == [0.0, 1.0, 0.0]

    def test_bathtub_optimality(self, unit_square_8, rng):
        """The aligned member maximizes (increasing) or minimizes (decreasing) <g, w>."""
        gen = Generator.from_fractions(unit_square_8, [1.0, 0.3, 0.0], [0.2, 0.3, 0.5])
        w = ScalarField(unit_square_8, rng.uniform(size=64))
        best = inner(align_increasing(gen, w), w)
        worst = inner(align_decreasing(gen, w), w)
        for _ in range(50):
            value = inner(gen.permuted(rng), w)
            assert worst - 1e-12 <= value <= best + 1e-12

    def test_result_is_rearrangement(self, unit_square_8, rng):
        gen = Generator.two_valued(unit_square_8, 1.0, 0.1, 20)
        w = ScalarField(unit_square_8, rng.uniform(size=64))
        member = ScalarField(unit_square_8, gen.sorted_values)
        assert is_rearrangement(align_increasing(gen, w), member)
        assert is_rearrangement(align_decreasing(gen, w), member)

    def test_alignment_keeps_support(self, unit_square_8, rng):
        gen = Generator.from_fractions(unit_square_8, [1.0, 0.4, 0.0], [0.25, 0.25, 0.5])
        start = gen.permuted(rng)
        for _ in range(5):
            w = ScalarField(unit_square_8, rng.uniform(size=64))
            for aligned in (align_increasing(gen, w), align_decreasing(gen, w)):
                assert support_measure(aligned) >= support_measure(start)
                assert support_measure(aligned) == pytest.approx(32 / 64)


class TestIntegrals:
    def test_integrate_inner_support(self, unit_square_3):
        f = ScalarField(unit_square_3, np.arange(9, dtype=float))
        g = ScalarField.constant(unit_square_3, 2.0)
        assert integrate(f) == pytest.approx(36 / 9)
        assert inner(f, g) == pytest.approx(72 / 9)
        assert support_measure(f) == pytest.approx(8 / 9)
