import numpy as np
import pytest

from maskprompt.errors import DimensionMismatchError, EmptyInputError, ValidationError
from maskprompt.metrics import CaseScore, DiceReport, aggregate, dice, sweep_report

from oracles import dice_set_oracle, random_mask


class TestDice:
    def test_identity_is_one(self):
        m = random_mask(np.random.default_rng(0), 12, 12)
        assert dice(m, m) == 1.0

    def test_disjoint_is_zero(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        assert dice(a, b) == 0.0

    def test_half_overlap_by_count(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0:4] = True
        b[0, 2:4] = True
        b[1, 0:2] = True
        assert dice(a, b) == 0.5

    def test_both_empty_convention(self):
        z = np.zeros((3, 3), dtype=bool)
        assert dice(z, z) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            dice(np.zeros((2, 2), dtype=bool), np.zeros((3, 3), dtype=bool))

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = random_mask(rng, 16, 16)
            b = random_mask(rng, 16, 16)
            d = dice(a, b)
            assert 0.0 <= d <= 1.0
            assert d == dice(b, a)

    def test_matches_set_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = random_mask(rng, 32, 32)
            b = random_mask(rng, 32, 32)
            assert dice(a, b) == pytest.approx(dice_set_oracle(a, b), abs=0)

    def test_one_iff_identical(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = random_mask(rng, 8, 8)
            b = a.copy()
            assert dice(a, b) == 1.0
            r, c = rng.integers(0, 8, size=2)
            b[r, c] = not b[r, c]
            assert dice(a, b) < 1.0


class TestAggregate:
    def test_singleton(self):
        report = aggregate([CaseScore("c1", "A", "B", 0.7)])
        assert report.per_domain_mean == {"B": 0.7}
        assert report.source_to_rest == 0.7

    def test_unweighted_domain_mean(self):
        scores = [
            CaseScore("c1", "A", "B", 0.5),
            CaseScore("c2", "A", "B", 0.7),
            CaseScore("c3", "A", "C", 0.8),
        ]
        report = aggregate(scores)
        assert report.per_domain_mean["B"] == pytest.approx(0.6)
        assert report.per_domain_mean["C"] == pytest.approx(0.8)
        # Domain mean of {0.6, 0.8}, not case mean of {0.5, 0.7, 0.8}.
        assert report.source_to_rest == pytest.approx(0.7)

    def test_source_domain_excluded_from_rest(self):
        scores = [
            CaseScore("c1", "A", "A", 0.1),
            CaseScore("c2", "A", "B", 0.9),
        ]
        report = aggregate(scores)
        assert report.per_domain_mean == {"A": 0.1, "B": 0.9}
        assert report.source_to_rest == pytest.approx(0.9)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            aggregate([])

    def test_mixed_sources_rejected(self):
        with pytest.raises(ValidationError):
            aggregate([CaseScore("c1", "A", "B", 0.5), CaseScore("c2", "B", "C", 0.5)])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        scores = [
            CaseScore(f"c{i}", "A", d, float(rng.random()))
            for i, d in enumerate(["B", "C", "D", "B", "C", "D", "B"])
        ]
        base = aggregate(scores)
        for _ in range(10):
            perm = list(scores)
            rng.shuffle(perm)
            report = aggregate(perm)
            assert report.per_domain_mean == base.per_domain_mean
            assert report.source_to_rest == base.source_to_rest

    def test_score_range_validated(self):
        with pytest.raises(ValidationError):
            CaseScore("c1", "A", "B", 1.2)


class TestSweepReport:
    def test_single_cell(self):
        report = aggregate([CaseScore("c1", "A", "B", 0.64)])
        table = sweep_report({0.5: report})
        assert table.thetas == [0.5]
        assert table.sources == ["A"]
        assert table.cells == [[0.64]]
        assert table.row_averages == [0.64]

    def test_paper_sweep_grid_shape(self):
        def mk(source, value):
            return aggregate([CaseScore("c", source, "Z", value)])

        table = sweep_report(
            {
                0.5: [mk("A", 0.8), mk("B", 0.7)],
                0.75: [mk("A", 0.75), mk("B", 0.65)],
                0.9: [mk("A", 0.7), mk("B", 0.6)],
            }
        )
        assert table.thetas == [0.5, 0.75, 0.9]
        assert table.sources == ["A", "B"]
        assert table.row_averages == [pytest.approx(0.75), pytest.approx(0.7), pytest.approx(0.65)]

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            sweep_report({})

    def test_mismatched_sources_rejected(self):
        a = aggregate([CaseScore("c", "A", "B", 0.5)])
        b = aggregate([CaseScore("c", "B", "C", 0.5)])
        with pytest.raises(ValidationError):
            sweep_report({0.5: [a], 0.9: [b]})
