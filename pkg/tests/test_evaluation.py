import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastgpom.evaluation import (LabeledPairs, auc_report, make_pairs, read_auc_csv, roc_auc, unknown_bias,
                                 write_auc_csv, write_roc_csv)
from fastgpom.simulator import generate_synthetic_map
from fastgpom.world import CellState, GridMap, MapGeometry

O, F, U = CellState.OCCUPIED, CellState.FREE, CellState.UNKNOWN


def brute_force_auc(probs, labels):
    """Fraction of (occupied, free) pairs ranked correctly, ties counted half."""
    pos = probs[labels == 1]
    neg = probs[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def truth_2x2():
    return GridMap(MapGeometry(2, 2, 0.05), np.array([[O, F], [U, O]], dtype=np.uint8))


class TestPairs:
    def test_all_unknown(self):
        assert make_pairs(np.zeros((3, 3)), GridMap.filled(3, 3, 0.05, U)).count == 0

    def test_masking(self):
        pairs = make_pairs(np.array([[0.9, 0.1], [0.5, 0.7]]), truth_2x2())
        assert pairs.count == 3
        np.testing.assert_array_equal(pairs.labels, [1, 0, 1])
        np.testing.assert_allclose(pairs.probs, [0.9, 0.1, 0.7])

    @pytest.mark.parametrize("kind", ["simple_rooms", "sparse_obstacles", "corridor"])
    def test_counts(self, kind):
        truth = generate_synthetic_map(kind, 80, 90, 0.05, 1)
        pairs = make_pairs(np.full(truth.cells.shape, 0.5), truth)
        assert pairs.count == int((truth.cells == O).sum() + (truth.cells == F).sum())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            make_pairs(np.zeros((3, 2)), truth_2x2())


class TestRocAuc:
    def test_perfect(self):
        _, auc = roc_auc(LabeledPairs(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0])))
        assert auc == 1.0

    def test_inverted(self):
        _, auc = roc_auc(LabeledPairs(np.array([0.9, 0.8, 0.2, 0.1]), np.array([0, 0, 1, 1])))
        assert auc == 0.0

    def test_hand_example(self):
        _, auc = roc_auc(LabeledPairs(np.array([0.9, 0.6, 0.4, 0.1]), np.array([1, 0, 1, 0])))
        assert auc == pytest.approx(0.75, abs=1e-15)

    def test_all_tied(self):
        _, auc = roc_auc(LabeledPairs(np.full(6, 0.5), np.array([1, 0, 1, 0, 0, 1])))
        assert auc == pytest.approx(0.5)

    def test_single_class(self):
        with pytest.raises(ValueError):
            roc_auc(LabeledPairs(np.array([0.1, 0.2]), np.array([1, 1])))

    def test_curve_shape(self):
        probs = np.array([0.9, 0.6, 0.6, 0.4, 0.1, 0.1])
        curve, _ = roc_auc(LabeledPairs(probs, np.array([1, 0, 1, 1, 0, 0])))
        assert len(curve.thresholds) == len(np.unique(probs)) + 2
        assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
        assert (np.diff(curve.fpr) >= 0).all() and (np.diff(curve.tpr) >= 0).all()
        assert curve.thresholds[0] == np.inf and curve.thresholds[-1] == -np.inf

    @settings(max_examples=150, deadline=None)
    @given(st.integers(2, 200), st.integers(0, 2 ** 31 - 1), st.booleans())
    def test_rank_statistic(self, n, seed, coarse):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        probs = rng.integers(0, 5, n) / 4.0 if coarse else rng.random(n)
        _, auc = roc_auc(LabeledPairs(probs, labels))
        assert abs(auc - brute_force_auc(probs, labels)) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, 100)
        labels[:2] = [0, 1]
        probs = rng.integers(0, 20, 100) / 19.0
        _, a = roc_auc(LabeledPairs(probs, labels))
        _, b = roc_auc(LabeledPairs(probs ** 3 * 0.5 + 0.1, labels))
        assert a == b


class TestReport:
    def test_perfect_map(self, tmp_path):
        truth = truth_2x2()
        perfect = (truth.cells == O).astype(float)
        rows = auc_report({"perfect": perfect}, truth)
        assert len(rows) == 1 and rows[0].auc == 1.0 and rows[0].cells == 3

    def test_identical_maps_and_order(self, tmp_path):
        truth = generate_synthetic_map("simple_rooms", 60, 60, 0.05, 0)
        prob = np.random.default_rng(0).random(truth.cells.shape)
        rows = auc_report({"zeta": prob, "alpha": prob.copy()}, truth)
        assert [r.name for r in rows] == ["alpha", "zeta"]
        assert rows[0].auc == rows[1].auc

    def test_csv_format(self, tmp_path):
        truth = truth_2x2()
        rows = auc_report({"m": np.array([[0.9, 0.6], [0.5, 0.7]])}, truth)
        write_auc_csv(rows, tmp_path / "auc.csv")
        assert (tmp_path / "auc.csv").read_text() == "name,auc,cells\nm,1.000000,3\n"
        assert read_auc_csv(tmp_path / "auc.csv") == rows

    def test_roc_csv(self, tmp_path):
        curve, _ = roc_auc(LabeledPairs(np.array([0.9, 0.6, 0.4, 0.1]), np.array([1, 0, 1, 0])))
        write_roc_csv({"m": curve}, tmp_path / "roc.csv")
        lines = (tmp_path / "roc.csv").read_text().splitlines()
        assert lines[0] == "name,threshold,fpr,tpr" and len(lines) == 1 + 6

    def test_unknown_bias(self):
        truth = truth_2x2()
        assert unknown_bias(np.array([[0.0, 0.0], [0.8, 0.0]]), truth) == pytest.approx(0.3)
