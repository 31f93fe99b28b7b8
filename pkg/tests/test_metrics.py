"""Tests for metrics module."""

import statistics

import numpy as np
import pytest

from cdinet.exceptions import ConfigurationError, ShapeError
from cdinet.metrics import (
    EPS,
    THRESHOLDS,
    SaliencyPair,
    centroid,
    f_measure,
    mae,
    max_f_measure,
    object_score,
    pr_curve,
    precision_recall,
    s_measure,
)


def pair(pred, gt):
    return SaliencyPair(np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64))


def random_pair(rng, size=8):
    gt = (rng.random((size, size)) < 0.35).astype(np.float64)
    gt[0, 0], gt[-1, -1] = 1.0, 0.0
    return pair(rng.random((size, size)), gt)


def loop_max_f(p):
    best = 0.0
    for k in range(255):
        best = max(best, f_measure(*precision_recall(p, k / 255)))
    return best


def loop_mae(p):
    h, w = p.gt.shape
    return sum(abs(p.pred[i, j] - p.gt[i, j]) for i in range(h) for j in range(w)) / (h * w)


def loop_s_measure(p, alpha=0.5):
    """Pixel-loop structure measure written independently of the module."""
    pred, gt = p.pred.tolist(), p.gt.tolist()
    h, w = len(gt), len(gt[0])
    cells = [(i, j) for i in range(h) for j in range(w)]
    fg_ratio = sum(gt[i][j] for i, j in cells) / len(cells)
    if fg_ratio == 0:
        return 1 - sum(pred[i][j] for i, j in cells) / len(cells)
    if fg_ratio == 1:
        return sum(pred[i][j] for i, j in cells) / len(cells)

    def similarity(values):
        mean = statistics.fmean(values)
        sigma = statistics.stdev(values) if len(values) > 1 else 0.0
        return 2 * mean / (mean**2 + 1 + sigma + EPS)

    fg = [pred[i][j] for i, j in cells if gt[i][j] == 1]
    bg = [1 - pred[i][j] for i, j in cells if gt[i][j] == 0]
    s_object = fg_ratio * similarity(fg) + (1 - fg_ratio) * similarity(bg)

    rows = [i for i, j in cells if gt[i][j] == 1]
    cols = [j for i, j in cells if gt[i][j] == 1]
    cx = round(sum(cols) / len(cols)) + 1
    cy = round(sum(rows) / len(rows)) + 1

    def ssim(block):
        n = len(block)
        if n == 0:
            return 0.0
        x = sum(a for a, _ in block) / n
        y = sum(b for _, b in block) / n
        sx = sum((a - x) ** 2 for a, _ in block) / (n - 1 + EPS)
        sy = sum((b - y) ** 2 for _, b in block) / (n - 1 + EPS)
        sxy = sum((a - x) * (b - y) for a, b in block) / (n - 1 + EPS)
        num = 4 * x * y * sxy
        den = (x**2 + y**2) * (sx + sy)
        if num != 0:
            return num / (den + EPS)
        return 1.0 if den == 0 else 0.0

    s_region = 0.0
    for top in (True, False):
        for left in (True, False):
            block = [
                (pred[i][j], gt[i][j])
                for i, j in cells
                if (i < cy) == top and (j < cx) == left
            ]
            s_region += len(block) / len(cells) * ssim(block)

    score = alpha * s_object + (1 - alpha) * s_region
    return min(max(score, 0.0), 1.0)


class TestSaliencyPair:
    """Tests for pair construction."""

    def test_shape_mismatch(self):
        """Test direct construction needs equal shapes."""
        with pytest.raises(ShapeError):
            pair(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_resize_to_mask(self):
        """Test predictions are resampled to the mask resolution."""
        p = SaliencyPair.from_arrays(np.full((8, 8), 0.25), np.ones((4, 6)))
        assert p.pred.shape == (4, 6)
        assert np.allclose(p.pred, 0.25)

    def test_mask_binarised(self):
        """Test a grey mask is thresholded at 0.5."""
        p = SaliencyPair.from_arrays(np.zeros((1, 3)), np.array([[0.2, 0.5, 0.9]]))
        assert p.gt.tolist() == [[0.0, 1.0, 1.0]]


class TestPrecisionRecall:
    """Tests for precision and recall."""

    def test_hand_count(self):
        """Test TP=1, FP=1, FN=0 at threshold 0.5."""
        p = pair([[0.9, 0.1], [0.6, 0.2]], [[1, 0], [0, 0]])
        assert precision_recall(p, 0.5) == (0.5, 1.0)

    def test_perfect_prediction(self):
        """Test an exact prediction scores (1, 1)."""
        gt = [[1, 0], [0, 1]]
        for t in (0.1, 0.5, 0.9):
            assert precision_recall(pair(gt, gt), t) == (1.0, 1.0)

    def test_empty_prediction(self):
        """Test nothing predicted gives precision 1 and recall 0."""
        assert precision_recall(pair(np.zeros((2, 2)), [[1, 0], [0, 0]]), 0.5) == (1.0, 0.0)

    def test_empty_mask(self):
        """Test a mask without foreground has recall 1."""
        assert precision_recall(pair(np.full((2, 2), 0.9), np.zeros((2, 2))), 0.5) == (0.0, 1.0)

    def test_threshold_range(self):
        """Test thresholds outside [0, 1] are rejected."""
        with pytest.raises(ConfigurationError):
            precision_recall(pair(np.zeros((2, 2)), np.zeros((2, 2))), 1.5)

    def test_curve_matches_pointwise(self):
        """Test the vectorised curve equals per-threshold counting."""
        p = random_pair(np.random.default_rng(1))
        precision, recall = pr_curve(p)
        assert len(precision) == len(recall) == 255
        for k in (0, 17, 128, 254):
            assert (precision[k], recall[k]) == pytest.approx(precision_recall(p, THRESHOLDS[k]))

    def test_recall_non_increasing(self):
        """Test recall never rises with the threshold."""
        _, recall = pr_curve(random_pair(np.random.default_rng(2)))
        assert np.all(np.diff(recall) <= 0)


class TestFMeasure:
    """Tests for the F-measure."""

    def test_perfect(self):
        """Test P = R = 1 gives 1."""
        assert f_measure(1.0, 1.0) == 1.0

    def test_zero(self):
        """Test a zero precision or recall gives 0."""
        assert f_measure(0.0, 0.7) == 0.0
        assert f_measure(0.7, 0.0) == 0.0
        assert f_measure(0.0, 0.0) == 0.0

    def test_weighted_value(self):
        """Test P=0.8, R=0.5 with beta^2 = 0.3."""
        assert f_measure(0.8, 0.5) == pytest.approx(0.52 / 0.74)
        assert f_measure(0.8, 0.5) == pytest.approx(0.70270, abs=1e-5)

    def test_max_f_perfect(self):
        """Test an exact prediction reaches 1."""
        gt = np.zeros((4, 4))
        gt[1:3, 1:3] = 1
        assert max_f_measure(pair(gt, gt)) == 1.0

    def test_max_f_inverted(self):
        """Test an inverted prediction scores 0."""
        gt = np.zeros((4, 4))
        gt[1:3, 1:3] = 1
        assert max_f_measure(pair(1 - gt, gt)) == 0.0

    def test_max_f_matches_brute_force(self):
        """Test the vectorised maximum on random pairs."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = random_pair(rng)
            assert abs(max_f_measure(p) - loop_max_f(p)) < 1e-9


class TestMAE:
    """Tests for mean absolute error."""

    def test_identical(self):
        """Test an exact prediction has zero error."""
        gt = [[1, 0], [0, 1]]
        assert mae(pair(gt, gt)) == 0.0

    def test_opposite(self):
        """Test an all-one prediction on an empty mask."""
        assert mae(pair(np.ones((3, 3)), np.zeros((3, 3)))) == 1.0

    def test_hand_mean(self):
        """Test a hand-computed mean."""
        assert mae(pair([[1, 0], [0.5, 0.5]], [[1, 0], [0, 1]])) == 0.25

    def test_complement_symmetry(self):
        """Test MAE(pred, gt) == MAE(1 - pred, 1 - gt)."""
        p = random_pair(np.random.default_rng(4))
        assert mae(p) == pytest.approx(mae(pair(1 - p.pred, 1 - p.gt)), abs=1e-12)


class TestSMeasure:
    """Tests for the structure measure."""

    def test_self_similarity(self):
        """Test an exact prediction of a non-trivial mask scores 1."""
        gt = np.zeros((8, 8))
        gt[2:6, 3:7] = 1
        assert s_measure(pair(gt, gt)) == pytest.approx(1.0, abs=1e-6)

    def test_alpha_one_is_object_score(self):
        """Test the object term alone at alpha = 1."""
        p = random_pair(np.random.default_rng(5))
        assert s_measure(p, alpha=1.0) == pytest.approx(min(max(object_score(p), 0.0), 1.0))

    def test_empty_mask(self):
        """Test an all-background mask scores 1 - mean(pred)."""
        pred = np.full((4, 4), 0.25)
        assert s_measure(pair(pred, np.zeros((4, 4)))) == pytest.approx(0.75)

    def test_full_mask(self):
        """Test an all-foreground mask scores mean(pred)."""
        pred = np.full((4, 4), 0.25)
        assert s_measure(pair(pred, np.ones((4, 4)))) == pytest.approx(0.25)

    def test_centroid(self):
        """Test the split point is the rounded centre of mass plus one."""
        gt = np.zeros((6, 6))
        gt[1, 1] = gt[1, 3] = 1
        assert centroid(gt) == (3, 2)
        assert centroid(np.zeros((6, 8))) == (4, 3)

    def test_matches_reference(self):
        """Test an independent pixel-loop implementation on an 8x8 fixture."""
        p = random_pair(np.random.default_rng(6))
        assert abs(s_measure(p) - loop_s_measure(p)) < 1e-6

    def test_alpha_range(self):
        """Test alpha outside [0, 1] is rejected."""
        with pytest.raises(ConfigurationError):
            s_measure(random_pair(np.random.default_rng(7)), alpha=2.0)


class TestProperties:
    """Property checks over many random pairs."""

    def test_oracle_equivalence(self):
        """Test every metric against loop references on 100 random 8x8 pairs."""
        rng = np.random.default_rng(8)
        for _ in range(100):
            p = random_pair(rng)
            assert abs(mae(p) - loop_mae(p)) < 1e-9
            assert abs(max_f_measure(p) - loop_max_f(p)) < 1e-9
            assert abs(s_measure(p) - loop_s_measure(p)) < 1e-6

    def test_permutation_invariance(self):
        """Test MAE and F ignore a shared pixel permutation."""
        rng = np.random.default_rng(9)
        p = random_pair(rng)
        order = rng.permutation(p.gt.size)
        shuffled = pair(p.pred.ravel()[order].reshape(8, 8), p.gt.ravel()[order].reshape(8, 8))
        assert mae(shuffled) == pytest.approx(mae(p), abs=1e-12)
        assert max_f_measure(shuffled) == max_f_measure(p)

    def test_metrics_in_unit_interval(self):
        """Test every metric stays within [0, 1]."""
        rng = np.random.default_rng(10)
        for _ in range(20):
            p = random_pair(rng)
            for value in (mae(p), max_f_measure(p), s_measure(p)):
                assert 0.0 <= value <= 1.0
