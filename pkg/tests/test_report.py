"""Tests for report module."""

import csv
import json
import logging
import os

import matplotlib
import numpy as np
import pytest
from PIL import Image

from cdinet.exceptions import DataError
from cdinet.metrics import SaliencyPair, f_measure, mae, max_f_measure, precision_recall, s_measure
from cdinet.report import (
    REPORT_SCHEMA_VERSION,
    MetricReport,
    aggregate,
    evaluate_dataset,
    plot_pr_curves,
)


def write_map(folder, stem, array):
    os.makedirs(folder, exist_ok=True)
    path = os.path.join(folder, f"{stem}.png")
    Image.fromarray(np.round(np.asarray(array) * 255).astype(np.uint8)).save(path)
    return path


def square_mask(size=16, start=4, stop=12):
    gt = np.zeros((size, size))
    gt[start:stop, start:stop] = 1.0
    return gt


@pytest.fixture
def folders(temp_dir):
    """Prediction and mask folders with two matching stems."""
    pred_dir, gt_dir = os.path.join(temp_dir, "pred"), os.path.join(temp_dir, "GT")
    rng = np.random.default_rng(0)
    for stem, gt in (("a", square_mask()), ("b", square_mask(start=2, stop=9))):
        write_map(gt_dir, stem, gt)
        write_map(pred_dir, stem, np.clip(gt * 0.7 + rng.random(gt.shape) * 0.3, 0, 1))
    return pred_dir, gt_dir


class TestEvaluateDataset:
    """Tests for folder evaluation."""

    def test_identical_maps(self, temp_dir):
        """Test predictions equal to the masks score perfectly."""
        gt_dir, pred_dir = os.path.join(temp_dir, "GT"), os.path.join(temp_dir, "pred")
        for stem in ("x", "y"):
            write_map(gt_dir, stem, square_mask())
            write_map(pred_dir, stem, square_mask())
        metrics = evaluate_dataset(pred_dir, gt_dir, name="D").per_dataset["D"]
        assert metrics.max_f == 1.0
        assert metrics.s_measure == pytest.approx(1.0, abs=1e-6)
        assert metrics.mae == 0.0
        assert len(metrics.pr_points) == 255

    def test_means_of_two_images(self, folders):
        """Test dataset S and MAE are per-image averages."""
        report = evaluate_dataset(*folders, name="D")
        metrics = report.per_dataset["D"]
        assert metrics.num_images == 2
        assert metrics.mae == pytest.approx(np.mean([m.mae for m in report.per_image]))
        assert metrics.s_measure == pytest.approx(np.mean([m.s_measure for m in report.per_image]))
        assert 0.0 <= metrics.mean_f <= metrics.max_f <= 1.0

    def test_single_image_aggregate(self):
        """Test a one-image dataset reports that image's metrics."""
        rng = np.random.default_rng(1)
        gt = square_mask()
        p = SaliencyPair(rng.random(gt.shape), gt)
        metrics = aggregate("D", [("a", p)]).per_dataset["D"]
        assert metrics.max_f == pytest.approx(max_f_measure(p))
        assert metrics.s_measure == pytest.approx(s_measure(p))
        assert metrics.mae == pytest.approx(mae(p))

    def test_f_is_averaged_over_images(self):
        """Test dataset F is taken from the mean of the per-image F curves."""
        gt = square_mask(8, 2, 6)
        exact = SaliencyPair(gt.copy(), gt)
        everything = SaliencyPair(np.ones_like(gt), gt)
        metrics = aggregate("D", [("a", exact), ("b", everything)]).per_dataset["D"]

        # exact scores 1 everywhere; all-ones has P = 0.25, R = 1
        f_everything = 1.3 * 0.25 / (0.3 * 0.25 + 1.0)
        assert metrics.max_f == pytest.approx((1.0 + f_everything) / 2)
        assert metrics.mean_f == pytest.approx((1.0 + f_everything) / 2)
        assert metrics.pr_points[0] == pytest.approx((0.625, 1.0))

    def test_f_matches_per_threshold_loop(self):
        """Test max and mean F against a loop over thresholds and images."""
        rng = np.random.default_rng(2)
        pairs = []
        for stem in ("a", "b", "c"):
            gt = (rng.random((8, 8)) < 0.4).astype(np.float64)
            gt[0, 0] = 1.0
            pairs.append((stem, SaliencyPair(rng.random((8, 8)), gt)))
        metrics = aggregate("D", pairs).per_dataset["D"]

        curve = [
            np.mean([f_measure(*precision_recall(p, k / 255)) for _, p in pairs])
            for k in range(255)
        ]
        assert metrics.max_f == pytest.approx(max(curve), abs=1e-12)
        assert metrics.mean_f == pytest.approx(np.mean(curve), abs=1e-12)

    def test_prediction_resized_to_mask(self, temp_dir):
        """Test maps at another resolution are resampled."""
        gt_dir, pred_dir = os.path.join(temp_dir, "GT"), os.path.join(temp_dir, "pred")
        write_map(gt_dir, "a", square_mask(16))
        write_map(pred_dir, "a", square_mask(32, 8, 24))
        metrics = evaluate_dataset(pred_dir, gt_dir, name="D").per_dataset["D"]
        assert metrics.mae < 0.05

    def test_unmatched_stems(self, folders, caplog):
        """Test unmatched files are listed and skipped."""
        pred_dir, gt_dir = folders
        write_map(pred_dir, "extra", square_mask())
        with caplog.at_level(logging.WARNING):
            report = evaluate_dataset(pred_dir, gt_dir, name="D")
        assert report.per_dataset["D"].num_images == 2
        assert "extra" in caplog.text

    def test_empty_intersection(self, temp_dir):
        """Test folders without a shared stem are an error."""
        write_map(os.path.join(temp_dir, "GT"), "a", square_mask())
        write_map(os.path.join(temp_dir, "pred"), "b", square_mask())
        with pytest.raises(DataError):
            evaluate_dataset(os.path.join(temp_dir, "pred"), os.path.join(temp_dir, "GT"))

    def test_default_name(self, temp_dir):
        """Test the dataset name defaults to the mask folder's parent."""
        gt_dir = os.path.join(temp_dir, "NLPR", "GT")
        pred_dir = os.path.join(temp_dir, "pred")
        write_map(gt_dir, "a", square_mask())
        write_map(pred_dir, "a", square_mask())
        assert list(evaluate_dataset(pred_dir, gt_dir).per_dataset) == ["NLPR"]


class TestMetricReport:
    """Tests for report serialisation."""

    def test_json_round_trip(self, folders, temp_dir):
        """Test saving then loading a report."""
        report = evaluate_dataset(*folders, name="D", identifiers={"checkpoint": "last.pt"})
        path = report.save(os.path.join(temp_dir, "out", "report.json"))
        with open(path) as f:
            data = json.load(f)
        assert data["schema_version"] == REPORT_SCHEMA_VERSION
        assert data["identifiers"] == {"checkpoint": "last.pt"}
        assert len(data["per_dataset"]["D"]["pr_points"]) == 255
        assert MetricReport.load(path).to_dict() == report.to_dict()

    def test_unsupported_schema(self):
        """Test a future schema version is rejected."""
        with pytest.raises(DataError):
            MetricReport.from_dict({"schema_version": 99})

    def test_csv(self, folders, temp_dir):
        """Test one CSV row per image."""
        report = evaluate_dataset(*folders, name="D")
        path = report.save_csv(os.path.join(temp_dir, "report.csv"))
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert [row["stem"] for row in rows] == ["a", "b"]
        assert float(rows[0]["mae"]) == pytest.approx(report.per_image[0].mae)

    def test_pr_plot(self, folders, temp_dir):
        """Test the PR plot is written."""
        report = evaluate_dataset(*folders, name="D")
        path = plot_pr_curves(report, os.path.join(temp_dir, "plots", "pr.png"))
        assert os.path.getsize(path) > 0

    def test_pr_plot_keeps_backend(self, folders, temp_dir):
        """Test plotting leaves the process-wide matplotlib backend alone."""
        backend = matplotlib.get_backend()
        plot_pr_curves(evaluate_dataset(*folders, name="D"), os.path.join(temp_dir, "pr.png"))
        assert matplotlib.get_backend() == backend

    def test_merge(self, folders):
        """Test reports over different datasets combine, duplicates do not."""
        first = evaluate_dataset(*folders, name="A")
        second = evaluate_dataset(*folders, name="B")
        merged = first.merge(second)
        assert sorted(merged.per_dataset) == ["A", "B"]
        assert len(merged.per_image) == 4
        with pytest.raises(DataError):
            merged.merge(first)
