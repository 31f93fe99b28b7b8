"""
Dataset-level evaluation reports.

A report holds per-image metrics, per-dataset aggregates and the averaged
PR curve of each dataset. It serialises to JSON (schema version 1), to a
per-image CSV, and to a PR-curve plot.

JSON layout::

    {
      "schema_version": 1,
      "identifiers": {"checkpoint": "...", ...},
      "per_dataset": {
        "<name>": {"num_images": N, "max_f": .., "mean_f": .., "s_measure": ..,
                   "mae": .., "pr_points": [[precision, recall], ...]}
      },
      "per_image": [{"dataset": .., "stem": .., "max_f": .., "s_measure": .., "mae": ..}]
    }
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from cdinet.data import IMAGE_EXTENSIONS, open_image, to_single_channel
from cdinet.exceptions import DataError
from cdinet.metrics import (
    DEFAULT_ALPHA,
    DEFAULT_BETA2,
    SaliencyPair,
    f_curve,
    mae,
    max_f_measure,
    pr_curve,
    s_measure,
)

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
CSV_FIELDS = ("dataset", "stem", "max_f", "s_measure", "mae")


@dataclass
class ImageMetrics:
    dataset: str
    stem: str
    max_f: float
    s_measure: float
    mae: float


@dataclass
class DatasetMetrics:
    """Aggregates over every scored image of one dataset."""

    num_images: int
    max_f: float
    mean_f: float
    s_measure: float
    mae: float
    pr_points: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["pr_points"] = [[p, r] for p, r in self.pr_points]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> DatasetMetrics:
        return cls(
            num_images=int(data["num_images"]),
            max_f=float(data["max_f"]),
            mean_f=float(data["mean_f"]),
            s_measure=float(data["s_measure"]),
            mae=float(data["mae"]),
            pr_points=[(float(p), float(r)) for p, r in data.get("pr_points", [])],
        )


@dataclass
class MetricReport:
    per_dataset: Dict[str, DatasetMetrics] = field(default_factory=dict)
    per_image: List[ImageMetrics] = field(default_factory=list)
    identifiers: Dict[str, str] = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def merge(self, other: MetricReport) -> MetricReport:
        """Combine two reports over disjoint datasets."""
        clash = sorted(set(self.per_dataset) & set(other.per_dataset))
        if clash:
            raise DataError(f"Datasets evaluated twice: {', '.join(clash)}")
        return MetricReport(
            per_dataset={**self.per_dataset, **other.per_dataset},
            per_image=self.per_image + other.per_image,
            identifiers={**self.identifiers, **other.identifiers},
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "identifiers": dict(self.identifiers),
            "per_dataset": {name: m.to_dict() for name, m in self.per_dataset.items()},
            "per_image": [asdict(m) for m in self.per_image],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> MetricReport:
        version = int(data.get("schema_version", REPORT_SCHEMA_VERSION))
        if version != REPORT_SCHEMA_VERSION:
            raise DataError(f"Unsupported report schema version {version}")
        return cls(
            per_dataset={
                name: DatasetMetrics.from_dict(m) for name, m in data.get("per_dataset", {}).items()
            },
            per_image=[ImageMetrics(**m) for m in data.get("per_image", [])],
            identifiers=dict(data.get("identifiers", {})),
            schema_version=version,
        )

    def save(self, path: str) -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: str) -> MetricReport:
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def save_csv(self, path: str) -> str:
        """Write one row of metrics per image."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for row in self.per_image:
                writer.writerow(asdict(row))
        return path


def _index_maps(folder: str) -> Dict[str, Path]:
    path = Path(folder)
    if not path.is_dir():
        raise DataError(f"Missing folder: {folder}")
    return {
        p.stem: p
        for p in sorted(path.iterdir())
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    }


def load_map(path: str) -> np.ndarray:
    """Read a saliency map or mask as a float64 array in [0, 1]."""
    return to_single_channel(open_image(path))


def aggregate(
    name: str,
    pairs: Iterable[Tuple[str, SaliencyPair]],
    beta2: float = DEFAULT_BETA2,
    alpha: float = DEFAULT_ALPHA,
) -> MetricReport:
    """
    Score every ``(stem, pair)`` and aggregate them into a one-dataset report.

    The dataset PR curve is the per-threshold mean of the image curves.
    ``max_f`` and ``mean_f`` are the maximum and mean over thresholds of the
    image-averaged F-measure curve.

    Raises:
        DataError: If ``pairs`` is empty.
    """
    per_image: List[ImageMetrics] = []
    precisions, recalls = [], []
    for stem, pair in pairs:
        precision, recall = pr_curve(pair)
        precisions.append(precision)
        recalls.append(recall)
        per_image.append(
            ImageMetrics(
                dataset=name,
                stem=stem,
                max_f=max_f_measure(pair, beta2),
                s_measure=s_measure(pair, alpha),
                mae=mae(pair),
            )
        )
    if not per_image:
        raise DataError(f"{name}: no images to evaluate")

    mean_precision = np.mean(precisions, axis=0)
    mean_recall = np.mean(recalls, axis=0)
    f_values = np.mean([f_curve(p, r, beta2) for p, r in zip(precisions, recalls)], axis=0)
    metrics = DatasetMetrics(
        num_images=len(per_image),
        max_f=float(f_values.max()),
        mean_f=float(f_values.mean()),
        s_measure=float(np.mean([m.s_measure for m in per_image])),
        mae=float(np.mean([m.mae for m in per_image])),
        pr_points=[(float(p), float(r)) for p, r in zip(mean_precision, mean_recall)],
    )
    logger.info(
        f"{name}: {metrics.num_images} images, maxF {metrics.max_f:.4f}, "
        f"S {metrics.s_measure:.4f}, MAE {metrics.mae:.4f}"
    )
    return MetricReport(per_dataset={name: metrics}, per_image=per_image)


def evaluate_dataset(
    pred_dir: str,
    gt_dir: str,
    name: Optional[str] = None,
    identifiers: Optional[Dict[str, str]] = None,
) -> MetricReport:
    """
    Evaluate the saliency maps in ``pred_dir`` against masks in ``gt_dir``.

    Files are paired by stem. Maps at a different resolution are resized to
    the mask.

    Raises:
        DataError: If no stem is present in both folders.
    """
    name = name or Path(gt_dir).resolve().parent.name or "dataset"
    preds = _index_maps(pred_dir)
    gts = _index_maps(gt_dir)
    stems = sorted(set(preds) & set(gts))
    unmatched = sorted(set(preds) ^ set(gts))
    if unmatched:
        logger.warning(f"{name}: skipping {len(unmatched)} unmatched stems: {unmatched[:10]}")
    if not stems:
        raise DataError(f"No prediction in {pred_dir} matches a mask in {gt_dir}")

    pairs = (
        (stem, SaliencyPair.from_arrays(load_map(str(preds[stem])), load_map(str(gts[stem]))))
        for stem in stems
    )
    report = aggregate(name, pairs)
    report.identifiers.update(identifiers or {})
    return report


def plot_pr_curves(report: MetricReport, path: str) -> str:
    """Draw one precision-recall curve per dataset and save it as an image."""
    fig = Figure(figsize=(5, 5))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    for name, metrics in report.per_dataset.items():
        precision = [p for p, _ in metrics.pr_points]
        recall = [r for _, r in metrics.pr_points]
        ax.plot(recall, precision, label=f"{name} (maxF {metrics.max_f:.3f})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    return path
