"""
RGB-D saliency dataset ingestion, preprocessing and augmentation.

Expected layout::

    <root>/<dataset>/RGB/<stem>.jpg|png
    <root>/<dataset>/depth/<stem>.png      (8- or 16-bit)
    <root>/<dataset>/GT/<stem>.png
    <root>/<dataset>/train.txt             (optional, one stem per line)

Stems must match across the three folders. Samples with a stem listed in
``train.txt`` form the training portion of a dataset, every other sample is
used for testing.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import torch
import torchvision.transforms.functional as TF
from PIL import Image
from torch.utils.data import Dataset
from torchvision.transforms import InterpolationMode

from cdinet.exceptions import DataError

logger = logging.getLogger(__name__)

RGB_DIR = "RGB"
DEPTH_DIR = "depth"
GT_DIR = "GT"
TRAIN_LIST = "train.txt"
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
GT_THRESHOLD = 0.5


@dataclass(frozen=True)
class SampleEntry:
    """File paths of one aligned RGB / depth / ground-truth triple."""

    dataset: str
    stem: str
    rgb_path: str
    depth_path: str
    gt_path: str

    @property
    def id(self) -> str:
        return f"{self.dataset}/{self.stem}"


@dataclass
class DatasetManifest:
    """All samples discovered for one dataset plus its declared training stems."""

    root: str
    dataset: str
    entries: List[SampleEntry] = field(default_factory=list)
    train_stems: Optional[Set[str]] = None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class RGBDSample:
    """
    Preprocessed sample.

    ``rgb`` and ``depth`` are (3, H, W) float tensors in [0, 1] (the three
    depth channels are identical copies); ``gt`` is a (1, H, W) {0, 1} mask.
    """

    rgb: torch.Tensor
    depth: torch.Tensor
    gt: torch.Tensor
    id: str


def _index_folder(folder: Path) -> Dict[str, Path]:
    if not folder.is_dir():
        raise DataError(f"Missing folder: {folder}")
    return {
        p.stem: p
        for p in sorted(folder.iterdir())
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    }


def read_stem_list(path: str) -> Set[str]:
    """Read a plain-text list with one stem per line (blank lines and # comments ignored)."""
    with open(path, encoding="utf-8") as f:
        stripped = (line.strip() for line in f)
        return {line for line in stripped if line and not line.startswith("#")}


def discover_datasets(root: str) -> List[str]:
    """
    Names of the folders under ``root`` that hold RGB, depth and GT folders.

    Raises:
        DataError: If ``root`` is missing or holds no dataset folder.
    """
    base = Path(root)
    if not base.is_dir():
        raise DataError(f"Missing folder: {base}")
    names = [
        p.name
        for p in sorted(base.iterdir())
        if all((p / sub).is_dir() for sub in (RGB_DIR, DEPTH_DIR, GT_DIR))
    ]
    if not names:
        raise DataError(f"No dataset folders with {RGB_DIR}/{DEPTH_DIR}/{GT_DIR} under {base}")
    return names


def discover_manifest(root: str, dataset: str, train_list: Optional[str] = None) -> DatasetManifest:
    """
    Scan ``<root>/<dataset>`` for stem-matched RGB / depth / GT triples.

    Args:
        root: Data root directory.
        dataset: Dataset folder name (e.g. ``NLPR``).
        train_list: Optional stem list; defaults to ``<root>/<dataset>/train.txt``
            when that file exists.

    Raises:
        DataError: If a folder is missing or no complete triple exists.
    """
    base = Path(root) / dataset
    rgb = _index_folder(base / RGB_DIR)
    depth = _index_folder(base / DEPTH_DIR)
    gt = _index_folder(base / GT_DIR)

    stems = sorted(set(rgb) & set(depth) & set(gt))
    unmatched = sorted((set(rgb) | set(depth) | set(gt)) - set(stems))
    if unmatched:
        logger.warning(f"{dataset}: skipping {len(unmatched)} unmatched stems: {unmatched[:10]}")
    if not stems:
        raise DataError(f"No complete RGB/depth/GT triples under {base}")

    entries = [
        SampleEntry(dataset, s, str(rgb[s]), str(depth[s]), str(gt[s])) for s in stems
    ]

    if train_list is None and (base / TRAIN_LIST).is_file():
        train_list = str(base / TRAIN_LIST)
    train_stems = read_stem_list(train_list) if train_list else None
    return DatasetManifest(root=root, dataset=dataset, entries=entries, train_stems=train_stems)


def make_split(
    manifests: Iterable[DatasetManifest],
) -> Tuple[List[SampleEntry], List[SampleEntry]]:
    """
    Concatenate the declared training subsets; everything else is test data.

    Raises:
        DataError: If any sample id ends up in both sets.
    """
    train: List[SampleEntry] = []
    test: List[SampleEntry] = []
    for manifest in manifests:
        declared = manifest.train_stems or set()
        missing = sorted(declared - {e.stem for e in manifest.entries})
        if missing:
            logger.warning(f"{manifest.dataset}: {len(missing)} listed training stems not found")
        for entry in manifest.entries:
            (train if entry.stem in declared else test).append(entry)

    overlap = sorted({e.id for e in train} & {e.id for e in test})
    if overlap:
        raise DataError(f"Samples present in both train and test splits: {', '.join(overlap)}")
    logger.info(f"Split: {len(train)} training / {len(test)} test samples")
    return train, test


def open_image(path: str) -> Image.Image:
    if not os.path.isfile(path):
        raise DataError(f"Missing file: {path}")
    try:
        image = Image.open(path)
        image.load()
    except Exception as e:
        raise DataError(f"Unreadable image {path}: {e}") from e
    return image


def to_single_channel(image: Image.Image) -> np.ndarray:
    """Float array of a grey (8/16-bit) or colour image's first channel, scaled to [0, 1]."""
    if image.mode in ("I", "I;16", "I;16B", "I;16L"):
        array = np.asarray(image, dtype=np.float64)
        return array / 65535.0
    if image.mode == "F":
        return np.asarray(image, dtype=np.float64)
    return np.asarray(image.convert("L"), dtype=np.float64) / 255.0


def normalize_depth(depth: torch.Tensor) -> torch.Tensor:
    """Per-image min-max normalisation; a constant map becomes all zeros."""
    low, high = depth.min(), depth.max()
    if high <= low:
        return torch.zeros_like(depth)
    return (depth - low) / (high - low)


def load_sample(entry: SampleEntry, target_size: int) -> RGBDSample:
    """
    Load, resize and normalise one sample.

    RGB and depth are resized bilinearly, the mask with nearest neighbour and
    then binarised at 0.5. Depth is min-max normalised per image and copied
    to three channels.

    Raises:
        DataError: If a file is missing or unreadable.
    """
    size = [target_size, target_size]

    rgb_image = open_image(entry.rgb_path).convert("RGB")
    rgb = TF.to_tensor(rgb_image)
    rgb = TF.resize(rgb, size, interpolation=InterpolationMode.BILINEAR, antialias=False)
    rgb = rgb.clamp(0.0, 1.0)

    depth = torch.from_numpy(to_single_channel(open_image(entry.depth_path))).float()[None]
    depth = TF.resize(depth, size, interpolation=InterpolationMode.BILINEAR, antialias=False)
    depth = normalize_depth(depth).repeat(3, 1, 1)

    gt = torch.from_numpy(to_single_channel(open_image(entry.gt_path))).float()[None]
    gt = TF.resize(gt, size, interpolation=InterpolationMode.NEAREST)
    gt = (gt >= GT_THRESHOLD).float()
    if not gt.any():
        logger.warning(f"{entry.id}: ground truth has no foreground pixels")

    return RGBDSample(rgb=rgb, depth=depth, gt=gt, id=entry.id)


def apply_geometry(sample: RGBDSample, flip: bool, quarter_turns: int) -> RGBDSample:
    """Apply the same horizontal flip and 90-degree rotation to all three maps."""

    def transform(t: torch.Tensor) -> torch.Tensor:
        if flip:
            t = TF.hflip(t)
        return torch.rot90(t, k=quarter_turns % 4, dims=(-2, -1))

    return replace(
        sample, rgb=transform(sample.rgb), depth=transform(sample.depth), gt=transform(sample.gt)
    )


def augment(sample: RGBDSample, rng: np.random.Generator) -> RGBDSample:
    """Random horizontal flip (p=0.5) and rotation by a random multiple of 90 degrees."""
    flip = bool(rng.random() < 0.5)
    quarter_turns = int(rng.integers(0, 4))
    return apply_geometry(sample, flip, quarter_turns)


class RGBDDataset(Dataset):
    """
    Torch dataset over sample entries.

    Items are dictionaries with ``rgb``, ``depth``, ``gt`` tensors and the
    sample ``id``. Augmentation draws are seeded from ``(seed, epoch, index)``
    so runs are reproducible regardless of worker scheduling.
    """

    def __init__(
        self,
        entries: Sequence[SampleEntry],
        target_size: int,
        augment: bool = False,
        seed: int = 0,
    ) -> None:
        if not entries:
            raise DataError("Dataset has no samples")
        self.entries = list(entries)
        self.target_size = target_size
        self.augment = augment
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> Dict[str, object]:
        sample = load_sample(self.entries[index], self.target_size)
        if self.augment:
            rng = np.random.default_rng([self.seed, self.epoch, index])
            sample = augment(sample, rng)
        return {"rgb": sample.rgb, "depth": sample.depth, "gt": sample.gt, "id": sample.id}
