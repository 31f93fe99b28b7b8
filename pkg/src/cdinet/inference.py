"""
Saliency-map export and speed measurement for trained networks.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from cdinet.config import DEFAULT_TARGET_SIZE
from cdinet.data import SampleEntry, load_sample, open_image
from cdinet.exceptions import ConfigurationError
from cdinet.network import CDINet, Checkpoint

logger = logging.getLogger(__name__)


def load_network(checkpoint: Union[str, Checkpoint], device: str = "cpu") -> CDINet:
    """Rebuild a network from a checkpoint (path or loaded), in eval mode on ``device``."""
    if isinstance(checkpoint, str):
        checkpoint = Checkpoint.load(checkpoint)
    net = checkpoint.build_network().to(torch.device(device))
    net.eval()
    logger.info(f"Loaded network from epoch {checkpoint.epoch}")
    return net


def checkpoint_target_size(checkpoint: Checkpoint) -> int:
    """Input resolution the checkpoint was trained at."""
    return int(checkpoint.train_config.get("target_size", DEFAULT_TARGET_SIZE))


@torch.no_grad()
def predict_entry(
    net: CDINet,
    entry: SampleEntry,
    target_size: int = DEFAULT_TARGET_SIZE,
    device: str = "cpu",
) -> np.ndarray:
    """
    Saliency map of one sample at the resolution of its source RGB image.

    Returns:
        (H, W) float array in [0, 1].
    """
    sample = load_sample(entry, target_size)
    width, height = open_image(entry.rgb_path).size
    rgb = sample.rgb[None].to(device)
    depth = sample.depth[None].to(device)
    pred = net(rgb, depth)
    pred = F.interpolate(pred, size=(height, width), mode="bilinear", align_corners=False)
    result: np.ndarray = pred[0, 0].clamp(0.0, 1.0).cpu().numpy()
    return result


def save_saliency_map(saliency: np.ndarray, path: str) -> str:
    """Write a [0, 1] map as an 8-bit greyscale PNG."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(saliency * 255.0).astype(np.uint8)).save(path)
    return path


def export_saliency_maps(
    net: CDINet,
    entries: Iterable[SampleEntry],
    out_dir: str,
    target_size: int = DEFAULT_TARGET_SIZE,
    device: str = "cpu",
) -> int:
    """
    Predict every entry and write ``<out_dir>/<dataset>/<stem>.png``.

    Returns:
        Number of maps written.
    """
    net.eval()
    written = 0
    for entry in entries:
        saliency = predict_entry(net, entry, target_size, device)
        save_saliency_map(saliency, str(Path(out_dir) / entry.dataset / f"{entry.stem}.png"))
        written += 1
    logger.info(f"Wrote {written} saliency maps to {out_dir}")
    return written


@torch.no_grad()
def benchmark_fps(
    net: CDINet,
    size: int = DEFAULT_TARGET_SIZE,
    iterations: int = 10,
    warmup: int = 2,
    device: str = "cpu",
    seed: Optional[int] = 0,
) -> float:
    """Forward passes per second on a single random ``size x size`` pair."""
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    net.eval()
    generator = torch.Generator().manual_seed(seed) if seed is not None else None
    rgb = torch.rand(1, 3, size, size, generator=generator).to(device)
    depth = torch.rand(1, 3, size, size, generator=generator).to(device)
    for _ in range(warmup):
        net(rgb, depth)
    start = time.perf_counter()
    for _ in range(iterations):
        net(rgb, depth)
    elapsed = time.perf_counter() - start
    fps = iterations / elapsed if elapsed > 0 else float("inf")
    logger.info(f"{iterations} forward passes at {size}x{size}: {fps:.2f} FPS")
    return fps
