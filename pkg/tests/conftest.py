"""Pytest configuration and fixtures."""

import os
import tempfile
from typing import Generator, List

import numpy as np
import pytest
import torch
from PIL import Image

from cdinet.config import BackboneConfig, NetworkConfig, TrainConfig

SYNTHETIC_DATASET = "SYN"
SYNTHETIC_SIZE = (40, 48)  # height, width
SYNTHETIC_COUNT = 8
SYNTHETIC_TRAIN = 6


@pytest.fixture(autouse=True)
def seeded() -> None:
    """Seed torch for every test."""
    torch.manual_seed(0)


@pytest.fixture
def temp_dir() -> Generator[str, None, None]:
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture
def toy_backbone() -> BackboneConfig:
    """Narrow backbone for fast CPU tests."""
    return BackboneConfig.toy()


@pytest.fixture
def toy_network_config(toy_backbone: BackboneConfig) -> NetworkConfig:
    """Default discrepant network on the toy backbone."""
    return NetworkConfig(backbone=toy_backbone)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    """Two short epochs on 32x32 inputs."""
    return TrainConfig(
        batch_size=2,
        base_lr=1e-3,
        total_epochs=2,
        target_size=32,
        augment=False,
        checkpoint_every=1,
    )


def write_sample(base: str, stem: str, rng: np.random.Generator) -> None:
    """Write one RGB / 16-bit depth / mask triple with a bright rectangular object."""
    height, width = SYNTHETIC_SIZE
    top, left = int(rng.integers(4, 16)), int(rng.integers(4, 20))
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[top : top + 16, left : left + 20] = 255

    rgb = (rng.random((height, width, 3)) * 80).astype(np.uint8)
    rgb[mask > 0] = 220
    depth = np.full((height, width), 60000, dtype=np.uint16)
    depth[mask > 0] = 15000

    Image.fromarray(rgb).save(os.path.join(base, "RGB", f"{stem}.jpg"))
    Image.fromarray(depth).save(os.path.join(base, "depth", f"{stem}.png"))
    Image.fromarray(mask).save(os.path.join(base, "GT", f"{stem}.png"))


@pytest.fixture
def rgbd_root(temp_dir: str) -> str:
    """A synthetic on-disk dataset with a train.txt listing the first stems."""
    base = os.path.join(temp_dir, "data", SYNTHETIC_DATASET)
    for folder in ("RGB", "depth", "GT"):
        os.makedirs(os.path.join(base, folder))
    rng = np.random.default_rng(0)
    stems: List[str] = [f"img_{i:02d}" for i in range(SYNTHETIC_COUNT)]
    for stem in stems:
        write_sample(base, stem, rng)
    with open(os.path.join(base, "train.txt"), "w") as f:
        f.write("\n".join(stems[:SYNTHETIC_TRAIN]) + "\n")
    return os.path.join(temp_dir, "data")


@pytest.fixture
def gradcheck_module():
    """
    Return a checker running ``torch.autograd.gradcheck`` in float64 over a
    module's parameters and inputs, via ``torch.func.functional_call``.
    """
    from torch.autograd import gradcheck
    from torch.func import functional_call

    def check(module: torch.nn.Module, *inputs: torch.Tensor) -> bool:
        module = module.double()
        names = [name for name, _ in module.named_parameters()]
        params = tuple(p.detach().clone().requires_grad_(True) for p in module.parameters())
        xs = tuple(x.detach().double().requires_grad_(True) for x in inputs)

        def fn(*args: torch.Tensor) -> torch.Tensor:
            state = dict(zip(names, args[: len(params)]))
            out: torch.Tensor = functional_call(module, state, args[len(params) :])
            return out

        result: bool = gradcheck(fn, params + xs, eps=1e-5, rtol=1e-4, atol=1e-5)
        return result

    return check
