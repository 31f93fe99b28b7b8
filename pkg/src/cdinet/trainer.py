"""
Training loop: binary cross-entropy on the final prediction, Adam, and a
learning rate divided by a constant factor every fixed number of epochs.
"""

from __future__ import annotations

import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence

import torch
from torch.utils.data import DataLoader, Dataset

from cdinet.config import NetworkConfig, TrainConfig
from cdinet.exceptions import ConfigurationError, DataError, ShapeError, TrainingDivergedError
from cdinet.network import CDINet, Checkpoint, build_network

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7


def bce_loss(pred: torch.Tensor, gt: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    """
    Mean binary cross-entropy over all pixels.

    Predictions are clamped to ``[eps, 1 - eps]`` so exact 0/1 values stay finite.

    Raises:
        ShapeError: If ``pred`` and ``gt`` differ in shape.
    """
    if pred.shape != gt.shape:
        raise ShapeError.mismatch("bce_loss pred vs gt", pred.shape, gt.shape)
    p = pred.clamp(eps, 1.0 - eps)
    return -(gt * torch.log(p) + (1.0 - gt) * torch.log(1.0 - p)).mean()


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """
    Step-decayed learning rate ``base_lr / factor ** (epoch // period)``.

    Raises:
        ConfigurationError: If ``epoch`` is outside ``[0, total_epochs)``.
    """
    if not 0 <= epoch < cfg.total_epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    return float(cfg.base_lr / cfg.lr_decay_factor ** (epoch // cfg.lr_decay_period))


def _to_device(batch: Dict[str, Any], device: torch.device) -> Dict[str, Any]:
    return {k: v.to(device) if isinstance(v, torch.Tensor) else v for k, v in batch.items()}


@torch.no_grad()
def evaluate_mae(net: CDINet, loader: DataLoader, device: torch.device) -> float:
    """Mean absolute error of ``net`` over a loader, in eval mode."""
    was_training = net.training
    net.eval()
    total, count = 0.0, 0
    for batch in loader:
        batch = _to_device(batch, device)
        pred = net(batch["rgb"], batch["depth"])
        total += (pred - batch["gt"]).abs().mean(dim=(1, 2, 3)).sum().item()
        count += pred.shape[0]
    net.train(was_training)
    return total / max(count, 1)


class Trainer:
    """
    Owns the network, optimiser and data loaders for one training run.

    Example:
        trainer = Trainer(net_config, train_config, train_set, out_dir="runs/a")
        checkpoint = trainer.fit()
    """

    def __init__(
        self,
        net_config: NetworkConfig,
        train_config: TrainConfig,
        data: Dataset,
        out_dir: Optional[str] = None,
        val_data: Optional[Dataset] = None,
    ) -> None:
        train_config.validate()
        self.net_config = net_config
        self.config = train_config
        self.out_dir = out_dir
        self.device = torch.device(train_config.device)

        if len(data) < train_config.batch_size:  # type: ignore[arg-type]
            raise DataError(
                f"Training set has {len(data)} samples, fewer than one batch "  # type: ignore[arg-type]
                f"of {train_config.batch_size} (incomplete batches are dropped)"
            )

        torch.manual_seed(train_config.seed)
        self.net = build_network(net_config).to(self.device)
        self.optimizer = torch.optim.Adam(
            self.net.parameters(),
            lr=train_config.base_lr,
            betas=train_config.betas,
            eps=train_config.adam_eps,
        )
        self.data = data
        self.loader = DataLoader(
            data,
            batch_size=train_config.batch_size,
            shuffle=True,
            drop_last=True,
            num_workers=train_config.num_workers,
            generator=torch.Generator().manual_seed(train_config.seed),
        )
        self.val_loader = (
            DataLoader(val_data, batch_size=train_config.batch_size, shuffle=False)
            if val_data is not None
            else None
        )
        self.loss_history: List[float] = []
        self.iteration = 0
        self.best_val_mae = math.inf

    def _set_lr(self, epoch: int) -> float:
        lr = lr_at_epoch(self.config, epoch)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        return lr

    def _iterations_exhausted(self) -> bool:
        limit = self.config.max_iterations
        return limit is not None and self.iteration >= limit

    def train_step(self, batch: Dict[str, Any]) -> float:
        """One Adam update on a batch; returns the batch loss."""
        batch = _to_device(batch, self.device)
        self.optimizer.zero_grad()
        pred = self.net(batch["rgb"], batch["depth"])
        loss = bce_loss(pred, batch["gt"])
        if not torch.isfinite(loss):
            ids: Sequence[str] = batch.get("id", [])
            message = f"non-finite loss {loss.item()} at iteration {self.iteration} on samples {list(ids)}"
            logger.error(message)
            raise TrainingDivergedError(message)
        loss.backward()
        self.optimizer.step()
        self.iteration += 1
        return float(loss.item())

    def checkpoint(self, epoch: int) -> Checkpoint:
        return Checkpoint.from_network(
            self.net,
            epoch=epoch,
            optimizer_state=self.optimizer.state_dict(),
            train_config=self.config.to_dict(),
            loss_history=list(self.loss_history),
        )

    def _save(self, checkpoint: Checkpoint, name: str) -> None:
        if self.out_dir is None:
            return
        path = checkpoint.save(os.path.join(self.out_dir, name))
        logger.info(f"Saved checkpoint {path}")

    def _validate(self, epoch: int) -> None:
        if self.val_loader is None:
            return
        mae = evaluate_mae(self.net, self.val_loader, self.device)
        logger.info(f"Epoch {epoch + 1}: validation MAE {mae:.4f}")
        if mae < self.best_val_mae:
            self.best_val_mae = mae
            self._save(self.checkpoint(epoch + 1), "best.pt")

    def fit(self) -> Checkpoint:
        """
        Run the training loop.

        Stops after ``total_epochs`` or once ``max_iterations`` updates were
        made, whichever comes first.

        Returns:
            The final checkpoint (also written as ``last.pt`` when an output
            directory is configured).

        Raises:
            TrainingDivergedError: On a non-finite loss.
        """
        self.net.train()
        epoch = 0
        for epoch in range(self.config.total_epochs):
            if self._iterations_exhausted():
                break
            lr = self._set_lr(epoch)
            if hasattr(self.data, "set_epoch"):
                self.data.set_epoch(epoch)

            losses = []
            for batch in self.loader:
                losses.append(self.train_step(batch))
                if self._iterations_exhausted():
                    break
            mean_loss = sum(losses) / len(losses)
            self.loss_history.append(mean_loss)
            logger.info(f"Epoch {epoch + 1}/{self.config.total_epochs}: loss {mean_loss:.4f}, lr {lr:.2e}")

            self._validate(epoch)
            if (epoch + 1) % self.config.checkpoint_every == 0:
                self._save(self.checkpoint(epoch + 1), f"epoch_{epoch + 1:03d}.pt")

        final = self.checkpoint(len(self.loss_history))
        self._save(final, "last.pt")
        return final


def train(
    net_config: NetworkConfig,
    train_config: TrainConfig,
    data: Dataset,
    out_dir: Optional[str] = None,
    val_data: Optional[Dataset] = None,
) -> Checkpoint:
    """Train a network end to end and return the final checkpoint."""
    return Trainer(net_config, train_config, data, out_dir=out_dir, val_data=val_data).fit()
