"""Training recipe and learning-rate schedule."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import List


@dataclass(frozen=True)
class TrainConfig:
    """Fine-tuning hyperparameters; the defaults are the reference recipe.

    ResNet101 pretrained on ImageNet, batch 32, cross-entropy, SGD with
    momentum 0.9, learning rate 0.001 divided by ten every 30 epochs, 100
    epochs, evaluation after every epoch up to 30 and every tenth after.
    """

    backbone: str = "resnet101-imagenet"
    batch_size: int = 32
    initial_lr: float = 0.001
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    lr_step_epochs: int = 30
    max_epochs: int = 100
    input_size: int = 224
    eval_every_until: int = 30
    eval_every_after: int = 10
    weight_decay: float = 0.0
    full_finetune: bool = True
    select_on_dev: bool = False
    resize: str = "stretch"
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "initial_lr", "momentum", "lr_decay_factor", "lr_step_epochs",
                     "max_epochs", "input_size", "eval_every_until", "eval_every_after"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.resize not in ("stretch", "pad"):
            raise ValueError(f"resize must be 'stretch' or 'pad', got {self.resize!r}")

    def lr_at(self, epoch: int) -> float:
        return lr_at_epoch(epoch, self.initial_lr, self.lr_decay_factor, self.lr_step_epochs)

    def eval_epochs(self) -> List[int]:
        return eval_epochs(self.max_epochs, self.eval_every_until, self.eval_every_after)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def estimator_params(self) -> dict:
        d = self.to_dict()
        d.pop("input_size")
        d.pop("resize")
        return d

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def lr_at_epoch(epoch: int, initial_lr: float = 0.001, decay: float = 0.1, step: int = 30) -> float:
    """Step schedule ``initial_lr * decay ** floor((epoch - 1) / step)``, epochs 1-based."""
    if epoch < 1:
        raise ValueError(f"epochs are 1-based, got {epoch}")
    return initial_lr * decay ** ((epoch - 1) // step)


def eval_epochs(max_epochs: int, every_until: int = 30, every_after: int = 10) -> List[int]:
    dense = list(range(1, min(every_until, max_epochs) + 1))
    sparse = list(range(every_until + every_after, max_epochs + 1, every_after))
    out = dense + sparse
    if max_epochs not in out:
        out.append(max_epochs)
    return out


# Desk-scale profile used by the synthetic acceptance suite.
TINY_PROFILE = TrainConfig(
    backbone="tiny",
    input_size=64,
    max_epochs=10,
    initial_lr=0.01,
    eval_every_until=30,
    eval_every_after=10,
)

FULL_SCALE_PROFILE = TrainConfig()
