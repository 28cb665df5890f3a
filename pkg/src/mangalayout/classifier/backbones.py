"""Backbone registry.

``tiny`` is a four-block CNN sized for CPU experiments on synthetic spreads;
the ResNet entries wrap torchvision models with a resized classification
head.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import torch
from torch import nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class TinyCNN(nn.Module):
    """Four conv-BN-ReLU blocks; the last one is not pooled so Grad-CAM has
    an input/8 feature map to work with."""

    def __init__(self, n_classes: int, in_channels: int = 1, widths=(16, 32, 64, 64)):
        super().__init__()
        blocks = []
        c_in = in_channels
        for i, c_out in enumerate(widths):
            layers = [nn.Conv2d(c_in, c_out, 3, padding=1, bias=False), nn.BatchNorm2d(c_out), nn.ReLU(inplace=True)]
            if i < len(widths) - 1:
                layers.append(nn.MaxPool2d(2))
            blocks.append(nn.Sequential(*layers))
            c_in = c_out
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(c_in, n_classes)

    def forward(self, x):
        return self.fc(torch.flatten(self.pool(self.features(x)), 1))


@dataclass(frozen=True)
class BackboneInfo:
    name: str
    in_channels: int
    mean: Tuple[float, ...]
    std: Tuple[float, ...]
    target_layer: str
    head: str
    build: Callable[[int, bool], nn.Module]


def _build_tiny(n_classes: int, pretrained: bool) -> nn.Module:
    return TinyCNN(n_classes)


def _torchvision_builder(arch: str, weights_name: str):
    def build(n_classes: int, pretrained: bool) -> nn.Module:
        import torchvision

        weights = None
        if pretrained:
            weights = torchvision.models.get_model_weights(arch)[weights_name]
        model = torchvision.models.get_model(arch, weights=weights)
        model.fc = nn.Linear(model.fc.in_features, n_classes)
        return model

    return build


BACKBONES: Dict[str, BackboneInfo] = {
    "tiny": BackboneInfo("tiny", 1, (0.5,), (0.5,), "features.3", "fc", _build_tiny),
}
for _arch in ("resnet18", "resnet50", "resnet101"):
    _b = _torchvision_builder(_arch, "IMAGENET1K_V1")
    BACKBONES[_arch] = BackboneInfo(_arch, 3, IMAGENET_MEAN, IMAGENET_STD, "layer4", "fc", _b)
    BACKBONES[f"{_arch}-imagenet"] = BACKBONES[_arch]


def backbone_info(name: str) -> BackboneInfo:
    try:
        return BACKBONES[name]
    except KeyError:
        raise ValueError(f"unknown backbone {name!r}; choose from {sorted(BACKBONES)}") from None


def build_backbone(name: str, n_classes: int, *, pretrained=None) -> nn.Module:
    """Instantiate ``name`` with an ``n_classes``-way head.

    ``pretrained`` defaults to True for ``*-imagenet`` identifiers.
    """
    info = backbone_info(name)
    if pretrained is None:
        pretrained = name.endswith("-imagenet")
    return info.build(n_classes, pretrained)
