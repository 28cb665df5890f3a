"""Turn rendered pages into normalized model input."""

from __future__ import annotations

from typing import Iterable

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, TransformerMixin

from ..render import RenderedImage
from ..validation import check_raster
from .backbones import backbone_info


def _square_pad(t: torch.Tensor, fill: float) -> torch.Tensor:
    h, w = t.shape[-2:]
    side = max(h, w)
    top, left = (side - h) // 2, (side - w) // 2
    return F.pad(t, (left, side - w - left, top, side - h - top), value=fill)


def preprocess_input(img, input_size: int = 224, backbone: str = "resnet101-imagenet", resize: str = "stretch") -> torch.Tensor:
    """Resize to ``input_size`` square, replicate channels, normalize.

    ``resize="stretch"`` ignores aspect ratio; ``"pad"`` pads with white to a
    square first. Returns a ``(channels, input_size, input_size)`` float tensor.
    """
    pixels = img.pixels if isinstance(img, RenderedImage) else img
    pixels = check_raster(pixels)
    info = backbone_info(backbone)
    t = torch.from_numpy(pixels.astype(np.float32) / 255.0)[None, None]
    if resize == "pad":
        t = _square_pad(t, 1.0)
    elif resize != "stretch":
        raise ValueError(f"resize must be 'stretch' or 'pad', got {resize!r}")
    if t.shape[-2:] != (input_size, input_size):
        t = F.interpolate(t, size=(input_size, input_size), mode="bilinear", align_corners=False, antialias=True)
    t = t[0].expand(info.in_channels, -1, -1)
    mean = torch.tensor(info.mean, dtype=torch.float32)[:, None, None]
    std = torch.tensor(info.std, dtype=torch.float32)[:, None, None]
    return ((t - mean) / std).contiguous()


class PagePreprocessor(BaseEstimator, TransformerMixin):
    """Stateless transformer from rendered pages to an ``(n, c, s, s)`` array."""

    def __init__(self, input_size=224, backbone="resnet101-imagenet", resize="stretch"):
        self.input_size = input_size
        self.backbone = backbone
        self.resize = resize

    def fit(self, X=None, y=None):
        backbone_info(self.backbone)
        return self

    def transform(self, X: Iterable) -> np.ndarray:
        out = [preprocess_input(img, self.input_size, self.backbone, self.resize).numpy() for img in X]
        if not out:
            raise ValueError("no images to preprocess")
        return np.stack(out)
