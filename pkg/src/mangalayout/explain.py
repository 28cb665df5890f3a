"""Grad-CAM heatmaps and overlays.

The heatmap for class ``c`` at a convolutional layer with activations
``A_k`` is ``relu(sum_k w_k A_k)`` where ``w_k`` is the spatial mean of
``d score_c / d A_k``. It is min-max normalized at feature resolution and
bilinearly upsampled to the page size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib import colormaps
from scipy import ndimage
from torch import nn

from .exceptions import DimensionMismatchError, LayerNotFoundError, NonScalarTargetError
from .render import RenderedImage
from .validation import check_alpha, check_raster

COLORMAP = "viridis"


@dataclass(frozen=True, eq=False)
class Heatmap:
    values: np.ndarray
    target_class: int
    source: Tuple[str, str, str] = ("", "", "")  # (image ref, model ref, layer)
    degenerate: bool = False

    @property
    def shape(self):
        return self.values.shape


def _last_conv_name(module: nn.Module) -> str:
    name = None
    for n, m in module.named_modules():
        if isinstance(m, nn.Conv2d):
            name = n
    if name is None:
        raise LayerNotFoundError("model has no Conv2d layer to default to")
    return name


def _resolve(model, image):
    """Return ``(module, input batch, output size, default layer, model ref)``."""
    from .classifier.backbones import backbone_info
    from .classifier.estimator import LayoutClassifier
    from .classifier.pipeline import FoldModel

    if isinstance(model, FoldModel):
        module = model.estimator.module_
        x = torch.from_numpy(model.preprocess(image))[None]
        layer = backbone_info(model.config.backbone).target_layer
        ref = f"fold{model.fold}"
    elif isinstance(model, (LayoutClassifier, nn.Module)):
        # no preprocessing knowledge here: ``image`` must already be model input
        if isinstance(image, RenderedImage):
            raise TypeError("pass a FoldModel to explain a RenderedImage; bare models need preprocessed arrays")
        if isinstance(model, LayoutClassifier):
            module = model.module_
            layer = backbone_info(model.backbone).target_layer
        else:
            module = model
            layer = _last_conv_name(module)
        x = torch.as_tensor(np.asarray(image), dtype=torch.float32)
        while x.ndim < 4:
            x = x[None]
        ref = type(module).__name__
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    pixels = image.pixels if isinstance(image, RenderedImage) else np.asarray(image)
    out_hw = tuple(pixels.shape[-2:])
    return module, x, out_hw, layer, ref


def normalize_map(cam: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Min-max normalize a rectified map; all-zero maps are flagged degenerate."""
    hi = float(cam.max())
    if hi <= 0.0:
        return np.zeros_like(cam), True
    lo = float(cam.min())
    if hi == lo:
        return np.ones_like(cam), False
    return (cam - lo) / (hi - lo), False


def grad_cam(model, image, target_class: Optional[int] = None, target_layer: Optional[str] = None, *, logit_scale: float = 1.0) -> Heatmap:
    """Compute a Grad-CAM heatmap for ``image``.

    Parameters
    ----------
    model
        A trained :class:`~mangalayout.classifier.pipeline.FoldModel`, or a
        bare ``torch.nn.Module`` fed ``image`` as-is (2-D, 3-D or 4-D array).
    target_class
        Class whose score is explained; defaults to the predicted class.
    target_layer
        Dotted module name; defaults to the backbone's last conv block.
    logit_scale
        Multiplies the class score before differentiation. The normalized
        map does not depend on it for positive values.
    """
    module, x, out_hw, default_layer, model_ref = _resolve(model, image)
    layer_name = target_layer or default_layer
    layers = dict(module.named_modules())
    if layer_name not in layers:
        raise LayerNotFoundError(f"no layer named {layer_name!r}")
    store = {}

    def hook(_m, _inp, out):
        store["act"] = out
        out.register_hook(lambda g: store.__setitem__("grad", g))

    was_training = module.training
    module.eval()
    handle = layers[layer_name].register_forward_hook(hook)
    try:
        with torch.enable_grad():
            x = x.detach().requires_grad_(True)
            logits = module(x)
            if logits.ndim != 2 or logits.shape[0] != 1:
                raise NonScalarTargetError(f"expected logits of shape (1, n_classes), got {tuple(logits.shape)}")
            cls = int(logits.argmax(1)) if target_class is None else int(target_class)
            if not 0 <= cls < logits.shape[1]:
                raise NonScalarTargetError(f"target class {cls} outside [0, {logits.shape[1]})")
            module.zero_grad(set_to_none=True)
            (logits[0, cls] * logit_scale).backward()
    finally:
        handle.remove()
        module.train(was_training)
    if "act" not in store or "grad" not in store:
        raise LayerNotFoundError(f"layer {layer_name!r} did not take part in the forward pass")
    act, grad = store["act"].detach(), store["grad"].detach()
    if act.ndim != 4:
        raise LayerNotFoundError(f"layer {layer_name!r} output is not a conv activation: shape {tuple(act.shape)}")

    weights = grad.mean(dim=(2, 3), keepdim=True)
    cam = torch.relu((weights * act).sum(dim=1))[0].double().numpy()
    cam, degenerate = normalize_map(cam)
    if not degenerate and cam.shape != out_hw:
        up = F.interpolate(torch.from_numpy(cam)[None, None], size=out_hw, mode="bilinear", align_corners=False)[0, 0].numpy()
        # keep the maximum at exactly 1 after interpolation
        cam = np.clip(up / up.max(), 0.0, 1.0)
    elif degenerate:
        cam = np.zeros(out_hw)
    image_ref = ""
    if isinstance(image, RenderedImage):
        image_ref = f"{image.source[0]}/{image.source[1]}"
    return Heatmap(cam, cls, (image_ref, model_ref, layer_name), degenerate)


def colorize(values: np.ndarray, cmap: str = COLORMAP) -> np.ndarray:
    """Map ``[0, 1]`` values to float RGB in ``[0, 255]``."""
    return colormaps[cmap](np.clip(values, 0.0, 1.0))[..., :3] * 255.0


def overlay(heatmap: Heatmap, image, alpha: float = 0.4, cmap: str = COLORMAP) -> np.ndarray:
    """Blend ``heatmap`` over the grayscale page: ``(1-a)*gray + a*cmap(h)``.

    Returns an ``(H, W, 3)`` uint8 image.
    """
    alpha = check_alpha(alpha)
    gray = check_raster(image.pixels if isinstance(image, RenderedImage) else image).astype(np.float64)
    if heatmap.values.shape != gray.shape:
        raise DimensionMismatchError(f"heatmap {heatmap.values.shape} vs image {gray.shape}")
    out = (1.0 - alpha) * gray[..., None] + alpha * colorize(heatmap.values, cmap)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def ensemble_heatmap(heatmaps: Sequence[Heatmap], votes: Sequence[int], final: int) -> Heatmap:
    """Mean of the fold heatmaps whose model voted for ``final``.

    Falls back to a plain mean when no model voted for it.
    """
    if not heatmaps:
        raise ValueError("no heatmaps")
    weights = np.array([1.0 if v == final else 0.0 for v in votes])
    if weights.sum() == 0:
        weights = np.ones(len(heatmaps))
    stack = np.stack([h.values for h in heatmaps])
    mean = np.tensordot(weights / weights.sum(), stack, axes=1)
    hi = mean.max()
    values = mean / hi if hi > 0 else mean
    return Heatmap(values, final, (heatmaps[0].source[0], "vote-weighted-mean", heatmaps[0].source[2]), bool(hi <= 0))


def stroke_mask(image, stroke_value: int = 0) -> np.ndarray:
    pixels = image.pixels if isinstance(image, RenderedImage) else np.asarray(image)
    return pixels == stroke_value


def stroke_attention(heatmap: Heatmap, image, dilation: int = 12, stroke_value: int = 0) -> Tuple[float, float]:
    """Mean heatmap value within ``dilation`` px of a stroke and elsewhere."""
    near = ndimage.maximum_filter(stroke_mask(image, stroke_value).astype(np.uint8), size=2 * dilation + 1).astype(bool)
    v = heatmap.values
    inside = float(v[near].mean()) if near.any() else 0.0
    outside = float(v[~near].mean()) if (~near).any() else 0.0
    return inside, outside


def heatmap_stats(heatmap: Heatmap) -> dict:
    v = heatmap.values
    return {
        "target_class": heatmap.target_class,
        "image": heatmap.source[0],
        "model": heatmap.source[1],
        "layer": heatmap.source[2],
        "degenerate": bool(heatmap.degenerate),
        "mean": float(v.mean()),
        "max": float(v.max()),
        "argmax_yx": [int(i) for i in np.unravel_index(int(v.argmax()), v.shape)],
    }
