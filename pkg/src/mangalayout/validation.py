"""Input validation helpers shared by the estimators and renderers.

These play the role of :func:`sklearn.utils.check_array` for the kinds of
inputs this package handles: single-channel page rasters, image batches and
label vectors.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError, IdOutOfRangeError


def check_raster(image, *, name="image") -> np.ndarray:
    """Return ``image`` as a 2-D ``uint8`` array.

    RGB(A) input is collapsed to luminance so that colour scans can be fed to
    the grayscale renderers; floats are accepted only in ``[0, 255]``.
    """
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        rgb = arr[..., :3].astype(np.float64)
        arr = rgb @ np.array([0.299, 0.587, 0.114])
        arr = np.rint(arr)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D raster, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError(f"{name} values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def check_page_dims(image: np.ndarray, width: int, height: int) -> None:
    if image.shape != (height, width):
        raise DimensionMismatchError(
            f"image is {image.shape[1]}x{image.shape[0]} (WxH) but the annotation "
            f"declares {width}x{height}"
        )


def check_gray_value(value, name) -> int:
    if isinstance(value, bool) or int(value) != value or not 0 <= value <= 255:
        raise ValueError(f"{name} must be an integer in [0, 255], got {value!r}")
    return int(value)


def check_image_batch(X, *, channels=None) -> np.ndarray:
    """Validate a preprocessed batch shaped ``(n, channels, size, size)``."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4:
        raise ValueError(f"expected a 4-D (n, c, h, w) batch, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if channels is not None and X.shape[1] != channels:
        raise ValueError(f"expected {channels} channels, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("batch contains non-finite values")
    return X


def check_labels(y, n_classes: int, *, n_samples=None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if n_samples is not None and len(y) != n_samples:
        raise ValueError(f"got {len(y)} labels for {n_samples} samples")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integer class ids")
        y = y.astype(np.int64)
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise IdOutOfRangeError(f"label ids must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    return y.astype(np.int64)


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha
