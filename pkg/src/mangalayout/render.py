"""Ablation renderers for facing-page images.

Three base modes exist: the untouched page, the page with text and character
boxes filled in, and a blank canvas with only the panel outlines stroked.
Noisy frame-only variants come from feeding perturbed quads to
:func:`render_frame_only`.
"""

from __future__ import annotations

import enum
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from skimage.draw import line as draw_line
from sklearn.base import BaseEstimator, TransformerMixin

from .annotation import PageAnnotation, RegionKind
from .exceptions import EmptyFrameListError
from .perturb import NoiseSpec, Quad, page_quads
from .validation import check_gray_value, check_page_dims, check_raster

logger = logging.getLogger(__name__)


class AblationMode(enum.Enum):
    UNPROCESSED = "unprocessed"
    MASKED = "masked"
    FRAME_ONLY = "frame_only"


@dataclass(frozen=True)
class RenderConfig:
    mask_fill: int = 255
    stroke_value: int = 0
    stroke_width: int = 3
    canvas_value: int = 255

    def __post_init__(self):
        for name in ("mask_fill", "stroke_value", "canvas_value"):
            check_gray_value(getattr(self, name), name)
        if isinstance(self.stroke_width, bool) or int(self.stroke_width) != self.stroke_width or self.stroke_width < 1:
            raise ValueError(f"stroke_width must be a positive integer, got {self.stroke_width!r}")
        if self.mask_fill == self.stroke_value:
            warnings.warn("mask_fill equals stroke_value; masks will be indistinguishable from strokes", stacklevel=3)


@dataclass(frozen=True)
class AblationSpec:
    """Which rendering produces a training image.

    Five concrete variants are used in practice: the three base modes plus
    frame-only under rectangular or quadrilateral noise.
    """

    mode: AblationMode = AblationMode.FRAME_ONLY
    noise: Optional[NoiseSpec] = None
    regenerate_per_epoch: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", AblationMode(self.mode))
        if self.noise is not None and self.mode is not AblationMode.FRAME_ONLY:
            raise ValueError("noise only applies to the frame-only mode")
        if self.regenerate_per_epoch and self.noise is None:
            raise ValueError("regenerate_per_epoch needs a noise spec")

    @property
    def name(self) -> str:
        if self.noise is None:
            return self.mode.value
        return f"{self.mode.value}-{self.noise.family.value}{self.noise.range}"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "noise": None if self.noise is None else self.noise.to_dict(),
            "regenerate_per_epoch": self.regenerate_per_epoch,
        }

    @classmethod
    def from_dict(cls, d) -> "AblationSpec":
        noise = d.get("noise")
        return cls(
            AblationMode(d.get("mode", "frame_only")),
            None if noise is None else NoiseSpec.from_dict(noise),
            bool(d.get("regenerate_per_epoch", False)),
        )

    def with_seed(self, seed: int) -> "AblationSpec":
        if self.noise is None:
            return self
        return AblationSpec(self.mode, NoiseSpec(self.noise.family, self.noise.range, seed), self.regenerate_per_epoch)


@dataclass(frozen=True, eq=False)
class RenderedImage:
    pixels: np.ndarray
    mode: AblationMode
    source: Tuple[str, int] = ("", 0)
    variant: str = ""

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True, eq=False)
class PageItem:
    """A page to render; ``image`` may be ``None`` for frame-only rendering."""

    title: str
    page: PageAnnotation
    image: Optional[np.ndarray] = None

    @property
    def ref(self) -> str:
        return f"{self.title}/{self.page.index}"


def render_unprocessed(page_image, page: PageAnnotation, *, title: str = "") -> RenderedImage:
    img = check_raster(page_image)
    check_page_dims(img, page.width, page.height)
    return RenderedImage(img.copy(), AblationMode.UNPROCESSED, (title, page.index), AblationMode.UNPROCESSED.value)


def render_masked(page_image, page: PageAnnotation, cfg: RenderConfig = RenderConfig(), *, title: str = "") -> RenderedImage:
    """Fill every text, face and body box with ``cfg.mask_fill``."""
    img = check_raster(page_image)
    check_page_dims(img, page.width, page.height)
    out = img.copy()
    for region in page.regions:
        if region.kind.is_masked:
            b = region.box
            out[b.ymin:b.ymax, b.xmin:b.xmax] = cfg.mask_fill
    return RenderedImage(out, AblationMode.MASKED, (title, page.index), AblationMode.MASKED.value)


def _stroke_offsets(width: int) -> np.ndarray:
    lo = -((width - 1) // 2)
    return np.arange(lo, lo + width)


def stroke_quads(canvas: np.ndarray, quads: Iterable[Quad], value: int, width: int) -> np.ndarray:
    """Stroke quad outlines in place with square-dilated Bresenham lines."""
    h, w = canvas.shape
    offsets = _stroke_offsets(width)
    for quad in quads:
        for (x0, y0), (x1, y1) in quad.edges():
            rr, cc = draw_line(y0, x0, y1, x1)
            for dy in offsets:
                r = rr + dy
                keep_r = (r >= 0) & (r < h)
                for dx in offsets:
                    c = cc + dx
                    keep = keep_r & (c >= 0) & (c < w)
                    canvas[r[keep], c[keep]] = value
    return canvas


def render_frame_only(
    page: PageAnnotation,
    frames: Optional[Sequence[Quad]] = None,
    cfg: RenderConfig = RenderConfig(),
    *,
    title: str = "",
    variant: str = AblationMode.FRAME_ONLY.value,
) -> RenderedImage:
    """Draw panel outlines on a blank canvas the size of ``page``.

    ``frames`` defaults to the page's own frame boxes. Strokes are centred
    on each edge and clipped at the canvas border.
    """
    if frames is None:
        frames = [Quad.from_bbox(r.box) for r in page.frames]
    if len(frames) == 0:
        raise EmptyFrameListError(f"page {page.index} of {title or '<untitled>'} has no frames to draw")
    canvas = np.full((page.height, page.width), cfg.canvas_value, dtype=np.uint8)
    stroke_quads(canvas, frames, cfg.stroke_value, cfg.stroke_width)
    return RenderedImage(canvas, AblationMode.FRAME_ONLY, (title, page.index), variant)


def render_page(item: PageItem, spec: AblationSpec, cfg: RenderConfig = RenderConfig()) -> RenderedImage:
    if spec.mode is AblationMode.UNPROCESSED:
        return render_unprocessed(item.image, item.page, title=item.title)
    if spec.mode is AblationMode.MASKED:
        return render_masked(item.image, item.page, cfg, title=item.title)
    quads = page_quads(item.page, spec.noise, title=item.title)
    return render_frame_only(item.page, quads, cfg, title=item.title, variant=spec.name)


class PageRenderer(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping :class:`PageItem` lists to rendered images.

    Parameters
    ----------
    mode : str or AblationMode
    noise : NoiseSpec, optional
        Only valid for the frame-only mode.
    config : RenderConfig
    """

    def __init__(self, mode="frame_only", noise=None, config=None):
        self.mode = mode
        self.noise = noise
        self.config = config

    @property
    def spec_(self) -> AblationSpec:
        return AblationSpec(AblationMode(self.mode), self.noise)

    def fit(self, X=None, y=None):
        self.spec_  # noqa: B018 - validates params
        return self

    def transform(self, X: Iterable[PageItem]) -> List[RenderedImage]:
        spec = self.spec_
        cfg = self.config or RenderConfig()
        return [render_page(item, spec, cfg) for item in X]


def rendered_path(mode_name: str, title: str, page_index: int) -> str:
    return f"{mode_name}/{title}/{page_index}.png"


def write_rendered_corpus(
    items: Iterable[PageItem],
    spec: AblationSpec,
    out_dir,
    label_of: Callable[[str], int],
    cfg: RenderConfig = RenderConfig(),
) -> Path:
    """Render ``items`` to ``<out_dir>/<mode>/<title>/<index>.png``.

    ``index.json`` in ``out_dir`` maps each relative path to its title, page
    index, label id and mode; existing entries for other modes are kept.
    """
    out_dir = Path(out_dir)
    index_path = out_dir / "index.json"
    index = json.loads(index_path.read_text(encoding="utf-8")) if index_path.exists() else {}
    for item in items:
        img = render_page(item, spec, cfg)
        rel = rendered_path(spec.name, item.title, item.page.index)
        dest = out_dir / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(img.pixels, mode="L").save(dest)
        index[rel] = {"title": item.title, "page_index": item.page.index, "label": int(label_of(item.title)), "mode": spec.name}
    out_dir.mkdir(parents=True, exist_ok=True)
    index_path.write_text(json.dumps(index, indent=1, sort_keys=True), encoding="utf-8")
    return index_path


def load_rendered(corpus_dir, mode_name: str, title: str, page_index: int) -> RenderedImage:
    path = Path(corpus_dir) / rendered_path(mode_name, title, page_index)
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("L"))
    mode = AblationMode(mode_name.split("-")[0])
    return RenderedImage(pixels, mode, (title, page_index), mode_name)
