"""Synthetic facing-page layouts for desk-scale experiments.

Each :class:`SyntheticStyle` stands in for one work. A spread is split into
two half-pages which are laid out independently as rows of panels, except
for four-panel styles which always get a single column of four equal
panels per half.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import astuple, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .annotation import BBox, BookAnnotation, PageAnnotation, Region, RegionKind, serialize_book, write_metadata
from .exceptions import StyleOverlapWarning

DEFAULT_PAGE_SIZE = (1654, 1170)
MIN_PANEL = 24


@dataclass(frozen=True)
class SyntheticStyle:
    """Layout parameters for one synthetic work.

    ``rows``/``cols`` are sampled uniformly per half-page/per row, so repeat a
    value to weight it. ``gutter`` and ``margin`` are ``(mean, jitter)`` in
    pixels; the actual value is drawn uniformly from ``mean +/- jitter`` once
    per page. ``size_jitter`` perturbs relative row heights and column widths.
    """

    style_id: str
    rows: Tuple[int, ...] = (3,)
    cols: Tuple[int, ...] = (2,)
    gutter: Tuple[int, int] = (20, 4)
    margin: Tuple[int, int] = (70, 8)
    merge_prob: float = 0.0
    four_panel: bool = False
    page_size: Tuple[int, int] = DEFAULT_PAGE_SIZE
    size_jitter: float = 0.15
    genre: Optional[str] = None
    publisher: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "cols", tuple(self.cols))
        if not self.rows or min(self.rows) < 1 or not self.cols or min(self.cols) < 1:
            raise ValueError(f"{self.style_id}: rows and cols need positive choices")
        if not 0.0 <= self.merge_prob <= 1.0:
            raise ValueError(f"{self.style_id}: merge_prob must be in [0, 1]")
        if not 0.0 <= self.size_jitter < 1.0:
            raise ValueError(f"{self.style_id}: size_jitter must be in [0, 1)")
        if self.gutter[1] > self.gutter[0] or self.margin[1] > self.margin[0]:
            raise ValueError(f"{self.style_id}: jitter must not exceed the mean")

    def parameter_vector(self) -> tuple:
        return astuple(replace(self, style_id="", genre=None, publisher=None))


def default_styles(page_size=DEFAULT_PAGE_SIZE) -> List[SyntheticStyle]:
    """Twelve styles mixing easy (different grids) and hard (same grid) pairs."""
    s = [
        SyntheticStyle("yonkoma-a", four_panel=True, gutter=(30, 4), margin=(90, 6), genre="4-panel", publisher="Takeshobo"),
        SyntheticStyle("yonkoma-b", four_panel=True, gutter=(70, 4), margin=(60, 6), genre="4-panel", publisher="Houbunsha"),
        SyntheticStyle("grid3x2-tight", rows=(3,), cols=(2,), gutter=(16, 3), margin=(70, 6), genre="Humor", publisher="Shueisha"),
        SyntheticStyle("grid3x2-airy", rows=(3,), cols=(2,), gutter=(48, 4), margin=(70, 6), genre="Humor", publisher="Kodansha"),
        SyntheticStyle("rows4", rows=(4,), cols=(1, 2), gutter=(24, 4), margin=(80, 8), genre="Love", publisher="Shueisha"),
        SyntheticStyle("rows5", rows=(5,), cols=(1, 2, 3), gutter=(18, 4), margin=(60, 8), genre="Battle", publisher="Kodansha"),
        SyntheticStyle("wide2", rows=(2,), cols=(1, 2), gutter=(30, 6), margin=(90, 10), genre="Fantasy", publisher="Shogakukan"),
        SyntheticStyle("mixed-merge", rows=(3, 4), cols=(1, 2, 3), merge_prob=0.5, gutter=(22, 6), margin=(75, 10), size_jitter=0.3, genre="SF", publisher="Shogakukan"),
        SyntheticStyle("mixed-narrow", rows=(3, 4), cols=(2, 3), gutter=(12, 3), margin=(40, 6), size_jitter=0.3, genre="SF", publisher="Takeshobo"),
        SyntheticStyle("strips", rows=(4, 5), cols=(1,), gutter=(36, 6), margin=(100, 8), size_jitter=0.25, genre="Suspense", publisher="Houbunsha"),
        SyntheticStyle("dense", rows=(5, 6), cols=(2, 3), gutter=(14, 3), margin=(50, 6), size_jitter=0.2, genre="Sport", publisher="Shueisha"),
        SyntheticStyle("splash", rows=(1, 2), cols=(1, 2), gutter=(40, 8), margin=(130, 10), size_jitter=0.2, genre="Love", publisher="Kodansha"),
    ]
    return [replace(x, page_size=tuple(page_size)) for x in s]


def _split_extent(rng, total: int, n: int, gap: int, jitter: float) -> List[Tuple[int, int]]:
    """Cut ``[0, total)`` into ``n`` jittered segments separated by ``gap``."""
    usable = total - gap * (n - 1)
    if usable < n * MIN_PANEL:
        raise ValueError(f"cannot fit {n} panels of >= {MIN_PANEL}px in {total}px")
    if jitter == 0:
        # equal segments; leftover pixels join the trailing margin
        return [(i * (usable // n + gap), i * (usable // n + gap) + usable // n) for i in range(n)]
    weights = 1.0 + rng.uniform(-jitter, jitter, size=n)
    sizes = np.floor(usable * weights / weights.sum()).astype(int)
    sizes = np.maximum(sizes, MIN_PANEL)
    sizes[-1] = usable - sizes[:-1].sum()
    if sizes[-1] < MIN_PANEL:
        sizes = np.full(n, usable // n)
        sizes[-1] = usable - sizes[:-1].sum()
    out, pos = [], 0
    for s in sizes:
        out.append((pos, pos + int(s)))
        pos += int(s) + gap
    return out


def _layout_half(rng, style: SyntheticStyle, x0: int, y0: int, w: int, h: int, gutter: int) -> List[BBox]:
    boxes = []
    if style.four_panel:
        for a, b in _split_extent(rng, h, 4, gutter, 0.0):
            boxes.append(BBox(x0, y0 + a, x0 + w, y0 + b))
        return boxes
    n_rows = int(rng.choice(style.rows))
    for ra, rb in _split_extent(rng, h, n_rows, gutter, style.size_jitter):
        n_cols = int(rng.choice(style.cols))
        cells = _split_extent(rng, w, n_cols, gutter, style.size_jitter)
        merged = [list(cells[0])]
        for ca, cb in cells[1:]:
            if rng.random() < style.merge_prob:
                merged[-1][1] = cb
            else:
                merged.append([ca, cb])
        # manga reads right to left; order panels that way within a row
        for ca, cb in reversed(merged):
            boxes.append(BBox(x0 + ca, y0 + ra, x0 + cb, y0 + rb))
    return boxes


def generate_page(style: SyntheticStyle, index: int, rng) -> PageAnnotation:
    width, height = style.page_size
    half = width // 2
    gutter = int(rng.integers(style.gutter[0] - style.gutter[1], style.gutter[0] + style.gutter[1], endpoint=True))
    m_lo, m_hi = style.margin[0] - style.margin[1], style.margin[0] + style.margin[1]
    top, bottom, outer, inner = (int(v) for v in rng.integers(m_lo, m_hi, size=4, endpoint=True))
    inner = max(inner // 2, 1)
    # right half first (reading order), then left; halves mirror margins
    boxes = _layout_half(rng, style, width - half + inner, top, half - outer - inner, height - top - bottom, gutter)
    boxes += _layout_half(rng, style, outer, top, half - outer - inner, height - top - bottom, gutter)
    regions = [Region(f"f{index:04d}_{k:02d}", RegionKind.FRAME, b) for k, b in enumerate(boxes)]
    return PageAnnotation(index, width, height, regions)


def _style_seed(seed: int, style_id: str) -> np.random.SeedSequence:
    h = int.from_bytes(hashlib.sha256(style_id.encode("utf-8")).digest()[:8], "little")
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, h])


def generate_synthetic_corpus(
    styles: Sequence[SyntheticStyle],
    pages_per_style: int,
    seed: int,
    *,
    works_per_style: int = 1,
) -> Tuple[List[BookAnnotation], List[np.ndarray]]:
    """Generate frame-only annotations plus blank page rasters.

    With ``works_per_style > 1`` each style yields that many works titled
    ``<style_id>-w<k>`` sharing the style's genre and publisher. Rasters are
    read-only white arrays, one per page in book order.
    """
    ids = [s.style_id for s in styles]
    if len(set(ids)) != len(ids):
        raise ValueError(f"style ids must be distinct: {ids}")
    if pages_per_style < 10:
        raise ValueError(f"pages_per_style must be >= 10, got {pages_per_style}")
    if works_per_style < 1 or works_per_style > pages_per_style:
        raise ValueError("works_per_style must be in [1, pages_per_style]")
    vectors = {}
    for s in styles:
        other = vectors.setdefault(s.parameter_vector(), s.style_id)
        if other != s.style_id:
            warnings.warn(f"styles {other!r} and {s.style_id!r} have identical parameters", StyleOverlapWarning, stacklevel=2)

    books, rasters = [], []
    for style in styles:
        rng = np.random.default_rng(_style_seed(seed, style.style_id))
        per_work = np.array_split(np.arange(pages_per_style), works_per_style)
        for k, idx in enumerate(per_work):
            title = style.style_id if works_per_style == 1 else f"{style.style_id}-w{k}"
            pages = [generate_page(style, i, rng) for i in range(len(idx))]
            books.append(BookAnnotation(title, style.genre, style.publisher, pages))
            w, h = style.page_size
            blank = np.broadcast_to(np.uint8(255), (h, w))
            rasters.extend(blank for _ in pages)
    return books, rasters


def write_synthetic_corpus(root, books: Sequence[BookAnnotation], *, write_images: bool = True) -> Path:
    """Write ``annotations/``, ``images/`` and ``metadata.csv`` under ``root``."""
    root = Path(root)
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    for book in books:
        (root / "annotations" / f"{book.title}.xml").write_text(serialize_book(book), encoding="utf-8")
        if write_images:
            folder = root / "images" / book.title
            folder.mkdir(parents=True, exist_ok=True)
            for page in book.pages:
                Image.new("L", (page.width, page.height), 255).save(folder / f"{page.index:03d}.png")
    write_metadata(books, root / "metadata.csv")
    return root
