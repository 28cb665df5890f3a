"""Vertex noise for panel frames.

Two noise families are supported. ``RECTANGULAR`` moves each edge of the
frame independently so the panel stays an axis-aligned rectangle;
``QUADRILATERAL`` moves each corner independently so the panel becomes an
arbitrary simple quadrilateral. Offsets are integers drawn uniformly from
``[-d, d]`` inclusive, in source-page pixels.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .annotation import BBox, PageAnnotation
from .exceptions import DegenerateBoxError, EmptyFrameListError

MAX_REDRAWS = 64

Point = Tuple[int, int]


class NoiseFamily(enum.Enum):
    RECTANGULAR = "rectangular"
    QUADRILATERAL = "quadrilateral"


@dataclass(frozen=True)
class NoiseSpec:
    family: NoiseFamily
    range: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        if isinstance(self.range, bool) or int(self.range) != self.range or self.range < 0:
            raise ValueError(f"noise range must be a non-negative integer, got {self.range!r}")
        object.__setattr__(self, "range", int(self.range))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "range": self.range, "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "NoiseSpec":
        return cls(NoiseFamily(d["family"]), d["range"], d.get("seed", 0))

    @property
    def label(self) -> str:
        return f"{self.family.value}{self.range}"


@dataclass(frozen=True)
class Quad:
    """Four integer vertices in TL, TR, BR, BL order.

    Vertices are pixel positions, so the quad of a box ``(0, 0, 100, 50)`` has
    its bottom-right vertex at ``(99, 49)``.
    """

    vertices: Tuple[Point, Point, Point, Point]

    def __post_init__(self):
        verts = tuple((int(x), int(y)) for x, y in self.vertices)
        if len(verts) != 4:
            raise ValueError("a quad needs exactly four vertices")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_bbox(cls, box: BBox) -> "Quad":
        x0, y0, x1, y1 = box.xmin, box.ymin, box.xmax - 1, box.ymax - 1
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    def __iter__(self):
        return iter(self.vertices)

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.int64)

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % 4]) for i in range(4)]

    def is_rectangle(self) -> bool:
        """True when every corner angle is exactly 90 degrees."""
        v = self.as_array()
        for i in range(4):
            a = v[i] - v[i - 1]
            b = v[(i + 1) % 4] - v[i]
            if not a.any() or not b.any() or int(a @ b) != 0:
                return False
        return True

    def is_axis_aligned_rectangle(self) -> bool:
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = self.vertices
        return y0 == y1 and x1 == x2 and y2 == y3 and x3 == x0

    def is_simple(self) -> bool:
        return _is_simple(self.vertices)

    def within(self, width: int, height: int) -> bool:
        return all(0 <= x < width and 0 <= y < height for x, y in self.vertices)

    def chebyshev_displacement(self, other: "Quad") -> int:
        return int(np.abs(self.as_array() - other.as_array()).max())

    def mirrored(self, page_width: int) -> "Quad":
        # mirroring swaps left/right, so TR<->TL and BR<->BL to keep the order
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = self.vertices
        w = page_width - 1
        return Quad(((w - x1, y1), (w - x0, y0), (w - x3, y3), (w - x2, y2)))


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(p, q, r) -> bool:
    return min(p[0], r[0]) <= q[0] <= max(p[0], r[0]) and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    return (
        (d1 == 0 and _on_segment(p3, p1, p4))
        or (d2 == 0 and _on_segment(p3, p2, p4))
        or (d3 == 0 and _on_segment(p1, p3, p2))
        or (d4 == 0 and _on_segment(p1, p4, p2))
    )


def _is_simple(v: Sequence[Point]) -> bool:
    if len(set(v)) != 4:
        return False
    # opposite edges must not touch
    if _segments_intersect(v[0], v[1], v[2], v[3]) or _segments_intersect(v[1], v[2], v[3], v[0]):
        return False
    # adjacent edges must not fold back onto each other
    for i in range(4):
        a, b, c = v[i - 1], v[i], v[(i + 1) % 4]
        if _cross(a, b, c) == 0:
            ab = (b[0] - a[0], b[1] - a[1])
            bc = (c[0] - b[0], c[1] - b[1])
            if ab[0] * bc[0] + ab[1] * bc[1] < 0:
                return False
    area2 = sum(v[i][0] * v[(i + 1) % 4][1] - v[(i + 1) % 4][0] * v[i][1] for i in range(4))
    return area2 != 0


def _rng_for(spec: NoiseSpec, rng):
    return np.random.default_rng(spec.seed & 0xFFFFFFFFFFFFFFFF) if rng is None else rng


def perturb_rectangular(box: BBox, spec: NoiseSpec, page_dims, rng=None) -> Quad:
    """Shift the four edges of ``box`` independently by ``U[-d, d]``.

    ``page_dims`` is ``(width, height)``. Draws that invert the box, or leave
    it less than two pixels wide or tall after clamping to the page, are
    discarded and re-drawn.
    """
    if spec.family is not NoiseFamily.RECTANGULAR:
        raise ValueError(f"expected rectangular noise, got {spec.family.value}")
    width, height = page_dims
    d = spec.range
    if d == 0:
        return Quad.from_bbox(box)
    rng = _rng_for(spec, rng)
    for _ in range(MAX_REDRAWS):
        dl, dt, dr, db = (int(v) for v in rng.integers(-d, d, size=4, endpoint=True))
        x0, y0, x1, y1 = box.xmin + dl, box.ymin + dt, box.xmax + dr, box.ymax + db
        if not (x0 < x1 and y0 < y1):
            continue
        x0, x1 = min(max(x0, 0), width - 1), min(max(x1, 1), width)
        y0, y1 = min(max(y0, 0), height - 1), min(max(y1, 1), height)
        if x1 - x0 >= 2 and y1 - y0 >= 2:
            return Quad(((x0, y0), (x1 - 1, y0), (x1 - 1, y1 - 1), (x0, y1 - 1)))
    raise DegenerateBoxError(f"no valid rectangular draw for box {box.as_tuple()} at d={d} after {MAX_REDRAWS} tries")


def perturb_quadrilateral(box: BBox, spec: NoiseSpec, page_dims, rng=None) -> Quad:
    """Shift each corner of ``box`` by an independent ``U[-d, d]^2`` offset.

    Non-simple results (self-intersecting, zero area, repeated vertices) are
    re-drawn.
    """
    if spec.family is not NoiseFamily.QUADRILATERAL:
        raise ValueError(f"expected quadrilateral noise, got {spec.family.value}")
    width, height = page_dims
    d = spec.range
    base = Quad.from_bbox(box)
    if d == 0:
        return base
    rng = _rng_for(spec, rng)
    corners = base.as_array()
    hi = np.array([width - 1, height - 1])
    for _ in range(MAX_REDRAWS):
        offsets = rng.integers(-d, d, size=(4, 2), endpoint=True)
        moved = np.clip(corners + offsets, 0, hi)
        verts = tuple((int(x), int(y)) for x, y in moved)
        if _is_simple(verts):
            return Quad(verts)
    raise DegenerateBoxError(f"no simple quadrilateral draw for box {box.as_tuple()} at d={d} after {MAX_REDRAWS} tries")


def _title_entropy(title: str) -> int:
    return int.from_bytes(hashlib.sha256(title.encode("utf-8")).digest()[:8], "little")


def frame_rng(seed: int, title: str, page_index: int, ordinal: int) -> np.random.Generator:
    """Independent generator for one frame, stable across processes."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, _title_entropy(title), page_index, ordinal])
    return np.random.default_rng(ss)


_PERTURBERS = {
    NoiseFamily.RECTANGULAR: perturb_rectangular,
    NoiseFamily.QUADRILATERAL: perturb_quadrilateral,
}


def perturb_page(page: PageAnnotation, spec: NoiseSpec, *, title: str = "") -> List[Quad]:
    """Perturb every frame on ``page``; one seeded substream per frame."""
    frames = page.frames
    if not frames:
        raise EmptyFrameListError(f"page {page.index} has no frames")
    fn = _PERTURBERS[spec.family]
    out = []
    for ordinal, region in enumerate(frames):
        rng = frame_rng(spec.seed, title, page.index, ordinal)
        try:
            out.append(fn(region.box, spec, (page.width, page.height), rng=rng))
        except DegenerateBoxError as exc:
            raise DegenerateBoxError(f"frame {region.id}: {exc}", region_id=region.id) from exc
    return out


def page_quads(page: PageAnnotation, spec: Optional[NoiseSpec] = None, *, title: str = "") -> List[Quad]:
    """Frame quads for rendering: verbatim boxes, or perturbed ones if ``spec`` is given."""
    if spec is None or spec.range == 0:
        return [Quad.from_bbox(r.box) for r in page.frames]
    return perturb_page(page, spec, title=title)
