"""Manga109-style annotation object model.

A book document looks like::

    <book title="LoveHina_vol14">
      <pages>
        <page index="0" width="1654" height="1170">
          <frame id="..." xmin="..." ymin="..." xmax="..." ymax="..."/>
          <text id="..." .../>
          <face id="..." .../>
          <body id="..." .../>
        </page>
      </pages>
    </book>

Genre and publisher are not part of the schema; they come from a CSV manifest
(``title,genre,publisher``) or, for files written by :func:`serialize_book`,
from optional attributes on the ``book`` element.
"""

from __future__ import annotations

import csv
import enum
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from .exceptions import BoundsError, MissingMetadataError, SchemaError

logger = logging.getLogger(__name__)

GENRES = (
    "4-panel",
    "Animal",
    "Battle",
    "Fantasy",
    "History",
    "Horror",
    "Humor",
    "Love",
    "Romantic comedy",
    "SF",
    "Sport",
    "Suspense",
)
_GENRE_LOOKUP = {g.lower(): g for g in GENRES}

METADATA_HEADER = ["title", "genre", "publisher"]

_VOLUME_SUFFIX = re.compile(r"_vol\d+$", re.IGNORECASE)


def canonical_genre(name: str) -> str:
    try:
        return _GENRE_LOOKUP[name.strip().lower()]
    except KeyError:
        raise SchemaError(f"unknown genre {name!r}; expected one of {GENRES}") from None


def work_key(title: str) -> str:
    """Collapse volume titles (``LoveHina_vol01``) onto their work."""
    return _VOLUME_SUFFIX.sub("", title)


class RegionKind(enum.Enum):
    FRAME = "frame"
    TEXT = "text"
    FACE = "face"
    BODY = "body"

    @property
    def is_character(self) -> bool:
        return self in (RegionKind.FACE, RegionKind.BODY)

    @property
    def is_masked(self) -> bool:
        """Whether the masked ablation blanks this kind of region."""
        return self is not RegionKind.FRAME


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in page pixels; ``xmax``/``ymax`` are exclusive."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self):
        for name in ("xmin", "ymin", "xmax", "ymax"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise SchemaError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not (0 <= self.xmin < self.xmax and 0 <= self.ymin < self.ymax):
            raise SchemaError(f"invalid box {self.as_tuple()}: need 0 <= min < max on both axes")

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def fits(self, width: int, height: int) -> bool:
        return self.xmax <= width and self.ymax <= height

    def mirrored(self, page_width: int) -> "BBox":
        return BBox(page_width - self.xmax, self.ymin, page_width - self.xmin, self.ymax)


@dataclass(frozen=True)
class Region:
    id: str
    kind: RegionKind
    box: BBox


@dataclass(frozen=True)
class PageAnnotation:
    index: int
    width: int
    height: int
    regions: Tuple[Region, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.index < 0:
            raise SchemaError(f"page index must be non-negative, got {self.index}")
        if self.width <= 0 or self.height <= 0:
            raise SchemaError(f"page {self.index}: dimensions must be positive")
        seen = set()
        for r in self.regions:
            if r.id in seen:
                raise SchemaError(f"page {self.index}: duplicate region id {r.id!r}")
            seen.add(r.id)
            if not r.box.fits(self.width, self.height):
                raise BoundsError(
                    f"page {self.index}: region {r.id} {r.box.as_tuple()} exceeds "
                    f"page {self.width}x{self.height}",
                    page_index=self.index,
                    region_id=r.id,
                )

    def has_frames(self) -> bool:
        return any(r.kind is RegionKind.FRAME for r in self.regions)

    def regions_of(self, *kinds: RegionKind) -> List[Region]:
        return [r for r in self.regions if r.kind in kinds]

    @property
    def frames(self) -> List[Region]:
        return self.regions_of(RegionKind.FRAME)

    def mirrored(self) -> "PageAnnotation":
        regions = [Region(r.id, r.kind, r.box.mirrored(self.width)) for r in self.regions]
        return PageAnnotation(self.index, self.width, self.height, regions)


@dataclass(frozen=True)
class BookAnnotation:
    title: str
    genre: Optional[str] = None
    publisher: Optional[str] = None
    pages: Tuple[PageAnnotation, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pages", tuple(self.pages))
        if not self.title:
            raise MissingMetadataError("book title must be non-empty")
        if self.genre is not None:
            object.__setattr__(self, "genre", canonical_genre(self.genre))
        indices = [p.index for p in self.pages]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise SchemaError(f"{self.title}: page indices must be strictly increasing")

    @property
    def work(self) -> str:
        return work_key(self.title)


@dataclass(frozen=True)
class BookMetadata:
    genre: str
    publisher: str


@dataclass(frozen=True)
class ValidationIssue:
    page_index: Optional[int]
    region_id: Optional[str]
    kind: str
    message: str

    def format(self) -> str:
        page = "-" if self.page_index is None else str(self.page_index)
        region = self.region_id or "-"
        return f"page={page}\tregion={region}\t{self.kind}\t{self.message}"


def _root_of(document) -> ET.Element:
    if isinstance(document, ET.Element):
        return document
    try:
        return ET.fromstring(document)
    except ET.ParseError as exc:
        raise SchemaError(f"malformed annotation document: {exc}") from exc


def _int_attr(elem, name, where):
    raw = elem.get(name)
    if raw is None:
        raise SchemaError(f"{where}: missing attribute {name!r}")
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"{where}: attribute {name}={raw!r} is not an integer") from None


def _walk(document, image_dims, metadata, title):
    """Yield ``(issue, payload)`` pairs; parse_book and validate_book share it."""
    root = _root_of(document)
    if root.tag != "book":
        yield ValidationIssue(None, None, "SchemaError", f"root element is <{root.tag}>, expected <book>"), None
        return
    title = title or root.get("title")
    if not title:
        yield ValidationIssue(None, None, "MissingMetadataError", "book has no title"), None
        return
    meta = (metadata or {}).get(title)
    genre = root.get("genre") or (meta.genre if meta else None)
    publisher = root.get("publisher") or (meta.publisher if meta else None)
    yield None, ("book", title, genre, publisher)

    pages_elem = root.find("pages")
    page_elems = [] if pages_elem is None else list(pages_elem)
    for pe in page_elems:
        if pe.tag != "page":
            yield ValidationIssue(None, None, "SchemaError", f"unexpected <{pe.tag}> inside <pages>"), None
            continue
        try:
            index = _int_attr(pe, "index", "page")
        except SchemaError as exc:
            yield ValidationIssue(None, None, "SchemaError", str(exc)), None
            continue
        if image_dims is not None and index in image_dims:
            width, height = image_dims[index]
        elif pe.get("width") is not None and pe.get("height") is not None:
            try:
                width, height = _int_attr(pe, "width", f"page {index}"), _int_attr(pe, "height", f"page {index}")
            except SchemaError as exc:
                yield ValidationIssue(index, None, "SchemaError", str(exc)), None
                continue
        else:
            yield ValidationIssue(index, None, "SchemaError", "no page dimensions in document or image_dims"), None
            continue

        regions = []
        seen = set()
        for re_ in pe:
            try:
                kind = RegionKind(re_.tag)
            except ValueError:
                logger.warning("page %d: skipping unknown region kind <%s>", index, re_.tag)
                continue
            rid = re_.get("id")
            if not rid:
                yield ValidationIssue(index, None, "SchemaError", f"<{re_.tag}> without id"), None
                continue
            if rid in seen:
                yield ValidationIssue(index, rid, "SchemaError", "duplicate region id"), None
                continue
            seen.add(rid)
            try:
                coords = [_int_attr(re_, k, f"page {index} region {rid}") for k in ("xmin", "ymin", "xmax", "ymax")]
                box = BBox(*coords)
            except SchemaError as exc:
                yield ValidationIssue(index, rid, "SchemaError", str(exc)), None
                continue
            if not box.fits(width, height):
                yield ValidationIssue(
                    index, rid, "BoundsError",
                    f"box {box.as_tuple()} exceeds page {width}x{height}",
                ), None
                continue
            regions.append(Region(rid, kind, box))
        yield None, ("page", index, width, height, regions)


def _issue_to_exception(issue: ValidationIssue) -> Exception:
    where = f"page {issue.page_index}: " if issue.page_index is not None else ""
    if issue.kind == "BoundsError":
        return BoundsError(
            f"{where}region {issue.region_id} {issue.message}",
            page_index=issue.page_index,
            region_id=issue.region_id,
        )
    if issue.kind == "MissingMetadataError":
        return MissingMetadataError(issue.message)
    return SchemaError(where + issue.message)


def parse_book(
    document,
    image_dims: Optional[Mapping[int, Tuple[int, int]]] = None,
    metadata: Optional[Mapping[str, BookMetadata]] = None,
    *,
    title: Optional[str] = None,
) -> BookAnnotation:
    """Parse one annotation document into a :class:`BookAnnotation`.

    Parameters
    ----------
    document
        XML text (``str``/``bytes``) or an already parsed ``<book>`` element.
    image_dims
        Optional ``page index -> (width, height)`` mapping measured from the
        page images. Falls back to the ``width``/``height`` page attributes.
    metadata
        Optional ``title -> BookMetadata`` mapping used when the document does
        not carry genre/publisher itself.
    title
        Overrides the document's ``title`` attribute.

    Raises
    ------
    SchemaError, BoundsError, MissingMetadataError
    """
    head = None
    pages = []
    for issue, payload in _walk(document, image_dims, metadata, title):
        if issue is not None:
            raise _issue_to_exception(issue)
        if payload[0] == "book":
            head = payload[1:]
        else:
            _, index, width, height, regions = payload
            pages.append(PageAnnotation(index, width, height, regions))
    book_title, genre, publisher = head
    return BookAnnotation(book_title, genre, publisher, pages)


def validate_book(document, image_dims=None, metadata=None, *, title=None) -> List[ValidationIssue]:
    """Collect every problem in ``document`` instead of stopping at the first."""
    issues = []
    last_index = None
    try:
        for issue, payload in _walk(document, image_dims, metadata, title):
            if issue is not None:
                issues.append(issue)
            elif payload[0] == "page":
                index = payload[1]
                if last_index is not None and index <= last_index:
                    issues.append(ValidationIssue(index, None, "SchemaError", "page indices not strictly increasing"))
                last_index = index
            elif payload[2] is not None:
                try:
                    canonical_genre(payload[2])
                except SchemaError as exc:
                    issues.append(ValidationIssue(None, None, "SchemaError", str(exc)))
    except SchemaError as exc:
        issues.append(ValidationIssue(None, None, "SchemaError", str(exc)))
    return issues


def serialize_book(book: BookAnnotation) -> str:
    """Write ``book`` back out in the annotation document format."""
    root = ET.Element("book", title=book.title)
    if book.genre is not None:
        root.set("genre", book.genre)
    if book.publisher is not None:
        root.set("publisher", book.publisher)
    pages_elem = ET.SubElement(root, "pages")
    for page in book.pages:
        pe = ET.SubElement(
            pages_elem, "page", index=str(page.index), width=str(page.width), height=str(page.height)
        )
        for r in page.regions:
            ET.SubElement(
                pe,
                r.kind.value,
                id=r.id,
                xmin=str(r.box.xmin),
                ymin=str(r.box.ymin),
                xmax=str(r.box.xmax),
                ymax=str(r.box.ymax),
            )
    ET.indent(root)
    return ET.tostring(root, encoding="unicode")


def filter_pages_with_frames(book: BookAnnotation) -> List[PageAnnotation]:
    return [p for p in book.pages if p.has_frames()]


def load_metadata(path) -> Dict[str, BookMetadata]:
    """Read the ``title,genre,publisher`` CSV manifest."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != METADATA_HEADER:
            raise SchemaError(f"{path}: header must be {','.join(METADATA_HEADER)}, got {header}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            title, genre, publisher = (c.strip() for c in row)
            if not title:
                raise MissingMetadataError(f"{path}:{lineno}: empty title")
            if title in out:
                raise SchemaError(f"{path}:{lineno}: duplicate title {title!r}")
            out[title] = BookMetadata(canonical_genre(genre), publisher)
    return out


def write_metadata(books, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(METADATA_HEADER)
        for b in books:
            w.writerow([b.title, b.genre or "", b.publisher or ""])


def load_book_file(path, metadata=None, image_dims=None) -> BookAnnotation:
    return parse_book(Path(path).read_bytes(), image_dims=image_dims, metadata=metadata)


def load_corpus(root, metadata_csv=None) -> List[BookAnnotation]:
    """Load every ``annotations/*.xml`` under a Manga109-layout root.

    Books are returned in lexicographic title order.
    """
    root = Path(root)
    ann_dir = root / "annotations"
    if not ann_dir.is_dir():
        raise FileNotFoundError(f"{ann_dir} does not exist")
    if metadata_csv is None and (root / "metadata.csv").exists():
        metadata_csv = root / "metadata.csv"
    metadata = load_metadata(metadata_csv) if metadata_csv else None
    books = [load_book_file(p, metadata) for p in sorted(ann_dir.glob("*.xml"))]
    return sorted(books, key=lambda b: b.title)


def page_image_path(root, title: str, index: int) -> Path:
    """Locate the page image, accepting ``003.jpg`` (Manga109) or ``3.png``."""
    folder = Path(root) / "images" / title
    for name in (f"{index:03d}.jpg", f"{index:03d}.png", f"{index}.png", f"{index}.jpg"):
        p = folder / name
        if p.exists():
            return p
    raise FileNotFoundError(f"no image for {title} page {index} under {folder}")
