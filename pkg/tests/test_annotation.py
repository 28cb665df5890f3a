import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mangalayout import annotation as ann
from mangalayout.annotation import BBox, BookAnnotation, PageAnnotation, Region, RegionKind
from mangalayout.exceptions import BoundsError, MissingMetadataError, SchemaError

from .conftest import page, region


def test_two_page_fixture_region_counts(two_page_xml):
    book = ann.parse_book(two_page_xml)
    assert book.title == "Fixture_vol01"
    assert [len(p.regions) for p in book.pages] == [2, 0]
    assert [r.kind for r in book.pages[0].regions] == [RegionKind.FRAME, RegionKind.TEXT]


def test_filter_keeps_only_framed_pages(two_page_xml):
    book = ann.parse_book(two_page_xml)
    assert [p.index for p in ann.filter_pages_with_frames(book)] == [0]


def test_filter_identity_when_every_page_has_frames():
    pages = [page(i, regions=[region("f", "frame", 0, 0, 10, 10)]) for i in range(3)]
    book = BookAnnotation("b", pages=pages)
    assert ann.filter_pages_with_frames(book) == list(book.pages)


def test_empty_book():
    book = ann.parse_book('<book title="Empty"><pages/></book>')
    assert book.pages == ()


def test_missing_title():
    with pytest.raises(MissingMetadataError):
        ann.parse_book("<book><pages/></book>")


def test_title_override():
    assert ann.parse_book("<book><pages/></book>", title="Given").title == "Given"


@pytest.mark.parametrize(
    "doc",
    [
        "<book title='x'><pages>",
        "<library title='x'/>",
        "<book title='x'><pages><page index='0' width='10'/></pages></book>",
        "<book title='x'><pages><page index='0' width='10' height='10'><frame id='a' xmin='0' ymin='0' xmax='q' ymax='3'/></page></pages></book>",
    ],
)
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        ann.parse_book(doc)


def test_bounds_error_carries_location():
    doc = """<book title="x"><pages><page index="3" width="50" height="50">
             <body id="b9" xmin="10" ymin="10" xmax="51" ymax="20"/></page></pages></book>"""
    with pytest.raises(BoundsError) as info:
        ann.parse_book(doc)
    assert info.value.page_index == 3
    assert info.value.region_id == "b9"


def test_image_dims_override_attributes():
    doc = '<book title="x"><pages><page index="0"><frame id="a" xmin="0" ymin="0" xmax="30" ymax="20"/></page></pages></book>'
    book = ann.parse_book(doc, image_dims={0: (40, 25)})
    assert (book.pages[0].width, book.pages[0].height) == (40, 25)


def test_unknown_region_kind_skipped(caplog):
    doc = """<book title="x"><pages><page index="0" width="50" height="50">
             <frame id="a" xmin="0" ymin="0" xmax="10" ymax="10"/>
             <balloon id="z" xmin="0" ymin="0" xmax="10" ymax="10"/></page></pages></book>"""
    with caplog.at_level(logging.WARNING):
        book = ann.parse_book(doc)
    assert [r.id for r in book.pages[0].regions] == ["a"]
    assert "balloon" in caplog.text


def test_metadata_sidecar(tmp_path, two_page_xml):
    csv_path = tmp_path / "metadata.csv"
    csv_path.write_text("title,genre,publisher\nFixture_vol01,4-panel,Pub A\n", encoding="utf-8")
    meta = ann.load_metadata(csv_path)
    book = ann.parse_book(two_page_xml, metadata=meta)
    assert (book.genre, book.publisher) == ("4-panel", "Pub A")
    assert book.work == "Fixture"


def test_metadata_bad_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("name,genre,publisher\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        ann.load_metadata(p)


def test_unknown_genre_rejected():
    with pytest.raises(SchemaError):
        ann.canonical_genre("Cyberpunk")


def test_genre_labels_count():
    assert len(ann.GENRES) == 12


def test_validate_collects_every_issue():
    doc = """<book title="x"><pages>
      <page index="0" width="50" height="50">
        <frame id="a" xmin="0" ymin="0" xmax="60" ymax="10"/>
        <text id="b" xmin="0" ymin="0" xmax="10" ymax="70"/>
      </page>
      <page index="1" width="50" height="50"><frame id="c" xmin="5" ymin="5" xmax="4" ymax="9"/></page>
    </pages></book>"""
    issues = ann.validate_book(doc)
    assert [(i.page_index, i.region_id, i.kind) for i in issues] == [
        (0, "a", "BoundsError"),
        (0, "b", "BoundsError"),
        (1, "c", "SchemaError"),
    ]
    line = issues[0].format()
    assert "0" in line and "a" in line and "BoundsError" in line


def test_validate_clean_document(two_page_xml):
    assert ann.validate_book(two_page_xml) == []


def test_work_key_strips_volume():
    assert ann.work_key("Foo_vol02") == ann.work_key("Foo_vol01") == "Foo"
    assert ann.work_key("Foo") == "Foo"


def test_bbox_validation():
    with pytest.raises(SchemaError):
        BBox(5, 0, 5, 3)
    with pytest.raises(SchemaError):
        BBox(-1, 0, 5, 3)


def test_duplicate_region_ids():
    with pytest.raises(SchemaError):
        page(regions=[region("a", "frame", 0, 0, 5, 5), region("a", "text", 0, 0, 5, 5)])


def test_page_indices_must_increase():
    with pytest.raises(SchemaError):
        BookAnnotation("b", pages=[page(1), page(0)])


# ---------------------------------------------------------------- properties

@st.composite
def books(draw):
    n_pages = draw(st.integers(0, 4))
    pages = []
    for i in range(n_pages):
        w, h = draw(st.integers(1, 300)), draw(st.integers(1, 300))
        regions = []
        for j in range(draw(st.integers(0, 5))):
            x0, y0 = draw(st.integers(0, w - 1)), draw(st.integers(0, h - 1))
            x1, y1 = draw(st.integers(x0 + 1, w)), draw(st.integers(y0 + 1, h))
            kind = draw(st.sampled_from(list(RegionKind)))
            regions.append(Region(f"r{i}_{j}", kind, BBox(x0, y0, x1, y1)))
        pages.append(PageAnnotation(i * 2, w, h, regions))
    genre = draw(st.one_of(st.none(), st.sampled_from(ann.GENRES)))
    return BookAnnotation(draw(st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,12}", fullmatch=True)), genre, "P", pages)


@settings(max_examples=60, deadline=None)
@given(books())
def test_serialize_round_trip(book):
    assert ann.parse_book(ann.serialize_book(book)) == book


@settings(max_examples=60, deadline=None)
@given(books())
def test_boxes_within_pages_and_filter_idempotent(book):
    for p in book.pages:
        for r in p.regions:
            assert 0 <= r.box.xmin < r.box.xmax <= p.width
            assert 0 <= r.box.ymin < r.box.ymax <= p.height
    once = ann.filter_pages_with_frames(book)
    twice = ann.filter_pages_with_frames(BookAnnotation(book.title, pages=once))
    assert once == twice
    assert len(once) <= len(book.pages)
    assert all(p.has_frames() == any(r.kind is RegionKind.FRAME for r in p.regions) for p in book.pages)


def test_load_corpus(tmp_path, two_page_xml):
    (tmp_path / "annotations").mkdir()
    (tmp_path / "annotations" / "Fixture_vol01.xml").write_text(two_page_xml, encoding="utf-8")
    (tmp_path / "metadata.csv").write_text("title,genre,publisher\nFixture_vol01,Humor,P\n", encoding="utf-8")
    (book,) = ann.load_corpus(tmp_path)
    assert book.genre == "Humor"
    img_dir = tmp_path / "images" / "Fixture_vol01"
    img_dir.mkdir(parents=True)
    (img_dir / "000.jpg").touch()
    assert ann.page_image_path(tmp_path, "Fixture_vol01", 0).name == "000.jpg"
