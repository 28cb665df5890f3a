import numpy as np
import pytest

from mangalayout.annotation import BBox, BookAnnotation, PageAnnotation, Region, RegionKind

TWO_PAGE_XML = """\
<book title="Fixture_vol01">
  <pages>
    <page index="0" width="200" height="100">
      <frame id="f0" xmin="10" ymin="10" xmax="110" ymax="60"/>
      <text id="t0" xmin="20" ymin="20" xmax="60" ymax="40">hello</text>
    </page>
    <page index="1" width="200" height="100"/>
  </pages>
</book>
"""


def region(rid, kind, xmin, ymin, xmax, ymax):
    return Region(rid, RegionKind(kind), BBox(xmin, ymin, xmax, ymax))


def page(index=0, width=200, height=100, regions=()):
    return PageAnnotation(index, width, height, regions)


def toy_books(n_classes=3, pages_per_class=10, works_per_class=1, prefix="book"):
    """Books with one frame per page; class ``c`` is work ``{prefix}{c}``."""
    books = []
    for c in range(n_classes):
        for w in range(works_per_class):
            title = f"{prefix}{c:02d}_w{w}"
            n = pages_per_class // works_per_class
            pages = [page(i, regions=[region(f"f{i}", "frame", 5, 5, 50, 40)]) for i in range(n)]
            books.append(BookAnnotation(title, "Humor", f"pub{c}", pages))
    return books


def mock_page_corpus(class_sizes):
    """One single-frame 10x10 book per class with the given page counts."""
    frame = [region("f", "frame", 0, 0, 8, 8)]
    return [
        BookAnnotation(f"t{c:03d}", "Humor", "P", [page(i, 10, 10, frame) for i in range(n)])
        for c, n in enumerate(class_sizes)
    ]


@pytest.fixture
def two_page_xml():
    return TWO_PAGE_XML


@pytest.fixture
def gray_page():
    return np.full((100, 200), 128, dtype=np.uint8)


# acceptance criteria record one line each; printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
