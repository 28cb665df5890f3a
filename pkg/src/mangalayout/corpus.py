"""Label tasks and deterministic split manifests.

Two protocols are provided:

* ``PAGE_RANDOM`` - pages of every class are split 80/10/10 into
  train/dev/test, stratified by class; train is then cut into five folds.
* ``LEAVE_ONE_WORK_OUT`` - for each class one whole work goes to test and
  the remaining works are dealt into five folds, never splitting a work.

Page references are ``"<title>/<page index>"`` strings.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .annotation import BookAnnotation, filter_pages_with_frames, work_key
from .exceptions import InsufficientPagesError, SchemaError, SingleWorkClassError

N_FOLDS = 5
MIN_PAGES_PER_CLASS = 3

# Sizes reported for the full 10,122-page corpus; the generic rule below
# gives 8,097/1,012/1,013 there, so the published partition is pinned.
PUBLISHED_SPLIT_SIZES = {10122: (8053, 1011, 1058)}

# class counts on the full Manga109 corpus
EXPECTED_CLASS_COUNTS = {"title104": 104, "four_panel": 5, "publisher": 12, "genre": 12}


class TaskKind(enum.Enum):
    TITLE = "title104"
    FOUR_PANEL = "four_panel"
    PUBLISHER = "publisher"
    GENRE = "genre"


class Protocol(enum.Enum):
    PAGE_RANDOM = "page_random"
    LEAVE_ONE_WORK_OUT = "leave_one_work_out"


def class_name_of(book: BookAnnotation, kind) -> str:
    kind = TaskKind(kind)
    if kind in (TaskKind.TITLE, TaskKind.FOUR_PANEL):
        return book.work
    value = book.publisher if kind is TaskKind.PUBLISHER else book.genre
    if not value:
        raise SchemaError(f"{book.title} has no {kind.value} metadata")
    return value


@dataclass(frozen=True)
class LabelTask:
    kind: TaskKind
    label_map: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "label_map", tuple(self.label_map))
        if len(set(self.label_map)) != len(self.label_map):
            raise ValueError("label names must be unique")

    @classmethod
    def from_books(cls, books: Iterable[BookAnnotation], kind) -> "LabelTask":
        """Label map in lexicographic order; volumes of one work share a class."""
        kind = TaskKind(kind)
        return cls(kind, tuple(sorted({class_name_of(b, kind) for b in books})))

    @property
    def n_classes(self) -> int:
        return len(self.label_map)

    def id_of(self, name: str) -> int:
        try:
            return self.label_map.index(name)
        except ValueError:
            raise KeyError(f"{name!r} is not a {self.kind.value} class") from None

    def label_of_book(self, book: BookAnnotation) -> int:
        return self.id_of(class_name_of(book, self.kind))


def page_ref(title: str, page_index: int) -> str:
    return f"{title}/{page_index}"


def parse_ref(ref: str) -> Tuple[str, int]:
    title, _, index = ref.rpartition("/")
    return title, int(index)


@dataclass
class SplitManifest:
    task: LabelTask
    seed: int
    protocol: Protocol
    folds: List[List[str]]
    dev: List[str]
    test: List[str]
    labels: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)
        if len(self.folds) != N_FOLDS:
            raise ValueError(f"expected {N_FOLDS} folds, got {len(self.folds)}")

    @property
    def train(self) -> List[str]:
        return [r for fold in self.folds for r in fold]

    def all_refs(self) -> List[str]:
        return self.train + list(self.dev) + list(self.test)

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.dev), len(self.test)

    def fold_split(self, fold: int) -> Tuple[List[str], List[str]]:
        """``(train refs, validation refs)`` for cross-validation fold ``fold``."""
        if not 0 <= fold < N_FOLDS:
            raise ValueError(f"fold must be in [0, {N_FOLDS}), got {fold}")
        train = [r for k, f in enumerate(self.folds) if k != fold for r in f]
        return train, list(self.folds[fold])

    def label_array(self, refs: Sequence[str]) -> np.ndarray:
        return np.array([self.labels[r] for r in refs], dtype=np.int64)

    def is_partition(self) -> bool:
        refs = self.all_refs()
        return len(refs) == len(set(refs))

    def to_dict(self) -> dict:
        return {
            "task": self.task.kind.value,
            "label_map": list(self.task.label_map),
            "seed": self.seed,
            "protocol": self.protocol.value,
            "folds": [list(f) for f in self.folds],
            "dev": list(self.dev),
            "test": list(self.test),
            "labels": dict(self.labels),
        }

    @classmethod
    def from_dict(cls, d) -> "SplitManifest":
        task = LabelTask(TaskKind(d["task"]), tuple(d["label_map"]))
        return cls(task, d["seed"], Protocol(d["protocol"]), d["folds"], d["dev"], d["test"], dict(d["labels"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def split_sizes(n: int) -> Tuple[int, int, int]:
    """Train/dev/test sizes for ``n`` pages.

    Dev is ``floor(n/10)``, test ``ceil(n/10)`` and train the remainder, except
    for corpus sizes with a published partition.
    """
    if n in PUBLISHED_SPLIT_SIZES:
        return PUBLISHED_SPLIT_SIZES[n]
    n_dev = n // 10
    n_test = -(-n // 10)
    return n - n_dev - n_test, n_dev, n_test


def _apportion(counts: Sequence[int], total: int) -> List[int]:
    """Largest-remainder apportionment of ``total`` proportional to ``counts``."""
    n = sum(counts)
    if n == 0:
        return [0] * len(counts)
    base = [c * total // n for c in counts]
    rema = [c * total % n for c in counts]
    short = total - sum(base)
    order = sorted(range(len(counts)), key=lambda i: (-rema[i], i))
    for i in order[:short]:
        base[i] += 1
    return base


def _deal_into_folds(items_by_class, rng, start=0):
    """Deal each class's shuffled items round-robin over the folds."""
    folds = [[] for _ in range(N_FOLDS)]
    for cls in sorted(items_by_class):
        items = list(items_by_class[cls])
        rng.shuffle(items)
        for i, it in enumerate(items):
            folds[(start + i) % N_FOLDS].append(it)
        start += len(items)
    return folds


def _eligible_pages(books):
    for book in books:
        for page in filter_pages_with_frames(book):
            yield book, page


def build_title_split(books: Sequence[BookAnnotation], seed: int, *, kind=TaskKind.TITLE) -> SplitManifest:
    """Stratified page-level 80/10/10 split with five train folds.

    Only pages with at least one frame are eligible. Every class with 13 or
    more pages is represented in train, dev and test.
    """
    kind = TaskKind(kind)
    task = LabelTask.from_books(books, kind)
    by_class = defaultdict(list)
    labels = {}
    for book, page in _eligible_pages(books):
        ref = page_ref(book.title, page.index)
        if ref in labels:
            raise SchemaError(f"duplicate page reference {ref}")
        label = task.label_of_book(book)
        labels[ref] = label
        by_class[label].append(ref)
    small = {task.label_map[c]: len(v) for c, v in by_class.items() if len(v) < MIN_PAGES_PER_CLASS}
    if small:
        raise InsufficientPagesError(f"classes with fewer than {MIN_PAGES_PER_CLASS} pages: {small}")

    classes = sorted(by_class)
    counts = [len(by_class[c]) for c in classes]
    _, n_dev, n_test = split_sizes(sum(counts))
    dev_alloc = _apportion(counts, n_dev)
    test_alloc = _apportion(counts, n_test)

    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    dev, test, train_by_class = [], [], {}
    for c, nd, nt in zip(classes, dev_alloc, test_alloc):
        refs = list(by_class[c])
        rng.shuffle(refs)
        dev += refs[:nd]
        test += refs[nd:nd + nt]
        train_by_class[c] = refs[nd + nt:]
    folds = _deal_into_folds(train_by_class, rng)
    return SplitManifest(task, seed, Protocol.PAGE_RANDOM, folds, dev, test, labels)


def build_four_panel_split(books: Sequence[BookAnnotation], seed: int) -> SplitManifest:
    """Title classification restricted to the 4-panel genre."""
    subset = [b for b in books if b.genre == "4-panel"]
    if not subset:
        raise InsufficientPagesError("no 4-panel books in the corpus")
    return build_title_split(subset, seed, kind=TaskKind.FOUR_PANEL)


def works_by_class(books: Sequence[BookAnnotation], kind) -> Dict[str, Dict[str, List[BookAnnotation]]]:
    """``class name -> work -> volumes``; a work must not straddle classes."""
    kind = TaskKind(kind)
    out: Dict[str, Dict[str, List[BookAnnotation]]] = defaultdict(lambda: defaultdict(list))
    seen = {}
    for b in books:
        cls = class_name_of(b, kind)
        if seen.setdefault(b.work, cls) != cls:
            raise SchemaError(f"work {b.work} has volumes in both {seen[b.work]!r} and {cls!r}")
        out[cls][b.work].append(b)
    return out


def drop_single_work_classes(books: Sequence[BookAnnotation], kind) -> Tuple[List[BookAnnotation], List[str]]:
    """Remove classes represented by a single work; returns ``(kept, dropped)``."""
    grouped = works_by_class(books, kind)
    dropped = sorted(c for c, works in grouped.items() if len(works) < 2)
    kept = [b for b in books if class_name_of(b, kind) not in dropped]
    return kept, dropped


def build_leave_one_work_out(books: Sequence[BookAnnotation], kind, seed: int) -> SplitManifest:
    """Hold out one randomly chosen work per class as the test set."""
    kind = TaskKind(kind)
    if kind not in (TaskKind.PUBLISHER, TaskKind.GENRE):
        raise ValueError(f"leave-one-work-out applies to publisher/genre tasks, not {kind.value}")
    grouped = works_by_class(books, kind)
    single = sorted(c for c, works in grouped.items() if len(works) < 2)
    if single:
        raise SingleWorkClassError(f"classes with a single work: {single}")
    task = LabelTask(kind, tuple(sorted(grouped)))

    pages_of_work = defaultdict(list)
    labels = {}
    for book, page in _eligible_pages(books):
        ref = page_ref(book.title, page.index)
        pages_of_work[book.work].append(ref)
        labels[ref] = task.label_of_book(book)

    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    test, train_works = [], {}
    for cls in task.label_map:
        works = sorted(grouped[cls])
        held = works[int(rng.integers(len(works)))]
        test += pages_of_work[held]
        train_works[task.id_of(cls)] = [w for w in works if w != held]
    work_folds = _deal_into_folds(train_works, rng)
    folds = [[r for w in fold for r in pages_of_work[w]] for fold in work_folds]
    return SplitManifest(task, seed, Protocol.LEAVE_ONE_WORK_OUT, folds, [], test, labels)


def held_out_works(manifest: SplitManifest) -> List[str]:
    return sorted({work_key(parse_ref(r)[0]) for r in manifest.test})
