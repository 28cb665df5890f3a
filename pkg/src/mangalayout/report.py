"""Metrics, result tables and training-curve plots."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import EmptyPredictionsError, IdOutOfRangeError

CURVE_MAX_EPOCH = 50


@dataclass
class EvalReport:
    """Test-set metrics for one (task, mode) run.

    ``accuracy`` is the micro accuracy (fraction of correct items) and is the
    number comparable to published "average classification accuracy"
    figures. Per-class F1 is 0 whenever precision + recall is 0.
    """

    task: str
    mode: str
    accuracy: float
    precision: List[float]
    recall: List[float]
    f1: List[float]
    confusion: List[List[int]]
    n_items: int
    class_names: List[str] = field(default_factory=list)
    macro_precision: float = 0.0
    macro_recall: float = 0.0
    macro_f1: float = 0.0
    majority_baseline: float = 0.0
    random_baseline: float = 0.0
    manifest_ref: str = ""
    config_hash: str = ""
    noise: Optional[Tuple[str, int]] = None

    @property
    def n_classes(self) -> int:
        return len(self.confusion)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = None if self.noise is None else list(self.noise)
        return d

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        d = dict(d)
        if d.get("noise") is not None:
            d["noise"] = (d["noise"][0], int(d["noise"][1]))
        return cls(**d)


def _final(p) -> int:
    return int(getattr(p, "final", p))


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def evaluate(
    predictions: Iterable,
    n_classes: Optional[int] = None,
    *,
    class_names: Optional[Sequence[str]] = None,
    task: str = "",
    mode: str = "",
    manifest_ref: str = "",
    config_hash: str = "",
    noise: Optional[Tuple[str, int]] = None,
) -> EvalReport:
    """Score ``(true id, prediction)`` pairs.

    ``prediction`` is an :class:`EnsemblePrediction` or a bare class id.
    ``n_classes`` defaults to ``len(class_names)``, else to the largest id
    seen plus one.
    """
    pairs = [(int(t), _final(p)) for t, p in predictions]
    if not pairs:
        raise EmptyPredictionsError("no predictions to evaluate")
    y_true = np.array([t for t, _ in pairs])
    y_pred = np.array([p for _, p in pairs])
    if n_classes is None:
        n_classes = len(class_names) if class_names else int(max(y_true.max(), y_pred.max())) + 1
    if class_names is not None and len(class_names) != n_classes:
        raise ValueError(f"{len(class_names)} class names for {n_classes} classes")
    lo, hi = min(y_true.min(), y_pred.min()), max(y_true.max(), y_pred.max())
    if lo < 0 or hi >= n_classes:
        raise IdOutOfRangeError(f"class ids must lie in [0, {n_classes}), got [{lo}, {hi}]")

    cm = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros(n_classes), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    n = len(pairs)
    return EvalReport(
        task=task,
        mode=mode,
        accuracy=float(tp.sum() / n),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm.tolist(),
        n_items=n,
        class_names=list(class_names) if class_names is not None else [str(i) for i in range(n_classes)],
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        majority_baseline=float(actual.max() / n),
        random_baseline=1.0 / n_classes,
        manifest_ref=manifest_ref,
        config_hash=config_hash,
        noise=noise,
    )


# ---------------------------------------------------------------- tables

def _noise_range_label(r: int) -> str:
    return f"(-{r}, {r})"


def _summary_rows(reports: Sequence[EvalReport]):
    if reports and all(r.noise is not None for r in reports):
        header = ["Noise Type", "Noise Range", "Accuracy"]
        rows = [[r.noise[0].capitalize(), _noise_range_label(r.noise[1]), r.accuracy] for r in reports]
    else:
        header = ["Task", "Mode", "Accuracy", "Macro F1", "Items"]
        rows = [[r.task, r.mode, r.accuracy, r.macro_f1, r.n_items] for r in reports]
    return header, rows


def _class_rows(report: EvalReport):
    header = ["Class", "Precision", "Recall", "F1-score"]
    rows = [[name, p, r, f] for name, p, r, f in zip(report.class_names, report.precision, report.recall, report.f1)]
    return header, rows


def _emit(header, rows, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"format must be 'csv' or 'text', got {fmt!r}")
    cells = [[f"{v:.2f}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(header)]
    line = lambda vals: " | ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(vals, widths)))
    out = [line(header), "-+-".join("-" * w for w in widths)]
    out += [line(c) for c in cells]
    return "\n".join(out) + "\n"


def render_tables(reports: Sequence[EvalReport], fmt: str = "text") -> str:
    """One row per report.

    When every report carries a noise setting the columns are ``Noise Type,
    Noise Range, Accuracy``; otherwise ``Task, Mode, Accuracy, Macro F1,
    Items``. CSV cells hold full-precision floats, text cells two decimals.
    """
    return _emit(*_summary_rows(reports), fmt)


def render_class_table(report: EvalReport, fmt: str = "text") -> str:
    """Per-class precision/recall/F1 table."""
    return _emit(*_class_rows(report), fmt)


def parse_table_csv(text: str) -> List[dict]:
    """Inverse of the CSV tables; numeric cells come back as floats."""
    def cell(v):
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
        return v

    return [{k: cell(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


# ---------------------------------------------------------------- curves

def _histories(fold_models) -> List[List[dict]]:
    return [getattr(m, "curve", m) for m in fold_models]


def curve_statistics(fold_models, key: str = "val_acc", max_epoch: Optional[int] = CURVE_MAX_EPOCH):
    """Mean and population std of ``key`` across folds at shared eval epochs.

    ``fold_models`` may be FoldModels or raw history lists. Returns
    ``(epochs, mean, std)`` arrays.
    """
    hists = _histories(fold_models)
    if not hists:
        raise ValueError("no fold curves")
    per_fold = [{h["epoch"]: h[key] for h in hist if key in h} for hist in hists]
    epochs = sorted(set.intersection(*(set(p) for p in per_fold)))
    if max_epoch is not None:
        epochs = [e for e in epochs if e <= max_epoch]
    values = np.array([[p[e] for e in epochs] for p in per_fold], dtype=np.float64).reshape(len(per_fold), len(epochs))
    return np.array(epochs), values.mean(axis=0), values.std(axis=0)


def plot_curves(fold_models, path, *, max_epoch: Optional[int] = CURVE_MAX_EPOCH, title: str = "") -> Path:
    """Mean +/- std accuracy curves across folds, written to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = {"train_acc": "training", "val_acc": "validation (CV fold)", "dev_acc": "development set"}
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, label in labels.items():
        epochs, mean, std = curve_statistics(fold_models, key, max_epoch)
        if len(epochs):
            ax.errorbar(epochs, mean, yerr=std, label=label, capsize=2, marker=".", linewidth=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(report: EvalReport, out_dir, fold_models=None) -> Path:
    """Write ``metrics.json``, ``table.csv``, ``table.txt``, ``confusion.csv``
    and, given fold models, ``curves.png`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    (out / "table.csv").write_text(render_class_table(report, "csv"), encoding="utf-8")
    text = render_tables([report], "text") + "\n" + render_class_table(report, "text")
    text += f"\nrandom baseline {report.random_baseline:.4f}, majority-class baseline {report.majority_baseline:.4f}\n"
    (out / "table.txt").write_text(text, encoding="utf-8")
    with open(out / "confusion.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["true\\pred", *report.class_names])
        for name, row in zip(report.class_names, report.confusion):
            w.writerow([name, *row])
    if fold_models:
        plot_curves(fold_models, out / "curves.png", title=f"{report.task} / {report.mode}")
    return out
