"""Fold training over split manifests and rendered corpora."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from ..annotation import page_image_path
from ..corpus import N_FOLDS, SplitManifest, parse_ref
from ..exceptions import ClassCountMismatchError, CorpusMissingError
from ..render import AblationMode, AblationSpec, PageItem, RenderConfig, RenderedImage, load_rendered, render_page
from .config import TrainConfig
from .ensemble import EnsemblePrediction, check_same_task, vote_batch
from .estimator import LayoutClassifier
from .preprocess import preprocess_input

logger = logging.getLogger(__name__)


class DiskCorpus:
    """Rendered pages stored as ``<root>/<mode>/<title>/<index>.png``."""

    def __init__(self, root, mode_name: str):
        self.root = Path(root)
        self.mode_name = mode_name
        if not (self.root / "index.json").exists():
            raise CorpusMissingError(f"no rendered corpus at {self.root} (index.json missing)")

    def get(self, ref: str) -> RenderedImage:
        title, index = parse_ref(ref)
        try:
            return load_rendered(self.root, self.mode_name, title, index)
        except FileNotFoundError as exc:
            raise CorpusMissingError(f"{ref} was not rendered for mode {self.mode_name}") from exc


class LazyRenderCorpus:
    """Render pages on demand from annotations.

    Page images are only needed for the unprocessed and masked modes; items
    without one are read from ``image_root`` (Manga109 layout) when required.
    """

    def __init__(self, items: Iterable[PageItem], spec: AblationSpec, config: RenderConfig = RenderConfig(), image_root=None):
        self.items = {it.ref: it for it in items}
        self.spec = spec
        self.config = config
        self.image_root = image_root

    def get(self, ref: str, spec: Optional[AblationSpec] = None) -> RenderedImage:
        try:
            item = self.items[ref]
        except KeyError:
            raise CorpusMissingError(f"{ref} is not in the corpus") from None
        spec = spec or self.spec
        if item.image is None and spec.mode is not AblationMode.FRAME_ONLY:
            if self.image_root is None:
                raise CorpusMissingError(f"{ref} has no page image and no image_root was given")
            with Image.open(page_image_path(self.image_root, item.title, item.page.index)) as im:
                item = PageItem(item.title, item.page, np.asarray(im.convert("L")))
        return render_page(item, spec, self.config)


def _as_corpus(corpus, ablation: AblationSpec):
    if isinstance(corpus, (str, Path)):
        return DiskCorpus(corpus, ablation.name)
    if isinstance(corpus, Mapping):
        class _MapCorpus:
            def get(self, ref):
                try:
                    return corpus[ref]
                except KeyError:
                    raise CorpusMissingError(f"{ref} is not in the corpus") from None
        return _MapCorpus()
    return corpus


def preprocess_refs(corpus, refs: Sequence[str], cfg: TrainConfig, spec: Optional[AblationSpec] = None) -> np.ndarray:
    get = corpus.get if spec is None else (lambda r: corpus.get(r, spec))
    return np.stack([preprocess_input(get(r), cfg.input_size, cfg.backbone, cfg.resize).numpy() for r in refs])


@dataclass
class FoldModel:
    fold: int
    estimator: LayoutClassifier
    task: str
    n_classes: int
    ablation: str
    config: TrainConfig
    snapshot: Optional[Path] = None

    @property
    def curve(self) -> List[dict]:
        return self.estimator.history_

    def preprocess(self, image) -> np.ndarray:
        return preprocess_input(image, self.config.input_size, self.config.backbone, self.config.resize).numpy()

    def predict_proba_image(self, image) -> np.ndarray:
        return self.estimator.predict_proba(self.preprocess(image)[None])[0]


def make_estimator(cfg: TrainConfig, n_classes: int, **overrides) -> LayoutClassifier:
    params = cfg.estimator_params()
    params.update(overrides)
    return LayoutClassifier(n_classes=n_classes, **params)


def train_fold(
    manifest: SplitManifest,
    fold: int,
    ablation: AblationSpec,
    cfg: TrainConfig,
    corpus,
    *,
    features: Optional[Dict[str, np.ndarray]] = None,
) -> FoldModel:
    """Train the model for cross-validation fold ``fold``.

    ``corpus`` is a rendered-corpus directory, a ``ref -> RenderedImage``
    mapping, or any object with ``get(ref)``. ``features`` optionally caches
    preprocessed arrays by ref across folds.
    """
    if not 0 <= fold < N_FOLDS:
        raise ValueError(f"fold must be in [0, {N_FOLDS}), got {fold}")
    src = _as_corpus(corpus, ablation)
    n_classes = manifest.task.n_classes
    bad = [r for r, lab in manifest.labels.items() if not 0 <= lab < n_classes]
    if bad:
        raise ClassCountMismatchError(f"{len(bad)} labels outside the {n_classes}-class task, e.g. {bad[0]}")
    features = {} if features is None else features

    def arrays(refs):
        missing = [r for r in refs if r not in features]
        if missing:
            for r, x in zip(missing, preprocess_refs(src, missing, cfg)):
                features[r] = x
        return np.stack([features[r] for r in refs]) if refs else None

    train_refs, val_refs = manifest.fold_split(fold)
    X, y = arrays(train_refs), manifest.label_array(train_refs)
    X_val = arrays(val_refs)
    y_val = manifest.label_array(val_refs) if val_refs else None
    X_dev = arrays(list(manifest.dev))
    y_dev = manifest.label_array(manifest.dev) if manifest.dev else None

    resample = None
    if ablation.regenerate_per_epoch:
        if not isinstance(src, LazyRenderCorpus):
            raise ValueError("per-epoch noise regeneration needs a LazyRenderCorpus")

        def resample(epoch):
            spec = ablation.with_seed(ablation.noise.seed + epoch)
            return preprocess_refs(src, train_refs, cfg, spec)

    est = make_estimator(cfg, n_classes, seed=cfg.seed + fold)
    est.fit(X, y, X_val, y_val, X_dev, y_dev, resample=resample)
    logger.info("fold %d done: %s", fold, est.history_[-1] if est.history_ else {})
    return FoldModel(fold, est, manifest.task.kind.value, n_classes, ablation.name, cfg)


def run_experiment(manifest, ablation, cfg, corpus, folds=range(N_FOLDS)) -> List[FoldModel]:
    """Train every fold, sharing one preprocessed feature cache."""
    features: Dict[str, np.ndarray] = {}
    return [train_fold(manifest, k, ablation, cfg, corpus, features=features) for k in folds]


def predict_refs(models: Sequence[FoldModel], refs: Sequence[str], corpus, ablation: AblationSpec) -> List[EnsemblePrediction]:
    """Ensemble predictions for many pages at once."""
    check_same_task(models)
    src = _as_corpus(corpus, ablation)
    cfg = models[0].config
    X = preprocess_refs(src, refs, cfg)
    probs = np.stack([m.estimator.predict_proba(X) for m in models])
    return vote_batch(probs)


def save_fold_model(model: FoldModel, run_dir, *, label_map=None) -> Path:
    folder = Path(run_dir) / f"fold{model.fold}"
    model.estimator.save(folder)
    meta = {
        "fold": model.fold,
        "task": model.task,
        "n_classes": model.n_classes,
        "label_map": list(label_map) if label_map is not None else None,
        "ablation": model.ablation,
        "seed": model.estimator.seed,
        "config_hash": model.config.config_hash(),
        "train_config": model.config.to_dict(),
        "final_metrics": model.curve[-1] if model.curve else {},
    }
    (folder / "metadata.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    model.snapshot = folder
    return folder


def load_fold_model(folder) -> FoldModel:
    folder = Path(folder)
    if not (folder / "metadata.json").exists():
        raise CorpusMissingError(f"no fold snapshot in {folder}")
    meta = json.loads((folder / "metadata.json").read_text(encoding="utf-8"))
    est = LayoutClassifier.load(folder)
    cfg = TrainConfig.from_dict(meta["train_config"])
    return FoldModel(meta["fold"], est, meta["task"], meta["n_classes"], meta["ablation"], cfg, folder)


def load_fold_models(run_dir, folds=range(N_FOLDS)) -> List[FoldModel]:
    return [load_fold_model(Path(run_dir) / f"fold{k}") for k in folds]
