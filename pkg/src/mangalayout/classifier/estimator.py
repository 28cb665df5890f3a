"""Scikit-learn compatible CNN classifier for preprocessed page batches."""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from torch import nn

from ..exceptions import ClassCountMismatchError
from ..validation import check_image_batch, check_labels
from .backbones import backbone_info, build_backbone
from .config import eval_epochs, lr_at_epoch

logger = logging.getLogger(__name__)


class LayoutClassifier(ClassifierMixin, BaseEstimator):
    """Fine-tune a convolutional backbone on ``(n, c, s, s)`` image batches.

    Use :class:`~mangalayout.classifier.preprocess.PagePreprocessor` to get
    such batches from rendered pages. Hyperparameter names mirror
    :class:`~mangalayout.classifier.config.TrainConfig`.

    Attributes
    ----------
    module_ : torch.nn.Module
        The trained network (final-epoch weights unless ``select_on_dev``).
    classes_ : ndarray of shape (n_classes,)
    history_ : list of dict
        One entry per evaluation epoch with ``epoch``, ``lr``, ``loss``,
        ``train_acc`` and, when the corresponding data were given,
        ``val_acc`` (cross-validation fold) and ``dev_acc``.
    """

    def __init__(
        self,
        backbone="resnet101-imagenet",
        n_classes=None,
        batch_size=32,
        initial_lr=0.001,
        momentum=0.9,
        lr_decay_factor=0.1,
        lr_step_epochs=30,
        max_epochs=100,
        eval_every_until=30,
        eval_every_after=10,
        weight_decay=0.0,
        full_finetune=True,
        select_on_dev=False,
        pretrained=None,
        seed=0,
        device="cpu",
    ):
        self.backbone = backbone
        self.n_classes = n_classes
        self.batch_size = batch_size
        self.initial_lr = initial_lr
        self.momentum = momentum
        self.lr_decay_factor = lr_decay_factor
        self.lr_step_epochs = lr_step_epochs
        self.max_epochs = max_epochs
        self.eval_every_until = eval_every_until
        self.eval_every_after = eval_every_after
        self.weight_decay = weight_decay
        self.full_finetune = full_finetune
        self.select_on_dev = select_on_dev
        self.pretrained = pretrained
        self.seed = seed
        self.device = device

    def _build(self, n_classes: int) -> nn.Module:
        torch.manual_seed(self.seed)
        module = build_backbone(self.backbone, n_classes, pretrained=self.pretrained)
        if not self.full_finetune:
            head = backbone_info(self.backbone).head
            for name, p in module.named_parameters():
                p.requires_grad = name.startswith(head + ".")
        return module.to(self.device)

    def _accuracy(self, module, X, y) -> float:
        pred = self._logits(module, X).argmax(1)
        return float((pred == y).mean())

    def _logits(self, module, X) -> np.ndarray:
        module.eval()
        out = []
        with torch.no_grad():
            for i in range(0, len(X), 256):
                xb = torch.from_numpy(X[i:i + 256]).to(self.device)
                out.append(module(xb).cpu().numpy())
        return np.concatenate(out).astype(np.float64)

    def fit(self, X, y, X_val=None, y_val=None, X_dev=None, y_dev=None,
            resample: Optional[Callable[[int], np.ndarray]] = None):
        """Train for ``max_epochs`` epochs.

        Parameters
        ----------
        X, y
            Training batch and integer labels.
        X_val, y_val
            Held-out cross-validation fold, evaluated on the eval schedule.
        X_dev, y_dev
            Development set; used for model selection when ``select_on_dev``.
        resample
            Optional ``epoch -> X`` callable producing a fresh training batch
            (same order and labels) before each epoch, for per-epoch noise.
        """
        info = backbone_info(self.backbone)
        X = check_image_batch(X, channels=info.in_channels)
        n_classes = self.n_classes if self.n_classes is not None else int(np.max(y)) + 1
        try:
            y = check_labels(y, n_classes, n_samples=len(X))
        except ValueError as exc:
            raise ClassCountMismatchError(str(exc)) from exc
        if X_val is not None:
            X_val = check_image_batch(X_val, channels=info.in_channels)
            y_val = check_labels(y_val, n_classes, n_samples=len(X_val))
        if X_dev is not None:
            X_dev = check_image_batch(X_dev, channels=info.in_channels)
            y_dev = check_labels(y_dev, n_classes, n_samples=len(X_dev))
        if self.select_on_dev and X_dev is None:
            raise ValueError("select_on_dev=True needs X_dev/y_dev")

        self.n_classes_ = n_classes
        self.classes_ = np.arange(n_classes)
        module = self._build(n_classes)
        params = [p for p in module.parameters() if p.requires_grad]
        opt = torch.optim.SGD(params, lr=self.initial_lr, momentum=self.momentum, weight_decay=self.weight_decay)
        loss_fn = nn.CrossEntropyLoss()
        gen = torch.Generator().manual_seed(self.seed)
        schedule = set(eval_epochs(self.max_epochs, self.eval_every_until, self.eval_every_after))
        y_t = torch.from_numpy(y).to(self.device)

        history: List[dict] = []
        best_state, best_dev = None, -1.0
        for epoch in range(1, self.max_epochs + 1):
            lr = lr_at_epoch(epoch, self.initial_lr, self.lr_decay_factor, self.lr_step_epochs)
            for g in opt.param_groups:
                g["lr"] = lr
            if resample is not None and epoch > 1:
                X = check_image_batch(resample(epoch), channels=info.in_channels)
            module.train()
            perm = torch.randperm(len(X), generator=gen)
            total_loss, correct = 0.0, 0
            for i in range(0, len(X), self.batch_size):
                idx = perm[i:i + self.batch_size]
                xb = torch.from_numpy(X[idx.numpy()]).to(self.device)
                yb = y_t[idx]
                opt.zero_grad()
                logits = module(xb)
                loss = loss_fn(logits, yb)
                loss.backward()
                opt.step()
                total_loss += loss.item() * len(idx)
                correct += int((logits.argmax(1) == yb).sum())
            if epoch not in schedule:
                continue
            rec = {"epoch": epoch, "lr": lr, "loss": total_loss / len(X), "train_acc": correct / len(X)}
            if X_val is not None:
                rec["val_acc"] = self._accuracy(module, X_val, y_val)
            if X_dev is not None:
                rec["dev_acc"] = self._accuracy(module, X_dev, y_dev)
                if self.select_on_dev and rec["dev_acc"] > best_dev:
                    best_dev = rec["dev_acc"]
                    best_state = copy.deepcopy(module.state_dict())
            logger.info("epoch %d %s", epoch, {k: round(v, 4) for k, v in rec.items() if k != "epoch"})
            history.append(rec)

        if best_state is not None:
            module.load_state_dict(best_state)
        module.eval()
        self.module_ = module
        self.history_ = history
        return self

    def _check_fitted(self):
        if not hasattr(self, "module_"):
            raise NotFittedError("LayoutClassifier is not fitted yet; call fit first")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_image_batch(X, channels=backbone_info(self.backbone).in_channels)
        return self._logits(self.module_, X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=1)

    def save(self, folder) -> Path:
        """Write ``model.pt`` and ``estimator.json`` into ``folder``."""
        self._check_fitted()
        folder = Path(folder)
        folder.mkdir(parents=True, exist_ok=True)
        torch.save(self.module_.state_dict(), folder / "model.pt")
        payload = {"params": self.get_params(), "n_classes": self.n_classes_, "history": self.history_}
        (folder / "estimator.json").write_text(json.dumps(payload, indent=1), encoding="utf-8")
        return folder

    @classmethod
    def load(cls, folder) -> "LayoutClassifier":
        folder = Path(folder)
        payload = json.loads((folder / "estimator.json").read_text(encoding="utf-8"))
        params = dict(payload["params"])
        params["pretrained"] = False
        est = cls(**params)
        n_classes = payload["n_classes"]
        module = build_backbone(est.backbone, n_classes, pretrained=False)
        state = torch.load(folder / "model.pt", map_location=est.device, weights_only=True)
        try:
            module.load_state_dict(state)
        except RuntimeError as exc:
            raise ClassCountMismatchError(f"snapshot in {folder} does not match a {n_classes}-class head") from exc
        module.eval()
        est.module_ = module.to(est.device)
        est.n_classes_ = n_classes
        est.classes_ = np.arange(n_classes)
        est.history_ = payload["history"]
        # keep the original flag visible in get_params
        est.pretrained = payload["params"].get("pretrained")
        return est
