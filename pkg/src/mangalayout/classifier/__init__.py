"""CNN fine-tuning, fold ensembles and input preprocessing."""

from .backbones import BACKBONES, TinyCNN, backbone_info, build_backbone
from .config import FULL_SCALE_PROFILE, TINY_PROFILE, TrainConfig, eval_epochs, lr_at_epoch
from .ensemble import EnsemblePrediction, FoldEnsembleClassifier, predict_ensemble, vote, vote_batch
from .estimator import LayoutClassifier
from .pipeline import (
    DiskCorpus,
    FoldModel,
    LazyRenderCorpus,
    load_fold_model,
    load_fold_models,
    predict_refs,
    preprocess_refs,
    run_experiment,
    save_fold_model,
    train_fold,
)
from .preprocess import PagePreprocessor, preprocess_input
