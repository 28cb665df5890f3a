"""Command line entry point: ``mangalayout <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import annotation as ann
from .corpus import (
    N_FOLDS,
    LabelTask,
    SplitManifest,
    TaskKind,
    build_four_panel_split,
    build_leave_one_work_out,
    build_title_split,
    drop_single_work_classes,
    parse_ref,
)
from .perturb import NoiseSpec
from .render import AblationMode, AblationSpec, PageItem, RenderConfig, write_rendered_corpus

log = logging.getLogger("mangalayout")


def _ablation_from_args(args) -> AblationSpec:
    noise = None
    if getattr(args, "noise_family", None):
        noise = NoiseSpec(args.noise_family, args.noise_range, args.noise_seed)
    return AblationSpec(AblationMode(args.mode), noise)


def _page_items(books, data_root=None, with_images=False):
    for book in books:
        for page in ann.filter_pages_with_frames(book):
            image = None
            if with_images:
                with Image.open(ann.page_image_path(data_root, book.title, page.index)) as im:
                    image = np.asarray(im.convert("L"))
            yield PageItem(book.title, page, image)


def cmd_validate(args) -> int:
    metadata = ann.load_metadata(args.metadata) if args.metadata else None
    paths = []
    for p in map(Path, args.paths):
        paths += sorted((p / "annotations").glob("*.xml")) if p.is_dir() else [p]
    n_issues = 0
    for path in paths:
        for issue in ann.validate_book(path.read_bytes(), metadata=metadata):
            print(f"{path.name}\t{issue.format()}")
            n_issues += 1
    print(f"# {len(paths)} document(s), {n_issues} error(s)", file=sys.stderr)
    return 1 if n_issues else 0


def cmd_synth(args) -> int:
    from .synthetic import default_styles, generate_synthetic_corpus, write_synthetic_corpus

    books, _ = generate_synthetic_corpus(
        default_styles(), args.pages_per_style, args.seed, works_per_style=args.works_per_style
    )
    write_synthetic_corpus(args.out, books, write_images=not args.no_images)
    print(f"wrote {len(books)} books, {sum(len(b.pages) for b in books)} pages to {args.out}")
    return 0


def _build_manifest(books, task: TaskKind, seed: int, drop_single: bool) -> SplitManifest:
    if task is TaskKind.TITLE:
        return build_title_split(books, seed)
    if task is TaskKind.FOUR_PANEL:
        return build_four_panel_split(books, seed)
    if drop_single:
        books, dropped = drop_single_work_classes(books, task)
        if dropped:
            log.warning("dropping single-work classes: %s", dropped)
    return build_leave_one_work_out(books, task, seed)


def cmd_split(args) -> int:
    books = ann.load_corpus(args.data_root, args.metadata)
    manifest = _build_manifest(books, TaskKind(args.task), args.seed, args.drop_single_work)
    manifest.save(args.out)
    n_train, n_dev, n_test = manifest.sizes()
    print(f"{manifest.task.kind.value}: {manifest.task.n_classes} classes, train {n_train} dev {n_dev} test {n_test}")
    return 0


def cmd_render(args) -> int:
    books = ann.load_corpus(args.data_root, args.metadata)
    spec = _ablation_from_args(args)
    task = LabelTask.from_books(books, args.task)
    label_of = {b.title: task.label_of_book(b) for b in books}.__getitem__
    items = _page_items(books, args.data_root, with_images=spec.mode is not AblationMode.FRAME_ONLY)
    cfg = RenderConfig(stroke_width=args.stroke_width, mask_fill=args.mask_fill)
    index = write_rendered_corpus(items, spec, args.out, label_of, cfg)
    print(f"rendered {spec.name} into {args.out} (index {index})")
    return 0


def _load_experiment(args):
    from .config import load_config

    cfg = load_config(args.config)
    cfg = cfg.with_overrides(mode=getattr(args, "mode", None), task=getattr(args, "task", None))
    if cfg.manifest is None:
        raise SystemExit("config has no manifest")
    manifest = SplitManifest.load(cfg.manifest)
    return cfg, manifest


def _corpus_for(cfg, manifest):
    from .classifier.pipeline import LazyRenderCorpus

    if cfg.corpus_dir and (Path(cfg.corpus_dir) / "index.json").exists():
        return cfg.corpus_dir
    if cfg.data_root:
        books = ann.load_corpus(cfg.data_root)
        return LazyRenderCorpus(_page_items(books), cfg.ablation, cfg.render, image_root=cfg.data_root)
    from .exceptions import CorpusMissingError

    raise CorpusMissingError("config needs a rendered corpus_dir or a data_root")


def cmd_train(args) -> int:
    from .classifier.pipeline import save_fold_model, train_fold

    cfg, manifest = _load_experiment(args)
    corpus = _corpus_for(cfg, manifest)
    folds = [args.fold] if args.fold is not None else range(N_FOLDS)
    features = {}
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1), encoding="utf-8")
    for k in folds:
        model = train_fold(manifest, k, cfg.ablation, cfg.train, corpus, features=features)
        folder = save_fold_model(model, run_dir, label_map=manifest.task.label_map)
        print(f"fold {k}: {model.curve[-1] if model.curve else {}} -> {folder}")
    return 0


def cmd_predict(args) -> int:
    from .classifier.pipeline import load_fold_models, predict_refs

    cfg, manifest = _load_experiment(args)
    models = load_fold_models(cfg.run_dir)
    refs = manifest.test if args.split == "test" else manifest.dev
    preds = predict_refs(models, refs, _corpus_for(cfg, manifest), cfg.ablation)
    out = [
        {"ref": r, "true": manifest.labels[r], "final": p.final, "votes": list(p.votes), "tie_broken": p.tie_broken}
        for r, p in zip(refs, preds)
    ]
    path = cfg.run_dir / f"predictions_{args.split}.json"
    path.write_text(json.dumps(out, indent=1), encoding="utf-8")
    acc = np.mean([o["true"] == o["final"] for o in out]) if out else float("nan")
    print(f"{len(out)} predictions, ensemble accuracy {acc:.4f} -> {path}")
    return 0


def cmd_evaluate(args) -> int:
    from .classifier.pipeline import load_fold_models
    from .report import evaluate, render_class_table, render_tables, write_report

    cfg, manifest = _load_experiment(args)
    path = cfg.run_dir / f"predictions_{args.split}.json"
    rows = json.loads(path.read_text(encoding="utf-8"))
    noise = cfg.ablation.noise
    report = evaluate(
        [(r["true"], r["final"]) for r in rows],
        class_names=manifest.task.label_map,
        task=manifest.task.kind.value,
        mode=cfg.ablation.name,
        manifest_ref=str(cfg.manifest),
        config_hash=cfg.train.config_hash(),
        noise=None if noise is None else (noise.family.value, noise.range),
    )
    try:
        models = load_fold_models(cfg.run_dir)
    except Exception:  # curves are optional in the report
        models = None
    out = write_report(report, cfg.run_dir / "report", models)
    print(render_tables([report]))
    print(render_class_table(report))
    print(f"report written to {out}")
    return 0


def cmd_explain(args) -> int:
    from .classifier.ensemble import vote
    from .classifier.pipeline import load_fold_models
    from .explain import ensemble_heatmap, grad_cam, heatmap_stats, overlay

    cfg, manifest = _load_experiment(args)
    folds = [args.fold] if args.fold is not None else list(range(N_FOLDS))
    models = load_fold_models(cfg.run_dir, folds)
    corpus = _corpus_for(cfg, manifest)
    if isinstance(corpus, (str, Path)):
        from .classifier.pipeline import DiskCorpus

        corpus = DiskCorpus(corpus, cfg.ablation.name)
    image = corpus.get(args.image_ref)
    out_dir = Path(args.out or cfg.run_dir / "explain")
    out_dir.mkdir(parents=True, exist_ok=True)
    title, index = parse_ref(args.image_ref)
    stem = f"{title}_{index}"
    heatmaps, votes, probs, stats = [], [], [], []
    for m in models:
        probs.append(m.predict_proba_image(image))
        votes.append(int(probs[-1].argmax()))
        target = args.target_class if args.target_class is not None else votes[-1]
        h = grad_cam(m, image, target)
        heatmaps.append(h)
        Image.fromarray(overlay(h, image, args.alpha)).save(out_dir / f"{stem}_fold{m.fold}.png")
        stats.append(heatmap_stats(h))
    if len(models) > 1:
        final = vote(np.stack(probs)).final
        target = args.target_class if args.target_class is not None else final
        mean = ensemble_heatmap(heatmaps, votes, target)
        Image.fromarray(overlay(mean, image, args.alpha)).save(out_dir / f"{stem}_vote_mean.png")
        stats.append(heatmap_stats(mean))
    (out_dir / f"{stem}_stats.json").write_text(json.dumps(stats, indent=1), encoding="utf-8")
    print(f"wrote {len(stats)} overlay(s) to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mangalayout", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check annotation documents; one line per error")
    p.add_argument("paths", nargs="+", help="annotation XML files or Manga109-layout roots")
    p.add_argument("--metadata")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="write a synthetic layout corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--pages-per-style", type=int, default=100)
    p.add_argument("--works-per-style", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-images", action="store_true")
    p.set_defaults(func=cmd_synth)

    tasks = [t.value for t in TaskKind]
    p = sub.add_parser("split", help="build a split manifest")
    p.add_argument("--data-root", required=True)
    p.add_argument("--metadata")
    p.add_argument("--task", choices=tasks, default=TaskKind.TITLE.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-single-work", action="store_true", help="exclude classes with a single work first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("render", help="render one ablation mode to disk")
    p.add_argument("--data-root", required=True)
    p.add_argument("--metadata")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=[m.value for m in AblationMode], default="frame_only")
    p.add_argument("--task", choices=tasks, default=TaskKind.TITLE.value, help="label ids stored in index.json")
    p.add_argument("--noise-family", choices=["rectangular", "quadrilateral"])
    p.add_argument("--noise-range", type=int, default=0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--stroke-width", type=int, default=3)
    p.add_argument("--mask-fill", type=int, default=255)
    p.set_defaults(func=cmd_render)

    for name, func, hlp in (
        ("train", cmd_train, "train fold models from a config"),
        ("predict", cmd_predict, "ensemble predictions for the test (or dev) split"),
        ("evaluate", cmd_evaluate, "metrics, tables and curves from saved predictions"),
        ("explain", cmd_explain, "Grad-CAM overlays for one page"),
    ):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", required=True)
        p.add_argument("--mode", choices=[m.value for m in AblationMode])
        p.add_argument("--task", choices=tasks)
        p.add_argument("--fold", type=int, choices=range(N_FOLDS))
        if name in ("predict", "evaluate"):
            p.add_argument("--split", choices=["test", "dev"], default="test")
        if name == "explain":
            p.add_argument("--image-ref", required=True, help="<title>/<page index>")
            p.add_argument("--class", dest="target_class", type=int)
            p.add_argument("--alpha", type=float, default=0.4)
            p.add_argument("--out")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
