"""Command line: ``vsrn gen-data | train | eval | attend``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .attention import DEFAULT_LAMBDA, region_rank_scores, render_heatmap, write_graymap
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .corpus import generate_synthetic_corpus, load_corpus, save_corpus
from .retrieval import ensemble_scores, evaluate, evaluate_folds, similarity_matrix
from .train import model_from_checkpoint, train


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


def cmd_gen_data(args) -> None:
    corpus = generate_synthetic_corpus(
        args.n_train + args.n_val + args.n_test,
        args.concepts,
        args.regions,
        args.feature_dim,
        args.seed,
        split_sizes=(args.n_train, args.n_val, args.n_test),
        concepts_per_item=args.concepts_per_item,
        captions_per_item=args.captions_per_item,
    )
    save_corpus(corpus, args.out)


def cmd_train(args) -> None:
    overrides = {} if args.seed is None else {"seed": args.seed}
    config = TrainConfig.load(args.config, **overrides) if args.config else TrainConfig(**overrides)
    corpus = load_corpus(args.corpus)
    result = train(config, corpus)
    out = Path(args.out)
    save_checkpoint(result.best, out)
    save_checkpoint(result.last, _sidecar(out, ".last"))
    _sidecar(out, ".log.tsv").write_text(result.log_text(), encoding="utf-8")
    if not args.no_plot:
        from .plotting import plot_training_curves

        plot_training_curves(result.history, _sidecar(out, ".curves.png"))
    print(
        f"best epoch {result.best.epoch} val rsum {result.best.val_rsum:.4f}; "
        f"train R@1=1.0 first at epoch {result.reached_train_r1}"
    )


def cmd_eval(args) -> None:
    corpus = load_corpus(args.corpus)
    idx = corpus.indices(args.split)
    if len(idx) == 0:
        raise ValueError(f"split {args.split!r} is empty")
    mats = []
    for path in args.checkpoint:
        model = model_from_checkpoint(load_checkpoint(path))
        imgs, caps = model.embed_split(corpus, idx)
        mats.append(similarity_matrix(imgs, caps, corpus.captions_per_image))
    sim = ensemble_scores(mats)
    report = evaluate_folds(sim, args.folds)[0] if args.folds > 1 else evaluate(sim)
    out = Path(args.out)
    report.write(out)
    if not args.no_plot:
        from .plotting import plot_report

        plot_report(report, out.with_suffix(".png"))
    sys.stdout.write(report.to_text())


def cmd_attend(args) -> None:
    corpus = load_corpus(args.corpus)
    idx = corpus.indices(args.split)
    if not 0 <= args.item < len(idx):
        raise ValueError(f"item {args.item} outside split {args.split!r} of size {len(idx)}")
    item = int(idx[args.item])
    model = model_from_checkpoint(load_checkpoint(args.checkpoint[0]))
    regions = corpus.regions[item]
    orders = model.region_orders([regions], [item])
    V_star, image = model.image_forward(regions.features[None], orders)
    scores = region_rank_scores(V_star.values[0], image.values[0], args.lam)
    amap = render_heatmap(regions.boxes, scores, *corpus.canvas)
    out = Path(args.out)
    write_graymap(amap, out)
    if not args.no_plot:
        from .plotting import plot_attention

        plot_attention(amap, regions.boxes, out.with_suffix(".png"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vsrn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic paired corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-train", type=int, default=64)
    g.add_argument("--n-val", type=int, default=16)
    g.add_argument("--n-test", type=int, default=16)
    g.add_argument("--concepts", type=int, default=12)
    g.add_argument("--concepts-per-item", type=int, default=3)
    g.add_argument("--captions-per-item", type=int, default=1)
    g.add_argument("--regions", type=int, default=6)
    g.add_argument("--feature-dim", type=int, default=64)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train and keep the best validation snapshot")
    t.add_argument("--config")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--no-plot", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="Recall@K report; several checkpoints are ensembled")
    e.add_argument("--checkpoint", action="append", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--folds", type=int, default=1)
    e.add_argument("--out", required=True)
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("attend", help="write the rank-score attention map of one item")
    a.add_argument("--checkpoint", action="append", required=True)
    a.add_argument("--corpus", required=True)
    a.add_argument("--split", choices=("train", "val", "test"), default="test")
    a.add_argument("--item", type=int, default=0)
    a.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    a.add_argument("--out", required=True)
    a.add_argument("--no-plot", action="store_true")
    a.set_defaults(func=cmd_attend)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s"
    )
    try:
        args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"vsrn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
