"""Command-line entry point.

Commands: synth, train, caption, eval, gradcheck. Config values come from
an optional ``key = value`` file, overridden by repeated --set KEY=VALUE
flags. Exit codes: 0 success, 2 usage or config error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import data as data_mod
from . import decoding, gradcheck, metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import CaptionRecord, encode_caption
from .errors import (
    DimensionError,
    DivergenceError,
    GradientError,
    LangCnnError,
    MissingFeatureError,
    ParseError,
    UsageError,
    VocabularyError,
)
from .model import CaptionerModel
from .training import train

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

GRADCHECK_TOLERANCE = 1e-4
# Small profile used by gradcheck when the config does not say otherwise.
GRADCHECK_PROFILE = (
    ("model.embed_dim", "8"),
    ("model.hidden_dim", "8"),
    ("cnn.window", "6"),
    ("cnn.kernels", "3,2"),
    ("model.dropout", "0.0"),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langcnn",
        description=(
            "Train and run a convolutional-history image captioner. "
            "Config precedence: built-in defaults, then --config file "
            "values, then --set overrides."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-images", type=int, required=True)
    p.add_argument("--grammar-size", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="allow a non-empty --out")

    p = sub.add_parser("train", help="train a captioner on a data directory")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE")
    p.add_argument("--data", required=True,
                   help="directory with captions.tsv, features.tsv, splits.tsv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("caption", help="decode captions for a feature file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--beam", type=int, default=2)
    p.add_argument("--max-len", type=int, default=16)
    p.add_argument("--out", help="output TSV (default stdout)")

    p = sub.add_parser("eval", help="score hypothesis captions against references")
    p.add_argument("--hyp", required=True, help="image_id<TAB>caption TSV")
    p.add_argument("--ref", required=True,
                   help="image_id<TAB>caption TSV, multiple rows per id allowed")
    p.add_argument("--out", help="directory for metrics.tsv and metrics.png")

    p = sub.add_parser("gradcheck",
                       help="verify backward gradients with finite differences")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE")
    p.add_argument("--vocab-size", type=int, default=20)
    p.add_argument("--feature-dim", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _require_empty_dir(path: str, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise UsageError(
            f"output directory {path!r} is not empty; pass --force to reuse it"
        )
    os.makedirs(path, exist_ok=True)


def cmd_synth(args) -> int:
    if args.n_images < 1:
        raise UsageError(f"--n-images must be >= 1, got {args.n_images}")
    try:
        pairs, store = data_mod.synth_corpus(
            args.seed, args.n_images, args.grammar_size
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    _require_empty_dir(args.out, args.force)
    data_mod.save_captions(os.path.join(args.out, "captions.tsv"), pairs)
    store.save(os.path.join(args.out, "features.tsv"))
    splits = data_mod.assign_splits([pid for pid, _ in pairs], args.seed)
    data_mod.save_splits(os.path.join(args.out, "splits.tsv"), splits)
    print(f"wrote {len(pairs)} captions to {args.out}")
    return 0


def _load_corpus(data_dir: str):
    captions = data_mod.load_captions(os.path.join(data_dir, "captions.tsv"))
    features = data_mod.load_features(os.path.join(data_dir, "features.tsv"))
    splits = data_mod.load_splits(os.path.join(data_dir, "splits.tsv"))
    return captions, features, splits


def cmd_train(args) -> int:
    config = RunConfig.load(args.config, args.overrides)
    captions, features, splits = _load_corpus(args.data)
    train_caps = [(i, c) for i, c in captions if splits.get(i) == "train"]
    val_caps = [(i, c) for i, c in captions if splits.get(i) == "val"]
    if not train_caps or not val_caps:
        raise VocabularyError("need non-empty train and val splits")
    vocab = data_mod.build_vocabulary(
        (c for _, c in train_caps), min_count=config.values["data.min_count"]
    )
    max_words = config.values["data.max_words"]

    def to_records(pairs):
        return [
            CaptionRecord(i, encode_caption(vocab, c, max_words)) for i, c in pairs
        ]

    model_config = config.model_config(len(vocab), features.dim)
    model = CaptionerModel(model_config, seed=config.values["model.seed"])
    os.makedirs(args.out, exist_ok=True)
    config.echo(os.path.join(args.out, "config.txt"))
    vocab.save(os.path.join(args.out, "vocab.tsv"))
    report = train(
        model,
        vocab,
        to_records(train_caps),
        to_records(val_caps),
        features,
        config.train_config(),
        out_dir=args.out,
    )
    last = report.epochs[-1]
    print(f"trained {len(report.epochs)} epochs; final loss/token {last.train_loss:.4f}")
    print(f"best val CIDEr {report.best_cider:.4f} at epoch {report.best_epoch}")
    print(f"report: {os.path.join(args.out, 'report.tsv')}")
    print(f"checkpoint: {os.path.join(args.out, 'checkpoint_best')}")
    return 0


def cmd_caption(args) -> int:
    if args.beam < 1:
        raise UsageError(f"--beam must be >= 1, got {args.beam}")
    if args.max_len < 0:
        raise UsageError(f"--max-len must be >= 0, got {args.max_len}")
    model, vocab = load_checkpoint(args.ckpt)
    features = data_mod.load_features(args.features)
    if features.dim != model.config.feature_dim:
        raise DimensionError(
            f"feature file dimension {features.dim} does not match the "
            f"checkpoint's feature_dim {model.config.feature_dim}"
        )
    lines = []
    for image_id in features.ids():
        hyps = decoding.beam_search(
            model, features.get(image_id), k=args.beam, max_len=args.max_len
        )
        best = hyps[0]
        text = data_mod.decode_caption(vocab, best.tokens)
        lines.append(f"{image_id}\t{text}\t{best.logp!r}")
    body = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(body)
        print(f"wrote {len(lines)} captions to {args.out}")
    else:
        sys.stdout.write(body)
    return 0


def cmd_eval(args) -> int:
    hyp_pairs = data_mod.load_hypotheses(args.hyp)
    ref_pairs = data_mod.load_captions(args.ref)
    hyps: dict[str, str] = {}
    for image_id, caption in hyp_pairs:
        if image_id in hyps:
            raise ParseError(f"duplicate hypothesis for image {image_id!r}", args.hyp)
        hyps[image_id] = caption
    refs: dict[str, list[str]] = {}
    for image_id, caption in ref_pairs:
        refs.setdefault(image_id, []).append(caption)
    missing = [i for i in hyps if i not in refs]
    if missing:
        raise ParseError(
            f"no references for image ids: {', '.join(sorted(missing)[:5])}", args.ref
        )
    candidates = list(hyps.values())
    reference_sets = [refs[i] for i in hyps]
    report = metrics.evaluation_report(candidates, reference_sets)
    body = "".join(f"{name}\t{value!r}\n" for name, value in report.items())
    sys.stdout.write(body)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.tsv"), "w", encoding="utf-8") as fh:
            fh.write(body)
        from .figures import save_metric_bars

        save_metric_bars(report, os.path.join(args.out, "metrics.png"))
        print(f"wrote {os.path.join(args.out, 'metrics.tsv')}")
    return 0


def cmd_gradcheck(args) -> int:
    config = RunConfig.defaults()
    for key, value in GRADCHECK_PROFILE:
        config.set(key, value)
    if args.config:
        config.apply_file(args.config)
    config.apply_overrides(args.overrides)
    if args.vocab_size < 4:
        raise UsageError("--vocab-size must be >= 4")
    model_config = config.model_config(args.vocab_size, args.feature_dim)
    model = CaptionerModel(model_config, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    # Interior length window-1 exercises all three padding regimes.
    interior = max(model_config.langcnn.window - 1, 1)
    tokens = (
        [data_mod.START]
        + [int(t) for t in rng.integers(3, args.vocab_size, size=interior)]
        + [data_mod.END]
    )
    record = CaptionRecord("gradcheck", tokens)
    features = rng.uniform(-1.0, 1.0, size=args.feature_dim)
    errors = gradcheck.check_model(model, record, features)
    worst = 0.0
    for name in sorted(errors):
        print(f"{name}\t{errors[name]:.3e}")
        worst = max(worst, errors[name])
    print(f"max\t{worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        print(
            f"FAIL: max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE:.0e}",
            file=sys.stderr,
        )
        return EXIT_NUMERIC
    print(f"OK: max relative error below {GRADCHECK_TOLERANCE:.0e}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "synth": cmd_synth,
        "train": cmd_train,
        "caption": cmd_caption,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, VocabularyError, MissingFeatureError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if exc.best_checkpoint:
            print(f"last good checkpoint: {exc.best_checkpoint}", file=sys.stderr)
        return EXIT_NUMERIC
    except GradientError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LangCnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
