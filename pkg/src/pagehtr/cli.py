"""Command-line entry points: gendata, train, predict, eval.

Exit codes: 0 success, 1 usage or config error, 2 runtime error,
3 partial failure (some inputs failed, the rest were processed).
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .data import IMAGE_SUFFIXES, escape_field, read_dataset, read_image, write_dataset
from .errors import ConfigError, NonFiniteLoss, PageHTRError
from .metrics import RULES, EvalReport, normalize_for_comparison
from .model import PageModel
from .synth.corpus import load_corpus, split_corpus
from .synth.sources import SampleStream, fit_to_canvas
from .trainer import TrainConfig, place_on_canvas, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("pagehtr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pagehtr", description="Full-page text recognition: data, training, inference.")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gendata", help="write a synthetic dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("png", "pgm"), default="png")

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)

    r = sub.add_parser("predict", help="transcribe images")
    r.add_argument("--ckpt", required=True)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--dir")
    r.add_argument("--normalize", action="store_true", help="apply comparison normalization")
    r.add_argument("--sidecar", action="store_true", help="write <image>.pred.txt instead of stdout")

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--normalize", action="store_true")
    e.add_argument("--report", required=True)
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed),
                      train=replace(cfg.train, seed=args.seed))
    return cfg


def corpus_splits(cfg: RunConfig):
    return split_corpus(load_corpus(cfg.data.corpus_path), cfg.run.holdout)


def length_histogram(lengths, edges=(0, 1, 25, 50, 100, 200, 400, 800)) -> list[tuple[str, int]]:
    out = []
    for lo, hi in zip(edges, list(edges[1:]) + [None]):
        n = sum(1 for x in lengths if x >= lo and (hi is None or x < hi))
        out.append((f"{lo}+" if hi is None else f"{lo}-{hi - 1}", n))
    return out


def cmd_gendata(args) -> int:
    cfg = _load(args)
    if args.count < 0:
        raise ConfigError("--count must be >= 0")
    out = Path(args.out)
    train_text, _ = corpus_splits(cfg)
    stream = SampleStream(cfg.data, seed=cfg.run.seed, corpus=train_text)
    samples = [next(stream) for _ in range(args.count)]
    try:
        write_dataset(samples, out, fmt=args.format)
    except OSError as e:
        raise ConfigError(f"cannot write dataset to {out}: {e}") from None
    mix = Counter(s.meta.get("layout", "?") for s in samples)
    print(f"wrote {len(samples)} samples to {out}")
    print("layouts: " + (", ".join(f"{k}={v}" for k, v in sorted(mix.items())) or "none"))
    print("transcript lengths:")
    for label, n in length_histogram([len(s.transcript) for s in samples]):
        print(f"  {label:>9}  {n}")
    return EXIT_OK


def _dataset_stream(samples, canvas, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    while True:
        for k in rng.permutation(len(samples)):
            yield fit_to_canvas(samples[k], canvas)


def make_streams(cfg: RunConfig):
    """Training stream and validation set for a run config."""
    canvas = cfg.train.canvas
    train_text = val_text = None
    if cfg.run.train_data is None or cfg.run.val_data is None:
        train_text, val_text = corpus_splits(cfg)
    if cfg.run.train_data is not None:
        data = read_dataset(cfg.run.train_data)
        if not data:
            raise ConfigError(f"no usable samples in {cfg.run.train_data}")
        stream = _dataset_stream(data, canvas, cfg.run.seed)
    else:
        stream = SampleStream(cfg.data, seed=cfg.run.seed, corpus=train_text)
    if cfg.run.val_data is not None:
        val = [fit_to_canvas(s, canvas) for s in read_dataset(cfg.run.val_data)]
    else:
        # validation always reads contiguous held-out prose, whatever the training text mode
        gen = replace(cfg.data, text_mode="spans")
        val = SampleStream(gen, seed=cfg.run.val_seed, corpus=val_text).take(cfg.run.val_count)
    if not val:
        raise ConfigError("validation set is empty")
    return stream, val


def cmd_train(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    stream, val = make_streams(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        logfile = open(out / "train.log", "a", encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write to {out}: {e}") from None
    model = PageModel(cfg.model, seed=cfg.run.seed)
    if cfg.run.init_from is not None:
        try:
            load_checkpoint(cfg.run.init_from).load_into(model)
        except (OSError, PageHTRError, ValueError) as e:
            raise ConfigError(f"cannot initialize from {cfg.run.init_from}: {e}") from None

    def emit(line):
        print(line, flush=True)
        logfile.write(line + "\n")
        logfile.flush()

    emit(f"# params={model.num_parameters()} canvas={cfg.train.canvas} steps={cfg.train.steps}")
    try:
        best = train(model, cfg.train, stream, val, out, emit, cfg.to_text())
    except NonFiniteLoss as e:
        emit(f"# aborted: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        logfile.close()
    print(f"best step={best.step} val_cer={best.val_score:.6f} -> {out / 'best.ckpt'}")
    return EXIT_OK


def canvas_of(ckpt) -> tuple:
    """Training canvas recorded in the checkpoint's config snapshot."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(ckpt.config_text or "")
        raw = cp.get("train", "canvas", fallback=None)
    except configparser.Error:
        raw = None
    if raw is None:
        return TrainConfig().canvas
    return tuple(int(x) for x in raw.split(","))


def decode_images(model, images, canvas, batch_size=8, max_len=None):
    """Greedy transcripts for images (each centered on ``canvas``), in input order."""
    preds = []
    for s in range(0, len(images), batch_size):
        chunk = [place_on_canvas(np.asarray(im, dtype=np.float32), canvas, "eval")[0]
                 for im in images[s:s + batch_size]]
        texts, _ = model.predict(np.stack(chunk), max_len=max_len)
        preds += texts
    return preds


def _load_model(path):
    try:
        ckpt = load_checkpoint(path)
    except (OSError, PageHTRError, ValueError) as e:
        raise ConfigError(f"cannot load checkpoint {path}: {e}") from None
    return ckpt.build_model(), canvas_of(ckpt)


def cmd_predict(args) -> int:
    model, canvas = _load_model(args.ckpt)
    if args.image:
        paths = [Path(args.image)]
    else:
        d = Path(args.dir)
        if not d.is_dir():
            raise ConfigError(f"{d} is not a directory")
        paths = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    failed = 0
    for p in paths:
        try:
            img = read_image(p)
            if img.shape[0] > canvas[0] or img.shape[1] > canvas[1]:
                raise PageHTRError(f"image {img.shape[0]}x{img.shape[1]} exceeds canvas {canvas}")
            text = decode_images(model, [img], canvas)[0]
        except (OSError, PageHTRError, ValueError) as e:
            print(f"error: {p}: {e}", file=sys.stderr)
            failed += 1
            continue
        if args.normalize:
            text = normalize_for_comparison(text, RULES)
        if args.sidecar:
            p.with_name(p.stem + ".pred.txt").write_text(text, encoding="utf-8", newline="")
        elif args.image:
            sys.stdout.write(text + "\n")
        else:
            sys.stdout.write(f"{p.name}\t{escape_field(text)}\n")
    sys.stdout.flush()
    if failed:
        return EXIT_PARTIAL if failed < len(paths) else EXIT_RUNTIME
    return EXIT_OK


def cmd_eval(args) -> int:
    model, canvas = _load_model(args.ckpt)
    d = Path(args.data)
    if not d.is_dir():
        raise ConfigError(f"{d} is not a dataset directory")
    samples = []
    for s in read_dataset(d):
        h, w = s.image.shape
        if h > canvas[0] or w > canvas[1]:
            log.warning("skipping %s: image %dx%d exceeds canvas %s", s.meta["file"], h, w, canvas)
            continue
        samples.append(s)
    preds = decode_images(model, [s.image for s in samples], canvas)
    report = EvalReport.from_pairs([s.meta["file"] for s in samples], preds,
                                   [s.transcript for s in samples],
                                   rules=RULES if args.normalize else None)
    report.save(args.report)
    print(f"samples={len(report.samples)} mean_cer={report.mean_cer:.6f} "
          f"corpus_cer={report.corpus_cer:.6f} empty_gt={len(report.empty_gt)}")
    return EXIT_OK


COMMANDS = {"gendata": cmd_gendata, "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PageHTRError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
