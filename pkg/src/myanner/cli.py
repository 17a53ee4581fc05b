"""``myanner`` command line: segment, convert, train, tag, eval, synth.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.  File
arguments accept ``-`` for stdin/stdout; all I/O is UTF-8.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from . import corpus, serialize, syllable, train
from .corpus import LabeledSentence
from .model import NeuralTagger, TaggerConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SEED_ENV = "MYANNER_SEED"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------------------------
# I/O helpers


@contextlib.contextmanager
def _open_in(path: str) -> Iterator[IO[bytes]]:
    if path == "-":
        yield sys.stdin.buffer
        return
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        yield fh


@contextlib.contextmanager
def _open_out(path: str) -> Iterator[IO[bytes]]:
    if path == "-":
        yield sys.stdout.buffer
        sys.stdout.buffer.flush()
        return
    try:
        fh = open(path, "wb")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None
    with fh:
        yield fh


def _decode(data: bytes, name: str, base: int = 0) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{name}: invalid UTF-8 at byte offset {base + exc.start}") from None


def _read_text(path: str) -> str:
    with _open_in(path) as fh:
        return _decode(fh.read(), path)


def _read_conll(path: str) -> list[LabeledSentence]:
    return corpus.parse_conll(_read_text(path))


def _lines(path: str) -> Iterator[tuple[int, str]]:
    """Decoded lines (without terminator) with 1-based numbers, streamed."""
    offset = 0
    with _open_in(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = _decode(raw, path, offset)
            offset += len(raw)
            if lineno == 1 and text.startswith("\ufeff"):
                text = text[1:]
            yield lineno, text.rstrip("\r\n")


def _read_token_blocks(path: str) -> list[list[str]]:
    """CoNLL input whose label column is optional."""
    blocks, cur = [], []
    for lineno, line in _lines(path):
        if not line.strip():
            if cur:
                blocks.append(cur)
                cur = []
            continue
        fields = line.split("\t")
        if len(fields) > 2 or not fields[0]:
            raise corpus.ConllFormatError(lineno, f"expected 'SURFACE[<TAB>LABEL]', got {len(fields)} field(s)")
        cur.append(fields[0])
    if cur:
        blocks.append(cur)
    return blocks


# ----------------------------------------------------------------------------
# commands


def cmd_segment(args) -> int:
    with _open_out(args.output) as out:
        for lineno, line in _lines(args.input):
            try:
                tokens = syllable.segment(line, strict=args.strict)
            except syllable.IllFormedTextError as exc:
                v = exc.violations[0]
                raise DataError(f"line {lineno}, offset {v.offset}: {v.message}") from None
            out.write((" ".join(tokens) + "\n").encode("utf-8"))
    return EXIT_OK


def cmd_convert(args) -> int:
    sentences = _read_conll(args.input)
    converted = []
    for k, s in enumerate(sentences, start=1):
        try:
            converted.append(LabeledSentence(s.tokens, corpus.convert_scheme(s.labels, args.src, args.dst)))
        except corpus.LabelError as exc:
            raise DataError(f"sentence {k}: {exc}") from None
    with _open_out(args.output) as out:
        corpus.write_conll(converted, out)
    return EXIT_OK


def _load_config(path: str | None) -> tuple[train.TrainConfig, TaggerConfig]:
    text = _read_text(path) if path else ""
    parts = train.parse_config(text, train.TrainConfig, TaggerConfig)
    tcfg = parts["TrainConfig"]
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            tcfg["seed"] = int(env)
        except ValueError:
            raise train.ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return train.TrainConfig(**tcfg), TaggerConfig(**parts["TaggerConfig"])


def history_path(model_path: str) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + ".history.csv")


def cmd_train(args) -> int:
    tcfg, mcfg = _load_config(args.config)
    tr, dev = _read_conll(args.train), _read_conll(args.dev)
    if not tr or not dev:
        raise DataError("training and development files must contain at least one sentence")
    alphabets = corpus.build_alphabets(tr)
    init_rng, loop_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(tcfg.seed).spawn(2))
    model = NeuralTagger(mcfg, alphabets, init_rng)
    if args.embeddings:
        with _open_in(args.embeddings) as fh:
            table, report = train.load_pretrained_embeddings(fh, alphabets.syllables, mcfg.d_syl, init_rng)
        model.syl_emb.data = table
        print(f"embeddings: {report.found} found, {report.missing} missing", file=sys.stderr)
    model, history = train.train_loop(tr, dev, model, tcfg, rng=loop_rng)
    serialize.save_model(model, args.out)
    with open(history_path(args.out), "w", encoding="utf-8", newline="") as fh:
        train.write_history(history, fh)
    best = max(history, key=lambda r: r.dev_f)
    print(f"dev P={100 * best.dev_p:.2f} R={100 * best.dev_r:.2f} F={100 * best.dev_f:.2f} (epoch {best.epoch})")
    return EXIT_OK


def cmd_tag(args) -> int:
    model = serialize.load_model(_read_model_bytes(args.model))
    if args.pre_segmented:
        token_lists = _read_token_blocks(args.input)
    else:
        token_lists = []
        for lineno, line in _lines(args.input):
            if not line.strip():
                print(f"myanner: warning: line {lineno}: empty sentence skipped", file=sys.stderr)
                continue
            token_lists.append(syllable.segment(line))
    preds = model.predict_batch(token_lists)
    with _open_out(args.output) as out:
        corpus.write_conll([LabeledSentence(t, p) for t, p in zip(token_lists, preds)], out)
    return EXIT_OK


def _read_model_bytes(path: str) -> bytes:
    with _open_in(path) as fh:
        return fh.read()


def cmd_eval(args) -> int:
    gold, pred = _read_conll(args.gold), _read_conll(args.pred)
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    for k, (g, p) in enumerate(zip(gold, pred), start=1):
        if g.tokens != p.tokens:
            raise DataError(f"sentence {k}: gold and predicted tokens differ")
    metrics = corpus.evaluate(gold, [p.labels for p in pred])
    sys.stdout.write(metrics.format_table(macro=args.macro))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError("synth: --n must be at least 1")
    with _open_out(args.out) as out:
        corpus.write_conll(corpus.generate_synthetic_corpus(args.seed, args.n), out)
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="myanner", description="Myanmar named entity recognition toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("segment", help="split raw text into syllables, one line per input line")
    s.add_argument("--strict", action="store_true", help="reject ill-formed text instead of repairing it")
    s.add_argument("input", nargs="?", default="-")
    s.add_argument("output", nargs="?", default="-")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("convert", help="convert CoNLL labels between IOB2 and IOBES")
    s.add_argument("--from", dest="src", required=True, choices=corpus.SCHEMES)
    s.add_argument("--to", dest="dst", required=True, choices=corpus.SCHEMES)
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("train", help="train a neural tagger")
    s.add_argument("--config", help="key=value file of training and model settings")
    s.add_argument("--train", required=True)
    s.add_argument("--dev", required=True)
    s.add_argument("--embeddings", help="pretrained syllable vectors in word2vec text format")
    s.add_argument("--out", required=True, help="model file; the history CSV is written beside it")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tag", help="label raw sentences (one per line) or pre-segmented CoNLL")
    s.add_argument("--model", required=True)
    s.add_argument("--pre-segmented", action="store_true")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_tag)

    s = sub.add_parser("eval", help="chunk-level precision, recall and F1")
    s.add_argument("gold")
    s.add_argument("pred")
    s.add_argument("--macro", action="store_true", help="also print the macro average")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="write a seeded synthetic IOBES corpus")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


_DATA_ERRORS = (DataError, ValueError, OSError, serialize.ModelFormatError)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.basicConfig(format="%(name)s: %(message)s", level=logging.INFO, stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except train.TrainingError as exc:
        print(f"myanner: training failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _DATA_ERRORS as exc:
        print(f"myanner: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
