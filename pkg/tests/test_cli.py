import io
import sys

import pytest

from myanner import cli, serialize
from myanner.corpus import evaluate, format_conll, generate_synthetic_corpus, read_conll, write_conll
from myanner.syllable import segment
from myanner.train import history_csv

SMALL_CONFIG = "max_epochs=2\npatience=2\nd_syl=8\nd_char=6\nn_filters=6\nhidden_total=8\n"


class _Std:
    def __init__(self, data=b""):
        self.buffer = io.BytesIO(data)


def run(argv, monkeypatch, stdin=b""):
    out = _Std()
    monkeypatch.setattr(sys, "stdin", _Std(stdin))
    monkeypatch.setattr(sys, "stdout", io.TextIOWrapper(out.buffer, encoding="utf-8", write_through=True))
    code = cli.main(argv)
    sys.stdout.flush()
    return code, out.buffer.getvalue().decode("utf-8")


@pytest.fixture
def corpus_files(tmp_path):
    train, dev = tmp_path / "train.conll", tmp_path / "dev.conll"
    write_conll(generate_synthetic_corpus(1, 40), train)
    write_conll(generate_synthetic_corpus(2, 10), dev)
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(SMALL_CONFIG)
    return tmp_path, train, dev, cfg


def test_segment_rain_sentence_and_pipes(monkeypatch):
    code, out = run(["segment"], monkeypatch, "ရန်ကုန်တွင်မိုးမရွာပါ။\nနိုင်ငံ\n".encode())
    assert code == 0
    assert out == "ရန် ကုန် တွင် မိုး မ ရွာ ပါ ။\nနိုင် ငံ\n"
    code, out = run(["segment", "-", "-"], monkeypatch, b"")
    assert code == 0 and out == ""


def test_segment_files_and_errors(tmp_path, monkeypatch, capsys):
    src, dst = tmp_path / "in.txt", tmp_path / "out.txt"
    src.write_bytes(b"")
    assert run(["segment", str(src), str(dst)], monkeypatch)[0] == 0
    assert dst.read_bytes() == b""
    src.write_bytes("ကာ\n".encode() + b"ab\xffcd\n")  # 0xff sits at byte 9
    code, _ = run(["segment", str(src), str(dst)], monkeypatch)
    assert code == 2
    assert "byte offset 9" in capsys.readouterr().err
    src.write_text("ကာ ာ\n")
    assert run(["segment", "--strict", str(src), str(dst)], monkeypatch)[0] == 2
    assert run(["segment", str(src), str(dst)], monkeypatch)[0] == 0


def test_usage_errors_exit_1(monkeypatch):
    assert run([], monkeypatch)[0] == 1
    assert run(["frobnicate"], monkeypatch)[0] == 1
    assert run(["convert", "--from", "IOB2"], monkeypatch)[0] == 1
    assert run(["synth", "--seed", "x", "--n", "3", "--out", "-"], monkeypatch)[0] == 1


def test_synth_deterministic(monkeypatch):
    a = run(["synth", "--seed", "4", "--n", "5", "--out", "-"], monkeypatch)
    b = run(["synth", "--seed", "4", "--n", "5", "--out", "-"], monkeypatch)
    assert a == b and a[0] == 0
    assert a[1] == format_conll(generate_synthetic_corpus(4, 5))


def test_convert_round_trip(tmp_path, monkeypatch):
    src, mid, back = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    write_conll(generate_synthetic_corpus(3, 10), src)
    assert run(["convert", "--from", "IOBES", "--to", "IOB2", str(src), str(mid)], monkeypatch)[0] == 0
    assert "E-" not in mid.read_text() and "S-" not in mid.read_text()
    assert run(["convert", "--from", "IOB2", "--to", "IOBES", str(mid), str(back)], monkeypatch)[0] == 0
    assert back.read_bytes() == src.read_bytes()
    bad = tmp_path / "bad"
    bad.write_text("a\tB-LOC\nb\tO\n")
    assert run(["convert", "--from", "IOBES", "--to", "IOB2", str(bad), str(mid)], monkeypatch)[0] == 2


def test_eval_tables(tmp_path, monkeypatch):
    g = tmp_path / "g"
    write_conll(generate_synthetic_corpus(3, 10), g)
    code, out = run(["eval", str(g), str(g)], monkeypatch)
    assert code == 0
    rows = out.splitlines()
    assert rows[0] == "TYPE\tP\tR\tF1"
    assert all(r.endswith("100.00\t100.00\t100.00") for r in rows[1:])
    gold, pred = tmp_path / "g2", tmp_path / "p2"
    gold.write_text("a\tB-LOC\nb\tE-LOC\nc\tO\nd\tS-NUM\n")
    pred.write_text("a\tB-LOC\nb\tE-LOC\nc\tS-NUM\nd\tO\n")
    code, out = run(["eval", str(gold), str(pred), "--macro"], monkeypatch)
    assert "micro\t50.00\t50.00\t50.00" in out and out.splitlines()[-1].startswith("macro")
    other = tmp_path / "o"
    other.write_text("zz\tO\n")
    assert run(["eval", str(gold), str(other)], monkeypatch)[0] == 2


def test_train_tag_eval_end_to_end(corpus_files, monkeypatch, capsys):
    tmp, train, dev, cfg = corpus_files
    model = tmp / "m.myner"
    code, out = run(["train", "--config", str(cfg), "--train", str(train), "--dev", str(dev), "--out", str(model)],
                    monkeypatch)
    assert code == 0
    assert out.startswith("dev P=") and "F=" in out
    hist = (tmp / "m.history.csv").read_text().splitlines()
    assert hist[0] == "epoch,loss,dev_p,dev_r,dev_f,lr" and len(hist) == 3

    pred = tmp / "pred.conll"
    assert run(["tag", "--model", str(model), "--pre-segmented", str(dev), str(pred)], monkeypatch)[0] == 0
    m = serialize.load_model(model)
    gold = read_conll(dev)
    lib = evaluate(gold, m.predict_batch([s.tokens for s in gold]))
    code, out = run(["eval", str(dev), str(pred)], monkeypatch)
    assert out == lib.format_table()

    raw = tmp / "raw.txt"
    raw.write_text("".join("".join(s.tokens) + "\n" for s in gold[:5]) + "\n")
    pred_raw = tmp / "pred_raw.conll"
    assert run(["tag", "--model", str(model), str(raw), str(pred_raw)], monkeypatch)[0] == 0
    assert "empty sentence skipped" in capsys.readouterr().err
    agree = [s for s in gold[:5] if segment("".join(s.tokens)) == s.tokens]
    got = read_conll(pred_raw)
    assert len(got) == 5
    by_tokens = {tuple(s.tokens): s.labels for s in read_conll(pred)}
    for s in agree:
        assert by_tokens[tuple(s.tokens)] == next(g.labels for g in got if g.tokens == s.tokens)


def test_train_errors(corpus_files, monkeypatch, capsys):
    tmp, train, dev, cfg = corpus_files
    out = str(tmp / "m")
    assert run(["train", "--train", str(tmp / "missing"), "--dev", str(dev), "--out", out], monkeypatch)[0] == 2
    cfg.write_text("max_epoch=3\n")
    assert run(["train", "--config", str(cfg), "--train", str(train), "--dev", str(dev), "--out", out],
               monkeypatch)[0] == 2
    assert "max_epoch" in capsys.readouterr().err
    bad = tmp / "bad.conll"
    bad.write_text("a\tO\tO\n")
    assert run(["train", "--train", str(bad), "--dev", str(dev), "--out", out], monkeypatch)[0] == 2


def test_seed_environment_override(corpus_files, monkeypatch):
    tmp, train, dev, cfg = corpus_files
    args = ["train", "--config", str(cfg), "--train", str(train), "--dev", str(dev)]
    histories = []
    for name, seed in (("a", "1"), ("b", "1"), ("c", "2")):
        monkeypatch.setenv(cli.SEED_ENV, seed)
        assert run(args + ["--out", str(tmp / f"{name}.myner")], monkeypatch)[0] == 0
        histories.append((tmp / f"{name}.history.csv").read_bytes())
    assert histories[0] == histories[1] != histories[2]
    assert (tmp / "a.myner").read_bytes() == (tmp / "b.myner").read_bytes()


def test_tag_rejects_corrupt_model(corpus_files, monkeypatch):
    tmp, _, dev, _ = corpus_files
    bad = tmp / "bad.myner"
    bad.write_bytes(b"MYNER\x01\x00garbage")
    assert run(["tag", "--model", str(bad), "--pre-segmented", str(dev), "-"], monkeypatch)[0] == 2
    assert history_csv([]) == "epoch,loss,dev_p,dev_r,dev_f,lr\n"
