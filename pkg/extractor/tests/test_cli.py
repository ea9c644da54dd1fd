import json

from csextract.cli import main
from csextract.container import read_csem


def test_cli_extract(tiny_model_dir, tmp_path, capsys):
    corpus = tmp_path / "c.txt"
    corpus.write_text("el gato duerme\nthe cat sleeps\n", encoding="utf-8")
    out = tmp_path / "emb"
    code = main(
        [
            "extract",
            "--model", tiny_model_dir,
            "--corpus", str(corpus),
            "--layers", "0,1",
            "--kinds", "word,sentence_mean",
            "--model-label", "tiny",
            "--out", str(out),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out.strip().split("\n")
    assert len(printed) == 4
    header, records = read_csem(out / "tiny_l1_word.csem")
    assert header["count"] == 2
    assert records["0"].shape == (3, 16)


def test_cli_finetune(tiny_model_dir, tmp_path, capsys):
    rows = []
    words = ["gato", "perro", "casa", "sol"]
    for i in range(12):
        a, b = words[i % 4], words[(i + 1) % 4]
        rows.append(f"{a} {a}\t{a} {a}\t1.0")
        rows.append(f"{a} {a}\t{b} {b}\t0.0")
    train = tmp_path / "train.tsv"
    train.write_text("\n".join(rows) + "\n", encoding="utf-8")
    out = tmp_path / "ckpt"
    code = main(
        [
            "finetune",
            "--model", tiny_model_dir,
            "--train", str(train),
            "--dev", str(train),
            "--learning-rate", "1e-3",
            "--epochs", "2",
            "--out", str(out),
        ]
    )
    assert code == 0
    metrics = json.loads((out / "finetune_metrics.json").read_text())
    assert metrics["steps"] > 0
    assert (out / "tokenizer.json").exists()
