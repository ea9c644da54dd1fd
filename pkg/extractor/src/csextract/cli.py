"""csextract command line: extract embedding containers or fine-tune on STS."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .extract import ExtractionJob, extract
from .finetune import finetune_sts, load_scored_pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csextract")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="write CSEM containers from a checkpoint")
    ex.add_argument("--model", required=True, help="checkpoint path or hub id")
    ex.add_argument("--corpus", required=True, help="text file (one sentence per line) or JSONL")
    ex.add_argument("--field", help="JSONL field holding the sentence (omit for plain text)")
    ex.add_argument("--layers", required=True, help="comma-separated layer indices")
    ex.add_argument(
        "--kinds",
        default="word",
        help="comma-separated poolings: word, sentence_cls, sentence_mean",
    )
    ex.add_argument("--out", required=True)
    ex.add_argument("--batch-size", type=int, default=16)
    ex.add_argument("--model-label", help="name recorded in container headers")

    ft = sub.add_parser("finetune", help="fine-tune a checkpoint on scored sentence pairs")
    ft.add_argument("--model", required=True)
    ft.add_argument("--train", required=True, help="TSV: s1<TAB>s2<TAB>score in [0,1]")
    ft.add_argument("--dev", required=True, help="TSV dev split for the Spearman check")
    ft.add_argument("--out", required=True)
    ft.add_argument("--batch-size", type=int, default=8)
    ft.add_argument("--learning-rate", type=float, default=2e-5)
    ft.add_argument("--epochs", type=int, default=1)
    ft.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "extract":
        job = ExtractionJob(
            model_id=args.model,
            layers=[int(x) for x in args.layers.split(",")],
            kinds=[x.strip() for x in args.kinds.split(",")],
            corpus_path=args.corpus,
            corpus_field=args.field,
            output_dir=args.out,
            batch_size=args.batch_size,
            model_label=args.model_label,
        )
        written = extract(job)
        for path in written:
            print(path)
        return 0
    if args.command == "finetune":
        metrics = finetune_sts(
            model_id=args.model,
            train_pairs=load_scored_pairs(args.train),
            dev_pairs=load_scored_pairs(args.dev),
            output_dir=args.out,
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            seed=args.seed,
        )
        (Path(args.out) / "finetune_metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(json.dumps(metrics, sort_keys=True))
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
