"""Frozen-checkpoint extraction of per-layer word and sentence vectors.

Word vectors are the mean over a word's subword states (whitespace tokens,
aligned via the tokenizer's word ids); sentence vectors are either the CLS
position or the attention-masked mean over the sequence. One container is
written per (layer, kind). Extraction runs in eval mode with no gradients,
so identical jobs produce byte-identical containers.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .container import write_csem

logger = logging.getLogger(__name__)

POOLINGS = ("word", "sentence_cls", "sentence_mean")


@dataclass
class ExtractionJob:
    model_id: str  # checkpoint path or hub id
    layers: Sequence[int]
    kinds: Sequence[str]
    corpus_path: str
    output_dir: str
    corpus_field: str | None = None  # JSONL field; None means plain text lines
    batch_size: int = 16
    model_label: str | None = None  # name recorded in container headers

    def __post_init__(self) -> None:
        for kind in self.kinds:
            if kind not in POOLINGS:
                raise ValueError(f"unknown pooling kind {kind!r}")
        if not self.layers:
            raise ValueError("need at least one layer")


def load_corpus(path: str | Path, field: str | None = None) -> list[tuple[str, str]]:
    """(id, sentence) pairs. Plain text uses 0-based line indices as ids;
    JSONL uses the record's id and the named field."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if field is None:
                pairs.append((str(lineno), line))
            else:
                obj = json.loads(line)
                pairs.append((str(obj["id"]), obj[field]))
    return pairs


def extract(job: ExtractionJob) -> list[Path]:
    """Run the job; returns the written container paths, one per (layer, kind)."""
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(job.model_id)
    model = AutoModel.from_pretrained(job.model_id)
    model.eval()
    n_layers = model.config.num_hidden_layers
    for layer in job.layers:
        if not (0 <= layer <= n_layers):
            raise ValueError(f"layer {layer} outside the model depth 0..{n_layers}")

    sentences = load_corpus(job.corpus_path, job.corpus_field)
    label = job.model_label or job.model_id
    # {(layer, kind): {id: matrix}}
    collected: dict[tuple[int, str], dict[str, np.ndarray]] = {
        (layer, kind): {} for layer in job.layers for kind in job.kinds
    }
    skipped: list[str] = []

    for start in range(0, len(sentences), job.batch_size):
        batch = sentences[start : start + job.batch_size]
        token_lists = [text.split() for _, text in batch]
        enc = tokenizer(
            token_lists,
            is_split_into_words=True,
            padding=True,
            truncation=True,
            return_tensors="pt",
        )
        with torch.no_grad():
            out = model(**enc, output_hidden_states=True)
        hidden = out.hidden_states  # (n_layers + 1) x (batch, seq, dim)
        for pos, (sid, _) in enumerate(batch):
            word_ids = enc.word_ids(pos)
            n_words = len(token_lists[pos])
            groups: dict[int, list[int]] = {}
            for tok_pos, wid in enumerate(word_ids):
                if wid is not None:
                    groups.setdefault(wid, []).append(tok_pos)
            if "word" in job.kinds and len(groups) != n_words:
                # truncation or tokenizer dropped a word: no 1:1 alignment
                missing = sorted(set(range(n_words)) - set(groups))
                logger.warning("sentence %s skipped: no subwords for words %s", sid, missing)
                skipped.append(sid)
                continue
            mask = enc["attention_mask"][pos].bool()
            for layer in job.layers:
                states = hidden[layer][pos]  # (seq, dim)
                for kind in job.kinds:
                    if kind == "word":
                        rows = [
                            states[idx_list].mean(dim=0) for _, idx_list in sorted(groups.items())
                        ]
                        mat = torch.stack(rows)
                    elif kind == "sentence_cls":
                        mat = states[0:1]
                    else:  # sentence_mean over non-padding positions
                        mat = states[mask].mean(dim=0, keepdim=True)
                    collected[(layer, kind)][sid] = mat.numpy().astype(np.float32)

    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    dim = model.config.hidden_size
    safe_label = label.replace("/", "-")
    for (layer, kind), records in sorted(collected.items()):
        path = out_dir / f"{safe_label}_l{layer}_{kind}.csem"
        write_csem(path, model=label, layer=layer, kind=kind, dim=dim, records=records)
        written.append(path)
    if skipped:
        logger.warning("skipped %d sentences with alignment failures", len(skipped))
    return written
