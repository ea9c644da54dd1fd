"""Sentence-similarity fine-tuning: regress the cosine of mean-pooled
sentence embeddings onto gold similarity scores in [0, 1]."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredPair:
    s1: str
    s2: str
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


def load_scored_pairs(path: str | Path) -> list[ScoredPair]:
    """TSV lines: sentence1<TAB>sentence2<TAB>score."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected s1<TAB>s2<TAB>score")
            pairs.append(ScoredPair(parts[0], parts[1], float(parts[2])))
    return pairs


def _mean_pool(states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    expanded = mask.unsqueeze(-1).to(states.dtype)
    return (states * expanded).sum(dim=1) / expanded.sum(dim=1).clamp(min=1e-9)


def _encode(model, tokenizer, sentences: Sequence[str], train: bool) -> torch.Tensor:
    enc = tokenizer(
        list(sentences), padding=True, truncation=True, return_tensors="pt"
    )
    if train:
        out = model(**enc)
    else:
        with torch.no_grad():
            out = model(**enc)
    return _mean_pool(out.last_hidden_state, enc["attention_mask"])


def dev_spearman(model, tokenizer, pairs: Sequence[ScoredPair], batch_size: int = 32) -> float:
    """Spearman between pooled-cosine predictions and gold scores.

    Cosines are evaluated in float64: untuned encoders are highly anisotropic
    and float32 would collapse near-identical similarities to exact ties.
    """
    model.eval()
    sims = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        u = _encode(model, tokenizer, [p.s1 for p in chunk], train=False)
        v = _encode(model, tokenizer, [p.s2 for p in chunk], train=False)
        sims.extend(torch.cosine_similarity(u.double(), v.double()).tolist())
    gold = [p.score for p in pairs]
    return _spearman(sims, gold)


def _spearman(x: Sequence[float], y: Sequence[float]) -> float:
    def ranks(values):
        arr = np.asarray(values, dtype=float)
        order = np.argsort(arr, kind="stable")
        out = np.empty(len(arr))
        i = 0
        while i < len(arr):
            j = i
            while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
                j += 1
            out[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return out

    rx, ry = ranks(x), ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise ValueError("constant inputs")
    return float(dx @ dy) / denom


def finetune_sts(
    model_id: str,
    train_pairs: Sequence[ScoredPair],
    dev_pairs: Sequence[ScoredPair],
    output_dir: str | Path,
    batch_size: int = 8,
    learning_rate: float = 2e-5,
    epochs: int = 1,
    seed: int = 0,
) -> dict:
    """Fine-tune with MSE between pooled cosine and gold score; save the
    checkpoint and return the dev Spearman before and after."""
    from transformers import AutoModel, AutoTokenizer

    torch.manual_seed(seed)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id)

    before = dev_spearman(model, tokenizer, dev_pairs)
    optimizer = torch.optim.AdamW(model.parameters(), lr=learning_rate)
    losses: list[float] = []
    for epoch in range(epochs):
        model.train()
        for start in range(0, len(train_pairs), batch_size):
            chunk = train_pairs[start : start + batch_size]
            u = _encode(model, tokenizer, [p.s1 for p in chunk], train=True)
            v = _encode(model, tokenizer, [p.s2 for p in chunk], train=True)
            target = torch.tensor([p.score for p in chunk], dtype=u.dtype)
            loss = torch.nn.functional.mse_loss(torch.cosine_similarity(u, v), target)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss trace {losses[-20:]}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
    after = dev_spearman(model, tokenizer, dev_pairs)

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    logger.info("dev spearman %.4f -> %.4f", before, after)
    return {
        "dev_spearman_before": before,
        "dev_spearman_after": after,
        "final_loss": losses[-1] if losses else None,
        "steps": len(losses),
    }
