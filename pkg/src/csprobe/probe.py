"""Linear probe classifiers over frozen embeddings.

Covers single-probe training (softmax regression, adaptive-moment gradient
descent, early stopping on dev F1), F1 scoring, and the layer-by-layer sweep
protocols for sentence classification and token-level LID.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import LidSentence
from .embedstore import EmbeddingSet, read_container
from .stats import SeedAggregate, aggregate_seeds

Pair = tuple[np.ndarray, str]


@dataclass(frozen=True)
class ProbeTrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class ProbeModel:
    weights: np.ndarray  # (n_classes, dim)
    bias: np.ndarray  # (n_classes,)
    label_set: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.label_set:
            raise ValueError("label_set must be nonempty")
        if len(set(self.label_set)) != len(self.label_set):
            raise ValueError("label_set must be unique")
        if self.weights.shape[0] != len(self.label_set) or self.bias.shape != (
            len(self.label_set),
        ):
            raise ValueError("weights/bias shapes inconsistent with label_set")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def predict(model: ProbeModel, x: np.ndarray) -> tuple[str, np.ndarray]:
    """Class label (first-index tie-break) and probability vector for one input."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise ValueError(f"input shape {vec.shape} does not match probe dim {model.dim}")
    probs = softmax(model.weights @ vec + model.bias)
    return model.label_set[int(np.argmax(probs))], probs


def cross_entropy(model: ProbeModel, pairs: Sequence[Pair]) -> float:
    """Mean negative log-likelihood of the pairs under the model."""
    X, y = _stack(pairs, model.label_set, model.dim)
    logits = X @ model.weights.T + model.bias
    logp = logits - logits.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def per_class_f1(
    gold: Sequence[str], pred: Sequence[str]
) -> tuple[dict[str, float], dict[str, int]]:
    """Per-class F1 and gold supports over the union of observed classes."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    if not gold:
        raise ValueError("need at least one example")
    scores: dict[str, float] = {}
    support: dict[str, int] = {}
    for cls in sorted(set(gold) | set(pred)):
        tp = sum(1 for g, p in zip(gold, pred) if g == cls and p == cls)
        fp = sum(1 for g, p in zip(gold, pred) if g != cls and p == cls)
        fn = sum(1 for g, p in zip(gold, pred) if g == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores[cls] = (
            2 * precision * recall / (precision + recall) if precision + recall else 0.0
        )
        support[cls] = tp + fn
    return scores, support


def combine_f1(
    per_class: Mapping[str, float],
    support: Mapping[str, int],
    averaging: str = "macro",
    positive_label: str | None = None,
) -> float:
    """Combine per-class F1 values under the chosen averaging mode.

    Classes absent from both gold and pred never reach this function, so they
    contribute nothing in any mode.
    """
    if averaging == "binary":
        if positive_label is None:
            raise ValueError("binary averaging requires positive_label")
        return per_class.get(positive_label, 0.0)
    if averaging == "macro":
        return sum(per_class.values()) / len(per_class)
    if averaging == "weighted":
        total = sum(support.values())
        return sum(per_class[c] * support[c] for c in per_class) / total
    raise ValueError(f"unknown averaging mode {averaging!r}")


def f1_score(
    gold: Sequence[str],
    pred: Sequence[str],
    averaging: str = "macro",
    positive_label: str | None = None,
) -> float:
    """F1 with macro, weighted, or binary-positive averaging."""
    scores, support = per_class_f1(gold, pred)
    return combine_f1(scores, support, averaging, positive_label)


def _stack(
    pairs: Sequence[Pair], label_set: Sequence[str], dim: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise ValueError("empty example set")
    vecs = []
    labels = []
    index = {lab: i for i, lab in enumerate(label_set)}
    for vec, lab in pairs:
        arr = np.asarray(vec, dtype=np.float64).reshape(-1)
        if dim is not None and arr.shape[0] != dim:
            raise ValueError(f"vector dim {arr.shape[0]} does not match expected {dim}")
        if lab not in index:
            raise ValueError(f"label {lab!r} not in label set {tuple(label_set)}")
        vecs.append(arr)
        labels.append(index[lab])
    X = np.stack(vecs)
    if len({v.shape[0] for v in vecs}) != 1:
        raise ValueError("vectors must share one dimension")
    return X, np.asarray(labels, dtype=np.int64)


def train_probe(
    train: Sequence[Pair],
    dev: Sequence[Pair],
    cfg: ProbeTrainConfig,
    label_set: Sequence[str] | None = None,
    selection_averaging: str = "macro",
) -> ProbeModel:
    """Train a linear softmax probe; return the snapshot with best dev F1.

    Deterministic for a fixed seed: weights start at zero (the objective is
    convex) and only batch order is randomized.
    """
    if not train:
        raise ValueError("train set must be nonempty")
    labels = tuple(label_set) if label_set else tuple(sorted({lab for _, lab in train}))
    X, y = _stack(train, labels)
    dim = X.shape[1]
    if len(set(y.tolist())) == 1:
        warnings.warn(
            f"train set contains a single class {labels[int(y[0])]!r}; "
            "returning a degenerate constant predictor",
            stacklevel=2,
        )
        bias = np.zeros(len(labels))
        bias[int(y[0])] = 1.0
        return ProbeModel(weights=np.zeros((len(labels), dim)), bias=bias, label_set=labels)
    Xd, yd = _stack(dev, labels, dim)
    dev_gold = [labels[i] for i in yd]

    rng = np.random.default_rng(cfg.seed)
    n_classes = len(labels)
    W = np.zeros((n_classes, dim))
    b = np.zeros(n_classes)
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    def dev_f1() -> float:
        logits = Xd @ W.T + b
        pred = [labels[i] for i in logits.argmax(axis=1)]
        return f1_score(dev_gold, pred, averaging=selection_averaging,
                        positive_label=labels[-1] if selection_averaging == "binary" else None)

    best = dev_f1()
    best_W, best_b = W.copy(), b.copy()
    stale = 0
    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            probs = softmax(Xb @ W.T + b)
            probs[np.arange(len(yb)), yb] -= 1.0
            probs /= len(yb)
            gW = probs.T @ Xb
            gb = probs.sum(axis=0)
            step += 1
            mW = beta1 * mW + (1 - beta1) * gW
            vW = beta2 * vW + (1 - beta2) * gW * gW
            mb = beta1 * mb + (1 - beta1) * gb
            vb = beta2 * vb + (1 - beta2) * gb * gb
            corr1 = 1 - beta1**step
            corr2 = 1 - beta2**step
            W = W - cfg.learning_rate * (mW / corr1) / (np.sqrt(vW / corr2) + eps)
            b = b - cfg.learning_rate * (mb / corr1) / (np.sqrt(vb / corr2) + eps)
        score = dev_f1()
        if score > best:
            best = score
            best_W, best_b = W.copy(), b.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return ProbeModel(weights=best_W, bias=best_b, label_set=labels)


def split_dataset(
    ids: Sequence[str], seed: int, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
) -> tuple[list[str], list[str], list[str]]:
    """Deterministic 80-10-10 split by seeded shuffle of the sorted ids."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    ordered = sorted(ids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n = len(shuffled)
    n_train = int(n * fractions[0])
    n_dev = int(n * fractions[1])
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev :],
    )


@dataclass(frozen=True)
class SweepRow:
    model: str
    layer: int
    pooling: str
    seed: int
    split: str
    f1_macro: float
    f1_weighted: float


@dataclass
class LayerSweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def summary(self) -> dict[tuple[str, int, str], dict[str, SeedAggregate]]:
        cells: dict[tuple[str, int, str], dict[str, list[float]]] = {}
        for row in self.rows:
            key = (row.model, row.layer, row.pooling)
            cell = cells.setdefault(key, {"f1_macro": [], "f1_weighted": []})
            cell["f1_macro"].append(row.f1_macro)
            cell["f1_weighted"].append(row.f1_weighted)
        return {
            key: {metric: aggregate_seeds(vals) for metric, vals in cell.items()}
            for key, cell in cells.items()
        }


def sweep_to_csv(result: LayerSweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "layer", "pooling", "seed", "split", "f1_macro", "f1_weighted"])
    for row in sorted(
        result.rows, key=lambda r: (r.model, r.layer, r.pooling, r.seed, r.split)
    ):
        writer.writerow(
            [row.model, row.layer, row.pooling, row.seed, row.split,
             f"{row.f1_macro:.6f}", f"{row.f1_weighted:.6f}"]
        )
    return buf.getvalue()


def sweep_summary(result: LayerSweepResult) -> dict:
    out: dict = {"cells": [], "skipped": sorted(result.skipped)}
    for (model, layer, pooling), metrics in sorted(result.summary().items()):
        entry: dict = {"model": model, "layer": layer, "pooling": pooling}
        for metric, agg in metrics.items():
            entry[metric] = {
                "mean": agg.mean,
                "std": agg.std,  # population std over seeds
                "min": agg.min,
                "max": agg.max,
            }
        out["cells"].append(entry)
    return out


def _load_containers(paths: Sequence[str | Path], skipped: list[str]) -> list[EmbeddingSet]:
    sets = []
    for path in paths:
        p = Path(path)
        if not p.exists():
            warnings.warn(f"embedding container missing, skipped: {p}", stacklevel=3)
            skipped.append(str(p))
            continue
        sets.append(read_container(p))
    return sets


def sentence_classification_sweep(
    container_paths: Sequence[str | Path],
    labels: Mapping[str, str],
    cfg: ProbeTrainConfig,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    split_seed: int = 0,
) -> LayerSweepResult:
    """Train/evaluate one probe per (layer, pooling, seed) on sentence vectors.

    The 80-10-10 split is fixed by split_seed and shared across all cells so
    every probe sees the same test sentences.
    """
    result = LayerSweepResult()
    esets = _load_containers(container_paths, result.skipped)
    for eset in esets:
        if eset.kind not in ("sentence_cls", "sentence_mean"):
            raise ValueError(f"sweep needs sentence containers, got kind {eset.kind!r}")
        missing = sorted(set(labels) - set(eset.records))
        if missing:
            raise ValueError(f"container lacks records for labelled ids, e.g. {missing[:3]}")
        train_ids, dev_ids, test_ids = split_dataset(sorted(labels), split_seed)
        make = lambda ids: [(eset.records[i][0].astype(np.float64), labels[i]) for i in ids]
        train, dev, test = make(train_ids), make(dev_ids), make(test_ids)
        test_gold = [labels[i] for i in test_ids]
        for seed in seeds:
            model = train_probe(train, dev, replace(cfg, seed=seed))
            pred = [predict(model, vec)[0] for vec, _ in test]
            result.rows.append(
                SweepRow(
                    model=eset.model_name,
                    layer=eset.layer,
                    pooling=eset.kind.removeprefix("sentence_"),
                    seed=seed,
                    split="test",
                    f1_macro=f1_score(test_gold, pred, "macro"),
                    f1_weighted=f1_score(test_gold, pred, "weighted"),
                )
            )
    return result


def lid_sweep(
    container_paths: Sequence[str | Path],
    sentences: Sequence[LidSentence],
    cfg: ProbeTrainConfig,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    split_seed: int = 0,
) -> LayerSweepResult:
    """Token-level LID probes per layer over word-vector containers.

    Sentence ids follow the 0-based index convention ("0", "1", ...); the
    split is made at sentence level so tokens of one sentence never straddle
    splits.
    """
    result = LayerSweepResult()
    esets = _load_containers(container_paths, result.skipped)
    sent_ids = [str(i) for i in range(len(sentences))]
    by_id = dict(zip(sent_ids, sentences))
    for eset in esets:
        if eset.kind != "word":
            raise ValueError(f"LID sweep needs word containers, got kind {eset.kind!r}")
        for sid in sent_ids:
            if sid not in eset.records:
                raise ValueError(f"container lacks a record for sentence {sid!r}")
            if eset.records[sid].shape[0] != len(by_id[sid].tokens):
                raise ValueError(
                    f"sentence {sid!r}: {len(by_id[sid].tokens)} tokens vs "
                    f"{eset.records[sid].shape[0]} vectors"
                )
        train_ids, dev_ids, test_ids = split_dataset(sent_ids, split_seed)

        def token_pairs(ids: list[str]) -> list[Pair]:
            pairs: list[Pair] = []
            for sid in ids:
                mat = eset.records[sid]
                for row, (_, label) in zip(mat, by_id[sid].tokens):
                    pairs.append((row.astype(np.float64), label.value))
            return pairs

        train, dev, test = token_pairs(train_ids), token_pairs(dev_ids), token_pairs(test_ids)
        test_gold = [lab for _, lab in test]
        label_set = tuple(sorted({lab for _, lab in train} | set(test_gold) | {lab for _, lab in dev}))
        for seed in seeds:
            model = train_probe(
                train, dev, replace(cfg, seed=seed), label_set=label_set,
                selection_averaging="weighted",
            )
            pred = [predict(model, vec)[0] for vec, _ in test]
            result.rows.append(
                SweepRow(
                    model=eset.model_name,
                    layer=eset.layer,
                    pooling="word",
                    seed=seed,
                    split="test",
                    f1_macro=f1_score(test_gold, pred, "macro"),
                    f1_weighted=f1_score(test_gold, pred, "weighted"),
                )
            )
    return result
