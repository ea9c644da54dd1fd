"""Structural distance probe: learn a rank-k map B so that squared distances
||B(h_i - h_j)||^2 track dependency-tree path lengths, then recover parses as
minimum spanning trees and score them with UUAS and distance Spearman.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import ConlluSentence, ConlluWord
from .embedstore import EmbeddingSet, read_container, write_container
from .probe import ProbeTrainConfig
from .stats import spearman

# training recipe defaults for the distance probe; probe classifiers use
# different ones, hence a separate constant rather than ProbeTrainConfig's own
DEFAULT_STRUCTURAL_CONFIG = ProbeTrainConfig(
    batch_size=20, learning_rate=1e-3, max_epochs=100, patience=3, seed=0
)
_MAX_LR_ANNEALS = 3  # lr is cut to a tenth on each dev-loss plateau


@dataclass(frozen=True)
class DepTree:
    """Unordered tree over word positions 0..n-1, edges as (i, j) with i < j."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("tree needs at least one node")
        if len(self.edges) != self.n - 1:
            raise ValueError(f"{self.n}-node tree needs {self.n - 1} edges, got {len(self.edges)}")
        adj: dict[int, list[int]] = {i: [] for i in range(self.n)}
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range or unnormalized")
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if len(seen) != self.n:
            raise ValueError("edges do not connect all nodes")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DepTree":
        return cls(n=n, edges=frozenset((min(i, j), max(i, j)) for i, j in edges))

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj


def conllu_to_tree(sentence: ConlluSentence) -> DepTree:
    """Undirected dependency tree over 0-based word positions."""
    edges = [
        (w.index - 1, w.head - 1) for w in sentence.words if w.head != 0
    ]
    return DepTree.from_edges(len(sentence.words), edges)


def strip_punct(sentence: ConlluSentence) -> tuple[ConlluSentence, list[int]]:
    """Remove PUNCT words, reattaching their dependents to the nearest kept head.

    Returns the filtered sentence and the kept original 0-based positions, so
    word vectors can be filtered in lockstep.
    """
    words = sentence.words
    punct = {w.index for w in words if w.upos == "PUNCT"}
    if not punct:
        return sentence, list(range(len(words)))
    heads = {w.index: w.head for w in words}

    def resolve(head: int) -> int:
        while head in punct:
            head = heads[head]
        return head

    kept = [w for w in words if w.index not in punct]
    if not kept:
        raise ValueError(f"sentence {sentence.sent_id!r} contains only punctuation")
    remap = {w.index: pos + 1 for pos, w in enumerate(kept)}
    new_words = tuple(
        ConlluWord(
            index=remap[w.index],
            form=w.form,
            upos=w.upos,
            head=0 if resolve(w.head) == 0 else remap[resolve(w.head)],
            deprel=w.deprel,
        )
        for w in kept
    )
    filtered = ConlluSentence(sent_id=sentence.sent_id, words=new_words)
    return filtered, [w.index - 1 for w in kept]


def tree_distances(tree: DepTree) -> np.ndarray:
    """Pairwise path lengths via breadth-first search from every node."""
    adj = tree.adjacency()
    dist = np.zeros((tree.n, tree.n), dtype=np.float64)
    for src in range(tree.n):
        depth = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for node in frontier:
                for nb in adj[node]:
                    if nb not in depth:
                        depth[nb] = depth[node] + 1
                        nxt.append(nb)
            frontier = nxt
        for node, d in depth.items():
            dist[src, node] = d
    return dist


@dataclass
class StructuralProbe:
    B: np.ndarray  # (k, dim)
    k: int
    layer: int
    model_name: str

    def __post_init__(self) -> None:
        if self.B.shape[0] != self.k:
            raise ValueError("B row count must equal k")
        if not (1 <= self.k <= self.B.shape[1]):
            raise ValueError(f"need 1 <= k <= dim, got k={self.k}, dim={self.B.shape[1]}")
        if not np.isfinite(self.B).all():
            raise ValueError("B must be finite")

    @property
    def dim(self) -> int:
        return self.B.shape[1]


def predicted_distances(probe: StructuralProbe, H: np.ndarray) -> np.ndarray:
    """Squared B-distances ||B(h_i - h_j)||^2; symmetric with a zero diagonal."""
    mat = np.asarray(H, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != probe.dim:
        raise ValueError(f"word matrix shape {mat.shape} does not match probe dim {probe.dim}")
    proj = mat @ probe.B.T  # (n, k)
    sq = (proj * proj).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (proj @ proj.T)
    np.maximum(dist, 0.0, out=dist)
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


def _pair_diffs(H: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row differences h_i - h_j and index arrays for all pairs i < j."""
    n = H.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    return H[iu] - H[ju], iu, ju


def sentence_loss(B: np.ndarray, H: np.ndarray, gold: np.ndarray) -> float:
    """Mean absolute gap between gold path lengths and squared B-distances,
    summed over pairs i < j and normalized by n^2."""
    n = H.shape[0]
    diffs, iu, ju = _pair_diffs(np.asarray(H, dtype=np.float64))
    proj = diffs @ B.T
    pred = (proj * proj).sum(axis=1)
    return float(np.abs(gold[iu, ju] - pred).sum() / (n * n))


def batch_loss(B: np.ndarray, batch: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean of per-sentence losses over (H, gold distance matrix) pairs."""
    if not batch:
        raise ValueError("empty batch")
    return sum(sentence_loss(B, H, gold) for H, gold in batch) / len(batch)


def batch_loss_grad(
    B: np.ndarray, batch: Sequence[tuple[np.ndarray, np.ndarray]]
) -> np.ndarray:
    """Analytic gradient of batch_loss with respect to B."""
    grad = np.zeros_like(B)
    for H, gold in batch:
        mat = np.asarray(H, dtype=np.float64)
        n = mat.shape[0]
        diffs, iu, ju = _pair_diffs(mat)
        proj = diffs @ B.T  # (m, k)
        pred = (proj * proj).sum(axis=1)
        sign = np.sign(pred - gold[iu, ju]) / (n * n)
        # d pred / dB = 2 (B d) d^T summed with per-pair coefficients
        grad += 2.0 * (proj * sign[:, None]).T @ diffs
    return grad / len(batch)


def train_structural_probe(
    treebank: Sequence[tuple[ConlluSentence, np.ndarray]],
    k: int,
    cfg: ProbeTrainConfig = DEFAULT_STRUCTURAL_CONFIG,
    dev: Sequence[tuple[ConlluSentence, np.ndarray]] | None = None,
    model_name: str = "",
    layer: int = 0,
) -> StructuralProbe:
    """Fit B by adaptive-moment gradient descent on the L1 distance loss.

    Sentences must already be PUNCT-filtered and carry >= 2 words. Early
    stopping tracks dev loss; on each plateau the learning rate drops to a
    tenth, and training stops after the third anneal. If no dev set is given,
    a tenth of the treebank (seeded shuffle) is held out.
    """
    if not treebank:
        raise ValueError("empty treebank")
    pairs = []
    for sent, H in treebank:
        mat = np.asarray(H, dtype=np.float64)
        if len(sent) < 2:
            raise ValueError(f"sentence {sent.sent_id!r} has fewer than 2 words")
        if mat.shape[0] != len(sent):
            raise ValueError(
                f"sentence {sent.sent_id!r}: {len(sent)} words vs {mat.shape[0]} vectors"
            )
        pairs.append((mat, tree_distances(conllu_to_tree(sent))))
    dim = pairs[0][0].shape[1]
    if any(H.shape[1] != dim for H, _ in pairs):
        raise ValueError("all word vectors must share one dimension")
    if not (1 <= k <= dim):
        raise ValueError(f"need 1 <= k <= dim={dim}, got k={k}")

    rng = np.random.default_rng(cfg.seed)
    if dev is not None:
        dev_pairs = [
            (np.asarray(H, dtype=np.float64), tree_distances(conllu_to_tree(sent)))
            for sent, H in dev
        ]
        train_pairs = pairs
    else:
        order = rng.permutation(len(pairs))
        n_dev = max(1, len(pairs) // 10)
        dev_pairs = [pairs[i] for i in order[:n_dev]]
        train_pairs = [pairs[i] for i in order[n_dev:]] or dev_pairs

    B = rng.uniform(-0.05, 0.05, size=(k, dim))
    mB = np.zeros_like(B)
    vB = np.zeros_like(B)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    lr = cfg.learning_rate

    best_loss = batch_loss(B, dev_pairs)
    best_B = B.copy()
    stale = 0
    anneals = 0
    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(train_pairs))
        for start in range(0, len(train_pairs), cfg.batch_size):
            batch = [train_pairs[i] for i in order[start : start + cfg.batch_size]]
            grad = batch_loss_grad(B, batch)
            step += 1
            mB = beta1 * mB + (1 - beta1) * grad
            vB = beta2 * vB + (1 - beta2) * grad * grad
            corr1 = 1 - beta1**step
            corr2 = 1 - beta2**step
            B = B - lr * (mB / corr1) / (np.sqrt(vB / corr2) + eps)
        loss = batch_loss(B, dev_pairs)
        if loss < best_loss:
            best_loss = loss
            best_B = B.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                anneals += 1
                if anneals >= _MAX_LR_ANNEALS:
                    break
                lr *= 0.1
                stale = 0
    return StructuralProbe(B=best_B, k=k, layer=layer, model_name=model_name)


def mst_parse(dist: np.ndarray) -> DepTree:
    """Minimum spanning tree over the complete distance graph.

    Prim's method from node 0; among equal-weight cut edges the
    lexicographically smallest (i, j) pair wins, so output is deterministic.
    """
    d = np.asarray(dist, dtype=np.float64)
    n = d.shape[0]
    if d.ndim != 2 or d.shape != (n, n) or n < 2:
        raise ValueError(f"need a square matrix with n >= 2, got shape {d.shape}")
    if not np.isfinite(d).all():
        raise ValueError("distance matrix contains non-finite weights")
    in_tree = {0}
    edges = []
    while len(in_tree) < n:
        best: tuple[float, int, int] | None = None
        for u in in_tree:
            for v in range(n):
                if v in in_tree:
                    continue
                cand = (d[u, v], min(u, v), max(u, v))
                if best is None or cand < best:
                    best = cand
        assert best is not None
        _, i, j = best
        edges.append((i, j))
        in_tree.add(j if i in in_tree else i)
    return DepTree.from_edges(n, edges)


def uuas(pred: DepTree, gold: DepTree) -> float:
    """Fraction of gold edges present in the predicted tree."""
    if pred.n != gold.n:
        raise ValueError(f"node count mismatch: {pred.n} vs {gold.n}")
    if not gold.edges:
        raise ValueError("gold tree has no edges")
    return len(pred.edges & gold.edges) / len(gold.edges)


def distance_spearman(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    sentence_length_window: tuple[int, int] = (5, 50),
) -> float:
    """Mean per-sentence Spearman between predicted and gold pair distances.

    Only sentences whose length falls inside the window participate.
    """
    lo, hi = sentence_length_window
    scores = []
    for pred, gold in pairs:
        p = np.asarray(pred, dtype=np.float64)
        g = np.asarray(gold, dtype=np.float64)
        if p.shape != g.shape:
            raise ValueError(f"matrix shape mismatch: {p.shape} vs {g.shape}")
        n = p.shape[0]
        if not (lo <= n <= hi):
            continue
        iu, ju = np.triu_indices(n, k=1)
        if len(iu) < 2:
            raise ValueError(f"sentence of length {n} has fewer than 2 word pairs")
        scores.append(spearman(p[iu, ju], g[iu, ju]))
    if not scores:
        raise ValueError("no sentences inside the length window")
    return float(np.mean(scores))


def parse_corpus(
    probe: StructuralProbe,
    embeddings: EmbeddingSet,
    sentence_ids: Sequence[str],
) -> list[tuple[str, DepTree]]:
    """One MST parse per sentence id; single-word sentences are skipped."""
    parses = []
    for sid in sentence_ids:
        if sid not in embeddings.records:
            raise KeyError(f"no embedding record for sentence {sid!r}")
        H = embeddings.records[sid].astype(np.float64)
        if H.shape[0] < 2:
            warnings.warn(f"sentence {sid!r} has a single word, skipped", stacklevel=2)
            continue
        parses.append((sid, mst_parse(predicted_distances(probe, H))))
    return parses


def parses_to_jsonl(parses: Sequence[tuple[str, DepTree]]) -> str:
    lines = []
    for sid, tree in parses:
        lines.append(
            json.dumps(
                {"id": sid, "n": tree.n, "edges": sorted(list(e) for e in tree.edges)},
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parses_from_jsonl(text: str) -> list[tuple[str, DepTree]]:
    parses = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        parses.append((obj["id"], DepTree.from_edges(obj["n"], obj["edges"])))
    return parses


def save_probe(probe: StructuralProbe, path: str | Path) -> None:
    """Persist B in a container of kind probe_matrix under record id "B"."""
    eset = EmbeddingSet(
        model_name=probe.model_name,
        layer=probe.layer,
        kind="probe_matrix",
        dim=probe.dim,
        records={"B": probe.B.astype(np.float32)},
    )
    write_container(eset, path)


def load_probe(path: str | Path) -> StructuralProbe:
    eset = read_container(path)
    if eset.kind != "probe_matrix" or "B" not in eset.records:
        raise ValueError(f"{path}: not a structural-probe checkpoint")
    B = eset.records["B"].astype(np.float64)
    return StructuralProbe(B=B, k=B.shape[0], layer=eset.layer, model_name=eset.model_name)
