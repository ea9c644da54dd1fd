"""Semantic-consistency analysis: cosine-similarity vectors over sentence
pairs per language set, correlated across language-pair combinations."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .embedstore import EmbeddingSet
from .stats import spearman


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    ua = np.asarray(u, dtype=np.float64).reshape(-1)
    va = np.asarray(v, dtype=np.float64).reshape(-1)
    if ua.shape != va.shape:
        raise ValueError(f"dimension mismatch: {ua.shape} vs {va.shape}")
    nu = float(np.linalg.norm(ua))
    nv = float(np.linalg.norm(va))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for an all-zero vector")
    return max(-1.0, min(1.0, float(ua @ va) / (nu * nv)))


@dataclass(frozen=True)
class SimVector:
    set_a: str
    set_b: str
    policy: str  # "unordered" (i<j) or "ordered" (i!=j)
    values: tuple[tuple[str, str, float], ...]

    def keys(self) -> tuple[tuple[str, str], ...]:
        return tuple((i, j) for i, j, _ in self.values)

    def similarities(self) -> list[float]:
        return [v for _, _, v in self.values]


def _sentence_vectors(eset: EmbeddingSet) -> dict[str, np.ndarray]:
    vectors = {}
    for rid, mat in eset.records.items():
        if mat.shape[0] != 1:
            raise ValueError(
                f"record {rid!r} has {mat.shape[0]} rows; sentence-level vectors required"
            )
        vectors[rid] = mat[0].astype(np.float64)
    return vectors


def build_sim_vector(
    emb_a: EmbeddingSet,
    emb_b: EmbeddingSet,
    pair_policy: str = "unordered",
    include_diagonal: bool = False,
    name_a: str = "a",
    name_b: str = "b",
) -> SimVector:
    """Cosine for every sentence pair under the policy, in canonical id order.

    unordered: pairs i<j (self-similarity layout, for set_a == set_b);
    ordered: all i != j, plus i == j when include_diagonal is set.
    """
    if pair_policy not in ("unordered", "ordered"):
        raise ValueError(f"unknown pair policy {pair_policy!r}")
    vec_a = _sentence_vectors(emb_a)
    vec_b = _sentence_vectors(emb_b)
    if set(vec_a) != set(vec_b):
        only_a = sorted(set(vec_a) - set(vec_b))[:3]
        only_b = sorted(set(vec_b) - set(vec_a))[:3]
        raise ValueError(f"record id mismatch between sets (e.g. {only_a} vs {only_b})")
    ids = sorted(vec_a)
    values = []
    if pair_policy == "unordered":
        for x in range(len(ids)):
            for y in range(x + 1, len(ids)):
                values.append((ids[x], ids[y], cosine(vec_a[ids[x]], vec_b[ids[y]])))
    else:
        for i in ids:
            for j in ids:
                if i == j and not include_diagonal:
                    continue
                values.append((i, j, cosine(vec_a[i], vec_b[j])))
    return SimVector(set_a=name_a, set_b=name_b, policy=pair_policy, values=tuple(values))


@dataclass(frozen=True)
class ConsistencyResult:
    l_pair_1: tuple[str, str]
    l_pair_2: tuple[str, str]
    spearman: float


def consistency(vec1: SimVector, vec2: SimVector) -> ConsistencyResult:
    """Spearman correlation between two similarity vectors over identical pairs."""
    if vec1.keys() != vec2.keys():
        raise ValueError("similarity vectors must be built over identical (i, j) pairs")
    if len(vec1.values) < 3:
        raise ValueError("need at least 3 shared pairs")
    rho = spearman(vec1.similarities(), vec2.similarities())
    return ConsistencyResult(
        l_pair_1=(vec1.set_a, vec1.set_b),
        l_pair_2=(vec2.set_a, vec2.set_b),
        spearman=rho,
    )


PairPlan = Sequence[tuple[tuple[str, str], tuple[str, str]]]


def default_plan(synthetics: Sequence[str] = ()) -> list[tuple[tuple[str, str], tuple[str, str]]]:
    """Rows (en-en, cs-cs), (es-es, cs-cs), (en-es, cs-en), (en-es, cs-es),
    plus the analogous rows for each synthetic variant."""
    plan = [
        (("en", "en"), ("cs", "cs")),
        (("es", "es"), ("cs", "cs")),
        (("en", "es"), ("cs", "en")),
        (("en", "es"), ("cs", "es")),
    ]
    for name in synthetics:
        plan.extend(
            [
                ((name, name), ("en", "en")),
                ((name, name), ("es", "es")),
                (("en", "es"), (name, "en")),
                (("en", "es"), (name, "es")),
            ]
        )
    return plan


def consistency_report(
    sets: Mapping[str, EmbeddingSet],
    plan: PairPlan | None = None,
    include_diagonal: bool = False,
) -> list[ConsistencyResult]:
    """One consistency row per plan entry; rows with missing sets are skipped
    with a warning. Self pairs (x, x) use the unordered policy, cross pairs
    the ordered policy, so the index sets of compared vectors always match."""
    if plan is None:
        known = {"cs", "es", "en"}
        plan = default_plan(sorted(set(sets) - known))
    cache: dict[tuple[str, str], SimVector] = {}

    def vector(pair: tuple[str, str]) -> SimVector:
        if pair not in cache:
            a, b = pair
            policy = "unordered" if a == b else "ordered"
            cache[pair] = build_sim_vector(
                sets[a], sets[b], policy, include_diagonal and policy == "ordered",
                name_a=a, name_b=b,
            )
        return cache[pair]

    results = []
    for pair1, pair2 in plan:
        missing = [name for name in (*pair1, *pair2) if name not in sets]
        if missing:
            warnings.warn(
                f"skipping row {pair1} vs {pair2}: missing sets {sorted(set(missing))}",
                stacklevel=2,
            )
            continue
        results.append(consistency(vector(pair1), vector(pair2)))
    return results


def report_to_csv(results: Sequence[ConsistencyResult], model: str = "") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["l_pair_1", "l_pair_2", "model", "spearman"])
    for res in results:
        writer.writerow(
            [
                "-".join(res.l_pair_1),
                "-".join(res.l_pair_2),
                model,
                f"{res.spearman:.6f}",
            ]
        )
    return buf.getvalue()


def sim_vector_to_csv(vec: SimVector) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["set_a", "set_b", "i", "j", "cosine"])
    for i, j, value in vec.values:
        writer.writerow([vec.set_a, vec.set_b, i, j, f"{value:.9f}"])
    return buf.getvalue()
