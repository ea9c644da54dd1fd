"""Exact graph edit distance between unlabeled, undirected dependency trees,
and the cross-language comparison correlating GED(cs, es) with GED(cs, en).

Node substitution is free (nodes carry no labels), so the operations are node
insert/delete and edge insert/delete. The search is best-first over partial
node mappings with an admissible lower bound; it is exact and fails loudly on
budget exhaustion rather than approximating.
"""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

from .stats import spearman
from .structprobe import DepTree

DEFAULT_NODE_CAP = 10
DEFAULT_BUDGET = 5_000_000


class GedCapExceededError(ValueError):
    """A tree exceeds the node cap; the caller must filter, not truncate."""


class GedBudgetExceededError(RuntimeError):
    """The exact search ran out of node expansions; no approximation is returned."""


@dataclass(frozen=True)
class GedCostModel:
    node_insert: float = 1.0
    node_delete: float = 1.0
    edge_insert: float = 1.0
    edge_delete: float = 1.0

    def __post_init__(self) -> None:
        for name in ("node_insert", "node_delete", "edge_insert", "edge_delete"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


UNIT_COSTS = GedCostModel()


def ged(
    a: DepTree,
    b: DepTree,
    costs: GedCostModel = UNIT_COSTS,
    node_cap: int = DEFAULT_NODE_CAP,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Minimal edit cost transforming tree a into tree b.

    Exact best-first search: states fix the fate (mapped or deleted) of a's
    nodes one at a time in descending-degree order; unmatched b nodes are
    inserted at the end. The bound below never overestimates, so the first
    completed state popped from the heap is optimal.
    """
    if a.n > node_cap or b.n > node_cap:
        raise GedCapExceededError(
            f"tree sizes ({a.n}, {b.n}) exceed the node cap {node_cap}"
        )
    n_a, n_b = a.n, b.n
    edges_a = sorted(a.edges)
    edges_b = sorted(b.edges)
    tmp: list[set[int]] = [set() for _ in range(n_a)]
    for u, v in edges_a:
        tmp[u].add(v)
        tmp[v].add(u)
    adj_a = [frozenset(s) for s in tmp]
    tmp_b: list[set[int]] = [set() for _ in range(n_b)]
    for u, v in edges_b:
        tmp_b[u].add(v)
        tmp_b[v].add(u)
    adj_b = [frozenset(s) for s in tmp_b]
    e_a, e_b = len(edges_a), len(edges_b)

    # process high-degree nodes first; their assignments constrain the most
    order = sorted(range(n_a), key=lambda u: (-len(adj_a[u]), u))
    pos_in_order = {u: i for i, u in enumerate(order)}

    def total_cost(s: int, m: int) -> float:
        return (
            (n_a - s) * costs.node_delete
            + (n_b - s) * costs.node_insert
            + (e_a - m) * costs.edge_delete
            + (e_b - m) * costs.edge_insert
        )

    def lower_bound(i: int, used_mask: int, s: int, m: int, mapping: tuple[int, ...]) -> float:
        # optimistic completion: map as many remaining nodes and match as many
        # open edges as counts allow
        free_b = n_b - bin(used_mask).count("1")
        s_max = s + min(n_a - i, free_b)
        open_a = 0
        for u, v in edges_a:
            pu, pv = pos_in_order[u], pos_in_order[v]
            if pu < i and mapping[pu] == -1:
                continue  # endpoint deleted
            if pv < i and mapping[pv] == -1:
                continue
            if pu < i and pv < i:
                continue  # both decided: already matched or dead
            open_a += 1
        open_b = 0
        for u, v in edges_b:
            u_used = (used_mask >> u) & 1
            v_used = (used_mask >> v) & 1
            if u_used and v_used:
                continue  # both endpoints taken: matched already or dead
            open_b += 1
        m_ub = m + min(open_a, open_b)
        return total_cost(s_max, m_ub)

    # heap entries: (f, tie, i, used_mask, s, m, mapping)
    # mapping[p] is the b-node for order[p], or -1 for deletion
    tie = 0
    start = (lower_bound(0, 0, 0, 0, ()), tie, 0, 0, 0, 0, ())
    heap = [start]
    expansions = 0
    while heap:
        f, _, i, used_mask, s, m, mapping = heapq.heappop(heap)
        if i == n_a:
            return total_cost(s, m)
        expansions += 1
        if expansions > budget:
            raise GedBudgetExceededError(
                f"exceeded {budget} node expansions comparing trees of size {n_a} and {n_b}"
            )
        u = order[i]
        # children: delete u, or map u to any unused b node
        for j in range(-1, n_b):
            if j >= 0 and (used_mask >> j) & 1:
                continue
            if j == -1:
                child = (i + 1, used_mask, s, m, mapping + (-1,))
            else:
                gained = 0
                for nb in adj_a[u]:
                    p = pos_in_order[nb]
                    if p < i and mapping[p] >= 0 and mapping[p] in adj_b[j]:
                        gained += 1
                child = (i + 1, used_mask | (1 << j), s + 1, m + gained, mapping + (j,))
            ci, cmask, cs_, cm = child[0], child[1], child[2], child[3]
            bound = (
                total_cost(cs_, cm)
                if ci == n_a
                else lower_bound(ci, cmask, cs_, cm, child[4])
            )
            tie += 1
            heapq.heappush(heap, (bound, tie, *child))
    raise AssertionError("search exhausted without reaching a complete mapping")


@dataclass(frozen=True)
class GedRow:
    id: str
    n_cs: int
    n_es: int
    n_en: int
    ged_cs_es: float
    ged_cs_en: float


@dataclass
class GedComparison:
    rows: list[GedRow]
    spearman: float
    retained: int
    excluded: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "n_cs", "n_es", "n_en", "ged_cs_es", "ged_cs_en"])
        for row in self.rows:
            writer.writerow(
                [row.id, row.n_cs, row.n_es, row.n_en,
                 f"{row.ged_cs_es:.6f}", f"{row.ged_cs_en:.6f}"]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        return {"retained": self.retained, "excluded": self.excluded, "spearman": self.spearman}


def ged_compare(
    cs_parses: Mapping[str, DepTree],
    es_parses: Mapping[str, DepTree],
    en_parses: Mapping[str, DepTree],
    costs: GedCostModel = UNIT_COSTS,
    node_cap: int = DEFAULT_NODE_CAP,
    budget: int = DEFAULT_BUDGET,
    jobs: int = 1,
) -> GedComparison:
    """Per-record GED(cs, es) and GED(cs, en) with their Spearman correlation.

    Records are matched by id; a record is dropped (and counted) if any of its
    three parses exceeds the node cap.
    """
    shared = sorted(set(cs_parses) & set(es_parses) & set(en_parses))
    kept = [
        rid
        for rid in shared
        if max(cs_parses[rid].n, es_parses[rid].n, en_parses[rid].n) <= node_cap
    ]
    excluded = len(shared) - len(kept)
    if not kept:
        raise ValueError("no records remain after node-cap filtering")

    def compute(rid: str) -> GedRow:
        cs_t, es_t, en_t = cs_parses[rid], es_parses[rid], en_parses[rid]
        return GedRow(
            id=rid,
            n_cs=cs_t.n,
            n_es=es_t.n,
            n_en=en_t.n,
            ged_cs_es=ged(cs_t, es_t, costs, node_cap, budget),
            ged_cs_en=ged(cs_t, en_t, costs, node_cap, budget),
        )

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_GedTask(cs_parses, es_parses, en_parses, costs, node_cap, budget), kept))
    else:
        rows = [compute(rid) for rid in kept]
    rho = spearman([r.ged_cs_es for r in rows], [r.ged_cs_en for r in rows])
    return GedComparison(rows=rows, spearman=rho, retained=len(rows), excluded=excluded)


class _GedTask:
    """Picklable per-record task for process pools."""

    def __init__(self, cs, es, en, costs, node_cap, budget):
        self.cs = dict(cs)
        self.es = dict(es)
        self.en = dict(en)
        self.costs = costs
        self.node_cap = node_cap
        self.budget = budget

    def __call__(self, rid: str) -> GedRow:
        return GedRow(
            id=rid,
            n_cs=self.cs[rid].n,
            n_es=self.es[rid].n,
            n_en=self.en[rid].n,
            ged_cs_es=ged(self.cs[rid], self.es[rid], self.costs, self.node_cap, self.budget),
            ged_cs_en=ged(self.cs[rid], self.en[rid], self.costs, self.node_cap, self.budget),
        )
