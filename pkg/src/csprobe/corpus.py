"""Corpus ingestion: parallel CS records, token LID files, CoNLL-U treebanks,
word alignments, and dataset statistics.

File formats:
  - parallel corpus: JSON-lines, one object per line with fields id/cs/es/en
    and optional cs_tokens as [[form, label], ...]
  - LID: token<TAB>label lines, blank line between sentences, UTF-8
  - CoNLL-U: standard 10-column; multiword ranges ("1-2") and empty nodes
    ("1.1") are skipped
  - alignments: one line per sentence pair of space-separated "i-j" pairs,
    0-based (Pharaoh convention)
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence


class CorpusError(ValueError):
    """Malformed or invalid corpus input."""


class LidLabel(str, enum.Enum):
    LANG1 = "lang1"
    LANG2 = "lang2"
    OTHER = "other"
    NE = "ne"
    FW = "fw"
    MIXED = "mixed"
    UNK = "unk"
    AMBIGUOUS = "ambiguous"

    @classmethod
    def parse(cls, text: str) -> "LidLabel":
        try:
            return cls(text)
        except ValueError:
            raise CorpusError(f"unknown LID label {text!r}") from None


@dataclass(frozen=True)
class LidSentence:
    tokens: tuple[tuple[str, LidLabel], ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise CorpusError("LID sentence must be nonempty")
        for form, _ in self.tokens:
            if not form or any(ch.isspace() for ch in form):
                raise CorpusError(f"token form {form!r} is empty or contains whitespace")

    @property
    def forms(self) -> list[str]:
        return [form for form, _ in self.tokens]

    @property
    def labels(self) -> list[LidLabel]:
        return [label for _, label in self.tokens]


def whitespace_tokenize(text: str) -> list[str]:
    """Default tokenization for raw sentences: split on runs of whitespace."""
    return text.split()


@dataclass(frozen=True)
class ParallelCsRecord:
    id: str
    cs: str
    es: str
    en: str
    cs_tokens: tuple[tuple[str, LidLabel], ...] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("record id must be nonempty")
        for name in ("cs", "es", "en"):
            if not getattr(self, name).strip():
                raise CorpusError(f"record {self.id!r}: field {name!r} must be nonempty")
        if self.cs_tokens is not None:
            joined = " ".join(form for form, _ in self.cs_tokens)
            if joined != " ".join(whitespace_tokenize(self.cs)):
                raise CorpusError(
                    f"record {self.id!r}: cs_tokens do not reassemble the cs sentence"
                )


class ParallelCsCorpus:
    """Immutable, id-indexed collection of parallel CS records."""

    def __init__(self, records: Iterable[ParallelCsRecord]):
        self._records = tuple(records)
        self._by_id: dict[str, ParallelCsRecord] = {}
        for rec in self._records:
            if rec.id in self._by_id:
                raise CorpusError(f"duplicate record id {rec.id!r}")
            self._by_id[rec.id] = rec

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ParallelCsRecord]:
        return iter(self._records)

    def __getitem__(self, record_id: str) -> ParallelCsRecord:
        return self._by_id[record_id]

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [rec.id for rec in self._records]


def load_parallel_corpus(path: str | Path) -> ParallelCsCorpus:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for fname in ("id", "cs", "es", "en"):
                if fname not in obj:
                    raise CorpusError(f"{path}:{lineno}: missing field {fname!r}")
            cs_tokens = None
            if obj.get("cs_tokens") is not None:
                try:
                    cs_tokens = tuple(
                        (form, LidLabel.parse(label)) for form, label in obj["cs_tokens"]
                    )
                except (TypeError, ValueError) as exc:
                    raise CorpusError(f"{path}:{lineno}: bad cs_tokens: {exc}") from exc
            try:
                records.append(
                    ParallelCsRecord(
                        id=str(obj["id"]),
                        cs=obj["cs"],
                        es=obj["es"],
                        en=obj["en"],
                        cs_tokens=cs_tokens,
                    )
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    try:
        return ParallelCsCorpus(records)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from exc


def write_parallel_corpus(corpus: ParallelCsCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            obj: dict = {"id": rec.id, "cs": rec.cs, "es": rec.es, "en": rec.en}
            if rec.cs_tokens is not None:
                obj["cs_tokens"] = [[form, label.value] for form, label in rec.cs_tokens]
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_lid_file(path: str | Path) -> list[LidSentence]:
    sentences: list[LidSentence] = []
    current: list[tuple[str, LidLabel]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if current:
                    sentences.append(LidSentence(tuple(current)))
                    current = []
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected token<TAB>label, got {line!r}")
            form, label_text = parts
            try:
                label = LidLabel.parse(label_text)
            except CorpusError:
                raise CorpusError(f"{path}:{lineno}: unknown LID label {label_text!r}") from None
            current.append((form, label))
    if current:
        sentences.append(LidSentence(tuple(current)))
    return sentences


def write_lid_file(sentences: Sequence[LidSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, sent in enumerate(sentences):
            if i:
                fh.write("\n")
            for form, label in sent.tokens:
                fh.write(f"{form}\t{label.value}\n")


@dataclass(frozen=True)
class ConlluWord:
    index: int  # 1-based position
    form: str
    upos: str
    head: int  # 0 marks the root
    deprel: str = "_"


@dataclass(frozen=True)
class ConlluSentence:
    sent_id: str
    words: tuple[ConlluWord, ...]

    def __post_init__(self) -> None:
        validate_tree([w.head for w in self.words], sent_id=self.sent_id)
        for pos, w in enumerate(self.words, start=1):
            if w.index != pos:
                raise CorpusError(
                    f"sentence {self.sent_id!r}: word indices not contiguous from 1"
                )

    def __len__(self) -> int:
        return len(self.words)

    @property
    def forms(self) -> list[str]:
        return [w.form for w in self.words]


def validate_tree(heads: Sequence[int], sent_id: str = "?") -> None:
    """Reject any head array that is not a single tree rooted at head 0."""
    n = len(heads)
    if n == 0:
        raise CorpusError(f"sentence {sent_id!r}: empty sentence")
    roots = [i for i, h in enumerate(heads) if h == 0]
    if len(roots) != 1:
        raise CorpusError(f"sentence {sent_id!r}: expected exactly 1 root, found {len(roots)}")
    for i, h in enumerate(heads):
        if h < 0 or h > n:
            raise CorpusError(f"sentence {sent_id!r}: head {h} out of range at word {i + 1}")
        if h == i + 1:
            raise CorpusError(f"sentence {sent_id!r}: word {i + 1} is its own head")
    # walk to the root from every node; revisiting a node on the same walk is a cycle
    for start in range(n):
        seen = set()
        node = start + 1
        while node != 0:
            if node in seen:
                raise CorpusError(f"sentence {sent_id!r}: cycle through word {node}")
            seen.add(node)
            node = heads[node - 1]


def load_conllu(path: str | Path) -> list[ConlluSentence]:
    sentences: list[ConlluSentence] = []
    words: list[ConlluWord] = []
    sent_id: str | None = None

    def flush() -> None:
        nonlocal words, sent_id
        if words:
            sid = sent_id if sent_id is not None else str(len(sentences))
            sentences.append(ConlluSentence(sent_id=sid, words=tuple(words)))
        words = []
        sent_id = None

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("sent_id"):
                    _, _, value = body.partition("=")
                    sent_id = value.strip()
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise CorpusError(f"{path}:{lineno}: expected 10 columns, got {len(cols)}")
            if "-" in cols[0] or "." in cols[0]:
                continue  # multiword-token range or empty node
            try:
                words.append(
                    ConlluWord(
                        index=int(cols[0]),
                        form=cols[1],
                        upos=cols[3],
                        head=int(cols[6]),
                        deprel=cols[7],
                    )
                )
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: bad index or head: {exc}") from exc
    flush()
    return sentences


def write_conllu(sentences: Sequence[ConlluSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            fh.write(f"# sent_id = {sent.sent_id}\n")
            for w in sent.words:
                cols = [str(w.index), w.form, "_", w.upos, "_", "_", str(w.head), w.deprel, "_", "_"]
                fh.write("\t".join(cols) + "\n")
            fh.write("\n")


@dataclass(frozen=True)
class AlignmentRecord:
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for i, j in self.pairs:
            if i < 0 or j < 0:
                raise CorpusError(f"alignment pair ({i},{j}) has a negative index")

    def targets_of(self, src_index: int) -> list[int]:
        return sorted({j for i, j in self.pairs if i == src_index})

    def reversed(self) -> "AlignmentRecord":
        return AlignmentRecord(tuple((j, i) for i, j in self.pairs))


def load_alignments(path: str | Path) -> list[AlignmentRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            pairs = []
            if line:
                for chunk in line.split():
                    src, _, tgt = chunk.partition("-")
                    try:
                        pairs.append((int(src), int(tgt)))
                    except ValueError:
                        raise CorpusError(
                            f"{path}:{lineno}: bad alignment pair {chunk!r}"
                        ) from None
            records.append(AlignmentRecord(tuple(pairs)))
    return records


def write_alignments(records: Sequence[AlignmentRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(" ".join(f"{i}-{j}" for i, j in rec.pairs) + "\n")


# Collapse of the 8 LID labels into the 5 reporting categories.
DEFAULT_CATEGORY_MAP: Mapping[LidLabel, str] = {
    LidLabel.LANG1: "en",
    LidLabel.LANG2: "es",
    LidLabel.OTHER: "other",
    LidLabel.FW: "other",
    LidLabel.MIXED: "other",
    LidLabel.AMBIGUOUS: "other",
    LidLabel.NE: "ne",
    LidLabel.UNK: "unk",
}

STAT_CATEGORIES = ("en", "es", "other", "ne", "unk")


@dataclass(frozen=True)
class CorpusStats:
    n_tokens: int
    counts: dict[str, int]
    percentages: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "n_tokens": self.n_tokens,
            "counts": dict(self.counts),
            "percentages": dict(self.percentages),
        }


def corpus_stats(
    source: ParallelCsCorpus | Iterable[LidSentence],
    category_map: Mapping[LidLabel, str] = DEFAULT_CATEGORY_MAP,
) -> CorpusStats:
    """Token counts and percentages per reporting category.

    Accepts either LID sentences or a parallel corpus whose records carry
    cs_tokens; records without token labels are skipped.
    """
    counts = {cat: 0 for cat in STAT_CATEGORIES}
    if isinstance(source, ParallelCsCorpus):
        labelled: Iterable[Sequence[tuple[str, LidLabel]]] = (
            rec.cs_tokens for rec in source if rec.cs_tokens is not None
        )
    else:
        labelled = (sent.tokens for sent in source)
    total = 0
    for tokens in labelled:
        for _, label in tokens:
            counts[category_map[label]] += 1
            total += 1
    percentages = {
        cat: (100.0 * counts[cat] / total if total else 0.0) for cat in STAT_CATEGORIES
    }
    return CorpusStats(n_tokens=total, counts=counts, percentages=percentages)


def intra_sentential_filter(sentences: Sequence[LidSentence]) -> list[LidSentence]:
    """Keep sentences containing at least one lang1 token and one lang2 token."""
    kept = []
    for sent in sentences:
        labels = {label for _, label in sent.tokens}
        if LidLabel.LANG1 in labels and LidLabel.LANG2 in labels:
            kept.append(sent)
    return kept
