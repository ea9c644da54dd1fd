"""Synthetic code-switch generation from parallel monolingual translations.

Two methods: independent random token replacement, and noun-phrase replacement
driven by a UD parse of the matrix-language sentence. Translation is fully
offline: token choices come from per-record word alignments over the parallel
translations, with an optional lowercased dictionary fallback.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import (
    AlignmentRecord,
    ConlluSentence,
    CorpusError,
    CorpusStats,
    LidLabel,
    LidSentence,
    ParallelCsCorpus,
    ParallelCsRecord,
    corpus_stats,
    whitespace_tokenize,
)

# direction is (source language, target language); the alignment file maps
# es tokens to en tokens, so en->es uses the reversed pairs
DIRECTIONS = (("es", "en"), ("en", "es"))

NP_HEAD_UPOS = frozenset({"NOUN", "PROPN", "PRON"})
NP_CHILD_RELS = frozenset({"det", "amod", "nummod", "compound", "flat"})


@dataclass(frozen=True)
class NounPhraseSpan:
    start: int
    end: int  # exclusive

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad span [{self.start}, {self.end})")

    def overlaps(self, other: "NounPhraseSpan") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class LexiconEntry:
    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    alignment: AlignmentRecord


@dataclass
class TranslationLexicon:
    """Per-record aligned token pairs for one translation direction."""

    direction: tuple[str, str]
    entries: dict[str, LexiconEntry]
    fallback: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        self.fallback = {k.lower(): v for k, v in self.fallback.items()}
        for rid, entry in self.entries.items():
            for i, j in entry.alignment.pairs:
                if i >= len(entry.source_tokens) or j >= len(entry.target_tokens):
                    raise CorpusError(
                        f"record {rid!r}: alignment pair ({i},{j}) out of token range"
                    )

    @classmethod
    def from_corpus(
        cls,
        corpus: ParallelCsCorpus,
        alignments: Sequence[AlignmentRecord],
        direction: tuple[str, str],
        fallback: Mapping[str, str] | None = None,
    ) -> "TranslationLexicon":
        """Build a lexicon from es->en alignment records in corpus order."""
        if len(alignments) != len(corpus):
            raise CorpusError(
                f"{len(alignments)} alignment lines for {len(corpus)} records"
            )
        entries = {}
        for rec, align in zip(corpus, alignments):
            es_tokens = tuple(whitespace_tokenize(rec.es))
            en_tokens = tuple(whitespace_tokenize(rec.en))
            if direction == ("es", "en"):
                entries[rec.id] = LexiconEntry(es_tokens, en_tokens, align)
            else:
                entries[rec.id] = LexiconEntry(en_tokens, es_tokens, align.reversed())
        return cls(direction=direction, entries=entries, fallback=dict(fallback or {}))


@dataclass(frozen=True)
class SyntheticRecord:
    id: str
    text: str
    method: str  # random | np_en_matrix | np_es_matrix
    source_id: str
    replaced_spans: tuple  # token indices (random) or NounPhraseSpan (np)


@dataclass
class GenerationReport:
    method: str
    generated: int = 0
    skipped_records: dict[str, str] = field(default_factory=dict)
    unaligned_kept: int = 0
    skipped_spans: int = 0
    token_stats: CorpusStats | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "generated": self.generated,
            "skipped_records": dict(sorted(self.skipped_records.items())),
            "unaligned_kept": self.unaligned_kept,
            "skipped_spans": self.skipped_spans,
            "token_stats": self.token_stats.to_dict() if self.token_stats else None,
        }


def _match_case(replacement: str, source_token: str) -> str:
    if source_token[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


_LANG_LABEL = {"en": LidLabel.LANG1, "es": LidLabel.LANG2}


def _record_rng(seed: int, record_id: str) -> random.Random:
    digest = hashlib.blake2s(f"{seed}:{record_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


def _gen_random_tokens(
    record: ParallelCsRecord,
    direction: tuple[str, str],
    p_switch: float,
    lexicon: TranslationLexicon,
    rng: random.Random,
) -> tuple[list[str], list[LidLabel], list[int], int]:
    entry = lexicon.entries.get(record.id)
    if entry is None and not lexicon.fallback:
        raise CorpusError(f"record {record.id!r}: no alignment and no fallback lexicon")
    src_lang, tgt_lang = direction
    source_tokens = (
        list(entry.source_tokens)
        if entry is not None
        else whitespace_tokenize(getattr(record, src_lang))
    )
    out_tokens: list[str] = []
    out_labels: list[LidLabel] = []
    replaced: list[int] = []
    unaligned = 0
    for idx, token in enumerate(source_tokens):
        if rng.random() < p_switch:
            targets = entry.alignment.targets_of(idx) if entry is not None else []
            if targets:
                pieces = [entry.target_tokens[j] for j in targets]
                pieces[0] = _match_case(pieces[0], token)
                out_tokens.extend(pieces)
                out_labels.extend([_LANG_LABEL[tgt_lang]] * len(pieces))
                replaced.append(idx)
                continue
            hit = lexicon.fallback.get(token.lower())
            if hit is not None:
                out_tokens.append(_match_case(hit, token))
                out_labels.append(_LANG_LABEL[tgt_lang])
                replaced.append(idx)
                continue
            unaligned += 1
        out_tokens.append(token)
        out_labels.append(_LANG_LABEL[src_lang])
    return out_tokens, out_labels, replaced, unaligned


def gen_random(
    record: ParallelCsRecord,
    direction: tuple[str, str],
    p_switch: float,
    lexicon: TranslationLexicon,
    seed: int,
) -> SyntheticRecord:
    """Replace each source token independently with probability p_switch."""
    if not (0.0 <= p_switch <= 1.0):
        raise ValueError(f"p_switch must lie in [0, 1], got {p_switch}")
    if lexicon.direction != direction:
        raise ValueError(f"lexicon direction {lexicon.direction} != requested {direction}")
    rng = _record_rng(seed, record.id)
    tokens, _, replaced, _ = _gen_random_tokens(record, direction, p_switch, lexicon, rng)
    return SyntheticRecord(
        id=f"{record.id}-random",
        text=" ".join(tokens),
        method="random",
        source_id=record.id,
        replaced_spans=tuple(replaced),
    )


def identify_noun_phrases(
    sentence: ConlluSentence,
    head_upos: frozenset[str] = NP_HEAD_UPOS,
    child_rels: frozenset[str] = NP_CHILD_RELS,
) -> list[NounPhraseSpan]:
    """Covering spans of nominal heads plus their close dependents.

    For each NOUN/PROPN/PRON head, the span covers the head and its direct
    dependents whose relation is in child_rels (contiguously, outer bounds
    inclusive). Nested spans are dropped: the outermost wins.
    """
    candidates = []
    for word in sentence.words:
        if word.upos not in head_upos:
            continue
        members = [word.index]
        for child in sentence.words:
            if child.head == word.index and child.deprel in child_rels:
                members.append(child.index)
        start = min(members) - 1
        end = max(members)
        candidates.append(NounPhraseSpan(start=start, end=end))
    kept: list[NounPhraseSpan] = []
    for span in sorted(candidates, key=lambda s: (-(s.end - s.start), s.start)):
        if not any(span.overlaps(existing) for existing in kept):
            kept.append(span)
    return sorted(kept, key=lambda s: s.start)


def _gen_np_tokens(
    record: ParallelCsRecord,
    matrix_language: str,
    parse: ConlluSentence,
    lexicon: TranslationLexicon,
) -> tuple[list[str], list[LidLabel], list[NounPhraseSpan], int]:
    entry = lexicon.entries.get(record.id)
    if entry is None:
        raise CorpusError(f"record {record.id!r}: no alignment entry in the lexicon")
    src_lang, tgt_lang = lexicon.direction
    source_tokens = list(entry.source_tokens)
    if [w.form for w in parse.words] != source_tokens:
        raise CorpusError(
            f"record {record.id!r}: parse tokens do not match the {src_lang} sentence"
        )
    spans = identify_noun_phrases(parse)
    out_tokens: list[str] = []
    out_labels: list[LidLabel] = []
    replaced: list[NounPhraseSpan] = []
    skipped = 0
    cursor = 0
    for span in spans:
        while cursor < span.start:
            out_tokens.append(source_tokens[cursor])
            out_labels.append(_LANG_LABEL[src_lang])
            cursor += 1
        targets = sorted(
            {j for i in range(span.start, span.end) for j in entry.alignment.targets_of(i)}
        )
        if not targets:
            skipped += 1
            while cursor < span.end:
                out_tokens.append(source_tokens[cursor])
                out_labels.append(_LANG_LABEL[src_lang])
                cursor += 1
            continue
        pieces = [entry.target_tokens[j] for j in targets]
        pieces[0] = _match_case(pieces[0], source_tokens[span.start])
        out_tokens.extend(pieces)
        out_labels.extend([_LANG_LABEL[tgt_lang]] * len(pieces))
        replaced.append(span)
        cursor = span.end
    while cursor < len(source_tokens):
        out_tokens.append(source_tokens[cursor])
        out_labels.append(_LANG_LABEL[src_lang])
        cursor += 1
    return out_tokens, out_labels, replaced, skipped


def gen_np(
    record: ParallelCsRecord,
    matrix_language: str,
    parse: ConlluSentence,
    lexicon: TranslationLexicon,
    seed: int = 0,
) -> SyntheticRecord:
    """Replace every identified noun phrase with its aligned translation.

    The matrix language supplies the frame; noun phrases flip to the other
    language. The seed parameter is accepted for interface symmetry but the
    operation is deterministic.
    """
    if matrix_language not in ("en", "es"):
        raise ValueError("matrix_language must be 'en' or 'es'")
    if lexicon.direction[0] != matrix_language:
        raise ValueError(
            f"lexicon direction {lexicon.direction} does not start from matrix "
            f"language {matrix_language!r}"
        )
    tokens, _, replaced, _ = _gen_np_tokens(record, matrix_language, parse, lexicon)
    method = f"np_{matrix_language}_matrix"
    return SyntheticRecord(
        id=f"{record.id}-{method}",
        text=" ".join(tokens),
        method=method,
        source_id=record.id,
        replaced_spans=tuple(replaced),
    )


def gen_corpus(
    corpus: ParallelCsCorpus,
    method: str,
    lexicon: TranslationLexicon,
    p_switch: float = 0.5,
    parses: Mapping[str, ConlluSentence] | None = None,
    seed: int = 0,
) -> tuple[list[SyntheticRecord], GenerationReport]:
    """Apply one generation method across a corpus; per-record failures are
    reported, never fatal. The report carries by-construction token-language
    statistics (kept tokens keep the source language, switched tokens take
    the target language)."""
    if method not in ("random", "np_en_matrix", "np_es_matrix"):
        raise ValueError(f"unknown method {method!r}")
    report = GenerationReport(method=method)
    outputs: list[SyntheticRecord] = []
    label_sentences: list[LidSentence] = []
    for record in corpus:
        try:
            if method == "random":
                rng = _record_rng(seed, record.id)
                tokens, labels, replaced, unaligned = _gen_random_tokens(
                    record, lexicon.direction, p_switch, lexicon, rng
                )
                report.unaligned_kept += unaligned
                outputs.append(
                    SyntheticRecord(
                        id=f"{record.id}-random",
                        text=" ".join(tokens),
                        method="random",
                        source_id=record.id,
                        replaced_spans=tuple(replaced),
                    )
                )
            else:
                matrix = method.split("_")[1]
                if parses is None or record.id not in parses:
                    raise CorpusError(f"record {record.id!r}: no parse for the matrix side")
                tokens, labels, replaced, skipped = _gen_np_tokens(
                    record, matrix, parses[record.id], lexicon
                )
                report.skipped_spans += skipped
                outputs.append(
                    SyntheticRecord(
                        id=f"{record.id}-{method}",
                        text=" ".join(tokens),
                        method=method,
                        source_id=record.id,
                        replaced_spans=tuple(replaced),
                    )
                )
            label_sentences.append(
                LidSentence(tuple(zip(tokens, labels)))
            )
        except (CorpusError, ValueError) as exc:
            report.skipped_records[record.id] = str(exc)
    report.generated = len(outputs)
    report.token_stats = corpus_stats(label_sentences)
    return outputs, report


def synthetic_to_jsonl(records: Iterable[SyntheticRecord]) -> str:
    lines = []
    for rec in records:
        spans: list = []
        for item in rec.replaced_spans:
            if isinstance(item, NounPhraseSpan):
                spans.append([item.start, item.end])
            else:
                spans.append(item)
        lines.append(
            json.dumps(
                {
                    "id": rec.id,
                    "text": rec.text,
                    "method": rec.method,
                    "source_id": rec.source_id,
                    "replaced_spans": spans,
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
