"""Command-line entry point wiring corpora, embeddings, probes, and analyses
into reproducible file-based experiment runs.

Each command reads a declarative INI config section, writes its outputs plus a
manifest (config hash, input digests, tool version) into the output directory,
and is a pure function of config and input files: reruns produce byte-identical
outputs. Exit codes: 0 success, 1 analysis failure, 2 configuration/IO failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .charts import line_chart_svg
from .corpus import (
    CorpusError,
    load_alignments,
    load_conllu,
    load_lid_file,
    load_parallel_corpus,
    corpus_stats,
)
from .csgen import TranslationLexicon, gen_corpus, synthetic_to_jsonl
from .embedstore import ContainerError, read_container
from .probe import (
    ProbeTrainConfig,
    f1_score,
    lid_sweep,
    predict,
    sentence_classification_sweep,
    split_dataset,
    sweep_summary,
    sweep_to_csv,
    train_probe,
)
from .semsim import consistency_report, report_to_csv
from .stats import ConstantInputError
from .structprobe import (
    DEFAULT_STRUCTURAL_CONFIG,
    conllu_to_tree,
    distance_spearman,
    load_probe,
    mst_parse,
    parse_corpus,
    parses_from_jsonl,
    parses_to_jsonl,
    predicted_distances,
    save_probe,
    strip_punct,
    train_structural_probe,
    tree_distances,
    uuas,
)
from .treedist import (
    GedBudgetExceededError,
    GedCostModel,
    ged_compare,
)


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class _Section:
    """Typed access to one INI section with error messages naming the key."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        if not parser.has_section(name):
            raise ConfigError(f"config is missing the [{name}] section")
        self.name = name
        self._sec = parser[name]

    def get(self, key: str, default: str | None = None) -> str:
        value = self._sec.get(key, default)
        if value is None:
            raise ConfigError(f"[{self.name}] is missing key {key!r}")
        return value

    def optional(self, key: str) -> str | None:
        return self._sec.get(key)

    def get_int(self, key: str, default: int) -> int:
        raw = self._sec.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected an integer, got {raw!r}") from None

    def get_float(self, key: str, default: float) -> float:
        raw = self._sec.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected a number, got {raw!r}") from None

    def get_bool(self, key: str, default: bool) -> bool:
        raw = self._sec.get(key)
        return default if raw is None else raw.strip().lower() in ("1", "true", "yes", "on")

    def get_list(self, key: str, default: str | None = None) -> list[str]:
        return [item.strip() for item in self.get(key, default).split(",") if item.strip()]

    def get_path(self, key: str) -> Path:
        path = Path(self.get(key))
        if not path.exists():
            raise ConfigError(f"[{self.name}] {key}: path does not exist: {path}")
        return path

    def get_paths(self, key: str) -> list[Path]:
        return [Path(item) for item in self.get_list(key)]

    def items(self):
        return self._sec.items()


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Run:
    """Output directory plus the manifest accumulated over a command."""

    def __init__(self, command: str, config_path: Path, out_dir: Path):
        self.command = command
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {str(config_path): _sha256(config_path)}
        self.outputs: list[str] = []

    def track_input(self, path: Path | str) -> Path:
        path = Path(path)
        self.inputs[str(path)] = _sha256(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        target = self.out_dir / name
        target.write_text(text, encoding="utf-8")
        self.outputs.append(name)
        return target

    def write_json(self, name: str, payload: dict) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(self.outputs),
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _seeds_from(args, section: _Section, default: str = "0,1,2,3,4") -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",")]
    return [int(s) for s in section.get_list("seeds", default)]


def _train_config(section: _Section, seed: int, defaults: ProbeTrainConfig) -> ProbeTrainConfig:
    return ProbeTrainConfig(
        batch_size=section.get_int("batch_size", defaults.batch_size),
        learning_rate=section.get_float("learning_rate", defaults.learning_rate),
        max_epochs=section.get_int("max_epochs", defaults.max_epochs),
        patience=section.get_int("patience", defaults.patience),
        seed=seed,
    )


def _load_labels(path: Path) -> dict[str, str]:
    labels: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError(f"{path}:{lineno}: expected id<TAB>label")
        rid, label = parts
        if rid in labels:
            raise CorpusError(f"{path}:{lineno}: duplicate id {rid!r}")
        labels[rid] = label
    return labels


def _load_fallback(path: Path) -> dict[str, str]:
    fallback: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError(f"{path}:{lineno}: expected source<TAB>target")
        fallback[parts[0]] = parts[1]
    return fallback


def cmd_stats(args, section: _Section, run: Run) -> int:
    if section.optional("parallel_corpus"):
        corpus = load_parallel_corpus(run.track_input(section.get_path("parallel_corpus")))
        stats = corpus_stats(corpus)
    else:
        sentences = []
        for path in section.get_paths("lid_files"):
            if not path.exists():
                raise ConfigError(f"[stats] lid_files: path does not exist: {path}")
            sentences.extend(load_lid_file(run.track_input(path)))
        stats = corpus_stats(sentences)
    lines = ["category,count,percentage"]
    for cat in ("en", "es", "other", "ne", "unk"):
        lines.append(f"{cat},{stats.counts[cat]},{stats.percentages[cat]:.2f}")
    run.write_text("stats.csv", "\n".join(lines) + "\n")
    run.write_json("stats.json", stats.to_dict())
    print(f"tokens: {stats.n_tokens}")
    return 0


def cmd_generate(args, section: _Section, run: Run) -> int:
    corpus = load_parallel_corpus(run.track_input(section.get_path("parallel_corpus")))
    alignments = load_alignments(run.track_input(section.get_path("alignments")))
    fallback = None
    if section.optional("fallback_lexicon"):
        fallback = _load_fallback(run.track_input(section.get_path("fallback_lexicon")))
    methods = section.get_list("methods", "random,np_en_matrix,np_es_matrix")
    p_switch = section.get_float("p_switch", 0.5)
    seed = args.seed if args.seed is not None else section.get_int("seed", 0)
    direction_name = section.get("random_direction", "es,en")
    direction = tuple(item.strip() for item in direction_name.split(","))

    parses = {}
    for lang in ("en", "es"):
        key = f"conllu_{lang}"
        if section.optional(key):
            sents = load_conllu(run.track_input(section.get_path(key)))
            parses[lang] = {s.sent_id: s for s in sents}

    for method in methods:
        if method == "random":
            lexicon = TranslationLexicon.from_corpus(corpus, alignments, direction, fallback)
            records, report = gen_corpus(
                corpus, "random", lexicon, p_switch=p_switch, seed=seed
            )
        else:
            matrix = method.split("_")[1]
            if matrix not in parses:
                raise ConfigError(f"[generate] {method} needs key conllu_{matrix}")
            lexicon = TranslationLexicon.from_corpus(
                corpus, alignments, (matrix, "es" if matrix == "en" else "en"), fallback
            )
            records, report = gen_corpus(
                corpus, method, lexicon, parses=parses[matrix], seed=seed
            )
        run.write_text(f"{method}.jsonl", synthetic_to_jsonl(records))
        run.write_json(f"{method}_report.json", report.to_dict())
        print(f"{method}: generated {report.generated}, skipped {len(report.skipped_records)}")
    return 0


def cmd_train_probe(args, section: _Section, run: Run) -> int:
    eset = read_container(run.track_input(section.get_path("container")))
    labels = _load_labels(run.track_input(section.get_path("labels")))
    missing = sorted(set(labels) - set(eset.records))
    if missing:
        raise ConfigError(f"container lacks labelled ids, e.g. {missing[:3]}")
    seed = args.seed if args.seed is not None else section.get_int("seed", 0)
    cfg = _train_config(section, seed, ProbeTrainConfig())
    train_ids, dev_ids, test_ids = split_dataset(sorted(labels), section.get_int("split_seed", 0))
    make = lambda ids: [(eset.records[i][0].astype(np.float64), labels[i]) for i in ids]
    model = train_probe(make(train_ids), make(dev_ids), cfg)
    test_pairs = make(test_ids)
    gold = [labels[i] for i in test_ids]
    pred = [predict(model, vec)[0] for vec, _ in test_pairs]
    metrics = {
        "f1_macro": f1_score(gold, pred, "macro"),
        "f1_weighted": f1_score(gold, pred, "weighted"),
        "split_sizes": [len(train_ids), len(dev_ids), len(test_ids)],
    }
    run.write_json("probe_metrics.json", metrics)
    run.write_json(
        "probe_model.json",
        {
            "label_set": list(model.label_set),
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
        },
    )
    print(f"test f1_macro: {metrics['f1_macro']:.4f}")
    return 0


def _sweep_chart(result, metric: str) -> str:
    series: dict[str, list[tuple[float, float]]] = {}
    for (model, layer, pooling), metrics in result.summary().items():
        series.setdefault(f"{model}-{pooling}", []).append(
            (float(layer), metrics[metric].mean)
        )
    return line_chart_svg(
        series,
        title="Mean F1 across layers",
        xlabel="layer",
        ylabel=f"mean {metric}",
        y_range=(0.0, 1.0),
    )


def cmd_sweep(args, section: _Section, run: Run) -> int:
    task = section.get("task", "sentence")
    containers = section.get_paths("containers")
    for path in containers:
        if path.exists():
            run.track_input(path)
    seeds = _seeds_from(args, section)
    cfg = _train_config(section, 0, ProbeTrainConfig())
    split_seed = section.get_int("split_seed", 0)
    if task == "sentence":
        labels = _load_labels(run.track_input(section.get_path("labels")))
        result = sentence_classification_sweep(containers, labels, cfg, seeds, split_seed)
        metric = "f1_macro"
    elif task == "lid":
        sentences = load_lid_file(run.track_input(section.get_path("lid_file")))
        result = lid_sweep(containers, sentences, cfg, seeds, split_seed)
        metric = "f1_weighted"
    else:
        raise ConfigError(f"[sweep] unknown task {task!r}")
    if not result.rows:
        print("no sweep cells completed", file=sys.stderr)
        return 1
    run.write_text("sweep.csv", sweep_to_csv(result))
    run.write_json("sweep_summary.json", sweep_summary(result))
    run.write_text("sweep.svg", _sweep_chart(result, metric))
    print(f"sweep cells: {len(result.rows)}, skipped containers: {len(result.skipped)}")
    return 0


def _load_treebank_with_vectors(
    treebank_paths: Sequence[Path], container_paths: Sequence[Path], run: Run
):
    sentences = []
    for path in treebank_paths:
        sentences.extend(load_conllu(run.track_input(path)))
    records = {}
    model_name, layer = "", 0
    for path in container_paths:
        eset = read_container(run.track_input(path))
        if eset.kind != "word":
            raise ConfigError(f"{path}: expected word vectors, found kind {eset.kind!r}")
        records.update(eset.records)
        model_name, layer = eset.model_name, eset.layer
    bank = []
    for sent in sentences:
        if sent.sent_id not in records:
            raise ConfigError(f"no word vectors for sentence {sent.sent_id!r}")
        H = records[sent.sent_id].astype(np.float64)
        if H.shape[0] != len(sent):
            raise ConfigError(
                f"sentence {sent.sent_id!r}: {len(sent)} words vs {H.shape[0]} vectors"
            )
        filtered, kept = strip_punct(sent)
        if len(filtered) < 2:
            continue
        bank.append((filtered, H[kept]))
    return bank, model_name, layer


def cmd_train_structural(args, section: _Section, run: Run) -> int:
    bank, model_name, layer = _load_treebank_with_vectors(
        section.get_paths("treebanks"), section.get_paths("containers"), run
    )
    if not bank:
        raise ConfigError("no usable sentences in the treebank")
    seed = args.seed if args.seed is not None else section.get_int("seed", 0)
    cfg = _train_config(section, seed, DEFAULT_STRUCTURAL_CONFIG)
    rank = section.get_int("rank", 128)
    probe = train_structural_probe(
        bank, k=rank, cfg=cfg, model_name=model_name, layer=layer
    )
    save_probe(probe, run.out_dir / "probe.csem")
    run.outputs.append("probe.csem")
    metrics = _probe_eval_metrics(probe, bank)
    run.write_json("training_metrics.json", metrics)
    print(f"uuas: {metrics['uuas']:.4f}, dspr: {metrics['distance_spearman']:.4f}")
    return 0


def _probe_eval_metrics(probe, bank) -> dict:
    scores = []
    pairs = []
    for sent, H in bank:
        gold_tree = conllu_to_tree(sent)
        pred_dist = predicted_distances(probe, H)
        pairs.append((pred_dist, tree_distances(gold_tree)))
        if len(sent) >= 2:
            scores.append(uuas(mst_parse(pred_dist), gold_tree))
    return {
        "uuas": float(np.mean(scores)),
        "distance_spearman": distance_spearman(pairs),
        "sentences": len(bank),
    }


def cmd_parse(args, section: _Section, run: Run) -> int:
    probe = load_probe(run.track_input(section.get_path("probe")))
    eset = read_container(run.track_input(section.get_path("container")))
    ids = sorted(eset.records)
    parses = parse_corpus(probe, eset, ids)
    run.write_text("parses.jsonl", parses_to_jsonl(parses))
    print(f"parsed {len(parses)} of {len(ids)} sentences")
    return 0


def cmd_syntax(args, section: _Section, run: Run) -> int:
    probe = load_probe(run.track_input(section.get_path("probe")))
    if section.optional("eval_treebank"):
        bank, _, _ = _load_treebank_with_vectors(
            [section.get_path("eval_treebank")], [section.get_path("eval_container")], run
        )
        run.write_json("treebank_eval.json", _probe_eval_metrics(probe, bank))
    parse_sets = {}
    for name in ("cs", "es", "en"):
        eset = read_container(run.track_input(section.get_path(f"{name}_container")))
        parses = parse_corpus(probe, eset, sorted(eset.records))
        run.write_text(f"parses_{name}.jsonl", parses_to_jsonl(parses))
        parse_sets[name] = dict(parses)
    costs = _cost_model(section)
    comparison = ged_compare(
        parse_sets["cs"],
        parse_sets["es"],
        parse_sets["en"],
        costs=costs,
        node_cap=section.get_int("node_cap", 10),
        budget=section.get_int("budget", 5_000_000),
        jobs=args.jobs,
    )
    run.write_text("ged.csv", comparison.to_csv())
    run.write_json("ged_summary.json", comparison.summary())
    print(
        f"retained {comparison.retained} records (excluded {comparison.excluded}); "
        f"spearman {comparison.spearman:.4f}"
    )
    return 0


def _cost_model(section: _Section) -> GedCostModel:
    raw = section.get_list("costs", "1,1,1,1")
    if len(raw) != 4:
        raise ConfigError("[costs] needs node_insert,node_delete,edge_insert,edge_delete")
    values = [float(v) for v in raw]
    return GedCostModel(*values)


def cmd_ged(args, section: _Section, run: Run) -> int:
    parse_sets = {}
    for name in ("cs", "es", "en"):
        path = run.track_input(section.get_path(f"{name}_parses"))
        parse_sets[name] = dict(parses_from_jsonl(path.read_text(encoding="utf-8")))
    comparison = ged_compare(
        parse_sets["cs"],
        parse_sets["es"],
        parse_sets["en"],
        costs=_cost_model(section),
        node_cap=section.get_int("node_cap", 10),
        budget=section.get_int("budget", 5_000_000),
        jobs=args.jobs,
    )
    run.write_text("ged.csv", comparison.to_csv())
    run.write_json("ged_summary.json", comparison.summary())
    print(
        f"retained {comparison.retained} records (excluded {comparison.excluded}); "
        f"spearman {comparison.spearman:.4f}"
    )
    return 0


def cmd_semantics(args, section: _Section, run: Run) -> int:
    sets = {}
    model = ""
    for key, value in section.items():
        if not key.startswith("set_"):
            continue
        path = Path(value)
        if not path.exists():
            raise ConfigError(f"[semantics] {key}: path does not exist: {path}")
        eset = read_container(run.track_input(path))
        sets[key.removeprefix("set_")] = eset
        model = eset.model_name
    if not sets:
        raise ConfigError("[semantics] needs at least one set_<name> key")
    results = consistency_report(
        sets, include_diagonal=section.get_bool("include_diagonal", False)
    )
    if not results:
        print("no consistency rows could be computed", file=sys.stderr)
        return 1
    run.write_text("consistency.csv", report_to_csv(results, model=model))
    print(f"consistency rows: {len(results)}")
    return 0


COMMANDS: dict[str, Callable] = {
    "stats": cmd_stats,
    "generate": cmd_generate,
    "train-probe": cmd_train_probe,
    "sweep": cmd_sweep,
    "train-structural": cmd_train_structural,
    "parse": cmd_parse,
    "syntax": cmd_syntax,
    "ged": cmd_ged,
    "semantics": cmd_semantics,
}

_CONFIG_ERRORS = (ConfigError, CorpusError, ContainerError, FileNotFoundError, OSError,
                  configparser.Error, KeyError)
_ANALYSIS_ERRORS = (GedBudgetExceededError, ConstantInputError, ValueError, RuntimeError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csprobe",
        description="Code-switching probing analyses over precomputed embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"csprobe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="INI experiment config")
        cmd.add_argument("--out", help="output directory (overrides the config)")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--seeds", help="comma-separated seed list override")
        cmd.add_argument("--jobs", type=int, default=1, help="parallel workers")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"config not found: {config_path}", file=sys.stderr)
        return 2
    parser = configparser.ConfigParser()
    try:
        parser.read(config_path, encoding="utf-8")
        section = _Section(parser, args.command)
        out_dir = Path(args.out) if args.out else Path(section.get("out", "out"))
        run = Run(args.command, config_path, out_dir)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        code = COMMANDS[args.command](args, section, run)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _ANALYSIS_ERRORS as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return 1
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
