"""Command-line interface: train, predict, eval, stats, synth, convert.

Data goes to files; progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from mare import crf, span
from mare.assembler import AssemblyConfig
from mare.corpus import (CorpusError, SchemaError, binary_subset, corpus_stats, load_schema,
                         read_corpus, save_schema, validate_document, write_corpus)
from mare.errors import ConfigError
from mare.evalkit import Strategy, evaluate, render_table, render_tsv
from mare.artifact import ArtifactError
from mare.pipeline import (approach_of, gold_relations, load_any_model, predict_relations,
                           predictions_records, read_predictions, write_predictions)

logger = logging.getLogger("mare")


@dataclass
class RunConfig:
    """Merged view of a JSON config file and command-line overrides."""

    approach: str = "seq"
    seed: int = 0
    corpus: list[str] = field(default_factory=list)
    schema: str | None = None
    model: str | None = None
    predictions: str | None = None
    out: str | None = None
    train: crf.TrainConfig = field(default_factory=crf.TrainConfig)
    span: span.SpanConfig = field(default_factory=span.SpanConfig)
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        data = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            data = json.loads(path.read_text(encoding="utf-8"))
        cfg = cls()
        for key in ("approach", "seed", "schema", "model", "predictions", "out"):
            value = getattr(args, key, None)
            if value is None:
                value = data.get(key)
            if value is not None:
                setattr(cfg, key, value)
        corpus = getattr(args, "corpus", None) or data.get("corpus") or []
        cfg.corpus = [corpus] if isinstance(corpus, str) else list(corpus)
        if cfg.approach not in ("seq", "span"):
            raise ConfigError(f"approach must be 'seq' or 'span', got {cfg.approach!r}")

        train = dict(data.get("train", {}))
        spanc = dict(data.get("span", {}))
        assembly = dict(data.get("assembly", {}))
        train.setdefault("seed", cfg.seed)
        spanc.setdefault("seed", cfg.seed)
        if getattr(args, "seed", None) is not None:
            train["seed"] = spanc["seed"] = args.seed
        for name, section, key in (("epochs", (train, spanc), "epochs"),
                                   ("batch_size", (train, spanc), "batch_size"),
                                   ("learning_rate", (train,), "learning_rate"),
                                   ("learning_rate", (spanc,), "head_lr"),
                                   ("embedding_lr", (spanc,), "embedding_lr"),
                                   ("hash_bits", (train,), "hash_bits"),
                                   ("max_span_width", (spanc,), "max_span_width"),
                                   ("threshold", (spanc,), "threshold"),
                                   ("max_relation_width", (assembly,), "max_relation_width")):
            value = getattr(args, name, None)
            if value is not None:
                for target in section:
                    target[key] = value
        try:
            cfg.train = crf.TrainConfig(**_known(crf.TrainConfig, train))
            cfg.span = span.SpanConfig(**_known(span.SpanConfig, spanc))
            cfg.assembly = AssemblyConfig(**_known(AssemblyConfig, assembly))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def _known(cls, data: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return data


def _require(value, flag: str):
    if value is None or value == []:
        raise ConfigError(f"missing required {flag}")
    return value


def _schema(cfg: RunConfig):
    path = Path(_require(cfg.schema, "--schema"))
    if not path.exists():
        raise ConfigError(f"schema file not found: {path}")
    return load_schema(path)


def _corpus(path: str):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"corpus file not found: {path}")
    return read_corpus(path)


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_suffix(suffix) if out.suffix else out.with_name(out.name + suffix)


def cmd_train(args) -> int:
    cfg = RunConfig.from_args(args)
    schema = _schema(cfg)
    docs = [d for p in _require(cfg.corpus, "--corpus") for d in _corpus(p)]
    model_path = Path(_require(cfg.model, "--model"))
    fatal = [v for d in docs for v in validate_document(d, schema)
             if v.kind in ("unknown-label", "unknown-role")]
    if fatal:
        shown = "\n  ".join(str(v) for v in fatal[:5])
        raise ConfigError(f"corpus does not match schema ({len(fatal)} problems):\n  {shown}")
    if not docs:
        raise ConfigError("cannot train on an empty corpus")

    t0 = time.perf_counter()
    if cfg.approach == "seq":
        model = crf.train(docs, schema, cfg.train)
        crf.save_model(model, model_path)
    else:
        model = span.train(docs, schema, cfg.span)
        span.save_model(model, model_path)
    final = model.history[-1] if model.history else float("nan")
    print(f"final training loss {final:.6f}; elapsed {time.perf_counter() - t0:.1f}s",
          file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    cfg = RunConfig.from_args(args)
    schema = _schema(cfg)
    model = load_any_model(_require(cfg.model, "--model"))
    crf.check_schema(model, schema)
    docs = [d for p in _require(cfg.corpus, "--corpus") for d in _corpus(p)]
    out = Path(_require(cfg.out, "--out"))
    threshold = args.threshold
    if threshold is not None and approach_of(model) == "seq":
        logger.warning("--threshold has no effect on sequence tagging models")
    relations = [predict_relations(model, d, schema, cfg.assembly, threshold) for d in docs]
    write_predictions(predictions_records(docs, relations), out)
    if args.spans_out and approach_of(model) == "span":
        write_predictions((span.prediction_record(d.id, span.predict(model, d, threshold=threshold))
                           for d in docs), args.spans_out)
    logger.info("wrote %d documents, %d relations to %s", len(docs),
                sum(len(r) for r in relations), out)
    return 0


def cmd_eval(args) -> int:
    cfg = RunConfig.from_args(args)
    schema = _schema(cfg)
    gold_docs = [d for p in _require(cfg.corpus, "--corpus") for d in _corpus(p)]
    pred_path = Path(_require(cfg.predictions, "--predictions"))
    if not pred_path.exists():
        raise ConfigError(f"predictions file not found: {pred_path}")
    pred = read_predictions(pred_path)
    gold = gold_relations(gold_docs)
    missing = sorted(set(gold) - set(pred))
    extra = sorted(set(pred) - set(gold))
    if missing:
        logger.warning("%d gold documents have no predictions (scored as empty): %s",
                       len(missing), ", ".join(missing[:10]))
    if extra:
        logger.warning("%d predicted documents are not in the gold corpus: %s",
                       len(extra), ", ".join(extra[:10]))
    strategies = [Strategy.parse(s) for s in args.strategy.split(",")] if args.strategy else list(
        Strategy)
    name = args.name or pred_path.stem
    rep = evaluate(pred, gold, schema, strategies, args.exclude_triggers, args.per_label, name)

    out = Path(_require(cfg.out, "--out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(rep.to_dict(), indent=2) + "\n", encoding="utf-8")
    _sidecar(out, ".tsv").write_text(render_tsv(rep), encoding="utf-8")
    table = render_table({name: rep})
    _sidecar(out, ".txt").write_text(table, encoding="utf-8")
    if not args.no_figures:
        from mare.plotting import scores_chart
        scores_chart({name: rep}, _sidecar(out, ".png"))
    sys.stderr.write(table)
    return 0


def cmd_stats(args) -> int:
    cfg = RunConfig.from_args(args)
    schema = _schema(cfg)
    splits = {}
    for item in _require(cfg.corpus, "--corpus"):
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        splits[name] = _corpus(path)

    total = None
    split_report = {}
    for name, docs in splits.items():
        st = corpus_stats(docs, schema)
        total = st if total is None else total.merge(st)
        split_report[name] = {
            "documentCount": st.document_count,
            "relationCount": st.relation_count,
            "entityCount": st.entity_count,
            "wordCount": st.word_count,
            "multiTriggerRelationCount": st.multi_trigger_relation_count,
            "binarySubsetSize": len(binary_subset(docs, schema)),
        }
    if total is None:
        total = corpus_stats([], schema)
    record = {"splits": split_report, "total": total.to_dict()}

    out = Path(_require(cfg.out, "--out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    rows = ["split\tdocuments\trelations\tentities\twords\tmultiTrigger\tbinarySubset"]
    for name, s in split_report.items():
        rows.append("\t".join(str(x) for x in (
            name, s["documentCount"], s["relationCount"], s["entityCount"], s["wordCount"],
            s["multiTriggerRelationCount"], s["binarySubsetSize"])))
    _sidecar(out, ".tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if not args.no_figures:
        from mare.plotting import attribute_count_boxplot, explicitness_chart
        attribute_count_boxplot(total, _sidecar(out, ".attributes.png"))
        explicitness_chart(total, _sidecar(out, ".explicitness.png"))
    return 0


def cmd_synth(args) -> int:
    from mare.synth import SynthConfig, generate, synth_schema

    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        data = data.get("synth", data)
    for key in ("document_count", "seed", "same_label_pair_probability",
                "shared_span_probability", "ambiguity_probability",
                "optional_attribute_probability", "multi_relation_probability",
                "max_relation_width"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    try:
        config = SynthConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synth config: {exc}") from exc
    write_corpus(generate(config), _require(args.out, "--out"))
    if args.schema:
        save_schema(synth_schema(config), args.schema)
    return 0


def cmd_convert(args) -> int:
    from mare.smartdata import convert_file, infer_schema

    src = Path(args.input)
    if not src.exists():
        raise ConfigError(f"input file not found: {src}")
    docs = convert_file(src)
    write_corpus(docs, args.out)
    if args.schema_out:
        save_schema(infer_schema(docs), args.schema_out)
    logger.info("converted %d documents", len(docs))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mare", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus_help="corpus JSONL file (repeatable)"):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--corpus", action="append", help=corpus_help)
        p.add_argument("--schema", help="schema JSON file")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--approach", choices=["seq", "span"])
    p.add_argument("--model", help="output model artifact")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--embedding-lr", type=float)
    p.add_argument("--hash-bits", type=int)
    p.add_argument("--max-span-width", type=int)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict relations")
    common(p)
    p.add_argument("--model", help="model artifact")
    p.add_argument("--out", help="output predictions JSONL")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-relation-width", type=int)
    p.add_argument("--spans-out", help="also dump raw span probabilities (span models)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold")
    common(p, "gold corpus JSONL file (repeatable)")
    p.add_argument("--predictions", help="predictions JSONL")
    p.add_argument("--out", help="output report JSON; .tsv/.txt/.png written alongside")
    p.add_argument("--strategy", help="comma list of ar,cl,mre,cre,bre (default: all)")
    p.add_argument("--exclude-triggers", action="store_true")
    p.add_argument("--per-label", action="store_true")
    p.add_argument("--name", help="model name shown in the table")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="corpus statistics")
    common(p, "corpus file, optionally name=path (repeatable, one per split)")
    p.add_argument("--out", help="output stats JSON; .tsv and figures written alongside")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="JSON synth configuration")
    p.add_argument("--out", help="output corpus JSONL")
    p.add_argument("--schema", help="write the matching schema here")
    p.add_argument("--count", dest="document_count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--same-label-pair-probability", type=float)
    p.add_argument("--shared-span-probability", type=float)
    p.add_argument("--ambiguity-probability", type=float)
    p.add_argument("--optional-attribute-probability", type=float)
    p.add_argument("--multi-relation-probability", type=float)
    p.add_argument("--max-relation-width", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert the SmartData distribution")
    p.add_argument("--input", required=True, help="SmartData JSON-lines file")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.add_argument("--schema-out", help="write an inferred draft schema here")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "train"
                        else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CorpusError, SchemaError, ArtifactError, OSError) as exc:
        print(f"mare {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
