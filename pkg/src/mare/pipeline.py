"""End-to-end prediction for both approaches, and prediction file I/O."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from mare import crf, span
from mare.artifact import read_artifact
from mare.assembler import AssembledRelation, AssemblyConfig, assemble, document_record
from mare.corpus import Attribute, CorpusError, Document, Relation, Schema, Span
from mare.errors import ConfigError
from mare.tagscheme import decode


def load_any_model(path: str | Path):
    kind = read_artifact(path).get("format")
    if kind == crf.ARTIFACT_FORMAT:
        return crf.load_model(path)
    if kind == span.ARTIFACT_FORMAT:
        return span.load_model(path)
    raise ConfigError(f"{path}: unknown model format {kind!r}")


def approach_of(model) -> str:
    return "seq" if isinstance(model, crf.CrfModel) else "span"


def predict_attributes(model, doc: Document, threshold: float | None = None,
                       suppress_overlaps: bool = True) -> set[tuple[str, Attribute]]:
    if isinstance(model, crf.CrfModel):
        return decode(crf.predict(model, doc))
    preds = span.predict(model, doc, threshold=threshold)
    return span.to_attributes(preds, suppress_overlaps)


def predict_relations(model, doc: Document, schema: Schema,
                      config: AssemblyConfig | None = None,
                      threshold: float | None = None) -> list[AssembledRelation]:
    crf.check_schema(model, schema)
    return assemble(predict_attributes(model, doc, threshold), schema, config)


def write_predictions(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
            f.write("\n")


def predictions_records(docs: Iterable[Document], relations: Iterable[list[AssembledRelation]]):
    for doc, rels in zip(docs, relations):
        yield document_record(doc.id, rels)


def read_predictions(path: str | Path) -> dict[str, list[Relation]]:
    """Read the assembled-relations format into relations keyed by document id."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rels = [
                    Relation(r["label"], tuple(Attribute(Span(a["start"], a["end"]), a["role"])
                                               for a in r["attributes"]))
                    for r in rec["relations"]
                ]
                out[rec["docId"]] = [r for r in rels if r.attributes]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"bad prediction record: {exc}", lineno) from exc
    return out


def gold_relations(docs: Iterable[Document]) -> dict[str, list[Relation]]:
    return {doc.id: list(doc.relations) for doc in docs}
