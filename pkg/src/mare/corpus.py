"""Corpus data model, JSONL ingestion, schema handling and corpus transforms.

All spans are half-open token intervals ``[start, end)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Malformed corpus record; carries the line number and field path."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(f"field {path}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SchemaError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: Span) -> bool:
        return self.start < other.end and other.start < self.end

    def distance(self, other: Span) -> int:
        """Token gap between two spans; 0 when adjacent or overlapping."""
        return max(0, other.start - self.end, self.start - other.end)


@dataclass(frozen=True, order=True)
class Attribute:
    span: Span
    role: str


@dataclass(frozen=True)
class Entity:
    span: Span
    type: str


@dataclass(frozen=True)
class Relation:
    label: str
    attributes: tuple[Attribute, ...]

    def roles(self) -> Counter:
        return Counter(a.role for a in self.attributes)


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[str, ...]
    entities: tuple[Entity, ...] = ()
    relations: tuple[Relation, ...] = ()
    source: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class RoleSpec:
    name: str
    mandatory: bool = False
    trigger: bool = False
    entity_types: frozenset[str] = frozenset()


@dataclass(frozen=True)
class LabelSpec:
    name: str
    roles: tuple[RoleSpec, ...]
    single_mandatory: bool = False

    def role(self, name: str) -> RoleSpec | None:
        for r in self.roles:
            if r.name == name:
                return r
        return None


@dataclass(frozen=True)
class Schema:
    labels: tuple[LabelSpec, ...]

    def __post_init__(self):
        seen = set()
        for spec in self.labels:
            if spec.name in seen:
                raise SchemaError(f"duplicate label {spec.name!r}")
            seen.add(spec.name)
            if "-" in spec.name or not spec.name:
                raise SchemaError(f"label name {spec.name!r} must be non-empty and contain no '-'")
            names = [r.name for r in spec.roles]
            if not names:
                raise SchemaError(f"label {spec.name!r} has no roles")
            if len(set(names)) != len(names):
                raise SchemaError(f"duplicate role in label {spec.name!r}")
            for n in names:
                if "-" in n or not n:
                    raise SchemaError(f"role name {n!r} must be non-empty and contain no '-'")
            n_mandatory = sum(r.mandatory for r in spec.roles)
            if n_mandatory < 2 and not (spec.single_mandatory and n_mandatory == 1):
                raise SchemaError(
                    f"label {spec.name!r} needs at least two mandatory roles "
                    "or an explicit singleMandatory flag")
            if sum(r.trigger for r in spec.roles) > 1:
                raise SchemaError(f"label {spec.name!r} designates more than one trigger role")

    @property
    def label_names(self) -> list[str]:
        return [spec.name for spec in self.labels]

    def label(self, name: str) -> LabelSpec:
        for spec in self.labels:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def has_label(self, name: str) -> bool:
        return any(spec.name == name for spec in self.labels)

    def label_index(self, name: str) -> int:
        return self.label_names.index(name)

    def role_index(self, label: str, role: str) -> int:
        return [r.name for r in self.label(label).roles].index(role)

    def mandatory_roles(self, label: str) -> frozenset[str]:
        return frozenset(r.name for r in self.label(label).roles if r.mandatory)

    def trigger_role(self, label: str) -> str | None:
        for r in self.label(label).roles:
            if r.trigger:
                return r.name
        return None

    def pairs(self) -> list[tuple[str, str]]:
        """All (label, role) pairs in schema order."""
        return [(spec.name, r.name) for spec in self.labels for r in spec.roles]

    def compatible(self, label: str, role: str, other_label: str, other_role: str) -> bool:
        """Whether an attribute of ``other_role`` can stand in for ``role``.

        Uses entity-type overlap when both roles declare types, role-name
        equality otherwise.
        """
        mine = self.label(label).role(role)
        theirs = self.label(other_label).role(other_role)
        if mine is None or theirs is None:
            return False
        if mine.entity_types and theirs.entity_types:
            return bool(mine.entity_types & theirs.entity_types)
        return role == other_role

    def fingerprint(self) -> str:
        payload = json.dumps(schema_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Schema (de)serialization
# ---------------------------------------------------------------------------

def schema_from_dict(data: dict) -> Schema:
    try:
        labels = []
        for lab in data["labels"]:
            roles = tuple(
                RoleSpec(
                    name=r["name"],
                    mandatory=bool(r.get("mandatory", False)),
                    trigger=bool(r.get("trigger", False)),
                    entity_types=frozenset(r.get("entityTypes", ())),
                )
                for r in lab["roles"]
            )
            labels.append(LabelSpec(lab["name"], roles, bool(lab.get("singleMandatory", False))))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed schema record: {exc!r}") from exc
    return Schema(tuple(labels))


def schema_to_dict(schema: Schema) -> dict:
    labels = []
    for spec in schema.labels:
        entry = {
            "name": spec.name,
            "roles": [
                {
                    "name": r.name,
                    "mandatory": r.mandatory,
                    "trigger": r.trigger,
                    "entityTypes": sorted(r.entity_types),
                }
                for r in spec.roles
            ],
        }
        if spec.single_mandatory:
            entry["singleMandatory"] = True
        labels.append(entry)
    return {"labels": labels}


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as f:
        return schema_from_dict(json.load(f))


def save_schema(schema: Schema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(schema_to_dict(schema), f, indent=2, ensure_ascii=False)
        f.write("\n")


# ---------------------------------------------------------------------------
# Corpus (de)serialization
# ---------------------------------------------------------------------------

def _int_field(record: dict, key: str, line: int, path: str) -> int:
    try:
        value = record[key]
    except KeyError:
        raise CorpusError("missing field", line, f"{path}.{key}") from None
    if not isinstance(value, int) or isinstance(value, bool):
        raise CorpusError(f"expected integer, got {value!r}", line, f"{path}.{key}")
    return value


def _span(record: dict, n: int, doc_id: str, line: int, path: str) -> Span:
    start = _int_field(record, "start", line, path)
    end = _int_field(record, "end", line, path)
    if not 0 <= start < end <= n:
        raise CorpusError(
            f"span [{start}, {end}) out of bounds for document {doc_id!r} with {n} tokens",
            line, path)
    return Span(start, end)


def document_from_dict(record: dict, line: int | None = None) -> Document:
    if not isinstance(record, dict):
        raise CorpusError("record is not an object", line)
    doc_id = record.get("id")
    if not isinstance(doc_id, str):
        raise CorpusError("missing or non-string id", line, "id")
    tokens = record.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusError("tokens must be an array of strings", line, "tokens")
    if not tokens:
        raise CorpusError(f"document {doc_id!r} has no tokens", line, "tokens")
    n = len(tokens)

    entities = []
    for i, ent in enumerate(record.get("entities", [])):
        path = f"entities[{i}]"
        if not isinstance(ent, dict) or not isinstance(ent.get("type"), str):
            raise CorpusError("entity needs a string type", line, path)
        entities.append(Entity(_span(ent, n, doc_id, line, path), ent["type"]))

    relations = []
    for i, rel in enumerate(record.get("relations", [])):
        path = f"relations[{i}]"
        if not isinstance(rel, dict) or not isinstance(rel.get("label"), str):
            raise CorpusError("relation needs a string label", line, path)
        attrs = rel.get("attributes")
        if not isinstance(attrs, list) or not attrs:
            raise CorpusError("relation needs at least one attribute", line, f"{path}.attributes")
        attributes = []
        for j, att in enumerate(attrs):
            apath = f"{path}.attributes[{j}]"
            if not isinstance(att, dict) or not isinstance(att.get("role"), str):
                raise CorpusError("attribute needs a string role", line, apath)
            attributes.append(Attribute(_span(att, n, doc_id, line, apath), att["role"]))
        relations.append(Relation(rel["label"], tuple(attributes)))

    source = record.get("source")
    if source is not None and not isinstance(source, str):
        raise CorpusError("source must be a string", line, "source")
    return Document(doc_id, tuple(tokens), tuple(entities), tuple(relations), source)


def document_to_dict(doc: Document) -> dict:
    record = {
        "id": doc.id,
        "tokens": list(doc.tokens),
        "entities": [{"start": e.span.start, "end": e.span.end, "type": e.type} for e in doc.entities],
        "relations": [
            {
                "label": r.label,
                "attributes": [
                    {"start": a.span.start, "end": a.span.end, "role": a.role} for a in r.attributes
                ],
            }
            for r in doc.relations
        ],
    }
    if doc.source is not None:
        record["source"] = doc.source
    return record


def parse_corpus(stream: Iterable[str]) -> list[Document]:
    """Parse line-delimited JSON documents, preserving input order.

    Blank lines are skipped. Raises :class:`CorpusError` with the 1-based
    line number on malformed JSON, missing fields or out-of-bounds spans.
    """
    docs = []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from exc
        docs.append(document_from_dict(record, lineno))
    return docs


def read_corpus(path: str | Path) -> list[Document]:
    with open(path, encoding="utf-8") as f:
        return parse_corpus(f)


def serialize_document(doc: Document) -> str:
    return json.dumps(document_to_dict(doc), ensure_ascii=False, separators=(",", ":"))


def write_corpus(docs: Iterable[Document], out: str | Path | IO[str]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as f:
            write_corpus(docs, f)
        return
    for doc in docs:
        out.write(serialize_document(doc))
        out.write("\n")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    doc_id: str
    kind: str
    message: str
    label: str | None = None
    role: str | None = None

    def __str__(self) -> str:
        return f"{self.doc_id}: {self.kind}: {self.message}"


def validate_document(doc: Document, schema: Schema) -> list[Violation]:
    """Check a document against the schema; violations are returned, not raised."""
    out = []
    entity_types: dict[Span, set[str]] = defaultdict(set)
    for ent in doc.entities:
        entity_types[ent.span].add(ent.type)

    for rel in doc.relations:
        if not schema.has_label(rel.label):
            out.append(Violation(doc.id, "unknown-label", f"label {rel.label!r} not in schema",
                                 label=rel.label))
            continue
        spec = schema.label(rel.label)
        spans = [a.span for a in rel.attributes]
        if len(set(spans)) != len(spans):
            out.append(Violation(doc.id, "duplicate-span",
                                 f"{rel.label!r} uses a span for more than one attribute",
                                 label=rel.label))
        for att in rel.attributes:
            role = spec.role(att.role)
            if role is None:
                out.append(Violation(doc.id, "unknown-role",
                                     f"role {att.role!r} not defined for label {rel.label!r}",
                                     label=rel.label, role=att.role))
                continue
            if att.span.end > len(doc.tokens):
                out.append(Violation(doc.id, "out-of-bounds",
                                     f"span [{att.span.start}, {att.span.end}) exceeds document",
                                     label=rel.label, role=att.role))
            if role.entity_types and not (entity_types.get(att.span, set()) & role.entity_types):
                found = sorted(entity_types.get(att.span, ())) or ["none"]
                out.append(Violation(
                    doc.id, "incompatible-entity",
                    f"{rel.label}.{att.role} at [{att.span.start}, {att.span.end}) is backed by "
                    f"entity type {', '.join(found)}; expected one of {sorted(role.entity_types)}",
                    label=rel.label, role=att.role))
    return out


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class CorpusStats:
    """Additive corpus statistics; explicitness is derived from raw counts."""

    document_count: int = 0
    relation_count: int = 0
    entity_count: int = 0
    word_count: int = 0
    attribute_count_distribution: dict[str, Counter] = field(default_factory=dict)
    attribute_frequency: Counter = field(default_factory=Counter)
    compatible_entity_count: Counter = field(default_factory=Counter)
    multi_trigger_relation_count: int = 0

    @property
    def explicitness(self) -> dict[tuple[str, str], float]:
        keys = set(self.attribute_frequency) | set(self.compatible_entity_count)
        out = {}
        for key in sorted(keys):
            denom = self.compatible_entity_count[key]
            out[key] = min(1.0, self.attribute_frequency[key] / denom) if denom else 0.0
        return out

    def merge(self, other: CorpusStats) -> CorpusStats:
        dist = {k: Counter(v) for k, v in self.attribute_count_distribution.items()}
        for label, hist in other.attribute_count_distribution.items():
            dist.setdefault(label, Counter()).update(hist)
        return CorpusStats(
            document_count=self.document_count + other.document_count,
            relation_count=self.relation_count + other.relation_count,
            entity_count=self.entity_count + other.entity_count,
            word_count=self.word_count + other.word_count,
            attribute_count_distribution=dist,
            attribute_frequency=_add_keep_zero(self.attribute_frequency, other.attribute_frequency),
            compatible_entity_count=_add_keep_zero(self.compatible_entity_count,
                                                   other.compatible_entity_count),
            multi_trigger_relation_count=(self.multi_trigger_relation_count
                                          + other.multi_trigger_relation_count),
        )

    def to_dict(self) -> dict:
        return {
            "documentCount": self.document_count,
            "relationCount": self.relation_count,
            "entityCount": self.entity_count,
            "wordCount": self.word_count,
            "attributeCountDistribution": {
                label: {str(k): hist[k] for k in sorted(hist)}
                for label, hist in sorted(self.attribute_count_distribution.items())
            },
            "explicitness": [
                {"label": label, "role": role, "value": round(value, 4),
                 "attributeCount": self.attribute_frequency[(label, role)],
                 "compatibleEntityCount": self.compatible_entity_count[(label, role)]}
                for (label, role), value in self.explicitness.items()
            ],
            "multiTriggerRelationCount": self.multi_trigger_relation_count,
        }


def _add_keep_zero(a: Counter, b: Counter) -> Counter:
    out = Counter()
    for key in set(a) | set(b):
        out[key] = a[key] + b[key]
    return out


def corpus_stats(corpus: Iterable[Document], schema: Schema) -> CorpusStats:
    stats = CorpusStats()
    freq = Counter({pair: 0 for pair in schema.pairs()})
    compat = Counter({pair: 0 for pair in schema.pairs()})
    role_types = {
        (spec.name, r.name): r.entity_types for spec in schema.labels for r in spec.roles
    }
    for doc in corpus:
        stats.document_count += 1
        stats.word_count += len(doc.tokens)
        stats.entity_count += len(doc.entities)
        for ent in doc.entities:
            for pair, types in role_types.items():
                if ent.type in types:
                    compat[pair] += 1
        for rel in doc.relations:
            stats.relation_count += 1
            stats.attribute_count_distribution.setdefault(rel.label, Counter())[
                len(rel.attributes)] += 1
            for att in rel.attributes:
                freq[(rel.label, att.role)] += 1
            if schema.has_label(rel.label):
                trig = schema.trigger_role(rel.label)
                if trig is not None and rel.roles()[trig] > 1:
                    stats.multi_trigger_relation_count += 1
    stats.attribute_frequency = freq
    stats.compatible_entity_count = compat
    return stats


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def resolve_trigger(relation: Relation, schema: Schema) -> Relation | None:
    """Keep only the first trigger-role attribute; ``None`` if there is none."""
    trig = schema.trigger_role(relation.label)
    if trig is None:
        return None
    triggers = [a for a in relation.attributes if a.role == trig]
    if not triggers:
        return None
    if len(triggers) == 1:
        return relation
    first = min(triggers, key=lambda a: (a.span.start, a.span.end))
    kept = tuple(a for a in relation.attributes if a.role != trig or a == first)
    return Relation(relation.label, kept)


def unresolved_triggers(doc: Document, schema: Schema) -> list[Relation]:
    """Relations that cannot be given a trigger (no trigger role declared or present)."""
    return [r for r in doc.relations if resolve_trigger(r, schema) is None]


def assign_triggers(doc: Document, schema: Schema) -> Document:
    """Return a copy of ``doc`` where each relation has exactly one trigger.

    Surplus trigger attributes are dropped, keeping the one with the smallest
    start. Relations without any trigger-role attribute are kept unchanged
    and logged; use :func:`unresolved_triggers` to collect them.
    """
    relations = []
    changed = False
    for rel in doc.relations:
        resolved = resolve_trigger(rel, schema)
        if resolved is None:
            logger.warning("document %s: relation %s has no trigger attribute", doc.id, rel.label)
            resolved = rel
        changed |= resolved is not rel
        relations.append(resolved)
    if not changed:
        return doc
    return Document(doc.id, doc.tokens, doc.entities, tuple(relations), doc.source)


def is_binary(relations: Iterable[Relation], schema: Schema, include_empty: bool = False) -> bool:
    """True when every relation has exactly two mandatory-role attribute instances."""
    relations = list(relations)
    if not relations:
        return include_empty
    for rel in relations:
        mandatory = schema.mandatory_roles(rel.label) if schema.has_label(rel.label) else frozenset()
        if sum(1 for a in rel.attributes if a.role in mandatory) != 2:
            return False
    return True


def binary_subset(corpus: Iterable[Document], schema: Schema,
                  include_empty: bool = False) -> list[Document]:
    """Documents whose relations all have exactly two mandatory attributes.

    Relation-free documents are excluded unless ``include_empty`` is set.
    """
    return [doc for doc in corpus if is_binary(doc.relations, schema, include_empty)]


def iter_relations(corpus: Iterable[Document]) -> Iterator[tuple[Document, Relation]]:
    for doc in corpus:
        for rel in doc.relations:
            yield doc, rel
