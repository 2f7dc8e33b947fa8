"""Conversion of the published SmartData JSON-lines distribution.

Each source line is a document with character-offset ``tokens``,
``conceptMentions`` and ``relationMentions``. Offsets are mapped to token
indices through the token character spans; raw text is never re-tokenized.
The field layout follows the v3 release and has not been checked against
other versions.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_left, bisect_right
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Iterator

from mare.corpus import (Attribute, CorpusError, Document, Entity, LabelSpec, Relation, RoleSpec,
                         Schema, Span)

logger = logging.getLogger(__name__)


def _name(text: str) -> str:
    return text.replace("-", "_")


class _TokenIndex:
    def __init__(self, char_spans: list[tuple[int, int]]):
        self.starts = [s for s, _ in char_spans]
        self.ends = [e for _, e in char_spans]

    def to_tokens(self, start: int, end: int) -> Span:
        first = bisect_right(self.ends, start)
        last = bisect_left(self.starts, end) - 1
        if last < first:
            raise ValueError(f"characters [{start}, {end}) cover no token")
        return Span(first, last + 1)


def _char_span(obj: dict) -> tuple[int, int]:
    span = obj.get("span", obj)
    return int(span["start"]), int(span["end"])


def convert_record(record: dict, line: int | None = None) -> Document:
    try:
        text = record.get("text", "")
        tokens, char_spans = [], []
        for tok in record["tokens"]:
            start, end = _char_span(tok)
            char_spans.append((start, end))
            tokens.append(tok.get("word") or tok.get("text") or text[start:end])
        index = _TokenIndex(char_spans)

        entities = []
        for cm in record.get("conceptMentions", []):
            entities.append(Entity(index.to_tokens(*_char_span(cm)), cm["type"]))

        relations = []
        for rm in record.get("relationMentions", []):
            attrs = []
            seen = set()
            for arg in rm.get("args", []):
                cm = arg.get("conceptMention", arg)
                att = Attribute(index.to_tokens(*_char_span(cm)), _name(arg["role"]))
                if att not in seen:
                    seen.add(att)
                    attrs.append(att)
            if attrs:
                relations.append(Relation(_name(rm["name"]), tuple(attrs)))
        source = record.get("metadata", {}).get("source") if isinstance(
            record.get("metadata"), dict) else None
        return Document(str(record["id"]), tuple(tokens), tuple(entities), tuple(relations),
                        source)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"cannot convert SmartData record: {exc!r}", line) from exc


def convert_lines(lines: Iterable[str]) -> Iterator[Document]:
    for lineno, line in enumerate(lines, 1):
        if line.strip():
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from exc
            yield convert_record(record, lineno)


def convert_file(path: str | Path) -> list[Document]:
    with open(path, encoding="utf-8") as f:
        return list(convert_lines(f))


def infer_schema(docs: Iterable[Document], trigger_name: str = "trigger") -> Schema:
    """Draft schema from observed relations.

    Roles present in every instance of a label are mandatory; if fewer than
    two qualify, the two most frequent roles are. Entity types are the
    types observed on each role's spans.
    """
    instances = Counter()
    role_freq: dict[str, Counter] = defaultdict(Counter)
    role_types: dict[tuple[str, str], set[str]] = defaultdict(set)
    order: dict[str, list[str]] = defaultdict(list)
    for doc in docs:
        types = defaultdict(set)
        for ent in doc.entities:
            types[ent.span].add(ent.type)
        for rel in doc.relations:
            instances[rel.label] += 1
            for role in set(rel.roles()):
                role_freq[rel.label][role] += 1
            for att in rel.attributes:
                if att.role not in order[rel.label]:
                    order[rel.label].append(att.role)
                role_types[(rel.label, att.role)] |= types.get(att.span, set())
    labels = []
    for label in sorted(instances):
        freq = role_freq[label]
        mandatory = {r for r, c in freq.items() if c == instances[label]}
        if len(mandatory) < 2:
            mandatory = {r for r, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:2]}
        roles = tuple(
            RoleSpec(r, r in mandatory, r.lower() == trigger_name,
                     frozenset(role_types[(label, r)]))
            for r in sorted(order[label]))
        labels.append(LabelSpec(label, roles, single_mandatory=len(roles) < 2))
    return Schema(tuple(labels))
