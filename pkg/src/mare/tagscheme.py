"""BIO tags carrying relation label and attribute role.

A tag is ``o`` or ``b-<label>-<role>`` / ``i-<label>-<role>``. Each token
holds one tag, so a span can belong to at most one relation; overlapping
gold attributes are resolved by :func:`conflict_priority` at encode time.
"""

from __future__ import annotations

from dataclasses import dataclass

from mare.corpus import Attribute, Document, Relation, Schema, Span


@dataclass(frozen=True)
class Tag:
    kind: str
    label: str | None = None
    role: str | None = None

    def __post_init__(self):
        if self.kind == "o":
            if self.label is not None or self.role is not None:
                raise ValueError("o tag carries no label/role")
        elif self.kind in ("b", "i"):
            if not self.label or not self.role:
                raise ValueError(f"{self.kind} tag needs label and role")
        else:
            raise ValueError(f"unknown tag kind {self.kind!r}")

    def __str__(self) -> str:
        if self.kind == "o":
            return "o"
        return f"{self.kind}-{self.label}-{self.role}"

    @classmethod
    def parse(cls, text: str) -> Tag:
        if text == "o":
            return OUTSIDE
        kind, _, rest = text.partition("-")
        label, _, role = rest.partition("-")
        return cls(kind, label, role)


OUTSIDE = Tag("o")


@dataclass(frozen=True)
class DroppedAttribute:
    label: str
    attribute: Attribute
    reason: str


@dataclass(frozen=True)
class EncodingReport:
    dropped: tuple[DroppedAttribute, ...] = ()

    @property
    def conflict_free(self) -> bool:
        return not self.dropped


def tag_set(schema: Schema) -> list[Tag]:
    tags = [OUTSIDE]
    for label, role in schema.pairs():
        tags.append(Tag("b", label, role))
        tags.append(Tag("i", label, role))
    return tags


def tag_index(schema: Schema) -> dict[Tag, int]:
    return {tag: i for i, tag in enumerate(tag_set(schema))}


def conflict_priority(relations: tuple[Relation, ...], schema: Schema):
    """Sort key for attributes competing for the same tokens (lower wins).

    The relation whose earliest attribute starts first wins; ties go to
    schema label order, then role order.
    """
    def key(item):
        rel_idx, att = item
        rel = relations[rel_idx]
        earliest = min(a.span.start for a in rel.attributes)
        return (earliest, schema.label_index(rel.label), rel_idx,
                schema.role_index(rel.label, att.role), att.span.start, att.span.end)
    return key


def encode(doc: Document, schema: Schema) -> tuple[list[Tag], EncodingReport]:
    """Tag a document's gold attributes; overlapping losers are reported."""
    items = [(i, att) for i, rel in enumerate(doc.relations) for att in rel.attributes]
    items.sort(key=conflict_priority(doc.relations, schema))

    owner: list[tuple[str, Attribute] | None] = [None] * len(doc.tokens)
    tags = [OUTSIDE] * len(doc.tokens)
    dropped = []
    for rel_idx, att in items:
        label = doc.relations[rel_idx].label
        span = att.span
        clash = next((owner[t] for t in range(span.start, span.end) if owner[t] is not None), None)
        if clash is not None:
            other_label, other = clash
            if other_label == label and other == att:
                reason = "duplicate of an identical attribute"
            else:
                reason = (f"overlaps {other_label}.{other.role} "
                          f"[{other.span.start}, {other.span.end})")
            dropped.append(DroppedAttribute(label, att, reason))
            continue
        for t in range(span.start, span.end):
            owner[t] = (label, att)
            tags[t] = Tag("b" if t == span.start else "i", label, att.role)
    return tags, EncodingReport(tuple(dropped))


def decode(tags: list[Tag] | list[str], schema: Schema | None = None) -> set[tuple[str, Attribute]]:
    """Collect maximal b/i runs into (label, Attribute) pairs.

    An ``i`` that does not continue a run of the same label and role starts a
    new attribute. Never fails on well-formed tags.
    """
    out = set()
    current: tuple[str, str] | None = None
    start = 0
    for t, tag in enumerate(tags):
        if isinstance(tag, str):
            tag = Tag.parse(tag)
        key = (tag.label, tag.role) if tag.kind != "o" else None
        continues = tag.kind == "i" and key == current
        if current is not None and not continues:
            out.add((current[0], Attribute(Span(start, t), current[1])))
            current = None
        if key is not None and not continues:
            current = key
            start = t
    if current is not None:
        out.add((current[0], Attribute(Span(start, len(tags)), current[1])))
    return out


def gold_pairs(doc: Document) -> set[tuple[str, Attribute]]:
    return {(rel.label, att) for rel in doc.relations for att in rel.attributes}
