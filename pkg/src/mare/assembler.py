"""Rule-based grouping of flat attribute predictions into relations.

Pipeline: group by label, borrow missing mandatory attributes from nearby
relations (shared arguments), then split same-label groups at wide gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from mare.corpus import Attribute, Relation, Schema


@dataclass(frozen=True)
class AssemblyConfig:
    max_relation_width: int = 20
    enable_completion: bool = True
    enable_splitting: bool = True

    def __post_init__(self):
        if self.max_relation_width < 1:
            raise ValueError("max_relation_width must be at least 1")


@dataclass(frozen=True)
class AssembledRelation:
    label: str
    attributes: tuple[Attribute, ...]
    completed: tuple[Attribute, ...] = ()
    mandatory_complete: bool = False

    @property
    def relation(self) -> Relation:
        return Relation(self.label, self.attributes)

    def roles(self) -> set[str]:
        return {a.role for a in self.attributes}


def _sorted(attributes: Iterable[Attribute]) -> tuple[Attribute, ...]:
    return tuple(sorted(set(attributes), key=lambda a: (a.span.start, a.span.end, a.role)))


def _make(label: str, attributes, schema: Schema | None, completed=()) -> AssembledRelation:
    attributes = _sorted(attributes)
    completed = tuple(a for a in attributes if a in set(completed))
    complete = False
    if schema is not None and schema.has_label(label):
        complete = schema.mandatory_roles(label) <= {a.role for a in attributes}
    return AssembledRelation(label, attributes, completed, complete)


def group_by_label(predictions: Iterable[tuple[str, Attribute]],
                   schema: Schema | None = None) -> list[AssembledRelation]:
    groups: dict[str, set[Attribute]] = {}
    for label, att in predictions:
        groups.setdefault(label, set()).add(att)

    def order(label):
        if schema is not None and schema.has_label(label):
            return (0, schema.label_index(label), label)
        return (1, 0, label)

    return [_make(label, groups[label], schema) for label in sorted(groups, key=order)]


def complete_shared(relations: list[AssembledRelation], schema: Schema,
                    config: AssemblyConfig) -> list[AssembledRelation]:
    """Fill missing mandatory roles with compatible attributes of other relations.

    A candidate must lie within ``max_relation_width`` tokens of the
    relation's nearest attribute; the nearest candidate wins, ties go to the
    smaller start. Donors keep their attributes.
    """
    out = []
    for idx, rel in enumerate(relations):
        if not schema.has_label(rel.label):
            out.append(rel)
            continue
        present = rel.roles()
        spans = {a.span for a in rel.attributes}
        added = []
        # copied attributes count as relation attributes for the distance
        # gate, so repeat until nothing else comes within reach
        progress = True
        while progress:
            progress = False
            current = rel.attributes + tuple(added)
            for role_spec in schema.label(rel.label).roles:
                if not role_spec.mandatory or role_spec.name in present:
                    continue
                best = None
                for other_idx, other in enumerate(relations):
                    if other_idx == idx or not schema.has_label(other.label):
                        continue
                    for cand in other.attributes:
                        if cand in other.completed or cand.span in spans:
                            continue
                        if not schema.compatible(rel.label, role_spec.name, other.label,
                                                 cand.role):
                            continue
                        dist = min(cand.span.distance(a.span) for a in current)
                        if dist > config.max_relation_width:
                            continue
                        key = (dist, cand.span.start, cand.span.end)
                        if best is None or key < best[0]:
                            best = (key, cand)
                if best is not None:
                    att = Attribute(best[1].span, role_spec.name)
                    added.append(att)
                    spans.add(att.span)
                    present.add(role_spec.name)
                    progress = True
                    break
        if added:
            out.append(_make(rel.label, rel.attributes + tuple(added), schema,
                             rel.completed + tuple(added)))
        else:
            out.append(rel)
    return out


def split_same_label(relation: AssembledRelation, schema: Schema,
                     config: AssemblyConfig) -> list[AssembledRelation]:
    """Split at the leftmost wide gap that leaves both sides mandatory-complete."""
    atts = relation.attributes
    if not schema.has_label(relation.label):
        return [relation]
    mandatory = schema.mandatory_roles(relation.label)
    for i in range(1, len(atts)):
        gap = atts[i].span.start - atts[i - 1].span.end
        if gap <= config.max_relation_width:
            continue
        left, right = atts[:i], atts[i:]
        if mandatory <= {a.role for a in left} and mandatory <= {a.role for a in right}:
            done = set(relation.completed)
            head = _make(relation.label, left, schema, [a for a in left if a in done])
            tail = AssembledRelation(relation.label, right,
                                     tuple(a for a in right if a in done), True)
            return [head] + split_same_label(tail, schema, config)
    return [relation]


def assemble(predictions: Iterable[tuple[str, Attribute]], schema: Schema,
             config: AssemblyConfig | None = None) -> list[AssembledRelation]:
    config = config or AssemblyConfig()
    relations = group_by_label(predictions, schema)
    if config.enable_completion:
        relations = complete_shared(relations, schema, config)
    if config.enable_splitting:
        relations = [part for rel in relations for part in split_same_label(rel, schema, config)]
    return relations


def flatten(relations: Iterable[Relation | AssembledRelation]) -> set[tuple[str, Attribute]]:
    return {(r.label, a) for r in relations for a in r.attributes}


def relation_record(rel: AssembledRelation) -> dict:
    completed = set(rel.completed)
    return {
        "label": rel.label,
        "mandatoryComplete": rel.mandatory_complete,
        "attributes": [
            {"start": a.span.start, "end": a.span.end, "role": a.role, "completed": a in completed}
            for a in rel.attributes
        ],
    }


def document_record(doc_id: str, relations: Iterable[AssembledRelation]) -> dict:
    return {"docId": doc_id, "relations": [relation_record(r) for r in relations]}
