"""Relation extraction scoring under five strategies.

AR   attribute triples (span, label, role), grouping ignored
Cl   relation label only
MRE  label plus the exact set of mandatory attributes
CRE  label plus the exact full attribute set
BRE  MRE restricted to documents whose gold relations are all binary

Relations are paired one-to-one per document, greedily; counts are
micro-averaged over documents.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from mare.corpus import Relation, Schema, is_binary

logger = logging.getLogger(__name__)

RelationsByDoc = Mapping[str, Sequence[Relation]]


class Strategy(str, Enum):
    AR = "AR"
    CL = "Cl"
    MRE = "MRE"
    CRE = "CRE"
    BRE = "BRE"

    @classmethod
    def parse(cls, text: str) -> Strategy:
        for s in cls:
            if s.value.lower() == text.strip().lower():
                return s
        raise ValueError(f"unknown strategy {text!r}; choose from ar, cl, mre, cre, bre")


STRATEGY_ORDER = tuple(Strategy)


@dataclass(frozen=True)
class PRF:
    true_positives: int
    predicted_count: int
    gold_count: int

    def __post_init__(self):
        if self.true_positives > min(self.predicted_count, self.gold_count):
            raise ValueError("more true positives than predictions or gold items")

    @property
    def precision(self) -> float:
        return self.true_positives / self.predicted_count if self.predicted_count else 0.0

    @property
    def recall(self) -> float:
        return self.true_positives / self.gold_count if self.gold_count else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: PRF) -> PRF:
        return PRF(self.true_positives + other.true_positives,
                   self.predicted_count + other.predicted_count,
                   self.gold_count + other.gold_count)

    def to_dict(self, digits: int = 4) -> dict:
        return {
            "precision": round(self.precision, digits),
            "recall": round(self.recall, digits),
            "f1": round(self.f1, digits),
            "truePositives": self.true_positives,
            "predictedCount": self.predicted_count,
            "goldCount": self.gold_count,
        }


ZERO = PRF(0, 0, 0)


def _mandatory_set(rel: Relation, schema: Schema) -> frozenset:
    mandatory = schema.mandatory_roles(rel.label) if schema.has_label(rel.label) else frozenset()
    return frozenset((a.span, a.role) for a in rel.attributes if a.role in mandatory)


def _full_set(rel: Relation) -> frozenset:
    return frozenset((a.span, a.role) for a in rel.attributes)


def match_cl(pred: Relation, gold: Relation, schema: Schema | None = None) -> bool:
    return pred.label == gold.label


def match_mre(pred: Relation, gold: Relation, schema: Schema) -> bool:
    return pred.label == gold.label and _mandatory_set(pred, schema) == _mandatory_set(gold, schema)


def match_cre(pred: Relation, gold: Relation, schema: Schema | None = None) -> bool:
    return pred.label == gold.label and _full_set(pred) == _full_set(gold)


def _order_key(rel: Relation):
    atts = sorted((a.span.start, a.span.end, a.role) for a in rel.attributes)
    return (rel.label, atts[0][0] if atts else -1, atts)


def match_relations(pred: Sequence[Relation], gold: Sequence[Relation],
                    criterion: Callable[[Relation, Relation], bool]) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing; returns (pred index, gold index) pairs."""
    pred_order = sorted(range(len(pred)), key=lambda i: _order_key(pred[i]))
    gold_order = sorted(range(len(gold)), key=lambda i: _order_key(gold[i]))
    used = set()
    pairs = []
    for i in pred_order:
        for j in gold_order:
            if j not in used and criterion(pred[i], gold[j]):
                used.add(j)
                pairs.append((i, j))
                break
    return pairs


def _doc_ids(pred: RelationsByDoc, gold: RelationsByDoc) -> list[str]:
    unknown = sorted(set(pred) - set(gold))
    if unknown:
        logger.debug("%d predicted documents have no gold entry: %s", len(unknown),
                       ", ".join(unknown[:10]))
    return sorted(set(pred) | set(gold))


def score_ar(pred: RelationsByDoc, gold: RelationsByDoc) -> PRF:
    total = ZERO
    for doc_id in _doc_ids(pred, gold):
        p = {(a.span, r.label, a.role) for r in pred.get(doc_id, ()) for a in r.attributes}
        g = {(a.span, r.label, a.role) for r in gold.get(doc_id, ()) for a in r.attributes}
        total += PRF(len(p & g), len(p), len(g))
    return total


def _score_matched(pred: RelationsByDoc, gold: RelationsByDoc, criterion) -> PRF:
    total = ZERO
    for doc_id in _doc_ids(pred, gold):
        p, g = list(pred.get(doc_id, ())), list(gold.get(doc_id, ()))
        total += PRF(len(match_relations(p, g, criterion)), len(p), len(g))
    return total


def score_cl(pred: RelationsByDoc, gold: RelationsByDoc) -> PRF:
    return _score_matched(pred, gold, match_cl)


def score_mre(pred: RelationsByDoc, gold: RelationsByDoc, schema: Schema) -> PRF:
    return _score_matched(pred, gold, lambda p, g: match_mre(p, g, schema))


def score_cre(pred: RelationsByDoc, gold: RelationsByDoc, schema: Schema | None = None) -> PRF:
    return _score_matched(pred, gold, match_cre)


def binary_documents(gold: RelationsByDoc, schema: Schema) -> set[str]:
    return {doc_id for doc_id, rels in gold.items() if is_binary(rels, schema)}


def score_bre(pred: RelationsByDoc, gold: RelationsByDoc, schema: Schema) -> PRF:
    keep = binary_documents(gold, schema)
    return score_mre({d: pred.get(d, ()) for d in keep}, {d: gold[d] for d in keep}, schema)


def strip_triggers(relations_by_doc: RelationsByDoc, schema: Schema) -> dict[str, list[Relation]]:
    """Remove trigger-role attributes; relations left empty are dropped."""
    out = {}
    for doc_id, rels in relations_by_doc.items():
        kept = []
        for rel in rels:
            trig = schema.trigger_role(rel.label) if schema.has_label(rel.label) else None
            atts = tuple(a for a in rel.attributes if a.role != trig)
            if atts:
                kept.append(rel if len(atts) == len(rel.attributes) else Relation(rel.label, atts))
        out[doc_id] = kept
    return out


def score(strategy: Strategy, pred: RelationsByDoc, gold: RelationsByDoc, schema: Schema) -> PRF:
    if strategy is Strategy.AR:
        return score_ar(pred, gold)
    if strategy is Strategy.CL:
        return score_cl(pred, gold)
    if strategy is Strategy.MRE:
        return score_mre(pred, gold, schema)
    if strategy is Strategy.CRE:
        return score_cre(pred, gold, schema)
    return score_bre(pred, gold, schema)


def _by_label(relations_by_doc: RelationsByDoc, label: str) -> dict[str, list[Relation]]:
    return {d: [r for r in rels if r.label == label] for d, rels in relations_by_doc.items()}


@dataclass
class MetricsReport:
    scores: dict[Strategy, PRF]
    exclude_triggers: bool = False
    per_label: dict[str, dict[Strategy, PRF]] = field(default_factory=dict)
    model: str | None = None

    def to_dict(self) -> dict:
        ordered = [s for s in STRATEGY_ORDER if s in self.scores]
        record = {
            "config": {
                "excludeTriggers": self.exclude_triggers,
                "strategies": [s.value for s in ordered],
            },
            "scores": {s.value: self.scores[s].to_dict() for s in ordered},
        }
        if self.model is not None:
            record["config"]["model"] = self.model
        if self.per_label:
            record["perLabel"] = {
                label: {s.value: prfs[s].to_dict() for s in ordered if s in prfs}
                for label, prfs in self.per_label.items()
            }
        return record


def evaluate(pred: RelationsByDoc, gold: RelationsByDoc, schema: Schema,
             strategies: Iterable[Strategy] = STRATEGY_ORDER, exclude_triggers: bool = False,
             per_label: bool = False, model: str | None = None) -> MetricsReport:
    strategies = [s for s in STRATEGY_ORDER if s in set(strategies)]
    binary = binary_documents(gold, schema)
    if exclude_triggers:
        pred, gold = strip_triggers(pred, schema), strip_triggers(gold, schema)

    def run(s, p, g):
        if s is Strategy.BRE:
            return score_mre({d: p.get(d, ()) for d in binary},
                             {d: g.get(d, ()) for d in binary}, schema)
        return score(s, p, g, schema)

    scores = {s: run(s, pred, gold) for s in strategies}
    breakdown = {}
    if per_label:
        for label in schema.label_names:
            p, g = _by_label(pred, label), _by_label(gold, label)
            breakdown[label] = {s: run(s, p, g) for s in strategies}
    return MetricsReport(scores, exclude_triggers, breakdown, model)


def report(scores: MetricsReport) -> dict:
    return scores.to_dict()


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def render_table(reports: Mapping[str, MetricsReport]) -> str:
    """Model x strategy table with F1/P/R rows per model."""
    strategies = []
    for rep in reports.values():
        for s in STRATEGY_ORDER:
            if s in rep.scores and s not in strategies:
                strategies.append(s)
    strategies.sort(key=STRATEGY_ORDER.index)
    name_w = max([len("Model")] + [len(n) for n in reports]) + 2
    header = f"{'Model':<{name_w}}{'':<4}" + "".join(f"{s.value:>8}" for s in strategies)
    lines = [header, "-" * len(header)]
    for name, rep in reports.items():
        for k, metric in enumerate(("f1", "precision", "recall")):
            short = {"f1": "F1", "precision": "P", "recall": "R"}[metric]
            cells = "".join(
                f"{_fmt(getattr(rep.scores[s], metric)):>8}" if s in rep.scores else f"{'-':>8}"
                for s in strategies)
            lines.append(f"{name if k == 0 else '':<{name_w}}{short:<4}{cells}")
    return "\n".join(lines) + "\n"


def render_tsv(rep: MetricsReport) -> str:
    rows = ["strategy\tprecision\trecall\tf1\ttp\tpredicted\tgold"]
    for s in STRATEGY_ORDER:
        if s in rep.scores:
            prf = rep.scores[s]
            rows.append("\t".join([s.value, _fmt(prf.precision), _fmt(prf.recall), _fmt(prf.f1),
                                   str(prf.true_positives), str(prf.predicted_count),
                                   str(prf.gold_count)]))
    return "\n".join(rows) + "\n"


def group_relations(items: Iterable[tuple[str, Relation]]) -> dict[str, list[Relation]]:
    out: dict[str, list[Relation]] = defaultdict(list)
    for doc_id, rel in items:
        out[doc_id].append(rel)
    return dict(out)
