"""Deterministic synthetic corpora with known relation grouping.

Documents are built from per-(label, role) phrase vocabularies joined by
filler tokens. The generator can inject optional attributes, several
relations per document, same-label pairs separated by a wide gap, and
spans shared between two relations.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field

from mare.corpus import (Attribute, Document, Entity, LabelSpec, Relation, RoleSpec, Schema,
                         Span)


@dataclass
class RoleTemplate:
    name: str
    phrases: list[str]
    entity_type: str
    mandatory: bool = False
    trigger: bool = False


@dataclass
class RelationTemplate:
    label: str
    roles: list[RoleTemplate]

    @property
    def mandatory(self) -> list[RoleTemplate]:
        return [r for r in self.roles if r.mandatory]

    @property
    def optional(self) -> list[RoleTemplate]:
        return [r for r in self.roles if not r.mandatory]


def _r(name, phrases, etype, mandatory=False, trigger=False):
    return RoleTemplate(name, phrases, etype, mandatory, trigger)


def default_templates() -> list[RelationTemplate]:
    return [
        RelationTemplate("Accident", [
            _r("Trigger", ["Unfall", "Auffahrunfall", "Verkehrsunfall", "schwerer Crash",
                           "Zusammenstoß"], "accident-trigger", True, True),
            _r("Location", ["A 61", "A 4", "Aachener Kreuz", "Kreuz Leverkusen", "A 44"],
               "location", True),
            _r("Delay", ["10 Min", "25 Min", "40 Min"], "duration"),
            _r("Date", ["Montagmorgen", "Dienstagabend", "gestern Nacht"], "date"),
        ]),
        RelationTemplate("Obstruction", [
            _r("Trigger", ["gesperrt", "Vollsperrung", "blockiert", "Sperrung", "dicht"],
               "obstruction-trigger", True, True),
            _r("Location", ["B 56", "B 258", "Bonner Straße", "Rheinuferstraße", "Zoobrücke"],
               "location", True),
            _r("Cause", ["Bauarbeiten", "Hochwasser", "Marathon", "Demonstration"], "cause"),
            _r("StartLoc", ["Eifeltor", "Heumarkt", "Neumarkt"], "location"),
            _r("EndLoc", ["Ebertplatz", "Barbarossaplatz", "Rudolfplatz"], "location"),
        ]),
        RelationTemplate("TrafficJam", [
            _r("Trigger", ["Stau", "stockender Verkehr", "Rückstau", "zähfließender Verkehr"],
               "jam-trigger", True, True),
            _r("Location", ["A3", "A57", "Kölner Ring", "Autobahnkreuz Bonn"], "location", True),
            _r("JamLength", ["5 km", "8 km", "12 km"], "distance"),
            _r("Delay", ["1 Stunde", "2 Stunden", "3 Stunden"], "duration"),
        ]),
        RelationTemplate("Acquisition", [
            _r("Trigger", ["übernimmt", "kauft", "Übernahme"], "acquisition-trigger",
               trigger=True),
            _r("Buyer", ["Siemens", "Bayer AG", "Daimler", "Telekom"], "organization", True),
            _r("Acquired", ["Monsanto", "Osram", "Rocket Internet", "Kabel Deutschland"],
               "organization", True),
            _r("Price", ["500 Millionen Euro", "63 Milliarden Dollar", "7 Milliarden Euro"],
               "money"),
            _r("Date", ["Januar", "Februar", "2019"], "date"),
        ]),
    ]


FILLER = ["der", "die", "das", "laut", "Polizei", "es", "kam", "zu", "einem", "und", "wegen",
          "heute", "meldet", "nach", "Angaben", "im", "Bereich", "von", "aktuell", "derzeit",
          "hinter", "vor", "wie", "berichtet", "wurde", "ist", "sind", "noch", "mit", ","]
CONNECTORS = ["auf", "bei", "in", "Richtung", "am", "seit", "für"]
DISTRACTORS = [("Hauptbahnhof", "location"), ("Flughafen", "location"), ("Lufthansa", "organization"),
               ("BASF", "organization"), ("Freitag", "date")]
SOURCES = ["news", "rss", "twitter"]


@dataclass
class SynthConfig:
    document_count: int = 100
    optional_attribute_probability: float = 0.4
    multi_relation_probability: float = 0.4
    same_label_pair_probability: float = 0.15
    shared_span_probability: float = 0.15
    ambiguity_probability: float = 0.0
    distractor_probability: float = 0.3
    empty_document_probability: float = 0.1
    max_relation_width: int = 20
    seed: int = 0
    templates: list[RelationTemplate] = field(default_factory=default_templates)

    def __post_init__(self):
        if self.document_count < 1:
            raise ValueError("document_count must be at least 1")
        for name in ("optional_attribute_probability", "multi_relation_probability",
                     "same_label_pair_probability", "shared_span_probability",
                     "ambiguity_probability", "distractor_probability",
                     "empty_document_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        self.templates = [t if isinstance(t, RelationTemplate) else _template_from_dict(t)
                          for t in self.templates]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SynthConfig:
        data = dict(data)
        if "templates" in data:
            data["templates"] = [_template_from_dict(t) for t in data["templates"]]
        return cls(**data)


def _template_from_dict(data: dict) -> RelationTemplate:
    if isinstance(data, RelationTemplate):
        return data
    return RelationTemplate(data["label"], [
        RoleTemplate(r["name"], list(r["phrases"]), r["entity_type"], r.get("mandatory", False),
                     r.get("trigger", False))
        for r in data["roles"]])


def synth_schema(config: SynthConfig | None = None) -> Schema:
    config = config or SynthConfig()
    labels = []
    for tpl in config.templates:
        roles = tuple(RoleSpec(r.name, r.mandatory, r.trigger, frozenset([r.entity_type]))
                      for r in tpl.roles)
        labels.append(LabelSpec(tpl.label, roles))
    return Schema(tuple(labels))


class _Builder:
    def __init__(self):
        self.tokens: list[str] = []
        self.entities: list[Entity] = []
        self.relations: list[Relation] = []

    def filler(self, rng: random.Random, lo: int, hi: int) -> None:
        for _ in range(rng.randint(lo, hi)):
            self.tokens.append(rng.choice(FILLER))

    def phrase(self, text: str, entity_type: str | None) -> Span:
        words = text.split()
        span = Span(len(self.tokens), len(self.tokens) + len(words))
        self.tokens.extend(words)
        if entity_type is not None:
            self.entities.append(Entity(span, entity_type))
        return span


def _pick_roles(rng: random.Random, tpl: RelationTemplate, p_optional: float) -> list[RoleTemplate]:
    roles = list(tpl.mandatory)
    roles += [r for r in tpl.optional if rng.random() < p_optional]
    rng.shuffle(roles)
    # put the trigger first when present, like a headline
    roles.sort(key=lambda r: not r.trigger)
    return roles


def _clause(b: _Builder, rng: random.Random, tpl: RelationTemplate, roles: list[RoleTemplate],
            shared: tuple[Attribute, ...] = ()) -> Relation:
    atts = list(shared)
    for k, role in enumerate(roles):
        if k:
            if rng.random() < 0.5:
                b.tokens.append(rng.choice(CONNECTORS))
            if rng.random() < 0.3:
                b.tokens.append(rng.choice(FILLER))
        span = b.phrase(rng.choice(role.phrases), role.entity_type)
        atts.append(Attribute(span, role.name))
    return Relation(tpl.label, tuple(atts))


def _shared_pairs(templates: list[RelationTemplate]):
    pairs = []
    for a in templates:
        for b in templates:
            if a is b:
                continue
            names = {r.name for r in a.mandatory if not r.trigger} & {
                r.name for r in b.mandatory if not r.trigger}
            for name in sorted(names):
                pairs.append((a, b, name))
    return pairs


def generate_document(rng: random.Random, config: SynthConfig, doc_id: str) -> Document:
    b = _Builder()
    templates = config.templates
    b.filler(rng, 0, 4)
    segments = []
    if rng.random() >= config.empty_document_probability:
        # one instance per label, except inside the pair segments
        used: set[str] = set()

        def add(kind, p):
            free = [t for t in templates if t.label not in used]
            if free and rng.random() < p:
                tpl = rng.choice(free)
                used.add(tpl.label)
                segments.append((kind, tpl))

        shared_options = _shared_pairs(templates)
        if shared_options and rng.random() < config.shared_span_probability:
            winner, loser, name = rng.choice(shared_options)
            used |= {winner.label, loser.label}
            segments.append(("shared", (winner, loser, name)))
        else:
            add("single", 1.0)
        add("pair", config.same_label_pair_probability)
        add("single", config.multi_relation_probability)
        add("close-pair", config.ambiguity_probability)

    for k, (kind, payload) in enumerate(segments):
        if k:
            b.filler(rng, 3, 6)
        if rng.random() < config.distractor_probability:
            word, etype = rng.choice(DISTRACTORS)
            b.phrase(word, etype)
            b.filler(rng, 3, 4)
        if kind == "single":
            b.relations.append(_clause(b, rng, payload, _pick_roles(
                rng, payload, config.optional_attribute_probability)))
        elif kind == "shared":
            winner, loser, role_name = payload
            w_roles = [r for r in _pick_roles(rng, winner, config.optional_attribute_probability)]
            shared_role = next(r for r in w_roles if r.name == role_name)
            w_roles.remove(shared_role)
            # shared attribute goes last so it is the winner's closest span to the loser
            w_roles.append(shared_role)
            w_rel = _clause(b, rng, winner, w_roles)
            b.relations.append(w_rel)
            shared_att = next(a for a in w_rel.attributes if a.role == role_name)
            b.tokens.append(rng.choice(CONNECTORS))
            l_roles = [r for r in _pick_roles(rng, loser, config.optional_attribute_probability)
                       if r.name != role_name]
            b.relations.append(_clause(b, rng, loser, l_roles,
                                       (Attribute(shared_att.span, role_name),)))
        else:
            wide = kind == "pair"
            for inst in range(2):
                if inst:
                    if wide:
                        b.filler(rng, config.max_relation_width + 1, config.max_relation_width + 5)
                    else:
                        b.filler(rng, 1, 3)
                b.relations.append(_clause(b, rng, payload, _pick_roles(
                    rng, payload, config.optional_attribute_probability)))
    b.filler(rng, 0, 3)
    b.tokens.append(".")
    return Document(doc_id, tuple(b.tokens), tuple(b.entities),
                    tuple(Relation(r.label, tuple(sorted(r.attributes))) for r in b.relations),
                    rng.choice(SOURCES))


def generate(config: SynthConfig | None = None) -> list[Document]:
    config = config or SynthConfig()
    rng = random.Random(config.seed)
    return [generate_document(rng, config, f"synth-{config.seed}-{i:05d}")
            for i in range(config.document_count)]
