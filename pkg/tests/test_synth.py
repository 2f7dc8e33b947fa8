from collections import Counter

import pytest

from mare.assembler import AssemblyConfig, assemble
from mare.corpus import corpus_stats, serialize_document, validate_document
from mare.synth import SynthConfig, default_templates, generate, synth_schema
from mare.tagscheme import gold_pairs


def relation_key(rel):
    return (rel.label, tuple(sorted((a.span.start, a.span.end, a.role) for a in rel.attributes)))


def assembles_to_gold(doc, schema, width):
    out = assemble(gold_pairs(doc), schema, AssemblyConfig(max_relation_width=width))
    return Counter(relation_key(r.relation) for r in out) == Counter(
        relation_key(r) for r in doc.relations)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(document_count=0)
    with pytest.raises(ValueError):
        SynthConfig(shared_span_probability=1.5)


def test_config_dict_round_trip():
    cfg = SynthConfig(document_count=7, seed=3)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


def test_deterministic_per_seed():
    a = [serialize_document(d) for d in generate(SynthConfig(document_count=50, seed=5))]
    b = [serialize_document(d) for d in generate(SynthConfig(document_count=50, seed=5))]
    c = [serialize_document(d) for d in generate(SynthConfig(document_count=50, seed=6))]
    assert a == b
    assert a != c


def test_phrase_vocabularies_unambiguous():
    seen = {}
    for tpl in default_templates():
        for role in tpl.roles:
            for phrase in role.phrases:
                assert seen.setdefault(phrase, (tpl.label, role.name)) == (tpl.label, role.name)


def test_generated_documents_validate():
    cfg = SynthConfig(document_count=500, seed=8, same_label_pair_probability=0.5,
                      shared_span_probability=0.5, ambiguity_probability=0.2)
    schema = synth_schema(cfg)
    for d in generate(cfg):
        assert validate_document(d, schema) == []


def test_same_label_pair_forced():
    cfg = SynthConfig(document_count=200, seed=1, same_label_pair_probability=1.0,
                      empty_document_probability=0.0)
    for d in generate(cfg):
        by_label = Counter(r.label for r in d.relations)
        pairs = [label for label, c in by_label.items() if c == 2]
        assert pairs
        first, second = [r for r in d.relations if r.label == pairs[0]]
        gap = (min(a.span.start for a in second.attributes)
               - max(a.span.end for a in first.attributes))
        assert gap > cfg.max_relation_width


def test_shared_span_forced():
    cfg = SynthConfig(document_count=200, seed=2, shared_span_probability=1.0,
                      empty_document_probability=0.0)
    for d in generate(cfg):
        owners = Counter(a.span for r in d.relations for a in set(r.attributes))
        assert max(owners.values()) >= 2


def test_empty_documents_allowed():
    docs = generate(SynthConfig(document_count=100, seed=4, empty_document_probability=1.0))
    assert all(not d.relations for d in docs)


def test_assembler_recovers_gold_without_ambiguity():
    cfg = SynthConfig(document_count=300, seed=9, same_label_pair_probability=0.4,
                      shared_span_probability=0.4)
    schema = synth_schema(cfg)
    docs = generate(cfg)
    assert all(assembles_to_gold(d, schema, cfg.max_relation_width) for d in docs)


def test_stats_on_synthetic_corpus():
    cfg = SynthConfig(document_count=100, seed=0)
    s = corpus_stats(generate(cfg), synth_schema(cfg))
    assert s.document_count == 100
    assert 0 < s.relation_count
    assert all(0.0 <= v <= 1.0 for v in s.explicitness.values())
