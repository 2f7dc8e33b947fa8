import pytest

from mare.corpus import (Attribute, Document, Entity, LabelSpec, Relation, RoleSpec, Schema,
                         Span)
from mare.synth import SynthConfig, generate, synth_schema


def rel(label, *atts):
    """rel("Accident", ("Trigger", 1, 2), ("Location", 3, 4))"""
    return Relation(label, tuple(Attribute(Span(s, e), role) for role, s, e in atts))


def doc(tokens, *relations, entities=(), doc_id="d1"):
    if isinstance(tokens, int):
        tokens = [f"t{i}" for i in range(tokens)]
    return Document(doc_id, tuple(tokens), tuple(entities), tuple(relations))


def toy_schema(location_types=()):
    loc = frozenset(location_types)
    return Schema((
        LabelSpec("Accident", (
            RoleSpec("Trigger", True, True),
            RoleSpec("Location", True, entity_types=loc),
            RoleSpec("Delay"),
        )),
        LabelSpec("Obstruction", (
            RoleSpec("Trigger", True, True),
            RoleSpec("Location", True, entity_types=loc),
            RoleSpec("Cause"),
        )),
        LabelSpec("TrafficJam", (
            RoleSpec("Trigger", True, True),
            RoleSpec("Location", True, entity_types=loc),
            RoleSpec("JamLength"),
        )),
    ))


@pytest.fixture
def schema():
    return toy_schema()


@pytest.fixture(scope="session")
def synth_small():
    cfg = SynthConfig(document_count=200, seed=11, same_label_pair_probability=0.3,
                      shared_span_probability=0.3)
    return generate(cfg), synth_schema(cfg)


__all__ = ["rel", "doc", "toy_schema", "Entity"]


# -- acceptance reporting -------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.skipped:
            status = "SKIP"
        else:
            status = "PASS" if report.passed else "FAIL"
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        if report.skipped and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        # parametrized criteria report their worst outcome and every detail
        rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
        if number in _CRITERIA:
            old_status, _, old_detail = _CRITERIA[number]
            status = max(status, old_status, key=rank.get)
            detail = "; ".join(x for x in (old_detail, detail) if x)
        _CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"criterion {number}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
