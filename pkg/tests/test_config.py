import json

import pytest

from hornbilliard.config import build, config_hash, load_shipped, parse_config, read_doc, shipped_doc
from hornbilliard.errors import ConfigError
from hornbilliard.table import reference_config, validate_table


def test_reference_matches_builtin():
    run = load_shipped("reference")
    assert run.table == reference_config()
    assert run.seed == 7
    assert run.opposite_map == {1: 0}


def test_minimal_two_scatterer_config_validates():
    run = load_shipped("two_scatterers")
    assert validate_table(run.table, n_theta=32, n_phi=17).ok


def test_horn_without_beta_names_the_field():
    doc = shipped_doc("reference")
    del doc["table"]["obstacles"][1]["beta"]
    with pytest.raises(ConfigError, match=r"table/obstacles/1: 'beta' is a required property"):
        build(doc)


@pytest.mark.parametrize("edit,where", [
    (lambda d: d["table"].update(kind="sphere"), "table/kind"),
    (lambda d: d["table"]["obstacles"][0].update(beta=2.0), "table/obstacles/0"),
    (lambda d: d["table"].update(width=-1), "table/width"),
    (lambda d: d.update(colour="red"), "<root>"),
    (lambda d: d.update(seed=-3), "seed"),
])
def test_schema_violations(edit, where):
    doc = shipped_doc("reference")
    edit(doc)
    with pytest.raises(ConfigError, match=where):
        build(doc)


def test_opposite_map_index_checked():
    doc = shipped_doc("reference")
    doc["opposite_map"] = {"1": 9}
    with pytest.raises(ConfigError, match="opposite_map"):
        build(doc)


def test_json_syntax_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "table": {,\n}')
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config(p)
    with pytest.raises(ConfigError):
        read_doc(tmp_path / "missing.json")


def test_hash_ignores_whitespace_and_key_order(tmp_path):
    doc = shipped_doc("reference")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps(doc, indent=4))
    b.write_text(json.dumps(dict(reversed(list(doc.items()))), separators=(",", ":")))
    ra, rb = parse_config(a), parse_config(b)
    assert ra.config_hash == rb.config_hash == config_hash(doc)
    assert ra.table == rb.table
    doc["seed"] = 8
    assert config_hash(doc) != ra.config_hash


def test_quadrature_section():
    doc = shipped_doc("reference")
    doc["quadrature"] = {"rel_tol": 1e-6}
    assert build(doc).quadrature.rel_tol == 1e-6
    doc["quadrature"] = {"rel_tol": 0.5}
    with pytest.raises(ConfigError):
        build(doc)


def test_unknown_shipped_name():
    with pytest.raises(ConfigError):
        load_shipped("nope")
