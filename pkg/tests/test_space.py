import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlftune.errors import (DimensionMismatch, DuplicatePlaceholder, ParseError, SchemaInvalid,
                            UnknownParameter, UnresolvedPlaceholder, ValueOutOfBounds)
from hlftune.space import (ConfigSpace, Constraint, ParameterSpec, bundle_hash, canonical, check_feasible,
                           decode, encode, load_space, materialize, space_from_dict)


def test_default_schema_has_317_parameters(fabric_space):
    assert fabric_space.d == 317
    assert len(set(fabric_space.names)) == 317


def test_default_templates_cover_every_parameter(fabric_space, fabric_templates):
    bundle = materialize(fabric_space.defaults(), fabric_templates, fabric_space)
    assert set(bundle) == set(fabric_templates)
    assert all("{{" not in text for text in bundle.values())


def test_defaults_are_feasible(fabric_space):
    assert check_feasible(fabric_space.defaults(), fabric_space) == []


def test_encode_log_and_linear(small_space):
    cfg = {"batch.timeout": 1.0, "batch.max": 1000, "preferred": 1, "absolute": 2048, "db": "CouchDB", "gossip": True}
    x = encode(cfg, small_space)
    assert x[0] == pytest.approx(0.5)  # log midpoint of [0.1, 10]
    assert x[1] == 1.0 and x[2] == 0.0 and x[3] == 1.0
    assert x[4] == 0.75 and x[5] == 0.75


def test_decode_roundtrip_typed(small_space):
    cfg = {"batch.timeout": 2.5, "batch.max": 17, "preferred": 512, "absolute": 1024, "db": "goleveldb", "gossip": False}
    assert decode(encode(cfg, small_space), small_space) == cfg


def test_decode_rejects_out_of_cube(small_space):
    with pytest.raises(ValueOutOfBounds):
        decode(np.full(small_space.d, 1.2), small_space)
    with pytest.raises(DimensionMismatch):
        decode(np.zeros(3), small_space)


def test_encode_errors(small_space):
    cfg = {"batch.timeout": 1.0, "batch.max": 5, "preferred": 1, "absolute": 2, "db": "goleveldb", "gossip": True}
    with pytest.raises(UnknownParameter):
        encode({**cfg, "nope": 1}, small_space)
    with pytest.raises(ValueOutOfBounds):
        encode({**cfg, "batch.max": 5000}, small_space)
    with pytest.raises(ValueOutOfBounds):
        encode({**cfg, "db": "mysql"}, small_space)
    with pytest.raises(ValueOutOfBounds):
        encode({**cfg, "gossip": 1}, small_space)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6))
def test_canonical_is_idempotent(u):
    space = ConfigSpace((
        ParameterSpec("a", "numeric-float", 0.1, 10.0, scale="log"),
        ParameterSpec("b", "numeric-int", 1, 1000),
        ParameterSpec("c", "numeric-int", 2, 4096, scale="log"),
        ParameterSpec("d", "categorical", choices=("x", "y", "z")),
        ParameterSpec("e", "boolean"),
        ParameterSpec("f", "numeric-float", -5.0, 5.0),
    ))
    c1 = canonical(np.array(u), space)
    assert np.array_equal(canonical(c1, space), c1)
    assert decode(c1, space) == decode(np.array(u), space)


def test_less_equal_constraint(small_space):
    base = {"batch.timeout": 1.0, "batch.max": 5, "db": "goleveldb", "gossip": True}
    assert check_feasible({**base, "preferred": 512, "absolute": 1024}, small_space) == []
    bad = check_feasible({**base, "preferred": 2000, "absolute": 1024}, small_space)
    assert len(bad) == 1 and bad[0].kind == "less-equal"


def test_implies_and_forbidden_combo():
    space = ConfigSpace(
        (ParameterSpec("db", "categorical", choices=("leveldb", "CouchDB")),
         ParameterSpec("timeout", "numeric-int", 1, 60),
         ParameterSpec("p", "boolean"), ParameterSpec("q", "boolean")),
        (Constraint("implies", {"if": ["db", "==", "CouchDB"], "then": ["timeout", ">=", 10]}),
         Constraint("forbidden-combo", {"values": {"p": True, "q": True}})),
    )
    ok = {"db": "CouchDB", "timeout": 10, "p": True, "q": False}
    assert check_feasible(ok, space) == []
    assert check_feasible({**ok, "db": "leveldb", "timeout": 1}, space) == []
    assert [c.kind for c in check_feasible({**ok, "timeout": 5, "q": True}, space)] == ["implies", "forbidden-combo"]


def test_schema_validation():
    with pytest.raises(SchemaInvalid):
        ParameterSpec("x", "numeric-int", 5, 5)
    with pytest.raises(SchemaInvalid):
        ParameterSpec("x", "numeric-float", 0.0, 1.0, scale="log")
    with pytest.raises(SchemaInvalid):
        ParameterSpec("x", "categorical", choices=("a",))
    with pytest.raises(SchemaInvalid):
        ConfigSpace((ParameterSpec("x", "boolean"), ParameterSpec("x", "boolean")))
    with pytest.raises(SchemaInvalid):
        space_from_dict({"params": [{"name": "x", "kind": "boolean", "colour": 1}]})
    with pytest.raises(ParseError):
        space_from_dict({"nothing": []})


def test_load_space_yaml_and_missing(tmp_path, small_space):
    import yaml

    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(small_space.to_dict()))
    assert load_space(p) == small_space
    with pytest.raises(ParseError):
        load_space(tmp_path / "missing.json")


def test_materialize_renders_and_hashes(small_space, small_templates):
    cfg = {"batch.timeout": 2.0, "batch.max": 7, "preferred": 1, "absolute": 2, "db": "CouchDB", "gossip": False}
    b = materialize(cfg, small_templates, small_space)
    assert "Timeout: 2.0\n" in b["orderer.yaml"] and "Max: 7\n" in b["orderer.yaml"]
    assert b["core.yaml"] == "db: CouchDB\ngossip: false\n"
    h = bundle_hash(b)
    assert h == bundle_hash(dict(reversed(list(b.items()))))
    assert h != bundle_hash(materialize({**cfg, "batch.max": 8}, small_templates, small_space))


def test_materialize_placeholder_errors(small_space, small_templates):
    cfg = small_space.defaults() | {"batch.timeout": 1.0, "batch.max": 1, "preferred": 1, "absolute": 1,
                                     "db": "CouchDB", "gossip": True}
    with pytest.raises(UnresolvedPlaceholder):
        materialize(cfg, {**small_templates, "x": "{{nope}}"}, small_space)
    with pytest.raises(DuplicatePlaceholder):
        materialize(cfg, {**small_templates, "x": "{{peer.db}}"}, small_space)
    with pytest.raises(UnresolvedPlaceholder):
        materialize(cfg, {"core.yaml": small_templates["core.yaml"]}, small_space)


def test_int_decode_uses_half_even():
    p = ParameterSpec("n", "numeric-int", 0, 4)
    assert p.decode_value(0.125) == 0  # raw 0.5
    assert p.decode_value(0.375) == 2  # raw 1.5
    assert math.isclose(p.encode_value(2), 0.5)
