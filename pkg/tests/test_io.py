import json

import numpy as np
import pytest

from marginbound import ConfigurationError, ScalarField, ShapeError, build_grid, weighted_marginals
from marginbound.io import config_hash, dumps, load_field, load_marginals, save_field, save_marginals

from conftest import mixture3


@pytest.fixture
def field():
    g = build_grid([(0, 1), (-2, 2), (0, 1)], [3, 4, 2], truncated=False)
    rng = np.random.default_rng(7)
    return ScalarField(g, rng.standard_normal(g.shape), {"note": "random"})


@pytest.mark.parametrize("encoding", ["binary", "csv"])
def test_field_round_trip_is_exact(tmp_path, field, encoding):
    hp = save_field(tmp_path / "f", field, encoding)
    back = load_field(hp)
    assert back.grid == field.grid
    np.testing.assert_array_equal(back.values, field.values)
    assert back.meta["note"] == "random"


def test_binary_payload_layout(tmp_path, field):
    hp = save_field(tmp_path / "f", field)
    header = json.loads(hp.read_text())
    assert header["format"] == "marginbound.field" and header["version"] == 1
    assert header["byteorder"] == "little" and header["dtype"] == "float64"
    assert header["grid"]["order"] == "C"
    raw = np.fromfile(tmp_path / header["payload"], dtype="<f8")
    # row-major with axis 0 slowest
    np.testing.assert_array_equal(raw.reshape(3, 4, 2), field.values)
    assert raw[1] == field.values[0, 0, 1]


def test_load_rejects_wrong_format(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ConfigurationError):
        load_field(p)


def test_load_rejects_size_mismatch(tmp_path, field):
    hp = save_field(tmp_path / "f", field)
    (tmp_path / "f.bin").write_bytes(np.zeros(5).tobytes())
    with pytest.raises(ShapeError):
        load_field(hp)


def test_marginals_round_trip(tmp_path):
    g = build_grid([(0, 1), (0, 1)], 6)
    w = mixture3(g)
    m = weighted_marginals(np.cos(sum(g.mesh())), w)
    p = save_marginals(tmp_path / "m.json", m)
    back = load_marginals(p)
    assert back.grid == g
    for a, b in zip(back.arrays, m.arrays):
        np.testing.assert_array_equal(a, b)


def test_dumps_is_deterministic_and_sorted():
    a = dumps({"b": 0.1, "a": [1, 2.5, np.float64(1 / 3)], "c": {"z": None, "y": np.nan}})
    b = dumps({"c": {"y": float("nan"), "z": None}, "a": [1, 2.5, 1 / 3], "b": 0.1})
    assert a == b
    doc = json.loads(a)
    assert list(doc) == ["a", "b", "c"]
    assert doc["a"][2] == 1 / 3  # 17 significant digits round-trip
    assert doc["c"]["y"] is None


def test_config_hash_ignores_key_order():
    assert config_hash({"p": 2, "grid": {"nodes": 4}}) == config_hash({"grid": {"nodes": 4}, "p": 2})
    assert config_hash({"p": 2}) != config_hash({"p": 3})
