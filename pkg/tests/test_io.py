import json

import numpy as np
import pytest

from idyll.fields import PeriodicGrid1D
from idyll.io import dumps, fmt, samples_from_csv, samples_from_json, samples_to_csv, samples_to_json


def test_seventeen_digits_round_trip():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(x) == "0.30000000000000004"


def test_dumps_sorted_and_complex():
    text = dumps({"b": 1.0 / 3.0, "a": [1 + 2j, np.float64(2.5)], "c": np.arange(2)})
    data = json.loads(text)
    assert list(data) == ["a", "b", "c"]
    assert data["a"][0] == [1.0, 2.0]
    assert data["b"] == 1.0 / 3.0
    assert data["c"] == [0, 1]


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


def test_csv_round_trip(tmp_path):
    g = PeriodicGrid1D(8, 2.0)
    phi = np.exp(1j * g.nodes) / 3
    samples_to_csv(tmp_path / "s.csv", g, K=np.sqrt(g.nodes + 1), phi=phi)
    y, cols = samples_from_csv(tmp_path / "s.csv")
    assert np.array_equal(y, g.nodes)
    assert np.array_equal(cols["K"], np.sqrt(g.nodes + 1))
    assert np.array_equal(cols["phi_re"] + 1j * cols["phi_im"], phi)


def test_json_envelope_round_trip():
    g = PeriodicGrid1D(16, 3.5)
    values = np.sin(g.nodes) / 7
    env = json.loads(dumps(samples_to_json(g, values)))
    g2, back = samples_from_json(env)
    assert g2 == g and np.array_equal(back, values)
