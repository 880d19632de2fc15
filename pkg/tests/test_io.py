from __future__ import annotations

import json

import numpy as np

from curvflow.io import atomic_write_text, write_csv, write_json


def test_json_cleans_numpy_and_nonfinite(tmp_path):
    p = tmp_path / "a.json"
    write_json(p, {"b": np.array([1.0, np.inf]), "a": np.float64(0.1), "c": (1, 2)})
    text = p.read_text()
    assert json.loads(text) == {"a": 0.1, "b": [1.0, None], "c": [1, 2]}
    assert text.index('"a"') < text.index('"b"')


def test_csv_round_trips_floats(tmp_path):
    p = tmp_path / "a.csv"
    x = 0.1 + 0.2
    write_csv(p, ["t", "i"], [[x, 3], [np.float64(1e-300), 4]])
    lines = p.read_text().splitlines()
    assert lines[0] == "t,i"
    assert float(lines[1].split(",")[0]) == x


def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "x.txt"
    atomic_write_text(p, "hello")
    assert p.read_text() == "hello"
    assert [q.name for q in p.parent.iterdir()] == ["x.txt"]
