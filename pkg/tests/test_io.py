import json

import numpy as np

from lcsc import io


def test_csv_round_trip(tmp_path):
    rows = [[0.1, 2, "liftoff:0"], [1 / 3, -4.5e-20, ""]]
    p = io.write_csv(tmp_path / "a" / "t.csv", ["t", "x", "event"], rows, ["first", "second"])
    text = p.read_text()
    assert text.startswith("# first\n# second\nt,x,event\n")
    assert "\r" not in text
    header, back = io.read_csv(p)
    assert header == ["t", "x", "event"]
    assert back[1][0] == float(io._fmt(1 / 3))
    assert back[0][2] == "liftoff:0"


def test_number_format():
    assert io._fmt(0.1) == "0.1"
    assert io._fmt(np.float64(2.0)) == "2"
    assert float(io._fmt(np.pi)) == float(f"{np.pi:.12g}")


def test_json_sorted_and_plain(tmp_path):
    p = io.write_json(tmp_path / "s.json", {"b": np.arange(2), "a": np.float64(1.5)})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 1.5, "b": [0, 1]}


def test_cycle_rows(planar_lc):
    header, rows = io.cycle_rows(planar_lc)
    assert header[:3] == ["t", "x_1", "x_2"]
    events = [r[-1] for r in rows if r[-1]]
    assert len(events) >= len(planar_lc.events)
    summary = io.cycle_summary(planar_lc)
    assert summary["period"] == planar_lc.period
    assert len(summary["liftoff_states"]) == 4
