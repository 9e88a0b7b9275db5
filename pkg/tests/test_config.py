import json

import numpy as np
import pytest

from lcsc.config import ExperimentManifest, load_system
from lcsc.errors import ContractError
from lcsc.filippov import Interior
from lcsc.integrator import find_limit_cycle
from lcsc.models import planar_model

BOX = {
    "name": "box",
    "variables": ["x", "y"],
    "parameters": {"a": 0.2},
    "regions": [{"id": 0, "field": ["a*x - y", "x + a*y"]}],
    "boundaries": [
        {"level": "x - 1", "name": "east"},
        {"level": "y - 1", "name": "north"},
        {"level": "-x - 1", "name": "west"},
        {"level": "-y - 1", "name": "south"},
    ],
}


def test_loaded_box_matches_builtin(rng):
    user = load_system(BOX)
    ref = planar_model(0.2)
    for x in rng.uniform(-0.9, 0.9, size=(10, 2)):
        assert np.allclose(user.field(0)(x), ref.field(0)(x))
        assert np.allclose(user.field(0).jac(x), ref.field(0).jac(x))
        assert np.allclose(user.field(0).dparam(x, "a"), ref.field(0).dparam(x, "alpha"))
    lc = find_limit_cycle(user, [0.5, 0.0], ("liftoff", 0))
    assert lc.period == pytest.approx(6.766182958186235, abs=1e-8)


def test_load_from_file(tmp_path):
    p = tmp_path / "box.json"
    p.write_text(json.dumps(BOX))
    sys = load_system(p)
    assert sys.dimension == 2 and len(sys.boundaries) == 4


def test_region_rules():
    spec = dict(BOX, regions=[
        {"id": 0, "field": ["-y", "x"]},
        {"id": 1, "field": ["-2*y", "2*x"], "where": "y > 0"},
    ])
    sys = load_system(spec)
    assert sys.region(np.array([0.1, 0.5])) == 1
    assert sys.region(np.array([0.1, -0.5])) == 0
    assert np.allclose(sys.velocity(np.array([0.1, 0.5]), Interior(1)), [-1.0, 0.2])


@pytest.mark.parametrize(
    "change",
    [
        {"boundaries": [{"level": "x**2 - 1"}]},
        {"regions": [{"id": 0, "field": ["z", "x"]}]},
        {"regions": [{"id": 0, "field": ["x"]}]},
        {"regions": [{"id": 1, "field": ["x", "y"]}]},
        {"regions": [{"id": 0, "field": ["sin(x)", "y"]}]},
    ],
)
def test_bad_systems_rejected(change):
    with pytest.raises(ContractError):
        load_system(dict(BOX, **change))


def test_missing_key_rejected():
    with pytest.raises(ContractError):
        load_system({"variables": ["x"]})


def test_manifest_round_trip(tmp_path):
    m = ExperimentManifest("src", model="stickslip", params={"c": 0.05}, perturb={"c": -1.0},
                           eps=0.05, options={"kind": "piecewise"})
    path = tmp_path / "m.json"
    m.save(path)
    back = ExperimentManifest.load(path)
    assert back == m
    assert back.dumps() == m.dumps()


def test_manifest_unknown_key():
    with pytest.raises(ContractError):
        ExperimentManifest.from_dict({"command": "cycle", "colour": "red"})
