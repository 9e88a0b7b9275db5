import numpy as np
import pytest
from scipy.optimize import brentq

from lcsc.errors import AnchorError, ContractError, DriftError, GrazingError, TopologyChangeError
from lcsc.filippov import HardBoundary, InteriorField, FilippovSystem, Perturbation, Sliding
from lcsc.integrator import (
    EventKind,
    find_limit_cycle,
    integrate,
    perturbed_cycle,
    region_window,
    rescale_time,
)
from lcsc.models import planar_model


def planar_period_closed_form(a):
    """Period from the exact spiral flow plus the exact wall sliding flow."""
    t1 = brentq(lambda t: np.exp(a * t) * (np.sin(t) + a * np.cos(t)) - 1, 0.01, 1.5, xtol=1e-15)
    xl = np.exp(a * t1) * (np.cos(t1) - a * np.sin(t1))
    s = np.log((-a - 1 / a) / (xl - 1 / a)) / a
    return 4 * (t1 + s), t1, xl


def test_planar_period_matches_closed_form(planar_lc):
    T, t1, xl = planar_period_closed_form(0.2)
    assert T == pytest.approx(6.766182958186235, abs=1e-12)
    assert planar_lc.period == pytest.approx(T, abs=1e-8)
    landing = planar_lc.events[1]
    assert landing.kind == EventKind.LANDING
    assert landing.time == pytest.approx(t1, abs=1e-9)
    assert landing.state[0] == pytest.approx(xl, abs=1e-9)


def test_planar_event_sequence(planar_lc):
    kinds = [(e.kind, e.target) for e in planar_lc.events]
    expected = []
    for b in (0, 1, 2, 3):
        expected += [(EventKind.LIFTOFF, b), (EventKind.LANDING, (b + 1) % 4)]
    assert kinds == expected


def test_planar_liftoff_states(planar_lc):
    got = planar_lc.liftoff_states()
    want = [(1, 0.2), (-0.2, 1), (-1, -0.2), (0.2, -1)]
    assert np.max(np.abs(np.array(got) - want)) < 1e-8


def test_closure(planar_lc, stickslip_lc):
    assert planar_lc.closure_defect < 1e-8
    assert stickslip_lc.closure_defect < 1e-8


def test_state_modulo_period(planar_lc):
    T = planar_lc.period
    ts = np.array([0.1, 1.7, 4.2])
    assert np.allclose(planar_lc.states(ts), planar_lc.states(ts + T), atol=1e-12)
    assert np.allclose(planar_lc.state(1.7), planar_lc.states([1.7])[0])


def test_sliding_states_stay_on_wall(planar_lc):
    for s in planar_lc.segments:
        if s.mode.is_sliding:
            b = next(iter(s.mode.sliding))
            lv = [planar_lc.system.boundaries[b].level(x) for x in s.states]
            assert np.max(np.abs(lv)) < 1e-12


def test_stickslip_cycle(stickslip_lc):
    lift = stickslip_lc.events_with_key(("liftoff", 0))[0]
    assert lift.state[0] == pytest.approx(0.95, abs=1e-8)
    ts = np.linspace(0, stickslip_lc.period, 20001)
    d = np.linalg.norm(stickslip_lc.states(ts) - [1.4127, 0.0829], axis=1)
    assert d.min() < 1e-3


def test_stickslip_two_events(stickslip_lc):
    assert [e.kind for e in stickslip_lc.events] == [EventKind.LIFTOFF, EventKind.LANDING]


def test_drift_rejected(planar):
    with pytest.raises(DriftError):
        integrate(planar, [1.2, 0.0], None, (0, 1))


def test_sliding_mode_off_boundary_rejected(planar):
    with pytest.raises(ContractError):
        integrate(planar, [0.5, 0.0], Sliding(0), (0, 1))


def test_bad_span(planar):
    with pytest.raises(ContractError):
        integrate(planar, [0.5, 0.0], None, (1, 0))


def test_origin_has_no_anchor(planar):
    with pytest.raises(AnchorError):
        find_limit_cycle(planar, [0.0, 0.0], ("liftoff", 0), anchor_timeout=20.0)


def test_grazing_reported():
    # normal velocity 1e-9 at the wall, below the grazing threshold
    f = InteriorField(lambda x, p: np.array([1e-9, 1.0]), {})
    sys = FilippovSystem(2, {0: f}, (HardBoundary([1.0, 0.0], 1.0),))
    x0 = np.array([1.0 - 5e-10, 0.0])
    with pytest.raises(GrazingError):
        integrate(sys, x0, None, (0.0, 3.0))


def test_stop_callback(planar):
    tr = integrate(planar, [1.0, 0.2], None, (0, 20), stop=lambda e: e.kind == EventKind.LANDING)
    assert tr.stopped and tr.events[-1].kind == EventKind.LANDING


def test_region_window(planar_timing_lc, planar_regions):
    _, _, t_in, t_out = region_window(planar_timing_lc, planar_regions[0])
    assert t_in == 0.0
    assert 0 < t_out < planar_timing_lc.period


def test_rescaling_knots(planar_timing, planar_timing_lc, planar_regions, region_one):
    lc_eps = perturbed_cycle(planar_timing, region_one, 0.01, ("timing", 0), planar_timing_lc.anchor_state)
    r = rescale_time(planar_timing_lc, lc_eps, "piecewise", planar_regions)
    assert r(0.0) == pytest.approx(0.0)
    assert r(planar_timing_lc.period) == pytest.approx(lc_eps.period)
    u = rescale_time(planar_timing_lc, lc_eps, "uniform")
    assert np.allclose(u.factors(), lc_eps.period / planar_timing_lc.period)


def test_topology_change_detected(planar, planar_lc):
    # alpha -> alpha + 2 pushes the spiral past the walls' sliding structure
    with pytest.raises((TopologyChangeError, ContractError)):
        lc_eps = perturbed_cycle(planar, Perturbation({"omega": 1.0}), 5.0, ("liftoff", 0), planar_lc.anchor_state)
        rescale_time(planar_lc, lc_eps, "piecewise", [])
