import numpy as np
import pytest

from lcsc.errors import ContractError, DomainError
from lcsc.integrator import EventKind, integrate
from lcsc.models import (
    COUPLED_DEFAULTS,
    coupled_field,
    coupled_model,
    friction_force,
    planar_liftoff_points,
    planar_model,
    slip_friction,
    stick_end,
    stick_slip_model,
)


def test_friction_static_level():
    assert friction_force(0.5, 1.0, 0.001, 0.0) == 1.0
    assert friction_force(0.0, 3.0, 0.0, 0.0) == 1.0


def test_friction_fig6_value():
    # 0.5/1.5 + 0.5 + 0.001 * 0.25
    assert friction_force(0.5, 1.0, 0.001, -0.5) == pytest.approx(0.8335833333333333, rel=1e-14)


def test_friction_coupled_operating_point():
    # 1 / (1 + 3 * 0.295)
    assert friction_force(0.0, 3.0, 0.0, -0.295) == pytest.approx(0.5305039787798409, rel=1e-14)


def test_friction_mirror_branch():
    assert friction_force(0.5, 1.0, 0.001, 0.2) == pytest.approx(
        -(0.5 / (1 + 0.2) + 0.5 + 0.001 * 0.04)
    )


def test_friction_pole():
    with pytest.raises(DomainError):
        friction_force(0.5, -1.0, 0.0, -1.0)
    with pytest.raises(DomainError):
        slip_friction(0.5, 1.0, 0.0, 1.0)


def test_stick_end():
    assert stick_end(stick_slip_model().params) == pytest.approx(0.95, abs=1e-15)


def test_planar_liftoff_points():
    pts = planar_liftoff_points(0.2)
    assert np.allclose(pts, [(1, 0.2), (-0.2, 1), (-1, -0.2), (0.2, -1)])


def test_planar_alpha_range():
    with pytest.raises(ContractError):
        planar_model(1.5)


def test_unknown_parameter():
    with pytest.raises(ContractError):
        stick_slip_model(zeta=1.0)


def test_coupled_both_sticking():
    u = COUPLED_DEFAULTS["u_belt"]
    X1, X2 = np.array([0.3, u]), np.array([-0.4, u])
    out = coupled_field({"k3": 0.5}, X1, X2, sliding=(True, True))
    assert np.array_equal(out, [u, 0.0, u, 0.0])


def test_coupled_swap_symmetry(rng):
    for _ in range(10):
        X1, X2 = rng.uniform(-1, 0.2, 2), rng.uniform(-1, 0.2, 2)
        a = coupled_field({"k3": 0.1}, X1, X2)
        b = coupled_field({"k3": 0.1}, X2, X1)
        assert np.allclose(a[:2], b[2:]) and np.allclose(a[2:], b[:2])


def test_coupled_field_matches_system(rng):
    sys = coupled_model(k3=0.1)
    for _ in range(10):
        X = rng.uniform(-1, 0.2, 4)
        assert np.allclose(sys.field(0)(X), coupled_field({"k3": 0.1}, X[:2], X[2:]))


def test_uncoupled_pair_matches_single(single_lc):
    T0 = single_lc.period
    sys = coupled_model(k3=0.0)
    x0 = np.concatenate([single_lc.state(0.0), single_lc.state(3.0)])
    tr = integrate(sys, x0, None, (0.0, 2 * T0 + 0.5))
    lift1 = [e for e in tr.events if e.kind == EventKind.LIFTOFF and e.target == 0]
    lift2 = [e for e in tr.events if e.kind == EventKind.LIFTOFF and e.target == 1]
    assert [e.time for e in lift1] == pytest.approx([T0, 2 * T0], abs=1e-9)
    assert [e.time for e in lift2] == pytest.approx([T0 - 3.0, 2 * T0 - 3.0], abs=1e-9)
    for e in lift1:
        assert np.allclose(e.state[:2], single_lc.anchor_state, atol=1e-9)
