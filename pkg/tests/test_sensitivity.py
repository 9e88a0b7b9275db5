import numpy as np
import pytest

from lcsc.errors import ContractError, NonTransversalError
from lcsc.filippov import Interior, Perturbation
from lcsc.integrator import EventKind, EventRecord, perturbed_cycle, rescale_time
from lcsc.sensitivity import (
    fundamental_matrix,
    isrc,
    jump_matrix,
    ltrc,
    period_shift_T1,
    reversed_jump_matrix,
    saltation_matrix,
    shape_error,
    variational_forward,
)

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def crossing(pre, post, normal=(1.0, 0.0)):
    n = np.asarray(normal, dtype=float)
    return EventRecord(EventKind.CROSSING, 0.0, np.zeros(2), 0, n, np.asarray(pre, float),
                       np.asarray(post, float), Interior(0), Interior(1))


def test_crossing_saltation_formula():
    e = crossing([2.0, 1.0], [1.0, 3.0])
    S = saltation_matrix(e)
    assert np.allclose(S, np.eye(2) + np.outer([-1.0, 2.0], [1.0, 0.0]) / 2.0)
    # the saltation maps the incoming velocity to the outgoing one
    assert np.allclose(S @ e.pre_velocity, e.post_velocity)
    assert np.allclose(jump_matrix(e).T @ S, np.eye(2))
    assert np.allclose(reversed_jump_matrix(e), S.T)


def test_tangent_crossing_rejected():
    with pytest.raises(NonTransversalError):
        saltation_matrix(crossing([0.0, 1.0], [0.0, 1.0]))


def test_jump_matrix_needs_crossing(planar_lc):
    with pytest.raises(ContractError):
        jump_matrix(planar_lc.events[0])


def test_landing_and_liftoff_matrices(planar_lc):
    for e in planar_lc.events:
        P = np.eye(2) - np.outer(e.normal, e.normal)
        if e.kind == EventKind.LANDING:
            assert np.allclose(saltation_matrix(e), P)
            assert np.allclose(reversed_jump_matrix(e), np.eye(2))
        else:
            assert np.allclose(saltation_matrix(e), np.eye(2))
            assert np.allclose(reversed_jump_matrix(e), P)


def test_monodromy_maps_velocity(planar_lc):
    fm = fundamental_matrix(planar_lc)
    F = planar_lc.anchor_event.post_velocity
    assert np.allclose(fm.monodromy @ F, F, atol=1e-8)
    assert np.allclose(fm(0.0), np.eye(2), atol=1e-12)


def test_monodromy_collapses_across_landing(planar_lc):
    # every landing removes the normal direction, so the monodromy has rank 1
    s = np.linalg.svd(fundamental_matrix(planar_lc).monodromy, compute_uv=False)
    assert s[1] < 1e-10 * s[0]


def test_variational_dimension_checked(planar_lc):
    with pytest.raises(ContractError):
        variational_forward(planar_lc, [1.0, 0.0, 0.0])


def test_prc_quarter_turn_symmetry(planar_lc, planar_z):
    T = planar_lc.period
    for t in np.linspace(0.1, T / 4 - 0.1, 7):
        assert np.allclose(planar_z(t + T / 4), ROT @ planar_z(t), atol=1e-7)


def test_prc_eigenvalue(planar_z, stickslip_z):
    assert planar_z.eigenvalue == pytest.approx(1.0, abs=1e-8)
    assert stickslip_z.eigenvalue == pytest.approx(1.0, abs=1e-8)
    assert planar_z.normalization_defect < 1e-6


def test_period_shift_linear_in_direction(planar_lc, planar_z):
    a = period_shift_T1(planar_lc, planar_z, Perturbation({"alpha": 1.0}))
    b = period_shift_T1(planar_lc, planar_z, Perturbation({"alpha": -2.0}))
    c = period_shift_T1(planar_lc, planar_z, Perturbation({"alpha": 1.0, "omega": 1.0}))
    d = period_shift_T1(planar_lc, planar_z, Perturbation({"omega": 1.0}))
    assert b == pytest.approx(-2 * a, rel=1e-12)
    assert c == pytest.approx(a + d, rel=1e-10)
    assert period_shift_T1(planar_lc, planar_z, Perturbation({})) == 0.0


def test_omega_period_shift(planar, planar_lc, planar_z):
    p = Perturbation({"omega": 1.0})
    le = perturbed_cycle(planar, p, 1e-4, planar_lc.anchor, planar_lc.anchor_state)
    fd = (le.period - planar_lc.period) / 1e-4
    assert period_shift_T1(planar_lc, planar_z, p) == pytest.approx(fd, rel=1e-3)


def test_ltrc_durations_and_zero_perturbation(planar_timing_lc, planar_regions):
    res = [ltrc(planar_timing_lc, r, Perturbation({})) for r in planar_regions]
    assert sum(r.T0j for r in res) == pytest.approx(planar_timing_lc.period, abs=1e-10)
    assert all(r.T1j == 0.0 for r in res)
    # exit condition: eta . F = -1 at the exit surface
    for r in res:
        e_out = planar_timing_lc.events_with_key(r.region.exit)[0]
        eta = r.eta(r.t_out if r.t_out > r.t_in else r.t_out + planar_timing_lc.period, side="left")
        assert float(eta @ e_out.pre_velocity) == pytest.approx(-1.0, abs=1e-9)


def test_isrc_zero_perturbation_vanishes(planar_lc, planar_z):
    src = isrc(planar_lc, Perturbation({}), z=planar_z)
    _, vals, _ = src.curve.samples()
    assert np.max(np.abs(vals)) < 1e-12


def test_isrc_closes(planar_lc, planar_z):
    src = isrc(planar_lc, Perturbation({"alpha": 1.0}), z=planar_z)
    assert src.closure_defect < 1e-4
    assert src.nu == pytest.approx(src.T1 / planar_lc.period)


def test_isrc_contracts(planar_lc):
    with pytest.raises(ContractError):
        isrc(planar_lc, Perturbation({"alpha": 1.0}), kind="stretched")
    with pytest.raises(ContractError):
        isrc(planar_lc, Perturbation({"alpha": 1.0}), kind="piecewise")


def test_shape_error_norms(planar, planar_lc, planar_z):
    p = Perturbation({"alpha": 1.0})
    src = isrc(planar_lc, p, z=planar_z)
    le = perturbed_cycle(planar, p, 1e-3, planar_lc.anchor, planar_lc.anchor_state)
    r = rescale_time(planar_lc, le, "uniform")
    assert shape_error(planar_lc, le, src, r) < 0.3
    assert shape_error(planar_lc, le, src, r, norm="l1") < 0.1
    with pytest.raises(ContractError):
        shape_error(planar_lc, le, src, r, norm="sup")
