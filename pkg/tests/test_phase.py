import numpy as np
import pytest

from lcsc.errors import ContractError, DesynchronizationError, NonConverged
from lcsc.filippov import periodic_difference
from lcsc.integrator import integrate
from lcsc.models import coupled_model
from lcsc.phase import (
    asymptotic_phase,
    coupled_initial_state,
    full_model_phase_difference,
    isochron_grid,
    liftoff_phase_difference,
    phase_model_simulate,
    polyline_normals,
    spring_coupling,
)


def test_phase_on_cycle(planar, planar_lc):
    for t in (0.3, 2.0, 5.5):
        phi = asymptotic_phase(planar, planar_lc, planar_lc.state(t))
        assert abs(periodic_difference(phi, t, planar_lc.period)) < 1e-6


def test_phase_advances_with_time(planar, planar_lc, rng):
    T = planar_lc.period
    for x0 in rng.uniform(-0.8, 0.8, size=(4, 2)):
        s = rng.uniform(0.5, 3.0)
        x1 = integrate(planar, x0, None, (0.0, s), dense=False).x_final
        d = periodic_difference(asymptotic_phase(planar, planar_lc, x1),
                                asymptotic_phase(planar, planar_lc, x0), T)
        assert d == pytest.approx(s, abs=1e-5)


def test_fixed_point_never_converges(planar, planar_lc):
    with pytest.raises(NonConverged):
        asymptotic_phase(planar, planar_lc, [0.0, 0.0], budget=3)


def test_isochron_grid_small(planar, planar_lc):
    field = isochron_grid(planar, planar_lc, (-1, 1), (-1, 1), shape=(5, 5))
    assert field.phase.shape == (5, 5)
    # the centre cell is the unstable fixed point
    assert not field.converged[2, 2]
    assert field.converged.sum() == 24
    ok = field.converged
    assert np.all((field.phase[ok] >= 0) & (field.phase[ok] < planar_lc.period))
    # quarter-turn symmetry of the model
    T = planar_lc.period
    rot = np.rot90(field.phase)
    mask = ok & np.rot90(ok)
    d = periodic_difference(rot[mask], field.phase[mask] + T / 4, T)
    assert np.max(np.abs(d)) < 1e-4


def test_polyline_normals():
    curve = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]])
    n = polyline_normals(curve)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    assert abs(n[0] @ [1.0, 0.0]) < 1e-12


def test_coupling_silent_while_sliding():
    c = spring_coupling({"m": 1.0, "k3": 0.1})
    Xj = np.array([[0.5, 0.0], [0.5, 0.0]])
    Xi = np.array([[-0.5, 0.3], [-0.5, 0.3]])
    out = c(Xj, Xi, [False, True])
    assert np.allclose(out[0], [0.0, 1.0])
    assert np.allclose(out[1], 0.0)
    assert c.strength == 0.1


def test_interaction_is_odd(interaction):
    T = interaction.period
    psi = np.linspace(0.0, T, 37)
    assert np.allclose(interaction(-psi), -interaction(psi), atol=1e-10)
    assert abs(interaction(0.0)) < 1e-12
    assert abs(interaction(T / 2)) < 1e-6


def test_interaction_fixed_points(interaction):
    assert interaction.stability_at(0.0) == "unstable"
    assert interaction.slope(0.0) > 0
    with pytest.raises(ContractError):
        interaction.stability_at(1.0)


def test_phase_model_rest_at_antiphase(interaction):
    T = interaction.period
    tr = phase_model_simulate(interaction, 0.001, T / 2, 5000.0)
    assert np.allclose(tr.psi, T / 2, atol=1e-6)


def test_phase_model_time_scaling(interaction):
    a = phase_model_simulate(interaction, 0.002, 0.1, 2000.0, t_eval=[2000.0])
    b = phase_model_simulate(interaction, 0.001, 0.1, 4000.0, t_eval=[4000.0])
    assert a.psi[-1] == pytest.approx(b.psi[-1], abs=1e-6)


def test_liftoff_phase_difference():
    a = np.array([10.0, 20.0, 30.0])
    b = np.array([7.0, 17.0, 27.0, 37.0])
    t, psi = liftoff_phase_difference(a, b, 10.0)
    assert np.allclose(t, a) and np.allclose(psi, 3.0)
    t, psi = liftoff_phase_difference(a, b + 6.0, 10.0)
    assert np.allclose(psi, 7.0)


def test_full_model_follows_phase_model(single_lc, interaction):
    T0 = single_lc.period
    x0 = coupled_initial_state(single_lc, 0.05)
    full = full_model_phase_difference(coupled_model(k3=0.001), x0, 1000.0, T0)
    pm = phase_model_simulate(interaction, 0.001, 0.05, 1000.0, t_eval=full.t)
    assert full.psi[0] == pytest.approx(0.05, abs=2e-3)
    assert np.max(np.abs(full.psi - pm.psi)) < 0.02


def test_desynchronization_reported(single_lc):
    x0 = coupled_initial_state(single_lc, 1.0)
    with pytest.raises(DesynchronizationError):
        full_model_phase_difference(coupled_model(k3=0.001), x0, 50.0, single_lc.period,
                                    chunk=25.0, max_gap=0.5)
