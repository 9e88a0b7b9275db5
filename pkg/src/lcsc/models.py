"""Built-in benchmark systems.

* ``planar_model``: spiral source confined to the square ``[-1, 1]^2``.
* ``stick_slip_model``: spring-block on a moving belt with a velocity
  weakening friction law.
* ``coupled_model``: two identical undamped stick-slip oscillators joined by
  a weak spring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .filippov import (
    FilippovSystem,
    HardBoundary,
    InteriorField,
    SurfaceRole,
    TransversalSurface,
)

PLANAR_DEFAULTS = {"alpha": 0.2, "omega": 1.0}
STICK_SLIP_DEFAULTS = {
    "m": 1.0, "k": 1.0, "c": 0.1, "delta": 0.5,
    "gamma_f": 1.0, "eta_f": 0.001, "u_belt": 0.5,
}
COUPLED_DEFAULTS = {
    "m": 1.0, "k": 1.0, "delta": 0.0, "gamma_f": 3.0,
    "eta_f": 0.0, "u_belt": 0.295, "k3": 0.001,
}
# single oscillator of the coupled pair
COUPLED_SINGLE_DEFAULTS = {
    "m": 1.0, "k": 1.0, "c": 0.0, "delta": 0.0,
    "gamma_f": 3.0, "eta_f": 0.0, "u_belt": 0.295,
}
# default local timing rays for the region experiment, in degrees
TIMING_RAYS = (45.0, 135.0)


# -- planar spiral -------------------------------------------------------------

def _planar_velocity(x, p):
    a, w = p["alpha"], p["omega"]
    return np.array([a * x[0] - w * x[1], w * x[0] + a * x[1]])


def _planar_jacobian(x, p):
    a, w = p["alpha"], p["omega"]
    return np.array([[a, -w], [w, a]])


def _planar_dparams(x, p):
    return {
        "alpha": np.array([x[0], x[1]], dtype=float),
        "omega": np.array([-x[1], x[0]], dtype=float),
    }


@dataclass(frozen=True)
class SectorRegion:
    """Region id 1 inside the angular sector ``[start, stop]`` (degrees), else 0."""

    start: float
    stop: float

    def __call__(self, x) -> int:
        ang = math.degrees(math.atan2(x[1], x[0])) % 360.0
        lo, hi = self.start % 360.0, self.stop % 360.0
        if lo <= hi:
            return int(lo <= ang <= hi)
        return int(ang >= lo or ang <= hi)


def timing_ray(angle_deg: float, name: str) -> TransversalSurface:
    """Ray from the origin at ``angle_deg``, crossed counterclockwise from - to +."""
    th = math.radians(angle_deg)
    d = np.array([math.cos(th), math.sin(th)])
    n = np.array([-math.sin(th), math.cos(th)])
    return TransversalSurface(n, 0.0, SurfaceRole.TIMING, name, support=d)


def planar_model(alpha: float = 0.2, omega: float = 1.0, timing=None, event_tol=1e-10):
    """Planar spiral source on the square with four sliding walls.

    Parameters
    ----------
    alpha, omega : float
        Expansion and rotation rates; ``0 < alpha < 1``.
    timing : tuple of two angles in degrees, optional
        When given, adds local timing rays ``sigma_in`` and ``sigma_out`` and
        splits the square into region ``I`` (the sector between them, id 1)
        and region ``II`` (id 0).

    Returns
    -------
    FilippovSystem
    """
    if not 0 < alpha < 1:
        raise ContractError("alpha must lie in (0, 1)")
    params = {"alpha": float(alpha), "omega": float(omega)}
    f = InteriorField(_planar_velocity, params, _planar_jacobian, _planar_dparams)
    walls = (
        HardBoundary([1.0, 0.0], 1.0, "east"),
        HardBoundary([0.0, 1.0], 1.0, "north"),
        HardBoundary([-1.0, 0.0], 1.0, "west"),
        HardBoundary([0.0, -1.0], 1.0, "south"),
    )
    if timing is None:
        return FilippovSystem(2, {0: f}, walls, event_tol=event_tol, name="planar")
    a_in, a_out = timing
    surfaces = (timing_ray(a_in, "sigma_in"), timing_ray(a_out, "sigma_out"))
    return FilippovSystem(
        2, {0: f, 1: f}, walls, surfaces,
        region_of=SectorRegion(a_in, a_out),
        region_names={"II": 0, "I": 1},
        event_tol=event_tol, name="planar",
    )


def planar_liftoff_points(alpha: float):
    """Liftoff points on the east, north, west and south walls."""
    return [(1.0, alpha), (-alpha, 1.0), (-1.0, -alpha), (alpha, -1.0)]


_PLANAR_CACHE = {}


def planar_field(alpha: float, omega: float, x):
    """Velocity of the planar system, using the sliding field on sliding walls."""
    key = (float(alpha), float(omega))
    sys = _PLANAR_CACHE.get(key)
    if sys is None:
        sys = _PLANAR_CACHE[key] = planar_model(alpha, omega)
    x = np.asarray(x, dtype=float)
    return sys.velocity(x, sys.infer_mode(x))


# -- friction ------------------------------------------------------------------

def friction_force(delta, gamma_f, eta_f, v_rel):
    """Kinetic friction as a function of relative velocity ``v - u_belt``.

    Equals 1 at ``v_rel = 0``; the ``v_rel > 0`` branch mirrors the other.
    """
    v = float(v_rel)
    if v == 0.0:
        return 1.0
    if v < 0:
        den = 1.0 - gamma_f * v
        if den == 0.0:
            raise DomainError("friction law pole", v_rel=v)
        return (1.0 - delta) / den + delta + eta_f * v * v
    den = 1.0 + gamma_f * v
    if den == 0.0:
        raise DomainError("friction law pole", v_rel=v)
    return -(1.0 - delta) / den - delta - eta_f * v * v


def friction_slope(delta, gamma_f, eta_f, v_rel):
    """Derivative of :func:`friction_force` with respect to ``v_rel``."""
    v = float(v_rel)
    if v <= 0:
        den = 1.0 - gamma_f * v
        if den == 0.0:
            raise DomainError("friction law pole", v_rel=v)
        return (1.0 - delta) * gamma_f / den**2 + 2 * eta_f * v
    den = 1.0 + gamma_f * v
    if den == 0.0:
        raise DomainError("friction law pole", v_rel=v)
    return (1.0 - delta) * gamma_f / den**2 - 2 * eta_f * v


def slip_friction(delta, gamma_f, eta_f, v_rel):
    """Backward-slip branch of the friction law, continued smoothly past 0.

    The interior field of the hard-boundary formulation uses this branch on
    both sides of the belt velocity so that it stays smooth across the
    boundary; only stage evaluations of a step that overshoots see
    ``v_rel > 0``.
    """
    den = 1.0 - gamma_f * v_rel
    if den <= 0.0:
        raise DomainError("friction law pole", v_rel=float(v_rel))
    return (1.0 - delta) / den + delta + eta_f * v_rel * v_rel


def slip_friction_slope(delta, gamma_f, eta_f, v_rel):
    den = 1.0 - gamma_f * v_rel
    if den <= 0.0:
        raise DomainError("friction law pole", v_rel=float(v_rel))
    return (1.0 - delta) * gamma_f / den**2 + 2 * eta_f * v_rel


def _friction_dparams(delta, gamma_f, eta_f, v):
    """Partial derivatives of the slip branch in (delta, gamma_f, eta_f)."""
    den = 1.0 - gamma_f * v
    return 1.0 - 1.0 / den, (1.0 - delta) * v / den**2, v * v


# -- single stick-slip oscillator ----------------------------------------------

def _ss_velocity(x, p):
    m = p["m"]
    v = x[1]
    f = slip_friction(p["delta"], p["gamma_f"], p["eta_f"], v - p["u_belt"])
    return np.array([v, (-p["k"] * x[0] - p["c"] * v + f) / m])


def _ss_jacobian(x, p):
    m = p["m"]
    fp = slip_friction_slope(p["delta"], p["gamma_f"], p["eta_f"], x[1] - p["u_belt"])
    return np.array([[0.0, 1.0], [-p["k"] / m, (-p["c"] + fp) / m]])


def _ss_dparams(x, p):
    m = p["m"]
    pos, v = x[0], x[1]
    vr = v - p["u_belt"]
    f = slip_friction(p["delta"], p["gamma_f"], p["eta_f"], vr)
    fd, fg, fe = _friction_dparams(p["delta"], p["gamma_f"], p["eta_f"], vr)
    fp = slip_friction_slope(p["delta"], p["gamma_f"], p["eta_f"], vr)
    acc = (-p["k"] * pos - p["c"] * v + f) / m
    z = 0.0
    return {
        "m": np.array([z, -acc / m]),
        "k": np.array([z, -pos / m]),
        "c": np.array([z, -v / m]),
        "delta": np.array([z, fd / m]),
        "gamma_f": np.array([z, fg / m]),
        "eta_f": np.array([z, fe / m]),
        "u_belt": np.array([z, -fp / m]),
    }


def stick_slip_model(event_tol=1e-10, **overrides) -> FilippovSystem:
    """Spring-block on a belt; state ``(x, v)``, sticking on ``v = u_belt``."""
    params = dict(STICK_SLIP_DEFAULTS)
    unknown = set(overrides) - set(params)
    if unknown:
        raise ContractError(f"unknown parameters {sorted(unknown)}")
    params.update({k: float(v) for k, v in overrides.items()})
    f = InteriorField(_ss_velocity, params, _ss_jacobian, _ss_dparams)
    belt = HardBoundary([0.0, 1.0], params["u_belt"], "belt")
    return FilippovSystem(
        2, {0: f}, (belt,), event_tol=event_tol,
        boundary_params=("u_belt",), name="stickslip",
    )


def stick_end(params) -> float:
    """Position where sticking ends: ``(1 - c u) / k``."""
    return (1.0 - params.get("c", 0.0) * params["u_belt"]) / params["k"]


# -- coupled pair --------------------------------------------------------------

def _osc_accel(pos, v, p, c=0.0):
    f = slip_friction(p["delta"], p["gamma_f"], p["eta_f"], v - p["u_belt"])
    return (-p["k"] * pos - c * v + f) / p["m"]


def _cp_velocity(x, p):
    x1, v1, x2, v2 = x[0], x[1], x[2], x[3]
    g = p["k3"] * (x1 - x2) / p["m"]
    return np.array([
        v1, _osc_accel(x1, v1, p) - g,
        v2, _osc_accel(x2, v2, p) + g,
    ])


def _cp_jacobian(x, p):
    m, k, k3 = p["m"], p["k"], p["k3"]
    s1 = slip_friction_slope(p["delta"], p["gamma_f"], p["eta_f"], x[1] - p["u_belt"])
    s2 = slip_friction_slope(p["delta"], p["gamma_f"], p["eta_f"], x[3] - p["u_belt"])
    return np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-(k + k3) / m, s1 / m, k3 / m, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [k3 / m, 0.0, -(k + k3) / m, s2 / m],
    ])


def _cp_dparams(x, p):
    out = {}
    m = p["m"]
    a1 = _ss_dparams(x[0:2], dict(p, c=0.0))
    a2 = _ss_dparams(x[2:4], dict(p, c=0.0))
    d = x[0] - x[2]
    for name in ("k", "delta", "gamma_f", "eta_f", "u_belt"):
        out[name] = np.concatenate([a1[name], a2[name]])
    acc = _cp_velocity(x, p)
    out["m"] = np.array([0.0, -acc[1] / m, 0.0, -acc[3] / m])
    out["k3"] = np.array([0.0, -d / m, 0.0, d / m])
    return out


def coupled_model(event_tol=1e-10, **overrides) -> FilippovSystem:
    """Two undamped stick-slip oscillators; state ``(x1, v1, x2, v2)``."""
    params = dict(COUPLED_DEFAULTS)
    unknown = set(overrides) - set(params)
    if unknown:
        raise ContractError(f"unknown parameters {sorted(unknown)}")
    params.update({k: float(v) for k, v in overrides.items()})
    f = InteriorField(_cp_velocity, params, _cp_jacobian, _cp_dparams)
    u = params["u_belt"]
    walls = (
        HardBoundary([0.0, 1.0, 0.0, 0.0], u, "belt1"),
        HardBoundary([0.0, 0.0, 0.0, 1.0], u, "belt2"),
    )
    return FilippovSystem(
        4, {0: f}, walls, event_tol=event_tol,
        boundary_params=("u_belt",), name="coupled",
    )


def coupled_single(event_tol=1e-10, **overrides) -> FilippovSystem:
    """One oscillator of the coupled pair (no damping, coupling removed)."""
    params = dict(COUPLED_SINGLE_DEFAULTS)
    params.update(overrides)
    return stick_slip_model(event_tol=event_tol, **params)


def coupling_force(params, Xj, Xi, i_sliding: bool) -> np.ndarray:
    """Coupling acting on oscillator ``i``; zero while ``i`` sticks."""
    if i_sliding:
        return np.zeros(2)
    return np.array([0.0, -(Xi[0] - Xj[0]) / params["m"]])


def coupled_field(params, X1, X2, sliding=(False, False)) -> np.ndarray:
    """Joint velocity of the pair with per-oscillator stick masks."""
    p = dict(COUPLED_DEFAULTS)
    p.update(params)
    out = []
    for Xi, Xj, s in ((X1, X2, sliding[0]), (X2, X1, sliding[1])):
        if s:
            out.append(np.array([p["u_belt"], 0.0]))
        else:
            F = np.array([Xi[1], _osc_accel(Xi[0], Xi[1], p)])
            out.append(F + p["k3"] * coupling_force(p, Xj, Xi, False))
    return np.concatenate(out)


MODELS = {
    "planar": planar_model,
    "stickslip": stick_slip_model,
    "coupled": coupled_model,
}
