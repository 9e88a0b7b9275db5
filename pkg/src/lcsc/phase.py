"""Asymptotic phase fields, isochron kinks and weak-coupling phase reduction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import ContractError, DesynchronizationError, LcscError, NonConverged
from .filippov import FilippovSystem, periodic_difference
from .integrator import EventKind, LimitCycle, _refine, integrate
from .sensitivity import PrcResult

log = logging.getLogger(__name__)

PHASE_TOL = 1e-6
PHASE_BUDGET = 50
GRID_RTOL = 1e-10
GRID_ATOL = 1e-12


# -- asymptotic phase ---------------------------------------------------------

def asymptotic_phase(
    sys: FilippovSystem,
    lc: LimitCycle,
    x0,
    *,
    tol: float = PHASE_TOL,
    budget: int = PHASE_BUDGET,
    rtol: float = GRID_RTOL,
    atol: float = GRID_ATOL,
    method: str = "RK45",
) -> float:
    """Asymptotic phase of ``x0`` in ``[0, T0)``.

    The trajectory from ``x0`` is integrated until one of its events lands
    within ``tol`` of a cycle event of the same kind and target; the phase
    is then the cycle time of that event minus the elapsed time, mod T0.

    Raises
    ------
    NonConverged
        No matching event within ``budget`` periods.
    """
    x0 = sys.check_state(x0)
    T0 = lc.period
    by_key: dict = {}
    for e in lc.events:
        by_key.setdefault(e.key, []).append(e)
    hit: list = []

    def stop(e):
        for ce in by_key.get(e.key, ()):
            if np.linalg.norm(e.state - ce.state) < tol:
                hit.append((e.time, ce.time))
                return True
        return False

    tr = integrate(
        sys, x0, None, (0.0, budget * T0), rtol=rtol, atol=atol,
        method=method, dense=False, stop=stop,
    )
    if not hit:
        raise NonConverged(
            "trajectory did not reach the cycle", x0=x0.tolist(), t_final=tr.t_final
        )
    t_traj, t_cycle = hit[0]
    return float((t_cycle - t_traj) % T0)


@dataclass(eq=False)
class PhaseField:
    """Asymptotic phase sampled at the cell centres of a rectangular grid.

    ``phase[j, i]`` belongs to ``(x[i], y[j])`` and is NaN where the
    trajectory did not converge.
    """

    x: np.ndarray
    y: np.ndarray
    phase: np.ndarray
    converged: np.ndarray
    period: float
    sampler: Callable | None = field(default=None, repr=False)

    @property
    def cell_size(self) -> float:
        return float(max(np.diff(self.x[:2])[0], np.diff(self.y[:2])[0]))

    def evaluate(self, points) -> np.ndarray:
        """Phase at arbitrary points: direct when a sampler is attached,
        otherwise bilinear with periodic unwrapping."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.sampler is not None:
            return np.array([self.sampler(p) for p in pts])
        return np.array([self._bilinear(p) for p in pts])

    def _bilinear(self, p) -> float:
        i = int(np.clip(np.searchsorted(self.x, p[0]) - 1, 0, self.x.size - 2))
        j = int(np.clip(np.searchsorted(self.y, p[1]) - 1, 0, self.y.size - 2))
        tx = (p[0] - self.x[i]) / (self.x[i + 1] - self.x[i])
        ty = (p[1] - self.y[j]) / (self.y[j + 1] - self.y[j])
        c = self.phase[j:j + 2, i:i + 2]
        if np.any(np.isnan(c)):
            return np.nan
        ref = c[0, 0]
        d = periodic_difference(c, ref, self.period)
        v = (1 - tx) * (1 - ty) * d[0, 0] + tx * (1 - ty) * d[0, 1]
        v += (1 - tx) * ty * d[1, 0] + tx * ty * d[1, 1]
        return float((ref + v) % self.period)


def _phase_or_nan(args):
    sys, lc, x, kw = args
    try:
        return asymptotic_phase(sys, lc, x, **kw)
    except LcscError:
        return np.nan


def isochron_grid(
    sys: FilippovSystem,
    lc: LimitCycle,
    xlim=(-1.0, 1.0),
    ylim=(-1.0, 1.0),
    shape=(41, 41),
    *,
    workers: int | None = None,
    **kw,
) -> PhaseField:
    """Asymptotic phase on an ``nx`` by ``ny`` grid of cell centres.

    Cells whose trajectory does not converge (for example the repelling
    origin) are flagged rather than raised. ``workers > 1`` evaluates cells
    in a process pool.
    """
    if sys.dimension != 2:
        raise ContractError("isochron grids need a planar system")
    nx, ny = shape
    x = xlim[0] + (np.arange(nx) + 0.5) * (xlim[1] - xlim[0]) / nx
    y = ylim[0] + (np.arange(ny) + 0.5) * (ylim[1] - ylim[0]) / ny
    jobs = [(sys, lc, np.array([xi, yj]), kw) for yj in y for xi in x]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            vals = list(ex.map(_phase_or_nan, jobs, chunksize=32))
    else:
        vals = [_phase_or_nan(j) for j in jobs]
    phase = np.array(vals, dtype=float).reshape(ny, nx)
    return PhaseField(
        x, y, phase, ~np.isnan(phase), lc.period,
        sampler=lambda p: asymptotic_phase(sys, lc, p, **kw),
    )


# -- isochron kinks ---------------------------------------------------------------

@dataclass(eq=False)
class KinkScan:
    points: np.ndarray
    normals: np.ndarray
    grad_plus: np.ndarray
    grad_minus: np.ndarray

    @property
    def jumps(self) -> np.ndarray:
        return np.abs(self.grad_plus - self.grad_minus)


def polyline_normals(curve) -> np.ndarray:
    c = np.asarray(curve, dtype=float)
    tang = np.gradient(c, axis=0)
    tang /= np.linalg.norm(tang, axis=1)[:, None]
    return np.column_stack([-tang[:, 1], tang[:, 0]])


def kink_scan(field: PhaseField, curve, h: float = 1e-3) -> KinkScan:
    """Jump of the normal derivative of the phase across a polyline.

    On each side the derivative is a central difference over ``[h, 3h]``
    from the curve, taken with periodic differences so the wrap at T0 does
    not register as a jump.
    """
    pts = np.asarray(curve, dtype=float)
    nrm = polyline_normals(pts)
    offsets = (3 * h, h, -h, -3 * h)
    vals = np.column_stack([field.evaluate(pts + o * nrm) for o in offsets])
    T = field.period
    g_plus = periodic_difference(vals[:, 0], vals[:, 1], T) / (2 * h)
    g_minus = periodic_difference(vals[:, 2], vals[:, 3], T) / (2 * h)
    return KinkScan(pts, nrm, g_plus, g_minus)


def backward_trajectory(sys: FilippovSystem, x0, t_range=(0.3, 4.0), n: int = 60, region: int = 0):
    """Interior-field trajectory through ``x0`` traced backward in time.

    Returns ``n`` points at backward times evenly spread over ``t_range``.
    """
    f = sys.field(region)
    sol = solve_ivp(
        lambda t, x: -f(x), (0.0, t_range[1]), np.asarray(x0, dtype=float),
        rtol=1e-11, atol=1e-13, dense_output=True,
    )
    return sol.sol(np.linspace(t_range[0], t_range[1], n)).T


def rotate(points, angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return np.asarray(points) @ R.T


KINK_CONTROL_ANGLES = (30.0, 45.0, 60.0, 120.0, 135.0, 150.0, 210.0, 225.0, 300.0, 315.0)


def kink_curves(sys: FilippovSystem, lc: LimitCycle, angles=KINK_CONTROL_ANGLES):
    """Backward osculating trajectory through the anchor and control copies.

    The interior field is a rotating spiral, so rotating the osculating arm
    gives curves of the same shape lying between the arms of all four
    osculating trajectories.
    """
    arm = backward_trajectory(sys, lc.anchor_state)
    return arm, [rotate(arm, a) for a in angles]


# -- weak coupling ----------------------------------------------------------------

@dataclass(eq=False)
class CouplingSpec:
    """Pairwise coupling ``G(X_j, X_i)`` acting on oscillator ``i``.

    ``G`` takes row-stacked partner states, own states and the own sliding
    mask, and returns the row-stacked force; rows with ``i_sliding`` set are
    zeroed whatever ``G`` returns.
    """

    G: Callable
    strength: float = 1.0

    def __call__(self, Xj, Xi, i_sliding) -> np.ndarray:
        out = np.array(self.G(np.atleast_2d(Xj), np.atleast_2d(Xi), np.asarray(i_sliding)), dtype=float)
        out[np.asarray(i_sliding, dtype=bool)] = 0.0
        return out


def spring_coupling(params, strength: float | None = None) -> CouplingSpec:
    """Spring between the two masses, felt only while slipping."""
    m = params["m"]

    def G(Xj, Xi, _):
        out = np.zeros_like(Xi)
        out[:, 1] = -(Xi[:, 0] - Xj[:, 0]) / m
        return out

    k3 = params.get("k3", 1.0) if strength is None else strength
    return CouplingSpec(G, k3)


@dataclass
class FixedPoint:
    psi: float
    slope: float
    stability: str


@dataclass(eq=False)
class InteractionFunction:
    """``H`` and ``calH(psi) = H(-psi) - H(psi)`` on a uniform psi grid."""

    psi: np.ndarray
    H: np.ndarray
    calH: np.ndarray
    period: float
    fixed_points: list
    spline: CubicSpline = field(repr=False)

    def __call__(self, psi, nu: int = 0):
        return self.spline(np.mod(psi, self.period), nu)

    def slope(self, psi: float) -> float:
        return float(self.spline(float(psi) % self.period, 1))

    def stability_at(self, psi: float) -> str:
        for fp in self.fixed_points:
            if abs(periodic_difference(fp.psi, psi, self.period)) < 1e-8:
                return fp.stability
        raise ContractError(f"psi={psi} is not a fixed point")


def _quadrature_nodes(lc: LimitCycle, z: PrcResult, per_step: int):
    """Nodes, trapezoid weights and z values, split at every event."""
    ts, ws, zs = [], [], []
    for p in z.curve.pieces:
        g = _refine(p.ts, per_step)
        w = np.zeros_like(g)
        d = np.diff(g)
        w[:-1] += d / 2
        w[1:] += d / 2
        ts.append(g)
        ws.append(w)
        zs.append(np.atleast_2d(p.sol(g)).T)
    return np.concatenate(ts), np.concatenate(ws), np.vstack(zs)


def _sign(v: float, tol: float) -> str:
    if v < -tol:
        return "stable"
    if v > tol:
        return "unstable"
    return "neutral"


def h_function(
    lc: LimitCycle,
    z: PrcResult,
    coupling: CouplingSpec,
    n_psi: int = 512,
    *,
    per_step: int = 16,
    root_tol: float = 1e-10,
    neutral_tol: float = 1e-3,
) -> InteractionFunction:
    """Interaction function ``H(psi) = (1/T0) int z(t) . G(gamma(t+psi), gamma(t)) dt``.

    Fixed points of ``calH`` come from grid sign changes refined by Brent's
    method on the periodic cubic interpolant. A fixed point is stable when
    ``calH' < 0``, unstable when ``> 0``, and neutral when ``|calH'|`` is
    below ``neutral_tol`` times the largest slope on the grid.
    """
    T0 = lc.period
    tk, wk, zk = _quadrature_nodes(lc, z, per_step)
    Xi = lc.states(tk)
    sl = lc.sliding_at(tk)
    psi = np.arange(n_psi) * T0 / n_psi
    H = np.empty(n_psi)
    for j, p in enumerate(psi):
        Xj = lc.states(tk + p)
        G = coupling(Xj, Xi, sl)
        H[j] = float(np.sum(wk * np.einsum("ij,ij->i", zk, G))) / T0
    calH = H[(-np.arange(n_psi)) % n_psi] - H
    spline = CubicSpline(np.append(psi, T0), np.append(calH, calH[0]), bc_type="periodic")
    slopes = spline(psi, 1)
    tol = neutral_tol * float(np.max(np.abs(slopes)))
    roots = []
    for j in range(n_psi):
        a, b = calH[j], calH[(j + 1) % n_psi]
        if a == 0.0:
            roots.append(psi[j])
        elif b != 0.0 and a * b < 0:
            hi = psi[j + 1] if j + 1 < n_psi else T0
            roots.append(brentq(spline, psi[j], hi, xtol=root_tol) % T0)
    fps = [FixedPoint(float(r), float(spline(r, 1)), _sign(float(spline(r, 1)), tol)) for r in roots]
    return InteractionFunction(psi, H, calH, T0, fps, spline)


# -- phase model and full model ---------------------------------------------------------

@dataclass(eq=False)
class PhaseTrace:
    t: np.ndarray
    psi: np.ndarray
    period: float


def phase_model_simulate(
    calH: InteractionFunction,
    k3: float,
    psi0: float,
    t_end: float,
    t_eval=None,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> PhaseTrace:
    """Integrate ``psi' = k3 calH(psi)``; psi is reported mod T0."""
    T0 = calH.period
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 801)
    sol = solve_ivp(
        lambda t, y: k3 * calH(y[0]) * np.ones(1), (0.0, t_end), [float(psi0)],
        t_eval=t_eval, rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise NonConverged(f"phase model failed: {sol.message}")
    return PhaseTrace(sol.t, np.mod(sol.y[0], T0), T0)


def coupled_initial_state(single: LimitCycle, psi0: float) -> np.ndarray:
    """Pair state with oscillator 1 at phase 0 and oscillator 2 at ``psi0``."""
    return np.concatenate([single.state(0.0), single.state(psi0)])


def liftoff_phase_difference(a, b, T0: float, t_end: float | None = None):
    """``psi`` at each liftoff ``a_k`` of oscillator 1 from the nearest
    liftoff of oscillator 2: ``(a_k - b) mod T0``.

    With ``t_end`` given, liftoffs whose nearest partner may still lie
    beyond ``t_end`` are skipped.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        return a[:0], a[:0]
    if t_end is not None:
        a = a[a + T0 / 2 <= t_end]
    i = np.clip(np.searchsorted(b, a), 1, max(b.size - 1, 1))
    lo = b[i - 1]
    hi = b[np.minimum(i, b.size - 1)]
    nearest = np.where(np.abs(a - lo) <= np.abs(hi - a), lo, hi)
    return a, np.mod(a - nearest, T0)


def full_model_phase_difference(
    sys: FilippovSystem,
    x0,
    t_end: float,
    period: float,
    *,
    chunk: float = 1000.0,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    method: str = "DOP853",
    checkpoint: Callable | None = None,
    max_gap: float = 3.0,
) -> PhaseTrace:
    """Relative phase of the coupled pair from liftoff markers.

    The run is split into ``chunk``-long pieces; after each piece
    ``checkpoint(trace)`` receives the samples gathered so far.

    Raises
    ------
    DesynchronizationError
        An oscillator has no liftoff for more than ``max_gap`` periods.
    """
    x = np.asarray(x0, dtype=float)
    mode = None
    t = 0.0
    lifts: dict = {0: [], 1: []}
    while t < t_end - 1e-12:
        t1 = min(t + chunk, t_end)
        tr = integrate(sys, x, mode, (t, t1), rtol=rtol, atol=atol, method=method, dense=False)
        for e in tr.events:
            if e.kind == EventKind.LIFTOFF and e.target in lifts:
                lifts[e.target].append(e.time)
        x, mode, t = tr.x_final, tr.mode_final, tr.t_final
        for k, ev in lifts.items():
            times = np.concatenate([[0.0], ev, [t]])
            if np.max(np.diff(times)) > max_gap * period:
                raise DesynchronizationError(
                    "an oscillator stopped cycling", oscillator=k + 1, t=t
                )
        if checkpoint is not None:
            ta, ps = liftoff_phase_difference(lifts[0], lifts[1], period, t_end=t)
            checkpoint(PhaseTrace(ta, ps, period))
    ta, ps = liftoff_phase_difference(lifts[0], lifts[1], period)
    return PhaseTrace(ta, ps, period)
