"""Timing and shape sensitivity along a limit cycle with sliding.

Forward quantities (variational ``u``, shape response ``gamma1``) cross
events with saltation matrices ``S``. Backward quantities (phase response
``z``, local timing response ``eta``) cross events, in reverse time, with
the time-reversed jump matrices.

On a sliding segment the linearization is ``P DF P`` where ``P`` projects
onto the boundary, so normal components of ``u`` and ``z`` stay frozen.
"""
from __future__ import annotations

import bisect
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ContractError, MonodromyError, NonTransversalError
from .filippov import Perturbation
from .integrator import (
    EventKind,
    EventRecord,
    LimitCycle,
    TimingRegion,
    _refine,
    event_key,
    perturbed_cycle,
    region_window,
)

log = logging.getLogger(__name__)

LIN_RTOL = 1e-10
LIN_ATOL = 1e-12
TRANSVERSAL_TOL = 1e-10


# -- event matrices ----------------------------------------------------------

def _outer_normal(e: EventRecord) -> np.ndarray:
    n = np.asarray(e.normal, dtype=float)
    return np.outer(n, n)


def saltation_matrix(e: EventRecord) -> np.ndarray:
    """Saltation matrix mapping variations across the event.

    Landing gives ``I - n n^T``, liftoff the identity, a transversal crossing
    ``I + (F+ - F-) n^T / (n^T F-)``.
    """
    dim = e.state.size
    if e.kind == EventKind.LANDING:
        return np.eye(dim) - _outer_normal(e)
    if e.kind == EventKind.LIFTOFF:
        return np.eye(dim)
    n = e.normal
    den = float(n @ e.pre_velocity)
    if abs(den) < TRANSVERSAL_TOL:
        raise NonTransversalError("crossing is tangent to the surface", time=e.time)
    return np.eye(dim) + np.outer(e.post_velocity - e.pre_velocity, n) / den


def jump_matrix(e: EventRecord) -> np.ndarray:
    """Forward jump of the phase response at a transversal crossing, ``S^-T``."""
    if e.kind in (EventKind.LANDING, EventKind.LIFTOFF):
        raise ContractError("jump matrix is only invertible at transversal crossings")
    return np.linalg.inv(saltation_matrix(e)).T


def reversed_jump_matrix(e: EventRecord) -> np.ndarray:
    """Backward-time jump of the phase response: ``z- = J z+``.

    Liftoff gives ``I - n n^T``, landing the identity, a transversal
    crossing ``S^T``.
    """
    dim = e.state.size
    if e.kind == EventKind.LIFTOFF:
        return np.eye(dim) - _outer_normal(e)
    if e.kind == EventKind.LANDING:
        return np.eye(dim)
    return saltation_matrix(e).T


# -- curves --------------------------------------------------------------------

@dataclass(eq=False)
class CurvePiece:
    t0: float
    t1: float
    ts: np.ndarray
    sol: Callable
    seg: int

    def __call__(self, t):
        return self.sol(t)


@dataclass(eq=False)
class Discontinuity:
    """Jump of a curve at an event, with both one-sided limits."""

    time: float
    left: np.ndarray
    right: np.ndarray
    matrix: np.ndarray
    events: tuple = ()


@dataclass(eq=False)
class SensitivityCurve:
    """Vector-valued curve on the cycle, continuous between events."""

    name: str
    period: float
    pieces: list
    markers: list = field(default_factory=list)

    def __post_init__(self):
        self.pieces.sort(key=lambda p: p.t0)
        self.markers.sort(key=lambda m: m.time)
        self._starts = [p.t0 for p in self.pieces]

    def piece_at(self, t: float, side: str = "right") -> CurvePiece:
        i = bisect.bisect_right(self._starts, t) - 1
        i = min(max(i, 0), len(self.pieces) - 1)
        if side == "left" and i > 0 and abs(t - self.pieces[i].t0) < 1e-12:
            i -= 1
        return self.pieces[i]

    def __call__(self, t, side: str = "right"):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.piece_at(float(t), side)(float(t))
        return np.array([self.piece_at(float(s), side)(float(s)) for s in t])

    def samples(self, per_step: int = 4):
        """Times, values and one-sided-limit flags (-1 left, +1 right, 0 none)."""
        mt = np.array([m.time for m in self.markers])
        ts, vs, flags = [], [], []
        for p in self.pieces:
            grid = _refine(p.ts, per_step)
            vals = np.atleast_2d(p.sol(grid)).T
            fl = np.zeros(grid.size, dtype=int)
            if mt.size:
                if np.any(np.abs(mt - grid[0]) < 1e-12):
                    fl[0] = 1
                if np.any(np.abs(mt - grid[-1]) < 1e-12) or np.any(
                    np.abs(mt - grid[-1] + self.period) < 1e-12
                ):
                    fl[-1] = -1
            ts.append(grid)
            vs.append(vals)
            flags.append(fl)
        return np.concatenate(ts), np.vstack(vs), np.concatenate(flags)


# -- propagation machinery ---------------------------------------------------------

def _event_groups(lc: LimitCycle) -> dict:
    """Segment index -> events located at that segment's start."""
    starts = [s.t0 for s in lc.segments]
    groups: dict = {}
    for e in lc.events:
        i = bisect.bisect_left(starts, e.time - 1e-12)
        if i < len(starts) and abs(starts[i] - e.time) <= 1e-9:
            groups.setdefault(i, []).append(e)
        elif abs(e.time) <= 1e-12:
            groups.setdefault(0, []).append(e)
    return groups


def _window_pieces(lc: LimitCycle, a: float, b: float):
    """Segment pieces covering ``[a, b]`` in cycle time; ``b`` may exceed T0."""
    T0 = lc.period
    out = []
    for shift in (0.0, T0):
        for i, s in enumerate(lc.segments):
            lo, hi = max(s.t0 + shift, a), min(s.t1 + shift, b)
            if hi - lo > 1e-13:
                out.append((i, lo - shift, hi - shift, lo, hi))
    out.sort(key=lambda p: p[3])
    return out


def _lin_solve(fun, t_span, y0, rtol, atol):
    sol = solve_ivp(fun, t_span, y0, method="RK45", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise ContractError(f"linear solve failed: {sol.message}")
    return sol


def _group_matrix(group, fn):
    M = None
    for e in group:
        A = fn(e)
        M = A if M is None else A @ M
    return M


def _propagate(
    lc: LimitCycle,
    a: float,
    b: float,
    y0: np.ndarray,
    *,
    backward: bool,
    forcing: Callable | None = None,
    rtol: float = LIN_RTOL,
    atol: float = LIN_ATOL,
):
    """Carry a vector or matrix along the window ``[a, b]``.

    Forward: ``y' = A y + f(t)`` with saltation at interior events.
    Backward: ``y' = -A^T y`` with reversed jumps at interior events.
    Returns ``(pieces, markers, y_end)`` where ``y_end`` is the value at the
    far end of the window, before any event located there.
    """
    sys = lc.system
    shape = np.shape(y0)
    groups = _event_groups(lc)
    pieces_spec = _window_pieces(lc, a, b)
    if backward:
        pieces_spec = pieces_spec[::-1]
    y = np.array(y0, dtype=float)
    pieces, markers = [], []
    for k, (i, lo, hi, alo, ahi) in enumerate(pieces_spec):
        seg = lc.segments[i]
        mode = seg.mode

        def jac(t, seg=seg, mode=mode):
            return sys.jacobian(seg(t), mode)

        if backward:
            def fun(t, yy, jac=jac):
                A = jac(t)
                return -(A.T @ yy.reshape(shape)).ravel()
            span = (hi, lo)
        else:
            def fun(t, yy, jac=jac, i=i):
                A = jac(t)
                out = A @ yy.reshape(shape)
                if forcing is not None:
                    out = out + forcing(t, seg, mode)
                return out.ravel()
            span = (lo, hi)
        sol = _lin_solve(fun, span, y.ravel(), rtol, atol)
        ts = np.sort(sol.t)
        ts[0], ts[-1] = lo, hi
        if len(shape) == 1:
            pieces.append(CurvePiece(lo, hi, ts, sol.sol, i))
        y_new = sol.y[:, -1].reshape(shape)
        last = k == len(pieces_spec) - 1
        if last:
            return pieces, markers, y_new
        # event between this piece and the next one
        t_ev = lo if backward else hi
        seg_idx = i if backward else pieces_spec[k + 1][0]
        group = groups.get(seg_idx, [])
        if group:
            fn = reversed_jump_matrix if backward else saltation_matrix
            M = _group_matrix(group, fn)
            y_next = M @ y_new
            if len(shape) == 1:
                left, right = (y_next, y_new) if backward else (y_new, y_next)
                markers.append(Discontinuity(t_ev % lc.period, left, right, M, tuple(group)))
            y = y_next
        else:
            y = y_new
    return pieces, markers, y


def _anchor_group(lc: LimitCycle):
    return _event_groups(lc).get(0, [lc.anchor_event])


# -- variational equation ------------------------------------------------------------

@dataclass(eq=False)
class VariationalResult:
    curve: SensitivityCurve
    final: np.ndarray          # value just after the anchor event at T0


def variational_forward(lc: LimitCycle, u0, *, rtol=LIN_RTOL, atol=LIN_ATOL) -> VariationalResult:
    """Solve the variational equation over one period from ``u(0+) = u0``."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (lc.system.dimension,):
        raise ContractError("u0 has the wrong dimension")
    pieces, markers, u_end = _propagate(lc, 0.0, lc.period, u0, backward=False, rtol=rtol, atol=atol)
    S = _group_matrix(_anchor_group(lc), saltation_matrix)
    final = S @ u_end
    markers.append(Discontinuity(lc.period, u_end, final, S, tuple(_anchor_group(lc))))
    return VariationalResult(SensitivityCurve("u", lc.period, pieces, markers), final)


@dataclass(eq=False)
class FundamentalMatrix:
    """Columns are variational solutions from the unit vectors."""

    columns: list
    monodromy: np.ndarray

    def __call__(self, t, side: str = "right") -> np.ndarray:
        return np.column_stack([c.curve(t, side) for c in self.columns])


def fundamental_matrix(lc: LimitCycle, **kw) -> FundamentalMatrix:
    n = lc.system.dimension
    cols = [variational_forward(lc, np.eye(n)[i], **kw) for i in range(n)]
    M = np.column_stack([c.final for c in cols])
    return FundamentalMatrix(cols, M)


def _pick_unit_eigvec(M: np.ndarray):
    w, V = np.linalg.eig(M)
    i = int(np.argmin(np.abs(w - 1.0)))
    lam = w[i]
    if abs(lam - 1.0) > 1e-6:
        raise MonodromyError(
            "no eigenvalue near 1", eigenvalues=[complex(x).__repr__() for x in w]
        )
    if abs(lam.imag) > 1e-6:
        raise MonodromyError("eigenvalue near 1 is complex", eigenvalue=repr(complex(lam)))
    v = V[:, i]
    vr = v.real if np.linalg.norm(v.real) >= np.linalg.norm(v.imag) else v.imag
    return float(lam.real), vr / np.linalg.norm(vr), w


# -- phase response --------------------------------------------------------------------

@dataclass(eq=False)
class PrcResult:
    curve: SensitivityCurve
    eigenvalue: float
    eigenvalues: np.ndarray
    backward_monodromy: np.ndarray
    normalization_defect: float

    def __call__(self, t, side="right"):
        return self.curve(t, side)


def iprc(lc: LimitCycle, *, rtol=LIN_RTOL, atol=LIN_ATOL) -> PrcResult:
    """Infinitesimal phase response curve by backward adjoint integration.

    The backward fundamental matrix over one period (reversed jumps applied
    at every event, the anchor last) has the periodic adjoint solution as its
    eigenvector for eigenvalue 1; it is normalized by ``F . z = 1`` at the
    anchor and propagated once more with dense output.
    """
    n = lc.system.dimension
    T0 = lc.period
    _, _, Psi = _propagate(lc, 0.0, T0, np.eye(n), backward=True, rtol=rtol, atol=atol)
    J0 = _group_matrix(_anchor_group(lc), reversed_jump_matrix)
    Psi = J0 @ Psi
    lam, v, w = _pick_unit_eigvec(Psi)
    F_end = lc.anchor_event.pre_velocity
    z0 = v / float(F_end @ v)
    pieces, markers, z_start = _propagate(lc, 0.0, T0, z0, backward=True, rtol=rtol, atol=atol)
    markers.append(Discontinuity(0.0, J0 @ z_start, z_start, J0, tuple(_anchor_group(lc))))
    curve = SensitivityCurve("z", T0, pieces, markers)
    defect = normalization_defect(lc, curve)
    if defect > 1e-6:
        log.warning("phase response normalization defect %.3g", defect)
    return PrcResult(curve, lam, w, Psi, defect)


def _curve_dot_velocity(lc: LimitCycle, curve: SensitivityCurve, per_step=2):
    sys = lc.system
    out = []
    for p in curve.pieces:
        seg = lc.segments[p.seg]
        grid = _refine(p.ts, per_step)
        vals = p.sol(grid).T
        for t, zz in zip(grid, vals):
            out.append(float(sys.velocity(seg(t), seg.mode) @ zz))
    return np.array(out)


def normalization_defect(lc: LimitCycle, curve: SensitivityCurve) -> float:
    """``max |F . z - 1|`` over the sample grid."""
    return float(np.max(np.abs(_curve_dot_velocity(lc, curve) - 1.0)))


def _quad(lc: LimitCycle, curve: SensitivityCurve, integrand_vec: Callable, per_step=4) -> float:
    """Trapezoid rule of ``curve(t) . v(t)`` piece by piece."""
    total = 0.0
    for p in curve.pieces:
        seg = lc.segments[p.seg]
        grid = _refine(p.ts, per_step)
        vals = p.sol(grid).T
        f = np.array([integrand_vec(t, seg) @ v for t, v in zip(grid, vals)])
        total += float(np.trapezoid(f, grid))
    return total


def period_shift_T1(lc: LimitCycle, z, perturbation: Perturbation, per_step: int = 16) -> float:
    """Linear period change ``T1 = -int z . dF/deps dt`` over one period."""
    curve = z.curve if isinstance(z, PrcResult) else z
    if perturbation.is_zero:
        return 0.0
    sys = lc.system
    return -_quad(
        lc, curve, lambda t, seg: sys.param_derivative(seg(t), seg.mode, perturbation),
        per_step=per_step,
    )


# -- local timing response -------------------------------------------------------------

@dataclass(eq=False)
class LocalTimingResult:
    region: TimingRegion
    t_in: float
    t_out: float
    T0j: float
    eta: SensitivityCurve
    T1j: float
    nu1j: float
    entry_shift: np.ndarray
    exit_shift: np.ndarray
    entry_term: float
    exit_term: float
    integral_term: float
    exit_normal: np.ndarray


def exit_normal(lc: LimitCycle, e: EventRecord) -> np.ndarray:
    """Normal of the exit surface at an exit event.

    For a liftoff exit the surface is the liftoff set inside the boundary;
    its normal is the tangential part of the gradient of ``n . F``.
    """
    if e.kind != EventKind.LIFTOFF:
        return np.asarray(e.normal, dtype=float)
    sys = lc.system
    n = e.normal
    grad = sys.field(e.mode_before.region).jac(e.state).T @ n
    P = sys.projector(e.mode_before.sliding)
    g = P @ grad
    return g / np.linalg.norm(g)


def ltrc(
    lc: LimitCycle,
    region: TimingRegion,
    perturbation: Perturbation,
    *,
    lc_eps: LimitCycle | None = None,
    eps: float = 1e-4,
    rtol=LIN_RTOL,
    atol=LIN_ATOL,
) -> LocalTimingResult:
    """Local timing response of one region and its period shift ``T1^j``.

    The exit condition is ``eta = -n_out / (n_out . F)``. ``T1^j`` adds the
    entry shift term, the integral of ``eta . dF/deps`` across the region,
    and an exit shift term that vanishes for fixed flat exit surfaces and
    accounts for a liftoff set that moves with the parameter.
    """
    e_in, e_out, t_in, t_out = region_window(lc, region)
    n_out = exit_normal(lc, e_out)
    F_out = e_out.pre_velocity
    den = float(n_out @ F_out)
    if abs(den) < TRANSVERSAL_TOL:
        raise NonTransversalError("exit surface is tangent to the flow", time=e_out.time)
    eta_out = -n_out / den
    pieces, markers, eta_in = _propagate(
        lc, t_in, t_out, eta_out, backward=True, rtol=rtol, atol=atol
    )
    curve = SensitivityCurve(f"eta_{region.name}", lc.period, pieces, markers)
    sys = lc.system
    integral = _quad(
        lc, curve, lambda t, seg: sys.param_derivative(seg(t), seg.mode, perturbation),
        per_step=16,
    )
    if perturbation.is_zero:
        d_in = np.zeros_like(eta_in)
        d_out = np.zeros_like(eta_in)
    else:
        if lc_eps is None:
            lc_eps = perturbed_cycle(
                sys, perturbation, eps, lc.anchor, lc.anchor_state,
                rtol=lc.rtol, atol=lc.atol, method=lc.method,
            )
        eps_used = lc_eps.eps
        pe_in, pe_out, _, _ = region_window(lc_eps, region)
        d_in = (pe_in.state - e_in.state) / eps_used
        d_out = (pe_out.state - e_out.state) / eps_used
    entry = float(eta_in @ d_in)
    exit_ = -float(eta_out @ d_out)
    T1j = entry + integral + exit_
    T0j = t_out - t_in
    return LocalTimingResult(
        region, t_in, t_out % lc.period if t_out > lc.period else t_out, T0j, curve,
        T1j, T1j / T0j, d_in, d_out, entry, exit_, integral, n_out,
    )


# -- shape response ----------------------------------------------------------------------

@dataclass(eq=False)
class SrcResult:
    curve: SensitivityCurve
    kind: str
    nu: float | dict
    T1: float
    section: tuple
    p_eps: np.ndarray
    p0: np.ndarray
    eps: float
    closure_defect: float
    timing: list = field(default_factory=list)

    def __call__(self, t, side="right"):
        return self.curve(t, side)


def _in_window(t, a, b, T0):
    return ((t - a) % T0) < (b - a) - 1e-12


def isrc(
    lc: LimitCycle,
    perturbation: Perturbation,
    *,
    kind: str = "uniform",
    regions: Sequence[TimingRegion] = (),
    nu: float | None = None,
    nu_by_region: Mapping[str, float] | None = None,
    section=None,
    lc_eps: LimitCycle | None = None,
    eps: float = 1e-4,
    z: PrcResult | None = None,
    rtol=LIN_RTOL,
    atol=LIN_ATOL,
) -> SrcResult:
    """Infinitesimal shape response under uniform or piecewise rescaling.

    Solves ``gamma1' = DF gamma1 + nu(t) F + dF/deps`` over one period,
    starting at the section event from ``(p_eps - p0) / eps`` measured on a
    weakly perturbed cycle, with saltation at events.
    """
    sys = lc.system
    T0 = lc.period
    section = lc.anchor if section is None else event_key(*section)
    timing = []
    T1 = None
    if kind == "uniform":
        if nu is None:
            z = z if z is not None else iprc(lc)
            T1 = period_shift_T1(lc, z, perturbation)
            nu = T1 / T0
        else:
            T1 = nu * T0
        nu_value = float(nu)

        def nu_of(t):
            return nu_value
    elif kind == "piecewise":
        if not regions:
            raise ContractError("piecewise shape response needs timing regions")
        windows = {r.name: region_window(lc, r)[2:] for r in regions}
        if nu_by_region is None:
            if lc_eps is None and not perturbation.is_zero:
                lc_eps = perturbed_cycle(
                    sys, perturbation, eps, lc.anchor, lc.anchor_state,
                    rtol=lc.rtol, atol=lc.atol, method=lc.method,
                )
            timing = [ltrc(lc, r, perturbation, lc_eps=lc_eps) for r in regions]
            nu_by_region = {res.region.name: res.nu1j for res in timing}
            T1 = sum(res.T1j for res in timing)
        else:
            T1 = sum(nu_by_region[n] * (b - a) for n, (a, b) in windows.items())
        nu_value = dict(nu_by_region)

        def nu_of(t):
            for name, (a, b) in windows.items():
                if _in_window(t, a, b, T0):
                    return nu_value[name]
            raise ContractError(f"time {t} lies in no timing region")
    else:
        raise ContractError(f"unknown rescaling kind {kind!r}")

    evs = lc.events_with_key(section)
    if len(evs) != 1:
        raise ContractError(f"section event occurs {len(evs)} times per period")
    e_s = evs[0]
    if perturbation.is_zero:
        p_eps, eps_used = e_s.state, eps
        gamma0 = np.zeros(sys.dimension)
    else:
        if lc_eps is None:
            lc_eps = perturbed_cycle(
                sys, perturbation, eps, lc.anchor, lc.anchor_state,
                rtol=lc.rtol, atol=lc.atol, method=lc.method,
            )
        pe = lc_eps.events_with_key(section)
        if len(pe) != 1:
            raise ContractError("section event missing on the perturbed cycle")
        p_eps, eps_used = pe[0].state, lc_eps.eps
        gamma0 = (p_eps - e_s.state) / eps_used

    seg_nu = {}

    def forcing(t, seg, mode):
        key = id(seg)
        if key not in seg_nu:
            seg_nu[key] = nu_of(0.5 * (seg.t0 + seg.t1))
        x = seg(t)
        return seg_nu[key] * sys.velocity(x, mode) + sys.param_derivative(x, mode, perturbation)

    t_s = e_s.time
    pieces, markers, g_end = _propagate(
        lc, t_s, t_s + T0, gamma0, backward=False, forcing=forcing, rtol=rtol, atol=atol
    )
    group = [e for e in _event_groups(lc).get(lc.segment_index(t_s), []) if e.time == t_s] or [e_s]
    S = _group_matrix(group, saltation_matrix)
    g_close = S @ g_end
    markers.append(Discontinuity(t_s, g_end, gamma0, S, tuple(group)))
    closure = float(np.linalg.norm(g_close - gamma0))
    scale = max(1.0, float(np.linalg.norm(gamma0)))
    if closure > 1e-3 * scale:
        warnings.warn(f"shape response closure defect {closure:.3g}", RuntimeWarning)
    curve = SensitivityCurve("gamma1", T0, pieces, markers)
    return SrcResult(
        curve, kind, nu_value, float(T1), section, np.asarray(p_eps), e_s.state,
        float(eps_used), closure, timing,
    )


def isrc_offset_fit(gamma_a, gamma_b, lc: LimitCycle, per_step: int = 2):
    """Fit ``gamma_b - gamma_a = phi F(gamma0)``; return ``phi`` and max residual."""
    ca = gamma_a.curve if isinstance(gamma_a, SrcResult) else gamma_a
    cb = gamma_b.curve if isinstance(gamma_b, SrcResult) else gamma_b
    sys = lc.system
    diffs, vels = [], []
    for seg in lc.segments:
        grid = _refine(seg.ts, per_step)[1:-1]
        if grid.size == 0:
            grid = np.array([0.5 * (seg.t0 + seg.t1)])
        for t in grid:
            diffs.append(cb(t) - ca(t))
            vels.append(sys.velocity(seg(t), seg.mode))
    D, F = np.array(diffs), np.array(vels)
    phi = float(np.sum(D * F) / np.sum(F * F))
    resid = float(np.max(np.linalg.norm(D - phi * F, axis=1)))
    return phi, resid


def shape_error(
    lc0: LimitCycle, lc_eps: LimitCycle, src: SrcResult, rescaling,
    n: int = 8000, norm: str = "l2",
) -> float:
    """Relative error ``||eps gamma1 - Delta|| / ||Delta||`` over one period.

    ``norm`` is ``"l2"`` or ``"l1"`` in time, of the pointwise Euclidean
    norm, on a uniform midpoint grid of ``n`` samples.
    """
    from .integrator import displacement

    T0 = lc0.period
    ts = (np.arange(n) + 0.5) * T0 / n
    delta = displacement(lc0, lc_eps, rescaling, ts)
    approx = lc_eps.eps * src.curve(ts)
    e = np.linalg.norm(approx - delta, axis=1)
    d = np.linalg.norm(delta, axis=1)
    if norm == "l2":
        return float(np.sqrt(np.sum(e**2) / np.sum(d**2)))
    if norm == "l1":
        return float(np.sum(e) / np.sum(d))
    raise ContractError(f"unknown norm {norm!r}")
