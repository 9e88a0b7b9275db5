"""Event-driven integration of Filippov systems.

The integrator steps an embedded Runge-Kutta pair one accepted step at a
time, watches event functions at the step ends, and localizes sign changes
with Brent's method on the step's dense interpolant. Events switch the mode:

* landing: a boundary level crosses zero outward; the state is projected on
  the boundary and sliding starts;
* liftoff: the outward interior velocity on a sliding boundary crosses zero;
  the state is kept and interior motion resumes;
* crossing: a transversal surface is crossed and the region may change.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853, RK45, OdeSolution
from scipy.optimize import brentq

from .errors import (
    AnchorError,
    ContractError,
    DriftError,
    GrazingError,
    NoCycleError,
    TopologyChangeError,
)
from .filippov import FilippovSystem, Mode, Perturbation, SurfaceRole

log = logging.getLogger(__name__)

RTOL = 1e-10
ATOL = 1e-12
GRAZING_TOL = 1e-8
_SOLVERS = {"RK45": RK45, "DOP853": DOP853}


class EventKind(str, Enum):
    LANDING = "landing"
    LIFTOFF = "liftoff"
    CROSSING = "crossing"
    TIMING = "timing"


EventKey = tuple  # (EventKind, boundary or surface id)


def event_key(kind, target: int) -> EventKey:
    return (EventKind(kind), int(target))


@dataclass(frozen=True, eq=False)
class EventRecord:
    """A boundary or surface event with one-sided velocities."""

    kind: EventKind
    time: float
    state: np.ndarray
    target: int
    normal: np.ndarray
    pre_velocity: np.ndarray
    post_velocity: np.ndarray
    mode_before: Mode
    mode_after: Mode

    @property
    def key(self) -> EventKey:
        return (self.kind, self.target)

    def shifted(self, dt: float) -> "EventRecord":
        return EventRecord(
            self.kind, self.time + dt, self.state, self.target, self.normal,
            self.pre_velocity, self.post_velocity, self.mode_before, self.mode_after,
        )


@dataclass(eq=False)
class TrajectorySegment:
    """Piece of trajectory in a single mode with its dense interpolant."""

    mode: Mode
    t0: float
    t1: float
    ts: np.ndarray
    sol: OdeSolution | None

    def __call__(self, t):
        return self.sol(t)

    @property
    def states(self) -> np.ndarray:
        return self.sol(self.ts).T


@dataclass(eq=False)
class Trajectory:
    segments: list
    events: list
    t_final: float
    x_final: np.ndarray
    mode_final: Mode
    stopped: bool = False


@dataclass
class _Watch:
    kind: EventKind
    target: int
    direction: int          # +1 rising, -1 falling, 0 either
    last: float | None      # None while unarmed


def _level_fn(sys, w):
    if w.kind == EventKind.LANDING:
        b = sys.boundaries[w.target]
        n, c = b.normal, b.offset
        return lambda x, r: float(n @ x) - c
    if w.kind == EventKind.LIFTOFF:
        n = sys.boundaries[w.target].normal
        return lambda x, r: float(n @ sys.field(r)(x))
    s = sys.surfaces[w.target]
    n, c = s.normal, s.offset
    return lambda x, r: float(n @ x) - c


def _triggered(w: _Watch, new: float) -> bool:
    if w.last is None:
        return False
    if w.direction > 0:
        return w.last < 0 <= new
    if w.direction < 0:
        return w.last > 0 >= new
    return (w.last < 0 <= new) or (w.last > 0 >= new)


def _make_watches(sys, x, mode):
    tol = sys.event_tol
    ws = []
    F = sys.field(mode.region)(x)
    for b, bd in enumerate(sys.boundaries):
        if b in mode.sliding:
            g = float(bd.normal @ F)
            ws.append(_Watch(EventKind.LIFTOFF, b, -1, g if g > tol else None))
        else:
            h = bd.level(x)
            ws.append(_Watch(EventKind.LANDING, b, +1, h if h < -tol else None))
    for s, sd in enumerate(sys.surfaces):
        kind = EventKind.TIMING if sd.role == SurfaceRole.TIMING else EventKind.CROSSING
        h = sd.level(x)
        ws.append(_Watch(kind, s, 0, h if abs(h) > tol else None))
    return ws


def _rhs(sys, mode):
    f = sys.field(mode.region)
    if not mode.sliding:
        return lambda t, y: f(y)
    P = sys.projector(mode.sliding)
    act = mode.sliding
    return lambda t, y: P @ f(sys.project(y, act))


def integrate(
    sys: FilippovSystem,
    x0,
    mode0: Mode | None = None,
    t_span=(0.0, 1.0),
    *,
    rtol: float = RTOL,
    atol: float = ATOL,
    method: str = "RK45",
    dense: bool = True,
    stop: Callable | None = None,
    max_steps: int = 50_000_000,
) -> Trajectory:
    """Integrate through interior, landing, sliding and liftoff phases.

    Parameters
    ----------
    sys : FilippovSystem
    x0 : array_like
        Initial state in the closed domain.
    mode0 : Mode, optional
        Initial mode; inferred from the state when omitted.
    t_span : (float, float)
    rtol, atol : float
        Integrator tolerances.
    method : {"RK45", "DOP853"}
    dense : bool
        Keep dense interpolants of every segment.
    stop : callable, optional
        ``stop(event) -> bool``; integration ends right after an event for
        which it returns True.

    Returns
    -------
    Trajectory
    """
    t0, t_end = map(float, t_span)
    if not t_end > t0:
        raise ContractError("t_span must be increasing")
    x = sys.check_state(x0).astype(float)
    mode = mode0 if mode0 is not None else sys.infer_mode(x)
    tol = sys.event_tol
    lv = sys.levels(x) if sys.boundaries else np.zeros(0)
    if np.any(lv > tol):
        raise DriftError("initial state outside the domain", state=x.tolist())
    for b in mode.sliding:
        if abs(lv[b]) > tol:
            raise ContractError(f"sliding mode on boundary {b} but state is off it")
    x = sys.project(x, mode.sliding)
    solver_cls = _SOLVERS[method]

    segments, events = [], []
    t = t0
    steps = 0
    while True:
        watches = _make_watches(sys, x, mode)
        fns = [_level_fn(sys, w) for w in watches]
        solver = solver_cls(_rhs(sys, mode), t, x, t_end, rtol=rtol, atol=atol)
        ts, interps = [t], []
        hit = None
        while solver.status == "running":
            msg = solver.step()
            steps += 1
            if solver.status == "failed":
                raise GrazingError(
                    f"step size underflow: {msg}", time=solver.t, state=solver.y.tolist()
                )
            if steps > max_steps:
                raise ContractError("step budget exhausted")
            if mode.sliding:
                solver.y[:] = sys.project(solver.y, mode.sliding)
            y = solver.y
            t_old, t_new = solver.t_old, solver.t
            interp = solver.dense_output()
            cands = []
            vals = [fn(y, mode.region) for fn in fns]
            for w, fn, val in zip(watches, fns, vals):
                if _triggered(w, val):
                    g = lambda s, fn=fn: fn(interp(s), mode.region)
                    a = g(t_old)
                    if a == 0.0:
                        te = t_old
                    elif a * val > 0:
                        te = t_new
                    else:
                        te = brentq(g, t_old, t_new, xtol=1e-14, rtol=1e-15)
                    cands.append((te, w))
            valid = []
            for te, w in sorted(cands, key=lambda c: c[0]):
                if w.kind in (EventKind.CROSSING, EventKind.TIMING):
                    if not sys.surfaces[w.target].active(interp(te)):
                        continue
                valid.append((te, w))
            for w, val in zip(watches, vals):
                if w.last is None:
                    if w.kind == EventKind.LANDING:
                        if val > tol:
                            raise DriftError(
                                "left the domain right after liftoff",
                                time=t_new, state=y.tolist(),
                            )
                        if val < -tol:
                            w.last = val
                    elif abs(val) > tol:
                        w.last = val
                else:
                    w.last = val
            if valid:
                te0 = valid[0][0]
                group = [w for te, w in valid if te <= te0 + 1e-12]
                hit = (te0, group, interp)
                if te0 > ts[-1]:
                    ts.append(te0)
                    interps.append(interp)
                break
            ts.append(t_new)
            interps.append(interp)
        seg_end = hit[0] if hit else solver.t
        if dense and len(interps) > 0 and seg_end > t:
            sol = OdeSolution(ts, interps)
            segments.append(TrajectorySegment(mode, t, seg_end, np.asarray(ts), sol))
        if hit is None:
            return Trajectory(segments, events, solver.t, np.array(solver.y), mode)
        te, group, interp = hit
        xe = np.asarray(interp(te), dtype=float)
        new_events, mode_after, xe = _resolve(sys, mode, xe, te, group)
        events.extend(new_events)
        t, x, mode = te, xe, mode_after
        if stop is not None and any(stop(e) for e in new_events):
            return Trajectory(segments, events, t, x, mode, stopped=True)
        if t >= t_end:
            return Trajectory(segments, events, t, x, mode)


def _resolve(sys, mode, xe, te, group):
    """Apply a group of simultaneous events; return records and the new mode."""
    active = set(mode.sliding)
    region = mode.region
    landing = {w.target for w in group if w.kind == EventKind.LANDING}
    F_int = sys.field(region)(sys.project(xe, active | landing))
    for w in group:
        if w.kind == EventKind.LANDING:
            g = float(sys.boundaries[w.target].normal @ F_int)
            if g < GRAZING_TOL:
                raise GrazingError(
                    "grazing contact with a hard boundary",
                    time=te, state=xe.tolist(), boundary=w.target, indicator=g,
                )
            active.add(w.target)
        elif w.kind == EventKind.LIFTOFF:
            active.discard(w.target)
    xe = sys.project(xe, active)
    for w in group:
        if w.kind in (EventKind.CROSSING, EventKind.TIMING):
            F = sys.velocity(xe, Mode(region, frozenset(active)))
            h = 1e-7 / max(np.linalg.norm(F), 1e-300)
            region = sys.region(xe + h * F)
    mode_after = Mode(region, frozenset(active))
    pre = sys.velocity(xe, mode)
    post = sys.velocity(xe, mode_after)
    records = []
    for w in group:
        if w.kind in (EventKind.LANDING, EventKind.LIFTOFF):
            n = sys.boundaries[w.target].normal
        else:
            n = sys.surfaces[w.target].normal
        records.append(EventRecord(w.kind, te, xe.copy(), w.target, n, pre, post, mode, mode_after))
    return records, mode_after, xe


# -- limit cycles ----------------------------------------------------------------

@dataclass(eq=False)
class LimitCycle:
    """Periodic orbit with mode-tagged segments and events on ``[0, T0]``.

    ``events[0]`` is the phase-zero anchor at time 0; the same event closes
    the orbit at ``t = period``.
    """

    system: FilippovSystem
    period: float
    segments: list
    events: list
    anchor: EventKey
    closure_state: np.ndarray
    rtol: float = RTOL
    atol: float = ATOL
    method: str = "RK45"
    eps: float = 0.0
    perturbation: Perturbation | None = None
    cycles_used: int = 0

    def __post_init__(self):
        self._starts = [s.t0 for s in self.segments]

    @property
    def anchor_event(self) -> EventRecord:
        return self.events[0]

    @property
    def anchor_state(self) -> np.ndarray:
        return self.events[0].state

    @property
    def closure_defect(self) -> float:
        return float(np.linalg.norm(self.closure_state - self.anchor_state))

    @property
    def params(self) -> dict:
        return self.system.params

    def segment_index(self, t: float) -> int:
        i = bisect.bisect_right(self._starts, t) - 1
        return min(max(i, 0), len(self.segments) - 1)

    def state(self, t):
        """State at time ``t`` (taken modulo the period)."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            tm = float(t) % self.period
            return self.segments[self.segment_index(tm)](tm)
        return self.states(t)

    def states(self, ts) -> np.ndarray:
        """Vectorized :meth:`state`; returns an ``(len(ts), n)`` array."""
        tm = np.mod(np.asarray(ts, dtype=float).ravel(), self.period)
        idx = np.clip(np.searchsorted(self._starts, tm, side="right") - 1, 0, len(self.segments) - 1)
        out = np.empty((tm.size, self.system.dimension))
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = np.atleast_2d(self.segments[i].sol(tm[mask])).T
        return out

    def sliding_at(self, ts) -> np.ndarray:
        """Boolean mask: is the cycle sliding at each time."""
        tm = np.mod(np.asarray(ts, dtype=float).ravel(), self.period)
        idx = np.clip(np.searchsorted(self._starts, tm, side="right") - 1, 0, len(self.segments) - 1)
        flags = np.array([s.mode.is_sliding for s in self.segments])
        return flags[idx]

    def mode_at(self, t: float) -> Mode:
        return self.segments[self.segment_index(float(t) % self.period)].mode

    def events_with_key(self, key) -> list:
        key = event_key(*key)
        return [e for e in self.events if e.key == key]

    def event_keys(self) -> list:
        return [e.key for e in self.events]

    def liftoff_states(self) -> list:
        return [e.state for e in self.events if e.kind == EventKind.LIFTOFF]

    def sample(self, per_step: int = 1):
        """Times and states on the adaptive grid, split at events."""
        ts, xs, ids = [], [], []
        for i, s in enumerate(self.segments):
            grid = _refine(s.ts, per_step)
            ts.append(grid)
            xs.append(s.sol(grid).T)
            ids.append(np.full(grid.size, i))
        return np.concatenate(ts), np.vstack(xs), np.concatenate(ids)


def _refine(ts, per_step):
    ts = np.asarray(ts, dtype=float)
    if per_step <= 1:
        return ts.copy()
    frac = np.arange(per_step) / per_step
    inner = (ts[:-1, None] + np.diff(ts)[:, None] * frac[None, :]).ravel()
    return np.append(inner, ts[-1])


def _anchor_stop(key):
    return lambda e: e.key == key


def find_limit_cycle(
    sys: FilippovSystem,
    x_guess,
    anchor,
    *,
    mode: Mode | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
    method: str = "RK45",
    tol: float = 1e-9,
    max_cycles: int = 500,
    anchor_timeout: float = 1000.0,
) -> LimitCycle:
    """Converge onto a limit cycle and re-integrate one period densely.

    Parameters
    ----------
    anchor : (EventKind or str, int)
        Event kind and boundary/surface id that marks phase zero.
    tol : float
        Convergence threshold on successive anchor states.
    anchor_timeout : float
        Longest time allowed between two anchor events.

    Returns
    -------
    LimitCycle
    """
    key = event_key(*anchor)
    x = sys.check_state(x_guess)
    mode = mode if mode is not None else sys.infer_mode(x)
    stop = _anchor_stop(key)
    t = 0.0
    prev = None
    last_event = None
    for k in range(max_cycles + 1):
        traj = integrate(
            sys, x, mode, (t, t + anchor_timeout), rtol=rtol, atol=atol,
            method=method, dense=False, stop=stop,
        )
        if not traj.stopped:
            raise AnchorError(
                f"anchor event {key[0].value}:{key[1]} did not occur",
                after_time=t, state=traj.x_final.tolist(),
            )
        last_event = traj.events[-1]
        x, mode, t = traj.x_final, traj.mode_final, traj.t_final
        if prev is not None and np.linalg.norm(x - prev) < tol:
            break
        prev = x
    else:
        raise NoCycleError("anchor states did not converge", cycles=max_cycles)
    traj = integrate(
        sys, x, mode, (0.0, anchor_timeout), rtol=rtol, atol=atol,
        method=method, dense=True, stop=stop,
    )
    if not traj.stopped:
        raise AnchorError("anchor event did not recur on the dense pass")
    closing = traj.events[-1]
    first = last_event.shifted(-last_event.time)
    events = [first] + traj.events[:-1]
    return LimitCycle(
        sys, closing.time, traj.segments, events, key, closing.state,
        rtol=rtol, atol=atol, method=method, cycles_used=k + 1,
    )


def perturbed_cycle(
    sys: FilippovSystem,
    perturbation: Perturbation,
    eps: float,
    anchor,
    x_guess,
    **kwargs,
) -> LimitCycle:
    """Limit cycle of the perturbed field ``F_eps`` with the same anchor."""
    psys = sys.perturbed(perturbation, eps)
    lc = find_limit_cycle(psys, x_guess, anchor, **kwargs)
    lc.eps = float(eps)
    lc.perturbation = perturbation
    return lc


# -- time rescaling ------------------------------------------------------------

@dataclass(frozen=True)
class TimingRegion:
    """Part of the cycle between an entry event and an exit event."""

    name: str
    entry: EventKey
    exit: EventKey

    def __post_init__(self):
        object.__setattr__(self, "entry", event_key(*self.entry))
        object.__setattr__(self, "exit", event_key(*self.exit))


def region_window(lc: LimitCycle, region: TimingRegion):
    """Entry and exit events and times; the exit time may exceed the period."""
    from .errors import RegionTopologyError

    ins = lc.events_with_key(region.entry)
    outs = lc.events_with_key(region.exit)
    if len(ins) != 1 or len(outs) != 1:
        raise RegionTopologyError(
            f"region {region.name!r} needs one entry and one exit per period",
            entries=len(ins), exits=len(outs),
        )
    e_in, e_out = ins[0], outs[0]
    t_in, t_out = e_in.time, e_out.time
    if t_out <= t_in:
        t_out += lc.period
    return e_in, e_out, t_in, t_out


@dataclass(eq=False)
class TimeRescaling:
    """Map ``tau(t)`` from unperturbed to perturbed cycle time."""

    kind: str
    period: float
    period_eps: float
    knots: np.ndarray
    knots_eps: np.ndarray
    regions: tuple = ()
    durations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    durations_eps: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __call__(self, t):
        return np.interp(t, self.knots, self.knots_eps)

    def factors(self) -> np.ndarray:
        """Ratios ``T_eps^j / T0^j`` per piece."""
        return np.diff(self.knots_eps) / np.diff(self.knots)


def _check_topology(lc0, lc_eps):
    k0, k1 = lc0.event_keys(), lc_eps.event_keys()
    if k0 != k1:
        raise TopologyChangeError(
            "perturbed cycle has a different event sequence",
            unperturbed=[f"{k.value}:{i}" for k, i in k0],
            perturbed=[f"{k.value}:{i}" for k, i in k1],
        )


def rescale_time(
    lc0: LimitCycle,
    lc_eps: LimitCycle,
    kind: str = "uniform",
    regions: Sequence[TimingRegion] = (),
) -> TimeRescaling:
    """Uniform or piecewise-uniform time map between two cycles."""
    _check_topology(lc0, lc_eps)
    T0, Te = lc0.period, lc_eps.period
    if kind == "uniform":
        return TimeRescaling("uniform", T0, Te, np.array([0.0, T0]), np.array([0.0, Te]))
    if kind != "piecewise":
        raise ContractError(f"unknown rescaling kind {kind!r}")
    if not regions:
        raise ContractError("piecewise rescaling needs timing regions")
    cuts0, cuts1 = {0.0}, {0.0}
    d0, d1 = [], []
    for r in regions:
        _, _, a0, b0 = region_window(lc0, r)
        _, _, a1, b1 = region_window(lc_eps, r)
        d0.append(b0 - a0)
        d1.append(b1 - a1)
        for c, s in ((a0, cuts0), (b0 % T0, cuts0)):
            s.add(c)
        for c, s in ((a1, cuts1), (b1 % Te, cuts1)):
            s.add(c)
    k0 = np.array(sorted(cuts0) + [T0])
    k1 = np.array(sorted(cuts1) + [Te])
    if k0.size != k1.size:
        raise TopologyChangeError("region boundaries do not correspond")
    if not (np.all(np.diff(k0) > 0) and np.all(np.diff(k1) > 0)):
        raise TopologyChangeError("region boundaries are not increasing")
    return TimeRescaling(
        "piecewise", T0, Te, k0, k1, tuple(regions), np.array(d0), np.array(d1)
    )


def displacement(lc0: LimitCycle, lc_eps: LimitCycle, rescaling: TimeRescaling, ts):
    """Numerical shape displacement ``gamma_eps(tau(t)) - gamma(t)``."""
    ts = np.asarray(ts, dtype=float)
    tau = rescaling(ts)
    return lc_eps.state(tau) - lc0.state(ts)
