"""Piecewise-smooth systems with hard boundaries and sliding motion.

A system lives on a closed domain bounded by flat hard boundaries
``H_b(x) = n_b . x - c_b <= 0`` with outward unit normals ``n_b``. Inside,
the state follows the interior field of the region it belongs to. On a
boundary whose interior field points outward the state slides with the
tangential projection of that field.

Regions are separated by flat transversal surfaces, either switching
surfaces (the field may jump) or local timing surfaces used only to delimit
timing regions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .errors import ContractError

DEFAULT_EVENT_TOL = 1e-10


@dataclass(frozen=True)
class Mode:
    """Dynamical mode: the region plus the set of boundaries being slid on."""

    region: int = 0
    sliding: frozenset = frozenset()

    @property
    def is_sliding(self) -> bool:
        return bool(self.sliding)

    def label(self) -> str:
        if not self.sliding:
            return f"interior{self.region}"
        ids = "+".join(str(b) for b in sorted(self.sliding))
        return f"sliding{ids}"


def Interior(region: int = 0) -> Mode:
    return Mode(region, frozenset())


def Sliding(boundary: int, region: int = 0) -> Mode:
    return Mode(region, frozenset([boundary]))


def _fd_jacobian(f, x, h_scale=1e-6):
    x = np.asarray(x, dtype=float)
    h = h_scale * (1.0 + np.linalg.norm(x))
    cols = []
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = h
        cols.append((f(x + dx) - f(x - dx)) / (2 * h))
    return np.column_stack(cols)


@dataclass(frozen=True)
class InteriorField:
    """Smooth vector field ``F(x; p)`` with optional analytic derivatives.

    Parameters
    ----------
    velocity : callable
        ``velocity(x, params) -> ndarray``.
    params : mapping
        Named parameter values.
    jacobian : callable, optional
        ``jacobian(x, params) -> (n, n) ndarray``. Central differences are
        used when omitted.
    param_jacobian : callable, optional
        ``param_jacobian(x, params) -> {name: dF/dp_name}``. Central
        differences in the parameter are used when omitted.
    """

    velocity: Callable
    params: Mapping[str, float]
    jacobian: Callable | None = None
    param_jacobian: Callable | None = None

    def __call__(self, x):
        return self.velocity(x, self.params)

    def jac(self, x):
        if self.jacobian is not None:
            return self.jacobian(x, self.params)
        return _fd_jacobian(self, x)

    def dparam(self, x, name: str):
        if name not in self.params:
            raise ContractError(f"unknown parameter {name!r}")
        if self.param_jacobian is not None:
            return self.param_jacobian(x, self.params)[name]
        p = dict(self.params)
        h = 1e-6 * (1.0 + abs(p[name]))
        p[name] = self.params[name] + h
        up = self.velocity(x, p)
        p[name] = self.params[name] - h
        return (up - self.velocity(x, p)) / (2 * h)

    def param_derivative(self, x, direction: Mapping[str, float]):
        """Return ``sum_k d_k dF/dp_k`` at ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if not direction:
            return out
        if self.param_jacobian is not None:
            parts = self.param_jacobian(x, self.params)
            for name, coef in direction.items():
                if name not in parts:
                    raise ContractError(f"unknown parameter {name!r}")
                out = out + coef * parts[name]
            return out
        for name, coef in direction.items():
            out = out + coef * self.dparam(x, name)
        return out

    def with_params(self, **overrides) -> "InteriorField":
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise ContractError(f"unknown parameters {sorted(unknown)}")
        p = dict(self.params)
        p.update(overrides)
        return replace(self, params=p)


@dataclass(frozen=True)
class HardBoundary:
    """Flat hard boundary ``n . x = offset`` with outward unit normal ``n``."""

    normal: np.ndarray
    offset: float
    name: str = ""

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0 or not np.isfinite(norm):
            raise ContractError("boundary normal must be a nonzero finite vector")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def level(self, x) -> float:
        return float(self.normal @ x) - self.offset

    def outward_normal(self, x=None) -> np.ndarray:
        return self.normal


class SurfaceRole(str, Enum):
    SWITCHING = "switching"
    TIMING = "timing"


@dataclass(frozen=True)
class TransversalSurface:
    """Flat surface ``normal . x = offset``, optionally restricted to a half-space.

    ``support`` (a vector ``s`` and scalar ``s0``) restricts the surface to
    points with ``s . x > s0``; this turns a line through the origin into a
    ray, for instance.
    """

    normal: np.ndarray
    offset: float = 0.0
    role: SurfaceRole = SurfaceRole.TIMING
    name: str = ""
    support: np.ndarray | None = None
    support_offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0 or not np.isfinite(norm):
            raise ContractError("surface normal must be a nonzero finite vector")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)
        object.__setattr__(self, "role", SurfaceRole(self.role))
        if self.support is not None:
            object.__setattr__(self, "support", np.asarray(self.support, dtype=float))

    def level(self, x) -> float:
        return float(self.normal @ x) - self.offset

    def active(self, x) -> bool:
        if self.support is None:
            return True
        return float(self.support @ x) > self.support_offset


@dataclass(frozen=True)
class Perturbation:
    """Direction ``d`` in parameter space, optionally confined to regions.

    The perturbed field is ``F(x; p + eps*d)`` in the listed regions and the
    unperturbed field elsewhere.
    """

    direction: Mapping[str, float] = field(default_factory=dict)
    regions: frozenset | None = None

    def applies(self, region: int) -> bool:
        return self.regions is None or region in self.regions

    @property
    def is_zero(self) -> bool:
        return not any(self.direction.values())


@dataclass(frozen=True, eq=False)
class FilippovSystem:
    """Filippov system on a domain bounded by flat hard boundaries.

    Parameters
    ----------
    dimension : int
    fields : mapping
        Region id to :class:`InteriorField`.
    boundaries : tuple of HardBoundary
    surfaces : tuple of TransversalSurface
    region_of : callable, optional
        ``region_of(x) -> region id``; a single region 0 when omitted.
    region_names : mapping, optional
        Human-readable names for region ids.
    event_tol : float
        Absolute tolerance for "on a boundary".
    boundary_params : tuple of str
        Parameters that move a boundary; these cannot be perturbed.
    """

    dimension: int
    fields: Mapping[int, InteriorField]
    boundaries: tuple = ()
    surfaces: tuple = ()
    region_of: Callable | None = None
    region_names: Mapping[str, int] = field(default_factory=dict)
    event_tol: float = DEFAULT_EVENT_TOL
    boundary_params: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "_proj_cache", {})
        for f in self.fields.values():
            if not isinstance(f, InteriorField):
                raise ContractError("fields must be InteriorField instances")
        for b in self.boundaries:
            if b.normal.size != self.dimension:
                raise ContractError("boundary normal has wrong dimension")

    # -- geometry ---------------------------------------------------------
    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ContractError(
                f"state has shape {x.shape}, expected ({self.dimension},)"
            )
        if not np.all(np.isfinite(x)):
            raise ContractError("state has non-finite entries")
        return x

    def region(self, x) -> int:
        if self.region_of is None:
            return 0
        return int(self.region_of(x))

    def levels(self, x) -> np.ndarray:
        return np.array([b.level(x) for b in self.boundaries])

    def normals(self, active) -> np.ndarray:
        return np.array([self.boundaries[b].normal for b in sorted(active)])

    def projector(self, active) -> np.ndarray:
        """Orthogonal projector onto the tangent space of the active boundaries."""
        key = frozenset(active)
        P = self._proj_cache.get(key)
        if P is None:
            n = self.dimension
            if not key:
                P = np.eye(n)
            else:
                N = self.normals(key).T
                P = np.eye(n) - N @ np.linalg.solve(N.T @ N, N.T)
            self._proj_cache[key] = P
        return P

    def project(self, x, active) -> np.ndarray:
        """Orthogonal projection of ``x`` onto the intersection of boundaries."""
        if not active:
            return x
        ids = sorted(active)
        N = self.normals(ids).T
        r = N.T @ x - np.array([self.boundaries[b].offset for b in ids])
        out = x - N @ np.linalg.solve(N.T @ N, r)
        # hit axis-aligned boundaries exactly so branch tests see the level
        for b in ids:
            bd = self.boundaries[b]
            axis = np.flatnonzero(np.abs(bd.normal) == 1.0)
            if axis.size == 1:
                i = axis[0]
                out[i] = bd.offset * bd.normal[i]
        return out

    # -- fields -------------------------------------------------------------
    def field(self, region: int) -> InteriorField:
        try:
            return self.fields[region]
        except KeyError:
            raise ContractError(f"no interior field for region {region}") from None

    def interior_velocity(self, x, region: int | None = None):
        if region is None:
            region = self.region(x)
        return self.field(region)(x)

    def velocity(self, x, mode: Mode):
        f = self.field(mode.region)
        if not mode.sliding:
            return f(x)
        xp = self.project(x, mode.sliding)
        return self.projector(mode.sliding) @ f(xp)

    def jacobian(self, x, mode: Mode):
        """Jacobian of the mode's field.

        On a sliding set the field is defined on the boundary only, so its
        derivative acts on tangential displacements: ``P DF P``.
        """
        f = self.field(mode.region)
        if not mode.sliding:
            return f.jac(x)
        P = self.projector(mode.sliding)
        return P @ f.jac(self.project(x, mode.sliding)) @ P

    def param_derivative(self, x, mode: Mode, perturbation: Perturbation):
        if not perturbation.applies(mode.region):
            return np.zeros(self.dimension)
        bad = set(perturbation.direction) & set(self.boundary_params)
        if bad:
            raise ContractError(
                f"parameters {sorted(bad)} move a hard boundary and cannot be perturbed"
            )
        d = self.field(mode.region).param_derivative(x, perturbation.direction)
        if mode.sliding:
            d = self.projector(mode.sliding) @ d
        return d

    def perturbed(self, perturbation: Perturbation, eps: float) -> "FilippovSystem":
        """System with parameters ``p + eps*d`` in the perturbed regions."""
        bad = set(perturbation.direction) & set(self.boundary_params)
        if bad:
            raise ContractError(
                f"parameters {sorted(bad)} move a hard boundary and cannot be perturbed"
            )
        if eps == 0 or perturbation.is_zero:
            return self
        fields = {}
        for r, f in self.fields.items():
            if perturbation.applies(r):
                over = {k: f.params[k] + eps * v for k, v in perturbation.direction.items()}
                fields[r] = f.with_params(**over)
            else:
                fields[r] = f
        return replace(self, fields=fields)

    def with_params(self, **overrides) -> "FilippovSystem":
        fields = {r: f.with_params(**overrides) for r, f in self.fields.items()}
        return replace(self, fields=fields)

    @property
    def params(self) -> dict:
        first = self.fields[min(self.fields)]
        return dict(first.params)

    # -- mode classification --------------------------------------------------
    def infer_mode(self, x, region: int | None = None) -> Mode:
        """Mode of a state: slide on every boundary it sits on with outward flow."""
        x = self.check_state(x)
        if region is None:
            region = self.region(x)
        lv = self.levels(x) if self.boundaries else np.zeros(0)
        if np.any(lv > self.event_tol):
            from .errors import DriftError

            raise DriftError(
                "state outside the closed domain",
                state=x.tolist(),
                levels=lv.tolist(),
            )
        on = [i for i, h in enumerate(lv) if abs(h) <= self.event_tol]
        F = self.field(region)(x)
        active = frozenset(i for i in on if self.boundaries[i].normal @ F > 0)
        return Mode(region, active)


# -- derived operations ------------------------------------------------------

def _on_boundary(sys: FilippovSystem, b: int, x) -> np.ndarray:
    x = sys.check_state(x)
    if not 0 <= b < len(sys.boundaries):
        raise ContractError(f"unknown boundary id {b}")
    return x


def sliding_field(sys: FilippovSystem, b: int, x, region: int | None = None):
    """Tangential projection ``F - (n.F) n`` of the interior field on boundary ``b``."""
    x = _on_boundary(sys, b, x)
    n = sys.boundaries[b].normal
    F = sys.interior_velocity(x, region)
    out = F - (n @ F) * n
    # exact zero normal component for axis-aligned normals
    out[np.abs(n) == 1.0] = 0.0
    return out


def liftoff_indicator(sys: FilippovSystem, b: int, x, region: int | None = None) -> float:
    """``n . F_interior`` on boundary ``b``; its zero set is the liftoff set."""
    x = _on_boundary(sys, b, x)
    return float(sys.boundaries[b].normal @ sys.interior_velocity(x, region))


def in_sliding_region(sys: FilippovSystem, b: int, x, region: int | None = None) -> bool:
    """True iff the interior field points strictly out of the domain at ``x``."""
    return liftoff_indicator(sys, b, x, region) > 0.0


def nondegeneracy_at_liftoff(sys: FilippovSystem, b: int, x, region: int | None = None) -> float:
    """Rate of change of the liftoff indicator along the sliding flow."""
    x = _on_boundary(sys, b, x)
    if region is None:
        region = sys.region(x)
    n = sys.boundaries[b].normal
    grad = sys.field(region).jac(x).T @ n
    return float(grad @ sliding_field(sys, b, x, region))


def periodic_difference(theta, psi, T):
    """Signed phase difference ``theta - psi`` wrapped into ``[-T/2, T/2]``.

    The middle branch is closed on both ends, so exact ties keep their sign.
    """
    if not T > 0:
        raise ContractError("period must be positive")
    d = np.fmod(np.asarray(theta, dtype=float) - np.asarray(psi, dtype=float), T)
    d = np.where(d < -T / 2, d + T, d)
    d = np.where(d > T / 2, d - T, d)
    if d.ndim == 0:
        return float(d)
    return d
