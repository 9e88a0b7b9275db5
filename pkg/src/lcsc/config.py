"""JSON configuration: user-defined systems and experiment manifests.

A user system file looks like::

    {
      "name": "spiral",
      "variables": ["x", "y"],
      "parameters": {"a": 0.2},
      "regions": [{"id": 0, "field": ["a*x - y", "x + a*y"]}],
      "boundaries": [{"name": "east", "level": "x - 1"}],
      "surfaces": [{"name": "s", "level": "y", "role": "timing"}]
    }

Field entries are polynomial or rational expressions in the variables and
parameters. Boundary and surface levels must be affine in the variables;
a boundary's interior is where its level is negative. Extra regions take a
``"where"`` inequality; the first region whose inequality holds wins and
region 0 is the fallback.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import sympy as sp

from .errors import ContractError
from .filippov import FilippovSystem, HardBoundary, InteriorField, SurfaceRole, TransversalSurface


def _parse(expr: str, symbols: Mapping[str, sp.Symbol]) -> sp.Expr:
    try:
        e = sp.sympify(expr, locals=dict(symbols))
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ContractError(f"cannot parse expression {expr!r}: {exc}") from None
    stray = {str(s) for s in e.free_symbols} - set(symbols)
    if stray:
        raise ContractError(f"unknown symbols {sorted(stray)} in {expr!r}")
    num, den = sp.fraction(sp.together(e))
    gens = [symbols[k] for k in symbols]
    for part in (num, den):
        if not part.is_polynomial(*gens):
            raise ContractError(f"{expr!r} is not a rational expression")
    return e


def _affine(expr: str, xs, symbols, params) -> tuple:
    e = _parse(expr, symbols)
    poly = sp.Poly(e, *xs)
    if poly.total_degree() > 1:
        raise ContractError(f"level {expr!r} is not affine in the state")
    subs = {symbols[k]: v for k, v in params.items()}
    normal = [float(sp.diff(e, v).subs(subs)) for v in xs]
    offset = -float(e.subs({v: 0 for v in xs}).subs(subs))
    return normal, offset


class _Compiled:
    """Vector field compiled from sympy expressions, with exact derivatives."""

    def __init__(self, exprs, xs, ps):
        self.names = [str(p) for p in ps]
        args = (sp.Matrix(xs), *ps)
        self._f = sp.lambdify(args, sp.Matrix(exprs), "numpy")
        self._J = sp.lambdify(args, sp.Matrix(exprs).jacobian(xs), "numpy")
        self._dp = {
            str(p): sp.lambdify(args, sp.Matrix([sp.diff(e, p) for e in exprs]), "numpy")
            for p in ps
        }

    def _args(self, x, params):
        return (np.asarray(x, dtype=float).reshape(-1, 1), *[params[n] for n in self.names])

    def velocity(self, x, params):
        return np.asarray(self._f(*self._args(x, params)), dtype=float).ravel()

    def jacobian(self, x, params):
        return np.asarray(self._J(*self._args(x, params)), dtype=float)

    def dparams(self, x, params):
        a = self._args(x, params)
        return {k: np.asarray(f(*a), dtype=float).ravel() for k, f in self._dp.items()}


class _RegionRule:
    def __init__(self, rules, xs):
        self.rules = [(rid, sp.lambdify([xs], cond, "numpy")) for rid, cond in rules]

    def __call__(self, x):
        for rid, fn in self.rules:
            if bool(fn(list(x))):
                return rid
        return 0


def load_system(spec: Mapping[str, Any] | str | Path, event_tol: float = 1e-10) -> FilippovSystem:
    """Build a :class:`FilippovSystem` from a JSON mapping or file path."""
    if isinstance(spec, (str, Path)):
        spec = json.loads(Path(spec).read_text())
    try:
        names = list(spec["variables"])
        region_specs = list(spec["regions"])
    except KeyError as exc:
        raise ContractError(f"system file missing key {exc}") from None
    params = {k: float(v) for k, v in spec.get("parameters", {}).items()}
    xs = sp.symbols(names, real=True)
    ps = sp.symbols(list(params), real=True) if params else ()
    ps = ps if isinstance(ps, (tuple, list)) else (ps,)
    symbols = {str(s): s for s in (*xs, *ps)}
    fields, rules = {}, []
    for r in region_specs:
        rid = int(r.get("id", 0))
        exprs = [_parse(e, symbols) for e in r["field"]]
        if len(exprs) != len(xs):
            raise ContractError(f"region {rid}: field has {len(exprs)} components, expected {len(xs)}")
        c = _Compiled(exprs, xs, ps)
        fields[rid] = InteriorField(c.velocity, dict(params), c.jacobian, c.dparams)
        if "where" in r:
            rules.append((rid, sp.sympify(r["where"], locals=symbols).subs(
                {symbols[k]: v for k, v in params.items()})))
    if 0 not in fields:
        raise ContractError("region 0 must be defined")
    boundaries = []
    for b in spec.get("boundaries", []):
        n, off = _affine(b["level"], xs, symbols, params)
        boundaries.append(HardBoundary(n, off, b.get("name", "")))
    surfaces = []
    for s in spec.get("surfaces", []):
        n, off = _affine(s["level"], xs, symbols, params)
        surfaces.append(TransversalSurface(n, off, SurfaceRole(s.get("role", "timing")), s.get("name", "")))
    return FilippovSystem(
        len(xs), fields, tuple(boundaries), tuple(surfaces),
        region_of=_RegionRule(rules, xs) if rules else None,
        event_tol=float(spec.get("event_tol", event_tol)),
        name=spec.get("name", "user"),
    )


@dataclass
class ExperimentManifest:
    """Everything needed to rerun an experiment deterministically."""

    command: str
    model: str = "planar"
    params: dict = field(default_factory=dict)
    perturb: dict = field(default_factory=dict)
    eps: float | None = None
    region_mask: list | None = None
    outputs: list = field(default_factory=lambda: ["csv"])
    rtol: float = 1e-10
    atol: float = 1e-12
    seed: int = 0
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentManifest":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown manifest keys {sorted(unknown)}")
        return cls(**dict(data))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentManifest":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        return cls.loads(Path(path).read_text())
