"""Command-line experiment runner.

Every subcommand writes CSV tables (and SVG figures with ``--format svg``
or ``both``) plus a JSON summary and the manifest that reproduces the run.
Exit status is 0 on success, 2 on a numerical failure (a diagnostic JSON
is written to stderr and to the output directory) and 64 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys as _sys
from pathlib import Path

import numpy as np

from . import io, models
from .config import ExperimentManifest, load_system
from .errors import ContractError, LcscError
from .filippov import Perturbation
from .integrator import TimingRegion, find_limit_cycle, perturbed_cycle, rescale_time, displacement

log = logging.getLogger("lcsc")

EXIT_OK = 0
EXIT_NUMERIC = 2
EXIT_USAGE = 64

COMMANDS = ("cycle", "prc", "ltrc", "variational", "src", "isochrons", "kink", "couple")

GUESSES = {
    "planar": [0.5, 0.0],
    "stickslip": [1.4127, 0.0829],
    "coupled": [0.5, 0.0],
}

TITLES = {
    "cycle": "limit cycle time series",
    "prc": "infinitesimal phase response curve",
    "ltrc": "local timing response curves",
    "variational": "variational solution and fundamental matrix",
    "src": "infinitesimal shape response curve",
    "isochrons": "asymptotic phase field and isochrons",
    "kink": "isochron kink scan across the backward osculating trajectory",
    "couple": "interaction function, phase model and full model relative phase",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- argument parsing -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="JSON experiment manifest; flags override it")
    p.add_argument("--model", choices=sorted(models.MODELS), help="built-in model")
    p.add_argument("--system", help="JSON file describing a user-defined system")
    p.add_argument("--param", action="append", default=[], metavar="K=V", help="parameter override")
    p.add_argument("--alpha", type=float, help="planar expansion rate")
    p.add_argument("--k3", type=float, help="coupling stiffness")
    p.add_argument("--perturb", action="append", default=[], metavar="NAME[=COEF]",
                   help="perturbation direction component (repeatable)")
    p.add_argument("--eps", type=float, help="perturbation size")
    p.add_argument("--region-mask", help="comma-separated regions the perturbation acts in")
    p.add_argument("--anchor", help="phase-zero event as KIND:ID, e.g. liftoff:0")
    p.add_argument("--guess", help="comma-separated initial guess for the cycle")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", choices=("csv", "svg", "both"), default=None)
    p.add_argument("--tol-rel", type=float, help="integrator relative tolerance")
    p.add_argument("--tol-abs", type=float, help="integrator absolute tolerance")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lcsc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    ps = {c: sub.add_parser(c, help=TITLES[c]) for c in COMMANDS}
    for p in ps.values():
        _common(p)
    ps["variational"].add_argument("--u0", help="initial variation, comma separated")
    ps["src"].add_argument("--kind", choices=("uniform", "piecewise"))
    ps["src"].add_argument("--section", help="section event as KIND:ID")
    for c in ("isochrons", "kink"):
        ps[c].add_argument("--grid", type=int, help="cells per side")
        ps[c].add_argument("--workers", type=int, help="process pool size")
    ps["kink"].add_argument("--step", type=float, help="finite-difference step")
    ps["couple"].add_argument("--t-end", type=float, help="simulation length")
    ps["couple"].add_argument("--psi0", type=float, help="initial relative phase")
    ps["couple"].add_argument("--skip-full", action="store_true", help="phase model only")
    return parser


def _kv(items) -> dict:
    out = {}
    for it in items:
        for part in it.split(","):
            if not part:
                continue
            if "=" in part:
                k, v = part.split("=", 1)
            else:
                k, v = part, "1"
            try:
                out[k.strip()] = float(v)
            except ValueError:
                raise UsageError(f"bad value in {part!r}") from None
    return out


def manifest_from_args(args) -> ExperimentManifest:
    if args.manifest:
        m = ExperimentManifest.load(args.manifest)
        if m.command != args.command:
            raise UsageError(f"manifest is for {m.command!r}, not {args.command!r}")
    else:
        m = ExperimentManifest(args.command)
    if args.model:
        m.model = args.model
    if args.system:
        m.model = "user"
        m.options["system"] = args.system
    m.params.update(_kv(args.param))
    if args.alpha is not None:
        m.params["alpha"] = args.alpha
    if args.k3 is not None:
        m.params["k3"] = args.k3
    if args.perturb:
        m.perturb = _kv(args.perturb)
    if args.eps is not None:
        m.eps = args.eps
    if args.region_mask:
        m.region_mask = [r.strip() for r in args.region_mask.split(",") if r.strip()]
    if args.format:
        m.outputs = ["csv"] if args.format == "csv" else (["svg"] if args.format == "svg" else ["csv", "svg"])
    if args.tol_rel is not None:
        m.rtol = args.tol_rel
    if args.tol_abs is not None:
        m.atol = args.tol_abs
    for name in ("anchor", "guess", "u0", "kind", "section", "grid", "workers", "step",
                 "t_end", "psi0"):
        v = getattr(args, name, None)
        if v is not None:
            m.options[name] = v
    if getattr(args, "skip_full", False):
        m.options["skip_full"] = True
    return m


# -- experiment setup -----------------------------------------------------------------

def _parse_key(text: str):
    try:
        kind, target = text.split(":")
        return kind.strip(), int(target)
    except ValueError:
        raise UsageError(f"event must look like KIND:ID, got {text!r}") from None


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


class Setup:
    """System, anchor, guess and timing regions for one experiment."""

    def __init__(self, m: ExperimentManifest, need_regions: bool = False):
        self.m = m
        p = dict(m.params)
        self.regions: list = []
        name = m.model
        timing = need_regions or bool(m.region_mask)
        try:
            if name == "planar":
                p.setdefault("alpha", models.PLANAR_DEFAULTS["alpha"])
                p.setdefault("omega", models.PLANAR_DEFAULTS["omega"])
                extra = set(p) - set(models.PLANAR_DEFAULTS)
                if extra:
                    raise UsageError(f"unknown parameters {sorted(extra)}")
                rays = tuple(m.options.get("timing_rays", models.TIMING_RAYS)) if timing else None
                if rays:
                    m.options["timing_rays"] = list(rays)
                self.sys = models.planar_model(p["alpha"], p["omega"], timing=rays)
                self.anchor = ("timing", 0) if rays else ("liftoff", 0)
                if rays:
                    self.regions = [
                        TimingRegion("I", ("timing", 0), ("timing", 1)),
                        TimingRegion("II", ("timing", 1), ("timing", 0)),
                    ]
            elif name == "stickslip":
                self.sys = models.stick_slip_model(**p)
                self.anchor = ("liftoff", 0)
                self.regions = [
                    TimingRegion("stick", ("landing", 0), ("liftoff", 0)),
                    TimingRegion("slip", ("liftoff", 0), ("landing", 0)),
                ]
            elif name == "coupled":
                single = {k: v for k, v in p.items() if k != "k3"}
                self.sys = models.coupled_single(**single)
                self.anchor = ("liftoff", 0)
                self.regions = [
                    TimingRegion("stick", ("landing", 0), ("liftoff", 0)),
                    TimingRegion("slip", ("liftoff", 0), ("landing", 0)),
                ]
            elif name == "user":
                self.sys = load_system(m.options["system"])
                if p:
                    self.sys = self.sys.with_params(**p)
                if "anchor" not in m.options or "guess" not in m.options:
                    raise UsageError("user systems need --anchor and --guess")
                self.anchor = None
            else:
                raise UsageError(f"unknown model {name!r}")
        except ContractError as exc:
            raise UsageError(str(exc)) from None
        if "anchor" in m.options:
            self.anchor = _parse_key(m.options["anchor"])
        self.guess = _floats(m.options.get("guess", GUESSES.get(name, [])))
        if len(self.guess) != self.sys.dimension:
            raise UsageError("guess has the wrong dimension")

    def cycle(self):
        return find_limit_cycle(self.sys, self.guess, self.anchor, rtol=self.m.rtol, atol=self.m.atol)

    def perturbation(self, required: bool = False) -> Perturbation | None:
        if not self.m.perturb:
            if required:
                raise UsageError("this command needs --perturb")
            return None
        unknown = set(self.m.perturb) - set(self.sys.params)
        if unknown:
            raise UsageError(f"unknown perturbation parameters {sorted(unknown)}")
        bad = set(self.m.perturb) & set(self.sys.boundary_params)
        if bad:
            raise UsageError(f"parameters {sorted(bad)} move a hard boundary and cannot be perturbed")
        regions = None
        if self.m.region_mask:
            names = self.sys.region_names
            missing = [r for r in self.m.region_mask if r not in names]
            if missing:
                raise UsageError(f"unknown regions {missing}; known: {sorted(names)}")
            regions = frozenset(names[r] for r in self.m.region_mask)
        return Perturbation(dict(self.m.perturb), regions)


# -- subcommands ----------------------------------------------------------------------

class Runner:
    def __init__(self, m: ExperimentManifest, out: Path):
        self.m = m
        self.out = Path(out)
        self.files: list = []
        self.csv = "csv" in m.outputs or not m.outputs
        self.svg = "svg" in m.outputs

    def header(self, what: str) -> list:
        m = self.m
        lines = [f"{TITLES[m.command]}: {what}", f"model={m.model} params={json.dumps(m.params, sort_keys=True)}"]
        if m.perturb:
            lines.append(f"perturb={json.dumps(m.perturb, sort_keys=True)} eps={m.eps} regions={m.region_mask}")
        return lines

    def table(self, name, header, rows, what):
        if self.csv:
            self.files.append(io.write_csv(self.out / name, header, rows, self.header(what)))

    def json(self, name, obj):
        self.files.append(io.write_json(self.out / name, obj))

    def figure(self, fn, name, *a, **kw):
        if self.svg:
            from . import plotting

            self.files.append(getattr(plotting, fn)(self.out / name, *a, **kw))


def _shade_sliding(lc):
    return [(s.t0, s.t1) for s in lc.segments if s.mode.is_sliding]


def cmd_cycle(r: Runner, st: Setup):
    lc = st.cycle()
    header, rows = io.cycle_rows(lc)
    r.table("cycle.csv", header, rows, "states over one period with mode and event flags")
    r.json("cycle.json", io.cycle_summary(lc))
    ts, xs, _ = lc.sample(2)
    labels = [f"x_{i + 1}" for i in range(xs.shape[1])]
    r.figure("plot_series", "cycle.svg", ts, xs.T, labels, title="limit cycle", shade=_shade_sliding(lc))
    if xs.shape[1] == 2:
        r.figure("plot_phase_plane", "cycle_plane.svg", xs, title="limit cycle", points=lc.liftoff_states())
    return {"period": lc.period, "liftoff_states": lc.liftoff_states()}


def cmd_prc(r: Runner, st: Setup):
    from .sensitivity import iprc, period_shift_T1

    lc = st.cycle()
    z = iprc(lc)
    header, rows = io.curve_rows(z.curve, "z")
    r.table("prc.csv", header, rows, "phase response z(t); disc marks one-sided limits")
    summary = {
        "period": lc.period,
        "eigenvalue": z.eigenvalue,
        "normalization_defect": z.normalization_defect,
        "backward_monodromy": io.matrix_json(z.backward_monodromy),
        "jumps": [{"time": d.time, "left": d.left, "right": d.right} for d in z.curve.markers],
    }
    pert = st.perturbation()
    if pert is not None:
        T1 = period_shift_T1(lc, z, pert)
        summary["T1"] = {"T1": T1, "nu1": T1 / lc.period, "perturb": dict(pert.direction)}
    r.json("prc.json", summary)
    t, v, fl = z.curve.samples(4)
    r.figure("plot_series", "prc.svg", t, v.T, [f"z_{i + 1}" for i in range(v.shape[1])],
             title="phase response", flags=fl, shade=_shade_sliding(lc))
    return summary


def cmd_ltrc(r: Runner, st: Setup):
    from .sensitivity import iprc, ltrc, period_shift_T1

    if not st.regions:
        raise UsageError("this model has no timing regions")
    lc = st.cycle()
    pert = st.perturbation(required=True)
    eps = st.m.eps if st.m.eps is not None else 1e-4
    lc_eps = perturbed_cycle(st.sys, pert, eps, st.anchor, lc.anchor_state, rtol=st.m.rtol, atol=st.m.atol)
    res = [ltrc(lc, reg, pert, lc_eps=lc_eps) for reg in st.regions]
    T1 = period_shift_T1(lc, iprc(lc), pert)
    out = {"period": lc.period, "T1": T1, "sum_T1j": sum(x.T1j for x in res), "regions": []}
    for x in res:
        header, rows = io.curve_rows(x.eta, "eta")
        r.table(f"ltrc_{x.region.name}.csv", header, rows, f"local timing response, region {x.region.name}")
        out["regions"].append({
            "name": x.region.name, "t_in": x.t_in, "t_out": x.t_out, "T0j": x.T0j, "T1j": x.T1j,
            "nu1j": x.nu1j, "entry_term": x.entry_term, "integral_term": x.integral_term,
            "exit_term": x.exit_term,
        })
        t, v, fl = x.eta.samples(4)
        r.figure("plot_series", f"ltrc_{x.region.name}.svg", t, v.T,
                 [f"eta_{i + 1}" for i in range(v.shape[1])], title=f"region {x.region.name}", flags=fl)
    r.json("ltrc.json", out)
    return out


def cmd_variational(r: Runner, st: Setup):
    from .sensitivity import fundamental_matrix, variational_forward

    lc = st.cycle()
    default = [0.0, 0.1] if lc.system.dimension == 2 else [0.0] * lc.system.dimension
    u0 = np.array(_floats(st.m.options.get("u0", default)))
    if u0.size != lc.system.dimension:
        raise UsageError("u0 has the wrong dimension")
    res = variational_forward(lc, u0)
    fm = fundamental_matrix(lc)
    header, rows = io.curve_rows(res.curve, "u")
    r.table("variational.csv", header, rows, "variational solution u(t); disc marks one-sided limits")
    cols = []
    for i, c in enumerate(fm.columns):
        h, rr = io.curve_rows(c.curve, f"phi{i + 1}")
        cols.append((h, rr))
        r.table(f"fundamental_{i + 1}.csv", h, rr, f"fundamental matrix column {i + 1}")
    summary = {
        "period": lc.period, "u0": u0, "u_T0": res.final,
        "closure": float(np.linalg.norm(res.final - u0)),
        "monodromy": io.matrix_json(fm.monodromy),
    }
    r.json("variational.json", summary)
    t, v, fl = res.curve.samples(4)
    r.figure("plot_series", "variational.svg", t, v.T, [f"u_{i + 1}" for i in range(v.shape[1])],
             title="variational solution", flags=fl)
    return summary


def cmd_src(r: Runner, st: Setup):
    from .sensitivity import iprc, isrc, shape_error

    kind = st.m.options.get("kind", "uniform")
    st_regions = st.regions if kind == "piecewise" else []
    if kind == "piecewise" and not st_regions:
        raise UsageError("piecewise rescaling needs timing regions")
    lc = st.cycle()
    pert = st.perturbation(required=True)
    section = _parse_key(st.m.options["section"]) if "section" in st.m.options else None
    lc_lin = perturbed_cycle(st.sys, pert, 1e-4, st.anchor, lc.anchor_state, rtol=st.m.rtol, atol=st.m.atol)
    kw = dict(kind=kind, regions=st_regions, lc_eps=lc_lin, section=section)
    if kind == "uniform":
        kw["z"] = iprc(lc)
    src = isrc(lc, pert, **kw)
    header, rows = io.curve_rows(src.curve, "gamma1")
    r.table("src.csv", header, rows, f"shape response gamma1(t), {kind} rescaling")
    summary = {"period": lc.period, "kind": kind, "nu": src.nu, "T1": src.T1,
               "closure_defect": src.closure_defect, "section": list(src.section)}
    eps = st.m.eps
    if eps is not None:
        big = perturbed_cycle(st.sys, pert, eps, st.anchor, lc.anchor_state, rtol=st.m.rtol, atol=st.m.atol)
        resc = rescale_time(lc, big, kind, st_regions)
        ts = (np.arange(2000) + 0.5) * lc.period / 2000
        delta = displacement(lc, big, resc, ts)
        approx = eps * src.curve(ts)
        n = delta.shape[1]
        hdr = ["t"] + [f"eps_gamma1_{i + 1}" for i in range(n)] + [f"delta_{i + 1}" for i in range(n)]
        r.table("src_compare.csv", hdr, [[t, *a, *d] for t, a, d in zip(ts, approx, delta)],
                f"eps*gamma1 against the rescaled displacement at eps={eps}")
        summary["eps"] = eps
        summary["relative_error_l2"] = shape_error(lc, big, src, resc, norm="l2")
        summary["relative_error_l1"] = shape_error(lc, big, src, resc, norm="l1")
        r.figure("plot_series", "src_compare.svg", ts, np.hstack([approx, delta]).T,
                 [f"eps gamma1_{i + 1}" for i in range(n)] + [f"delta_{i + 1}" for i in range(n)],
                 title=f"shape response, {kind} rescaling")
    r.json("src.json", summary)
    t, v, fl = src.curve.samples(4)
    r.figure("plot_series", "src.svg", t, v.T, [f"gamma1_{i + 1}" for i in range(v.shape[1])],
             title=f"shape response, {kind}", flags=fl)
    return summary


def _planar_only(st: Setup):
    if st.m.model != "planar":
        raise UsageError("this command needs the planar model")


def cmd_isochrons(r: Runner, st: Setup):
    from .phase import isochron_grid

    _planar_only(st)
    lc = st.cycle()
    n = int(st.m.options.get("grid", 41))
    field = isochron_grid(st.sys, lc, shape=(n, n), workers=st.m.options.get("workers"))
    header = ["y"] + [io._fmt(x) for x in field.x]
    rows = [[y, *row] for y, row in zip(field.y, field.phase)]
    r.table("isochrons.csv", header, rows, "asymptotic phase matrix: rows are y, columns are x")
    meta = {"period": lc.period, "x": field.x, "y": field.y, "converged": int(field.converged.sum()),
            "cells": int(field.converged.size), "seed": st.m.seed}
    r.json("isochrons.json", meta)
    ts, xs, _ = lc.sample(2)
    r.figure("plot_isochrons", "isochrons.svg", field, cycle_xy=xs)
    return meta


def cmd_kink(r: Runner, st: Setup):
    from .phase import KINK_CONTROL_ANGLES, PhaseField, asymptotic_phase, kink_curves, kink_scan

    _planar_only(st)
    lc = st.cycle()
    h = float(st.m.options.get("step", 1e-3))
    field = PhaseField(np.zeros(2), np.zeros(2), np.zeros((2, 2)), np.ones((2, 2), bool), lc.period,
                       sampler=lambda p: asymptotic_phase(st.sys, lc, p))
    arm, controls = kink_curves(st.sys, lc)
    rows = []
    arm_scan = kink_scan(field, arm, h)
    for p, j in zip(arm_scan.points, arm_scan.jumps):
        rows.append(["arm", *p, j])
    ctrl = []
    for k, c in enumerate(controls):
        s = kink_scan(field, c, h)
        ctrl.append(float(np.median(s.jumps)))
        for p, j in zip(s.points, s.jumps):
            rows.append([f"control{k + 1}", *p, j])
    r.table("kink.csv", ["curve", "x", "y", "jump"], rows, "normal-gradient jump of the phase along curves")
    summary = {"arm_median_jump": float(np.median(arm_scan.jumps)),
               "control_median_jump": float(np.median(ctrl)), "step": h,
               "control_angles": list(KINK_CONTROL_ANGLES)}
    summary["ratio"] = summary["arm_median_jump"] / max(summary["control_median_jump"], 1e-300)
    r.json("kink.json", summary)
    return summary


def cmd_couple(r: Runner, st: Setup):
    from .phase import (
        coupled_initial_state, full_model_phase_difference, h_function,
        phase_model_simulate, spring_coupling,
    )
    from .sensitivity import iprc

    if st.m.model != "coupled":
        raise UsageError("couple needs --model coupled")
    p = dict(models.COUPLED_DEFAULTS)
    p.update(st.m.params)
    lc = st.cycle()
    z = iprc(lc)
    H = h_function(lc, z, spring_coupling(p))
    r.table("interaction.csv", ["psi", "H", "calH"], zip(H.psi, H.H, H.calH),
            "interaction function H(psi) and calH(psi) = H(-psi) - H(psi)")
    t_end = float(st.m.options.get("t_end", 80000.0))
    psi0 = float(st.m.options.get("psi0", PSI0_DEFAULT))
    pm = phase_model_simulate(H, p["k3"], psi0, t_end)
    r.table("phase_model.csv", ["t", "psi"], zip(pm.t, pm.psi), "relative phase predicted by the phase model")
    summary = {
        "period": lc.period, "k3": p["k3"], "psi0": psi0, "t_end": t_end,
        "fixed_points": [{"psi": f.psi, "slope": f.slope, "stability": f.stability} for f in H.fixed_points],
        "calH_slope_0": H.slope(0.0), "calH_slope_half": H.slope(lc.period / 2),
        "phase_model_final": float(pm.psi[-1]),
    }
    r.figure("plot_interaction", "interaction.svg", H, H.fixed_points)
    if not st.m.options.get("skip_full"):
        sysc = models.coupled_model(**p)
        x0 = coupled_initial_state(lc, psi0)

        def checkpoint(trace):
            r.table("full_model.partial.csv", ["t", "psi"], zip(trace.t, trace.psi),
                    "relative phase of the full model (partial)")

        full = full_model_phase_difference(sysc, x0, t_end, lc.period, rtol=min(st.m.rtol * 100, 1e-8),
                                           atol=min(st.m.atol * 100, 1e-10), checkpoint=checkpoint)
        r.table("full_model.csv", ["t", "psi"], zip(full.t, full.psi), "relative phase of the full model")
        part = r.out / "full_model.partial.csv"
        if part.exists():
            part.unlink()
            r.files = [f for f in r.files if f != part]
        summary["full_model_final"] = float(full.psi[-1]) if full.psi.size else None
        r.figure("plot_series", "couple.svg", full.t, [full.psi], ["full model"], title="relative phase")
    r.figure("plot_series", "phase_model.svg", pm.t, [pm.psi], ["phase model"], title="relative phase")
    r.json("couple.json", summary)
    return summary


PSI0_DEFAULT = 1e-3

HANDLERS = {
    "cycle": cmd_cycle,
    "prc": cmd_prc,
    "ltrc": cmd_ltrc,
    "variational": cmd_variational,
    "src": cmd_src,
    "isochrons": cmd_isochrons,
    "kink": cmd_kink,
    "couple": cmd_couple,
}


def run(m: ExperimentManifest, out) -> dict:
    """Run one experiment and return its summary."""
    need_regions = m.command == "ltrc" or (m.command == "src" and m.options.get("kind") == "piecewise")
    st = Setup(m, need_regions=need_regions)
    r = Runner(m, out)
    summary = HANDLERS[m.command](r, st)
    m.save(Path(out) / "manifest.json")
    return summary


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        m = manifest_from_args(args)
        run(m, args.out)
    except UsageError as exc:
        print(f"lcsc: error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except LcscError as exc:
        diag = {"command": args.command, **exc.diagnostic()}
        text = json.dumps(io._jsonable(diag), indent=2, sort_keys=True)
        print(text, file=_sys.stderr)
        try:
            io.write_json(Path(args.out) / "diagnostic.json", diag)
        except OSError:
            pass
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
