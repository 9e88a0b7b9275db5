"""SVG figures drawn with matplotlib's non-interactive backend."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt and no date keep SVG output byte-stable across runs
plt.rcParams["svg.hashsalt"] = "lcsc"
plt.rcParams["svg.fonttype"] = "none"
_META = {"Date": None, "Creator": "lcsc"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _break_at_jumps(t, y, flags):
    """Insert NaNs between a left limit and the following right limit."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if flags is None:
        return t, y
    cut = np.flatnonzero((np.asarray(flags)[:-1] == -1) & (np.diff(t) <= 1e-12)) + 1
    return np.insert(t, cut, np.nan), np.insert(y, cut, np.nan, axis=0)


def plot_series(path, t, ys, labels: Sequence[str], title: str = "", xlabel: str = "t",
                ylabel: str = "", flags=None, shade=None) -> Path:
    """Line plot of the columns of ``ys`` against ``t``.

    ``shade`` is a list of ``(t0, t1)`` intervals drawn as grey bands.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[0] == len(t) and ys.shape[1] != len(t):
        ys = ys.T
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for (a, b) in shade or ():
        ax.axvspan(a, b, color="0.9", lw=0)
    for row, lab in zip(ys, labels):
        tt, yy = _break_at_jumps(t, row, flags)
        ax.plot(tt, yy, lw=1.2, label=lab)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(labels) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_phase_plane(path, xs, title: str = "", walls=None, points=None) -> Path:
    xs = np.asarray(xs, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    if walls is not None:
        ax.plot(*np.asarray(walls).T, color="tab:blue", lw=1)
    ax.plot(xs[:, 0], xs[:, 1], color="k", lw=1.4)
    if points is not None and len(points):
        pts = np.asarray(points)
        ax.plot(pts[:, 0], pts[:, 1], "r*", ms=9)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_isochrons(path, field, cycle_xy=None, n_levels: int = 50, curves=()) -> Path:
    """Level sets ``k T0 / n_levels`` of a phase field.

    The phase wraps at T0, so each level is drawn from whichever of the
    field or its half-period shift is continuous there.
    """
    T = field.period
    X, Y = np.meshgrid(field.x, field.y)
    levels = np.arange(n_levels) * T / n_levels
    ph = np.ma.masked_invalid(field.phase)
    shifted = np.mod(ph + T / 2, T)
    # hide each copy near its own seam so no contour traces the jump
    ph = np.ma.masked_where((ph < T / 8) | (ph > 7 * T / 8), ph)
    shifted = np.ma.masked_where((shifted < T / 8) | (shifted > 7 * T / 8), shifted)
    fig, ax = plt.subplots(figsize=(5, 5))
    cmap = plt.get_cmap("hsv")
    lo = levels[(levels > T / 4) & (levels < 3 * T / 4)]
    hi = levels[(levels <= T / 4) | (levels >= 3 * T / 4)]
    if lo.size:
        ax.contour(X, Y, ph, levels=lo, colors=[cmap(v / T) for v in lo], linewidths=0.7)
    if hi.size:
        hs = np.sort(np.mod(hi + T / 2, T))
        ax.contour(X, Y, shifted, levels=hs, colors=[cmap(((v - T / 2) % T) / T) for v in hs],
                   linewidths=0.7)
    if cycle_xy is not None:
        ax.plot(*np.asarray(cycle_xy).T, color="k", lw=1.5)
    for c in curves:
        ax.plot(*np.asarray(c).T, "k--", lw=1)
    h = field.cell_size / 2
    ax.set_xlim(field.x[0] - h, field.x[-1] + h)
    ax.set_ylim(field.y[0] - h, field.y[-1] + h)
    ax.set_aspect("equal")
    fig.tight_layout()
    return _save(fig, path)


def plot_interaction(path, H, fixed_points=()) -> Path:
    """The relative-phase right-hand side with its fixed points on the axis."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    psi = np.append(H.psi, H.period)
    ax.plot(psi, np.append(H.calH, H.calH[0]), color="k", lw=1.2)
    ax.axhline(0, color="0.6", lw=0.8)
    for fp in fixed_points:
        face = "k" if fp.stability == "stable" else ("0.6" if fp.stability == "neutral" else "w")
        ax.plot([fp.psi], [0.0], "o", mfc=face, mec="k", ms=7)
    ax.set_xlabel("psi")
    ax.set_ylabel("H(-psi) - H(psi)")
    fig.tight_layout()
    return _save(fig, path)
