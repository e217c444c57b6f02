"""Figure rendering for the experiment reports.

Every report path of the CLI writes a PNG next to its delimited output;
the figures are diagnostic companions to the CSV tables, rendered off
screen with a fixed style so repeated runs look identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _new_axes(width=6.4, height=4.0):
    fig, ax = plt.subplots(figsize=(width, height))
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def band_figure(bands, path, gaps=None, title="band structure"):
    """lambda_k over the theta grid with gap intervals shaded."""
    fig, ax = _new_axes()
    l = np.arange(len(bands.thetas))
    for k in range(bands.k_max):
        ax.plot(l, bands.table[:, k], "-", lw=1.2)
    for g in gaps or []:
        lo = g["lower"] if isinstance(g, dict) else g.lower
        hi = g["upper"] if isinstance(g, dict) else g.upper
        ax.axhspan(lo, hi, color="orange", alpha=0.25)
    ax.set_xlabel("theta index l  (theta = exp(2*pi*i*l/L))")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    _save(fig, path)


def trace_figure(trace, path, level=None, title="eigenvalue branches"):
    fig, ax = _new_axes()
    for j in range(trace.branch_count):
        ax.plot(trace.taus, trace.values[:, j], "-", lw=1.0)
    if level is not None:
        ax.axhline(level, color="red", ls="--", lw=1.2, label=f"level {level:.6g}")
        ax.legend(loc="best")
    ax.set_xlabel("tau")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    _save(fig, path)


def weyl_figure(report, path, title="Weyl remainder"):
    fig, ax = _new_axes()
    ax.plot(report.levels, report.scaled_deviations, "o-", ms=3)
    ax.axhline(report.fitted_constant, color="gray", ls=":", label="fitted bound")
    ax.set_xlabel("lambda")
    ax.set_ylabel("|N - lambda vol/(4 pi)| / sqrt(lambda)")
    ax.set_title(title)
    ax.legend(loc="best")
    _save(fig, path)


def hole_figure(report, path, title="hole shrinking"):
    fig, ax = _new_axes()
    ax.semilogy(report.radii, report.values, "o-")
    ax.set_xlabel("hole radius")
    ax.set_ylabel("lambda_1 (Dirichlet hole, Neumann outer)")
    ax.set_title(title)
    _save(fig, path)


def asymptotics_figure(report, path, title="thin-tube defect"):
    fig, ax = _new_axes()
    eps = [r.eps for r in report.results]
    delta = [abs(r.delta) for r in report.results]
    ax.loglog(eps, delta, "o-", label="|defect|")
    if len(eps) >= 2:
        ref = [delta[0] * (e / eps[0]) for e in eps]
        ax.loglog(eps, ref, "--", color="gray", label="slope 1 reference")
    ax.set_xlabel("strip width eps")
    ax.set_ylabel("|lambda_k - pi^2/eps^2 - lambda_k(K)|")
    ax.set_title(title)
    ax.legend(loc="best")
    _save(fig, path)


def curve_figure(curve, path, title="curve from curvature"):
    fig, ax = _new_axes(5.6, 5.0)
    ax.plot(curve.points[:, 0], curve.points[:, 1], "-")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    _save(fig, path)
