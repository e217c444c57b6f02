"""Experiment runner: the full pipeline behind a handful of subcommands.

Each experiment is described by a TOML config; the runner validates it
strictly (unknown keys are rejected), executes the corresponding module
pipeline, writes CSV/JSON artifacts plus companion figures into the
output directory, and exits 0 only when every embedded pass/fail check
passed.  Config errors exit 2; numerical errors from the modules exit 3
with the error name recorded in the report.  Identical configs produce
byte-identical numeric output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import plots
from .errors import ConfigError, GapLabError, LevelNotInGap
from .gapcount import (
    count_crossings,
    report_to_json,
    shrink_hole_sweep,
    sweep,
    thm1_bounds,
    verify_thm1,
    waveguide_asymptotics,
)
from .geometry import (
    CurvatureProfile,
    EuclideanMetric,
    Rectangle,
    make_family,
    profile_from_config,
    waveguide_metric,
)
from .spectra import (
    HillProblem,
    Resolution,
    band_structure,
    dirichlet_rectangle_spectrum,
    gap_condition,
    gaps_to_json,
    weyl_check,
)

SCHEDULES = {
    "bubble-length": lambda t: t,
    "conformal-blowup": lambda t: 1.0 + t,
    "conformal-shrink": lambda t: 1.0 / (1.0 + t),
}

COMMAND_KINDS = {
    "bands": ("hill-bands", "waveguide-bands"),
    "gaps": ("gap-check",),
    "sweep": ("sweep",),
    "thm1": ("thm1",),
    "weyl": ("weyl",),
    "shrink": ("shrink-hole",),
    "asymptotics": ("asymptotics",),
}

_SCHEMA = {
    "hill-bands": {
        "": {"name", "kind", "description", "curvature", "bands", "resolution"},
        "curvature": {"cos", "sin"},
        "bands": {"theta_count", "k_max"},
        "resolution": {"cells_s"},
    },
    "waveguide-bands": {
        "": {"name", "kind", "description", "curvature", "cell", "bands", "resolution"},
        "curvature": {"cos", "sin"},
        "cell": {"eps"},
        "bands": {"theta_count", "k_max"},
        "resolution": {"cells_s", "cells_u"},
    },
    "gap-check": {
        "": {"name", "kind", "description", "curvature", "cell", "gaps", "resolution"},
        "curvature": {"cos", "sin"},
        "cell": {"eps"},
        "gaps": {"k_max", "theta_count"},
        "resolution": {"cells_s", "cells_u"},
    },
    "sweep": {
        "": {"name", "kind", "description", "curvature", "cell", "experiment", "resolution"},
        "curvature": {"cos", "sin"},
        "cell": {"eps"},
        "experiment": {
            "family",
            "schedule",
            "n",
            "m",
            "tau_max",
            "tau_steps",
            "branches",
            "level",
            "collar_halfwidth",
        },
        "resolution": {"cells_s", "cells_u"},
    },
    "weyl": {
        "": {"name", "kind", "description", "weyl"},
        "weyl": {"side_s", "side_u", "lambda_min", "lambda_max", "lambda_step"},
    },
    "shrink-hole": {
        "": {"name", "kind", "description", "hole", "resolution"},
        "hole": {"width", "height", "r_min", "r_max", "steps"},
        "resolution": {"cells_s", "cells_u"},
    },
    "asymptotics": {
        "": {"name", "kind", "description", "curvature", "asymptotics", "resolution"},
        "curvature": {"cos", "sin"},
        "asymptotics": {"eps", "k", "levels"},
        "resolution": {"cells_s", "cells_u"},
    },
}
_SCHEMA["thm1"] = _SCHEMA["sweep"]


def load_config(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}")


def validate_config(cfg: dict) -> None:
    kind = cfg.get("kind")
    if kind not in _SCHEMA:
        raise ConfigError(f"unknown or missing experiment kind: {kind!r}")
    schema = _SCHEMA[kind]
    unknown = set(cfg) - schema[""]
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "name" not in cfg:
        raise ConfigError("config needs a name")
    for table, allowed in schema.items():
        if not table:
            continue
        sub = cfg.get(table)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigError(f"[{table}] must be a table")
        bad = set(sub) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{table}]: {sorted(bad)}")

    if kind in ("sweep", "thm1"):
        exp = cfg.get("experiment", {})
        for key in ("family", "schedule", "n", "m", "tau_max", "level"):
            if key not in exp:
                raise ConfigError(f"[experiment] needs `{key}`")
        if exp["family"] not in ("conformal-constant-region", "bubble-insert"):
            raise ConfigError(f"unknown family {exp['family']!r}")
        if exp["schedule"] not in SCHEDULES:
            raise ConfigError(f"unknown schedule {exp['schedule']!r}")
        if not (isinstance(exp["n"], int) and isinstance(exp["m"], int)):
            raise ConfigError("n and m must be integers")
        if exp["n"] <= exp["m"]:
            raise ConfigError(
                f"violated precondition n > m: n={exp['n']}, m={exp['m']}"
            )
        if exp["m"] < 1:
            raise ConfigError("violated precondition m >= 1")
        if exp["tau_max"] <= 0:
            raise ConfigError("tau_max must be positive")
    if kind == "shrink-hole":
        hole = cfg.get("hole", {})
        for key in ("r_min", "r_max", "steps"):
            if key not in hole:
                raise ConfigError(f"[hole] needs `{key}`")
        if not 0 < hole["r_min"] < hole["r_max"]:
            raise ConfigError("need 0 < r_min < r_max")
        if hole["steps"] < 2:
            raise ConfigError("need at least 2 hole steps")
    if kind == "weyl":
        w = cfg.get("weyl", {})
        for key in ("lambda_min", "lambda_max"):
            if key not in w:
                raise ConfigError(f"[weyl] needs `{key}`")
        if not 0 < w["lambda_min"] < w["lambda_max"]:
            raise ConfigError("need 0 < lambda_min < lambda_max")
    if kind == "asymptotics":
        a = cfg.get("asymptotics", {})
        if "eps" not in a or len(a["eps"]) < 2:
            raise ConfigError("[asymptotics] needs at least two eps values")


def _resolution(cfg: dict, scale: float, default_s=400, default_u=None) -> Resolution:
    table = cfg.get("resolution", {})
    res = Resolution(table.get("cells_s", default_s), table.get("cells_u", default_u))
    return res.scaled(scale) if scale != 1.0 else res


def _curvature(cfg: dict) -> CurvatureProfile:
    return profile_from_config(cfg.get("curvature", {"cos": [0.0]}))


def _cell(cfg: dict):
    """The cell problem: a waveguide metric when [cell] is given, else Hill."""
    profile = _curvature(cfg)
    cell_cfg = cfg.get("cell")
    if cell_cfg is None:
        return HillProblem(profile)
    return waveguide_metric(profile, float(cell_cfg["eps"]))


def _pick_level(level_spec, gaps):
    if isinstance(level_spec, str):
        head, _, tail = level_spec.partition(":")
        if head != "gap-midpoint" or not tail.isdigit():
            raise ConfigError(f"bad level spec {level_spec!r}")
        k = int(tail)
        gap = next((g for g in gaps if g.k == k), None)
        if gap is None:
            raise LevelNotInGap(f"no computed gap interval with k = {k}")
        return gap.midpoint, gap
    level = float(level_spec)
    gap = next((g for g in gaps if level in g), None)
    if gap is None:
        raise LevelNotInGap(f"level {level} lies in no computed gap interval")
    return level, gap


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# experiment runners; each returns True iff its embedded checks pass
# ---------------------------------------------------------------------------


def run_bands(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    kind = cfg["kind"]
    default_u = 10 if kind == "waveguide-bands" else None
    res = _resolution(cfg, scale, 400, default_u)
    cell = _cell(cfg) if kind == "waveguide-bands" else HillProblem(_curvature(cfg))
    table = cfg.get("bands", {})
    bands = band_structure(
        cell,
        theta_count=table.get("theta_count", 32),
        k_max=table.get("k_max", 6),
        resolution=res,
        threads=threads,
    )
    bands.to_csv(out / "bands.csv")
    grid_gaps = bands.band_gaps()
    with open(out / "band_gaps.json", "w") as fh:
        json.dump(grid_gaps, fh, indent=2)
        fh.write("\n")
    plots.band_figure(bands, out / "bands.png", grid_gaps, title=cfg["name"])
    print(f"{cfg['name']}: {bands.k_max} bands over {len(bands.thetas)} theta samples; "
          f"{len(grid_gaps)} grid gap(s)")
    return True


def run_gaps(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    res = _resolution(cfg, scale, 400, 10 if "cell" in cfg else None)
    cell = _cell(cfg)
    table = cfg.get("gaps", {})
    k_max = table.get("k_max", 6)
    gaps = gap_condition(cell, k_max=k_max, resolution=res)
    gaps_to_json(gaps, out / "gaps.json")
    bands = band_structure(
        cell, theta_count=table.get("theta_count", 32), k_max=k_max + 1,
        resolution=res, threads=threads,
    )
    bands.to_csv(out / "bands.csv")
    plots.band_figure(bands, out / "gaps.png", gaps, title=cfg["name"])
    disjoint = all(
        not (g.lower < b_hi and b_lo < g.upper)
        for g in gaps
        for (b_lo, b_hi) in bands.bands
    )
    print(f"{cfg['name']}: {len(gaps)} certified gap(s); disjoint from bands: {disjoint}")
    return disjoint


def _build_family(cfg: dict):
    exp = cfg["experiment"]
    cell = _cell(cfg)
    schedule = SCHEDULES[exp["schedule"]]
    options = {}
    if exp["family"] == "bubble-insert" and "collar_halfwidth" in exp:
        options["bubble_collar_halfwidth"] = float(exp["collar_halfwidth"])
    return make_family(exp["family"], cell, int(exp["m"]), schedule, **options), exp


def _run_trace(cfg: dict, out: Path, scale: float):
    family, exp = _build_family(cfg)
    res = _resolution(cfg, scale, 48, 8)
    gaps = gap_condition(family.cell, k_max=8, resolution=res)
    level, gap = _pick_level(exp["level"], gaps)
    taus = tuple(np.linspace(0.0, float(exp["tau_max"]), int(exp.get("tau_steps", 16)) + 1))
    branches = int(exp.get("branches", gap.k * exp["n"] + 11))
    trace = sweep(
        family,
        int(exp["n"]),
        int(exp["m"]),
        "dirichlet",
        taus,
        branches=branches,
        resolution=res,
        level=level,
    )
    return family, exp, res, trace, level, gap


def run_sweep(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    family, exp, res, trace, level, gap = _run_trace(cfg, out, scale)
    crossings = count_crossings(trace, level)
    trace.to_csv(out / "trace.csv")
    plots.trace_figure(trace, out / "trace.png", level, title=cfg["name"])
    payload = {
        "level": level,
        "gap": gap.as_dict(),
        "n_hat": crossings.total,
        "down": crossings.down,
        "up": crossings.up,
        "flow": crossings.flow,
        "events": [e.as_dict() for e in crossings.events],
    }
    with open(out / "sweep.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"{cfg['name']}: N_hat={crossings.total} (down={crossings.down}, up={crossings.up})")
    return True


def run_thm1(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    family, exp, res, trace, level, gap = _run_trace(cfg, out, scale)
    bounds = thm1_bounds(family, int(exp["m"]), level, float(exp["tau_max"]), gap, res)
    report = verify_thm1(trace, bounds)
    trace.to_csv(out / "trace.csv")
    plots.trace_figure(trace, out / "trace.png", level, title=cfg["name"])
    report_to_json(report, out / "report.json")
    print(
        f"{cfg['name']}: N_hat={report.n_hat} rhs_above={report.rhs_above} "
        f"rhs_below={report.rhs_below} pass={report.passed}"
    )
    return bool(report.passed) and report.dirichlet_zero_matches_km


def run_weyl(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    w = cfg["weyl"]
    side_s = float(w.get("side_s", np.pi))
    side_u = float(w.get("side_u", side_s))
    lam_max = float(w["lambda_max"])
    levels = np.arange(float(w["lambda_min"]), lam_max + 1e-12, float(w.get("lambda_step", 10.0)))
    spectrum = dirichlet_rectangle_spectrum(side_s, side_u, lam_max * 1.2)
    report = weyl_check(side_s * side_u, spectrum, levels)
    report.to_csv(out / "weyl.csv")
    plots.weyl_figure(report, out / "weyl.png", title=cfg["name"])
    window = report.levels[-1] - report.levels[0]
    bounded = report.trend_slope * window <= 0.05 * float(np.mean(report.scaled_deviations))
    with open(out / "weyl.json", "w") as fh:
        json.dump(
            {
                "fitted_constant": report.fitted_constant,
                "trend_slope": report.trend_slope,
                "bounded_remainder": bool(bounded),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"{cfg['name']}: fitted C={report.fitted_constant:.4f} bounded={bounded}")
    return bool(bounded)


def run_shrink(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    hole = cfg["hole"]
    width = float(hole.get("width", 1.0))
    height = float(hole.get("height", 1.0))
    res = _resolution(cfg, scale, 40, 40)
    block = EuclideanMetric(Rectangle(0.0, width, 0.0, height))
    steps = int(hole["steps"])
    r_min, r_max = float(hole["r_min"]), float(hole["r_max"])
    taus = np.arange(1, steps + 1, dtype=float)
    schedule = lambda t: r_min + (r_max - r_min) * (t - 1.0) / (steps - 1.0)
    report = shrink_hole_sweep(block, schedule, taus, res)
    report.to_csv(out / "hole.csv")
    plots.hole_figure(report, out / "hole.png", title=cfg["name"])
    payload = {
        "violations": report.violations,
        "growth_ratio": report.growth_ratio,
        "strictly_increasing": not report.violations,
    }
    with open(out / "hole.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"{cfg['name']}: ratio={report.growth_ratio:.2f} violations={report.violations}")
    return not report.violations


def run_asymptotics(cfg: dict, out: Path, threads: int, scale: float) -> bool:
    a = cfg["asymptotics"]
    res = _resolution(cfg, scale, 48, 12)
    report = waveguide_asymptotics(
        _curvature(cfg),
        [float(e) for e in a["eps"]],
        theta=1.0,
        k_list=[int(a.get("k", 1))],
        resolution=res,
        refinement_levels=int(a.get("levels", 3)),
    )
    report.to_csv(out / "asymptotics.csv")
    plots.asymptotics_figure(report, out / "asymptotics.png", title=cfg["name"])
    orders = [report.order(i) for i in range(len(report.results) - 1)]
    certified = all(r.certified for r in report.results)
    with open(out / "asymptotics.json", "w") as fh:
        json.dump(
            {
                "orders": orders,
                "certified": certified,
                "deltas": {_fmt(r.eps): r.delta for r in report.results},
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"{cfg['name']}: orders={['%.3f' % o for o in orders]} certified={certified}")
    return certified


_RUNNERS = {
    "hill-bands": run_bands,
    "waveguide-bands": run_bands,
    "gap-check": run_gaps,
    "sweep": run_sweep,
    "thm1": run_thm1,
    "weyl": run_weyl,
    "shrink-hole": run_shrink,
    "asymptotics": run_asymptotics,
}


def bundled_configs():
    """(name, path) pairs of the shipped experiment catalog."""
    try:
        from importlib.resources import files
    except ImportError:  # pragma: no cover
        from importlib_resources import files
    root = files("gaplab") / "configs"
    return sorted((p.name, p) for p in root.iterdir() if p.name.endswith(".toml"))


def run_list() -> int:
    rows = []
    for name, path in bundled_configs():
        cfg = tomllib.loads(path.read_text())
        validate_config(cfg)
        rows.append((cfg["name"], cfg["kind"], cfg.get("description", "")))
    width = max(len(r[0]) for r in rows)
    kwidth = max(len(r[1]) for r in rows)
    for name, kind, desc in rows:
        print(f"{name:<{width}}  {kind:<{kwidth}}  {desc}")
    print(f"{len(rows)} bundled experiment configs")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gaplab",
        description="spectral-gap laboratory for periodic strips and waveguides",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ("bands", "gaps", "sweep", "thm1", "weyl", "shrink", "asymptotics"):
        p = sub.add_parser(command)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("gaplab-out"))
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--resolution-scale", type=float, default=1.0)
    sub.add_parser("list")
    args = parser.parse_args(argv)

    if args.command == "list":
        return run_list()

    try:
        cfg = load_config(args.config)
        validate_config(cfg)
        if cfg["kind"] not in COMMAND_KINDS[args.command]:
            raise ConfigError(
                f"config kind {cfg['kind']!r} does not belong to `{args.command}` "
                f"(expected one of {COMMAND_KINDS[args.command]})"
            )
        if args.resolution_scale <= 0:
            raise ConfigError("resolution scale must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = args.out / cfg["name"]
    out.mkdir(parents=True, exist_ok=True)
    runner = _RUNNERS[cfg["kind"]]
    try:
        passed = runner(cfg, out, args.threads, args.resolution_scale)
    except GapLabError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        with open(out / "error.json", "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
