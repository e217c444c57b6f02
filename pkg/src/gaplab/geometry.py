"""Curvature profiles, tube metrics, conformal families and supercells.

Everything here is an immutable value object with a pure evaluator, so
geometry objects can be shared freely between concurrent solves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    NonPositiveFactor,
    NotEven,
    QuadratureUnderResolved,
    SupportTooLarge,
    TubeSelfIntersection,
)

PERIOD = 2.0 * np.pi


class Rectangle(NamedTuple):
    """Parameter rectangle [s0, s1] x [u0, u1]."""

    s0: float
    s1: float
    u0: float
    u1: float

    @property
    def width_s(self) -> float:
        return self.s1 - self.s0

    @property
    def width_u(self) -> float:
        return self.u1 - self.u0


# ---------------------------------------------------------------------------
# curvature profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureProfile:
    """2*pi-periodic curvature kappa(s) in Fourier form.

    cos_coeffs = (a0, a1, ..., aF), sin_coeffs = (b1, ..., bF):
    kappa(s) = a0 + sum_j a_j cos(j s) + sum_j b_j sin(j s).
    Periodicity holds by construction; the profile is even iff all sine
    coefficients vanish.
    """

    cos_coeffs: Tuple[float, ...] = (0.0,)
    sin_coeffs: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))
        if not self.cos_coeffs:
            object.__setattr__(self, "cos_coeffs", (0.0,))

    @classmethod
    def zero(cls) -> "CurvatureProfile":
        return cls((0.0,), ())

    @classmethod
    def from_cosines(cls, *amplitudes: float, mean: float = 0.0) -> "CurvatureProfile":
        """Even profile mean + sum_j amplitudes[j-1] * cos(j s)."""
        return cls((mean, *amplitudes), ())

    @property
    def is_even(self) -> bool:
        return all(b == 0.0 for b in self.sin_coeffs)

    @property
    def mean(self) -> float:
        return self.cos_coeffs[0]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.cos_coeffs[0])
        for j, a in enumerate(self.cos_coeffs[1:], start=1):
            if a != 0.0:
                out = out + a * np.cos(j * s)
        for j, b in enumerate(self.sin_coeffs, start=1):
            if b != 0.0:
                out = out + b * np.sin(j * s)
        return out

    def max_abs(self, samples: int = 4096) -> float:
        s = np.linspace(0.0, PERIOD, samples, endpoint=False)
        return float(np.max(np.abs(self(s))))

    def max_value(self, samples: int = 4096) -> float:
        s = np.linspace(0.0, PERIOD, samples, endpoint=False)
        return float(np.max(self(s)))

    def describe(self) -> str:
        terms = []
        if self.cos_coeffs[0] != 0.0:
            terms.append(f"{self.cos_coeffs[0]:g}")
        for j, a in enumerate(self.cos_coeffs[1:], start=1):
            if a != 0.0:
                terms.append(f"{a:g}*cos({j}s)")
        for j, b in enumerate(self.sin_coeffs, start=1):
            if b != 0.0:
                terms.append(f"{b:g}*sin({j}s)")
        return " + ".join(terms) if terms else "0"


def profile_from_config(table: dict) -> CurvatureProfile:
    """Build a profile from a config mapping with `cos` / `sin` lists."""
    cos = table.get("cos", [0.0])
    sin = table.get("sin", [])
    unknown = set(table) - {"cos", "sin"}
    if unknown:
        raise ValueError(f"unknown curvature keys: {sorted(unknown)}")
    return CurvatureProfile(tuple(cos), tuple(sin))


# ---------------------------------------------------------------------------
# curve reconstruction
# ---------------------------------------------------------------------------


@dataclass
class SampledCurve:
    """Planar curve sampled on a uniform grid with frames attached."""

    s: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    total_curvature: float

    @property
    def endpoint_translation(self) -> np.ndarray:
        """omega(2*pi) - omega(0); the period translation of the strip."""
        return self.points[-1] - self.points[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "x", "y", "tx", "ty"])
            for i in range(len(self.s)):
                writer.writerow(
                    [
                        _fmt(self.s[i]),
                        _fmt(self.points[i, 0]),
                        _fmt(self.points[i, 1]),
                        _fmt(self.tangents[i, 0]),
                        _fmt(self.tangents[i, 1]),
                    ]
                )


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _cumulative_simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral over a uniform grid, O(h^4) per pair of panels.

    values has odd length 2m+1; returns the integral at every node using
    Simpson on panel pairs and the symmetric half-panel rule inside.
    """
    n = len(values) - 1
    out = np.zeros_like(values)
    # integral over a full pair [2i, 2i+2]
    pair = (h / 3.0) * (values[0:-2:2] + 4.0 * values[1:-1:2] + values[2::2])
    out[2::2] = np.cumsum(pair)
    # value at odd nodes: integral up to 2i plus half-pair [2i, 2i+1]
    half = (h / 12.0) * (5.0 * values[0:-1:2] + 8.0 * values[1::2] - values[2::2])
    out[1::2] = out[0:-1:2] + half
    return out


def _integrate_curve(profile: CurvatureProfile, samples: int):
    # refined grid with 2x the requested panels keeps the requested nodes
    # at even indices while the cumulative rule stays 4th order
    n_fine = 2 * samples
    h = PERIOD / n_fine
    s_fine = np.arange(n_fine + 1) * h
    theta = -_cumulative_simpson(profile(s_fine), h)
    x = _cumulative_simpson(np.cos(theta), h)
    y = _cumulative_simpson(np.sin(theta), h)
    return s_fine, theta, x, y


def curve_from_curvature(profile: CurvatureProfile, samples: int = 256) -> SampledCurve:
    """Reconstruct the planar curve whose curvature profile is given.

    omega(s) = (x_cos(s), x_sin(s)) with x_f(s) the nested integral of
    f(-int_0^s kappa); evaluated by composite Simpson rules on a uniform
    grid.  The tangent is unit by construction.  When the curvature mean
    vanishes the tangent is 2*pi-periodic; closure of the curve itself is
    a property of the profile and can be read off endpoint_translation.
    """
    if samples < 16:
        raise ValueError("samples must be at least 16")
    s_fine, theta, x, y = _integrate_curve(profile, samples)
    _, _, x2, y2 = _integrate_curve(profile, 2 * samples)
    drift = float(np.hypot(x[-1] - x2[-1], y[-1] - y2[-1]))
    if drift > 1e-6:
        raise QuadratureUnderResolved(
            f"endpoint moved {drift:.3e} under sample doubling; raise `samples`"
        )
    sel = slice(0, None, 2)
    tangents = np.column_stack([np.cos(theta[sel]), np.sin(theta[sel])])
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    return SampledCurve(
        s=s_fine[sel].copy(),
        points=np.column_stack([x[sel], y[sel]]),
        tangents=tangents,
        normals=normals,
        total_curvature=float(-theta[-1]),
    )


# ---------------------------------------------------------------------------
# metric fields
# ---------------------------------------------------------------------------


class MetricField:
    """Position dependent 2x2 SPD tensor plus volume density on a rectangle.

    tensor(s, u) returns (g11, g12, g22, sqrt_det), vectorized over numpy
    arrays.  stiffness_density returns the combination sqrt_det * g^{-1}
    that enters the stiffness form; in two dimensions that combination is
    conformally invariant, and subclasses exploit this to keep stiffness
    assembly bit-identical along conformal families.
    """

    domain: Rectangle

    def tensor(self, s, u):
        raise NotImplementedError

    def stiffness_density(self, s, u):
        g11, g12, g22, sd = self.tensor(s, u)
        return g22 / sd, -g12 / sd, g11 / sd

    def mass_density(self, s, u):
        return self.tensor(s, u)[3]

    def volume(self, ns: int = 512, nu: int = 64) -> float:
        """int sqrt(det g) over the domain by midpoint quadrature."""
        d = self.domain
        hs = d.width_s / ns
        hu = d.width_u / nu
        s = d.s0 + (np.arange(ns) + 0.5) * hs
        u = d.u0 + (np.arange(nu) + 0.5) * hu
        ss, uu = np.meshgrid(s, u, indexing="ij")
        return float(np.sum(self.mass_density(ss, uu)) * hs * hu)


class EuclideanMetric(MetricField):
    """Flat metric on a parameter rectangle."""

    def __init__(self, domain: Rectangle):
        self.domain = Rectangle(*domain)

    def tensor(self, s, u):
        s = np.asarray(s, dtype=float)
        one = np.ones_like(s)
        return one, np.zeros_like(s), one.copy(), one.copy()

    def stiffness_density(self, s, u):
        s = np.asarray(s, dtype=float)
        one = np.ones_like(s)
        return one, np.zeros_like(s), one.copy()


class WaveguideMetric(MetricField):
    """Tube metric g = (1 - u*kappa(s))^2 ds^2 + du^2 on [0,2*pi] x [0,eps].

    The strip of width eps slides along the normal of the curve built from
    the curvature profile; positive curvature shrinks the longitudinal
    length element on the u > 0 side.
    """

    def __init__(self, profile: CurvatureProfile, eps: float):
        if eps <= 0.0:
            raise ValueError("strip width must be positive")
        kmax = profile.max_abs()
        if eps * kmax >= 1.0:
            raise TubeSelfIntersection(
                f"eps * max|kappa| = {eps * kmax:.3f} >= 1; the tube overlaps itself"
            )
        self.profile = profile
        self.eps = float(eps)
        self.domain = Rectangle(0.0, PERIOD, 0.0, eps)

    def tensor(self, s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        fac = 1.0 - u * self.profile(s)
        return fac * fac, np.zeros_like(fac), np.ones_like(fac), fac

    def stiffness_density(self, s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        fac = 1.0 - u * self.profile(s)
        return 1.0 / fac, np.zeros_like(fac), fac


def waveguide_metric(profile: CurvatureProfile, eps: float) -> WaveguideMetric:
    return WaveguideMetric(profile, eps)


class ConformalMetric(MetricField):
    """rho^2 * g for a strictly positive factor rho(s, u).

    In two dimensions the conformal factor cancels from the stiffness
    density; that identity is kept structural here by delegating the
    stiffness density to the base metric, so the assembled stiffness
    matrix is bit-for-bit independent of rho.  Only the mass density
    carries the factor.
    """

    def __init__(self, base: MetricField, rho):
        self.base = base
        self.domain = base.domain
        if callable(rho):
            self._rho = rho
        else:
            value = float(rho)
            if value <= 0.0:
                raise NonPositiveFactor(f"constant factor {value} is not positive")
            self._rho = lambda s, u: np.full_like(np.asarray(s, dtype=float), value)

    def factor(self, s, u):
        r = np.asarray(self._rho(s, u), dtype=float)
        if np.any(r <= 0.0):
            raise NonPositiveFactor("conformal factor is not positive on the domain")
        return r

    def tensor(self, s, u):
        g11, g12, g22, sd = self.base.tensor(s, u)
        r2 = self.factor(s, u) ** 2
        return r2 * g11, r2 * g12, r2 * g22, r2 * sd

    def stiffness_density(self, s, u):
        return self.base.stiffness_density(s, u)

    def mass_density(self, s, u):
        return self.factor(s, u) ** 2 * self.base.mass_density(s, u)


def conformal_metric(base: MetricField, rho) -> ConformalMetric:
    return ConformalMetric(base, rho)


class SupercellMetric(MetricField):
    """Periodic extension of a cell metric to n concatenated cells."""

    def __init__(self, cell: MetricField, n: int):
        if n < 1:
            raise ValueError("supercell needs n >= 1")
        self.cell = cell
        self.n = int(n)
        d = cell.domain
        self.domain = Rectangle(d.s0, d.s0 + n * d.width_s, d.u0, d.u1)

    def _fold(self, s):
        d = self.cell.domain
        return d.s0 + np.mod(np.asarray(s, dtype=float) - d.s0, d.width_s)

    def tensor(self, s, u):
        return self.cell.tensor(self._fold(s), u)

    def stiffness_density(self, s, u):
        return self.cell.stiffness_density(self._fold(s), u)

    def mass_density(self, s, u):
        return self.cell.mass_density(self._fold(s), u)


def supercell(cell: MetricField, n: int) -> MetricField:
    if n == 1:
        return cell
    return SupercellMetric(cell, n)


def smoothstep(x):
    """C^2 ramp: 0 for x <= 0, 1 for x >= 1, quintic in between."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


class StretchedMetric(MetricField):
    """Pullback of a metric with a flat rectangle of length tau spliced in.

    A monotone reparametrization phi stretches the collar [s0, s1] onto
    [s0, s1 + tau]; the target carries the base metric with a flat piece
    of length tau inserted at s0.  The preimage of the insert, with the
    pulled-back metric, is isometric to a flat rectangle of length tau
    and width eps.  Outside the collar the metric equals the base metric
    exactly (the shift cancels symbolically).
    """

    def __init__(
        self,
        base: MetricField,
        collar: Tuple[float, float],
        tau: float,
        ramp: str = "smooth",
    ):
        if tau < 0.0:
            raise ValueError("insert length must be nonnegative")
        s0, s1 = float(collar[0]), float(collar[1])
        if not base.domain.s0 < s0 < s1 < base.domain.s1:
            raise SupportTooLarge("collar must lie strictly inside the domain")
        if ramp not in ("smooth", "linear"):
            raise ValueError("ramp must be 'smooth' or 'linear'")
        self.base = base
        self.s0, self.s1 = s0, s1
        self.tau = float(tau)
        self.ramp = ramp
        self.domain = base.domain

    def _psi(self, x):
        if self.ramp == "linear":
            return np.clip(x, 0.0, 1.0)
        return smoothstep(x)

    def _dpsi(self, x):
        x = np.asarray(x, dtype=float)
        if self.ramp == "linear":
            return np.where((x > 0.0) & (x < 1.0), 1.0, 0.0)
        inside = (x > 0.0) & (x < 1.0)
        xc = np.clip(x, 0.0, 1.0)
        return np.where(inside, 30.0 * xc * xc * (1.0 - xc) ** 2, 0.0)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        x = (s - self.s0) / (self.s1 - self.s0)
        return s + self.tau * self._psi(x)

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        x = (s - self.s0) / (self.s1 - self.s0)
        return 1.0 + (self.tau / (self.s1 - self.s0)) * self._dpsi(x)

    def stretched_region(self) -> Tuple[float, float]:
        """Parameter interval mapped onto the flat insert."""
        if self.tau == 0.0:
            return self.s0, self.s0
        lo, hi = self.s0, self.s1
        target = self.s0 + self.tau
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.phi(mid) < target:
                lo = mid
            else:
                hi = mid
        return self.s0, 0.5 * (lo + hi)

    def tensor(self, s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        if u.shape != s.shape:
            u = np.broadcast_to(u, s.shape).copy()

        g11 = np.empty_like(s)
        g12 = np.empty_like(s)
        g22 = np.empty_like(s)
        sd = np.empty_like(s)

        outside = (s <= self.s0) | (s >= self.s1)
        if np.any(outside):
            b11, b12, b22, bsd = self.base.tensor(s[outside], u[outside])
            g11[outside], g12[outside], g22[outside], sd[outside] = b11, b12, b22, bsd

        inside = ~outside
        if np.any(inside):
            si, ui = s[inside], u[inside]
            t = self.phi(si)
            dp = self.dphi(si)
            in_insert = t <= self.s0 + self.tau
            h11 = np.empty_like(si)
            h12 = np.empty_like(si)
            h22 = np.empty_like(si)
            hsd = np.empty_like(si)
            if np.any(in_insert):
                h11[in_insert] = 1.0
                h12[in_insert] = 0.0
                h22[in_insert] = 1.0
                hsd[in_insert] = 1.0
            past = ~in_insert
            if np.any(past):
                b11, b12, b22, bsd = self.base.tensor(t[past] - self.tau, ui[past])
                h11[past], h12[past], h22[past], hsd[past] = b11, b12, b22, bsd
            g11[inside] = dp * dp * h11
            g12[inside] = dp * h12
            g22[inside] = h22
            sd[inside] = dp * hsd
        return g11, g12, g22, sd


# ---------------------------------------------------------------------------
# gap intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapInterval:
    """Interval (lambda_k^D, lambda_{k+1}^N) certified open for band index k."""

    k: int
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("gap interval must have lower < upper")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, level: float) -> bool:
        return self.lower < level < self.upper

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "lower": self.lower,
            "upper": self.upper,
            "source": "dirichlet-neumann",
        }


# ---------------------------------------------------------------------------
# perturbation families
# ---------------------------------------------------------------------------

FAMILY_KINDS = ("conformal-constant-region", "bubble-insert", "hole-shrink")

#: width of the smooth ramp between the constant region and the unperturbed
#: metric, in the s direction
CONFORMAL_RAMP_WIDTH = PERIOD / 10.0


@dataclass
class PerturbationFamily:
    """A tau-family of locally perturbed metrics on m consecutive cells.

    At tau = 0 the family returns the periodic metric exactly; for every
    tau the metric outside the m perturbed cells equals the periodic one
    bit-for-bit (the support condition).  The perturbed block sits in the
    middle of whatever supercell the metric is requested for.
    """

    kind: str
    cell: MetricField
    m: int
    schedule: Callable[[float], float]
    bubble_collar_halfwidth: float = field(default=np.pi / 2.0)
    bubble_ramp: str = "smooth"
    hole_max_radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        neutral = {"conformal-constant-region": 1.0, "bubble-insert": 0.0, "hole-shrink": 0.0}
        v0 = float(self.schedule(0.0))
        if abs(v0 - neutral[self.kind]) > 1e-14:
            raise ValueError(
                f"schedule(0) = {v0} but the {self.kind} family is neutral at "
                f"{neutral[self.kind]}"
            )
        self._check_support()

    # -- geometry of the perturbed block ------------------------------------

    def block_interval(self, n: int) -> Tuple[float, float]:
        """The middle m cells of an n-cell supercell, in parameter length."""
        if n < self.m:
            raise ValueError("supercell must contain the perturbed block (n >= m)")
        width = self.cell.domain.width_s
        first = (n - self.m) // 2
        sa = self.cell.domain.s0 + first * width
        return sa, sa + self.m * width

    def constant_region(self, n: int) -> Rectangle:
        """Subrectangle K where the conformal factor is exactly constant."""
        sa, sb = self.block_interval(n)
        third = (sb - sa) / 3.0
        d = self.cell.domain
        eps = d.width_u
        return Rectangle(sa + third, sb - third, d.u0 + eps / 4.0, d.u0 + 3.0 * eps / 4.0)

    def _check_support(self):
        sa, sb = self.block_interval(self.m)
        if self.kind == "conformal-constant-region":
            k = self.constant_region(self.m)
            if k.s0 - CONFORMAL_RAMP_WIDTH < sa or k.s1 + CONFORMAL_RAMP_WIDTH > sb:
                raise SupportTooLarge(
                    "constant region plus ramp does not fit inside the block"
                )
        elif self.kind == "bubble-insert":
            mid = 0.5 * (sa + sb)
            if mid - self.bubble_collar_halfwidth <= sa or mid + self.bubble_collar_halfwidth >= sb:
                raise SupportTooLarge("bubble collar touches the block boundary")
        else:
            if self.hole_max_radius is None:
                raise ValueError("hole-shrink family needs hole_max_radius")
            eps = self.cell.domain.width_u
            limit = min(0.5 * (sb - sa), 0.5 * eps)
            if self.hole_max_radius >= limit:
                raise SupportTooLarge("hole would touch the block boundary")

    # -- evaluators ----------------------------------------------------------

    def metric(self, tau: float, n: int) -> MetricField:
        """The perturbed metric on the n-cell supercell at parameter tau."""
        base = supercell(self.cell, n)
        if self.kind == "hole-shrink":
            return base
        if self.kind == "conformal-constant-region":
            c = float(self.schedule(tau))
            if c <= 0.0:
                raise NonPositiveFactor(f"schedule({tau}) = {c} is not positive")
            region = self.constant_region(n)
            rho = _plateau_factor(region, c, CONFORMAL_RAMP_WIDTH)
            return ConformalMetric(base, rho)
        sa, sb = self.block_interval(n)
        mid = 0.5 * (sa + sb)
        collar = (mid - self.bubble_collar_halfwidth, mid + self.bubble_collar_halfwidth)
        return StretchedMetric(base, collar, float(self.schedule(tau)), self.bubble_ramp)

    def hole(self, tau: float, n: int) -> Tuple[float, float, float]:
        """Center and radius of the Dirichlet disk for the hole kind."""
        if self.kind != "hole-shrink":
            raise ValueError("hole() applies to the hole-shrink kind only")
        sa, sb = self.block_interval(n)
        d = self.cell.domain
        r = float(self.schedule(tau))
        if r < 0.0:
            raise ValueError("hole radius must be nonnegative")
        return 0.5 * (sa + sb), d.u0 + 0.5 * d.width_u, r


def _plateau_factor(region: Rectangle, c: float, ramp_s: float) -> Callable:
    """rho = 1 outside, c on the region, quintic C^2 ramp in between."""
    ramp_u = region.width_u / 2.0

    def rho(s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        ps = smoothstep((s - (region.s0 - ramp_s)) / ramp_s) * smoothstep(
            ((region.s1 + ramp_s) - s) / ramp_s
        )
        pu = smoothstep((u - (region.u0 - ramp_u)) / ramp_u) * smoothstep(
            ((region.u1 + ramp_u) - u) / ramp_u
        )
        return 1.0 + (c - 1.0) * ps * pu

    return rho


def make_family(
    kind: str,
    base: MetricField,
    m: int,
    schedule: Optional[Callable[[float], float]] = None,
    **options,
) -> PerturbationFamily:
    """Build a perturbation family with the stock schedules.

    Defaults: conformal blow-up c_tau = 1 + tau (pass your own schedule
    for shrinking, e.g. 1/(1+tau)), bubble length tau, hole radius
    r_max * tau / (1 + tau).
    """
    if kind == "conformal-constant-region":
        sched = schedule if schedule is not None else (lambda tau: 1.0 + tau)
        return PerturbationFamily(kind, base, m, sched, **options)
    if kind == "bubble-insert":
        sched = schedule if schedule is not None else (lambda tau: tau)
        return PerturbationFamily(kind, base, m, sched, **options)
    if kind == "hole-shrink":
        r_max = options.pop("hole_max_radius", None)
        if r_max is None:
            raise ValueError("hole-shrink family needs hole_max_radius")
        sched = schedule if schedule is not None else (lambda tau: r_max * tau / (1.0 + tau))
        return PerturbationFamily(kind, base, m, sched, hole_max_radius=r_max, **options)
    raise ValueError(f"unknown family kind {kind!r}")
