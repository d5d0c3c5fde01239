"""Explicit competitor families: translations, concentrations, dilations and power laws.

Translations along the singular set and concentrations at a point off it
break the (|x|, |y|) symmetry of the grid.  Both are handled by an exact
change of variables: the base profile stays on its own grid and the
weights are replaced by their averages over the directions the profile
does not see.  Those averages are one-dimensional integrals in
tau = cos(angle), computed with Gauss-Jacobi rules.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import roots_jacobi

from . import mesh
from .functionals import (DiscreteQuotient, QuotientKind, QuotientReport, ZERO_DENOMINATOR,
                          ZeroDenominator, _check_grid, hardy_quotient, rayleigh_hs,
                          sobolev_constant)
from .mesh import Grading, ProfileGrid, WeightSpec
from .params import InadmissibleBase, OutOfRange, ParamSet, admissible_base, describe_admissibility


class SupportOverlap(ValueError):
    pass


class BadRadii(ValueError):
    pass


class FamilyKind(str, Enum):
    TRANSLATE_ALONG_SIGMA0 = "TranslateAlongSigma0"
    CONCENTRATE_AT_POINT = "ConcentrateAtPoint"
    DILATE = "Dilate"
    RADIAL_POWER = "RadialPower"
    HORIUCHI_RADIAL = "HoriuchiRadial"
    TALENTI_BUBBLE = "TalentiBubble"


ANGULAR_ORDER = 32


@dataclass(frozen=True)
class FamilySpec:
    """One member of a competitor family.

    ``base_profile`` is a grid, or for ``RadialPower`` the pair of cutoff
    radii.  ``center`` is the unit vector x0 (translation) or y0
    (concentration); only its norm matters on the symmetric grid.
    """

    kind: FamilyKind
    base_profile: object
    parameter: float
    center: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if not self.parameter > 0:
            raise ValueError(f"family parameter must be positive, got {self.parameter}")
        if not math.isclose(math.hypot(*self.center), 1.0, rel_tol=1e-12):
            raise ValueError("family center must have unit norm")


@dataclass(frozen=True)
class FamilyRow:
    kind: FamilyKind
    parameter: float
    quotient: float
    quad_error: float


def sphere_rule(m: int, order: int = ANGULAR_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes tau and weights summing to one for averages of f(omega . e) over S^{m-1}."""
    if m < 1:
        raise ValueError(f"sphere dimension must be positive, got {m}")
    if m == 1:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    alpha = (m - 3) / 2
    tau, w = roots_jacobi(order, alpha, alpha)
    return tau, w / w.sum()


def support_radius(g: ProfileGrid) -> float:
    """Radius of the smallest origin ball containing the support of the bilinear interpolant."""
    nz = np.argwhere(g.values != 0)
    if nz.size == 0:
        return 0.0
    nr, ns = g.shape
    i = min(int(nz[:, 0].max()) + 1, nr - 1)
    j = min(int(nz[:, 1].max()) + 1, ns - 1)
    return float(math.hypot(g.r_nodes[i], g.s_nodes[j]))


def _translate_average(h: float, expo: float, m: int, order: int):
    """Cell factor: mean over x-directions of |x/h + x0|^2 + |y|^2/h^2 raised to -expo/2."""
    tau, w = sphere_rule(m, order)

    def factor(rc, sc):
        base = 1 + (rc ** 2 + sc ** 2)[..., None] / h ** 2
        return np.sum(w * (base + 2 * rc[..., None] * tau / h) ** (-expo / 2), axis=-1)

    return factor


def _assemble(ps: ParamSet, g: ProfileGrid, num_w: WeightSpec, den_w: WeightSpec,
              num_factor, den_factor) -> DiscreteQuotient:
    area = mesh.area_factor(g)
    cell_w = area * mesh.cell_weights(g, num_w, num_factor)
    den_mass = area * mesh.nodal_masses(g, den_w, den_factor)
    return DiscreteQuotient(g, ps.p, cell_w, den_mass, ps.q, ps.p / ps.q)


def _parts_with_coarse(ps, g, num_w, den_w, num_factor, den_factor):
    fine = _assemble(ps, g, num_w, den_w, num_factor, den_factor)
    num, den = fine.parts(g.values)
    if not den > ZERO_DENOMINATOR:
        raise ZeroDenominator(f"denominator integral {den:g} vanishes")
    coarse_grid = mesh.coarsen(g)
    cnum, cden = _assemble(ps, coarse_grid, num_w, den_w, num_factor, den_factor).parts(coarse_grid.values)
    coarse_q = cnum / cden ** fine.power if cden > ZERO_DENOMINATOR else 0.0
    return num, den, abs(num / den ** fine.power - coarse_q)


def translate_family_quotient(ps: ParamSet, base: ProfileGrid, h: float,
                              order: int = ANGULAR_ORDER) -> QuotientReport:
    """Quotient of u_h(z) = u(z - h x0), x0 a unit vector of the singular set.

    In the variable w = z - h x0 the quotient equals h^(gamma-b) times the
    Maz'ya-type quotient of u with |z| weights replaced by their x-direction
    averages; that identity is exact, so no shifted grid is needed.
    """
    _check_grid(ps, base)
    if not admissible_base(ps):
        raise InadmissibleBase(describe_admissibility(ps))
    radius = support_radius(base)
    if not h > 2 * radius:
        raise SupportOverlap(f"translation h={h:g} must exceed twice the support radius {radius:g}")
    m = ps.d - ps.k
    num_f = _translate_average(h, ps.b, m, order)
    den_f = _translate_average(h, ps.gamma * ps.q / ps.p, m, order)
    num, den, err = _parts_with_coarse(ps, base, WeightSpec(ps.a, 0.0), WeightSpec(ps.theta, 0.0), num_f, den_f)
    prefactor = h ** (ps.gamma - ps.b)
    quotient = prefactor * num / den ** (ps.p / ps.q)
    return QuotientReport(h ** -ps.b * num, h ** -ps.gamma * den ** (ps.p / ps.q), quotient,
                          QuotientKind.HARDY_SOBOLEV, ps, prefactor * err)


def _concentrate_averages(ps: ParamSet, h: float, order: int):
    tau, w = sphere_rule(ps.k, order)
    den_z = ps.gamma * ps.q / ps.p

    def weights(rc, sc, y_exp, z_exp):
        y2 = 1 + 2 * sc[..., None] * tau / h + (sc ** 2)[..., None] / h ** 2
        z2 = y2 + (rc ** 2)[..., None] / h ** 2
        return np.sum(w * y2 ** (y_exp / 2) * z2 ** (-z_exp / 2), axis=-1)

    return (lambda rc, sc: weights(rc, sc, ps.a, ps.b),
            lambda rc, sc: weights(rc, sc, ps.theta, den_z))


def concentrate_family_quotient(ps: ParamSet, base: ProfileGrid, h: float,
                                order: int = ANGULAR_ORDER) -> QuotientReport:
    """Quotient of u_h(z) = u(h (z - z0)), z0 = (0, y0) with |y0| = 1, at q = p*.

    The base grid is read in the variable w = h (z - z0); the weights
    |y|^a |z|^-b and their denominator analogues become functions of w/h
    averaged over the y-directions.  The powers of h cancel because q = p*.
    ``model_error`` is the change when the angular rule is doubled.
    """
    _check_grid(ps, base)
    if not ps.p < ps.d:
        raise ValueError("concentration family needs p < d")
    if not math.isclose(ps.q, ps.p_star, rel_tol=1e-12):
        raise ValueError(f"concentration family needs q = p* = {ps.p_star:g}, got q={ps.q}")
    if not h >= 4:
        raise ValueError(f"concentration scale must be at least 4, got h={h}")
    if not admissible_base(ps):
        raise InadmissibleBase(describe_admissibility(ps))
    radius = support_radius(base)
    if not h > 2 * radius:
        raise SupportOverlap(f"scale h={h:g} must exceed twice the support radius {radius:g}")
    flat = WeightSpec(0.0, 0.0)
    num_f, den_f = _concentrate_averages(ps, h, order)
    num, den, err = _parts_with_coarse(ps, base, flat, flat, num_f, den_f)
    quotient = num / den ** (ps.p / ps.q)
    num2_f, den2_f = _concentrate_averages(ps, h, 2 * order)
    num2, den2 = _assemble(ps, base, flat, flat, num2_f, den2_f).parts(base.values)
    model_error = abs(num2 / den2 ** (ps.p / ps.q) - quotient)
    return QuotientReport(h ** (ps.p - ps.d) * num, (h ** -ps.d * den) ** (ps.p / ps.q), quotient,
                          QuotientKind.HARDY_SOBOLEV, ps, err, model_error)


def horiuchi_radial_bound(ps: ParamSet) -> float:
    """G_a [(d-p+a-b)/(d-p)]^(p-p/d) S: the radial-class upper bound for S_{a,b,b}(p*)."""
    if not ps.p < ps.d:
        raise OutOfRange(f"need p < d, got p={ps.p}, d={ps.d}")
    if not ps.a > -ps.k:
        raise OutOfRange(f"need a > -k, got a={ps.a}")
    if not ps.b < ps.d - ps.p + ps.a:
        raise OutOfRange(f"need b < d - p + a, got b={ps.b}")
    bracket = (ps.d - ps.p + ps.a - ps.b) / (ps.d - ps.p)
    return mesh.g_a_factor(ps) * bracket ** (ps.p - ps.p / ps.d) * sobolev_constant(ps.d, ps.p)


def smoothstep(x):
    """C^1 cubic ramp from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def radial_power_profile(ps: ParamSet, epsilon: float, cutoff_radii: tuple[float, float],
                         grid: ProfileGrid | None = None) -> ProfileGrid:
    """Near-extremal Hardy profile |z|^-H min(|z|, 1/|z|)^epsilon with smooth log cutoffs.

    H = H_{a-b}.  The cutoff ramps over one decade inside each radius, so
    the support is exactly [R1, R2].  Without a grid, a log-graded one
    reaching a tenth of R1 is built.
    """
    lo, hi = cutoff_radii
    if not 0 < lo < hi:
        raise BadRadii(f"need 0 < inner < outer radius, got {cutoff_radii}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if grid is None:
        grid = power_profile_grid(ps, cutoff_radii)
    H = ps.h_of(ps.a - ps.b)

    def profile(rr, ss):
        rho = np.hypot(rr, ss)
        cut = smoothstep(np.log10(rho / lo)) * smoothstep(np.log10(hi / rho))
        return rho ** -H * np.minimum(rho, 1 / rho) ** epsilon * cut

    return grid.fill(profile)


def power_profile_grid(ps: ParamSet, cutoff_radii: tuple[float, float],
                       ratio: float = mesh.DEFAULT_RATIO) -> ProfileGrid:
    lo, hi = cutoff_radii
    target = lo / 10
    n = 8
    while hi * (ratio - 1) / (ratio ** n - 1) > target:
        n += 1
    return mesh.build_grid(n, n, hi, Grading.LOG_GRADED, d=ps.d, k=ps.k, ratio=ratio)


def talenti_profile(grid: ProfileGrid, scale: float = 1.0, p: float = 2.0,
                    truncate: bool = True) -> ProfileGrid:
    """Aubin-Talenti bubble at the given scale, shifted down to vanish at R_max if ``truncate``."""
    d = grid.d
    if not 1 < p < d:
        raise ValueError(f"bubble needs 1 < p < d, got p={p}, d={d}")

    def bubble(rho):
        return (1 + (rho / scale) ** (p / (p - 1))) ** (-(d - p) / p)

    floor = bubble(grid.R_max) if truncate else 0.0
    return grid.fill(lambda rr, ss: np.maximum(bubble(np.hypot(rr, ss)) - floor, 0.0))


def compact_bump(grid: ProfileGrid, radius: float) -> ProfileGrid:
    """(1 - |z|^2 / radius^2)_+^2, a C^1 bump supported in the ball of the given radius."""
    if not radius > 0:
        raise ValueError("bump radius must be positive")
    return grid.fill(lambda rr, ss: np.maximum(1 - (rr ** 2 + ss ** 2) / radius ** 2, 0.0) ** 2)


def evaluate_family(ps: ParamSet, spec: FamilySpec) -> QuotientReport:
    """Quotient of one family member; the Horiuchi entry is the closed-form bound itself."""
    kind, t = spec.kind, spec.parameter
    if kind is FamilyKind.TRANSLATE_ALONG_SIGMA0:
        return translate_family_quotient(ps, spec.base_profile, t)
    if kind is FamilyKind.CONCENTRATE_AT_POINT:
        return concentrate_family_quotient(ps, spec.base_profile, t)
    if kind is FamilyKind.DILATE:
        return rayleigh_hs(ps, spec.base_profile.dilate(t, ps.h_of(ps.a - ps.b)))
    if kind is FamilyKind.RADIAL_POWER:
        radii = spec.base_profile if isinstance(spec.base_profile, tuple) else (1e-4, 1e4)
        return hardy_quotient(ps, radial_power_profile(ps, t, radii))
    if kind is FamilyKind.TALENTI_BUBBLE:
        return rayleigh_hs(ps, talenti_profile(spec.base_profile, t, ps.p))
    value = horiuchi_radial_bound(ps)
    return QuotientReport(value, 1.0, value, QuotientKind.HARDY_SOBOLEV, ps, 0.0)


def family_sweep(ps: ParamSet, kind, base, parameters) -> list[FamilyRow]:
    kind = FamilyKind(kind)
    rows = []
    for t in parameters:
        rep = evaluate_family(ps, FamilySpec(kind, base, float(t)))
        rows.append(FamilyRow(kind, float(t), rep.quotient, rep.quad_error))
    return rows


def rows_to_csv(rows: list[FamilyRow], target=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "h", "quotient", "quad_error"])
    for row in rows:
        writer.writerow([row.kind.value, f"{row.parameter:.17g}", f"{row.quotient:.17g}",
                         f"{row.quad_error:.17g}"])
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text
