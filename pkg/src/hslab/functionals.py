"""Discrete Rayleigh quotients, the T_b transform and related identities.

All quotients share one discretisation: the numerator uses the per-cell
edge-difference gradient of :mod:`hslab.mesh` and the denominators use the
bilinear nodal masses.  Every value is a *symmetric-class* estimate: the
grid only represents profiles depending on (|x|, |y|).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import mesh
from .mesh import ProfileGrid, WeightSpec
from .params import (InadmissibleBase, ParamSet, admissible_base, cylindrical_admissible,
                     describe_admissibility, hilbert_admissible)

SYMMETRIC_CLASS = "symmetric-class constant"
ZERO_DENOMINATOR = 1e-300


class ZeroDenominator(ArithmeticError):
    pass


class WrongP(ValueError):
    pass


class QuotientKind(str, Enum):
    HARDY_SOBOLEV = "HardySobolev"
    HARDY = "Hardy"
    MAZYA = "Mazya"
    BOTTOM_JB = "BottomJb"


@dataclass(frozen=True)
class QuotientReport:
    numerator: float
    denominator: float
    quotient: float
    kind: QuotientKind
    params: ParamSet
    quad_error: float
    model_error: float | None = None
    caveat: str = field(default=SYMMETRIC_CLASS)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "quotient": self.quotient,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "quad_error": self.quad_error,
            "params": self.params.to_dict(),
            "caveat": self.caveat,
        }
        if self.model_error is not None:
            out["model_error"] = self.model_error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=_float17)


def _float17(val):
    return float(f"{val:.17g}")


def sobolev_constant(d: int, p: float) -> float:
    """Best constant S in S ||u||_{p*}^p <= ||grad u||_p^p on R^d, closed form."""
    if not 1 < p < d:
        raise ValueError(f"need 1 < p < d, got p={p}, d={d}")
    log_ratio = (math.lgamma(d / p) + math.lgamma(1 + d - d / p)
                 - math.lgamma(1 + d / 2) - math.lgamma(d))
    return (math.pi ** (p / 2) * d * ((d - p) / (p - 1)) ** (p - 1)
            * math.exp(log_ratio * p / d))


@dataclass
class DiscreteQuotient:
    """N(u) / D(u)^power on a fixed grid geometry.

    N(u) = sum_c W_c (|grad u|_c^2 + delta^2)^{p/2} + sum_n P_n u_n^2 and
    D(u) = sum_n m_n |u_n|^f, all masses already include the sphere areas.
    """

    grid: ProfileGrid
    p: float
    cell_w: np.ndarray
    den_mass: np.ndarray
    f_power: float
    power: float
    potential: np.ndarray | None = None
    delta: float = 0.0

    def __post_init__(self):
        self.op = mesh.edge_operator(self.grid)
        self.cell_flat = self.cell_w.ravel()

    def parts(self, u: np.ndarray) -> tuple[float, float]:
        u = u.ravel()
        edges = (self.op @ u).reshape(4, -1)
        grad2 = np.sum(edges ** 2, axis=0)
        if self.delta:
            grad2 = grad2 + self.delta ** 2
        if self.p == 2:
            num = float(self.cell_flat @ grad2)
        else:
            num = float(self.cell_flat @ grad2 ** (self.p / 2))
        if self.potential is not None:
            num += float(self.potential.ravel() @ u ** 2)
        den = float(self.den_mass.ravel() @ np.abs(u) ** self.f_power)
        return num, den

    def value(self, u: np.ndarray) -> float:
        num, den = self.parts(u)
        return num / den ** self.power

    def numerator_gradient(self, u: np.ndarray) -> np.ndarray:
        u = u.ravel()
        edges = (self.op @ u).reshape(4, -1)
        grad2 = np.sum(edges ** 2, axis=0) + self.delta ** 2
        if self.p == 2:
            coef = 2 * self.cell_flat
        else:
            coef = self.p * self.cell_flat * grad2 ** (self.p / 2 - 1)
        out = self.op.T @ (edges * coef).ravel()
        if self.potential is not None:
            out += 2 * self.potential.ravel() * u
        return out

    def denominator_gradient(self, u: np.ndarray) -> np.ndarray:
        u = u.ravel()
        return self.f_power * self.den_mass.ravel() * np.sign(u) * np.abs(u) ** (self.f_power - 1)

    def gradient(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Quotient value and its gradient with respect to the nodal values."""
        num, den = self.parts(u)
        scale = den ** -self.power
        grad = scale * (self.numerator_gradient(u)
                        - self.power * (num / den) * self.denominator_gradient(u))
        return num * scale, grad


def _check_grid(ps: ParamSet, g: ProfileGrid):
    if (g.d, g.k) != (ps.d, ps.k):
        raise ValueError(f"grid built for (d, k) = ({g.d}, {g.k}) but params have ({ps.d}, {ps.k})")


def hs_weights(ps: ParamSet) -> tuple[WeightSpec, WeightSpec]:
    """Numerator and denominator weights of the Hardy-Sobolev quotient."""
    return WeightSpec(ps.a, -ps.b), WeightSpec(ps.theta, -ps.gamma * ps.q / ps.p)


def mazya_weights(ps: ParamSet) -> tuple[WeightSpec, WeightSpec]:
    return WeightSpec(ps.a, 0.0), WeightSpec(-ps.d + ps.q * ps.h_of(ps.a), 0.0)


def jb_coefficient(ps: ParamSet) -> float:
    """(b/2)(b/2 - 2 H_a), the Hardy-term coefficient of J_b."""
    return (ps.b / 2) * (ps.b / 2 - 2 * ps.h_of(ps.a))


def build_quotient(ps: ParamSet, g: ProfileGrid, kind: QuotientKind, *, delta: float = 0.0,
                   num_factor=None, den_factor=None) -> DiscreteQuotient:
    """Assemble the discrete quotient of the given kind on the geometry of ``g``.

    ``num_factor``/``den_factor`` multiply the cell weights by a smooth
    function of the cell midpoint (used by the translation and concentration
    families).
    """
    area = mesh.area_factor(g)
    potential = None
    if kind is QuotientKind.HARDY_SOBOLEV:
        wn, wd = hs_weights(ps)
        f_power, power = ps.q, ps.p / ps.q
    elif kind is QuotientKind.HARDY:
        wn, wd = WeightSpec(ps.a, -ps.b), WeightSpec(ps.a, -ps.b - ps.p)
        f_power, power = ps.p, 1.0
    elif kind is QuotientKind.MAZYA:
        wn, wd = mazya_weights(ps)
        f_power, power = ps.q, ps.p / ps.q
    elif kind is QuotientKind.BOTTOM_JB:
        wn, wd = mazya_weights(ps)
        f_power, power = ps.q, 2 / ps.q
        coef = jb_coefficient(ps)
        if coef != 0:
            potential = coef * area * mesh.nodal_masses(g, WeightSpec(ps.a, -2.0))
    else:
        raise ValueError(kind)
    cell_w = area * mesh.cell_weights(g, wn, num_factor)
    den_mass = area * mesh.nodal_masses(g, wd, den_factor)
    return DiscreteQuotient(g, ps.p, cell_w, den_mass, f_power, power, potential, delta)


def _evaluate(ps: ParamSet, g: ProfileGrid, kind: QuotientKind, **kw) -> QuotientReport:
    _check_grid(ps, g)
    fine = build_quotient(ps, g, kind, **kw)
    num, den = fine.parts(g.values)
    if not den > ZERO_DENOMINATOR:
        raise ZeroDenominator(f"denominator integral {den:g} vanishes")
    den_pow = den ** fine.power
    quotient = num / den_pow
    coarse_grid = mesh.coarsen(g)
    coarse = build_quotient(ps, coarse_grid, kind, **kw)
    cnum, cden = coarse.parts(coarse_grid.values)
    err = abs(quotient - cnum / cden ** coarse.power) if cden > ZERO_DENOMINATOR else abs(quotient)
    return QuotientReport(num, den_pow, quotient, kind, ps, err)


def rayleigh_hs(ps: ParamSet, g: ProfileGrid) -> QuotientReport:
    # evaluating the quotient only needs integrable weights; gamma < b is a legitimate query
    if not admissible_base(ps):
        raise InadmissibleBase(describe_admissibility(ps))
    return _evaluate(ps, g, QuotientKind.HARDY_SOBOLEV)


def hardy_quotient(ps: ParamSet, g: ProfileGrid) -> QuotientReport:
    if not (ps.k + ps.a > 0 and ps.b < ps.d - ps.p + ps.a):
        raise InadmissibleBase("Hardy quotient needs k + a > 0 and b < d - p + a")
    return _evaluate(ps, g, QuotientKind.HARDY)


def mazya_quotient(ps: ParamSet, g: ProfileGrid) -> QuotientReport:
    if not cylindrical_admissible(ps):
        raise InadmissibleBase("Maz'ya quotient needs k + a > 0, q H_a > d - k and (d - p) q <= d p")
    return _evaluate(ps, g, QuotientKind.MAZYA)


def _check_hilbert(ps: ParamSet):
    if ps.p != 2:
        raise WrongP(f"this functional needs p = 2, got p={ps.p}")
    if not ps.b < 2 * ps.h_of(ps.a):
        raise InadmissibleBase(f"need b < 2H_a = {2 * ps.h_of(ps.a):g}, got b={ps.b}")


def bottom_jb(ps: ParamSet, g: ProfileGrid) -> QuotientReport:
    _check_hilbert(ps)
    if not hilbert_admissible(ps):
        raise InadmissibleBase("J_b needs the p = 2 cylindrical admissibility conditions")
    return _evaluate(ps, g, QuotientKind.BOTTOM_JB)


def transform_tb(ps: ParamSet, g: ProfileGrid) -> ProfileGrid:
    """v = |z|^{-b/2} u pointwise on the nodes."""
    _check_hilbert(ps)
    if ps.b == 0:
        return g.with_values(g.values.copy())
    rr, ss = g.mesh()
    return g.with_values((rr ** 2 + ss ** 2) ** (-ps.b / 4) * g.values)


def verify_tb_identity(ps: ParamSet, g: ProfileGrid) -> float:
    """Relative residual of the integration-by-parts identity behind J_b."""
    _check_grid(ps, g)
    _check_hilbert(ps)
    area = mesh.area_factor(g)
    lhs = mesh._gradient_integral(g, WeightSpec(ps.a, -ps.b), 2.0)
    v = transform_tb(ps, g)
    rhs = mesh._gradient_integral(v, WeightSpec(ps.a, 0.0), 2.0)
    coef = jb_coefficient(ps)
    if coef != 0:
        rhs += coef * area * float(np.sum(mesh.nodal_masses(v, WeightSpec(ps.a, -2.0)) * v.values ** 2))
    if lhs == 0:
        return 0.0 if rhs == 0 else math.inf
    return abs(lhs - rhs) / abs(lhs)


def mazya_chain_bound(ps: ParamSet, g: ProfileGrid, mazya_estimate: float) -> float:
    """Slack of the triangle-inequality bound linking S_{a,b,b} to M_a.

    Returns (int |y|^a|z|^-b |grad v|^p)^(1/p) + |b|/p (int |y|^a|z|^(-b-p)|v|^p)^(1/p)
    minus M^(1/p) (int |y|^(-d+qH_a) |z|^(-bq/p) |v|^q)^(1/q).
    """
    _check_grid(ps, g)
    if not cylindrical_admissible(ps):
        raise InadmissibleBase("chain bound needs the cylindrical admissibility conditions")
    if not ps.b < ps.p * ps.h_of(ps.a):
        raise InadmissibleBase(f"need b < pH_a = {ps.p * ps.h_of(ps.a):g}")
    p, q = ps.p, ps.q
    grad = mesh._gradient_integral(g, WeightSpec(ps.a, -ps.b), p)
    hardy = mesh._function_integral(g, WeightSpec(ps.a, -ps.b - p), p)
    den = mesh._function_integral(g, WeightSpec(-ps.d + q * ps.h_of(ps.a), -ps.b * q / p), q)
    if not den > ZERO_DENOMINATOR:
        raise ZeroDenominator(f"denominator integral {den:g} vanishes")
    lhs = grad ** (1 / p) + abs(ps.b) / p * hardy ** (1 / p)
    return lhs - mazya_estimate ** (1 / p) * den ** (1 / q)
