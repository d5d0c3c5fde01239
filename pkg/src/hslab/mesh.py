"""Symmetry-reduced grids in (r, s) = (|x|, |y|) and weighted quadrature.

Nodes never sit on the axes.  Every axis direction gets an extra ghost node
at 0 whose value copies the first node, which encodes the no-flux behaviour
at r = 0 and s = 0.  A cell is the rectangle between consecutive extended
nodes.  Inside a cell the geometric factors r^{d-k-1} s^{k-1} and the power
of |y| are integrated exactly, while |z| is frozen at the cell midpoint.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import betaln

DEFAULT_RATIO = 1.08


class BadResolution(ValueError):
    pass


class DivergentWeight(ArithmeticError):
    """A per-cell power integral does not converge at an axis."""


class Divergent(ArithmeticError):
    pass


class Grading(str, Enum):
    UNIFORM = "Uniform"
    LOG_GRADED = "LogGraded"

    @classmethod
    def parse(cls, value) -> "Grading":
        if isinstance(value, Grading):
            return value
        key = str(value).replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key or member.name.replace("_", "").lower() == key:
                return member
        if key == "log":
            return cls.LOG_GRADED
        raise ValueError(f"unknown grading {value!r}")


@dataclass(frozen=True)
class WeightSpec:
    """Weight s^y_exp * (r^2 + s^2)^(z_exp/2), i.e. |y|^y_exp |z|^z_exp."""

    y_exp: float = 0.0
    z_exp: float = 0.0


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    cell_error_estimate: float


@dataclass(frozen=True, eq=False)
class ProfileGrid:
    r_nodes: np.ndarray
    s_nodes: np.ndarray
    values: np.ndarray
    d: int
    k: int
    grading: Grading = Grading.UNIFORM
    R_max: float = field(default=0.0)

    def __post_init__(self):
        r = np.array(self.r_nodes, dtype=float)
        s = np.array(self.s_nodes, dtype=float)
        u = np.array(self.values, dtype=float)
        if r.ndim != 1 or s.ndim != 1:
            raise ValueError("node arrays must be one-dimensional")
        if r[0] <= 0 or s[0] <= 0 or np.any(np.diff(r) <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if u.shape != (r.size, s.size):
            raise ValueError(f"values shape {u.shape} does not match nodes ({r.size}, {s.size})")
        if self.d <= self.k or self.k < 1:
            raise ValueError(f"grid needs d > k >= 1, got d={self.d}, k={self.k}")
        for arr in (r, s, u):
            arr.setflags(write=False)
        object.__setattr__(self, "r_nodes", r)
        object.__setattr__(self, "s_nodes", s)
        object.__setattr__(self, "values", u)
        object.__setattr__(self, "grading", Grading.parse(self.grading))
        if not self.R_max:
            object.__setattr__(self, "R_max", float(max(r[-1], s[-1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r_nodes, self.s_nodes, indexing="ij")

    def with_values(self, values) -> "ProfileGrid":
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.shape))

    def fill(self, func) -> "ProfileGrid":
        """Populate from ``func(r, s)`` evaluated on the node mesh."""
        rr, ss = self.mesh()
        return self.with_values(func(rr, ss))

    def dilate(self, t: float, power: float = 0.0) -> "ProfileGrid":
        """Grid of z -> t^power u(t z): nodes shrink by t, values scale by t^power."""
        return replace(self, r_nodes=self.r_nodes / t, s_nodes=self.s_nodes / t,
                       values=self.values * t ** power, R_max=self.R_max / t)

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r", "s", "u"])
        for i, r in enumerate(self.r_nodes):
            for j, s in enumerate(self.s_nodes):
                writer.writerow([f"{r:.17g}", f"{s:.17g}", f"{self.values[i, j]:.17g}"])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, d: int, k: int, grading=None, R_max: float | None = None) -> "ProfileGrid":
        text = Path(source).read_text() if not _looks_like_csv(source) else source
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["r", "s", "u"]:
            raise ValueError("profile CSV must start with the header r,s,u")
        data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
        r = np.unique(data[:, 0])
        s = np.unique(data[:, 1])
        if data.shape[0] != r.size * s.size:
            raise ValueError("profile CSV does not describe a tensor grid")
        order = np.lexsort((data[:, 1], data[:, 0]))
        values = data[order, 2].reshape(r.size, s.size)
        if grading is None:
            grading = Grading.UNIFORM if _is_uniform(r) and _is_uniform(s) else Grading.LOG_GRADED
        return cls(r, s, values, d, k, Grading.parse(grading), R_max or float(max(r[-1], s[-1])))


def _looks_like_csv(source) -> bool:
    return isinstance(source, str) and "\n" in source


def _is_uniform(nodes: np.ndarray) -> bool:
    gaps = np.diff(np.concatenate([[0.0], nodes]))
    return bool(np.allclose(gaps, gaps[0], rtol=1e-9))


def axis_nodes(n: int, R_max: float, grading, ratio: float = DEFAULT_RATIO) -> np.ndarray:
    grading = Grading.parse(grading)
    if grading is Grading.UNIFORM:
        return R_max * np.arange(1, n + 1) / n
    if not 1 < ratio <= 2:
        raise ValueError(f"grading ratio must lie in (1, 2], got {ratio}")
    # spacings h0 * ratio^i summing to R_max
    h0 = R_max * (ratio - 1) / (ratio ** n - 1)
    nodes = h0 * (ratio ** np.arange(1, n + 1) - 1) / (ratio - 1)
    nodes[-1] = R_max
    return nodes


def build_grid(nr: int, ns: int, R_max: float, grading=Grading.LOG_GRADED, *,
               d: int = 3, k: int = 1, ratio: float = DEFAULT_RATIO) -> ProfileGrid:
    if nr < 8 or ns < 8:
        raise BadResolution(f"need at least 8 nodes per axis, got nr={nr}, ns={ns}")
    if not R_max > 0:
        raise ValueError(f"R_max must be positive, got {R_max}")
    grading = Grading.parse(grading)
    r = axis_nodes(nr, R_max, grading, ratio)
    s = axis_nodes(ns, R_max, grading, ratio)
    return ProfileGrid(r, s, np.zeros((nr, ns)), d, k, grading, float(R_max))


def sphere_area(m: int) -> float:
    """Surface measure of S^{m-1}; equals 2 for m = 1."""
    return 2 * math.pi ** (m / 2) / math.gamma(m / 2)


def area_factor(g: ProfileGrid) -> float:
    return sphere_area(g.d - g.k) * sphere_area(g.k)


def power_moment(lo: np.ndarray, hi: np.ndarray, m: float) -> np.ndarray:
    """Exact integral of x^(m-1) over [lo, hi], cancellation-free for thin cells."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.empty(np.broadcast(lo, hi).shape)
    at_axis = lo == 0
    if np.any(at_axis):
        if m <= 0:
            raise DivergentWeight(f"x^{m - 1:g} is not integrable at the axis")
        out[at_axis] = hi[at_axis] ** m / m
    inner = ~at_axis
    if np.any(inner):
        l, h = lo[inner], hi[inner]
        log_ratio = np.log(h / l)
        t = m * log_ratio
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(t == 0, 1.0, np.expm1(t) / np.where(t == 0, 1.0, t))
        out[inner] = l ** m * log_ratio * rel
    return out


@dataclass(frozen=True)
class _Axis:
    lo: np.ndarray
    hi: np.ndarray
    mid: np.ndarray
    width: np.ndarray


def _axis(nodes: np.ndarray) -> _Axis:
    lo = np.concatenate([[0.0], nodes[:-1]])
    return _Axis(lo, nodes, 0.5 * (lo + nodes), nodes - lo)


def _hat_moments(ax: _Axis, expo: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrals of x^expo against the two linear hats of every cell, plus the plain moment."""
    m0 = power_moment(ax.lo, ax.hi, expo + 1)
    m1 = power_moment(ax.lo, ax.hi, expo + 2)
    right = (m1 - ax.lo * m0) / ax.width
    return m0 - right, right, m0


def cell_midpoints(g: ProfileGrid) -> tuple[np.ndarray, np.ndarray]:
    ra, sa = _axis(g.r_nodes), _axis(g.s_nodes)
    return np.meshgrid(ra.mid, sa.mid, indexing="ij")


def _cell_factor(g: ProfileGrid, w: WeightSpec, factor=None) -> np.ndarray:
    rc, sc = cell_midpoints(g)
    out = np.hypot(rc, sc) ** w.z_exp if w.z_exp != 0 else np.ones_like(rc)
    if factor is not None:
        out = out * (factor(rc, sc) if callable(factor) else factor)
    return out


def cell_weights(g: ProfileGrid, w: WeightSpec, factor=None) -> np.ndarray:
    """Integral of the weight times r^{d-k-1} s^{k-1} over every cell, without sphere areas."""
    ra, sa = _axis(g.r_nodes), _axis(g.s_nodes)
    mr = power_moment(ra.lo, ra.hi, g.d - g.k)
    ms = power_moment(sa.lo, sa.hi, w.y_exp + g.k)
    return _cell_factor(g, w, factor) * np.outer(mr, ms)


def nodal_masses(g: ProfileGrid, w: WeightSpec, factor=None) -> np.ndarray:
    """Masses m_n with  integral of weight * f  ~  sum_n m_n f_n  for bilinear f (ghosts folded in)."""
    ra, sa = _axis(g.r_nodes), _axis(g.s_nodes)
    lr, rr, _ = _hat_moments(ra, g.d - g.k - 1)
    ls, rs, _ = _hat_moments(sa, w.y_exp + g.k - 1)
    zf = _cell_factor(g, w, factor)
    nr, ns = g.shape
    ext = np.zeros((nr + 1, ns + 1))
    ext[:-1, :-1] += zf * np.outer(lr, ls)
    ext[1:, :-1] += zf * np.outer(rr, ls)
    ext[:-1, 1:] += zf * np.outer(lr, rs)
    ext[1:, 1:] += zf * np.outer(rr, rs)
    ext[1, :] += ext[0, :]
    ext[:, 1] += ext[:, 0]
    return ext[1:, 1:]


def edge_operator(g: ProfileGrid) -> sp.csr_matrix:
    """Sparse map from nodal values to scaled edge differences, four blocks of cells.

    Blocks are the r-differences on the lower and upper cell edges and the
    s-differences on the left and right edges, each scaled by sqrt(1/2), so
    that the per-cell squared gradient is the sum of the four squared blocks.
    """
    nr, ns = g.shape
    ra, sa = _axis(g.r_nodes), _axis(g.s_nodes)
    # extended index e maps to node max(e - 1, 0)
    ext_r = np.maximum(np.arange(nr + 1) - 1, 0)
    ext_s = np.maximum(np.arange(ns + 1) - 1, 0)
    ii, jj = np.meshgrid(np.arange(nr), np.arange(ns), indexing="ij")
    cell = (ii * ns + jj).ravel()
    ncell = nr * ns
    scale = math.sqrt(0.5)

    def node(ei, ej):
        return (ext_r[ei] * ns + ext_s[ej]).ravel()

    inv_hr = (scale / ra.width)[ii].ravel()
    inv_hs = (scale / sa.width)[jj].ravel()
    rows, cols, vals = [], [], []
    edges = [
        (ii, jj, ii + 1, jj, inv_hr),
        (ii, jj + 1, ii + 1, jj + 1, inv_hr),
        (ii, jj, ii, jj + 1, inv_hs),
        (ii + 1, jj, ii + 1, jj + 1, inv_hs),
    ]
    for block, (a_i, a_j, b_i, b_j, inv_h) in enumerate(edges):
        row = block * ncell + cell
        rows += [row, row]
        cols += [node(b_i, b_j), node(a_i, a_j)]
        vals += [inv_h, -inv_h]
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(4 * ncell, nr * ns))
    return mat.tocsr()


def squared_gradient(g: ProfileGrid, op: sp.csr_matrix | None = None) -> np.ndarray:
    op = edge_operator(g) if op is None else op
    edges = (op @ g.values.ravel()).reshape(4, *g.shape)
    return np.sum(edges ** 2, axis=0)


def coarsen(g: ProfileGrid) -> ProfileGrid:
    """Every other node per axis, always keeping the outermost one."""
    ir = np.arange(g.shape[0] - 1, -1, -2)[::-1]
    js = np.arange(g.shape[1] - 1, -1, -2)[::-1]
    return replace(g, r_nodes=g.r_nodes[ir], s_nodes=g.s_nodes[js], values=g.values[np.ix_(ir, js)])


def _function_integral(g: ProfileGrid, w: WeightSpec, f_power: float, factor=None) -> float:
    masses = nodal_masses(g, w, factor)
    return area_factor(g) * float(np.sum(masses * np.abs(g.values) ** f_power))


def _gradient_integral(g: ProfileGrid, w: WeightSpec, p: float, factor=None) -> float:
    weights = cell_weights(g, w, factor)
    return area_factor(g) * float(np.sum(weights * squared_gradient(g) ** (p / 2)))


def integrate_weighted(g: ProfileGrid, w: WeightSpec, f_power: float) -> QuadratureResult:
    value = _function_integral(g, w, f_power)
    coarse = _function_integral(coarsen(g), w, f_power)
    if not math.isfinite(value):
        raise DivergentWeight("weighted integral is not finite")
    return QuadratureResult(value, abs(value - coarse))


def gradient_norm_integral(g: ProfileGrid, w: WeightSpec, p: float) -> QuadratureResult:
    if p <= 1:
        raise ValueError(f"need p > 1, got {p}")
    value = _gradient_integral(g, w, p)
    coarse = _gradient_integral(coarsen(g), w, p)
    if not math.isfinite(value):
        raise DivergentWeight("weighted gradient integral is not finite")
    return QuadratureResult(value, abs(value - coarse))


def sphere_average_projection(dim_d: int, dim_k: int, exponent: float) -> float:
    """Mean of |P sigma|^t over the unit sphere of R^d, P the projection onto R^k."""
    if not dim_d > dim_k >= 1:
        raise ValueError(f"need d > k >= 1, got d={dim_d}, k={dim_k}")
    if exponent <= -dim_k:
        raise Divergent(f"|y|^{exponent:g} is not integrable on the sphere for k={dim_k}")
    half = (dim_d - dim_k) / 2
    return math.exp(betaln((exponent + dim_k) / 2, half) - betaln(dim_k / 2, half))


def g_a_factor(ps) -> float:
    """Hoelder ratio between the |y|^a and |y|^{a p*/p} sphere means; 1 iff a = 0."""
    if not ps.p < ps.d:
        raise ValueError("G_a needs p < d")
    if ps.a <= -ps.k:
        raise Divergent(f"need a > -k, got a={ps.a}")
    if ps.a == 0:
        return 1.0
    ratio = ps.p_star / ps.p
    num = sphere_average_projection(ps.d, ps.k, ps.a)
    den = sphere_average_projection(ps.d, ps.k, ps.a * ratio)
    return num / den ** (1 / ratio)
