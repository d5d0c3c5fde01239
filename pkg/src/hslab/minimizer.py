"""Projected descent on discrete Rayleigh quotients.

Plain Euclidean steepest descent is useless on graded grids (the stiffness
matrix has condition numbers far beyond 1e8), so the descent direction is
the gradient measured in the energy inner product of the numerator: the
Euclidean gradient is preconditioned by the factorised p = 2 stiffness
matrix of the numerator weight.  Steps are accepted by Armijo backtracking
and the iterate is clipped to stay nonnegative.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import mesh
from .functionals import DiscreteQuotient, QuotientKind, build_quotient, sobolev_constant
from .mesh import Grading, ProfileGrid
from .params import (InadmissibleBase, ParamSet, admissible_base, cylindrical_admissible,
                     describe_admissibility, hilbert_admissible, positivity)

log = logging.getLogger(__name__)


class Diverged(RuntimeError):
    pass


class NotPositive(ValueError):
    pass


class StepRule(str, Enum):
    FIXED_WITH_BACKTRACKING = "FixedWithBacktracking"


class InitProfile(str, Enum):
    GAUSSIAN_BUMP = "GaussianBump"
    TALENTI_LIKE = "TalentiLike"
    RANDOM = "Random"


class Concentration(str, Enum):
    NONE = "None"
    TOWARD_AXIS = "TowardAxis"
    TOWARD_ORIGIN = "TowardOrigin"
    TOWARD_INFINITY = "TowardInfinity"


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 3000
    tol_rel: float = 1e-6
    step_rule: StepRule = StepRule.FIXED_WITH_BACKTRACKING
    renormalize_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise ValueError(f"tol_rel must be positive, got {self.tol_rel}")
        if self.max_iters < 100:
            raise ValueError(f"max_iters must be at least 100, got {self.max_iters}")
        if self.renormalize_every < 1:
            raise ValueError("renormalize_every must be positive")
        object.__setattr__(self, "step_rule", StepRule(self.step_rule))


@dataclass(frozen=True)
class MeshSpec:
    nr: int = 128
    ns: int = 128
    R_max: float = 20.0
    grading: Grading = Grading.LOG_GRADED
    ratio: float = mesh.DEFAULT_RATIO

    def build(self, d: int, k: int) -> ProfileGrid:
        return mesh.build_grid(self.nr, self.ns, self.R_max, self.grading, d=d, k=k, ratio=self.ratio)


@dataclass
class MinimizeResult:
    constant_estimate: float
    profile: ProfileGrid
    iterations: int
    trace: list = field(default_factory=list)
    converged: bool = False
    concentration_flag: Concentration = Concentration.NONE

    def trace_csv(self, target=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "quotient"])
        for it, val in self.trace:
            writer.writerow([it, f"{val:.17g}"])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text


# regularisation of |grad u|^{p-2} for p != 2, relative to the profile scale
DELTA_REL = 1e-8
ARMIJO = 1e-4
MAX_HALVINGS = 40
MAX_FAILURES = 50
# lower bound on |grad u| in the preconditioner, relative to |u| / distance
LAG_FLOOR = 1e-2
WINDOW = 50


def initial_profile(g: ProfileGrid, init, p: float, seed: int = 0) -> ProfileGrid:
    """Nonnegative starting profile; ``init`` may be a grid or an :class:`InitProfile`."""
    if isinstance(init, ProfileGrid):
        if init.shape != g.shape:
            raise ValueError("initial grid does not match the mesh")
        return init
    kind = InitProfile(init)
    rr, ss = g.mesh()
    scale = g.R_max / 20
    if kind is InitProfile.GAUSSIAN_BUMP:
        c = 0.5 * scale
        vals = np.exp(-((rr - c) ** 2 + (ss - c) ** 2) / scale ** 2)
    elif kind is InitProfile.TALENTI_LIKE:
        rho = np.hypot(rr, ss) / scale
        if p < g.d:
            vals = (1 + rho ** (p / (p - 1))) ** (-(g.d - p) / p)
        else:
            vals = np.exp(-rho ** 2)
    else:
        rng = np.random.default_rng(seed)
        vals = np.zeros_like(rr)
        for _ in range(3):
            cr, cs = rng.uniform(0, 2 * scale, size=2)
            width = scale * rng.uniform(0.5, 2.0)
            vals += rng.uniform(0.5, 1.5) * np.exp(-((rr - cr) ** 2 + (ss - cs) ** 2) / width ** 2)
    vals[-1, :] = 0
    vals[:, -1] = 0
    return g.with_values(vals)


class _Descent:
    """Preconditioned projected descent on a problem exposing ``gradient`` and ``parts``.

    The preconditioner is the quadratic form op^T diag(w) op with w the cell
    weights times the lagged p-Laplacian factor (|grad u|^2 + floor^2)^{(p-2)/2};
    for p = 2 it is the exact numerator form and is factorised once.
    """

    def __init__(self, problem, cell_radius: np.ndarray, free: np.ndarray, refresh_every: int = 10):
        self.problem = problem
        self.free = free
        self.cell_radius = cell_radius.ravel()
        self.nblocks = problem.op.shape[0] // self.cell_radius.size
        self.abs_op = abs(problem.op)
        # ghost cells next to the axis have empty rows
        self.row_count = np.maximum(self.abs_op @ np.ones(problem.op.shape[1]), 1e-300)
        self.refresh_every = refresh_every if problem.p != 2 else 0
        self.lu = None

    def factorize(self, u: np.ndarray):
        prob = self.problem
        weights = prob.cell_flat.copy()
        if prob.p != 2:
            ncell = self.cell_radius.size
            grad2 = np.sum((prob.op @ u).reshape(self.nblocks, ncell) ** 2, axis=0)
            ubar = ((self.abs_op @ np.abs(u)) / self.row_count).reshape(self.nblocks, ncell).mean(axis=0)
            ubar = np.maximum(ubar, 1e-12 * np.max(np.abs(u)))
            floor2 = (LAG_FLOOR * ubar / self.cell_radius) ** 2
            weights = weights * (prob.p / 2) * (grad2 + floor2 + prob.delta ** 2) ** (prob.p / 2 - 1)
        mat = prob.op.T @ sp.diags(np.tile(weights, self.nblocks)) @ prob.op
        potential = getattr(prob, "potential", None)
        if potential is not None:
            # only the positive part keeps the preconditioner definite
            mat = mat + sp.diags(np.maximum(potential.ravel(), 0.0))
        k_free = mat.tocsr()[self.free][:, self.free].tocsc()
        # graded weights span many decades; symmetric diagonal scaling keeps the factorisation sane
        self.scale = 1 / np.sqrt(k_free.diagonal())
        scaled = sp.diags(self.scale) @ k_free @ sp.diags(self.scale)
        self.lu = splu((scaled + 1e-12 * sp.identity(scaled.shape[0])).tocsc())

    def precondition(self, vec: np.ndarray) -> np.ndarray:
        return self.scale * self.lu.solve(self.scale * vec)

    def run(self, u0: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, list, bool, int]:
        prob = self.problem
        free = self.free
        u = np.zeros_like(u0)
        u[free] = np.maximum(u0[free], 0)
        u = self._normalize(u)
        q_val, grad = prob.gradient(u)
        trace = [(0, q_val)]
        best_u, best_q = u.copy(), q_val
        step = 0.5
        failures = 0
        converged = False
        self.exit_reason = "iteration limit"
        it = 0
        for it in range(1, cfg.max_iters + 1):
            if self.lu is None or (self.refresh_every and it % self.refresh_every == 1):
                self.factorize(u)
            g_free = grad[free]
            direction = -self.precondition(g_free)
            # components pinned at zero by the clipping cannot move further down
            direction[(u[free] <= 0) & (direction < 0)] = 0
            slope = float(g_free @ direction)
            if not slope < 0:
                self.exit_reason = "stationary"
                converged = True
                break
            accepted = False
            trial_step = step
            q_trial = math.inf
            for _ in range(MAX_HALVINGS):
                trial = u.copy()
                trial[free] = np.maximum(u[free] + trial_step * direction, 0)
                num, den = prob.parts(trial)
                if den > 0:
                    q_trial = num / den ** prob.power
                    decrease = float(g_free @ (trial[free] - u[free]))
                    if q_trial <= q_val + ARMIJO * min(decrease, 0.0) and q_trial < q_val:
                        accepted = True
                        break
                trial_step *= 0.5
            if not accepted:
                # finite trials that never decrease mean the iterate is stationary to roundoff
                if math.isfinite(q_trial):
                    self.exit_reason = f"line search stalled, slope {slope:.3g}"
                    converged = True
                    break
                failures += 1
                if failures >= MAX_FAILURES:
                    raise Diverged(f"line search failed {failures} times in a row at iteration {it}")
                step = 0.5
                continue
            failures = 0
            u = trial
            step = min(trial_step * 1.5, 4.0)
            if it % cfg.renormalize_every == 0:
                u = self._normalize(u)
            q_val, grad = prob.gradient(u)
            trace.append((it, q_val))
            if q_val < best_q:
                best_q, best_u = q_val, u.copy()
            if len(trace) > WINDOW:
                old = trace[-1 - WINDOW][1]
                if (old - q_val) <= cfg.tol_rel * abs(q_val):
                    self.exit_reason = "relative decrease below tolerance"
                    converged = True
                    break
        if trace[-1][1] > best_q:
            trace.append((it, best_q))
        log.debug("descent stopped after %d iterations: %s", it, self.exit_reason)
        return best_u, trace, converged, it

    def _normalize(self, u: np.ndarray) -> np.ndarray:
        _, den = self.problem.parts(u)
        if not den > 0:
            raise Diverged("profile collapsed to zero")
        return u / den ** (1 / self.problem.f_power)


def concentration_flag(problem: DiscreteQuotient, u: np.ndarray, share: float = 0.9) -> Concentration:
    """Label where the denominator mass sits: outer 10%, inner 10% block, or near the axis."""
    nr, ns = problem.grid.shape
    mass = (problem.den_mass.ravel() * np.abs(u) ** problem.f_power).reshape(nr, ns)
    total = mass.sum()
    if not total > 0:
        return Concentration.NONE
    cut_r, cut_s = max(1, int(math.ceil(0.1 * nr))), max(1, int(math.ceil(0.1 * ns)))
    outer = mass[nr - cut_r:, :].sum() + mass[: nr - cut_r, ns - cut_s:].sum()
    origin = mass[:cut_r, :cut_s].sum()
    axis = mass[cut_r:, :cut_s].sum()
    if outer >= share * total:
        return Concentration.TOWARD_INFINITY
    if origin >= share * total:
        return Concentration.TOWARD_ORIGIN
    if axis >= share * total:
        return Concentration.TOWARD_AXIS
    return Concentration.NONE


def _solve(ps: ParamSet, kind: QuotientKind, cfg: SolverConfig, init, mesh_spec: MeshSpec | None,
           label: str) -> MinimizeResult:
    grid = init if isinstance(init, ProfileGrid) else (mesh_spec or MeshSpec()).build(ps.d, ps.k)
    start = initial_profile(grid, init, ps.p, cfg.seed)
    delta = 0.0
    if ps.p != 2:
        delta = DELTA_REL * float(np.max(np.abs(start.values))) / grid.R_max
    problem = build_quotient(ps, grid, kind, delta=delta)
    free = np.ones(grid.shape, dtype=bool)
    free[-1, :] = False
    free[:, -1] = False
    free = np.flatnonzero(free)
    rmid, smid = mesh.cell_midpoints(grid)
    descent = _Descent(problem, np.hypot(rmid, smid), free, cfg.renormalize_every)
    u, trace, converged, iters = descent.run(start.values.ravel().astype(float), cfg)
    estimate = trace[-1][1]
    if ps.is_critical:
        log.info("%s: critical exponent, result is an upper-bound estimate", label)
    log.info("%s: estimate %.8g after %d iterations (converged=%s)", label, estimate, iters, converged)
    flag = concentration_flag(problem, u)
    return MinimizeResult(estimate, grid.with_values(u.reshape(grid.shape)), iters, trace, converged, flag)


def minimize_quotient(ps: ParamSet, cfg: SolverConfig | None = None, init=InitProfile.GAUSSIAN_BUMP,
                      mesh_spec: MeshSpec | None = None) -> MinimizeResult:
    """Estimate S_{a,b,gamma}(q) over the cylindrically symmetric class."""
    cfg = cfg or SolverConfig()
    if not admissible_base(ps):
        raise NotPositive(describe_admissibility(ps))
    if not positivity(ps):
        raise NotPositive("optimal constant is zero: need (d - p) q <= d p and gamma >= b")
    return _solve(ps, QuotientKind.HARDY_SOBOLEV, cfg, init, mesh_spec, "S_{a,b,gamma}")


def estimate_mazya(ps_cyl: ParamSet, cfg: SolverConfig | None = None, init=InitProfile.GAUSSIAN_BUMP,
                   mesh_spec: MeshSpec | None = None) -> MinimizeResult:
    """Estimate the purely cylindrical constant M_a(q); b and gamma are ignored."""
    cfg = cfg or SolverConfig()
    ps = ps_cyl.replace(b=0.0, gamma=0.0)
    if not cylindrical_admissible(ps):
        raise NotPositive("M_a(q) needs k + a > 0, q H_a > d - k and (d - p) q <= d p")
    return _solve(ps, QuotientKind.MAZYA, cfg, init, mesh_spec, "M_a")


def minimize_jb(ps: ParamSet, cfg: SolverConfig | None = None, init=InitProfile.GAUSSIAN_BUMP,
                mesh_spec: MeshSpec | None = None) -> MinimizeResult:
    """Estimate S_{a,b,b}(q) through the transformed functional J_b (p = 2)."""
    cfg = cfg or SolverConfig()
    if ps.p != 2:
        raise ValueError("J_b is only defined for p = 2")
    if not ps.b < 2 * ps.h_of(ps.a):
        raise InadmissibleBase(f"need b < 2H_a = {2 * ps.h_of(ps.a):g}, got b={ps.b}")
    if not hilbert_admissible(ps):
        raise NotPositive("J_b needs the p = 2 cylindrical admissibility conditions")
    return _solve(ps.replace(gamma=ps.b), QuotientKind.BOTTOM_JB, cfg, init, mesh_spec, "J_b")


def euler_lagrange_residual(ps: ParamSet, result: MinimizeResult,
                            kind: QuotientKind = QuotientKind.HARDY_SOBOLEV) -> float:
    """Relative dual-norm residual of L u - lambda w |u|^{q-2} u at the free nodes."""
    g = result.profile
    problem = build_quotient(ps, g, kind)
    u = g.values.ravel()
    num, den = problem.parts(u)
    residual = problem.numerator_gradient(u) - problem.power * (num / den) * problem.denominator_gradient(u)
    scale = problem.numerator_gradient(u)
    free = np.ones(g.shape, dtype=bool)
    free[-1, :] = False
    free[:, -1] = False
    free = free.ravel()
    lumped = mesh.area_factor(g) * mesh.nodal_masses(g, mesh.WeightSpec(ps.a, -ps.b)).ravel()
    norm = lambda vec: math.sqrt(float(np.sum(vec[free] ** 2 / lumped[free])))
    return norm(residual) / norm(scale)


# radial problems on a 1D logarithmic grid

@dataclass
class RadialQuotient:
    """Purely spherical quotient int rho^{d-1+c}|u'|^p / (int rho^{d-1+c p*/p}|u|^{p*})^{p/p*}."""

    nodes: np.ndarray
    d: int
    p: float
    c: float
    delta: float = 0.0

    def __post_init__(self):
        n = self.nodes.size
        self.q = self.d * self.p / (self.d - self.p)
        self.f_power = self.q
        self.power = self.p / self.q
        lo = np.concatenate([[0.0], self.nodes[:-1]])
        hi = self.nodes
        width = hi - lo
        sphere = mesh.sphere_area(self.d)
        self.cell_flat = sphere * mesh.power_moment(lo, hi, self.d + self.c)
        ext = np.maximum(np.arange(n + 1) - 1, 0)
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([ext[1:], ext[:-1]], axis=1).ravel()
        vals = np.stack([1 / width, -1 / width], axis=1).ravel()
        self.op = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        expo = self.d - 1 + self.c * self.q / self.p
        m0 = mesh.power_moment(lo, hi, expo + 1)
        m1 = mesh.power_moment(lo, hi, expo + 2)
        right = (m1 - lo * m0) / width
        left = m0 - right
        mass = np.zeros(n + 1)
        mass[:-1] += left
        mass[1:] += right
        mass[1] += mass[0]
        self.den_mass = sphere * mass[1:]

    def parts(self, u):
        grad2 = (self.op @ u) ** 2 + self.delta ** 2
        num = float(self.cell_flat @ grad2 ** (self.p / 2))
        den = float(self.den_mass @ np.abs(u) ** self.q)
        return num, den

    def gradient(self, u):
        num, den = self.parts(u)
        du = self.op @ u
        grad2 = du ** 2 + self.delta ** 2
        gnum = self.op.T @ (self.p * self.cell_flat * grad2 ** (self.p / 2 - 1) * du)
        gden = self.q * self.den_mass * np.abs(u) ** (self.q - 1) * np.sign(u)
        scale = den ** -self.power
        return num * scale, scale * (gnum - self.power * (num / den) * gden)


def radial_closed_form(ps: ParamSet) -> float:
    """[(d-p+a-b)/(d-p)]^{p-p/d} S: infimum of the radial quotient with weight |z|^{a-b}."""
    bracket = (ps.d - ps.p + ps.a - ps.b) / (ps.d - ps.p)
    return bracket ** (ps.p - ps.p / ps.d) * sobolev_constant(ps.d, ps.p)


def minimize_radial(ps: ParamSet, cfg: SolverConfig | None = None, n: int = 4000,
                    span: tuple[float, float] = (1e-12, 1e12)) -> MinimizeResult:
    """Minimise over radial profiles u(|z|) on a logarithmic 1D grid.

    The returned profile is a thin (n x 8) grid whose first s-column holds
    the radial values against the radial nodes, for storage only.
    """
    cfg = cfg or SolverConfig()
    if not ps.p < ps.d:
        raise NotPositive("radial problem needs p < d")
    if not ps.a - ps.b > -(ps.d - ps.p):
        raise NotPositive("radial problem needs a - b > -(d - p)")
    lo, hi = span
    ratio = (hi / lo) ** (1 / (n - 1))
    nodes = mesh.axis_nodes(n, hi, Grading.LOG_GRADED, ratio=min(ratio, 2.0))
    u0 = (1 + nodes ** (ps.p / (ps.p - 1))) ** (-(ps.d - ps.p) / ps.p)
    u0[-1] = 0
    problem = RadialQuotient(nodes, ps.d, ps.p, ps.a - ps.b)
    lo = np.concatenate([[0.0], nodes[:-1]])
    mid = 0.5 * (lo + nodes)
    if ps.p < 2:
        # relative to the local gradient scale u / rho, so the far field is not swamped
        ubar = 0.5 * (np.concatenate([[u0[0]], u0[:-1]]) + u0)
        problem.delta = DELTA_REL * np.maximum(ubar, 1e-300) / mid
    free = np.arange(n - 1)
    descent = _Descent(problem, mid, free, refresh_every=1)
    u, trace, converged, iters = descent.run(u0, cfg)
    flag = Concentration.NONE
    mass = problem.den_mass * np.abs(u) ** problem.q
    cut = int(math.ceil(0.1 * n))
    if mass[-cut:].sum() >= 0.9 * mass.sum():
        flag = Concentration.TOWARD_INFINITY
    elif mass[:cut].sum() >= 0.9 * mass.sum():
        flag = Concentration.TOWARD_ORIGIN
    k = min(ps.k, ps.d - 1)
    s_nodes = mesh.axis_nodes(8, hi, Grading.UNIFORM)
    values = np.zeros((n, 8))
    values[:, 0] = u
    profile = ProfileGrid(nodes, s_nodes, values, ps.d, k, Grading.LOG_GRADED, hi)
    log.info("radial: estimate %.8g after %d iterations", trace[-1][1], iters)
    return MinimizeResult(trace[-1][1], profile, iters, trace, converged, flag)
