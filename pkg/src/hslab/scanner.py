"""Parameter sweeps over gamma and over the bottom-case b, and the regime table."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .families import SupportOverlap, translate_family_quotient
from .minimizer import (Concentration, Diverged, MeshSpec, MinimizeResult, NotPositive, SolverConfig,
                        estimate_mazya, minimize_jb, minimize_quotient)
from .params import InadmissibleBase, ParamSet, Verdict, classify, positivity, regime_of

# relative solver-noise band for monotonicity and equality checks
GAMMA_NOISE = 0.02
BOTTOM_NOISE = 0.03
# translation distance used for the escape-along-the-singular-set bound, in units of the grid support
TRANSLATE_FACTOR = 50.0


class SweepAxis(str, Enum):
    GAMMA = "Gamma"
    B = "B"
    Q = "Q"
    A = "A"


@dataclass(frozen=True)
class SweepPoint:
    param: float
    estimate: float
    converged: bool
    flag: str
    error: str | None = None


@dataclass
class SweepResult:
    axis: SweepAxis
    points: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    bstar_estimate: float | None = None
    mazya_estimate: float | None = None
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["param", "estimate", "converged", "flag"])
        for pt in self.points:
            writer.writerow([f"{pt.param:.17g}", f"{pt.estimate:.17g}", str(pt.converged).lower(), pt.flag])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    def sidecar(self) -> dict:
        return {
            "axis": self.axis.value,
            "bstar_estimate": self.bstar_estimate,
            "mazya_estimate": self.mazya_estimate,
            "violations": self.violations,
            "verdicts": [
                {"param": pt.param, **v.to_dict(), "error": pt.error}
                for pt, v in zip(self.points, self.verdicts)
            ],
        }

    def to_json(self, target=None) -> str:
        text = json.dumps(self.sidecar(), indent=2, default=float)
        if target is not None:
            Path(target).write_text(text)
        return text


def _failed(param: float, exc: Exception) -> SweepPoint:
    return SweepPoint(param, math.nan, False, type(exc).__name__, str(exc))


def _run_gamma(args) -> SweepPoint:
    ps, cfg, mesh_spec, init = args
    try:
        if not positivity(ps):
            raise NotPositive(f"gamma={ps.gamma:g} < b={ps.b:g}: the optimal constant is zero")
        res = minimize_quotient(ps, cfg, init, mesh_spec)
    except (NotPositive, Diverged, InadmissibleBase, ValueError) as exc:
        return _failed(ps.gamma, exc)
    return SweepPoint(ps.gamma, res.constant_estimate, res.converged, res.concentration_flag.value)


def _map(func, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, jobs))
    return [func(job) for job in jobs]


def sweep_gamma(ps_base: ParamSet, gammas, cfg: SolverConfig | None = None, *,
                mesh_spec: MeshSpec | None = None, init="GaussianBump", workers: int = 1) -> SweepResult:
    """Estimate S_{a,b,gamma}(q) along gamma; decreases beyond 2% are recorded as violations."""
    cfg = cfg or SolverConfig()
    values = sorted(float(g) for g in gammas)
    params = [ps_base.replace(gamma=g) for g in values]
    points = _map(_run_gamma, [(ps, cfg, mesh_spec, init) for ps in params], workers)
    result = SweepResult(SweepAxis.GAMMA, points, [classify(ps) for ps in params])
    valid = [pt for pt in points if pt.error is None]
    for lo, hi in zip(valid, valid[1:]):
        if hi.estimate < lo.estimate * (1 - GAMMA_NOISE):
            result.violations.append(
                f"estimate drops from {lo.estimate:.6g} at gamma={lo.param:g} to {hi.estimate:.6g} at gamma={hi.param:g}")
    return result


def translation_bound(ps: ParamSet, base: MinimizeResult) -> float:
    """Quotient of the Maz'ya profile translated far along the singular set (an upper bound)."""
    from .families import support_radius

    h = TRANSLATE_FACTOR * max(support_radius(base.profile), 1.0)
    return translate_family_quotient(ps, base.profile, h).quotient


def _run_bottom(args) -> SweepPoint:
    ps, cfg, mesh_spec, init, mazya = args
    try:
        res = minimize_jb(ps, cfg, init, mesh_spec)
    except (NotPositive, Diverged, InadmissibleBase, ValueError) as exc:
        return _failed(ps.b, exc)
    estimate, flag = res.constant_estimate, res.concentration_flag.value
    if mazya is not None:
        try:
            bound = translation_bound(ps, mazya)
        except (SupportOverlap, InadmissibleBase):
            bound = math.inf
        if bound < estimate:
            estimate, flag = bound, Concentration.TOWARD_INFINITY.value
    return SweepPoint(ps.b, estimate, res.converged, flag)


def sweep_bottom_b(ps_base: ParamSet, bs, cfg: SolverConfig | None = None, *,
                   mesh_spec: MeshSpec | None = None, init="GaussianBump", workers: int = 1) -> SweepResult:
    """Estimate S_{a,b,b}(q) for p = 2 along b, with M_a(q) and the threshold b*.

    Each point is the smaller of two upper bounds: the J_b minimum over the
    symmetric class, and the Maz'ya minimiser translated far along the
    singular set (which the symmetric grid cannot represent).
    """
    if ps_base.p != 2:
        raise ValueError(f"bottom sweeps need p = 2, got p={ps_base.p}")
    cfg = cfg or SolverConfig()
    values = sorted(float(b) for b in bs)
    result = SweepResult(SweepAxis.B)
    if not values:
        return result
    mazya = estimate_mazya(ps_base, cfg, init, mesh_spec)
    result.mazya_estimate = mazya.constant_estimate
    params = [ps_base.replace(b=b, gamma=b) for b in values]
    result.points = _map(_run_bottom, [(ps, cfg, mesh_spec, init, mazya) for ps in params], workers)
    result.verdicts = [classify(ps) for ps in params]
    m_est = mazya.constant_estimate
    valid = [pt for pt in result.points if pt.error is None]
    below = [pt.param for pt in valid if pt.estimate < m_est * (1 - BOTTOM_NOISE)]
    result.bstar_estimate = min(below) if below else None
    for pt in valid:
        if pt.param < 0 and abs(pt.estimate - m_est) > BOTTOM_NOISE * m_est:
            result.violations.append(f"b={pt.param:g}: estimate {pt.estimate:.6g} differs from M_a {m_est:.6g}")
    if result.bstar_estimate is not None:
        tail = [pt for pt in valid if pt.param >= result.bstar_estimate]
        for lo, hi in zip(tail, tail[1:]):
            if not hi.estimate < lo.estimate * (1 - BOTTOM_NOISE):
                result.violations.append(
                    f"no strict decrease between b={lo.param:g} ({lo.estimate:.6g}) and b={hi.param:g} ({hi.estimate:.6g})")
    return result


def _table_ref(ps: ParamSet) -> tuple[str, str]:
    """Intro-table row: the compactness obstruction and the theorem it points to."""
    if ps.gamma < ps.b:
        return "none (constant is zero)", "Thm 1"
    if ps.gamma == ps.b:
        return "dilations and translations along Sigma_0", "Thm 3"
    if ps.is_critical:
        return "dilations and translations", "Thm 2 ii"
    return "dilations", "Thm 2 i"


TABLE_COLUMNS = ["d", "k", "p", "q", "a", "b", "gamma", "regime", "positive", "attainability",
                 "compactness_loss", "table_ref", "citations"]


def _row(ps: ParamSet) -> list[str]:
    verdict: Verdict = classify(ps)
    loss, ref = _table_ref(ps)
    nums = [f"{ps.d}", f"{ps.k}"] + [f"{v:g}" for v in (ps.p, ps.q, ps.a, ps.b, ps.gamma)]
    return nums + [regime_of(ps).value, str(verdict.positive).lower(), verdict.attainability.value,
                   loss, ref, "; ".join(verdict.citations)]


def regime_table(ps_list, fmt: str = "markdown") -> str:
    """One row per parameter set: regime, verdict and citations."""
    rows = [_row(ps) for ps in ps_list]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")
    lines = ["| " + " | ".join(TABLE_COLUMNS) + " |", "|" + "---|" * len(TABLE_COLUMNS)]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"
