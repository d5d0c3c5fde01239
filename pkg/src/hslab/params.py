"""Exponent bookkeeping, admissibility tests and attainability verdicts.

A problem is described by the tuple ``(d, k, p, q, a, b, gamma)``: points of
R^d are split as z = (x, y) with x in R^{d-k}, y in R^k, the numerator weight
is |y|^a |z|^{-b} and the denominator weight is |y|^theta |z|^{-gamma q / p}.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum


class ParamError(ValueError):
    """Malformed exponent tuple."""


class InadmissibleBase(ValueError):
    """The weights are not locally integrable for this exponent tuple."""


class OutOfRange(ValueError):
    pass


def _close(x: float, y: float) -> bool:
    return math.isclose(x, y, rel_tol=1e-12, abs_tol=1e-12)


@dataclass(frozen=True)
class ParamSet:
    d: int
    k: int
    p: float
    q: float
    a: float = 0.0
    b: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("p", "q", "a", "b", "gamma"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ParamError(f"{name} must be a finite real, got {val!r}")
            object.__setattr__(self, name, float(val))
        for name in ("d", "k"):
            val = getattr(self, name)
            if isinstance(val, float) and val.is_integer():
                val = int(val)
            if not isinstance(val, int) or isinstance(val, bool):
                raise ParamError(f"{name} must be an integer, got {val!r}")
            object.__setattr__(self, name, val)
        if self.d < 2:
            raise ParamError(f"need d >= 2, got d={self.d}")
        if not 1 <= self.k <= self.d:
            raise ParamError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.p <= 1:
            raise ParamError(f"need p > 1, got p={self.p}")
        if self.q <= self.p:
            raise ParamError(f"need q > p, got q={self.q}, p={self.p}")

    # derived quantities

    def h_of(self, t: float) -> float:
        return (self.d - self.p + t) / self.p

    @property
    def theta(self) -> float:
        return -self.d + self.q * self.h_of(self.a - self.b + self.gamma)

    @property
    def p_star(self) -> float:
        return critical_exponent(self.d, self.p)

    @property
    def p_star_eff(self) -> float:
        return critical_exponent(self.d + max(self.a, 0.0), self.p)

    @property
    def hardy_constant(self) -> float:
        h = self.h_of(self.a - self.b)
        return h ** self.p if h > 0 else 0.0

    @property
    def is_critical(self) -> bool:
        return self.p < self.d and _close(self.q, self.p_star)

    @property
    def is_bottom(self) -> bool:
        return _close(self.gamma, self.b)

    def replace(self, **changes) -> "ParamSet":
        data = asdict(self)
        data.update(changes)
        return ParamSet(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({key: _json_number(val) for key, val in asdict(self).items()})

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSet":
        missing = [key for key in ("d", "k", "p", "q") if key not in data]
        if missing:
            raise ParamError(f"missing key {missing[0]!r}")
        d, k, p = int(data["d"]), int(data["k"]), float(data["p"])
        a = float(data.get("a", 0.0))
        q = resolve_q(data["q"], d, p, a)
        return cls(d=d, k=k, p=p, q=q, a=a,
                   b=float(data.get("b", 0.0)), gamma=float(data.get("gamma", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "ParamSet":
        return cls.from_dict(json.loads(text))


def _json_number(val):
    if isinstance(val, float) and val.is_integer():
        return val
    return float(f"{val:.17g}")


def critical_exponent(dim: float, p: float) -> float:
    """Sobolev exponent dim*p/(dim-p), infinite when p >= dim."""
    if p >= dim:
        return math.inf
    return dim * p / (dim - p)


def resolve_q(value, d: int, p: float, a: float = 0.0) -> float:
    """Turn ``"pstar"``/``"pstar_eff"`` or a number into a finite exponent."""
    if isinstance(value, str):
        tag = value.strip().lower()
        if tag == "pstar":
            q = critical_exponent(d, p)
        elif tag == "pstar_eff":
            q = critical_exponent(d + max(a, 0.0), p)
        else:
            try:
                q = float(tag)
            except ValueError:
                raise ParamError(f"q must be a number, 'pstar' or 'pstar_eff', got {value!r}") from None
        if not math.isfinite(q):
            raise ParamError(f"q={value!r} is infinite for d={d}, p={p}")
        return q
    return float(value)


def admissible_base(ps: ParamSet) -> bool:
    return (ps.k + ps.a > 0
            and ps.b < ps.d - ps.p + ps.a
            and ps.q * ps.h_of(ps.a - ps.b + ps.gamma) > ps.d - ps.k)


def positivity(ps: ParamSet) -> bool:
    if not admissible_base(ps):
        raise InadmissibleBase(describe_admissibility(ps))
    return (ps.d - ps.p) * ps.q <= ps.d * ps.p * (1 + 1e-14) and ps.gamma >= ps.b - 1e-12


def describe_admissibility(ps: ParamSet) -> str:
    failed = []
    if not ps.k + ps.a > 0:
        failed.append("k + a > 0")
    if not ps.b < ps.d - ps.p + ps.a:
        failed.append("b < d - p + a")
    if not ps.q * ps.h_of(ps.a - ps.b + ps.gamma) > ps.d - ps.k:
        failed.append("q*H_{a-b+gamma} > d - k")
    if not failed:
        return "admissible"
    return "violated: " + ", ".join(failed)


def cylindrical_admissible(ps: ParamSet) -> bool:
    """Conditions under which the purely cylindrical constant M_a(q) is positive."""
    return (ps.k + ps.a > 0
            and ps.q * ps.h_of(ps.a) > ps.d - ps.k
            and (ps.d - ps.p) * ps.q <= ps.d * ps.p * (1 + 1e-14))


def hilbert_admissible(ps: ParamSet) -> bool:
    """p = 2 version of :func:`cylindrical_admissible` written as in the bottom-case theory."""
    if not _close(ps.p, 2.0):
        return False
    if ps.d == 2:
        return ps.a > 2.0 / ps.q
    two_star = critical_exponent(ps.d, 2.0)
    rhs = 2 * (ps.d - ps.k) * (1 / ps.q - 1 / two_star)
    return ps.a + ps.k * 2 / two_star > rhs >= -1e-14


def caffarelli_silvestre_params(n: int, s: float) -> ParamSet:
    """Exponents of the extension-type inequality on R^{n+1} with weight |y|^{1-2s}."""
    if n < 2:
        raise OutOfRange(f"need n >= 2, got n={n}")
    if not 0.5 <= s < 1:
        raise OutOfRange(f"need 1/2 <= s < 1, got s={s}")
    q = 2 * (n + 1) / (n - 1)
    gamma = -2 * (1 - 2 * s) / ((n - 1) * (q / 2))
    return ParamSet(d=n + 1, k=1, p=2.0, q=q, a=1 - 2 * s, b=0.0, gamma=gamma + 0.0)


class Regime(str, Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    BOTTOM_SUBCRITICAL = "BottomSubcritical"
    BOTTOM_CRITICAL = "BottomCritical"
    PURELY_CYLINDRICAL = "PurelyCylindrical"
    PURELY_SPHERICAL = "PurelySpherical"
    INVALID = "Invalid"


class Attainability(str, Enum):
    ACHIEVED = "Achieved"
    NOT_ACHIEVED = "NotAchieved"
    CONDITIONAL = "ConditionalOnStrictInequality"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Verdict:
    positive: bool
    regime: Regime
    attainability: Attainability
    condition_note: str = ""
    citations: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "positive": self.positive,
            "regime": self.regime.value,
            "attainability": self.attainability.value,
            "condition_note": self.condition_note,
            "citations": list(self.citations),
        }


def regime_of(ps: ParamSet) -> Regime:
    if ps.k == ps.d or not admissible_base(ps):
        return Regime.INVALID
    if _close(ps.gamma, 0.0) and _close(ps.b, 0.0):
        return Regime.PURELY_CYLINDRICAL
    if _close(ps.a, 0.0) and _close(ps.theta, 0.0):
        return Regime.PURELY_SPHERICAL
    if ps.is_bottom:
        return Regime.BOTTOM_CRITICAL if ps.is_critical else Regime.BOTTOM_SUBCRITICAL
    return Regime.CRITICAL if ps.is_critical else Regime.SUBCRITICAL


def _hilbert_nonexistence(ps: ParamSet) -> str | None:
    """Tag of the H1-H4 case when S(2*) = S is known not to be achieved."""
    if not (_close(ps.p, 2.0) and ps.d >= 3 and ps.is_critical):
        return None
    if ps.a < 0 or ps.b > 0 or (_close(ps.a, 0.0) and _close(ps.b, 0.0)):
        return None
    if ps.gamma < ps.b - 1e-12:
        return None
    if _close(ps.a, 0.0):
        return "Thm 5.3 H1"
    if ps.k >= 2:
        return "Thm 5.3 H2"
    if ps.d >= 4 and ps.a >= 2:
        return "Thm 5.3 H3"
    if ps.d == 3 and ps.a >= 1:
        return "Thm 5.3 H4"
    return None


def _mazya_critical_status(ps: ParamSet) -> tuple[Attainability, tuple, str]:
    """Attainability of M_a(p*) from the catalogue of known cases."""
    a = ps.a
    if a < 0 and not _close(a, 0.0):
        return Attainability.ACHIEVED, ("Prop B.1",), "a < 0 forces M_a(p*) < S"
    if _close(a, 0.0):
        return Attainability.ACHIEVED, ("Aubin-Talenti",), "M_0(p*) is the Sobolev constant"
    if not _close(ps.p, 2.0):
        return (Attainability.CONDITIONAL, ("Prop B.1",),
                "achieved if M_a(p*) < S; little is known for p != 2 and a > 0")
    if ps.k >= 2:
        return Attainability.NOT_ACHIEVED, ("Prop B.2 i",), "M_a(2*) = S"
    if ps.d >= 4:
        if a < 2:
            return Attainability.ACHIEVED, ("Prop B.2 ii", "Prop B.1"), "M_a(2*) < S for 0 < a < 2"
        return Attainability.NOT_ACHIEVED, ("Prop B.2 ii",), "M_a(2*) = S for a >= 2"
    if a >= 1:
        return Attainability.NOT_ACHIEVED, ("Prop B.2 iii",), "M_a(2*) = S"
    return (Attainability.UNKNOWN, ("Prop B.2",),
            "open case: d = 3, k = 1, 0 < a < 1; whether M_a(2*) < S is not known")


def _windows_critical(ps: ParamSet) -> tuple[list, list]:
    """Epsilon-window results available for the critical problem with gamma > b."""
    tags, notes = [], []
    p_h = ps.p * ps.h_of(ps.a)
    kterm = ps.k * ps.p / ps.p_star + ps.a
    side = ps.b < p_h and (ps.a >= 0 or kterm > 0)
    if side and not _close(ps.a, 0.0) and ps.a <= ps.b + 1e-12:
        tags.append("Thm 4.3 i")
        notes.append("achieved for gamma in (b, b + eps) for some eps > 0")
    if side and _close(ps.a, 0.0) and ps.b > 0:
        tags.append("Thm 4.3 ii")
        notes.append("achieved for gamma in [b, b + eps) for some eps > 0")
    if kterm > 0 and ps.gamma >= p_h:
        tags.append("Thm 4.1 i")
        notes.append(f"achieved for b in (pH_a - eps, pH_a), pH_a = {p_h:.6g}")
    elif kterm <= 0 < ps.k + ps.a:
        edge = min(p_h, ps.gamma + kterm)
        tags.append("Thm 4.1 ii")
        notes.append(f"achieved for b in ({edge:.6g} - eps, {edge:.6g})")
    return tags, notes


def classify(ps: ParamSet) -> Verdict:
    """Attainability verdict for the optimal constant S_{a,b,gamma}(q).

    Unconditional non-existence results take precedence, then unconditional
    existence, then results conditional on a strict energy inequality.
    """
    regime = regime_of(ps)
    if ps.k == ps.d:
        return Verdict(False, regime, Attainability.UNKNOWN,
                       "k = d: weights are purely spherical, outside the cylindrical theory", ())
    if not admissible_base(ps):
        return Verdict(False, regime, Attainability.UNKNOWN,
                       "weights not locally integrable; " + describe_admissibility(ps), ())
    if not positivity(ps):
        if ps.gamma < ps.b:
            note = "S = 0 because gamma < b; no nonzero profile attains 0"
        else:
            note = "S = 0 because q > p*; no nonzero profile attains 0"
        return Verdict(False, regime, Attainability.NOT_ACHIEVED, note, ("Thm 1",))

    def verdict(att, tags, note=""):
        return Verdict(True, regime, att, note, tuple(tags))

    critical = ps.is_critical
    hilbert_tag = _hilbert_nonexistence(ps)
    if hilbert_tag is not None:
        return verdict(Attainability.NOT_ACHIEVED, [hilbert_tag], "S_{a,b,gamma}(2*) = S")

    if not ps.is_bottom:
        if not critical:
            return verdict(Attainability.ACHIEVED, ["Thm 2 i"])
        if _close(ps.a, 0.0) and _close(ps.b, 0.0):
            return verdict(Attainability.NOT_ACHIEVED, ["Thm 4.2 i"],
                           "S_{0,0,gamma}(p*) = S for gamma > 0")
        tags, notes = _windows_critical(ps)
        note = "achieved if S_{a,b,gamma}(p*) < S"
        if notes:
            note += "; " + "; ".join(notes)
        return verdict(Attainability.CONDITIONAL, ["Thm 2 ii"] + tags, note)

    # bottom case gamma = b
    if _close(ps.b, 0.0):
        if not critical:
            return verdict(Attainability.ACHIEVED, ["Prop B.1"], "subcritical Maz'ya problem")
        att, tags, note = _mazya_critical_status(ps)
        return verdict(att, tags, note)

    p_h = ps.p * ps.h_of(ps.a)
    if ps.b >= p_h:
        return verdict(Attainability.UNKNOWN, [], "b >= pH_a lies outside the bottom-case theory")

    if _close(ps.p, 2.0) and hilbert_admissible(ps):
        if ps.b < 0:
            return verdict(Attainability.NOT_ACHIEVED, ["Thm 5.1 i"],
                           "S_{a,b,b}(q) = M_a(q) for b < b*, and b* >= 0")
        if not critical:
            return verdict(Attainability.ACHIEVED, ["Thm 4 i", "Thm 5.1 i"],
                           "M_a(q) is achieved for q < 2*, so b* = 0")
        if ps.a <= 0 or (ps.d >= 4 and ps.k == 1 and ps.a < 2):
            return verdict(Attainability.ACHIEVED, ["Thm 5.2"], "M_a(2*) is achieved, so b* = 0")
        note = ("achieved iff S_{a,b,b}(2*) < M_a(2*), i.e. for b > b* with b* in [0, 2H_a) "
                "not known here; also achieved for b in (2H_a - eps, 2H_a)")
        return verdict(Attainability.CONDITIONAL, ["Thm 3 ii", "Thm 5.1 i", "Thm 4.4"], note)

    if critical and _close(ps.a, 0.0) and ps.b > 0:
        return verdict(Attainability.ACHIEVED, ["Thm 4.3 ii"], "S_{0,b,b}(p*) < S for 0 < b < pH_0")

    tags = ["Thm 3 ii", "Thm 4.4"]
    note = f"achieved if S_{{a,b,b}}(q) < M_a(q); also achieved for b in (pH_a - eps, pH_a), pH_a = {p_h:.6g}"
    if (_close(ps.a, 0.0) and ps.b > 0
            and ps.p * (ps.d - ps.k) < ps.q * (ps.d - ps.p) < ps.d * ps.p):
        tags.append("Thm 4.5")
        note += "; achieved for b in (0, eps)"
    return verdict(Attainability.CONDITIONAL, tags, note)
