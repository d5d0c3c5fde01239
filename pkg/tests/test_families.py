import math

import numpy as np
import pytest

from hslab import mesh
from hslab.families import (BadRadii, FamilyKind, FamilySpec, SupportOverlap, compact_bump,
                            concentrate_family_quotient, evaluate_family, family_sweep, horiuchi_radial_bound,
                            radial_power_profile, rows_to_csv, sphere_rule, support_radius, talenti_profile,
                            translate_family_quotient)
from hslab.functionals import mazya_quotient, rayleigh_hs, sobolev_constant
from hslab.params import OutOfRange, ParamSet


@pytest.fixture(scope="module")
def bump():
    g = mesh.build_grid(64, 64, 4.0, d=4, k=2, ratio=1.1)
    return compact_bump(g, 3.0)


def small_bubble(d, k):
    # support radius sqrt(2) * 1.4 < 2, so every scale h >= 4 is admissible
    return talenti_profile(mesh.build_grid(64, 64, 1.4, d=d, k=k, ratio=1.1), 0.05)


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_sphere_rule_moments(m):
    tau, w = sphere_rule(m, 16)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    # mean of (omega . e)^2 over S^{m-1} is 1/m
    assert np.sum(w * tau ** 2) == pytest.approx(1 / m, rel=1e-13)
    assert np.sum(w * tau) == pytest.approx(0.0, abs=1e-14)


def test_support_radius(bump):
    assert 3.0 <= support_radius(bump) <= 3.0 * 1.5
    assert support_radius(bump.with_values(np.zeros(bump.shape))) == 0.0


@pytest.mark.parametrize("excess", [-0.5, 0.0, 0.5, 1.0])
def test_translation_slope(bump, excess):
    ps = ParamSet(4, 2, 2, 3, 0, 0, excess)
    hs = np.array([10.0, 20.0, 40.0, 80.0])
    qs = np.array([translate_family_quotient(ps, bump, h).quotient for h in hs])
    slope = np.polyfit(np.log(hs), np.log(qs), 1)[0]
    assert slope == pytest.approx(excess, abs=0.05)


def test_translation_zero_constant(bump):
    ps = ParamSet(4, 2, 2, 3, 0, 0.5, 0)
    qs = [translate_family_quotient(ps, bump, h).quotient for h in (10, 20, 40, 80, 160)]
    assert all(x > y for x, y in zip(qs, qs[1:]))
    assert qs[-1] < 0.3 * qs[0]


def test_translation_bottom_against_mazya(bump):
    ps = ParamSet(4, 2, 2, 3, 0, -0.5, -0.5)
    mazya = mazya_quotient(ps.replace(b=0.0, gamma=0.0), bump).quotient
    q10, q100 = (translate_family_quotient(ps, bump, h).quotient for h in (10, 100))
    assert q10 == pytest.approx(q100, rel=0.1)
    assert q10 >= mazya and q100 >= mazya
    qs = [translate_family_quotient(ps, bump, h).quotient for h in (45, 60, 90, 150, 300)]
    assert all(y <= x * 1.01 for x, y in zip(qs, qs[1:]))


def test_translation_bottom_positive_b_approaches_from_below(bump):
    ps = ParamSet(4, 2, 2, 3, 0, 0.5, 0.5)
    mazya = mazya_quotient(ps.replace(b=0.0, gamma=0.0), bump).quotient
    qs = [translate_family_quotient(ps, bump, h).quotient for h in (10, 40, 160, 640)]
    assert all(q <= mazya for q in qs)
    assert abs(qs[-1] - mazya) < abs(qs[0] - mazya)


def test_translation_unweighted_independent_of_h(bump):
    ps = ParamSet(4, 2, 2, 3)
    qs = [translate_family_quotient(ps, bump, h).quotient for h in (10, 37, 500)]
    assert qs[0] == qs[1] == qs[2]


def test_translation_overlap(bump):
    with pytest.raises(SupportOverlap):
        translate_family_quotient(ParamSet(4, 2, 2, 3), bump, 5.0)


def test_concentration_unweighted_exact():
    base = small_bubble(4, 2)
    ps = ParamSet(4, 2, 2, 4)
    ref = rayleigh_hs(ps, base).quotient
    for h in (4, 8, 16, 32):
        assert concentrate_family_quotient(ps, base, h).quotient == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("args", [(4, 2, 2, 4, 1, 0.5, 1), (4, 2, 2, 4, -0.5, -0.3, 0.2), (3, 1, 2, 6, 1, 0.5, 0.5)])
def test_concentration_approaches_unweighted(args):
    ps = ParamSet(*args)
    base = small_bubble(ps.d, ps.k)
    target = rayleigh_hs(ps.replace(a=0.0, b=0.0, gamma=0.0), base).quotient
    reports = [concentrate_family_quotient(ps, base, h) for h in (4, 8, 16, 32)]
    gaps = [abs(r.quotient - target) for r in reports]
    assert all(y < x for x, y in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.05 * target
    assert all(r.model_error >= 0 for r in reports)


def test_concentration_bubble_limit_near_sobolev():
    ps = ParamSet(4, 2, 2, 4, 1, 0.5, 1)
    rep = concentrate_family_quotient(ps, small_bubble(4, 2), 32)
    assert rep.quotient == pytest.approx(sobolev_constant(4, 2), rel=1e-2)


def test_concentration_preconditions():
    base = small_bubble(4, 2)
    with pytest.raises(ValueError):
        concentrate_family_quotient(ParamSet(4, 2, 2, 3), base, 8)
    with pytest.raises(ValueError):
        concentrate_family_quotient(ParamSet(4, 2, 2, 4), base, 2)
    big = compact_bump(mesh.build_grid(32, 32, 4.0, d=4, k=2), 3.0)
    with pytest.raises(SupportOverlap):
        concentrate_family_quotient(ParamSet(4, 2, 2, 4), big, 4)


def test_horiuchi_examples():
    S = sobolev_constant(3, 2)
    assert horiuchi_radial_bound(ParamSet(3, 1, 2, 6)) == S
    assert horiuchi_radial_bound(ParamSet(3, 1, 2, 6, 0, 0.5, 0.5)) == pytest.approx(0.5 ** (4 / 3) * S, rel=1e-14)
    assert 0.5 ** (4 / 3) == pytest.approx(0.39685, abs=1e-5)
    g2 = (1 / 3) / (1 / 7) ** (1 / 3)
    assert horiuchi_radial_bound(ParamSet(3, 1, 2, 6, 2, 2, 2)) == pytest.approx(g2 * S, rel=1e-13)


def test_horiuchi_strictly_below_sobolev():
    # a = b != 0 (G_a < 1, bracket 1), b > a = 0 (bracket < 1) and b > a (both below 1)
    S = sobolev_constant(4, 2)
    for a, b in [(1.0, 1.0), (-0.5, -0.5), (0.0, 0.3), (2.0, 2.0), (0.5, 1.0)]:
        assert horiuchi_radial_bound(ParamSet(4, 2, 2, 4, a, b, b)) < S


@pytest.mark.parametrize("args", [(2, 1, 2, 4), (4, 2, 2, 4, -2.5), (4, 2, 2, 4, 0, 3, 3)])
def test_horiuchi_out_of_range(args):
    with pytest.raises(OutOfRange):
        horiuchi_radial_bound(ParamSet(*args))


def test_radial_power_profile_support_and_errors():
    ps = ParamSet(4, 2, 2, 3)
    g = radial_power_profile(ps, 0.1, (1e-2, 1e2))
    assert g.s_nodes[0] <= 1e-3
    rr, ss = g.mesh()
    rho = np.hypot(rr, ss)
    assert np.all(g.values[(rho <= 1e-2) | (rho >= 1e2)] == 0)
    assert np.all(g.values[(rho > 0.1) & (rho < 10)] > 0)
    with pytest.raises(BadRadii):
        radial_power_profile(ps, 0.1, (1.0, 0.5))


def test_family_spec_validation(bump):
    with pytest.raises(ValueError):
        FamilySpec(FamilyKind.DILATE, bump, 0.0)
    with pytest.raises(ValueError):
        FamilySpec(FamilyKind.TRANSLATE_ALONG_SIGMA0, bump, 10.0, center=(0.6, 0.6))
    FamilySpec(FamilyKind.TRANSLATE_ALONG_SIGMA0, bump, 10.0, center=(0.6, 0.8))


def test_evaluate_family_dispatch(bump):
    ps = ParamSet(4, 2, 2, 3, 0.5, 0.2, 0.6)
    ref = rayleigh_hs(ps, bump).quotient
    assert evaluate_family(ps, FamilySpec(FamilyKind.DILATE, bump, 3.0)).quotient == pytest.approx(ref, rel=1e-10)
    crit = ParamSet(4, 2, 2, 4, 0.5, 0.2, 0.2)
    assert evaluate_family(crit, FamilySpec("HoriuchiRadial", None, 1.0)).quotient == horiuchi_radial_bound(crit)
    rep = evaluate_family(ps, FamilySpec(FamilyKind.TRANSLATE_ALONG_SIGMA0, bump, 20.0))
    assert rep.quotient == translate_family_quotient(ps, bump, 20.0).quotient


def test_family_sweep_csv(bump, tmp_path):
    rows = family_sweep(ParamSet(4, 2, 2, 3, 0, 0, 0.5), "TranslateAlongSigma0", bump, [10, 20])
    text = rows_to_csv(rows, tmp_path / "f.csv")
    lines = text.splitlines()
    assert lines[0] == "kind,h,quotient,quad_error"
    assert lines[1].startswith("TranslateAlongSigma0,10,")
    assert (tmp_path / "f.csv").read_text() == text
    assert rows[1].quotient == pytest.approx(rows[0].quotient * math.sqrt(2), rel=0.02)
