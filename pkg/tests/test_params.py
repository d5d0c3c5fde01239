import json
import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from hslab.params import (Attainability, InadmissibleBase, OutOfRange, ParamError, ParamSet, Regime,
                          admissible_base, caffarelli_silvestre_params, classify, critical_exponent, positivity, regime_of,
                          resolve_q)


def test_derived_quantities():
    ps = ParamSet(4, 2, 2, 3, a=0.5, b=0.25, gamma=1)
    assert ps.h_of(0) == 1.0
    assert ps.theta == pytest.approx(-4 + 3 * (4 - 2 + 0.5 - 0.25 + 1) / 2, abs=1e-15)
    assert ps.p_star == 4.0
    assert ps.p_star_eff == pytest.approx(4.5 * 2 / 2.5)
    assert ps.hardy_constant == pytest.approx(((4 - 2 + 0.25) / 2) ** 2)
    assert ParamSet(2, 1, 3, 5).p_star == math.inf


def test_p_star_eff_reduces_for_nonpositive_a():
    assert ParamSet(4, 2, 2, 3, a=-0.5).p_star_eff == ParamSet(4, 2, 2, 3).p_star


@pytest.mark.parametrize("kwargs", [
    dict(d=1, k=1, p=2, q=3), dict(d=3, k=0, p=2, q=3), dict(d=3, k=4, p=2, q=3),
    dict(d=3, k=1, p=1, q=3), dict(d=3, k=1, p=2, q=2), dict(d=3, k=1, p=2, q=math.nan),
])
def test_malformed_tuples(kwargs):
    with pytest.raises(ParamError):
        ParamSet(**kwargs)


def test_json_roundtrip_and_pstar():
    ps = ParamSet(4, 2, 2, 3.3, a=0.1, b=-0.2, gamma=0.7)
    assert ParamSet.from_json(ps.to_json()) == ps
    loaded = ParamSet.from_json('{"d": 4, "k": 2, "p": 2, "q": "pstar", "a": 1}')
    assert loaded.q == 4.0
    eff = ParamSet.from_dict({"d": 4, "k": 2, "p": 2, "q": "pstar_eff", "a": 1})
    assert eff.q == pytest.approx(10 / 3)
    with pytest.raises(ParamError, match="'d'"):
        ParamSet.from_dict({"k": 1, "p": 2, "q": 3})
    with pytest.raises(ParamError):
        resolve_q("pstar", 2, 3)


@pytest.mark.parametrize("args, expected", [
    ((3, 1, 2, 4, 1, 0, 0), True),
    ((3, 1, 2, 4, -1, 0, 0), False),
    ((4, 2, 2, 4, 0, 1, 1), True),
])
def test_admissible_base_examples(args, expected):
    assert admissible_base(ParamSet(*args)) is expected


@pytest.mark.parametrize("args, expected", [
    ((3, 1, 2, 6, 0, 0, 0), True),
    ((3, 1, 2, 4, 1, 0.5, 0), False),
    ((2, 1, 2, 10, 3, 0, 0), True),
])
def test_positivity_examples(args, expected):
    assert positivity(ParamSet(*args)) is expected


def test_positivity_needs_admissible_base():
    with pytest.raises(InadmissibleBase):
        positivity(ParamSet(3, 1, 2, 4, -1, 0, 0))


def test_classify_examples():
    v = classify(ParamSet(4, 2, 2, 3, 0, 0.5, 1))
    assert (v.positive, v.regime, v.attainability) == (True, Regime.SUBCRITICAL, Attainability.ACHIEVED)
    assert v.citations == ("Thm 2 i",)
    v = classify(ParamSet.from_dict({"d": 4, "k": 2, "p": 2, "q": "pstar", "a": 1, "b": -0.5, "gamma": -0.5}))
    assert (v.positive, v.regime, v.attainability) == (True, Regime.BOTTOM_CRITICAL, Attainability.NOT_ACHIEVED)
    assert classify(ParamSet(3, 1, 2, 6, 0, 0, 1)).attainability is Attainability.NOT_ACHIEVED


def test_classify_zero_constant_and_invalid():
    v = classify(ParamSet(3, 1, 2, 4, 1, 0.5, 0))
    assert not v.positive
    assert classify(ParamSet(3, 1, 2, 4, -1, 0, 0)).regime is Regime.INVALID


def test_classify_open_case_is_unknown_with_note():
    v = classify(ParamSet(3, 1, 2, 6, 0.5, 0, 0))
    assert v.attainability is Attainability.UNKNOWN
    assert v.condition_note


def test_verdict_fixture_matches(verdict_fixture):
    for row in verdict_fixture:
        assert classify(ParamSet(*row["params"])).attainability.value == row["attainability"], row["case"]


@pytest.mark.parametrize("n, s, expected", [
    (2, 0.5, (3, 1, 2, 6, 0, 0, 0)),
    (3, 0.75, (4, 1, 2, 4, -0.5, 0, 0.25)),
])
def test_caffarelli_silvestre(n, s, expected):
    ps = caffarelli_silvestre_params(n, s)
    got = (ps.d, ps.k, ps.p, ps.q, ps.a, ps.b, ps.gamma)
    assert got == pytest.approx(expected, abs=1e-14)


def test_caffarelli_silvestre_range():
    with pytest.raises(OutOfRange):
        caffarelli_silvestre_params(2, 0.3)


# property tests

dims = st.tuples(st.integers(2, 6), st.integers(1, 5)).filter(lambda dk: dk[1] < dk[0])


@st.composite
def admissible_sets(draw):
    d, k = draw(dims)
    p = draw(st.floats(1.2, 3.5))
    a = draw(st.floats(-k + 0.05, 2.0))
    b_max = d - p + a - 0.05
    b = draw(st.floats(min(-1.5, b_max - 1.0), b_max))
    if p < d:
        q = draw(st.floats(p * 1.01, critical_exponent(d, p)))
    else:
        q = draw(st.floats(p * 1.01, 4 * p))
    gamma = draw(st.floats(b, b + 2.0))
    ps = ParamSet(d, k, p, q, a, b, gamma)
    assume(admissible_base(ps))
    return ps


@settings(max_examples=100, deadline=None)
@given(admissible_sets(), st.floats(1e-3, 2.0))
def test_positivity_flips_with_gamma(ps, drop):
    assert positivity(ps)
    lowered = ps.replace(gamma=ps.b - drop)
    if admissible_base(lowered):
        assert not positivity(lowered)


@settings(max_examples=100, deadline=None)
@given(admissible_sets())
def test_classify_deterministic_with_citations(ps):
    v1, v2 = classify(ps), classify(ps)
    assert v1 == v2
    if v1.attainability is not Attainability.UNKNOWN:
        assert v1.citations
    assert regime_of(ps) is v1.regime


@given(st.integers(2, 8), st.floats(1.1, 5), st.floats(-3, 3), st.floats(-3, 3))
def test_h_of_is_affine(d, p, t1, t2):
    ps = ParamSet(d, 1, p, p + 1)
    assert ps.h_of(t2) - ps.h_of(t1) == pytest.approx((t2 - t1) / p, abs=1e-12)
    assert ps.h_of(0) == pytest.approx((d - p) / p)


@given(st.integers(3, 7), st.floats(0.01, 2.5), st.floats(-1, 1))
def test_theta_at_bottom_effective_exponent(d, a, b):
    ps = ParamSet(d, 1, 2, critical_exponent(d + a, 2), a=a, b=b, gamma=b)
    assert ps.theta == pytest.approx(a, abs=1e-12)


def test_to_json_is_flat():
    data = json.loads(ParamSet(3, 1, 2, 6).to_json())
    assert set(data) == {"d", "k", "p", "q", "a", "b", "gamma"}
