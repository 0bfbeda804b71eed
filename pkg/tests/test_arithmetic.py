from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotcocycles.arithmetic import (
    ContinuedFractionValue,
    Ordering,
    PartialQuotients,
    RandomBitsValue,
    cf_expand,
    cf_identity_audit,
    compare,
    convergents,
    dist_form,
    dist_to_Z,
    floor_div,
)
from rotcocycles.errors import UndecidableAtCap

# Frozen from an independent mpmath recurrence.
GOLDEN_Q = [1, 1, 2, 3, 5, 8]
GOLDEN_P = [0, 1, 1, 2, 3, 5]
POW2_Q = [1, 2, 9, 74, 1193, 38250, 2449193, 313534954]

digit_lists = st.lists(st.integers(1, 40), min_size=1, max_size=25)
fractions = st.fractions(min_value=-50, max_value=50, max_denominator=10_000)


def test_golden_convergents():
    pq = PartialQuotients.golden()
    assert [pq.q(n) for n in range(6)] == GOLDEN_Q
    assert [pq.p(n) for n in range(6)] == GOLDEN_P


def test_pow2_denominators():
    pq = PartialQuotients.parse("formula:pow2")
    assert [pq.q(n) for n in range(8)] == POW2_Q


@pytest.mark.parametrize("spec", ["golden", "sqrt2m1", "periodic:[1,2,3]", "formula:poly:1,1", "formula:pow2"])
def test_identity_audit_passes(spec):
    assert cf_identity_audit(PartialQuotients.parse(spec), 30).passed


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        PartialQuotients.parse("bogus")


@given(digit_lists)
def test_determinant_identity(digits):
    pq = PartialQuotients.from_list(digits)
    for n in range(1, len(digits) + 1):
        assert pq.p(n - 1) * pq.q(n) - pq.p(n) * pq.q(n - 1) == (-1) ** n


@given(digit_lists)
def test_cf_expand_round_trip(digits):
    if len(digits) > 1 and digits[-1] == 1:
        digits = digits[:-1] + [2]
    x = Fraction(0)
    for a in reversed(digits):
        x = 1 / (a + x)
    if x == 1:
        return
    assert cf_expand(x, 60).spec == PartialQuotients.from_list(digits).spec


def test_theta_signs_alternate_and_shrink():
    pq = PartialQuotients.parse("periodic:[1,2]")
    basis = pq.basis
    for n in range(20):
        th, nxt = basis.theta(n), basis.theta(n + 1)
        assert th.sign() == (-1) ** n
        assert compare(abs(nxt), abs(th)) == Ordering.LESS


@given(fractions, fractions)
def test_compare_matches_fractions(a, b):
    expected = Ordering((a > b) - (a < b))
    assert compare(a, b) == expected


@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6), st.integers(1, 10**4), st.integers(-50, 50))
def test_floor_div_brackets(c0, c1, d0, d1):
    basis = PartialQuotients.golden().basis
    X = basis.form(c0, c1)
    Y = basis.form(d0, d1)
    if compare(Y, 0) != Ordering.GREATER:
        return
    k = floor_div(X, Y)
    assert compare(X - k * Y, 0) != Ordering.LESS
    assert compare(X - (k + 1) * Y, 0) == Ordering.LESS


def test_float_of_large_coefficient_form():
    pq = PartialQuotients.golden()
    basis = pq.basis
    for n in (40, 80, 150):
        d = float(dist_form(pq.q(n) * basis.alpha))
        assert 0 < d < 1 / pq.q(n + 1) * 1.0001
        assert abs(d - abs(float(basis.theta(n)))) <= 1e-6 * d


def test_dist_to_z_rational():
    assert dist_to_Z(Fraction(7, 3)).hi == Fraction(1, 3)


def test_undeclared_relation_raises():
    pq = PartialQuotients.golden()
    basis = pq.basis
    clone = basis.register("clone", value=ContinuedFractionValue(pq))
    with pytest.raises(UndecidableAtCap):
        compare(clone, basis.alpha)


def test_declared_relation_is_exact():
    basis = PartialQuotients.golden().basis
    g = basis.register("g", declared=2 * basis.alpha - 1)
    assert (g - 2 * basis.alpha + 1).is_zero
    assert g.in_zalpha_z()


def test_independent_symbols_separate():
    basis = PartialQuotients.golden().basis
    u = basis.register("u", value=RandomBitsValue(1))
    v = basis.register("v", value=RandomBitsValue(2))
    assert compare(u, v) != Ordering.EQUAL
    assert not (u - v).is_rational


def test_parse_forms():
    basis = PartialQuotients.golden().basis
    basis.register("beta", value=RandomBitsValue(5))
    f = basis.parse("1/3 + 2*alpha - beta")
    assert f.const == Fraction(1, 3)
    assert f.alpha_coeff == 2
    assert f.coeff("beta") == -1


@settings(max_examples=30)
@given(st.integers(1, 12))
def test_convergents_are_best_approximations(n):
    pq = PartialQuotients.parse("sqrt2m1")
    cs = convergents(pq, n)
    for c in cs[1:]:
        best = min(float(dist_form(k * pq.basis.alpha)) for k in range(1, c.q))
        assert float(c.dist) < best
