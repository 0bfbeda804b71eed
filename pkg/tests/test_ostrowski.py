from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotcocycles.arithmetic import Ordering, PartialQuotients, compare
from rotcocycles.ostrowski import (
    CoboundaryVerdict,
    DigitRule,
    admissibility_violations,
    coboundary_criterion,
    expand,
    from_digits,
    reconstruct,
    reconstruct_form,
    series_converges,
)

# Golden alpha, beta = 1/3, n = 0..24; frozen from a greedy mpmath expansion.
THIRD_DIGITS = [0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0]

rationals = st.fractions(min_value=0, max_value=1, max_denominator=2000).filter(lambda x: x < 1)


def test_frozen_digits_of_one_third():
    assert expand(Fraction(1, 3), PartialQuotients.golden(), 24).digits == THIRD_DIGITS


@settings(max_examples=40)
@given(rationals, st.sampled_from(["golden", "sqrt2m1", "periodic:[1,2,3]", "formula:poly:1,1"]))
def test_expansion_invariants(beta, spec):
    pq = PartialQuotients.parse(spec)
    basis = pq.basis
    e = expand(beta, pq, 18)
    assert not admissibility_violations(pq, e.digits)
    for n, r in enumerate(e.residuals):
        assert compare(abs(r), abs(basis.theta(n))) != Ordering.GREATER
    assert reconstruct_form(e) + e.residuals[-1] == beta


@settings(max_examples=30)
@given(st.lists(st.integers(0, 1), min_size=3, max_size=20))
def test_digits_round_trip(bits):
    # golden digits are 0/1 and canonical when no two consecutive ones occur
    digits = [0] + [b if i == 0 or not bits[i - 1] else 0 for i, b in enumerate(bits)]
    pq = PartialQuotients.golden()
    if admissibility_violations(pq, digits):
        return
    beta = sum((b * pq.basis.theta(n) for n, b in enumerate(digits)), pq.basis.zero())
    if compare(beta, 0) == Ordering.LESS:
        return  # the digit sum is only taken mod 1 then, which changes the expansion
    assert reconstruct_form(from_digits(pq, digits)) == beta
    got = expand(beta, pq, len(digits) + 3).digits
    assert got[: len(digits)] == digits and not any(got[len(digits):])


def test_reconstruct_interval_contains_form():
    pq = PartialQuotients.golden()
    e = expand(Fraction(2, 5), pq, 20)
    approx = reconstruct(e)
    assert float(approx) == pytest.approx(float(reconstruct_form(e)), abs=1e-15)


def test_alpha_out_of_range():
    with pytest.raises(ValueError):
        expand(Fraction(3, 2), PartialQuotients.golden(), 5)


@pytest.mark.parametrize("spec,expected", [
    ("const:0", CoboundaryVerdict.EVIDENCE_COBOUNDARY),
    ("list:[1,0,1]", CoboundaryVerdict.EVIDENCE_COBOUNDARY),
    ("alternating:[1,0]", CoboundaryVerdict.EVIDENCE_NOT_COBOUNDARY),
    ("formula:match_a:even", CoboundaryVerdict.EVIDENCE_NOT_COBOUNDARY),
])
def test_coboundary_from_rules(spec, expected):
    pq = PartialQuotients.golden()
    assert coboundary_criterion(1, DigitRule.parse(spec), pq=pq).verdict == expected


def test_series_convergence_depends_on_growth():
    pq = PartialQuotients.parse("formula:poly:1,1")
    assert series_converges(DigitRule.parse("const:1"), pq) is False
    assert series_converges(DigitRule.parse("list:[1]"), pq) is True


def test_finite_digits_give_coboundary_evidence():
    pq = PartialQuotients.golden()
    basis = pq.basis
    e = expand((3 * basis.alpha).frac(), pq, 20)
    assert e.terminates
    assert coboundary_criterion(1, e).verdict == CoboundaryVerdict.EVIDENCE_COBOUNDARY


def test_bad_rule():
    with pytest.raises(ValueError):
        DigitRule.parse("sometimes")
