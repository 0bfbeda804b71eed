import random
from fractions import Fraction
from functools import cmp_to_key
from math import gcd

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotcocycles.arithmetic import PartialQuotients, SqrtFracValue, compare
from rotcocycles.cocycles import birkhoff_eval, indicator, random_step_cocycle
from rotcocycles.detect import (
    AffineParam,
    LimitVerdict,
    Verdict,
    cluster_analysis,
    cluster_sum_table,
    criterion_exceptions,
    essential_value_witness,
    lattice_basis,
    limit_set_diagnostic,
    mesu_measure,
    quasi_period_scan,
    regularity_report,
    unimodular_to_e1,
)


def _mesu_brute(phi, q, ell):
    """Measure of {x : phi_q(x + s lambda) constant for s = 0..ell} by sorting every breakpoint."""
    b = phi.basis
    lam = q * b.alpha - (q * b.alpha).round()
    pts = {(x - k * b.alpha - s * lam).frac() for x in phi.points for k in range(q) for s in range(ell + 1)}
    pts = sorted(pts, key=cmp_to_key(lambda u, v: int(compare(u, v))))
    pts.append(pts[0] + 1)
    good = b.zero()
    for lo, hi in zip(pts, pts[1:]):
        m = ((lo + hi) / 2).frac()
        v0 = birkhoff_eval(phi, q, m)
        if all(birkhoff_eval(phi, q, (m + s * lam).frac()) == v0 for s in range(1, ell + 1)):
            good = good + (hi - lo)
    return good


@pytest.mark.parametrize("spec", ["golden", "periodic:[1,2,3]", "formula:pow2"])
def test_mesu_matches_brute_force(spec):
    pq = PartialQuotients.parse(spec)
    b = pq.basis
    beta = b.register("beta", value=SqrtFracValue(3))
    rng = random.Random(3)
    cocycles = [indicator(b, beta), indicator(b, Fraction(1, 3)), random_step_cocycle(b, rng),
                indicator(b, beta) - indicator(b, beta).rotate(Fraction(1, 3))]
    for phi in cocycles:
        for n in range(1, 5):
            q = pq.q(n)
            if q > 30:
                continue
            for ell in (1, 2, 4):
                res = mesu_measure(phi, q, ell)
                assert res.measure == _mesu_brute(phi, q, ell)
                assert res.holds


def test_cluster_example_three_points():
    # jumps 3, -2, -1: every proper sub-sum is nonzero
    table = cluster_sum_table([AffineParam(3), AffineParam(-2), AffineParam(-1)])
    assert set(table.values()) == {AffineParam(1), AffineParam(2), AffineParam(-3)}
    assert criterion_exceptions(table) == set()


def test_cluster_identically_zero_sum():
    table = cluster_sum_table([AffineParam(0, 1), AffineParam(0, -1), AffineParam(1), AffineParam(-1)])
    assert criterion_exceptions(table) is None


def test_cluster_analysis_fires_for_two_irrational_points():
    pq = PartialQuotients.golden()
    b = pq.basis
    beta = b.register("beta", value=SqrtFracValue(2))
    gamma = b.register("gamma", value=SqrtFracValue(3))
    phi = 2 * indicator(b, beta) - indicator(b, beta).rotate(-gamma)
    for n in (14, 16):
        rep = cluster_analysis(phi, pq, pq.q(n))
        assert rep.fires


@settings(max_examples=50)
@given(st.integers(-40, 40), st.integers(-40, 40))
def test_unimodular_completion(a, c):
    if gcd(a, c) != 1:
        return
    U = unimodular_to_e1([a, c])
    assert U[0][0] * U[1][1] - U[0][1] * U[1][0] in (1, -1)
    assert [U[0][0] * a + U[0][1] * c, U[1][0] * a + U[1][1] * c] == [1, 0]


def test_lattice_basis_reduces_redundancy():
    B = lattice_basis([(Fraction(2), Fraction(0)), (Fraction(0), Fraction(3)), (Fraction(2), Fraction(3))])
    assert len(B) == 2
    assert abs(B[0][0] * B[1][1] - B[0][1] * B[1][0]) == 6


def test_limit_sets():
    pq = PartialQuotients.golden()
    assert limit_set_diagnostic(Fraction(1, 2), pq, 20).verdict == LimitVerdict.NONZERO
    assert limit_set_diagnostic(pq.basis.alpha, pq, 20).verdict == LimitVerdict.ZERO


def test_coboundary_has_only_zero_candidate():
    pq = PartialQuotients.golden()
    phi = indicator(pq.basis, pq.basis.alpha)
    rep = quasi_period_scan(phi, [pq.q(n) for n in range(5, 20)])
    assert [tuple(c.rational for c in v) for v in rep.essential_candidates] == [(0,)]


def test_witness_entries_carry_positive_bounds():
    pq = PartialQuotients.golden()
    phi = indicator(pq.basis, Fraction(1, 2))
    res = essential_value_witness(phi, (1,), 0.1, partition_depth=2, N_max=500)
    assert res.all_witnessed and len(res.entries) == 4
    for e in res.entries:
        assert e.N <= 500 and Fraction(e.lower_bound[0]) > 0


def test_report_verdicts():
    pq = PartialQuotients.golden()
    b = pq.basis
    assert regularity_report(indicator(b, Fraction(1, 2)), pq).verdict == Verdict.REGULAR
    assert regularity_report(indicator(b, (2 * b.alpha).frac()), pq).verdict == Verdict.COBOUNDARY


def test_report_on_beta_list():
    pq = PartialQuotients.golden()
    rep = regularity_report([Fraction(1, 2)], pq)
    assert rep.verdict == Verdict.REGULAR
    assert rep.chain
