from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotcocycles.arithmetic import PartialQuotients, RandomBitsValue
from rotcocycles.orbits import (
    Membership,
    characters_up_to,
    separation_table,
    three_distance_audit,
    weyl_equidistribution,
    zalpha_membership_diagnostic,
)


@settings(max_examples=40)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(1, 8),
       st.fractions(min_value=0, max_value=1, max_denominator=50))
def test_three_distance_random_periodic(period, n, x):
    if x == 1:
        x = Fraction(0)
    pq = PartialQuotients.periodic(period)
    if pq.q(n) > 5000:
        return
    rep = three_distance_audit(pq, n, x)
    assert rep.passed
    assert rep.distinct_gaps <= 3


def test_three_distance_gap_values_at_q():
    # at N = q_n the gaps are ||q_{n-1} alpha|| and ||q_{n-1} alpha|| + ||q_n alpha||
    pq = PartialQuotients.golden()
    rep = three_distance_audit(pq, 7, 0)
    th6, th7 = abs(pq.basis.theta(6)), abs(pq.basis.theta(7))
    assert set(rep.gap_values) <= {th6, th6 + th7, th7}
    assert sum(rep.gap_values.values()) == pq.q(7)


def test_separation_table_rational_beta():
    pq = PartialQuotients.golden()
    table = separation_table(Fraction(1, 2), pq, 12)
    assert table.subsequence == list(range(13))
    assert not table.flagged_member
    assert table.observed_min_c() > 0.01


def test_membership_declared_and_evidence():
    pq = PartialQuotients.golden()
    basis = pq.basis
    assert zalpha_membership_diagnostic((2 * basis.alpha).frac(), pq, range(2, 20)).verdict == Membership.DECLARED_MEMBER
    assert zalpha_membership_diagnostic(Fraction(1, 2), pq, range(2, 20)).verdict == Membership.EVIDENCE_NON_MEMBER


def test_characters_count():
    chars = characters_up_to(2, 3)
    assert len(chars) == 24
    assert all(0 < sum(map(abs, s)) <= 3 for s in chars)
    assert len(characters_up_to(1, 3)) == 6


def test_weyl_rational_beta_frozen():
    # q_n mod 2 for golden alpha cycles through 1, 1, 0, so the average of (-1)^{q_n} tends to 1/3
    pq = PartialQuotients.golden()
    (row,) = weyl_equidistribution([Fraction(1, 2)], [(1,)], pq, 300)
    assert row.average == pytest.approx(1 / 3, abs=1e-9)


def test_weyl_random_pair_small():
    pq = PartialQuotients.golden()
    basis = pq.basis
    pair = [basis.register(f"r{j}", value=RandomBitsValue(100 + j)) for j in range(2)]
    rows = weyl_equidistribution(pair, characters_up_to(2, 2), pq, 1000)
    assert max(r.average for r in rows) < 0.1
    assert max(r.error for r in rows) < 1e-6
