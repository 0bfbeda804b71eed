import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotcocycles.arithmetic import PartialQuotients, SqrtFracValue
from rotcocycles.cocycles import (
    affine_psi,
    birkhoff_eval,
    denjoy_koksma_audit,
    diagonal_line_check,
    diagonal_quotient,
    indicator,
    indicator_arc,
    integer_form,
    normalize_discontinuities,
    pushforward,
    random_step_cocycle,
)

# Golden alpha, phi = 1_[0,1/3) - 1/3, n = 8; frozen from an mpmath sweep over sorted breakpoints.
FROZEN_N8 = {
    Fraction(-2, 3): 0.3404287454174027292345588,
    Fraction(1, 3): 0.6524758424985278748642157,
    Fraction(4, 3): 0.007095412084069395901225493,
}


@pytest.fixture
def golden():
    return PartialQuotients.golden()


def test_pushforward_frozen(golden):
    pf = pushforward(indicator(golden.basis, Fraction(1, 3)), 8)
    got = {a.value[0].rational: float(a.mass) for a in pf.atoms}
    assert set(got) == set(FROZEN_N8)
    for v, m in FROZEN_N8.items():
        assert got[v] == pytest.approx(m, abs=1e-15)


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.integers(1, 60))
def test_pushforward_mass_and_mean(seed, n):
    pq = PartialQuotients.golden()
    phi = random_step_cocycle(pq.basis, random.Random(seed))
    pf = pushforward(phi, n)
    assert pf.total_mass() == 1
    for j in range(phi.d):
        mean = sum((a.mass * a.value[j] for a in pf.atoms), pq.basis.zero())
        assert mean.is_zero


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.integers(1, 40), st.fractions(0, 1, max_denominator=997))
def test_birkhoff_value_is_an_atom(seed, n, x):
    pq = PartialQuotients.golden()
    phi = random_step_cocycle(pq.basis, random.Random(seed))
    pf = pushforward(phi, n)
    v = birkhoff_eval(phi, n, x % 1)
    assert v in {a.value for a in pf.atoms}


@settings(max_examples=20)
@given(st.integers(0, 10**6), st.integers(1, 30), st.fractions(0, 1, max_denominator=97),
       st.fractions(0, 1, max_denominator=89))
def test_rotate_shifts_birkhoff_sums(seed, n, x, r):
    pq = PartialQuotients.golden()
    phi = random_step_cocycle(pq.basis, random.Random(seed))
    assert birkhoff_eval(phi.rotate(r), n, x % 1) == birkhoff_eval(phi, n, (x + r) % 1)


def test_stack_and_linear_image(golden):
    b = golden.basis
    u, v = indicator(b, Fraction(1, 3)), indicator(b, Fraction(1, 5))
    phi = u.stack(v)
    diff = phi.linear_image([[1, -1]])
    x = Fraction(2, 7)
    s = birkhoff_eval(phi, 13, x)
    assert diff.d == 1
    assert birkhoff_eval(diff, 13, x) == (s[0] - s[1],)


def test_denjoy_koksma_random(golden):
    rng = random.Random(1)
    for _ in range(10):
        phi = random_step_cocycle(golden.basis, rng)
        assert denjoy_koksma_audit(phi, golden, range(0, 12)).passed


def test_coboundary_normalizes_away(golden):
    b = golden.basis
    phi = indicator(b, (2 * b.alpha).frac())
    norm, log = normalize_discontinuities(phi)
    assert norm.D == 0
    assert log


def test_irrational_beta_survives_normalization(golden):
    b = golden.basis
    gamma = b.register("gamma", value=SqrtFracValue(2))
    norm, log = normalize_discontinuities(indicator(b, gamma))
    assert norm.D == 2 and not log


def test_integer_form(golden):
    info = integer_form(indicator(golden.basis, Fraction(1, 3)))
    assert info.multiplier == 1
    assert info.betas == (Fraction(1, 3),)


def test_indicator_arc_wraps(golden):
    b = golden.basis
    phi = indicator_arc(b, Fraction(3, 4), Fraction(1, 4))
    assert birkhoff_eval(phi, 1, Fraction(0)) == (1,)
    assert birkhoff_eval(phi, 1, Fraction(1, 2)) == (0,)


def test_diagonal_line_and_quotient(golden):
    betas = [Fraction(1, 3), Fraction(1, 7)]
    for n in range(1, 6):
        assert diagonal_line_check(golden.basis, betas, n, 30, seed=n).passed
    q = diagonal_quotient(golden.basis, betas)
    assert q.d == 2
    assert affine_psi(golden.basis, betas).dim == 3  # beta_0 = 0 comes first


def _float_eval(phi, xs):
    bps = np.array([float(pc.lo) for pc in phi.pieces])
    vals = np.array([[float(v) for v in pc.value] for pc in phi.pieces])
    return vals[np.searchsorted(bps, xs, side="right") - 1]


def test_grid_histogram_converges_to_pushforward(golden):
    # the worst acceptance case (seed 4, third cocycle, n = 190) at a 10^6-point grid
    rng = random.Random(4)
    for _ in range(3):
        phi = random_step_cocycle(golden.basis, rng, d_max=3, max_intervals=8)
    n, G = 190, 10**6
    pf = pushforward(phi, n)
    exact = {}
    for a in pf.atoms:
        key = tuple(round(v * 1e8) for v in a.value_floats())
        exact[key] = exact.get(key, 0.0) + float(a.mass)
    grid = (np.arange(G) + 0.5) / G
    acc = np.zeros((G, phi.d))
    alpha = float(golden.basis.alpha)
    for k in range(n):
        acc += _float_eval(phi, np.mod(grid + k * alpha, 1.0))
    keys, counts = np.unique(np.rint(acc * 1e8).astype(np.int64), axis=0, return_counts=True)
    hist = {tuple(int(c) for c in k): m / G for k, m in zip(keys, counts)}
    tv = 0.5 * sum(abs(hist.get(k, 0.0) - exact.get(k, 0.0)) for k in hist.keys() | exact.keys())
    assert tv < 2e-4
