"""Orbit geometry of the rotation by alpha.

Gap audits of finite orbits, separation of a point from the orbit of 0,
finite-depth membership tests for Z alpha + Z and Weyl sums along the
denominators q_n.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._fixed import ONE, FixedOrbit
from .arithmetic import (
    AdaptiveReal,
    LinearForm,
    Ordering,
    PartialQuotients,
    compare,
    dist_form,
    dist_to_Z,
    interval_strings,
)
from .errors import AuditFailure

# exhaustive scans are refused beyond this many points
MAX_SCAN = 1 << 22


@dataclass
class GapAudit:
    alpha: str
    n: int
    q: int
    x: LinearForm
    order: np.ndarray  # k values sorted by {x + k alpha}
    gap_values: dict  # LinearForm -> multiplicity
    min_gap: AdaptiveReal
    max_gap: AdaptiveReal
    parts: dict[str, bool]
    violations: list[tuple]

    @property
    def distinct_gaps(self) -> int:
        return len(self.gap_values)

    @property
    def passed(self) -> bool:
        return all(self.parts.values()) and self.distinct_gaps <= 3

    @property
    def points(self) -> list[LinearForm]:
        b = self.x.basis
        return [(self.x + int(k) * b.alpha).frac() for k in self.order]


def _sorted_gaps(x: LinearForm, step: LinearForm, q: int):
    """Sorted orbit x + k*step (k < q) and the cyclic gaps as exact forms."""
    orb = FixedOrbit(x, step, np.arange(q, dtype=np.int64))
    order = orb.argsort()
    ks = orb.ks[order]
    ints = orb.ints[order]
    # gap between consecutive points i, i+1 is (dk) step - (dn); the last wraps by +1
    dk = np.roll(ks, -1) - ks
    dn = np.roll(ints, -1) - ints
    dn[-1] -= 1
    # a gap dk*step - dn lies in (0, 1], so dk alone identifies it
    table = np.bincount(dk + q, minlength=2 * q + 1)
    uniq = np.nonzero(table)[0]
    counts = table[uniq]
    lookup = np.zeros(2 * q + 1, dtype=np.int64)
    lookup[uniq] = np.arange(uniq.size)
    inverse = lookup[dk + q]
    first = np.zeros(uniq.size, dtype=np.int64)
    first[inverse[::-1]] = np.arange(q - 1, -1, -1)
    forms = [int(dk[i]) * step - int(dn[i]) for i in first]
    return order, ks, forms, inverse, counts


def _bin_audit(basis, q: int, theta: LinearForm):
    """Each [j/q, (j+1)/q) holds one {k alpha}, k < q, up to the theta < 0 exception."""
    if q == 1:
        return True, None
    orb0 = FixedOrbit(basis.zero(), basis.alpha, np.arange(q, dtype=np.int64))
    frac = orb0.pos.astype(np.float64) / float(ONE)
    bins = np.floor(frac * q).astype(np.int64)
    margin = np.minimum(frac * q - bins, bins + 1 - frac * q)
    for idx in np.nonzero(margin < 1e-6)[0]:
        bins[idx] = (orb0.form(int(idx)) * q).floor()
    counts = np.bincount(bins, minlength=q)
    expected = np.ones(q, dtype=np.int64)
    if theta.sign() < 0:
        expected[0] = 2
        expected[q - 1] = 0
    if np.array_equal(counts, expected):
        return True, None
    j = int(np.nonzero(counts != expected)[0][0])
    ks = np.nonzero(bins == j)[0]
    return False, ("part1", j, int(ks[0]) if ks.size else None)


def three_distance_audit(pq: PartialQuotients, n: int, x, raise_on_failure: bool = True,
                         max_q: int = MAX_SCAN) -> GapAudit:
    """Exhaustively audit the spacing of the orbit of length q = q_n.

    Part 1 bins {k alpha} into [j/q, (j+1)/q); parts 2 and 3 bound the gaps
    of {x + k alpha}; part 4 bounds the gaps of {x - k alpha} below by
    1/(2q).  The gap values are exact linear forms and at most three
    distinct values may occur.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    basis = pq.basis
    x = basis.coerce(x)
    p, q = pq.ladder(n)
    if q > max_q:
        raise ValueError(f"q_{n} = {q} exceeds the exhaustive scan budget {max_q}")
    alpha = basis.alpha
    theta = basis.theta(n)
    violations: list[tuple] = []
    parts = {}

    # part 1 does not depend on x, so it is cached per basis
    cache = basis.__dict__.setdefault("_bin_audit", {})
    if n not in cache:
        cache[n] = _bin_audit(basis, q, theta)
    ok1, v1 = cache[n]
    parts["part1"] = ok1
    if v1 is not None:
        violations.append(v1)

    order, ks, forms, inverse, counts = _sorted_gaps(x, alpha, q)
    if q == 1:
        gap_values = {basis.one: 1}
    else:
        gap_values = {f: int(c) for f, c in zip(forms, counts)}

    two_over_q = Fraction(2, q)
    ok2 = True
    for f in gap_values:
        if compare(f, two_over_q) != Ordering.LESS:
            ok2 = False
            i = int(np.nonzero(inverse == forms.index(f))[0][0]) if q > 1 else 0
            violations.append(("part2", None, int(ks[i])))
    parts["part2"] = ok2 if q > 1 else True

    ok3 = True
    if q >= 3:
        m = len(forms)
        pair_ids = [divmod(int(v), m) for v in np.nonzero(np.bincount(inverse * m + np.roll(inverse, -1), minlength=m * m))[0]]
        for a, b in pair_ids:
            if compare(forms[a] + forms[b], Fraction(1, q)) == Ordering.LESS:
                ok3 = False
                i = int(np.nonzero((inverse == a) & (np.roll(inverse, -1) == b))[0][0])
                violations.append(("part3", None, int(ks[i])))
    parts["part3"] = ok3

    ok4 = True
    if q >= 2:
        _, ks4, forms4, inv4, _ = _sorted_gaps(x, -alpha, q)
        for idx, f in enumerate(forms4):
            if compare(f, Fraction(1, 2 * q)) != Ordering.GREATER:
                ok4 = False
                i = int(np.nonzero(inv4 == idx)[0][0])
                violations.append(("part4", None, int(ks4[i])))
    parts["part4"] = ok4

    gl = list(gap_values)
    gmin, gmax = gl[0], gl[0]
    for f in gl[1:]:
        if f < gmin:
            gmin = f
        if f > gmax:
            gmax = f
    if len(gap_values) > 3:
        violations.append(("distinct_gaps", len(gap_values), None))
    audit = GapAudit(pq.spec, n, q, x, ks, gap_values,
                     gmin.to_real(), gmax.to_real(), parts, violations)
    if raise_on_failure and not audit.passed:
        part, j, k = violations[0]
        raise AuditFailure(f"orbit spacing {part} fails for q={q} (j={j}, k={k})", witness=(j, k))
    return audit


# ---------------------------------------------------------------------------
# separation from the orbit of 0


def min_orbit_distance(beta: LinearForm, alpha: LinearForm, J: int, include_zero: bool = True):
    """min over 0 <= |j| <= J of ||beta - j alpha||, with the minimising j.

    Returns (exact distance form, j).
    """
    js = np.arange(-J, J + 1, dtype=np.int64)
    if not include_zero:
        js = js[js != 0]
    orb = FixedOrbit(beta, -alpha, js)
    d = np.minimum(orb.pos, np.uint64(0) - orb.pos)
    best = d.min()
    cand = np.nonzero(d <= best + np.uint64(min(2 * orb.err, ONE - 1 - int(best))))[0]
    best_form, best_j = None, None
    for idx in cand:
        j = int(js[idx])
        f = dist_form(beta - j * alpha)
        if best_form is None or compare(f, best_form) == Ordering.LESS or (
                f == best_form and abs(j) < abs(best_j)):
            best_form, best_j = f, j
    return best_form, best_j


@dataclass
class SeparationRow:
    n: int
    q: int
    j: int
    distance: LinearForm
    c: LinearForm  # q_n * distance

    @property
    def value(self) -> AdaptiveReal:
        return self.distance.to_real()


@dataclass
class SeparationTable:
    beta: LinearForm
    threshold: Fraction
    rows: list[SeparationRow]
    subsequence: list[int]
    flagged_member: bool
    truncated_at: int | None = None

    def observed_min_c(self) -> float:
        return min(float(r.c) for r in self.rows) if self.rows else math.nan

    def to_csv(self, digits: int = 20) -> str:
        lines = ["n,q_n,value_lo,value_hi"]
        for r in self.rows:
            lo, hi = interval_strings(r.distance, digits)
            lines.append(f"{r.n},{r.q},{lo},{hi}")
        return "\n".join(lines) + "\n"


def separation_table(beta, pq: PartialQuotients, n_max: int, c=Fraction(1, 100)) -> SeparationTable:
    """Exact table of min_{|j| <= q_n} ||beta - j alpha|| for n <= n_max.

    Rows whose scan would exceed the budget are not computed; the table then
    records where it stopped.
    """
    basis = pq.basis
    beta = basis.coerce(beta)
    c = Fraction(c)
    rows = []
    truncated = None
    top = n_max if not pq.finite else min(n_max, len(pq.data))
    for n in range(0, top + 1):
        q = pq.q(n)
        if 2 * q + 1 > MAX_SCAN:
            truncated = n
            break
        dist, j = min_orbit_distance(beta, basis.alpha, q)
        rows.append(SeparationRow(n, q, j, dist, q * dist))
    sub = [r.n for r in rows if compare(r.c, c) != Ordering.LESS]
    return SeparationTable(beta, c, rows, sub, beta.in_zalpha_z(), truncated)


# ---------------------------------------------------------------------------
# membership in Z alpha + Z


class Membership(str, Enum):
    DECLARED_MEMBER = "DeclaredMember"
    EVIDENCE_MEMBER = "EvidenceMember"
    EVIDENCE_NON_MEMBER = "EvidenceNonMember"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class MembershipRow:
    n: int
    q: int
    qbeta: AdaptiveReal  # ||q_n beta||
    bound_a: AdaptiveReal  # q_n ||q_n alpha|| / 4
    crit_a: bool
    inf_dist: AdaptiveReal | None
    bound_b: AdaptiveReal
    crit_b: bool | None


@dataclass
class MembershipReport:
    verdict: Membership
    rows: list[MembershipRow] = field(default_factory=list)
    reason: str = ""


def zalpha_membership_diagnostic(beta, pq: PartialQuotients, n_range: Sequence[int]) -> MembershipReport:
    """Finite-depth evidence on whether beta lies in Z alpha + Z.

    Two criteria are evaluated for every n: ||q_n beta|| <= q_n ||q_n alpha||/4
    and min_{|j| < q_n} ||beta - j alpha|| < ||q_{n+1} alpha||/2.  Both hold
    for all large n exactly when beta is a member.  Failures in the upper
    third of the range count as evidence against membership only when alpha
    has bounded partial quotients; otherwise a member with a large
    coefficient is indistinguishable at this depth and the answer is
    Inconclusive.
    """
    basis = pq.basis
    beta = basis.coerce(beta)
    if beta.in_zalpha_z():
        return MembershipReport(Membership.DECLARED_MEMBER, [], "symbolically in Z alpha + Z")
    ns = sorted(set(int(n) for n in n_range))
    if not ns:
        return MembershipReport(Membership.INCONCLUSIVE, [], "empty range")
    rows = []
    for n in ns:
        q = pq.q(n)
        dn = dist_form(q * basis.alpha)
        qb = dist_form(q * beta)
        bound_a = Fraction(q, 4) * dn
        crit_a = compare(qb, bound_a) != Ordering.GREATER
        bound_b = dist_form(pq.q(n + 1) * basis.alpha) / 2
        if 2 * q - 1 <= MAX_SCAN:
            if q > 1:
                inf, _ = min_orbit_distance(beta, basis.alpha, q - 1)
            else:
                inf = dist_form(beta)
            crit_b = compare(inf, bound_b) == Ordering.LESS
            inf_r = inf.to_real()
        else:
            crit_b, inf_r = None, None
        rows.append(MembershipRow(n, q, qb.to_real(), bound_a.to_real(), crit_a, inf_r,
                                  bound_b.to_real(), crit_b))
    tail = rows[len(rows) - max(1, math.ceil(len(rows) / 3)):]
    holds = [r.crit_a and (r.crit_b is not False) for r in tail]
    if all(holds):
        return MembershipReport(Membership.EVIDENCE_MEMBER, rows, "both criteria hold on the tail")
    if pq.bounded_hint:
        return MembershipReport(Membership.EVIDENCE_NON_MEMBER, rows,
                                "criteria fail on the tail for bounded-type alpha")
    return MembershipReport(Membership.INCONCLUSIVE, rows,
                            "criteria fail but alpha is not of bounded type")


# ---------------------------------------------------------------------------
# Weyl sums along q_n


@dataclass
class WeylRow:
    s: tuple[int, ...]
    average: float
    error: float


def characters_up_to(d: int, bound: int) -> list[tuple[int, ...]]:
    """Nonzero integer vectors of length d with l1 norm <= bound."""
    out = []

    def rec(prefix, left):
        if len(prefix) == d:
            if any(prefix):
                out.append(tuple(prefix))
            return
        for v in range(-left, left + 1):
            rec(prefix + [v], left - abs(v))

    rec([], bound)
    return out


def weyl_equidistribution(betas: Sequence, characters: Sequence[Sequence[int]], pq: PartialQuotients,
                          N: int) -> list[WeylRow]:
    """Cesaro averages (1/N)|sum_{n=1..N} exp(2 pi i <s, q_n beta>)| for each character s."""
    basis = pq.basis
    betas = [basis.coerce(b) for b in betas]
    d = len(betas)
    for s in characters:
        if len(s) != d:
            raise ValueError(f"character {s} has wrong length for d={d}")
        if not any(s):
            raise ValueError("characters must be nonzero")
    if N < 1:
        raise ValueError("N must be positive")
    frac_bits = 56
    qs = [pq.q(n) for n in range(1, N + 1)]
    B = max(qs).bit_length() + max(b.height_bits() for b in betas) + frac_bits + 8
    approx = [b.approx(B) for b in betas]
    mask = (1 << B) - 1
    # fractional parts of q_n beta_j with absolute error below 2**-50
    phases = np.empty((N, d), dtype=np.float64)
    for i, q in enumerate(qs):
        for j, (V, _) in enumerate(approx):
            phases[i, j] = ((q * V) & mask) >> (B - frac_bits)
    phases /= float(1 << frac_bits)
    err_each = 2.0 * math.pi * d * 2.0**-48
    rows = []
    for s in characters:
        arg = phases @ np.asarray(s, dtype=np.float64)
        total = np.exp(2j * math.pi * arg).sum()
        rows.append(WeylRow(tuple(int(v) for v in s), float(abs(total) / N),
                            err_each * max(1, sum(abs(v) for v in s)) + 1e-12))
    return rows
