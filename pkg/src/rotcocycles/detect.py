"""Essential values and regularity: scans, separation tests, reductions, reports.

Everything here produces evidence, never proofs.  Identities that must hold
exactly (measure bounds, change of basis) are checked exactly; verdicts are
labelled as evidence or suspicion.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key, reduce
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from ._fixed import ONE, FixedOrbit
from ._profile import Profile, birkhoff_profile, lengths_by_group
from .arithmetic import (
    LinearForm,
    Ordering,
    PartialQuotients,
    as_fraction,
    compare,
    dist_form,
    interval_strings,
)
from .cocycles import (
    Atom,
    PushforwardDistribution,
    StepCocycle,
    _certified_sort,
    _vec_scale,
    _vec_sub,
    diagonal_line_check,
    diagonal_quotient,
    integer_form,
    normalize_discontinuities,
    pushforward,
    rationality_analysis,
)
from .errors import AtomSearchFailed, AuditFailure, RotCocycleError, SubsequenceExhausted, UndecidableAtCap

DEFAULT_DELTA = Fraction(1, 20)
DEFAULT_TAU = 1e-3
DEFAULT_EPS_CLUSTER = 1e-2
DEFAULT_C_THRESHOLD = Fraction(1, 100)
DEFAULT_N = 30
DEFAULT_NMAX = 10_000
GRID_CELL = 1e-2
POINT_BUDGET = 10_000_000


def _fmt(x) -> str:
    x = as_fraction(x)
    return f"{x.numerator}/{x.denominator}"


def _vec_str(v) -> list[str]:
    return [repr(c) for c in v]


def _depth_limit(pq: PartialQuotients, n: int) -> int:
    return min(n, len(pq.data)) if pq.finite else n


def _feasible(pq: PartialQuotients, n: int, D: int, budget: int = POINT_BUDGET) -> bool:
    """Whether an exact sweep over the D q_n breakpoints fits the budget."""
    return pq.q(n) * max(D, 1) <= budget


# ---------------------------------------------------------------------------
# limit sets of ||q_n beta||


class LimitVerdict(str, enum.Enum):
    NONZERO = "NonzeroEvidence"
    ZERO = "ZeroEvidence"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class LimitSetReport:
    verdict: LimitVerdict
    limit_points: list[float]
    rows: list[tuple[int, int, float]]  # (n, q_n, ||q_n beta||)

    def to_json(self) -> dict:
        return {"verdict": self.verdict.value, "limit_points": self.limit_points,
                "rows": [{"n": n, "q": str(q), "value": v} for n, q, v in self.rows]}


def _clusters_1d(values: Sequence[float], cell: float) -> list[list[int]]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    groups: list[list[int]] = []
    for i in order:
        if groups and values[i] - values[groups[-1][-1]] <= cell:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def limit_set_diagnostic(beta, pq: PartialQuotients, N: int = DEFAULT_N, window: int = 10,
                         tau: float = DEFAULT_TAU, cell: float = GRID_CELL) -> LimitSetReport:
    """Tail clustering of ||q_n beta|| for N - window < n <= N."""
    if N < window:
        raise ValueError("need N >= window")
    beta = pq.basis.coerce(beta)
    N = _depth_limit(pq, N)
    ns = list(range(max(0, N - window + 1), N + 1))
    rows = [(n, pq.q(n), float(dist_form(pq.q(n) * beta))) for n in ns]
    vals = [r[2] for r in rows]
    half = len(vals) // 2
    late = vals[half:]
    if all(v < tau for v in late):
        return LimitSetReport(LimitVerdict.ZERO, [], rows)
    points = []
    for grp in _clusters_1d(vals, cell):
        centre = sum(vals[i] for i in grp) / len(grp)
        if centre >= tau and min(grp) < half <= max(grp):
            points.append(centre)
    if points:
        return LimitSetReport(LimitVerdict.NONZERO, sorted(points), rows)
    return LimitSetReport(LimitVerdict.INCONCLUSIVE, [], rows)


# ---------------------------------------------------------------------------
# lattices of rational vectors


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def lattice_basis(vectors: Sequence[Sequence[Fraction]]) -> list[tuple[Fraction, ...]]:
    """Row-echelon basis of the group generated by rational vectors (Hermite style)."""
    vecs = [tuple(as_fraction(c) for c in v) for v in vectors if any(as_fraction(c) for c in v)]
    if not vecs:
        return []
    den = 1
    for v in vecs:
        for c in v:
            den = _lcm(den, c.denominator)
    rows = [[int(c * den) for c in v] for v in vecs]
    dim = len(rows[0])
    basis = []
    col = 0
    while rows and col < dim:
        rows = [r for r in rows if any(r)]
        live = [r for r in rows if r[col] != 0]
        if not live:
            col += 1
            continue
        while len([r for r in rows if r[col] != 0]) > 1:
            live = sorted((r for r in rows if r[col] != 0), key=lambda r: abs(r[col]))
            piv = live[0]
            for r in live[1:]:
                k = r[col] // piv[col]
                for t in range(dim):
                    r[t] -= k * piv[t]
        piv = next(r for r in rows if r[col] != 0)
        if piv[col] < 0:
            piv[:] = [-x for x in piv]
        basis.append(tuple(Fraction(x, den) for x in piv))
        rows = [r for r in rows if r is not piv]
        col += 1
    return basis


def unimodular_to_e1(w: Sequence[int]) -> list[list[int]]:
    """Integer matrix U with det +-1 and U w = e_1, for a primitive integer vector w."""
    m = len(w)
    v = [int(x) for x in w]
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    if math.gcd(*v) != 1 if m > 1 else abs(v[0]) != 1:
        raise ValueError("vector is not primitive")

    def row_op(dst: int, src: int, k: int):
        v[dst] -= k * v[src]
        for t in range(m):
            U[dst][t] -= k * U[src][t]

    while sum(1 for x in v if x) > 1:
        piv = min((i for i in range(m) if v[i]), key=lambda i: abs(v[i]))
        for j in range(m):
            if j != piv and v[j]:
                row_op(j, piv, v[j] // v[piv])
    piv = next(i for i in range(m) if v[i])
    if piv != 0:
        v[0], v[piv] = v[piv], v[0]
        U[0], U[piv] = U[piv], U[0]
    if v[0] < 0:
        v[0] = -v[0]
        U[0] = [-x for x in U[0]]
    return U


def _mat_mul(A, B):
    return [[sum((A[i][k] * B[k][j] for k in range(len(B))), Fraction(0)) for j in range(len(B[0]))]
            for i in range(len(A))]


def _mat_vec(A, v):
    return [sum((A[i][k] * v[k] for k in range(len(v))), Fraction(0)) for i in range(len(A))]


def mat_inverse(A) -> list[list[Fraction]]:
    n = len(A)
    M = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(A)]
    for c in range(n):
        p = next((r for r in range(c, n) if M[r][c] != 0), None)
        if p is None:
            raise ValueError("singular matrix")
        M[c], M[p] = M[p], M[c]
        inv = 1 / M[c][c]
        M[c] = [x * inv for x in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[c])]
    return [row[n:] for row in M]


# ---------------------------------------------------------------------------
# quasi-periods


@dataclass
class Candidate:
    value: tuple
    eps_achieved: list[float]
    masses: list[float]


@dataclass
class QuasiPeriodReport:
    times: list[int]
    tail: list[int]
    delta: Fraction
    atoms: dict  # time -> list of (value floats, mass float)
    candidates: list[Candidate]
    essential_candidates: list[tuple]  # exact difference vectors, zero included
    generators: list[tuple]  # lattice basis when the differences are rational

    @property
    def nonzero_candidates(self) -> list[tuple]:
        return [v for v in self.essential_candidates if not all(c.is_zero for c in v)]

    def to_json(self) -> dict:
        return {
            "times": [str(t) for t in self.times],
            "tail": [str(t) for t in self.tail],
            "delta": _fmt(self.delta),
            "atoms": {str(t): [{"value": list(v), "mass": m} for v, m in a] for t, a in self.atoms.items()},
            "candidates": [{"value": _vec_str(c.value), "eps": c.eps_achieved, "masses": c.masses}
                           for c in self.candidates],
            "essential_candidates": [_vec_str(v) for v in self.essential_candidates],
            "generators": [[_fmt(c) for c in g] for g in self.generators],
        }


def _eps_for(eps_schedule, i: int, t: int) -> float:
    if eps_schedule is None:
        return 0.05
    if callable(eps_schedule):
        return float(eps_schedule(i, t))
    if isinstance(eps_schedule, (list, tuple)):
        return float(eps_schedule[i])
    return float(eps_schedule)


def _heavy(pf: PushforwardDistribution, delta: Fraction) -> list[Atom]:
    return [a for a in pf.atoms if compare(a.mass, delta) != Ordering.LESS]


def quasi_period_scan(phi: StepCocycle, times: Sequence[int], delta=DEFAULT_DELTA, eps_schedule=None,
                      tail_fraction: float = 0.5,
                      distributions: dict | None = None) -> QuasiPeriodReport:
    """Persistent heavy atoms of phi_t along the given rigidity times."""
    delta = as_fraction(delta)
    times = [int(t) for t in times]
    basis = phi.basis
    zero = tuple(basis.zero() for _ in range(phi.d))
    if delta > 1 or not times:
        return QuasiPeriodReport(times, [], delta, {}, [], [], [])
    if not 0 < delta:
        raise ValueError("delta must be positive")
    ntail = max(1, math.ceil(len(times) * tail_fraction))
    tail = times[-ntail:]
    dists = {}
    for t in times:
        if distributions is not None and t in distributions:
            dists[t] = distributions[t]
        else:
            dists[t] = pushforward(phi, t)
    heavy = {t: _heavy(dists[t], delta) for t in times}
    atoms_json = {t: [(a.value_floats(), float(a.mass)) for a in heavy[t]] for t in times}
    cands = []
    last = tail[-1]
    for a in heavy[last]:
        g = np.array(a.value_floats())
        eps_hist, mass_hist, ok = [], [], True
        for i, t in enumerate(tail):
            eps = _eps_for(eps_schedule, times.index(t), t)
            best = None
            for b in heavy[t]:
                dist = float(np.max(np.abs(np.array(b.value_floats()) - g))) if len(g) else 0.0
                if best is None or dist < best[0]:
                    best = (dist, float(b.mass))
            if best is None or best[0] >= eps:
                ok = False
                break
            eps_hist.append(best[0])
            mass_hist.append(best[1])
        if ok:
            cands.append(Candidate(a.value, eps_hist, mass_hist))
    diffs = [zero]
    for c1, c2 in combinations(cands, 2):
        v = _vec_sub(c1.value, c2.value)
        for w in (v, _vec_scale(v, -1)):
            if w not in diffs:
                diffs.append(w)
    gens = []
    if all(c.is_rational for v in diffs for c in v):
        gens = lattice_basis([[c.rational for c in v] for v in diffs])
    return QuasiPeriodReport(times, tail, delta, atoms_json, cands, diffs, gens)


# ---------------------------------------------------------------------------
# essential value witnesses


@dataclass
class WitnessEntry:
    index: int  # A = [index / 2**depth, (index + 1) / 2**depth)
    N: int | None  # signed time of the witness
    lower_bound: tuple[str, str] | None  # exact measure of one witnessing interval


@dataclass
class WitnessResult:
    g: tuple
    eps: float
    depth: int
    N_max: int
    entries: list[WitnessEntry]
    searched: int  # number of positive times tried
    exhausted: bool  # every |N| <= N_max was tried

    @property
    def all_witnessed(self) -> bool:
        return all(e.N is not None for e in self.entries)

    @property
    def failures(self) -> list[int]:
        return [e.index for e in self.entries if e.N is None]

    def to_json(self) -> dict:
        return {
            "g": [str(x) for x in self.g], "eps": self.eps, "depth": self.depth, "N_max": self.N_max,
            "all_witnessed": self.all_witnessed, "exhausted": self.exhausted, "searched": self.searched,
            "entries": [{"A": e.index, "N": e.N, "lower_bound": list(e.lower_bound) if e.lower_bound else None}
                        for e in self.entries],
        }


def _witness_times(pq: PartialQuotients, N_max: int) -> list[int]:
    qs = [pq.q(n) for n in pq.indices_below(N_max)]
    qs = sorted(set(q for q in qs if q >= 1))
    out = []
    for mult in range(1, 9):
        for q in reversed(qs):
            t = mult * q
            if t <= N_max and t not in out:
                out.append(t)
    return out


def _value_in_ball(prof: Profile, target: Sequence, eps: float) -> np.ndarray:
    """Groups whose value lies in the open sup-norm ball B(target, eps), decided exactly near the edge."""
    tf = np.array([float(t) for t in target])
    dist = np.max(np.abs(prof.fvalues - tf), axis=1) if prof.fvalues.shape[1] else np.zeros(len(prof.values))
    inside = dist < eps - 1e-9
    border = np.nonzero(np.abs(dist - eps) <= 1e-9)[0]
    basis = prof.alpha.basis
    e = as_fraction(eps) if not isinstance(eps, float) else Fraction(eps)
    for g in border:
        val = prof.values[int(g)]
        ok = all(compare(abs(v - basis.coerce(as_fraction(t) if not isinstance(t, LinearForm) else t)), e)
                 == Ordering.LESS for v, t in zip(val, target))
        inside[g] = ok
    return inside


def _overlap_positive(prof: Profile, runs: np.ndarray, lo: LinearForm, hi: LinearForm):
    """Some run in ``runs`` meets [lo, hi) (lo < hi, within [0, 1]) in positive length.

    Returns the exact overlap of one such run, or None.
    """
    if runs.size == 0:
        return None
    shift = 2  # 62-bit positions leave room for the wrapped copy in int64
    s = (prof.pos >> np.uint64(shift)).astype(np.int64)
    half = 1 << 62
    e = np.roll(s, -1)
    e[-1] += half  # the last run wraps through 1
    lo_v, lo_e = lo.approx(62)
    hi_v, hi_e = hi.approx(62)
    err = (prof.err >> shift) + 2 + lo_e + hi_e
    rs = s[runs]
    re_ = e[runs]
    # a run may also be met after wrapping: compare in both unwrapped copies
    best = None
    for off in (0, -half):
        a = np.maximum(rs + off, lo_v)
        b = np.minimum(re_ + off, hi_v)
        ln = b - a
        sure = np.nonzero(ln > 4 * err)[0]
        if sure.size:
            r = int(runs[int(sure[0])])
            return _exact_overlap(prof, r, lo, hi, off != 0)
        maybe = np.nonzero(ln > -4 * err)[0]
        for m in maybe[:64]:
            r = int(runs[int(m)])
            ov = _exact_overlap(prof, r, lo, hi, off != 0)
            if ov is not None:
                best = ov
                return best
    return best


def _exact_overlap(prof: Profile, r: int, lo: LinearForm, hi: LinearForm, wrapped: bool):
    a, b = prof.start(r), prof.end(r)
    if wrapped:
        a, b = a - 1, b - 1
    x = a if compare(a, lo) == Ordering.GREATER else lo
    y = b if compare(b, hi) == Ordering.LESS else hi
    ln = y - x
    return ln if ln.sign() > 0 else None


def _intersections(basis, A_lo: Fraction, h: Fraction, N: int) -> list[tuple[LinearForm, LinearForm]]:
    """A cap (A - N alpha) as intervals inside [0, 1], with A = [A_lo, A_lo + h)."""
    if h >= 1:
        return [(basis.zero(), basis.one)]
    dlt = (-N * basis.alpha).frac()  # A - N alpha = A + dlt
    out = []
    lo = basis.const(A_lo)
    # part where the shifted copy starts inside A
    if compare(dlt, h) == Ordering.LESS:
        a, b = lo + dlt, lo + h
        out.append((a, b))
    if compare(1 - dlt, h) == Ordering.LESS:
        a, b = lo, lo + h - (1 - dlt)
        out.append((a, b))
    res = []
    for a, b in out:
        if compare(b, a) != Ordering.GREATER:
            continue
        # keep within [0, 1] (A itself lies in [0, 1])
        res.append((a, b))
    return res


def essential_value_witness(phi: StepCocycle, g, eps: float, partition_depth: int = 3,
                            N_max: int = DEFAULT_NMAX, times: Sequence[int] | None = None,
                            point_budget: int = 50_000_000) -> WitnessResult:
    """Exact search of mu(A cap T^-N A cap [phi_N in B(g, eps)]) > 0 over dyadic A and |N| <= N_max.

    Negative times reduce to positive ones: the set for -N equals, up to the
    measure preserving map T^N, the set for N with target -g.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    basis = phi.basis
    pq = basis.pq
    g = tuple(g) if isinstance(g, (list, tuple)) else (g,) * phi.d
    if len(g) != phi.d:
        raise ValueError("g has the wrong dimension")
    K = 1 << partition_depth
    h = Fraction(1, K)
    found: dict[int, WitnessEntry] = {}
    order = list(times) if times is not None else _witness_times(pq, N_max)
    seen = set(order)
    budget_used = 0
    searched = 0
    exhausted = False
    neg_g = tuple(-x if not isinstance(x, LinearForm) else -x for x in g)

    def attempt(N: int) -> None:
        nonlocal budget_used, searched
        prof = birkhoff_profile(phi, N)
        budget_used += N * max(phi.D, 1)
        searched += 1
        for sign, target in ((1, g), (-1, neg_g)):
            good = _value_in_ball(prof, target, eps)
            runs = np.nonzero(good[prof.run_group])[0]
            if runs.size == 0:
                continue
            for i in range(K):
                if i in found:
                    continue
                for lo, hi in _intersections(basis, i * h, h, N):
                    ov = _overlap_positive(prof, runs, lo, hi)
                    if ov is not None:
                        found[i] = WitnessEntry(i, sign * N, interval_strings(ov))
                        break

    for N in order:
        if len(found) == K:
            break
        attempt(N)
    N = 1
    while len(found) < K:
        if N > N_max:
            exhausted = True
            break
        if budget_used + N * max(phi.D, 1) > point_budget:
            break
        if N not in seen:
            attempt(N)
        N += 1
    entries = [found.get(i, WitnessEntry(i, None, None)) for i in range(K)]
    return WitnessResult(g, float(eps), partition_depth, N_max, entries, searched, exhausted)


# ---------------------------------------------------------------------------
# well separated discontinuities


@dataclass
class WsdRow:
    n: int
    q: int
    min_gap: LinearForm
    c: LinearForm

    def to_json(self) -> dict:
        return {"n": self.n, "q": str(self.q), "min_gap": list(interval_strings(self.min_gap)),
                "c_q": list(interval_strings(self.c))}


@dataclass
class WsdReport:
    rows: list[WsdRow]
    threshold: Fraction
    subsequence: list[int]
    candidates: list[tuple]
    propose_regular: bool
    skipped: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"threshold": _fmt(self.threshold), "subsequence": self.subsequence,
                "candidates": [_vec_str(c) for c in self.candidates], "propose_regular": self.propose_regular,
                "skipped": self.skipped, "rows": [r.to_json() for r in self.rows]}

    def to_csv(self) -> str:
        lines = ["n,q_n,c_lo,c_hi"]
        for r in self.rows:
            lo, hi = interval_strings(r.c)
            lines.append(f"{r.n},{r.q},{lo},{hi}")
        return "\n".join(lines) + "\n"


def _check_normalized(phi: StepCocycle) -> None:
    pts = phi.points
    for a, b in combinations(pts, 2):
        if (b - a).in_zalpha_z():
            raise ValueError("discontinuities differ by an element of Z alpha + Z; normalize first")


def min_gap(phi: StepCocycle, q: int) -> LinearForm:
    """Exact minimal circular gap of {x_i - k alpha : k < q}."""
    basis = phi.basis
    pts = phi.points
    ks = np.arange(q, dtype=np.int64)
    orbits = [FixedOrbit(x, -basis.alpha, ks) for x in pts]
    pos = np.concatenate([o.pos for o in orbits])
    ints = np.concatenate([o.ints for o in orbits])
    kk = np.tile(ks, len(pts))
    ii = np.repeat(np.arange(len(pts), dtype=np.int64), q)
    err = max(o.err for o in orbits)

    def form(t: int) -> LinearForm:
        return pts[int(ii[t])] - int(kk[t]) * basis.alpha - int(ints[t])

    order = _certified_sort(pos, err, form)
    sp = pos[order]
    gaps = np.empty(len(sp), dtype=np.uint64)
    with np.errstate(over="ignore"):
        gaps[:-1] = sp[1:] - sp[:-1]
        gaps[-1] = sp[0] - sp[-1]  # wraps modulo 2**64
    gmin = int(gaps.min())
    cand = np.nonzero(gaps <= np.uint64(min(gmin + 4 * err + 4, ONE - 1)))[0]
    best = None
    for c in cand:
        c = int(c)
        a = form(int(order[c]))
        b = form(int(order[(c + 1) % len(order)]))
        gap = (b - a) if c + 1 < len(order) else (b + 1 - a)
        if gap.is_zero:
            raise UndecidableAtCap("two discontinuities of phi_q coincide", a, b)
        if best is None or compare(gap, best) == Ordering.LESS:
            best = gap
    return best


def wsd_check(phi: StepCocycle, pq: PartialQuotients | None = None, n_list: Sequence[int] | None = None,
              c_threshold=DEFAULT_C_THRESHOLD, budget: int = 4_000_000) -> WsdReport:
    basis = phi.basis
    pq = pq or basis.pq
    _check_normalized(phi)
    c_threshold = as_fraction(c_threshold)
    if n_list is None:
        n_list = range(0, _depth_limit(pq, 20) + 1)
    rows, skipped = [], []
    for n in n_list:
        q = pq.q(n)
        if q * phi.D > budget:
            skipped.append(n)
            continue
        g = min_gap(phi, q)
        rows.append(WsdRow(n, q, g, q * g))
    sub = [r.n for r in rows if compare(r.c, c_threshold) != Ordering.LESS]
    cands, propose = [], False
    if sub:
        cands = list(phi.jumps)
        if all(c.is_rational for v in cands for c in v):
            gens = lattice_basis([[c.rational for c in v] for v in cands])
            propose = len(gens) == phi.d
    return WsdReport(rows, c_threshold, sub, cands, propose, skipped)


# ---------------------------------------------------------------------------
# clusters


class AffineParam:
    """c0 + c1 * a for a free integer parameter a, with exact coefficients."""

    __slots__ = ("c0", "c1")

    def __init__(self, c0=0, c1=0):
        self.c0 = as_fraction(c0)
        self.c1 = as_fraction(c1)

    def __add__(self, other):
        other = other if isinstance(other, AffineParam) else AffineParam(other)
        return AffineParam(self.c0 + other.c0, self.c1 + other.c1)

    __radd__ = __add__

    def __neg__(self):
        return AffineParam(-self.c0, -self.c1)

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        other = other if isinstance(other, AffineParam) else AffineParam(other)
        return self.c0 == other.c0 and self.c1 == other.c1

    def __hash__(self):
        return hash((self.c0, self.c1))

    def at(self, a) -> Fraction:
        return self.c0 + self.c1 * as_fraction(a)

    def roots(self):
        """Parameter values where the expression vanishes: a set, or None for 'always'."""
        if self.c1 == 0:
            return None if self.c0 == 0 else set()
        return {-self.c0 / self.c1}

    def __repr__(self):
        return f"{self.c0} + {self.c1}*a"


def cluster_sum_table(jumps: Sequence, separated: set | None = None, max_size: int | None = None) -> dict:
    """sigma(C) for every proper subset C of discontinuity types with |C| >= 2 that
    contains no separated pair (such pairs never share a cluster)."""
    D = len(jumps)
    separated = {frozenset(p) for p in (separated or set())}
    top = D - 1 if max_size is None else min(max_size, D - 1)
    table = {}
    for size in range(2, top + 1):
        for C in combinations(range(D), size):
            if any(frozenset(p) in separated for p in combinations(C, 2)):
                continue
            table[C] = reduce(lambda x, y: x + y, (jumps[i] for i in C))
    return table


def criterion_exceptions(table: dict):
    """Parameter values at which some sum vanishes; None if a sum vanishes identically."""
    out = set()
    for s in table.values():
        if isinstance(s, AffineParam):
            r = s.roots()
            if r is None:
                return None
            out |= r
        else:
            zero = all(c.is_zero for c in s) if isinstance(s, tuple) else (s == 0)
            if zero:
                return None
    return out


@dataclass
class Cluster:
    shift: int
    types: list[int]
    scaled: list[float]
    sigma: tuple


@dataclass
class ClusterReport:
    q: int
    eps_cluster: float
    shifts: list[int]
    clusters: list[Cluster]
    zero_proper: list[Cluster]
    max_size: int
    separation_ok: bool | None
    fires: bool
    patterns: dict

    def to_json(self) -> dict:
        return {
            "q": str(self.q), "eps_cluster": self.eps_cluster, "shifts": self.shifts,
            "max_size": self.max_size, "separation_ok": self.separation_ok, "fires": self.fires,
            "zero_proper": [{"shift": c.shift, "types": c.types} for c in self.zero_proper],
            "patterns": {",".join(map(str, k)): v for k, v in self.patterns.items()},
            "clusters": [{"shift": c.shift, "types": c.types, "scaled": c.scaled, "sigma": _vec_str(c.sigma)}
                         for c in self.clusters],
        }


def cluster_analysis(phi: StepCocycle, pq: PartialQuotients | None = None, q: int | None = None,
                     eps_cluster: float = DEFAULT_EPS_CLUSTER, window_shifts: Sequence[int] | None = None,
                     separation_ok: bool | None = None) -> ClusterReport:
    """Discontinuities of phi_q seen through windows of length 4/q at -j alpha, rescaled by q."""
    basis = phi.basis
    pq = pq or basis.pq
    if q is None:
        raise ValueError("q is required")
    pts = phi.points
    jumps = phi.jumps
    D = len(pts)
    if window_shifts is None:
        count = min(q, 64)
        window_shifts = sorted({(i * q) // count for i in range(count)})
    ks = np.arange(q, dtype=np.int64)
    orbits = [FixedOrbit(x, -basis.alpha, ks) for x in pts]
    width = (4 * ONE) // q if q > 4 else ONE - 1
    clusters, zero_proper, patterns = [], [], {}
    max_size = 0
    for j in window_shifts:
        y = (-j * basis.alpha).frac()
        yv, ye = y.approx(64)
        found = []
        for i, o in enumerate(orbits):
            with np.errstate(over="ignore"):
                rel = o.pos - np.uint64(yv % ONE)
            idx = np.nonzero(rel < np.uint64(width))[0]
            for k in idx:
                found.append((i, int(ks[k]), float(int(rel[k])) / float(ONE) * q))
        found.sort(key=lambda t: t[2])
        groups: list[list] = []
        for item in found:
            if groups and item[2] - groups[-1][-1][2] <= eps_cluster:
                groups[-1].append(item)
            else:
                groups.append([item])
        for grp in groups:
            types = [t[0] for t in grp]
            if len(set(types)) != len(types):
                raise AuditFailure("a cluster holds two discontinuities of the same type", (j, types))
            sigma = reduce(lambda a, b: tuple(x + y for x, y in zip(a, b)), (jumps[t] for t in types))
            cl = Cluster(j, types, [t[2] for t in grp], sigma)
            clusters.append(cl)
            max_size = max(max_size, len(types))
            key = tuple(sorted(types))
            patterns[key] = patterns.get(key, 0) + 1
            if 0 < len(set(types)) < D and all(c.is_zero for c in sigma):
                zero_proper.append(cl)
    fires = bool(clusters) and not zero_proper and separation_ok is not False
    return ClusterReport(q, eps_cluster, list(window_shifts), clusters, zero_proper, max_size,
                         separation_ok, fires, patterns)


# ---------------------------------------------------------------------------
# the sets A_{q, l} and their measure


@dataclass
class MesuResult:
    q: int
    ell: int
    measure: LinearForm
    bound: LinearForm
    bound_vacuous: bool
    holds: bool
    bad_by_group: dict  # group -> bad length (LinearForm)
    profile: Profile | None = None

    def to_json(self) -> dict:
        return {"q": str(self.q), "ell": self.ell, "measure": list(interval_strings(self.measure)),
                "bound": list(interval_strings(self.bound)), "bound_vacuous": self.bound_vacuous,
                "holds": self.holds}


def _run_at(prof: Profile, y: LinearForm) -> int:
    """Index of the run containing y (exact)."""
    y = y - y.floor()
    R = prof.runs
    v, _ = y.approx(64)
    r = int(np.searchsorted(prof.pos, np.uint64(min(max(v, 0), ONE - 1)), side="right")) - 1
    r = max(-1, min(r, R - 1))
    while r + 1 < R and compare(prof.start(r + 1), y) != Ordering.GREATER:
        r += 1
    while r >= 0 and compare(prof.start(r), y) == Ordering.GREATER:
        r -= 1
    return r % R  # -1 is the run wrapping through 0


def mesu_measure(phi: StepCocycle, q: int, ell: int, raise_on_failure: bool = False,
                 profile: Profile | None = None) -> MesuResult:
    """Exact measure of A_{q,l} = {x : phi_q(x) = phi_q(x + s q alpha), 1 <= s <= l}.

    With lam = q alpha - round(q alpha) the condition reads
    phi_q(x + s lam) = phi_q(x).  The events c_r - j lam (c_r a change point,
    0 <= j <= l) cut the circle into elementary intervals on which every
    phi_q(x + s lam) is constant, so one lookup per interval and shift
    decides the whole interval.
    """
    basis = phi.basis
    if q < 1 or ell < 0:
        raise ValueError("need q >= 1 and ell >= 0")
    P = (q * basis.alpha).round()
    lam = q * basis.alpha - P
    W = ell * abs(lam)
    bound = 1 - 2 * phi.D * q * W
    vacuous = compare(bound, 0) != Ordering.GREATER
    prof = profile if profile is not None else birkhoff_profile(phi, q)
    R = prof.runs
    if ell == 0 or R == 1 or lam.is_zero:
        return MesuResult(q, ell, basis.one, bound, vacuous, True, {}, prof)
    lam_v, lam_e = lam.approx(64)
    J = ell + 1
    # events, j-major: event t = j * R + r is c_r - j lam
    ev_r = np.tile(np.arange(R, dtype=np.int64), J)
    ev_j = np.repeat(np.arange(J, dtype=np.int64), R)
    shift = np.array([(j * lam_v) % ONE for j in range(J)], dtype=np.uint64)
    with np.errstate(over="ignore"):
        ev_pos = np.tile(prof.pos, J) - np.repeat(shift, R)
    err = prof.err + ell * lam_e + 2
    # wrap correction: the representative in [0, 1) of c_r - j lam
    base = np.tile(prof.pos, J)
    sgn = 1 if lam_v > 0 else -1
    if sgn > 0:
        wrapped = ev_pos > base
    else:
        wrapped = ev_pos < base
    wrapped[ev_j == 0] = False
    e64 = np.uint64(min(err, ONE - 1))
    near = np.nonzero((ev_j > 0) & ((ev_pos < e64) | (ev_pos > np.uint64(ONE - 1) - e64)))[0]
    raw = lambda t: prof.start(int(ev_r[t])) - int(ev_j[t]) * lam  # noqa: E731
    for t in near:
        t = int(t)
        fl = raw(t).floor()
        wrapped[t] = fl != 0
        v, _ = (raw(t) - fl).approx(64)
        ev_pos[t] = np.uint64(min(max(v, 0), ONE - 1))
    wfix = np.where(wrapped, sgn, 0).astype(np.int64)  # representative = raw + wfix

    def form(t: int) -> LinearForm:
        return raw(t) + int(wfix[t])

    order = _certified_sort(ev_pos, err, form)
    sp = ev_pos[order]
    E = len(order)
    nxt = np.roll(order, -1)
    # zero-length elementary intervals
    with np.errstate(over="ignore"):
        gap = np.roll(sp, -1) - sp
    zero = np.zeros(E, dtype=bool)
    for c in np.nonzero(gap <= np.uint64(min(2 * err, ONE - 1)))[0]:
        c = int(c)
        a, b = form(int(order[c])), form(int(order[(c + 1) % E]))
        zero[c] = (a == b) if c + 1 < E else (a == b - 1 or a == b)
    # value group at shifts s = 0 .. l of each elementary interval
    tot = prof.err + 2 * ell * lam_e + 4
    grp0 = None
    bad = np.zeros(E, dtype=bool)
    for s in range(J):
        with np.errstate(over="ignore"):
            y = sp + np.uint64((s * lam_v) % ONE)
        run = np.searchsorted(prof.pos, y, side="right").astype(np.int64) - 1
        run[run < 0] = R - 1
        # exact lookups: shifting event c_r - j lam by j lam lands on c_r
        tags_r = ev_r[order]
        exact = ev_j[order] == s
        run[exact] = tags_r[exact]
        lo = prof.pos[run]
        hi = prof.pos[(run + 1) % R]
        with np.errstate(over="ignore"):
            dlo = y - lo
            dhi = hi - y
        amb = ~exact & ((dlo <= np.uint64(tot)) | (dhi <= np.uint64(tot)) | (y < np.uint64(tot))
                        | (y > np.uint64(ONE - 1 - tot)))
        amb &= ~zero
        for c in np.nonzero(amb)[0]:
            c = int(c)
            run[c] = _run_at(prof, form(int(order[c])) + s * lam)
        g = prof.run_group[run]
        if s == 0:
            grp0 = g
        else:
            bad |= g != grp0
    bad &= ~zero
    # exact bad length per group: sum of form(next) - form(this), plus 1 for the wrapping interval
    idx = np.nonzero(bad)[0]
    a_ev, b_ev = order[idx], nxt[idx]
    gs = grp0[idx]
    G = len(prof.values)
    D = max(len(prof.points), 1)
    xcoef = np.zeros((G, D), dtype=np.int64)
    np.add.at(xcoef, (gs, prof.run_ii[ev_r[b_ev]]), 1)
    np.add.at(xcoef, (gs, prof.run_ii[ev_r[a_ev]]), -1)
    # raw form = x_ii - kk alpha - ints - j lam;  lam = q alpha - P
    acoef = np.zeros(G, dtype=object)
    ccoef = np.zeros(G, dtype=object)
    kk = prof.run_kk.astype(object)
    ints = prof.run_ints.astype(object)

    def alpha_c(t):
        return -kk[ev_r[t]] - ev_j[t].astype(object) * q

    def const_c(t):
        return -ints[ev_r[t]] + ev_j[t].astype(object) * P + wfix[t].astype(object)

    np.add.at(acoef, gs, alpha_c(b_ev) - alpha_c(a_ev))
    np.add.at(ccoef, gs, const_c(b_ev) - const_c(a_ev) + (idx == E - 1).astype(object))
    bad_by_group = {}
    for g_ in np.unique(gs):
        g_ = int(g_)
        m = basis.const(int(ccoef[g_])) + int(acoef[g_]) * basis.alpha
        for i in range(len(prof.points)):
            if xcoef[g_, i]:
                m = m + int(xcoef[g_, i]) * prof.points[i]
        bad_by_group[g_] = m
    total = reduce(lambda x, y: x + y, bad_by_group.values(), basis.zero())
    meas = 1 - total
    holds = compare(meas, bound) != Ordering.LESS
    if not holds and raise_on_failure:
        raise AuditFailure(f"measure of A_(q,l) is below the lower bound for q={q}, l={ell}", (meas, bound))
    return MesuResult(q, ell, meas, bound, vacuous, holds, bad_by_group, prof)


def restricted_law(mres: MesuResult, times_q: int) -> list[Atom]:
    """Law of phi_{t q} restricted to A_{q,l} for 1 <= t <= l + 1, where it equals t phi_q."""
    if not 1 <= times_q <= mres.ell + 1:
        raise ValueError("the multiple must lie in 1 .. l + 1")
    prof = mres.profile
    lens = lengths_by_group(prof)
    out = {}
    for g_, ln in lens.items():
        m = ln - mres.bad_by_group.get(g_, ln.basis.zero())
        if m.is_zero:
            continue
        val = _vec_scale(prof.values[g_], times_q)
        out[val] = out[val] + m if val in out else m
    return [Atom(v, m) for v, m in out.items()]


# ---------------------------------------------------------------------------
# the regime where every ||q_n beta_j|| tends to 0


@dataclass
class Qn00Row:
    n: int
    q: int
    j0: int
    ell: int
    L: int
    measure: LinearForm | None
    atoms: list[Atom]
    near_mass: LinearForm | None  # mass of atoms with coordinate j0 within tol of +-rho
    concentration: tuple | None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "n": self.n, "q": str(self.q), "j0": self.j0, "ell": self.ell, "L": self.L,
            "measure": list(interval_strings(self.measure)) if self.measure is not None else None,
            "near_mass": list(interval_strings(self.near_mass)) if self.near_mass is not None else None,
            "concentration": [float(c) for c in self.concentration] if self.concentration else None,
            "atoms": [{"value": [float(v) for v in a.value], "mass": float(a.mass)} for a in self.atoms],
            "note": self.note,
        }


@dataclass
class Qn00Report:
    rho: Fraction
    eta: Fraction
    rows: list[Qn00Row]

    @property
    def subsequence(self) -> list[int]:
        return [r.n for r in self.rows if r.measure is not None]

    def to_json(self) -> dict:
        return {"rho": _fmt(self.rho), "eta": _fmt(self.eta), "subsequence": self.subsequence,
                "rows": [r.to_json() for r in self.rows]}


def qn00_scan(phi: StepCocycle, pq: PartialQuotients | None = None, rho=None, eta=Fraction(1, 32),
              subsequence: Sequence[int] | None = None, tol: float = 0.05, budget: int = POINT_BUDGET,
              check_limits: bool = True) -> Qn00Report:
    basis = phi.basis
    pq = pq or basis.pq
    eta = as_fraction(eta)
    rho = eta / 2 if rho is None else as_fraction(rho)
    if not 0 < rho < eta:
        raise ValueError("need 0 < rho < eta")
    # D counts the betas here (one per coordinate), not the breakpoints of phi
    if eta >= Fraction(1, 16 * phi.d):
        raise ValueError("need eta < 1/(16 d)")
    info = integer_form(phi)
    if info is None:
        raise ValueError("qn00 needs a cocycle with rational values")
    betas = info.betas
    if any(b.in_zalpha_z() for b in betas):
        raise ValueError("some beta_j lies in Z alpha + Z; normalize first")
    if check_limits:
        for b in betas:
            rep = limit_set_diagnostic(b, pq, _depth_limit(pq, DEFAULT_N), 10)
            if rep.verdict != LimitVerdict.ZERO:
                raise ValueError("qn00 needs ||q_n beta_j|| -> 0 for every j")
    scaled = info.scaled  # m * Phi
    ns = list(subsequence) if subsequence is not None else list(range(0, _depth_limit(pq, DEFAULT_N) + 1))
    rows = []
    any_lemma = False
    for n in ns:
        q = pq.q(n)
        dq = [dist_form(q * b) for b in betas]
        qa = dist_form(q * basis.alpha)
        if compare(dq[0], Fraction(q, 4) * qa) != Ordering.GREATER:
            continue
        any_lemma = True
        j0 = max(range(len(dq)), key=lambda j: float(dq[j]))
        ell = math.floor(rho / Fraction(float(dq[j0]))) if not dq[j0].is_zero else 0
        # exact floors
        ell = _floor_ratio(rho, dq[j0])
        L = _floor_ratio(eta, dq[0])
        if ell < 1:
            rows.append(Qn00Row(n, q, j0, ell, L, None, [], None, None, "l_n = 0"))
            continue
        if q * max(phi.D, 1) > budget:
            rows.append(Qn00Row(n, q, j0, ell, L, None, [], None, None, "beyond the point budget"))
            continue
        mres = mesu_measure(scaled, q, L)
        atoms = restricted_law(mres, ell) if ell <= L + 1 else []
        # values of m * Phi; the concentration is stated for Phi itself
        m = info.multiplier
        atoms = [Atom(_vec_scale(a.value, Fraction(1, m)), a.mass) for a in atoms]
        near = basis.zero()
        for a in atoms:
            v = float(a.value[j0])
            if abs(abs(v) - float(rho)) <= tol:
                near = near + a.mass
        heavy = max(atoms, key=lambda a: float(a.mass)) if atoms else None
        rows.append(Qn00Row(n, q, j0, ell, L, mres.measure, atoms, near,
                            heavy.value if heavy else None))
    if not any_lemma:
        raise SubsequenceExhausted("no n in range with ||q_n beta_1|| > q_n ||q_n alpha|| / 4")
    return Qn00Report(rho, eta, rows)


def _floor_ratio(x: Fraction, y: LinearForm) -> int:
    from .arithmetic import floor_div

    if y.is_zero:
        return 0
    return floor_div(y.basis.const(x), y)


# ---------------------------------------------------------------------------
# rational reduction


@dataclass
class ReductionStep:
    index: int
    j0: int
    subsequence: list[int]
    atoms: tuple  # the two atom values whose difference was used
    theta: tuple  # difference in the coordinates current at this step
    matrix: list[list[Fraction]]


@dataclass
class ReductionResult:
    d_phi: int
    multiplier: int
    M: list[list[Fraction]]  # acts on multiplier * Phi
    reduced: StepCocycle
    steps: list[ReductionStep]
    residual_traces: dict  # coordinate -> [(n, ||q_n beta_j||)]
    note: str = ""

    def generators(self) -> list[tuple[Fraction, ...]]:
        """Witnessed essential values in the original coordinates of Phi."""
        Minv = mat_inverse(self.M)
        d = len(self.M)
        out = []
        for i in range(self.d_phi):
            e = [Fraction(int(k == i)) for k in range(d)]
            out.append(tuple(x / self.multiplier for x in _mat_vec(Minv, e)))
        return out

    def to_json(self) -> dict:
        return {
            "d_phi": self.d_phi, "multiplier": self.multiplier,
            "M": [[_fmt(x) for x in row] for row in self.M],
            "generators": [[_fmt(x) for x in g] for g in self.generators()],
            "steps": [{"index": s.index, "j0": s.j0, "subsequence": s.subsequence,
                       "atoms": [_vec_str(a) for a in s.atoms], "theta": _vec_str(s.theta)} for s in self.steps],
            "residual_traces": {str(j): t for j, t in self.residual_traces.items()},
            "note": self.note,
        }


def grid_subsequence(betas: Sequence[LinearForm], pq: PartialQuotients, ns: Sequence[int],
                     cell: float = GRID_CELL, require=None) -> list[int]:
    """Largest grid cell of ({q_n beta_j})_j on the torus; ties go to the cell reached last."""
    cells: dict = {}
    for n in ns:
        if require is not None and not require(n):
            continue
        q = pq.q(n)
        key = tuple(int(math.floor(float((q * b).frac()) / cell)) for b in betas)
        cells.setdefault(key, []).append(n)
    if not cells:
        return []
    return max(cells.values(), key=lambda v: (len(v), v[-1]))


def rational_reduction(phi: StepCocycle, pq: PartialQuotients | None = None, N: int = 20,
                       tau: float = DEFAULT_TAU, delta=DEFAULT_DELTA, window: int = 10,
                       persist: int = 3) -> ReductionResult:
    """Find integer essential values one coordinate block at a time and change basis."""
    basis = phi.basis
    pq = pq or basis.pq
    delta = as_fraction(delta)
    info = integer_form(phi)
    if info is None:
        raise ValueError("rational reduction needs a cocycle with rational values")
    d = phi.d
    N = _depth_limit(pq, N)
    window = min(window, N)
    cur = info.scaled
    M = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
    steps: list[ReductionStep] = []
    ns_all = list(range(max(1, N - window + 1), N + 1))
    note = ""
    for i in range(d):
        ra = rationality_analysis(cur)
        betas = [r.beta for r in ra]
        live = [j for j in range(i, d)
                if limit_set_diagnostic(betas[j], pq, N, window, tau).verdict == LimitVerdict.NONZERO]
        if not live:
            break
        j0 = live[0]
        sub = grid_subsequence(betas, pq, ns_all,
                               require=lambda n: float(dist_form(pq.q(n) * betas[j0])) >= tau)
        if not sub:
            note = f"no subsequence for coordinate {j0}"
            break
        use = sub[-persist:]
        pairs = None
        atom_sets = []
        for n in use:
            pf = pushforward(cur, pq.q(n))
            heavy = _heavy(pf, delta)
            atom_sets.append(heavy)
            diffs = {}
            for a, b in combinations(heavy, 2):
                for x, y in ((a, b), (b, a)):
                    th = _vec_sub(x.value, y.value)
                    if not th[j0].is_zero:
                        diffs.setdefault(th, (x.value, y.value))
            pairs = diffs if pairs is None else {k: v for k, v in pairs.items() if k in diffs}
        if not pairs:
            raise AtomSearchFailed(f"no persistent pair of heavy atoms differing in coordinate {j0}")

        def score(th):
            outside = sum(abs(float(th[k])) for k in range(i, d) if k != j0)
            return (outside, abs(float(th[j0])), sum(abs(float(th[k])) for k in range(i)),
                    float(th[j0]) < 0)

        theta = min(pairs, key=score)
        if not all(c.is_integer for c in theta):
            raise AtomSearchFailed("the difference of heavy atoms is not an integer vector")
        th = [int(c.rational) for c in theta]
        block = th[i:]
        g = math.gcd(*block) if len(block) > 1 else abs(block[0])
        U = unimodular_to_e1([x // g for x in block])
        S = [[Fraction(int(r == c)) for c in range(d)] for r in range(d)]
        for r in range(d - i):
            for c in range(d - i):
                S[i + r][i + c] = Fraction(U[r][c])
        # clear earlier coordinates of theta using e_1 .. e_{i-1} and scale row i
        S[i] = [x / g for x in S[i]]
        for k in range(i):
            S[k] = list(S[k])
        theta_t = [Fraction(x) for x in th]
        for k in range(i):
            theta_t[k] = Fraction(0)
        img = _mat_vec(S, theta_t)
        if img != [Fraction(int(k == i)) for k in range(d)]:
            raise AuditFailure("basis completion did not map the essential value to e_i", img)
        cur = cur.linear_image(S)
        M = _mat_mul(S, M)
        steps.append(ReductionStep(i, j0, use, pairs[theta], theta, S))
    dphi = len(steps)
    # residual coordinates should have ||q_n beta_j|| -> 0
    ra = rationality_analysis(cur)
    traces = {}
    for j in range(dphi, d):
        b = ra[j].beta
        traces[j] = [(n, float(dist_form(pq.q(n) * b))) for n in ns_all] if b is not None else []
    # M^{-1} (M m Phi) recovers m Phi exactly
    back = cur.linear_image(mat_inverse(M))
    if back.values != info.scaled.values or back.breakpoints != info.scaled.breakpoints:
        raise AuditFailure("inverse change of basis does not recover the cocycle")
    return ReductionResult(dphi, info.multiplier, M, cur, steps, traces, note)


# ---------------------------------------------------------------------------
# the report


class Verdict(str, enum.Enum):
    ERGODIC = "ErgodicEvidence"
    REGULAR = "RegularEvidence"
    COBOUNDARY = "CoboundaryEvidence"
    NON_REGULAR = "NonRegularSuspect"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ReportConfig:
    N: int = 20
    window: int = 10
    delta: Fraction = DEFAULT_DELTA
    tau: float = DEFAULT_TAU
    eps_cluster: float = DEFAULT_EPS_CLUSTER
    c_threshold: Fraction = DEFAULT_C_THRESHOLD
    eta: Fraction = Fraction(1, 32)
    rho: Fraction | None = None
    ostrowski_depth: int = 20
    ab_grid: tuple = (-1, 0, 1, 2)
    budget: int = 4_000_000


@dataclass
class ChainEntry:
    op: str
    params: dict
    summary: dict
    artifact: object = None

    def to_json(self) -> dict:
        return {"op": self.op, "params": self.params, "summary": self.summary}


@dataclass
class RegularityReport:
    verdict: Verdict
    generators: list
    chain: list[ChainEntry]

    def to_json(self) -> dict:
        return {"verdict": self.verdict.value, "generators": [[str(x) for x in g] for g in self.generators],
                "chain": [c.to_json() for c in self.chain]}


def _template_ell(phi: StepCocycle):
    """Detect phi = l 1_[0,beta) - 1_[0,l beta) (up to the mean); returns (l, beta) or None."""
    if phi.d != 1 or phi.D != 3:
        return None
    js = {x: s[0] for x, s in phi.discontinuities}
    zero = phi.basis.zero()
    if zero not in js:
        return None
    others = [x for x in js if x != zero]
    for beta, lb in (others, others[::-1]):
        if js[beta] == -js[zero] - js[lb] and js[lb].is_rational and js[lb].rational == 1:
            ell = -js[beta]
            if ell.is_rational and ell.rational.denominator == 1 and ell.rational > 1:
                l_ = int(ell.rational)
                if l_ * beta == lb:
                    return l_, beta
    return None


def _safe(entry_op: str, params: dict, fn: Callable, chain: list):
    try:
        res = fn()
    except (RotCocycleError, ValueError, MemoryError) as exc:
        chain.append(ChainEntry(entry_op, params, {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}))
        return None
    return res


def regularity_report(target, pq: PartialQuotients | None = None, config: ReportConfig | None = None
                      ) -> RegularityReport:
    """Run the detection pipeline and aggregate a verdict.

    ``target`` is a StepCocycle, or a sequence of betas for the affine
    cocycle, which is first reduced to its diagonal quotient.
    """
    cfg = config or ReportConfig()
    chain: list[ChainEntry] = []
    if isinstance(target, StepCocycle):
        phi = target
        basis = phi.basis
    else:
        if pq is None:
            raise ValueError("betas need the partial quotients")
        basis = pq.basis
        betas = [basis.coerce(b) for b in target]
        diag = _safe("diag-line", {"n": 8}, lambda: diagonal_line_check(basis, betas, 8, sample_count=20), chain)
        if diag is not None:
            chain.append(ChainEntry("diag-line", {"n": 8}, {"passed": diag.passed, "failures": diag.failures}))
        phi = diagonal_quotient(basis, betas)
    pq = pq or basis.pq
    N = _depth_limit(pq, cfg.N)

    # 1. normalisation
    phin, log = normalize_discontinuities(phi)
    chain.append(ChainEntry("normalize", {}, {"removed": len(log), "D": phin.D}))
    if phin.D == 0:
        return RegularityReport(Verdict.COBOUNDARY, [], chain)

    # 2. rationality and reduction
    info = integer_form(phin)
    red = None
    betas_r: list = []
    if info is not None:
        betas_r = list(info.betas)
        chain.append(ChainEntry("rationality", {}, {"multiplier": info.multiplier,
                                                   "betas": [repr(b) for b in betas_r]}))
        red = _safe("reduce", {"N": N}, lambda: rational_reduction(phin, pq, N, cfg.tau, cfg.delta, cfg.window),
                    chain)
        if red is not None:
            chain.append(ChainEntry("reduce", {"N": N}, {"d_phi": red.d_phi,
                                                         "M": [[_fmt(x) for x in r] for r in red.M]}, red))
    else:
        chain.append(ChainEntry("rationality", {}, {"rational": False}))

    # 3. wsd
    ns = [n for n in range(0, N + 1) if pq.q(n) * phin.D <= cfg.budget]
    wsd = _safe("wsd", {"n_max": N}, lambda: wsd_check(phin, pq, ns, cfg.c_threshold, cfg.budget), chain)
    if wsd is not None:
        chain.append(ChainEntry("wsd", {"n_max": N}, {"subsequence": wsd.subsequence,
                                                      "propose_regular": wsd.propose_regular}, wsd))

    # 4. clusters at the largest feasible denominator
    if ns:
        qc = pq.q(ns[-1])
        cl = _safe("clusters", {"q": qc}, lambda: cluster_analysis(phin, pq, qc, cfg.eps_cluster), chain)
        if cl is not None:
            chain.append(ChainEntry("clusters", {"q": str(qc)}, {"fires": cl.fires, "max_size": cl.max_size,
                                                                 "zero_proper": len(cl.zero_proper)}, cl))

    # 5. qn00 when every beta_j has limit set {0}
    limit_zero = False
    if betas_r:
        reps = [limit_set_diagnostic(b, pq, N, min(cfg.window, N), cfg.tau) for b in betas_r]
        limit_zero = all(r.verdict == LimitVerdict.ZERO for r in reps)
        chain.append(ChainEntry("limit-sets", {}, {"verdicts": [r.verdict.value for r in reps]}))
        if limit_zero and not any(b.in_zalpha_z() for b in betas_r):
            qr = _safe("qn00", {"eta": _fmt(cfg.eta)},
                       lambda: qn00_scan(phin, pq, cfg.rho, cfg.eta, check_limits=False), chain)
            if qr is not None:
                chain.append(ChainEntry("qn00", {"eta": _fmt(cfg.eta)}, {"subsequence": qr.subsequence}, qr))

    # 6. Ostrowski digits
    coboundary = False
    tpl = _template_ell(phin)
    if tpl is not None:
        ell, beta = tpl
        from .ostrowski import CoboundaryVerdict, coboundary_criterion, expand

        def run():
            exp = expand(beta, pq, _depth_limit(pq, cfg.ostrowski_depth))
            return coboundary_criterion(ell, exp)

        res = _safe("ostrowski", {"ell": ell}, run, chain)
        if res is not None:
            chain.append(ChainEntry("ostrowski", {"ell": ell}, {"verdict": res.verdict.value, "trend": res.trend}))
            coboundary = res.verdict == CoboundaryVerdict.EVIDENCE_COBOUNDARY
    else:
        chain.append(ChainEntry("ostrowski", {}, {"status": "no digit criterion applies to this shape"}))
    if coboundary:
        return RegularityReport(Verdict.COBOUNDARY, [], chain)

    # 7. quasi-periods along a grid subsequence of denominators
    ns_tail = [n for n in range(max(1, N - cfg.window + 1), N + 1)]
    if betas_r:
        sub = grid_subsequence(betas_r, pq, ns_tail) or ns_tail
    else:
        sub = ns_tail
    times, dists, dropped = [], {}, []
    for n in sub:
        t = pq.q(n)
        try:
            dists[t] = pushforward(phin, t)
            times.append(t)
        except UndecidableAtCap as exc:
            dropped.append({"n": n, "error": str(exc)[:200]})
    if dropped:
        chain.append(ChainEntry("scan-times", {"n": sub}, {"undecidable": dropped}))
    qp = _safe("scan", {"times": [str(t) for t in times]},
               lambda: quasi_period_scan(phin, times, cfg.delta, distributions=dists), chain)
    nonzero = []
    if qp is not None:
        nonzero = qp.nonzero_candidates
        chain.append(ChainEntry("scan", {"n": sub}, {"candidates": len(qp.candidates),
                                                     "nonzero_differences": len(nonzero),
                                                     "generators": [[_fmt(c) for c in g] for g in qp.generators]}, qp))

    # 8. two-dimensional combinations
    if phin.d == 2 and red is not None and red.d_phi < 2:
        combos = {}
        for a in cfg.ab_grid:
            for b in cfg.ab_grid:
                if (a, b) == (0, 0):
                    continue
                comb = phin.linear_image([[a, b]])
                if comb.D == 0:
                    combos[f"{a},{b}"] = "zero"
                    continue
                r = _safe("combination", {"a": a, "b": b},
                          lambda comb=comb: quasi_period_scan(comb, times, cfg.delta), chain)
                combos[f"{a},{b}"] = None if r is None else len(r.nonzero_candidates)
        chain.append(ChainEntry("combinations", {"grid": list(cfg.ab_grid)}, {"nonzero_candidates": combos}))

    # verdict
    generators = []
    if red is not None and red.d_phi > 0:
        generators = red.generators()
    elif qp is not None and qp.generators:
        generators = qp.generators
    if nonzero or (red is not None and red.d_phi > 0):
        full = red is not None and red.d_phi == phin.d
        if phin.d == 1 or full or (wsd is not None and wsd.propose_regular):
            if len(generators) > phin.d:
                return RegularityReport(Verdict.ERGODIC, generators, chain)
            return RegularityReport(Verdict.REGULAR, generators, chain)
        return RegularityReport(Verdict.INCONCLUSIVE, generators, chain)
    if qp is not None and qp.candidates:
        return RegularityReport(Verdict.NON_REGULAR, [], chain)
    return RegularityReport(Verdict.INCONCLUSIVE, [], chain)
