"""Step cocycles over the rotation x -> x + alpha, their Birkhoff sums and laws.

A step cocycle is a vector valued function on [0, 1) that is constant on
finitely many half-open intervals.  Endpoints and values are exact linear
forms, so Birkhoff sums and the law of phi_n under Lebesgue measure are
computed without rounding.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key, reduce
from typing import Callable, Sequence

import numpy as np

from ._fixed import ONE, FixedOrbit
from .arithmetic import (
    Basis,
    LinearForm,
    Ordering,
    PartialQuotients,
    compare,
    dist_form,
)
from .errors import AuditFailure, EmptyPartition, UndecidableAtCap

Vector = tuple  # tuple of LinearForm


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _vec_add(a: Vector, b: Vector) -> Vector:
    return tuple(x + y for x, y in zip(a, b))


def _vec_sub(a: Vector, b: Vector) -> Vector:
    return tuple(x - y for x, y in zip(a, b))


def _vec_scale(a: Vector, k) -> Vector:
    return tuple(x * k for x in a)


def _is_zero_vec(a: Vector) -> bool:
    return all(x.is_zero for x in a)


def _linear_product(a: LinearForm, b: LinearForm) -> LinearForm:
    if a.is_rational:
        return b * a.rational
    if b.is_rational:
        return a * b.rational
    raise ValueError(f"product {a!r} * ({b!r}) is not a linear form")


@dataclass(frozen=True)
class Piece:
    lo: LinearForm
    hi: LinearForm
    value: Vector


class StepCocycle:
    """Canonical zero-mean step cocycle.

    ``pieces`` partition [0, 1) in increasing order with no two adjacent
    pieces sharing a value.  ``mean_removed`` is what was subtracted to make
    every coordinate integrate to zero.
    """

    def __init__(self, basis: Basis, d: int, pieces: list[Piece], mean_removed: Vector):
        self.basis = basis
        self.d = d
        self.pieces = pieces
        self.mean_removed = mean_removed
        self._bp_cache = None
        P = len(pieces)
        # discontinuities: the point u_p with jump v_p - v_{p-1}; at 0 the jump wraps
        disc = []
        for p in range(P):
            jump = _vec_sub(pieces[p].value, pieces[p - 1].value)
            if not _is_zero_vec(jump):
                disc.append((pieces[p].lo, jump))
        self.discontinuities: list[tuple[LinearForm, Vector]] = disc

    # ----- derived quantities
    @property
    def D(self) -> int:
        return len(self.discontinuities)

    @property
    def points(self) -> list[LinearForm]:
        return [x for x, _ in self.discontinuities]

    @property
    def jumps(self) -> list[Vector]:
        return [s for _, s in self.discontinuities]

    @property
    def variation(self) -> Vector:
        """Total variation on the circle of each coordinate."""
        out = []
        for j in range(self.d):
            v = self.basis.zero()
            for _, s in self.discontinuities:
                v = v + abs(s[j])
            out.append(v)
        return tuple(out)

    @property
    def window(self) -> int | None:
        """L + 1 where L = max_j V(phi^j), when the variations are rational."""
        vs = self.variation
        if not all(v.is_rational for v in vs):
            return None
        return math.floor(max((v.rational for v in vs), default=Fraction(0))) + 1

    @property
    def breakpoints(self) -> list[LinearForm]:
        return [pc.lo for pc in self.pieces[1:]]

    @property
    def values(self) -> list[Vector]:
        return [pc.value for pc in self.pieces]

    def canonical_terms(self) -> list[list[tuple[LinearForm, LinearForm, LinearForm]]]:
        """Per coordinate, the terms (t_i, lo, hi) with phi = sum t_i (1_[lo,hi) - mu)."""
        out = []
        for j in range(self.d):
            terms = []
            start = 0
            P = len(self.pieces)
            for p in range(1, P + 1):
                if p == P or self.pieces[p].value[j] != self.pieces[start].value[j]:
                    terms.append((self.pieces[start].value[j], self.pieces[start].lo, self.pieces[p - 1].hi))
                    start = p
            out.append(terms)
        return out

    def __call__(self, x) -> Vector:
        x = self.basis.coerce(x).frac()
        lo, hi = 0, len(self.pieces) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if compare(self.pieces[mid].lo, x) != Ordering.GREATER:
                lo = mid
            else:
                hi = mid - 1
        return self.pieces[lo].value

    def __repr__(self) -> str:
        parts = ", ".join(f"[{pc.lo!r}, {pc.hi!r})->{list(pc.value)!r}" for pc in self.pieces)
        return f"StepCocycle(d={self.d}, {parts})"

    # ----- algebra
    def _merge(self, other: "StepCocycle", op: Callable[[Vector, Vector], Vector], d: int) -> "StepCocycle":
        if other.basis is not self.basis:
            raise ValueError("cocycles over different bases")
        cuts = _sorted_unique(self.basis, [pc.lo for pc in self.pieces] + [pc.lo for pc in other.pieces])
        cuts.append(self.basis.one)
        pieces = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            pieces.append((a, b, op(self(a), other(a))))
        return make_step(d, pieces, basis=self.basis)

    def __add__(self, other: "StepCocycle") -> "StepCocycle":
        return self._merge(other, _vec_add, self.d)

    def __sub__(self, other: "StepCocycle") -> "StepCocycle":
        return self._merge(other, _vec_sub, self.d)

    def __mul__(self, k) -> "StepCocycle":
        pieces = [(pc.lo, pc.hi, _vec_scale(pc.value, k)) for pc in self.pieces]
        return make_step(self.d, pieces, basis=self.basis)

    __rmul__ = __mul__

    def __neg__(self) -> "StepCocycle":
        return self * -1

    def stack(self, *others: "StepCocycle") -> "StepCocycle":
        """Concatenate coordinates into one cocycle."""
        out = self
        for o in others:
            out = out._merge(o, lambda a, b: a + b, out.d + o.d)
        return out

    def coordinate(self, j: int) -> "StepCocycle":
        return make_step(1, [(pc.lo, pc.hi, (pc.value[j],)) for pc in self.pieces], basis=self.basis)

    def linear_image(self, matrix: Sequence[Sequence]) -> "StepCocycle":
        """The cocycle x -> M Phi(x) for a rational matrix M."""
        M = [[Fraction(c) for c in row] for row in matrix]
        if any(len(row) != self.d for row in M):
            raise ValueError("matrix has wrong number of columns")
        pieces = []
        for pc in self.pieces:
            val = tuple(reduce(lambda acc, t: acc + t, (row[j] * pc.value[j] for j in range(self.d)),
                               self.basis.zero()) for row in M)
            pieces.append((pc.lo, pc.hi, val))
        return make_step(len(M), pieces, basis=self.basis)

    def rotate(self, r) -> "StepCocycle":
        """The cocycle x -> Phi(x + r)."""
        r = self.basis.coerce(r).frac()
        if r.is_zero:
            return self
        pieces = []
        for pc in self.pieces:
            # the image [lo - r, hi - r) may wrap around 1
            lo_s = pc.lo - r
            hi_s = pc.hi - r
            shift = -lo_s.floor()
            lo_s, hi_s = lo_s + shift, hi_s + shift
            if compare(hi_s, 1) != Ordering.GREATER:
                pieces.append((lo_s, hi_s, pc.value))
            else:
                pieces.append((lo_s, self.basis.one, pc.value))
                pieces.append((self.basis.zero(), hi_s - 1, pc.value))
        return make_step(self.d, pieces, basis=self.basis)

    # ----- serialization
    def to_json(self) -> dict:
        return {
            "d": self.d,
            "pieces": [
                {"lo": pc.lo.to_json(), "hi": pc.hi.to_json(), "value": [v.to_json() for v in pc.value]}
                for pc in self.pieces
            ],
            "mean_removed": [v.to_json() for v in self.mean_removed],
        }


def _sorted_unique(basis: Basis, forms: list[LinearForm]) -> list[LinearForm]:
    uniq = list(dict.fromkeys(forms))
    uniq.sort(key=cmp_to_key(lambda a, b: int(compare(a, b))))
    out = []
    for f in uniq:
        if not out or f != out[-1]:
            out.append(f)
    return out


def make_step(d: int, pieces, basis: Basis | None = None, *, center: bool = True) -> StepCocycle:
    """Build a canonical zero-mean step cocycle from (lo, hi, value) triples.

    Pieces must partition [0, 1).  Adjacent pieces with equal values are
    merged and the exact mean is subtracted from every coordinate.
    """
    triples = []
    for pc in pieces:
        if isinstance(pc, Piece):
            triples.append((pc.lo, pc.hi, pc.value))
        elif isinstance(pc, dict):
            triples.append((pc["lo"], pc["hi"], pc["value"]))
        else:
            triples.append(tuple(pc))
    if basis is None:
        for lo, hi, val in triples:
            for f in (lo, hi, *val):
                if isinstance(f, LinearForm):
                    basis = f.basis
                    break
            if basis is not None:
                break
    if basis is None:
        raise ValueError("cannot infer the basis; pass basis=")
    norm = []
    for lo, hi, val in triples:
        if not isinstance(val, (list, tuple)):
            val = (val,)
        if len(val) != d:
            raise ValueError(f"piece value has length {len(val)}, expected {d}")
        lo, hi = basis.coerce(lo), basis.coerce(hi)
        c = compare(lo, hi)
        if c == Ordering.GREATER:
            raise EmptyPartition(f"piece [{lo!r}, {hi!r}) has lo > hi")
        if c == Ordering.EQUAL:
            continue
        norm.append((lo, hi, tuple(basis.coerce(v) for v in val)))
    if not norm:
        raise EmptyPartition("no pieces of positive length")
    norm.sort(key=cmp_to_key(lambda a, b: int(compare(a[0], b[0]))))
    if not norm[0][0].is_zero:
        raise EmptyPartition("pieces do not start at 0")
    for (_, hi, _), (lo, _, _) in zip(norm[:-1], norm[1:]):
        if hi != lo:
            raise EmptyPartition(f"gap or overlap between pieces at {hi!r} and {lo!r}")
    if norm[-1][1] != basis.one:
        raise EmptyPartition("pieces do not end at 1")
    merged = [list(norm[0])]
    for lo, hi, val in norm[1:]:
        if val == merged[-1][2]:
            merged[-1][1] = hi
        else:
            merged.append([lo, hi, val])
    # exact mean: v_0 + sum over jumps sigma_p (1 - u_p)
    mean = list(merged[0][2])
    for p in range(1, len(merged)):
        jump = _vec_sub(merged[p][2], merged[p - 1][2])
        rest = 1 - merged[p][0]
        for j in range(d):
            mean[j] = mean[j] + _linear_product(jump[j], rest)
    mean = tuple(mean)
    if not center:
        mean = tuple(basis.zero() for _ in range(d))
    out = [Piece(lo, hi, _vec_sub(val, mean)) for lo, hi, val in merged]
    return StepCocycle(basis, d, out, mean)


def indicator_arc(basis: Basis, a, b) -> StepCocycle:
    """The uncentred indicator of the arc [a, b) of the circle (d = 1)."""
    a = basis.coerce(a)
    b = basis.coerce(b)
    length = (b - a).frac()
    a = a.frac()
    b = (a + length)
    one, zero = (basis.one,), (basis.zero(),)
    if length.is_zero:
        return make_step(1, [(0, 1, zero)], basis=basis, center=False)
    if compare(b, 1) != Ordering.GREATER:
        pieces = [(0, a, zero), (a, b, one), (b, 1, zero)]
    else:
        pieces = [(0, b - 1, one), (b - 1, a, zero), (a, 1, one)]
    return make_step(1, pieces, basis=basis, center=False)


def indicator(basis: Basis, beta) -> StepCocycle:
    """1_[0, beta) - beta."""
    return make_step(1, indicator_arc(basis, 0, beta).pieces, basis=basis)


def from_indicators(basis: Basis, terms, d: int | None = None) -> StepCocycle:
    """Centred sum of coefficient vectors times arc indicators: terms are (coeffs, a, b)."""
    acc = None
    for coeffs, a, b in terms:
        if not isinstance(coeffs, (list, tuple)):
            coeffs = (coeffs,)
        ind = indicator_arc(basis, a, b)
        pieces = [(pc.lo, pc.hi, tuple(pc.value[0] * Fraction(c) for c in coeffs)) for pc in ind.pieces]
        term = make_step(len(coeffs), pieces, basis=basis, center=False)
        acc = term if acc is None else acc._merge(term, _vec_add, acc.d)
    if acc is None:
        raise EmptyPartition("no terms")
    return make_step(acc.d, acc.pieces, basis=basis)


# ---------------------------------------------------------------------------
# piece location for many orbit points


def _breakpoint_fixed(phi: StepCocycle):
    if phi._bp_cache is None:
        bps = phi.breakpoints
        vals = []
        err = 0
        for u in bps:
            v, e = u.approx(64)
            vals.append(min(max(v, 0), ONE - 1))
            err = max(err, e)
        phi._bp_cache = (np.array(vals, dtype=np.uint64), err + 1)
    return phi._bp_cache


def locate(phi: StepCocycle, orbit: FixedOrbit) -> np.ndarray:
    """Index of the piece containing each orbit point, decided exactly."""
    bp, bp_err = _breakpoint_fixed(phi)
    if bp.size == 0:
        return np.zeros(orbit.pos.shape, dtype=np.int64)
    idx = np.searchsorted(bp, orbit.pos, side="right").astype(np.int64)
    tol = np.uint64(min(bp_err + orbit.err + 2, ONE - 1))
    # distance to the nearest breakpoint on either side
    left = np.where(idx > 0, orbit.pos - bp[np.maximum(idx - 1, 0)], np.uint64(ONE - 1))
    right = np.where(idx < bp.size, bp[np.minimum(idx, bp.size - 1)] - orbit.pos, np.uint64(ONE - 1))
    unsure = np.nonzero((left <= tol) | (right <= tol))[0]
    if unsure.size:
        bps = phi.breakpoints
        for i in unsure:
            y = orbit.form(int(i))
            j = int(idx[i])
            while j > 0 and compare(bps[j - 1], y) == Ordering.GREATER:
                j -= 1
            while j < len(bps) and compare(bps[j], y) != Ordering.GREATER:
                j += 1
            idx[i] = j
    return idx


def visit_counts(phi: StepCocycle, n: int, x) -> np.ndarray:
    """How many of x, x + alpha, ..., x + (n-1) alpha fall in each piece."""
    basis = phi.basis
    x = basis.coerce(x)
    orb = FixedOrbit(x, basis.alpha, np.arange(n, dtype=np.int64))
    return np.bincount(locate(phi, orb), minlength=len(phi.pieces))


def _combine_counts(phi: StepCocycle, counts) -> Vector:
    out = [phi.basis.zero() for _ in range(phi.d)]
    for p, c in enumerate(counts):
        c = int(c)
        if c:
            for j in range(phi.d):
                out[j] = out[j] + c * phi.pieces[p].value[j]
    return tuple(out)


def birkhoff_eval(phi: StepCocycle, n: int, x) -> Vector:
    """phi_n(x) = sum_{k<n} phi(x + k alpha); negative n via phi_{-n}(x) = -phi_n(x - n alpha)."""
    basis = phi.basis
    x = basis.coerce(x)
    if n == 0:
        return tuple(basis.zero() for _ in range(phi.d))
    if n < 0:
        m = -n
        return _vec_scale(birkhoff_eval(phi, m, x - m * basis.alpha), -1)
    return _combine_counts(phi, visit_counts(phi, n, x))


# ---------------------------------------------------------------------------
# pushforward


@dataclass
class Atom:
    value: Vector
    mass: LinearForm

    def value_floats(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.value)


@dataclass
class PushforwardDistribution:
    n: int
    atoms: list[Atom]
    pieces: int
    close_pairs: list[tuple[int, int]] = field(default_factory=list)
    method: str = "enumerate"

    def total_mass(self) -> LinearForm:
        return reduce(lambda a, b: a + b, (a.mass for a in self.atoms))

    def masses(self) -> np.ndarray:
        return np.array([float(a.mass) for a in self.atoms])

    def values(self) -> np.ndarray:
        return np.array([a.value_floats() for a in self.atoms]).reshape(len(self.atoms), -1)

    def max_abs(self, j: int) -> LinearForm:
        best = None
        for a in self.atoms:
            v = abs(a.value[j])
            if best is None or compare(v, best) == Ordering.GREATER:
                best = v
        return best

    def mass_where(self, predicate: Callable[[Atom], bool]) -> LinearForm:
        out = None
        for a in self.atoms:
            if predicate(a):
                out = a.mass if out is None else out + a.mass
        return out if out is not None else self.atoms[0].mass.basis.zero()

    def to_json(self) -> dict:
        from .arithmetic import interval_strings

        return {
            "n": self.n,
            "pieces": self.pieces,
            "method": self.method,
            "atoms": [
                {
                    "value": [v.to_json() for v in a.value],
                    "value_interval": [list(interval_strings(v)) for v in a.value],
                    "mass": a.mass.to_json(),
                    "mass_interval": list(interval_strings(a.mass)),
                }
                for a in self.atoms
            ],
            "close_pairs": self.close_pairs,
        }


def _coefficient_matrix(vectors: list[Vector], basis: Basis) -> tuple[np.ndarray, int]:
    """Integer matrix (rows = vectors) of scaled basis coefficients, and the scale."""
    width = len(basis.names)
    den = 1
    for vec in vectors:
        for f in vec:
            for c in f.c:
                den = _lcm(den, c.denominator)
    d = len(vectors[0]) if vectors else 0
    M = np.zeros((len(vectors), d * width), dtype=object)
    for r, vec in enumerate(vectors):
        for j, f in enumerate(vec):
            for i, c in enumerate(f.c):
                M[r, j * width + i] = int(c * den)
    return M, den


def _certified_sort(pos: np.ndarray, err: int, form: Callable[[int], LinearForm]) -> np.ndarray:
    order = np.argsort(pos, kind="stable")
    if order.size < 2:
        return order
    sp = pos[order]
    close = np.nonzero((sp[1:] - sp[:-1]) <= np.uint64(min(2 * err, ONE - 1)))[0]
    if close.size == 0:
        return order
    order = order.copy()
    i = 0
    close = [int(c) for c in close]
    while i < len(close):
        j = i
        while j + 1 < len(close) and close[j + 1] == close[j] + 1:
            j += 1
        lo, hi = close[i], close[j] + 1
        seg = [int(t) for t in order[lo:hi + 1]]
        seg.sort(key=cmp_to_key(lambda a, b: int(compare(form(a), form(b)))))
        order[lo:hi + 1] = seg
        i = j + 1
    return order


def _is_denominator(pq: PartialQuotients, n: int) -> int | None:
    k = 0
    while True:
        if pq.finite and k > len(pq.data):
            return None
        q = pq.q(k)
        if q == n:
            return k
        if q > n:
            return None
        k += 1


ENUMERATE_LIMIT = 3_000_000


def pushforward(phi: StepCocycle, n: int, method: str = "auto", check: bool = True) -> PushforwardDistribution:
    """Exact law of phi_n under Lebesgue measure as a finite list of atoms.

    ``method`` is ``enumerate`` (walk the D n discontinuities of phi_n),
    ``denominator`` (closed form valid when n is a denominator q_k of alpha)
    or ``auto``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if method == "auto":
        k = _is_denominator(phi.basis.pq, n) if not phi.basis.pq.finite else None
        method = "denominator" if (k is not None and n >= 64 and n * max(phi.D, 1) > 200_000) else "enumerate"
    if method == "denominator":
        from ._denominator import denominator_pushforward

        return denominator_pushforward(phi, n)
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    if n * max(phi.D, 1) > ENUMERATE_LIMIT:
        raise MemoryError(f"D*n = {n * phi.D} exceeds the enumeration budget")
    return _enumerate_pushforward(phi, n, check)


def _enumerate_pushforward(phi: StepCocycle, n: int, check: bool) -> PushforwardDistribution:
    basis = phi.basis
    d = phi.d
    if phi.D == 0:
        zero = tuple(basis.zero() for _ in range(d))
        return PushforwardDistribution(n, [Atom(zero, basis.one)], 1)
    pts = phi.points
    D = len(pts)
    ks = np.arange(n, dtype=np.int64)
    orbits = [FixedOrbit(x, -basis.alpha, ks) for x in pts]
    pos = np.concatenate([o.pos for o in orbits])
    ints = np.concatenate([o.ints for o in orbits])
    kk = np.tile(ks, D)
    ii = np.repeat(np.arange(D, dtype=np.int64), n)
    err = max(o.err for o in orbits)

    def form(t: int) -> LinearForm:
        return pts[int(ii[t])] - int(kk[t]) * basis.alpha - int(ints[t])

    order = _certified_sort(pos, err, form)
    ii_s, kk_s, ints_s = ii[order], kk[order], ints[order]
    M = len(order)

    # value offset of arc m (between sorted points m and m+1) is sum_i cnt_i(m) sigma_i
    jm, scale = _coefficient_matrix(phi.jumps, basis)
    width = jm.shape[1]
    small = n * D * max((abs(int(v)) for v in jm.flat), default=0) < (1 << 62)
    onehot = np.zeros((M, D), dtype=np.int64)
    onehot[np.arange(M), ii_s] = 1
    cnt = np.cumsum(onehot, axis=0)
    if small:
        keys = cnt @ jm.astype(np.int64)
    else:
        keys = (cnt.astype(object)) @ jm
    keys = np.asarray(keys)
    # group arcs by exact offset
    if keys.dtype == object:
        tuples = [tuple(int(v) for v in row) for row in keys]
        uniq = {}
        group = np.empty(M, dtype=np.int64)
        for m, t in enumerate(tuples):
            group[m] = uniq.setdefault(t, len(uniq))
        reps = list(uniq)
    else:
        from ._profile import group_rows

        group, first = group_rows(keys)
        reps = [tuple(int(v) for v in keys[f]) for f in first]
    G = len(reps)
    # arc lengths: s_{m+1} - s_m, with the last arc wrapping around by +1
    nxt = np.roll(np.arange(M), -1)
    xcoef = np.zeros((G, D), dtype=np.int64)
    np.add.at(xcoef, (group, ii_s[nxt]), 1)
    np.add.at(xcoef, (group, ii_s), -1)
    kcoef = np.zeros(G, dtype=np.int64)
    np.add.at(kcoef, group, kk_s[nxt] - kk_s)
    ncoef = np.zeros(G, dtype=np.int64)
    np.add.at(ncoef, group, ints_s[nxt] - ints_s)
    wrap_group = int(group[M - 1])
    masses = []
    for g in range(G):
        m = basis.zero() - int(kcoef[g]) * basis.alpha - int(ncoef[g])
        for i in range(D):
            if xcoef[g, i]:
                m = m + int(xcoef[g, i]) * pts[i]
        if g == wrap_group:
            m = m + 1
        masses.append(m)
    offsets = []
    for rep in reps:
        vec = []
        for j in range(d):
            coeffs = [Fraction(rep[j * (width // d) + i], scale) for i in range(width // d)]
            vec.append(LinearForm(basis, coeffs))
        offsets.append(tuple(vec))
    # base value on the wrap arc, by direct summation
    base_direct = birkhoff_eval(phi, n, form(int(order[-1])))
    base_direct = _vec_sub(base_direct, offsets[wrap_group])
    if check and all(f.is_rational for vec in offsets for f in vec):
        # zero mean: sum_g mass_g (base + offset_g) = 0
        base_mean = []
        for j in range(d):
            acc = basis.zero()
            for g in range(G):
                acc = acc - offsets[g][j].rational * masses[g]
            base_mean.append(acc)
        if tuple(base_mean) != base_direct:
            raise AuditFailure("pushforward base value disagrees between direct sum and zero-mean route",
                               witness=(base_mean, base_direct))
    atoms = [Atom(_vec_add(base_direct, offsets[g]), masses[g]) for g in range(G) if not masses[g].is_zero]
    if check:
        total = reduce(lambda a, b: a + b, (a.mass for a in atoms))
        if total != basis.one:
            raise AuditFailure(f"pushforward masses sum to {total!r}", witness=total)
    return _finish(atoms, n, M, "enumerate")


def _finish(atoms: list[Atom], n: int, pieces: int, method: str) -> PushforwardDistribution:
    merged: dict = {}
    for a in atoms:
        if a.value in merged:
            merged[a.value] = merged[a.value] + a.mass
        else:
            merged[a.value] = a.mass
    out = [Atom(v, m) for v, m in merged.items() if not m.is_zero]

    def cmp(a: Atom, b: Atom) -> int:
        for x, y in zip(a.value, b.value):
            c = compare(x, y)
            if c != Ordering.EQUAL:
                return int(c)
        return 0

    out.sort(key=cmp_to_key(cmp))
    close = []
    vals = [a.value_floats() for a in out]
    for i in range(len(out)):
        for j in range(i + 1, len(out)):
            if max(abs(x - y) for x, y in zip(vals[i], vals[j])) < 1e-9:
                close.append((i, j))
    return PushforwardDistribution(n, out, pieces, close, method)


# ---------------------------------------------------------------------------
# Denjoy-Koksma


@dataclass
class DKRow:
    n: int
    q: int
    max_abs: Vector
    variation: Vector
    ok: bool


@dataclass
class DKReport:
    rows: list[DKRow]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def denjoy_koksma_audit(phi: StepCocycle, pq: PartialQuotients | None = None, n_list=None,
                        raise_on_failure: bool = True) -> DKReport:
    """Check max |phi^j_{q_n}| <= V(phi^j) over the exact atoms of phi_{q_n}."""
    pq = pq or phi.basis.pq
    if pq is not phi.basis.pq:
        raise ValueError("cocycle and partial quotients use different rotation numbers")
    if n_list is None:
        n_list = [k for k in pq.indices_below(10_000)]
    V = phi.variation
    rows = []
    for n in n_list:
        q = pq.q(n)
        pf = pushforward(phi, q)
        mx = tuple(pf.max_abs(j) for j in range(phi.d))
        ok = all(compare(m, v) != Ordering.GREATER for m, v in zip(mx, V))
        rows.append(DKRow(n, q, mx, V, ok))
        if not ok and raise_on_failure:
            raise AuditFailure(f"Denjoy-Koksma bound violated at q_{n} = {q}", witness=(n, mx, V))
    return DKReport(rows)


# ---------------------------------------------------------------------------
# rationality


@dataclass
class RationalityInfo:
    j: int
    rational: bool
    beta: LinearForm | None  # representative of the coset beta(phi^j)
    multiplier: int | None
    coefficients: list[int] | None  # integer c_p with multiplier * phi = sum c_p 1_{I_p} - beta


def rationality_analysis(phi: StepCocycle) -> list[RationalityInfo]:
    """Decide per coordinate whether phi^j takes values in a coset of Q."""
    out = []
    for j in range(phi.d):
        v0 = phi.pieces[0].value[j]
        diffs = [pc.value[j] - v0 for pc in phi.pieces]
        if not all(df.is_rational for df in diffs):
            out.append(RationalityInfo(j, False, None, None, None))
            continue
        m = 1
        for df in diffs:
            m = _lcm(m, df.rational.denominator)
        beta = (-m * v0).frac()
        coeffs = [int(m * df.rational) + (m * v0 + beta).floor() for df in diffs]
        out.append(RationalityInfo(j, True, beta, m, coeffs))
    return out


@dataclass
class IntegerForm:
    """m * Phi = (sum_p c_{p,j} 1_{I_p} - beta_j)_j with integer c."""

    multiplier: int
    betas: tuple[LinearForm, ...]
    coefficients: list[tuple[int, ...]]  # per piece
    scaled: StepCocycle


def integer_form(phi: StepCocycle) -> IntegerForm | None:
    info = rationality_analysis(phi)
    if not all(r.rational for r in info):
        return None
    m = reduce(_lcm, (r.multiplier for r in info), 1)
    scaled = phi * m
    info2 = rationality_analysis(scaled)
    coeffs = [tuple(info2[j].coefficients[p] for j in range(phi.d)) for p in range(len(phi.pieces))]
    return IntegerForm(m, tuple(r.beta for r in info2), coeffs, scaled)


# ---------------------------------------------------------------------------
# removing discontinuities related by Z alpha + Z


@dataclass
class TransferEntry:
    """phi_new = phi_old + coeff (1_[a, b) - length); that term equals g - g o T.

    g(x) = sign * coeff * sum_{i<k} {x + shift + i alpha}.
    """

    removed: LinearForm
    kept: LinearForm
    coeff: Vector
    length: LinearForm
    k: int
    shift: LinearForm
    sign: int

    def added(self, basis: Basis, x) -> Vector:
        x = basis.coerce(x)
        a, b = self.kept, self.removed
        inside = compare((x - a).frac(), (b - a).frac()) == Ordering.LESS
        return tuple(c * ((1 if inside else 0) - self.length) for c in self.coeff)

    def transfer(self, basis: Basis, x) -> Vector:
        x = basis.coerce(x)
        s = basis.zero()
        for i in range(self.k):
            s = s + (x + self.shift + i * basis.alpha).frac()
        return tuple(self.sign * c * s for c in self.coeff)


def normalize_discontinuities(phi: StepCocycle) -> tuple[StepCocycle, list[TransferEntry]]:
    """Remove discontinuities whose difference lies in Z alpha + Z, adding coboundaries."""
    basis = phi.basis
    log: list[TransferEntry] = []
    current = phi
    changed = True
    while changed:
        changed = False
        disc = current.discontinuities
        for i in range(len(disc)):
            for k in range(len(disc)):
                if i == k:
                    continue
                xi, _ = disc[i]
                xk, sk = disc[k]
                diff = xk - xi
                if not diff.in_zalpha_z() or diff.alpha_coeff == 0:
                    continue
                if not all(s.is_rational for s in sk):
                    continue
                a = int(diff.alpha_coeff)
                length = diff.frac()
                if a > 0:
                    entry = TransferEntry(xk, xi, sk, length, a, (1 - xk), 1)
                else:
                    entry = TransferEntry(xk, xi, sk, length, -a, (1 - xi), -1)
                cut = _sorted_unique(basis, [pc.lo for pc in current.pieces])
                cut.append(basis.one)
                pieces = []
                for lo, hi in zip(cut[:-1], cut[1:]):
                    val = current(lo)
                    pieces.append((lo, hi, _vec_add(val, entry.added(basis, lo))))
                current = make_step(current.d, pieces, basis=basis)
                log.append(entry)
                changed = True
                break
            if changed:
                break
    return current, log


# ---------------------------------------------------------------------------
# the affine cocycle and its reduction


class PiecewiseAffineCocycle:
    """Psi(x) = (psi(x + beta_0), ..., psi(x + beta_d)) with psi(x) = {x} - 1/2 and beta_0 = 0."""

    def __init__(self, basis: Basis, betas: Sequence[LinearForm]):
        self.basis = basis
        self.betas = tuple([basis.zero()] + [basis.coerce(b) for b in betas])

    @property
    def dim(self) -> int:
        return len(self.betas)

    @property
    def breakpoints(self) -> list[LinearForm]:
        """Where coordinate j jumps by -1: x = 1 - beta_j mod 1."""
        return [(1 - b).frac() for b in self.betas]

    @property
    def slopes(self) -> tuple[int, ...]:
        return tuple(1 for _ in self.betas)

    def __call__(self, x) -> Vector:
        x = self.basis.coerce(x)
        return tuple((x + b).frac() - Fraction(1, 2) for b in self.betas)


def affine_psi(basis: Basis, betas: Sequence) -> PiecewiseAffineCocycle:
    return PiecewiseAffineCocycle(basis, betas)


@dataclass
class AffineEval:
    q: int
    values: Vector
    M: tuple[int, ...]


def affine_birkhoff_eval(psi: PiecewiseAffineCocycle, q: int, x, exact_check_limit: int = 100_000) -> AffineEval:
    """psi_q(x) by summation, with M(x) from q y + q(q-1)/2 alpha - q/2 + M(y), y = x + beta_j."""
    basis = psi.basis
    x = basis.coerce(x)
    alpha = basis.alpha
    ks = np.arange(q, dtype=np.int64)
    values, Ms = [], []
    for b in psi.betas:
        y = x + b
        orb = FixedOrbit(y, alpha, ks)
        # continuity: no y + k alpha (k < q) may be an integer
        if alpha.is_rational:
            hit = any((y + k * alpha).is_integer() for k in range(q))
        else:
            k = -y.alpha_coeff
            hit = k.denominator == 1 and 0 <= k < q and (y + int(k) * alpha).is_integer()
        if hit:
            raise UndecidableAtCap(f"x = {x!r} is a discontinuity of psi_q", y, None)
        int_sum = int(orb.ints.sum())
        direct = q * y + (q * (q - 1) // 2) * alpha - int_sum - Fraction(q, 2)
        if q <= exact_check_limit:
            M = -sum((y + k * alpha).floor() for k in range(q))
        else:
            M = -int_sum
        formula = q * y + Fraction(q * (q - 1), 2) * alpha - Fraction(q, 2) + M
        if formula != direct:
            raise AuditFailure("direct affine Birkhoff sum disagrees with the closed form", witness=(x, b))
        values.append(direct)
        Ms.append(M)
    return AffineEval(q, tuple(values), tuple(Ms))


@dataclass
class DiagonalCheckRow:
    x: LinearForm
    residuals: tuple[LinearForm, ...]  # F_j - q beta_j, must be integers
    ok: bool


@dataclass
class DiagonalCheckReport:
    q: int
    rows: list[DiagonalCheckRow]
    max_numeric_error: float

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def diagonal_line_check(basis: Basis, betas: Sequence, n: int, sample_count: int = 100, seed: int = 0,
                        raise_on_failure: bool = True) -> DiagonalCheckReport:
    """F(Psi_{q_n}(x)) - ({q_n beta_j})_j must be an integer vector at continuity points x."""
    pq = basis.pq
    q = pq.q(n)
    psi = affine_psi(basis, betas)
    rng = random.Random(seed)
    rows = []
    max_err = 0.0
    tries = 0
    while len(rows) < sample_count:
        tries += 1
        if tries > 100 * sample_count:
            raise RuntimeError("could not draw enough continuity points")
        den = rng.randrange(10**6, 10**7)
        if math.gcd(den, q) != 1:
            continue
        x = basis.const(Fraction(rng.randrange(0, den), den))
        try:
            ev = affine_birkhoff_eval(psi, q, x)
        except UndecidableAtCap:
            continue
        res = []
        ok = True
        for j in range(1, psi.dim):
            F = ev.values[j] - ev.values[0]
            r = F - q * psi.betas[j]
            res.append(r)
            if not r.is_integer():
                ok = False
            fl = float(F) - float((q * psi.betas[j]).frac())
            max_err = max(max_err, abs(fl - round(fl)))
        rows.append(DiagonalCheckRow(x, tuple(res), ok))
        if not ok and raise_on_failure:
            raise AuditFailure(f"diagonal identity fails at x = {x!r}", witness=x)
    return DiagonalCheckReport(q, rows, max_err)


def diagonal_quotient(basis: Basis, betas: Sequence) -> StepCocycle:
    """Phi_d = (1_[0, 1 - beta_j) - (1 - beta_j))_j."""
    bs = [basis.coerce(b) for b in betas]
    d = len(bs)
    for b in bs:
        if compare(b, 0) != Ordering.GREATER or compare(b, 1) != Ordering.LESS:
            raise ValueError("each beta_j must lie in (0, 1)")
    cuts = _sorted_unique(basis, [basis.zero()] + [1 - b for b in bs])
    cuts.append(basis.one)
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val = tuple(basis.one if compare(lo, 1 - b) == Ordering.LESS else basis.zero() for b in bs)
        pieces.append((lo, hi, val))
    return make_step(d, pieces, basis=basis)


# ---------------------------------------------------------------------------
# random cocycles for audits and tests


def random_step_cocycle(basis: Basis, rng: random.Random, d_max: int = 3, max_intervals: int = 8,
                        denominator: int = 997, value_range: int = 5) -> StepCocycle:
    """A centred step cocycle with rational endpoints and rational values."""
    d = rng.randint(1, d_max)
    P = rng.randint(2, max_intervals)
    cuts = sorted(rng.sample(range(1, denominator), P - 1))
    ends = [Fraction(0)] + [Fraction(c, denominator) for c in cuts] + [Fraction(1)]
    pieces = []
    for a, b in zip(ends[:-1], ends[1:]):
        val = tuple(Fraction(rng.randint(-value_range * 4, value_range * 4), 4) for _ in range(d))
        pieces.append((a, b, val))
    return make_step(d, pieces, basis=basis)
