"""The step function x -> phi_n(x) as a sorted list of arcs with exact values.

Breakpoints of phi_n are the points x_i - k alpha (k < n).  After one
certified sort, arc m is [s_m, s_{m+1}) (the last one wraps through 0) and
its value is base + sum_i cnt_i(m) sigma_i, grouped by exact integer keys.
Consecutive arcs with equal value and arcs of zero length are merged into
runs, whose left ends are the genuine change points of phi_n.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._fixed import ONE, FixedOrbit
from .arithmetic import LinearForm, Ordering, compare


@dataclass
class Profile:
    n: int
    pos: np.ndarray  # sorted uint64 positions of run starts
    err: int
    run_group: np.ndarray  # value group of each run
    values: list  # exact Vector per group
    fvalues: np.ndarray  # float values per group, shape (G, d)
    points: list  # discontinuities x_i of phi
    alpha: LinearForm
    run_ii: np.ndarray  # run r starts at x_{ii} - kk alpha - ints
    run_kk: np.ndarray
    run_ints: np.ndarray

    @property
    def runs(self) -> int:
        return len(self.pos)

    def start(self, r: int) -> LinearForm:
        return self.points[int(self.run_ii[r])] - int(self.run_kk[r]) * self.alpha - int(self.run_ints[r])

    def end(self, r: int) -> LinearForm:
        """Right end of run r, unwrapped so that end > start."""
        if r + 1 < self.runs:
            return self.start(r + 1)
        return self.start(0) + 1

    def length(self, r: int) -> LinearForm:
        return self.end(r) - self.start(r)

    def value(self, r: int):
        return self.values[int(self.run_group[r])]


def birkhoff_profile(phi, n: int) -> Profile:
    from .cocycles import _certified_sort, _coefficient_matrix, _vec_add, _vec_sub, birkhoff_eval

    basis = phi.basis
    d = phi.d
    if n < 1:
        raise ValueError("n must be >= 1")
    if phi.D == 0:
        zero = tuple(basis.zero() for _ in range(d))
        z = np.zeros(1, dtype=np.int64)
        return Profile(n, np.zeros(1, dtype=np.uint64), 1, z, [zero], np.zeros((1, d)),
                       [basis.zero()], basis.alpha, z, z, z)
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
    pos_s = pos[order]
    M = len(order)
    jm, scale = _coefficient_matrix(phi.jumps, basis)
    onehot = np.zeros((M, D), dtype=np.int64)
    onehot[np.arange(M), ii[order]] = 1
    cnt = np.cumsum(onehot, axis=0)
    small = n * D * max((abs(int(v)) for v in jm.flat), default=0) < (1 << 62)
    keys = cnt @ jm.astype(np.int64) if small else np.asarray(cnt.astype(object) @ jm)

    # zero-length arcs: consecutive sorted points that coincide exactly
    zero_len = np.zeros(M, dtype=bool)
    close = np.nonzero((pos_s[1:] - pos_s[:-1]) <= np.uint64(min(2 * err, ONE - 1)))[0]
    for c in close:
        c = int(c)
        if form(int(order[c])) == form(int(order[c + 1])):
            zero_len[c] = True
    if M > 1 and (pos_s[0] + (np.uint64(ONE - 1) - pos_s[-1])) <= np.uint64(min(2 * err, ONE - 1)):
        if form(int(order[-1])) + 1 == form(int(order[0])) or form(int(order[-1])) == form(int(order[0])):
            zero_len[M - 1] = True

    # group keys of positive-length arcs
    if keys.dtype == object:
        tuples = [tuple(int(v) for v in row) for row in keys]
        uniq: dict = {}
        group = np.empty(M, dtype=np.int64)
        for m, t in enumerate(tuples):
            group[m] = uniq.setdefault(t, len(uniq))
        reps = list(uniq)
    else:
        group, first = group_rows(keys)
        reps = [tuple(int(v) for v in keys[f]) for f in first]

    keep = np.nonzero(~zero_len)[0]
    if keep.size == 0:
        raise ValueError("phi_n has no arc of positive length")
    g_keep = group[keep]
    # a run starts where the value differs from the previous positive arc (cyclically)
    prev = np.roll(g_keep, 1)
    starts = keep[g_keep != prev] if keep.size > 1 else keep
    if starts.size == 0:
        starts = keep[:1]
    # the run starting at arc m begins at sorted point m, unless earlier zero-length arcs
    # sit at the same position; the position is the same either way
    width = jm.shape[1]
    offsets = []
    for rep in reps:
        vec = []
        for j in range(d):
            coeffs = [Fraction(rep[j * (width // d) + i], scale) for i in range(width // d)]
            vec.append(LinearForm(basis, coeffs))
        offsets.append(tuple(vec))
    last = int(keep[-1])
    base = _vec_sub(birkhoff_eval(phi, n, form(int(order[last]))), offsets[int(group[last])])
    values = [_vec_add(base, off) for off in offsets]
    fvalues = np.array([[float(v) for v in val] for val in values]).reshape(len(values), d)
    # arc m lies to the right of sorted point m
    src = order[starts]
    return Profile(n, pos_s[starts], err, group[starts], values, fvalues, list(pts), basis.alpha,
                   ii[src], kk[src], ints[src])


def group_rows(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Group equal integer rows: returns (group id per row, first row of each group).

    Rows are hashed to one uint64 first; the grouping is then verified
    exactly and recomputed the slow way if two different rows collided.
    """
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    if keys.ndim == 1:
        keys = keys[:, None]
    mult = np.array([0x9E3779B97F4A7C15 ^ (i * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF) | 1
                     for i in range(keys.shape[1])], dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = (keys.astype(np.uint64) * mult).sum(axis=1, dtype=np.uint64)
    _, first, group = np.unique(h, return_index=True, return_inverse=True)
    group = np.asarray(group).reshape(-1)
    if np.array_equal(keys, keys[first[group]]):
        return group, first
    _, first, group = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return np.asarray(group).reshape(-1), first


def lengths_by_group(prof: Profile, runs: np.ndarray | None = None) -> dict:
    """Total exact length of the chosen runs (all by default), per value group."""
    R = prof.runs
    idx = np.arange(R) if runs is None else np.asarray(runs, dtype=np.int64)
    nxt = (idx + 1) % R
    groups = prof.run_group[idx]
    G = len(prof.values)
    D = max(len(prof.points), 1)
    xcoef = np.zeros((G, D), dtype=np.int64)
    np.add.at(xcoef, (groups, prof.run_ii[nxt]), 1)
    np.add.at(xcoef, (groups, prof.run_ii[idx]), -1)
    kcoef = np.zeros(G, dtype=np.int64)
    np.add.at(kcoef, groups, prof.run_kk[nxt] - prof.run_kk[idx])
    ncoef = np.zeros(G, dtype=np.int64)
    np.add.at(ncoef, groups, prof.run_ints[nxt] - prof.run_ints[idx])
    wraps = np.zeros(G, dtype=np.int64)
    np.add.at(wraps, groups, (nxt == 0).astype(np.int64))
    out = {}
    basis = prof.alpha.basis
    for g in np.unique(groups):
        g = int(g)
        m = basis.const(int(wraps[g]) - int(ncoef[g])) - int(kcoef[g]) * prof.alpha
        for i in range(len(prof.points)):
            if xcoef[g, i]:
                m = m + int(xcoef[g, i]) * prof.points[i]
        out[g] = m
    return out


def certified_gt(a: LinearForm, b: LinearForm) -> bool:
    return compare(a, b) == Ordering.GREATER
