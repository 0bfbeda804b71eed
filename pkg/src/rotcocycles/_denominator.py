"""Exact law of phi_q when q = q_k is a denominator of alpha, in time independent of q.

With p/q the convergent and theta = q alpha - p, write q y = C + t with C an
integer and t in [0, 1).  The orbit point y + k alpha then sits at
(C + k p + t + k theta) / q, and the residue R = C + k p mod q determines k
through k = K + c_R - q w_R, where K = -C p^{-1} mod q, c_R = R p^{-1} mod q
and w_R = [K + c_R >= q].  With s = t + K theta, the point with residue R
lies at z_R = s + R + (c_R - q w_R) theta, taken mod q.

Because q |theta| < 1, each breakpoint u of phi only sees the residues
{0, q-1, m-1, m, m+1} (m = floor(q u)) as uncertain; all others are
certainly below or above it.  For fixed w the count vector is a step
function of s whose jumps are linear forms in 1, theta and q u.  One exact
sort of all those jump points reduces every later comparison to integer
ranks, and the mass of each level set is a sum over K of clamped lengths,
computed in closed form.
"""

from __future__ import annotations

from fractions import Fraction
from functools import cmp_to_key

from .arithmetic import LinearForm, compare, floor_div
from .errors import UndecidableAtCap


def _rank_forms(forms: list[LinearForm]) -> list[int]:
    """Dense ranks of the forms; symbolically equal forms share a rank."""
    if not forms:
        return []
    height = max(f.height_bits() for f in forms)
    bits = 64 + 2 * height
    approx = [f.approx(bits) for f in forms]
    order = sorted(range(len(forms)), key=lambda i: approx[i][0])
    # resolve clusters of numerically indistinguishable neighbours exactly
    out_order = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order):
            a, b = approx[order[j]], approx[order[j + 1]]
            if b[0] - a[0] <= a[1] + b[1]:
                j += 1
            else:
                break
        seg = order[i:j + 1]
        if len(seg) > 1:
            seg.sort(key=cmp_to_key(lambda x, y: int(compare(forms[x], forms[y]))))
        out_order.extend(seg)
        i = j + 1
    ranks = [0] * len(forms)
    r = -1
    prev = None
    for idx in out_order:
        if prev is None or forms[idx] != forms[prev]:
            r += 1
        ranks[idx] = r
        prev = idx
    return ranks


class _Edge:
    __slots__ = ("form", "i", "c", "p", "rank", "_cut")

    def __init__(self, form, i, c, p):
        self.form = form
        self.i = i  # integer part
        self.c = c  # coefficient of theta
        self.p = p  # index of the q*u term, or -1
        self.rank = 0
        self._cut = None


def denominator_pushforward(phi, q: int):
    from .cocycles import Atom, _finish

    basis = phi.basis
    pq = basis.pq
    k = 0
    while pq.q(k) < q:
        k += 1
    if pq.q(k) != q:
        raise ValueError(f"{q} is not a denominator of alpha")
    if q < 3:
        raise ValueError("the closed form needs q >= 3")
    p = pq.p(k)
    theta = basis.theta(k)
    th_sign = theta.sign()
    if th_sign == 0:
        raise ValueError("alpha is rational at this depth")
    pinv = pow(p, -1, q)
    d = phi.d
    us = phi.breakpoints  # u_1 .. u_{P-1}
    nb = len(us)
    if nb == 0:
        zero = tuple(basis.zero() for _ in range(d))
        return _finish([Atom(zero, basis.one)], q, 1, "denominator")
    U = [q * u for u in us]
    m = [Uj.floor() for Uj in U]

    # uncertain residues per breakpoint
    S_p = []
    allR = set()
    for j in range(nb):
        rs = sorted({r for r in (0, q - 1, m[j] - 1, m[j], m[j] + 1) if 0 <= r < q})
        S_p.append(rs)
        allR.update(rs)
    cR = {R: (R * pinv) % q for R in allR}

    # edges: for pair (j, R) and w in {0, 1}, the six window edges W - A_R(w)
    edge_index: dict = {}
    edges: list[_Edge] = []

    def edge(i_part: int, c: int, pj: int) -> int:
        key = (i_part, c, pj)
        e = edge_index.get(key)
        if e is None:
            form = i_part + c * theta + (U[pj] if pj >= 0 else 0)
            e = len(edges)
            edge_index[key] = e
            edges.append(_Edge(form, i_part, c, pj))
        return e

    pair_edges = {}  # (j, R, w) -> six edge ids: [0, U), [q, q+U), [-q, -q+U)
    for j in range(nb):
        for R in S_p[j]:
            for w in (0, 1):
                c = -(cR[R] - q * w)
                ids = (
                    edge(-R, c, -1), edge(-R, c, j),
                    edge(q - R, c, -1), edge(q - R, c, j),
                    edge(-q - R, c, -1), edge(-q - R, c, j),
                )
                pair_edges[(j, R, w)] = ids
    # symbolically equal edges with different keys get equal ranks
    ranks = _rank_forms([e.form for e in edges])
    for e, r in zip(edges, ranks):
        e.rank = r

    def cut(e: _Edge):
        # thresholds in K for clamp(e - K theta, 0, 1)
        if e._cut is None:
            if th_sign > 0:
                k1 = floor_div(e.form - 1, theta)  # last K with e - K theta >= 1
                kz = -floor_div(-e.form, theta) - 1  # last K with e - K theta > 0
                e._cut = (k1, kz)
            else:
                a = -theta
                kf = -floor_div(e.form - 1, a)  # first K with e + K a >= 1
                kzero = floor_div(-e.form, a)  # last K with e + K a <= 0
                e._cut = (kf, kzero)
        return e._cut

    def S(e: _Edge, Ka: int, Kb: int):
        """(const, theta coefficient, npart) with sum_K clamp(e - K theta, 0, 1) = const + npart*e - ..."""
        if th_sign > 0:
            k1, kz = cut(e)
            full = max(0, min(Kb - 1, k1) - Ka + 1)
            lo, hi = max(Ka, k1 + 1), min(Kb - 1, kz)
        else:
            kf, kzero = cut(e)
            full = max(0, Kb - max(Ka, kf))
            lo, hi = max(Ka, kzero + 1), min(Kb - 1, kf - 1)
        if hi >= lo:
            npart = hi - lo + 1
            sumK = (lo + hi) * npart // 2
        else:
            npart, sumK = 0, 0
        # value = full + npart * (i + c theta + [U_p]) - theta * sumK
        return full + npart * e.i, npart * e.c - sumK, npart

    # K ranges on which every w_R is constant
    thresholds = sorted({q - cR[R] for R in allR if cR[R] > 0})
    bounds = [0] + thresholds + [q]
    acc: dict = {}
    base_F = [max(0, mj - 2) for mj in m]

    for Ka, Kb in zip(bounds[:-1], bounds[1:]):
        if Kb <= Ka:
            continue
        w = {R: 1 if Ka >= q - cR[R] and cR[R] > 0 else 0 for R in allR}
        events = []  # (rank, edge id, j, R)
        for j in range(nb):
            for R in S_p[j]:
                for eid in pair_edges[(j, R, w[R])]:
                    events.append((edges[eid].rank, eid, j, R))
        events.sort()
        ind = {}
        F = list(base_F)

        def indicator(j, R, r):
            ids = pair_edges[(j, R, w[R])]
            rk = [edges[t].rank for t in ids]
            return (rk[0] <= r < rk[1]) or (rk[2] <= r < rk[3]) or (rk[4] <= r < rk[5])

        for j in range(nb):
            for R in S_p[j]:
                ind[(j, R)] = False
        prev_S = (0, 0, None, 0)  # S(-inf) = 0
        prev_key = tuple(F)
        t = 0
        nev = len(events)
        while t <= nev:
            if t < nev:
                r = events[t][0]
                eid = events[t][1]
                e = edges[eid]
                const, thc, npart = S(e, Ka, Kb)
                cur_S = (const, thc, e.p, npart)
            else:
                cur_S = (Kb - Ka, 0, None, 0)  # S(+inf)
            # mass of the previous state on [prev event, this event)
            a = acc.get(prev_key)
            if a is None:
                a = [0, 0, {}]
                acc[prev_key] = a
            a[0] += cur_S[0] - prev_S[0]
            a[1] += cur_S[1] - prev_S[1]
            if cur_S[2] is not None and cur_S[2] >= 0 and cur_S[3]:
                a[2][cur_S[2]] = a[2].get(cur_S[2], 0) + cur_S[3]
            if prev_S[2] is not None and prev_S[2] >= 0 and prev_S[3]:
                a[2][prev_S[2]] = a[2].get(prev_S[2], 0) - prev_S[3]
            if t == nev:
                break
            # apply every event with this rank
            t2 = t
            touched = set()
            while t2 < nev and events[t2][0] == r:
                touched.add((events[t2][2], events[t2][3]))
                t2 += 1
            for (j, R) in touched:
                new = indicator(j, R, r)
                if new != ind[(j, R)]:
                    F[j] += 1 if new else -1
                    ind[(j, R)] = new
            prev_key = tuple(F)
            prev_S = cur_S
            t = t2

    atoms = []
    for key, (const, thc, ucoef) in acc.items():
        mass = (const + thc * theta) / q
        for j, cnum in ucoef.items():
            if cnum:
                mass = mass + Fraction(cnum, q) * U[j]
        if mass.is_zero:
            continue
        Fs = [0] + list(key) + [q]
        counts = [Fs[i + 1] - Fs[i] for i in range(nb + 1)]
        if any(c < 0 for c in counts):
            raise UndecidableAtCap("inconsistent residue counts; precision assumptions violated")
        val = []
        for jj in range(d):
            v = basis.zero()
            for pidx, cnt in enumerate(counts):
                if cnt:
                    v = v + cnt * phi.pieces[pidx].value[jj]
            val.append(v)
        atoms.append(Atom(tuple(val), mass))
    return _finish(atoms, q, 2 * nb * q, "denominator")
