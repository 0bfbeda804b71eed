"""Vectorised 64-bit fixed-point orbits with certified error bounds.

Positions of x + k*step on the circle are held as uint64 numerators over
2**64.  Every position carries an absolute error of at most ``err`` units,
so comparisons whose margin exceeds twice that bound are certain; the rest
are settled exactly with linear forms.
"""

from __future__ import annotations

import numpy as np

from .arithmetic import LinearForm, Ordering, compare

ONE = 1 << 64
_ONE_F = float(ONE)


class FixedOrbit:
    """Fractional parts and integer parts of x + k*step for an array of k."""

    def __init__(self, x: LinearForm, step: LinearForm, ks: np.ndarray):
        self.x = x
        self.step = step
        self.ks = np.asarray(ks, dtype=np.int64)
        vx, ex = x.approx(64)
        va, ea = step.approx(64)
        kmax = int(np.abs(self.ks).max()) if self.ks.size else 0
        self.err = ex + kmax * ea + 1
        with np.errstate(over="ignore"):
            pos = np.uint64(vx % ONE) + self.ks.astype(np.uint64) * np.uint64(va % ONE)
        approx_t = float(x) + self.ks.astype(np.float64) * float(step)
        ints = np.rint(approx_t - pos.astype(np.float64) / _ONE_F).astype(np.int64)
        self.pos = pos
        self.ints = ints
        # points whose fractional part sits within the error bound of 0 need exact care
        e = np.uint64(min(self.err, ONE - 1))
        near = np.nonzero((pos < e) | (pos > np.uint64(ONE - 1) - e))[0]
        for idx in near:
            t = x + int(self.ks[idx]) * step
            fl = t.floor()
            self.ints[idx] = fl
            v, _ = (t - fl).approx(64)
            self.pos[idx] = np.uint64(min(max(v, 0), ONE - 1))

    def form(self, idx: int) -> LinearForm:
        """Exact fractional part of the idx-th point."""
        return self.x + int(self.ks[idx]) * self.step - int(self.ints[idx])

    def argsort(self) -> np.ndarray:
        """Order of the points on [0, 1), certified exactly."""
        order = np.argsort(self.pos)
        if order.size < 2:
            return order
        sp = self.pos[order]
        gaps = sp[1:] - sp[:-1]
        bad = np.nonzero(gaps <= np.uint64(min(2 * self.err, ONE - 1)))[0]
        if bad.size == 0:
            return order
        order = order.copy()
        # resolve each run of uncertain neighbours by exact comparison
        runs = []
        start = prev = None
        for b in bad:
            b = int(b)
            if start is None:
                start, prev = b, b
            elif b == prev + 1:
                prev = b
            else:
                runs.append((start, prev + 1))
                start, prev = b, b
        runs.append((start, prev + 1))
        from functools import cmp_to_key

        for lo, hi in runs:
            seg = [int(i) for i in order[lo:hi + 1]]
            seg.sort(key=cmp_to_key(lambda a, b: int(compare(self.form(a), self.form(b)))))
            order[lo:hi + 1] = seg
        return order


def certified_less(a: LinearForm, b: LinearForm) -> bool:
    return compare(a, b) == Ordering.LESS
