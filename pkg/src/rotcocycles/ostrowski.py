"""Ostrowski expansions in the base (theta_n) and the coboundary tests built on them.

A number beta in [0, 1) is written beta = sum_n b_n theta_n + r_N with
theta_n = q_n alpha - p_n.  Digits satisfy 0 <= b_n <= a_{n+1} and the
canonical rule: b_n = a_{n+1} forces b_{n-1} = 0.  Every residual obeys
|r_N| <= |theta_N|.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .arithmetic import (
    AdaptiveReal,
    Basis,
    LinearForm,
    Ordering,
    PartialQuotients,
    as_fraction,
    compare,
    dist_form,
    floor_div,
    interval_strings,
)
from .errors import AuditFailure

DEFAULT_KMAX = 50


# ---------------------------------------------------------------------------
# expansions


@dataclass
class OstrowskiExpansion:
    pq: PartialQuotients
    digits: list[int]
    residuals: list[LinearForm] | None = None  # r_0 .. r_N when beta is known exactly
    beta: LinearForm | None = None

    @property
    def depth(self) -> int:
        return len(self.digits) - 1

    def digit(self, n: int) -> int:
        return self.digits[n] if 0 <= n < len(self.digits) else 0

    def partial_sums(self) -> list[Fraction]:
        """S_N = sum_{n <= N} |b_n| / a_{n+1} for N = 0 .. depth."""
        out, s = [], Fraction(0)
        for n, b in enumerate(self.digits):
            s += Fraction(abs(b), self.pq[n + 1])
            out.append(s)
        return out

    def admissibility_violations(self) -> list[int]:
        return admissibility_violations(self.pq, self.digits)

    @property
    def terminates(self) -> bool:
        """True when some residual is exactly zero, so beta lies in Z alpha + Z."""
        return bool(self.residuals) and any(r.is_zero for r in self.residuals)

    def to_json(self) -> dict:
        out = {
            "alpha": self.pq.spec,
            "depth": self.depth,
            "digits": list(self.digits),
            "partial_sums": [f"{s.numerator}/{s.denominator}" for s in self.partial_sums()],
        }
        if self.residuals is not None:
            out["residuals"] = [list(interval_strings(r)) for r in self.residuals]
        return out


def admissibility_violations(pq: PartialQuotients, digits: Sequence[int]) -> list[int]:
    """Indices n where the digit sequence breaks the canonical digit rules."""
    bad = []
    for n, b in enumerate(digits):
        a = pq[n + 1]
        if b < 0 or b > a:
            bad.append(n)
        elif b == a and n >= 1 and digits[n - 1] != 0:
            bad.append(n)
    return bad


def _max_depth(pq: PartialQuotients, depth: int) -> int:
    if pq.finite:
        # theta_n vanishes at the last convergent of a rational alpha
        return min(depth, len(pq.data) - 1)
    return depth


def expand(beta, pq: PartialQuotients, depth: int) -> OstrowskiExpansion:
    """Greedy canonical expansion of beta in [0, 1) to the given depth.

    At step n the residual r is oriented by the sign of theta_n, giving
    x = sign(theta_n) r.  The digit is the smallest b >= 0 that brings
    x - b |theta_n| to at most |theta_{n+1}|, which is what makes the
    canonical rule hold.
    """
    basis: Basis = pq.basis
    beta = basis.coerce(beta)
    if compare(beta, 0) == Ordering.LESS or compare(beta, 1) != Ordering.LESS:
        raise ValueError("beta must lie in [0, 1)")
    depth = _max_depth(pq, depth)
    r = beta
    digits: list[int] = []
    residuals: list[LinearForm] = []
    for n in range(depth + 1):
        th = basis.theta(n)
        sgn = th.sign()
        abs_th = th if sgn > 0 else -th
        nxt = abs(basis.theta(n + 1)) if not (pq.finite and n + 1 > len(pq.data)) else basis.zero()
        x = r if sgn > 0 else -r
        b = max(0, -floor_div(nxt - x, abs_th))
        if b > pq[n + 1]:
            raise AuditFailure(f"digit b_{n} = {b} exceeds a_{n + 1} = {pq[n + 1]}", (n, b))
        r = r - b * th
        if compare(abs(r), abs_th) == Ordering.GREATER:
            raise AuditFailure(f"residual bound |r_{n}| <= |theta_{n}| violated", (n, r))
        digits.append(b)
        residuals.append(r)
    bad = admissibility_violations(pq, digits)
    if bad:
        raise AuditFailure(f"non-canonical digits at indices {bad}", bad)
    return OstrowskiExpansion(pq, digits, residuals, beta)


def from_digits(pq: PartialQuotients, digits: Sequence[int]) -> OstrowskiExpansion:
    """Wrap externally supplied digit data (no admissibility requirement)."""
    return OstrowskiExpansion(pq, [int(b) for b in digits])


def reconstruct_form(exp: OstrowskiExpansion, depth: int | None = None) -> LinearForm:
    """sum_{n <= depth} b_n theta_n reduced to [0, 1), as an exact form."""
    if depth is None:
        depth = exp.depth
    if depth > exp.depth:
        raise ValueError("depth exceeds the expansion depth")
    basis = exp.pq.basis
    s = basis.zero()
    for n in range(depth + 1):
        if exp.digits[n]:
            s = s + exp.digits[n] * basis.theta(n)
    return s - s.floor()


def reconstruct(exp: OstrowskiExpansion, depth: int | None = None) -> AdaptiveReal:
    return reconstruct_form(exp, depth).to_real()


# ---------------------------------------------------------------------------
# digit rules


class DigitRule:
    """A digit sequence n -> b_n with an asymptotic description.

    Grammar: ``const:c``, ``list:[...]`` (zero afterwards),
    ``alternating:[...]`` (repeated), ``formula:poly:c0,c1,...``,
    ``formula:pow2`` (b_n = 2**n) and ``formula:match_a:even|odd|all``
    (b_n = a_{n+1} on the chosen indices, 0 elsewhere).
    """

    def __init__(self, spec: str, fn: Callable[[int, PartialQuotients], int], growth: tuple):
        self.spec = spec
        self._fn = fn
        self.growth = growth

    def __call__(self, n: int, pq: PartialQuotients) -> int:
        return int(self._fn(n, pq))

    def __repr__(self) -> str:
        return f"DigitRule({self.spec})"

    def digits(self, pq: PartialQuotients, depth: int) -> list[int]:
        return [self(n, pq) for n in range(depth + 1)]

    @classmethod
    def parse(cls, spec: str) -> "DigitRule":
        s = spec.strip()
        m = re.fullmatch(r"const:(-?\d+)", s)
        if m:
            c = int(m.group(1))
            return cls(s, lambda n, pq: c, ("zero",) if c == 0 else ("bounded",))
        m = re.fullmatch(r"(list|alternating):\[\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*\]", s)
        if m:
            vals = [int(t) for t in m.group(2).split(",")]
            if m.group(1) == "list":
                return cls(s, lambda n, pq: vals[n] if n < len(vals) else 0, ("zero",))
            growth = ("zero",) if not any(vals) else ("bounded",)
            return cls(s, lambda n, pq: vals[n % len(vals)], growth)
        m = re.fullmatch(r"formula:poly:(.+)", s)
        if m:
            coeffs = [Fraction(t.strip()) for t in m.group(1).split(",") if t.strip()]
            while coeffs and coeffs[-1] == 0:
                coeffs.pop()
            if not coeffs:
                return cls(s, lambda n, pq: 0, ("zero",))

            def poly(n, pq, coeffs=coeffs):
                v = sum(c * n**k for k, c in enumerate(coeffs))
                return int(v.numerator // v.denominator)

            deg = len(coeffs) - 1
            return cls(s, poly, ("bounded",) if deg == 0 else ("poly", deg))
        if s == "formula:pow2":
            return cls(s, lambda n, pq: 2**n, ("exp", 2))
        m = re.fullmatch(r"formula:match_a:(even|odd|all)", s)
        if m:
            which = m.group(1)

            def match(n, pq, which=which):
                if which == "all" or (n % 2 == 0) == (which == "even"):
                    return pq[n + 1]
                return 0

            return cls(s, match, ("match_a",))
        raise ValueError(f"unrecognised digit rule {spec!r}")


def _quotient_growth(pq: PartialQuotients) -> tuple:
    if pq.kind in ("list", "periodic"):
        return ("bounded",)
    if pq.kind == "poly":
        coeffs = list(pq.data)
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        deg = len(coeffs) - 1
        return ("bounded",) if deg <= 0 else ("poly", deg)
    if pq.kind == "pow2":
        return ("exp", 2)
    return ("unknown",)


def series_converges(rule: DigitRule, pq: PartialQuotients) -> bool | None:
    """Decide convergence of sum b_n / a_{n+1} from closed-form envelopes, or None."""
    b, a = rule.growth, _quotient_growth(pq)
    if b[0] == "zero":
        return True
    if b[0] == "match_a":
        return False  # the ratio equals 1 infinitely often
    if a[0] == "unknown":
        return None
    order = {"bounded": 0, "poly": 1, "exp": 2}

    def rank(g):
        return (order[g[0]], g[1] if len(g) > 1 else 0)

    if a[0] == "bounded":
        return False
    if a[0] == "poly":
        if b[0] == "bounded":
            return a[1] > 1
        if b[0] == "poly":
            return a[1] - b[1] > 1
        return False
    # geometric quotients
    if b[0] in ("bounded", "poly"):
        return True
    return rank(b) < rank(a)


# ---------------------------------------------------------------------------
# coboundary criterion


class CoboundaryVerdict(enum.Enum):
    EVIDENCE_COBOUNDARY = "EvidenceCoboundary"
    EVIDENCE_NOT_COBOUNDARY = "EvidenceNotCoboundary"
    INCONCLUSIVE = "Inconclusive"


def classify_trend(sums: Sequence[Fraction]) -> str:
    """Rough shape of a nondecreasing sequence of partial sums."""
    n = len(sums)
    if n < 6:
        return "too-short"
    third = n // 3
    first = sums[third] - sums[0]
    last = sums[-1] - sums[-1 - third]
    if last == 0:
        return "stalled"
    if first > 0 and last >= first / 2:
        return "growing"
    return "slowing"


@dataclass
class CoboundaryResult:
    verdict: CoboundaryVerdict
    admissible: bool
    decided_from_rule: bool
    trace: list[Fraction]
    trend: str
    finite_depth_only: bool
    note: str = ""

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "admissible": self.admissible,
            "decided_from_rule": self.decided_from_rule,
            "trend": self.trend,
            "finite_depth_only": self.finite_depth_only,
            "note": self.note,
            "partial_sums": [f"{s.numerator}/{s.denominator}" for s in self.trace],
        }


def coboundary_criterion(ell: int, data, pq: PartialQuotients | None = None, depth: int = 30,
                         beta=None) -> CoboundaryResult:
    """Digit test for ell 1_[0,beta) - 1_[0,ell beta) being a coboundary.

    ``data`` is an OstrowskiExpansion (finite-depth evidence) or a DigitRule
    (needs ``pq``; decided when both sequences have closed-form growth).
    """
    if ell < 1:
        raise ValueError("ell must be a positive integer")
    if isinstance(data, OstrowskiExpansion):
        pq = data.pq
        exp = data
        rule = None
        beta = data.beta if beta is None else beta
    elif isinstance(data, DigitRule):
        if pq is None:
            raise ValueError("a digit rule needs the partial quotients")
        rule = data
        exp = from_digits(pq, rule.digits(pq, _max_depth(pq, depth)))
    else:
        raise TypeError("expected an OstrowskiExpansion or a DigitRule")
    if beta is not None:
        beta = pq.basis.coerce(beta)
        if compare(ell * beta, 1) != Ordering.LESS:
            raise ValueError("the criterion needs ell * beta < 1")
    admissible = not exp.admissibility_violations()
    trace = exp.partial_sums()
    trend = classify_trend(trace)
    if not admissible:
        return CoboundaryResult(CoboundaryVerdict.INCONCLUSIVE, False, rule is not None, trace, trend,
                                rule is None, "digits violate the canonical admissibility rules")
    if rule is not None:
        conv = series_converges(rule, pq)
        if conv is not None:
            verdict = CoboundaryVerdict.EVIDENCE_COBOUNDARY if conv else CoboundaryVerdict.EVIDENCE_NOT_COBOUNDARY
            return CoboundaryResult(verdict, True, True, trace, trend, False,
                                    "decided from the growth of digits and partial quotients")
        return CoboundaryResult(CoboundaryVerdict.INCONCLUSIVE, True, False, trace, trend, True,
                                "no closed-form envelope for this rule")
    if exp.terminates:
        return CoboundaryResult(CoboundaryVerdict.EVIDENCE_COBOUNDARY, True, True, trace, trend, False,
                                "expansion terminates: beta lies in Z alpha + Z")
    return CoboundaryResult(CoboundaryVerdict.INCONCLUSIVE, True, False, trace, trend, True,
                            f"partial sums look {trend}; finite-depth evidence only")


# ---------------------------------------------------------------------------
# multi-point condition checks


@dataclass
class GPClassReport:
    members: list[int]
    jump_sum: Fraction
    integral: bool
    digit_sums: list[Fraction] = field(default_factory=list)  # sum |b_n^j| / a_{n+1}
    square_sums: list[Fraction] = field(default_factory=list)  # sum ||sum_j b_n^j s_j||^2
    digit_trend: str = ""
    square_trend: str = ""
    t_J: LinearForm | None = None


@dataclass
class GPReport:
    classes: list[GPClassReport]
    condition_i: bool
    condition_iii: bool
    k_prime: int | None
    distance: tuple[str, str] | None
    tolerance: float

    def to_json(self) -> dict:
        return {
            "condition_i": self.condition_i,
            "condition_iii": self.condition_iii,
            "k_prime": self.k_prime,
            "distance": list(self.distance) if self.distance else None,
            "tolerance": self.tolerance,
            "classes": [
                {
                    "members": c.members,
                    "jump_sum": str(c.jump_sum),
                    "integral": c.integral,
                    "digit_sum_final": str(c.digit_sums[-1]) if c.digit_sums else None,
                    "square_sum_final": str(c.square_sums[-1]) if c.square_sums else None,
                    "digit_trend": c.digit_trend,
                    "square_trend": c.square_trend,
                }
                for c in self.classes
            ],
        }


def _nearest(x: Fraction) -> int:
    return (x + Fraction(1, 2)).__floor__()


def guenais_parreau_check(jumps: Sequence, points: Sequence, partition: Sequence[Sequence[int]],
                          digit_data: Sequence[Sequence[int]] | None, t, depth: int,
                          pq: PartialQuotients, k_max: int = DEFAULT_KMAX) -> GPReport:
    """Finite-depth checks of the three conditions for a step function with
    jumps s_j at points beta_j, grouped into classes J of the partition."""
    basis = pq.basis
    s = [as_fraction(x) for x in jumps]
    pts = [basis.coerce(b) for b in points]
    depth = _max_depth(pq, depth)
    if digit_data is None:
        digit_data = [expand(b - b.floor(), pq, depth).digits for b in pts]
    digs = [[int(v) for v in list(d)[: depth + 1]] + [0] * max(0, depth + 1 - len(d)) for d in digit_data]
    t = basis.coerce(t)

    classes = []
    tJ_total = basis.zero()
    for J in partition:
        J = list(J)
        js = sum((s[j] for j in J), Fraction(0))
        rep = GPClassReport(J, js, js.denominator == 1)
        d1, d2 = Fraction(0), Fraction(0)
        tJ = js * pts[J[0]] if J else basis.zero()
        for n in range(depth + 1):
            a = pq[n + 1]
            d1 += sum(Fraction(abs(digs[j][n]), a) for j in J)
            w = sum((digs[j][n] * s[j] for j in J), Fraction(0))
            dist = abs(w - _nearest(w))
            d2 += dist * dist
            rep.digit_sums.append(d1)
            rep.square_sums.append(d2)
            k = _nearest(w)
            if k:
                tJ = tJ + k * pq.q(n) * basis.alpha
        rep.digit_trend = classify_trend(rep.digit_sums)
        rep.square_trend = classify_trend(rep.square_sums)
        rep.t_J = tJ - tJ.floor()
        tJ_total = tJ_total + rep.t_J
        classes.append(rep)

    cond_i = all(c.integral for c in classes)
    # tail of the truncated sums is at most sum |s_j| |theta_depth| per class
    th = abs(float(basis.theta(depth))) if not (pq.finite and depth >= len(pq.data)) else 0.0
    tol = float(sum(abs(x) for x in s) + 1) * th
    best = None
    for kp in sorted(range(-k_max, k_max + 1), key=abs):
        diff = t - (kp * basis.alpha - tJ_total)
        d = dist_form(diff)
        if d.is_zero:
            best = (kp, d)
            break
        if best is None or compare(d, best[1]) == Ordering.LESS:
            best = (kp, d)
    kp, d = best
    ok = d.is_zero or float(d) <= tol
    return GPReport(classes, cond_i, ok, kp if ok else None, interval_strings(d), tol)
