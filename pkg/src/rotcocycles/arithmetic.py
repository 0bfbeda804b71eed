"""Exact continued fractions for the rotation number and adaptive real arithmetic.

The rotation number alpha is never stored as a float.  It is described by its
partial quotients, and every numeric question is answered through integer
fixed-point approximations whose error is tracked and refined on demand.

Points of the circle are :class:`LinearForm` objects: rational combinations of
``1``, ``alpha`` and independently registered symbols.  A symbol can instead be
*declared* as a combination of existing symbols, in which case it is
eliminated when forms are built, so equal quantities compare equal
symbolically.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AuditFailure, PrecisionExhausted, UndecidableAtCap

DEFAULT_CAP = Fraction(1, 2**256)
_MAX_BITS = 1 << 17

Number = int | Fraction


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"expected an exact rational, got {type(x).__name__}")


def _cap_reached(E: int, bits: int, cap: Fraction, height: int) -> bool:
    # A form with coefficients of size 2**h can be as small as about 2**-h
    # without vanishing, so the cap is applied relative to the height squared.
    if bits > _MAX_BITS:
        return True
    return Fraction(E, 1 << bits) <= cap / (1 << (2 * height))


def _floor_half(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


# ---------------------------------------------------------------------------
# partial quotients


class PartialQuotients:
    """The digit generator a_1, a_2, ... of a number in (0, 1).

    ``kind`` is one of ``list`` (finite, so the number is rational),
    ``periodic``, ``poly`` (a_n = max(1, round(c0 + c1 n + ...))),
    ``pow2`` (a_n = 2**n) or ``rule`` (an arbitrary callable).
    """

    def __init__(self, kind: str, data, *, bounded_hint: bool | None = None, label: str | None = None):
        if kind not in ("list", "periodic", "poly", "pow2", "rule"):
            raise ValueError(f"unknown partial quotient kind {kind!r}")
        self.kind = kind
        self.data = data
        self._label = label
        if kind in ("list", "periodic"):
            digits = tuple(int(a) for a in data)
            if kind == "periodic" and not digits:
                raise ValueError("periodic spec needs at least one digit")
            if any(a < 1 for a in digits):
                raise ValueError("partial quotients must be positive integers")
            self.data = digits
        if kind == "poly":
            self.data = tuple(as_fraction(c) for c in data)
        if bounded_hint is None:
            if kind in ("list", "periodic"):
                bounded_hint = True
            elif kind == "poly":
                bounded_hint = all(c == 0 for c in self.data[1:])
            elif kind == "pow2":
                bounded_hint = False
        self.bounded_hint = bounded_hint
        self._digits: list[int] = []
        self._p = [1, 0]  # p_{-1}, p_0
        self._q = [0, 1]  # q_{-1}, q_0
        self._basis: Basis | None = None

    # construction helpers
    @classmethod
    def from_list(cls, digits: Sequence[int]) -> "PartialQuotients":
        return cls("list", tuple(digits))

    @classmethod
    def periodic(cls, period: Sequence[int]) -> "PartialQuotients":
        return cls("periodic", tuple(period))

    @classmethod
    def golden(cls) -> "PartialQuotients":
        return cls("periodic", (1,), label="golden")

    @classmethod
    def parse(cls, spec: str) -> "PartialQuotients":
        """Parse ``golden``, ``sqrt2m1``, ``periodic:[..]``, ``list:[..]``,
        ``formula:poly:c0,c1,...`` or ``formula:pow2``."""
        s = spec.strip()
        if s == "golden":
            return cls.golden()
        if s == "sqrt2m1":
            return cls("periodic", (2,), label="sqrt2m1")
        m = re.fullmatch(r"(periodic|list):\[\s*([0-9,\s]*)\]", s)
        if m:
            body = [t for t in m.group(2).replace(" ", "").split(",") if t]
            if not body:
                raise ValueError(f"empty digit list in {spec!r}")
            return cls(m.group(1), tuple(int(t) for t in body))
        m = re.fullmatch(r"formula:poly:(.+)", s)
        if m:
            coeffs = [Fraction(t.strip()) for t in m.group(1).split(",") if t.strip()]
            if not coeffs:
                raise ValueError(f"polynomial spec without coefficients: {spec!r}")
            return cls("poly", tuple(coeffs))
        if s == "formula:pow2":
            return cls("pow2", None)
        raise ValueError(f"unrecognised partial quotient spec {spec!r}")

    @property
    def spec(self) -> str:
        if self._label:
            return self._label
        if self.kind in ("list", "periodic"):
            return f"{self.kind}:[{','.join(str(a) for a in self.data)}]"
        if self.kind == "poly":
            return "formula:poly:" + ",".join(str(c) for c in self.data)
        if self.kind == "pow2":
            return "formula:pow2"
        return "rule"

    def __repr__(self) -> str:
        return f"PartialQuotients({self.spec})"

    @property
    def finite(self) -> bool:
        return self.kind == "list"

    @property
    def length(self) -> int | None:
        return len(self.data) if self.kind == "list" else None

    def _digit(self, n: int) -> int:
        if self.kind == "list":
            if n > len(self.data):
                raise IndexError(f"finite expansion has only {len(self.data)} partial quotients")
            return self.data[n - 1]
        if self.kind == "periodic":
            return self.data[(n - 1) % len(self.data)]
        if self.kind == "poly":
            x = sum(c * n**k for k, c in enumerate(self.data))
            return max(1, _floor_half(x))
        if self.kind == "pow2":
            return 2**n
        a = int(self.data(n))
        if a < 1:
            raise ValueError(f"rule produced a_{n} = {a} < 1")
        return a

    def __getitem__(self, n: int) -> int:
        """Return a_n (1-based)."""
        if n < 1:
            raise IndexError("partial quotients are indexed from 1")
        while len(self._digits) < n:
            self._digits.append(self._digit(len(self._digits) + 1))
        return self._digits[n - 1]

    def prefix(self, count: int) -> list[int]:
        if self.finite:
            count = min(count, len(self.data))
        return [self[i] for i in range(1, count + 1)]

    def max_index(self) -> int | None:
        """Largest n with a convergent, or None when the expansion is infinite."""
        return len(self.data) if self.finite else None

    def ladder(self, n: int) -> tuple[int, int]:
        """Return (p_n, q_n), extending the cached recurrence as needed."""
        if n < -1:
            raise IndexError("convergents start at index -1")
        if self.finite and n > len(self.data):
            raise IndexError(f"rational alpha has convergents only up to n={len(self.data)}")
        while len(self._q) < n + 2:
            k = len(self._q) - 1
            a = self[k]
            self._p.append(a * self._p[-1] + self._p[-2])
            self._q.append(a * self._q[-1] + self._q[-2])
        return self._p[n + 1], self._q[n + 1]

    def p(self, n: int) -> int:
        return self.ladder(n)[0]

    def q(self, n: int) -> int:
        return self.ladder(n)[1]

    def value_approx(self, bits: int) -> int:
        """Integer V with |V - x 2**bits| <= 1 for the number x = [0; a_1, a_2, ...]."""
        if self.finite:
            p, q = self.ladder(len(self.data))
            return _floor_half(Fraction(p << bits, q))
        target = 1 << (bits + 1)
        n = 1
        while self.q(n) * self.q(n + 1) < target:
            n += 1
        p, q = self.ladder(n)
        return _floor_half(Fraction(p << bits, q))

    def indices_below(self, bound: int) -> list[int]:
        """Indices n >= 0 with q_n <= bound."""
        out = []
        n = 0
        while True:
            if self.finite and n > len(self.data):
                break
            if self.q(n) > bound:
                break
            out.append(n)
            n += 1
        return out

    @property
    def basis(self) -> "Basis":
        if self._basis is None:
            self._basis = Basis(self)
        return self._basis


# ---------------------------------------------------------------------------
# numeric values of independent symbols


class SymbolValue:
    """Numeric provider for an independent symbol in [0, 1)."""

    kind = "abstract"

    def approx(self, bits: int) -> int:  # pragma: no cover - interface
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind


class ContinuedFractionValue(SymbolValue):
    kind = "cf"

    def __init__(self, pq: PartialQuotients):
        self.pq = pq

    def approx(self, bits: int) -> int:
        return self.pq.value_approx(bits)

    def describe(self) -> str:
        return f"cf:{self.pq.spec}"


class SqrtFracValue(SymbolValue):
    """The fractional part of sqrt(n) for a non-square n."""

    kind = "sqrt"

    def __init__(self, n: int):
        r = math.isqrt(n)
        if r * r == n:
            raise ValueError(f"sqrt({n}) is rational; declare it instead")
        self.n = n
        self.root = r

    def approx(self, bits: int) -> int:
        return math.isqrt(self.n << (2 * bits)) - (self.root << bits)

    def describe(self) -> str:
        return f"sqrt:{self.n}"


class RandomBitsValue(SymbolValue):
    """A number whose binary digits come from a seeded generator, 64 at a time."""

    kind = "random"

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = random.Random(seed)
        self._chunks: list[int] = []

    def approx(self, bits: int) -> int:
        need = (bits + 63) // 64
        while len(self._chunks) < need:
            self._chunks.append(self._rng.getrandbits(64))
        acc = 0
        for chunk in self._chunks[:need]:
            acc = (acc << 64) | chunk
        return acc >> (64 * need - bits)

    def describe(self) -> str:
        return f"random:{self.seed}"


class OstrowskiDigitsValue(SymbolValue):
    """The number sum_n b_n theta_n mod 1 given by digits relative to alpha.

    ``digits`` is a finite tuple (then the value is {M alpha} with
    M = sum b_n q_n) or a callable n -> b_n with an admissible tail, in which
    case the series is truncated where |theta_N| is below the requested
    precision.
    """

    kind = "ostrowski"

    def __init__(self, pq: PartialQuotients, digits, label: str | None = None):
        self.pq = pq
        self.digits = digits
        self.label = label

    def _finite_multiplier(self, upto: int) -> int:
        return sum(int(self.digit(n)) * self.pq.q(n) for n in range(upto + 1))

    def digit(self, n: int) -> int:
        if callable(self.digits):
            return int(self.digits(n))
        return int(self.digits[n]) if n < len(self.digits) else 0

    def approx(self, bits: int) -> int:
        if callable(self.digits):
            # |tail after N| <= |theta_N| <= 1/q_{N+1}
            N = 0
            while self.pq.q(N + 1) < (1 << (bits + 2)):
                N += 1
        else:
            N = len(self.digits) - 1
        M = self._finite_multiplier(N)
        extra = max(M, 1).bit_length() + 2
        A = self.pq.value_approx(bits + extra)
        val = (M * A) % (1 << (bits + extra))
        return val >> extra

    def describe(self) -> str:
        if self.label:
            return self.label
        if callable(self.digits):
            return "ostrowski:rule"
        return "ostrowski:[" + ",".join(str(int(b)) for b in self.digits) + "]"


# ---------------------------------------------------------------------------
# basis and linear forms


class Basis:
    """The symbol basis {1, alpha, beta_1, ...} attached to one rotation number."""

    def __init__(self, pq: PartialQuotients):
        self.pq = pq
        self.names: list[str] = ["1", "alpha"]
        self.providers: list[SymbolValue | None] = [None, None]
        self.declared: dict[str, LinearForm] = {}
        self._approx_cache: dict[int, list[int]] = {}
        self._theta_cache: dict[int, LinearForm] = {}
        self.one = LinearForm(self, (Fraction(1),))
        if pq.finite:
            p, q = pq.ladder(len(pq.data))
            self.alpha = self.const(Fraction(p, q))
        else:
            self.alpha = LinearForm(self, (Fraction(0), Fraction(1)))

    def __repr__(self) -> str:
        return f"Basis(alpha={self.pq.spec}, symbols={self.names[2:]})"

    def const(self, x) -> "LinearForm":
        return LinearForm(self, (as_fraction(x),))

    def zero(self) -> "LinearForm":
        return LinearForm(self, ())

    def has(self, name: str) -> bool:
        return name in self.declared or name in self.names

    def symbol(self, name: str) -> "LinearForm":
        if name == "1":
            return self.one
        if name == "alpha":
            return self.alpha
        if name in self.declared:
            return self.declared[name]
        try:
            idx = self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown symbol {name!r}") from None
        return LinearForm(self, (Fraction(0),) * idx + (Fraction(1),))

    def register(self, name: str, *, value: SymbolValue | None = None, declared=None) -> "LinearForm":
        """Register an independent symbol (``value``) or a declared combination."""
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) or name in ("alpha",):
            raise ValueError(f"invalid symbol name {name!r}")
        if self.has(name):
            raise ValueError(f"symbol {name!r} already registered")
        if (value is None) == (declared is None):
            raise ValueError("give exactly one of value= or declared=")
        if declared is not None:
            form = self.coerce(declared)
            self.declared[name] = form
            return form
        self.names.append(name)
        self.providers.append(value)
        self._approx_cache.clear()
        return self.symbol(name)

    def coerce(self, x) -> "LinearForm":
        if isinstance(x, LinearForm):
            if x.basis is not self:
                raise ValueError("linear forms from different bases cannot be mixed")
            return x
        if isinstance(x, (int, Fraction)):
            return self.const(x)
        if isinstance(x, str):
            return self.parse(x)
        raise TypeError(f"cannot convert {type(x).__name__} to a linear form")

    def form(self, rat=0, alpha=0, **betas) -> "LinearForm":
        out = self.const(rat) + as_fraction(alpha) * self.alpha
        for name, c in betas.items():
            out = out + as_fraction(c) * self.symbol(name)
        return out

    def parse(self, text: str) -> "LinearForm":
        """Parse expressions such as ``1/3``, ``2*alpha - 1`` or ``beta + 1/2``."""
        s = text.replace(" ", "")
        if not s:
            raise ValueError("empty expression")
        if s[0] not in "+-":
            s = "+" + s
        terms = re.findall(r"([+-])([^+-]+)", s)
        if "".join(sign + body for sign, body in terms) != s:
            raise ValueError(f"cannot parse linear form {text!r}")
        out = self.zero()
        for sign, body in terms:
            coef = Fraction(1)
            sym = None
            parts = body.split("*")
            for part in parts:
                if re.fullmatch(r"[0-9]+(/[0-9]+)?|[0-9]*\.[0-9]+", part):
                    coef *= Fraction(part)
                elif re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", part):
                    if sym is not None:
                        raise ValueError(f"product of symbols in {text!r} is not linear")
                    sym = part
                else:
                    raise ValueError(f"cannot parse term {body!r} in {text!r}")
            term = self.symbol(sym) if sym else self.one
            out = out + (coef if sign == "+" else -coef) * term
        return out

    def theta(self, n: int) -> "LinearForm":
        """theta_n = q_n alpha - p_n as an exact form."""
        t = self._theta_cache.get(n)
        if t is None:
            p, q = self.pq.ladder(n)
            t = q * self.alpha - p
            self._theta_cache[n] = t
        return t

    def approx_symbols(self, bits: int) -> list[int]:
        """Integer approximations S_i with |S_i - v_i 2**bits| <= 1 (exact for index 0)."""
        cached = self._approx_cache.get(bits)
        if cached is not None and len(cached) == len(self.names):
            return cached
        vals = [1 << bits]
        vals.append(0 if self.pq.finite else self.pq.value_approx(bits))
        for prov in self.providers[2:]:
            vals.append(prov.approx(bits))
        self._approx_cache[bits] = vals
        return vals


class LinearForm:
    """A rational combination of basis symbols; immutable and hashable."""

    __slots__ = ("basis", "c")

    def __init__(self, basis: Basis, coeffs: Iterable[Fraction]):
        cs = list(coeffs)
        while cs and cs[-1] == 0:
            cs.pop()
        self.basis = basis
        self.c = tuple(cs)

    # algebra
    def _other(self, other) -> "LinearForm | None":
        if isinstance(other, LinearForm):
            if other.basis is not self.basis:
                raise ValueError("linear forms from different bases cannot be mixed")
            return other
        if isinstance(other, (int, Fraction)):
            return LinearForm(self.basis, (Fraction(other),))
        return None

    def __add__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        a, b = self.c, o.c
        n = max(len(a), len(b))
        return LinearForm(self.basis, [
            (a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)
        ])

    __radd__ = __add__

    def __neg__(self):
        return LinearForm(self.basis, [-x for x in self.c])

    def __sub__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, k):
        if isinstance(k, LinearForm):
            if k.is_rational:
                k = k.rational
            elif self.is_rational:
                return k * self.rational
            else:
                raise ValueError("product of two irrational linear forms is not linear")
        if not isinstance(k, (int, Fraction)):
            return NotImplemented
        if k == 0:
            return LinearForm(self.basis, ())
        return LinearForm(self.basis, [x * k for x in self.c])

    __rmul__ = __mul__

    def __truediv__(self, k):
        if isinstance(k, LinearForm) and k.is_rational:
            k = k.rational
        if not isinstance(k, (int, Fraction)):
            return NotImplemented
        return LinearForm(self.basis, [x / k for x in self.c])

    # comparisons
    def __eq__(self, other):
        o = self._other(other) if isinstance(other, (LinearForm, int, Fraction)) else None
        if o is None:
            return NotImplemented
        return self.c == o.c

    def __hash__(self):
        return hash((id(self.basis), self.c))

    def __lt__(self, other):
        return compare(self, other) == Ordering.LESS

    def __le__(self, other):
        return compare(self, other) != Ordering.GREATER

    def __gt__(self, other):
        return compare(self, other) == Ordering.GREATER

    def __ge__(self, other):
        return compare(self, other) != Ordering.LESS

    # inspection
    @property
    def is_rational(self) -> bool:
        return len(self.c) <= 1

    @property
    def rational(self) -> Fraction:
        if not self.is_rational:
            raise ValueError(f"{self!r} is not rational")
        return self.c[0] if self.c else Fraction(0)

    @property
    def const(self) -> Fraction:
        return self.c[0] if self.c else Fraction(0)

    @property
    def alpha_coeff(self) -> Fraction:
        return self.c[1] if len(self.c) > 1 else Fraction(0)

    def coeff(self, name: str) -> Fraction:
        idx = self.basis.names.index(name)
        return self.c[idx] if idx < len(self.c) else Fraction(0)

    def beta_coeffs(self) -> dict[str, Fraction]:
        return {self.basis.names[i]: x for i, x in enumerate(self.c) if i >= 2 and x != 0}

    @property
    def is_zero(self) -> bool:
        return not self.c

    def is_integer(self) -> bool:
        return self.is_rational and self.rational.denominator == 1

    def in_zalpha_z(self) -> bool:
        """Symbolic membership in Z alpha + Z."""
        return len(self.c) <= 2 and all(x.denominator == 1 for x in self.c)

    def in_qalpha_q(self) -> bool:
        return len(self.c) <= 2

    # numerics
    def approx(self, bits: int) -> tuple[int, int]:
        """Return (V, E) with |V - value 2**bits| <= E."""
        if not self.c:
            return 0, 0
        S = self.basis.approx_symbols(bits) if len(self.c) > 1 else None
        V = 0
        E = 0
        for i, ci in enumerate(self.c):
            if ci == 0:
                continue
            if i == 0:
                q, r = divmod(ci.numerator << bits, ci.denominator)
                V += q
                E += 1 if r else 0
            else:
                q, r = divmod(ci.numerator * S[i], ci.denominator)
                V += q
                E += -(-abs(ci.numerator) // ci.denominator) + (1 if r else 0)
        return V, E

    def interval(self, bits: int = 64) -> tuple[Fraction, Fraction]:
        V, E = self.approx(bits)
        return Fraction(V - E, 1 << bits), Fraction(V + E, 1 << bits)

    def __float__(self) -> float:
        if self.is_rational:
            return float(self.rational)
        # large coefficients cancel, so the working precision grows with their size
        bits = 80 + self.height_bits()
        for _ in range(6):
            V, E = self.approx(bits)
            if E << 53 <= abs(V):
                break
            bits *= 2
        return float(Fraction(V, 1 << bits))

    def height_bits(self) -> int:
        """Bit size of the largest coefficient, numerator or denominator."""
        return max((max(abs(x.numerator), x.denominator).bit_length() for x in self.c), default=0)

    def floor(self, precision_cap: Fraction = DEFAULT_CAP) -> int:
        """Exact floor."""
        if self.is_rational:
            return math.floor(self.rational)
        h = self.height_bits()
        bits = 64 + 2 * h
        while True:
            V, E = self.approx(bits)
            lo = (V - E) >> bits
            hi = (V + E) >> bits
            if lo == hi:
                return lo
            if _cap_reached(E, bits, precision_cap, h):
                raise UndecidableAtCap(f"floor of {self!r} undecided at cap", self, hi)
            bits *= 2

    def frac(self) -> "LinearForm":
        return self - self.floor()

    def round(self) -> int:
        return (self + Fraction(1, 2)).floor()

    def sign(self, precision_cap: Fraction = DEFAULT_CAP) -> int:
        return int(compare(self, 0, precision_cap))

    def __abs__(self) -> "LinearForm":
        return -self if self.sign() < 0 else self

    def to_real(self) -> "AdaptiveReal":
        if self.is_rational:
            return AdaptiveReal.exact(self.rational)

        def source(bits: int):
            V, E = self.approx(bits)
            return Fraction(V, 1 << bits), Fraction(E, 1 << bits)

        return AdaptiveReal(source)

    # presentation
    def __repr__(self) -> str:
        if not self.c:
            return "0"
        parts = []
        for i, x in enumerate(self.c):
            if x == 0:
                continue
            name = self.basis.names[i]
            mag = abs(x)
            sign = "-" if x < 0 else "+"
            if i == 0:
                body = str(mag)
            elif mag == 1:
                body = name
            else:
                body = f"{mag}*{name}"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def to_json(self) -> dict:
        return {
            "rat": str(self.const),
            "alpha_coeff": str(self.alpha_coeff),
            "beta_coeffs": {k: str(v) for k, v in self.beta_coeffs().items()},
        }


# ---------------------------------------------------------------------------
# adaptive reals


class AdaptiveReal:
    """A real number known as center +- radius, refinable on request."""

    __slots__ = ("center", "radius", "_source", "bits")

    def __init__(self, source: Callable[[int], tuple[Fraction, Fraction]] | None, bits: int = 64,
                 center: Fraction | None = None, radius: Fraction | None = None):
        self._source = source
        self.bits = bits
        if center is None:
            center, radius = source(bits)
        self.center = center
        self.radius = radius

    @classmethod
    def exact(cls, x) -> "AdaptiveReal":
        x = as_fraction(x)
        return cls(None, 0, center=x, radius=Fraction(0))

    @property
    def lo(self) -> Fraction:
        return self.center - self.radius

    @property
    def hi(self) -> Fraction:
        return self.center + self.radius

    @property
    def is_exact(self) -> bool:
        return self.radius == 0

    def refine(self, eps) -> "AdaptiveReal":
        """Return a new value with radius <= eps."""
        eps = as_fraction(eps)
        if self.radius <= eps:
            return self
        if eps <= 0:
            raise ValueError("eps must be positive")
        bits = max(self.bits, 64)
        while True:
            bits *= 2
            if bits > _MAX_BITS:
                raise PrecisionExhausted(f"could not reach radius {eps}")
            c, r = self._source(bits)
            if r <= eps:
                return AdaptiveReal(self._source, bits, center=c, radius=r)

    def __float__(self) -> float:
        return float(self.center)

    def contains(self, x) -> bool:
        x = as_fraction(x)
        return self.lo <= x <= self.hi

    def __repr__(self) -> str:
        if self.is_exact:
            return f"AdaptiveReal({self.center})"
        return f"AdaptiveReal({float(self.center):.12g} +- {float(self.radius):.3g})"


def decimal_bound(x: Fraction, digits: int, up: bool) -> str:
    """A decimal string with ``digits`` places that bounds x from below or above."""
    scale = 10**digits
    scaled = x * scale
    n = math.ceil(scaled) if up else math.floor(scaled)
    sign = "-" if n < 0 else ""
    n = abs(n)
    whole, frac = divmod(n, scale)
    if digits == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{digits}d}"


def interval_strings(x, digits: int = 20) -> tuple[str, str]:
    """Decimal [lo, hi] strings enclosing an AdaptiveReal, LinearForm or rational."""
    if isinstance(x, LinearForm):
        if x.is_rational:
            x = AdaptiveReal.exact(x.rational)
        else:
            x = x.to_real().refine(Fraction(1, 10 ** (digits + 2)))
    elif not isinstance(x, AdaptiveReal):
        x = AdaptiveReal.exact(x)
    return decimal_bound(x.lo, digits, up=False), decimal_bound(x.hi, digits, up=True)


# ---------------------------------------------------------------------------
# operations


def compare(a, b, precision_cap: Fraction = DEFAULT_CAP) -> Ordering:
    """Exact three-way comparison of linear forms (or rationals)."""
    if isinstance(a, LinearForm):
        d = a - b
    elif isinstance(b, LinearForm):
        d = (-b) + a
    else:
        x = as_fraction(a) - as_fraction(b)
        return Ordering((x > 0) - (x < 0))
    if d.is_rational:
        x = d.rational
        return Ordering((x > 0) - (x < 0))
    h = d.height_bits()
    bits = 64 + 2 * h
    while True:
        V, E = d.approx(bits)
        if V - E > 0:
            return Ordering.GREATER
        if V + E < 0:
            return Ordering.LESS
        if _cap_reached(E, bits, precision_cap, h):
            raise UndecidableAtCap(
                f"cannot separate {a!r} and {b!r} at precision cap; an undeclared relation is likely",
                a, b)
        bits *= 2


def floor_div(X, Y, precision_cap: Fraction = DEFAULT_CAP) -> int:
    """Exact floor(X / Y) for linear forms with Y != 0."""
    basis = X.basis if isinstance(X, LinearForm) else Y.basis
    X = basis.coerce(X)
    Y = basis.coerce(Y)
    if Y.is_zero:
        raise ZeroDivisionError("floor_div by zero")
    if Y.sign(precision_cap) < 0:
        X, Y = -X, -Y
    if X.is_rational and Y.is_rational:
        return math.floor(X.rational / Y.rational)
    bits = 96 + 2 * max(X.height_bits(), Y.height_bits())
    for _ in range(8):
        vx, ex = X.approx(bits)
        vy, ey = Y.approx(bits)
        if vy - ey > 0:
            lo = min((vx - ex) // (vy + ey), (vx - ex) // (vy - ey))
            hi = max((vx + ex) // (vy - ey), (vx + ex) // (vy + ey))
            if hi - lo <= 2:
                break
        bits *= 2
    k = vx // vy
    while (X - k * Y).sign(precision_cap) < 0:
        k -= 1
    while (X - (k + 1) * Y).sign(precision_cap) >= 0:
        k += 1
    return k


def dist_to_Z(u, basis: Basis | None = None) -> AdaptiveReal:
    """||u||, the distance to the nearest integer, as an adaptive real."""
    if not isinstance(u, LinearForm):
        x = as_fraction(u)
        return AdaptiveReal.exact(abs(x - _floor_half(x)))
    if u.is_rational:
        x = u.rational
        return AdaptiveReal.exact(abs(x - _floor_half(x)))

    def source(bits: int):
        V, E = u.approx(bits)
        one = 1 << bits
        r = V % one
        d = min(r, one - r)
        return Fraction(d, one), Fraction(E, one)

    return AdaptiveReal(source)


def dist_form(u: LinearForm) -> LinearForm:
    """||u|| as an exact linear form (u minus its nearest integer, sign fixed)."""
    v = u - u.round()
    return -v if v.sign() < 0 else v


def cf_expand(x, depth: int, precision_cap: Fraction = DEFAULT_CAP) -> PartialQuotients:
    """Partial quotients a_1..a_depth of x in (0, 1).

    Rationals terminate with a last digit >= 2.  Irrational inputs (linear
    forms or adaptive reals) are refined until every returned digit is
    certain.
    """
    if depth < 1:
        raise ValueError("depth must be positive")
    if isinstance(x, LinearForm):
        if x.is_rational:
            x = x.rational
        else:
            x = x.to_real()
    if not isinstance(x, AdaptiveReal):
        x = as_fraction(x)
        if not 0 < x < 1:
            raise ValueError("cf_expand needs x in (0, 1)")
        digits = []
        while x and len(digits) < depth:
            inv = 1 / x
            a = math.floor(inv)
            digits.append(a)
            x = inv - a
        return PartialQuotients.from_list(digits)
    real = x
    if real.is_exact:
        return cf_expand(real.center, depth, precision_cap)
    while True:
        lo, hi = real.lo, real.hi
        digits: list[int] = []
        if lo > 0 and hi < 1:
            while len(digits) < depth and lo > 0:
                a_lo, a_hi = math.floor(1 / hi), math.floor(1 / lo)
                if a_lo != a_hi:
                    break
                digits.append(a_lo)
                lo, hi = 1 / hi - a_lo, 1 / lo - a_lo
        if len(digits) >= depth:
            return PartialQuotients.from_list(digits)
        if real.radius <= precision_cap:
            raise PrecisionExhausted(
                f"only {len(digits)} of {depth} partial quotients certain at the precision cap")
        try:
            real = real.refine(real.radius / 2**64)
        except PrecisionExhausted:
            raise PrecisionExhausted(f"only {len(digits)} of {depth} partial quotients certain") from None


@dataclass(frozen=True)
class Convergent:
    n: int
    p: int
    q: int
    theta: LinearForm

    @property
    def dist(self) -> LinearForm:
        """||q_n alpha|| = (-1)^n theta_n."""
        return self.theta if self.n % 2 == 0 else -self.theta


def convergents(pq: PartialQuotients, n: int) -> list[Convergent]:
    """Exact p_k, q_k and theta_k for k = 0..n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if pq.finite:
        n = min(n, len(pq.data))
    basis = pq.basis
    return [Convergent(k, pq.p(k), pq.q(k), basis.theta(k)) for k in range(n + 1)]


@dataclass
class CFAuditRow:
    n: int
    p: int
    q: int
    determinant: bool
    theta_sign: bool
    distance_identity: bool | None
    distance_bounds: bool | None
    best_approximation: bool | None


@dataclass
class CFAuditReport:
    alpha: str
    N: int
    rows: list[CFAuditRow]
    first_violation: tuple | None

    @property
    def passed(self) -> bool:
        return self.first_violation is None


def _best_approx_violation(pq: PartialQuotients, n: int) -> int | None:
    """Exhaustively look for 1 <= k < q_{n+1} with ||k alpha|| < ||q_n alpha||."""
    basis = pq.basis
    qn, qn1 = pq.q(n), pq.q(n + 1)
    if qn1 <= 1:
        return None
    A = np.uint64(basis.approx_symbols(64)[1])
    ks = np.arange(1, qn1, dtype=np.uint64)
    r = ks * A  # wraps mod 2**64
    d = np.minimum(r, (np.uint64(0) - r))
    target = basis.approx_symbols(64)[1]
    tv = (qn * target) % (1 << 64)
    tv = min(tv, (1 << 64) - tv)
    slack = 2 * int(qn1) + 4
    suspicious = np.nonzero(d.astype(object) <= tv + slack)[0] if qn1 < 64 else np.nonzero(
        d <= np.uint64(min(tv + slack, (1 << 64) - 1)))[0]
    ref = dist_form(pq.q(n) * basis.alpha)
    for idx in suspicious:
        k = int(idx) + 1
        if k == qn:
            continue
        if compare(dist_form(k * basis.alpha), ref) == Ordering.LESS:
            return k
    return None


def cf_identity_audit(pq: PartialQuotients, N: int, scan_limit: int = 20000,
                      raise_on_failure: bool = True) -> CFAuditReport:
    """Check the convergent identities exactly for n <= N.

    Checks the determinant identity, the sign of theta_n, the identity
    q_n ||q_{n+1} alpha|| + q_{n+1} ||q_n alpha|| = 1, the two-sided bound
    1/(q_{n+1}+q_n) <= ||q_n alpha|| <= 1/q_{n+1}, and (when q_{n+1} <=
    scan_limit) best approximation by an exhaustive scan over k.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    basis = pq.basis
    last = N if not pq.finite else min(N, len(pq.data) - 1)
    rows = []
    violation = None
    for n in range(0, last + 1):
        p_prev, q_prev = pq.ladder(n - 1)
        p, q = pq.ladder(n)
        p1, q1 = pq.ladder(n + 1)
        det = p_prev * q - p * q_prev == (-1) ** n
        th = basis.theta(n)
        th1 = basis.theta(n + 1)
        sign_ok = th.is_zero or th.sign() == (-1) ** n
        dn = th if n % 2 == 0 else -th
        dn1 = th1 if (n + 1) % 2 == 0 else -th1
        ident = (q * dn1 + q1 * dn) == basis.one
        # scaled to order one so the absolute precision cap stays meaningful
        bounds = ((q1 + q) * dn - 1).sign() >= 0 and (q1 * dn - 1).sign() <= 0
        best = None
        if q1 <= scan_limit:
            k = _best_approx_violation(pq, n)
            best = k is None
            if k is not None and violation is None:
                violation = ("best_approximation", n, k)
        rows.append(CFAuditRow(n, p, q, det, sign_ok, ident, bounds, best))
        if violation is None:
            for name, ok in (("determinant", det), ("theta_sign", sign_ok), ("distance_identity", ident),
                             ("distance_bounds", bounds)):
                if not ok:
                    violation = (name, n, None)
                    break
    report = CFAuditReport(pq.spec, N, rows, violation)
    if violation is not None and raise_on_failure:
        raise AuditFailure(f"continued fraction identity {violation[0]} fails at n={violation[1]}",
                           witness=violation)
    return report
