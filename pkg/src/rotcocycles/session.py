"""Session configuration: rotation number, registered symbols, cocycle specs, thresholds.

A session is one JSON document.  ``SessionConfig.parse`` rejects unknown
keys and ``to_json`` gives the normalized document back, so a parsed config
round-trips.  Cocycles are given either as a piece list or through the
shorthand grammar::

    expr  := term (('+' | '-') term)*
    term  := [coef '*'] atom
    atom  := indicator(b) | arc(a, b) | phi_d(b1, ...) | rotate(expr, r)
             | stack(expr, expr, ...) | '(' expr ')'

``psi_affine(b1, ...)`` is accepted on its own as the affine cocycle.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .arithmetic import (
    AdaptiveReal,
    Basis,
    ContinuedFractionValue,
    LinearForm,
    OstrowskiDigitsValue,
    PartialQuotients,
    RandomBitsValue,
    SqrtFracValue,
    interval_strings,
)
from .cocycles import (
    PiecewiseAffineCocycle,
    StepCocycle,
    affine_psi,
    diagonal_quotient,
    from_indicators,
    indicator,
    make_step,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``where`` locates it (key path or line:column)."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


THRESHOLD_KEYS = {
    "delta": Fraction,
    "tau": float,
    "eps_cluster": float,
    "c_threshold": Fraction,
    "N": int,
    "N_max": int,
}
TOP_KEYS = {"alpha", "betas", "relations", "phi", "thresholds", "out", "seed", "threads", "params"}


@dataclass
class SessionConfig:
    alpha: str = "golden"
    betas: dict[str, str] = field(default_factory=dict)  # name -> value spec
    relations: dict[str, str] = field(default_factory=dict)  # name -> linear form
    phi: Any = None  # shorthand string or piece-list document
    thresholds: dict[str, Any] = field(default_factory=dict)
    out: str = "rotcocycles-out"
    seed: int | None = None
    threads: int = 1
    params: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "SessionConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionConfig":
        if not isinstance(doc, dict):
            raise ConfigError("the config must be a JSON object")
        unknown = sorted(set(doc) - TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]!r}", unknown[0])
        cfg = cls()
        if "alpha" in doc:
            cfg.alpha = _expect(doc["alpha"], str, "alpha")
        for key in ("betas", "relations"):
            if key in doc:
                val = _expect(doc[key], dict, key)
                setattr(cfg, key, {str(k): _expect(v, str, f"{key}.{k}") for k, v in val.items()})
        if "phi" in doc:
            cfg.phi = doc["phi"]
        if "thresholds" in doc:
            th = _expect(doc["thresholds"], dict, "thresholds")
            for k, v in th.items():
                if k not in THRESHOLD_KEYS:
                    raise ConfigError(f"unknown key {k!r}", f"thresholds.{k}")
                try:
                    cfg.thresholds[k] = THRESHOLD_KEYS[k](v)
                except (TypeError, ValueError):
                    raise ConfigError(f"bad value {v!r}", f"thresholds.{k}") from None
        if "out" in doc:
            cfg.out = _expect(doc["out"], str, "out")
        if doc.get("seed") is not None:
            cfg.seed = _expect(doc["seed"], int, "seed")
        if "threads" in doc:
            cfg.threads = _expect(doc["threads"], int, "threads")
            if cfg.threads < 1:
                raise ConfigError("must be >= 1", "threads")
        if "params" in doc:
            cfg.params = dict(_expect(doc["params"], dict, "params"))
        return cfg

    def to_json(self) -> dict:
        th = {k: (_frac_str(v) if isinstance(v, Fraction) else v) for k, v in sorted(self.thresholds.items())}
        return {
            "alpha": self.alpha, "betas": dict(self.betas), "relations": dict(self.relations),
            "phi": self.phi, "thresholds": th, "out": self.out, "seed": self.seed,
            "threads": self.threads, "params": dict(self.params),
        }

    # -- building objects -------------------------------------------------

    def pq(self) -> PartialQuotients:
        try:
            pq = PartialQuotients.parse(self.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc), "alpha") from None
        basis = pq.basis
        for name, spec in self.betas.items():
            try:
                basis.register(name, value=symbol_value(spec, pq))
            except ValueError as exc:
                raise ConfigError(str(exc), f"betas.{name}") from None
        for name, form in self.relations.items():
            try:
                basis.register(name, declared=form)
            except (ValueError, KeyError) as exc:
                raise ConfigError(str(exc), f"relations.{name}") from None
        return pq

    def cocycle(self, basis: Basis):
        if self.phi is None:
            raise ConfigError("no cocycle given", "phi")
        try:
            if isinstance(self.phi, str):
                return parse_cocycle(self.phi, basis)
            return cocycle_from_json(self.phi, basis)
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc), "phi") from None


def _expect(v, typ, where: str):
    if typ is int and isinstance(v, bool):
        raise ConfigError("expected an integer", where)
    if not isinstance(v, typ):
        raise ConfigError(f"expected {typ.__name__}", where)
    return v


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def symbol_value(spec: str, pq: PartialQuotients):
    """Value providers: ``sqrt:n``, ``cf:<alpha spec>``, ``random:seed``, ``ostrowski:<digit rule>``."""
    kind, _, rest = spec.partition(":")
    if kind == "sqrt":
        return SqrtFracValue(int(rest))
    if kind == "cf":
        return ContinuedFractionValue(PartialQuotients.parse(rest))
    if kind == "random":
        return RandomBitsValue(int(rest))
    if kind == "ostrowski":
        from .ostrowski import DigitRule

        m = re.fullmatch(r"list:\[(.*)\]", rest.strip())
        if m:
            return OstrowskiDigitsValue(pq, [int(t) for t in m.group(1).split(",") if t.strip()], label=spec)
        rule = DigitRule.parse(rest)
        return OstrowskiDigitsValue(pq, lambda n: rule(n, pq), label=spec)
    raise ValueError(f"unknown value spec {spec!r}")


# ---------------------------------------------------------------------------
# cocycle shorthand


def _split_top(s: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced parentheses in {s!r}")
        if ch == sep and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    if depth != 0:
        raise ValueError(f"unbalanced parentheses in {s!r}")
    parts.append(cur)
    return parts


def _split_terms(s: str) -> list[tuple[int, str]]:
    out, depth, cur, sign = [], 0, "", 1
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in "+-" and depth == 0 and cur.strip() and not cur.rstrip().endswith("*"):
            out.append((sign, cur))
            cur, sign = "", (1 if ch == "+" else -1)
            continue
        if ch in "+-" and depth == 0 and not cur.strip():
            sign *= 1 if ch == "+" else -1
            continue
        cur += ch
    if cur.strip():
        out.append((sign, cur))
    return out


def parse_cocycle(text: str, basis: Basis):
    s = text.strip()
    m = re.fullmatch(r"psi_affine\((.*)\)", s)
    if m:
        return affine_psi(basis, [basis.parse(a) for a in _split_top(m.group(1), ",")])
    return _expr(s, basis)


def _expr(s: str, basis: Basis) -> StepCocycle:
    acc = None
    for sign, term in _split_terms(s):
        term = term.strip()
        coef = Fraction(sign)
        m = re.fullmatch(r"(-?[0-9]+(?:/[0-9]+)?)\s*\*\s*(.+)", term)
        if m:
            coef *= Fraction(m.group(1))
            term = m.group(2).strip()
        val = _atom(term, basis)
        val = val if coef == 1 else val * coef
        if acc is None:
            acc = val
        else:
            if acc.d != val.d:
                raise ValueError("terms of different dimensions")
            acc = acc + val
    if acc is None:
        raise ValueError(f"empty cocycle expression {s!r}")
    return make_step(acc.d, acc.pieces, basis=basis)


def _atom(s: str, basis: Basis) -> StepCocycle:
    if s.startswith("(") and s.endswith(")"):
        return _expr(s[1:-1], basis)
    m = re.fullmatch(r"([a-z_]+)\((.*)\)", s, flags=re.S)
    if not m:
        raise ValueError(f"cannot parse cocycle term {s!r}")
    name, args = m.group(1), [a.strip() for a in _split_top(m.group(2), ",")]
    if name == "indicator" and len(args) == 1:
        return indicator(basis, basis.parse(args[0]))
    if name == "arc" and len(args) == 2:
        return from_indicators(basis, [((1,), basis.parse(args[0]), basis.parse(args[1]))])
    if name == "phi_d":
        return diagonal_quotient(basis, [basis.parse(a) for a in args])
    if name == "rotate" and len(args) == 2:
        return _expr(args[0], basis).rotate(basis.parse(args[1]))
    if name == "stack" and args:
        parts = [_expr(a, basis) for a in args]
        return parts[0].stack(*parts[1:])
    raise ValueError(f"unknown generator {name!r} with {len(args)} arguments")


def _form_from_json(doc, basis: Basis) -> LinearForm:
    if isinstance(doc, (int, str)):
        return basis.coerce(doc if isinstance(doc, int) else basis.parse(doc))
    if not isinstance(doc, dict) or set(doc) - {"rat", "alpha_coeff", "beta_coeffs"}:
        raise ValueError(f"bad form {doc!r}")
    out = basis.const(Fraction(doc.get("rat", "0"))) + Fraction(doc.get("alpha_coeff", "0")) * basis.alpha
    for name, c in doc.get("beta_coeffs", {}).items():
        out = out + Fraction(c) * basis.symbol(name)
    return out


def cocycle_from_json(doc: dict, basis: Basis) -> StepCocycle:
    if not isinstance(doc, dict) or set(doc) - {"d", "pieces", "relations", "mean_removed"}:
        raise ValueError("a cocycle document has keys d, pieces, relations")
    for rel in doc.get("relations", []):
        basis.register(rel["name"], declared=_form_from_json(rel["form"], basis))
    d = int(doc["d"])
    pieces = []
    for pc in doc["pieces"]:
        if set(pc) - {"lo", "hi", "value"}:
            raise ValueError(f"bad piece {pc!r}")
        pieces.append((_form_from_json(pc["lo"], basis), _form_from_json(pc["hi"], basis),
                       tuple(_form_from_json(v, basis) for v in pc["value"])))
    return make_step(d, pieces, basis=basis)


# ---------------------------------------------------------------------------
# plain JSON for report objects


def to_plain(obj):
    """Recursively convert library objects to JSON-ready values.

    Rationals become "p/q" strings, linear forms their coefficient document
    plus a decimal enclosure, adaptive reals [lo, hi] pairs.
    """
    if hasattr(obj, "to_json") and not isinstance(obj, type):
        return to_plain(obj.to_json())
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else str(obj)
    if isinstance(obj, Fraction):
        return _frac_str(obj)
    if isinstance(obj, LinearForm):
        return {"form": obj.to_json(), "interval": list(interval_strings(obj))}
    if isinstance(obj, AdaptiveReal):
        return list(interval_strings(obj))
    if isinstance(obj, enum.Enum):
        return to_plain(obj.value)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_plain(x) for x in obj.tolist()]
    if dataclasses.is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k if not isinstance(k, tuple) else ",".join(map(str, k))): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = list(obj)
        if isinstance(obj, (set, frozenset)):
            items = sorted(items, key=repr)
        return [to_plain(x) for x in items]
    if isinstance(obj, (StepCocycle, PiecewiseAffineCocycle)):
        return repr(obj)
    return repr(obj)
