"""Command-line front end: ``rotcocycles <command> [options]``.

Each command maps to one library operation and writes
``<out>/<command>.json`` (plus a CSV for tabular results).  Exit status:
0 done, 1 configuration error, 2 audit failure, 3 undecidable at the
precision cap.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import tempfile
from fractions import Fraction
from typing import Any, Callable

from . import __version__
from .arithmetic import cf_identity_audit, convergents, interval_strings
from .cocycles import (
    PiecewiseAffineCocycle,
    StepCocycle,
    denjoy_koksma_audit,
    diagonal_line_check,
    pushforward,
    random_step_cocycle,
)
from .errors import AuditFailure, UndecidableAtCap
from .session import SCHEMA_VERSION, THRESHOLD_KEYS, ConfigError, SessionConfig, to_plain


def _int_list(v) -> list[int]:
    if isinstance(v, list):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def _str_list(v) -> list[str]:
    if isinstance(v, list):
        return [str(x) for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


def _groups(v) -> list[list[int]]:
    if isinstance(v, list):
        return [[int(x) for x in g] for g in v]
    return [_int_list(g) for g in str(v).split(";") if g.strip()]


# name -> (converter, default, help); a default of None means required when used
COMMANDS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "cf": {"depth": (int, 10, "number of convergents")},
    "orbit": {"n": (int, 8, "index of q_n"), "x": (str, "0", "base point")},
    "separation": {"target": (str, None, "the point beta"), "n_max": (int, 20, "largest index"),
                   "c": (Fraction, Fraction(1, 100), "separation threshold")},
    "weyl": {"pairs": (int, 20, "number of random pairs when --betas is absent"),
             "betas": (_str_list, None, "comma separated betas"),
             "N": (int, 2000, "number of terms"), "bound": (int, 3, "l1 bound on characters")},
    "pushforward": {"n": (int, None, "time n"), "qn": (int, None, "use n = q_qn instead"),
                    "method": (str, "auto", "auto, enumerate or denominator")},
    "dk-audit": {"q_max": (int, 10_000, "largest q_n"), "random": (int, 0, "audit this many random cocycles")},
    "wsd": {"n_max": (int, 20, "largest index"), "c": (Fraction, None, "threshold c")},
    "clusters": {"qn": (int, 12, "index n of q = q_n"), "eps": (float, None, "cluster scale")},
    "mesu": {"q": (int, None, "time q"), "qn": (int, None, "use q = q_qn"), "ell": (int, 1, "number of shifts")},
    "qn00": {"eta": (Fraction, Fraction(1, 32), "eta"), "rho": (Fraction, None, "rho (default eta/2)"),
             "ns": (_int_list, None, "indices n to try"), "tol": (float, 0.05, "tolerance around rho")},
    "ostrowski": {"target": (str, None, "the point beta"), "depth": (int, 25, "expansion depth"),
                  "ell": (int, None, "also run the coboundary criterion for this ell")},
    "gp-check": {"jumps": (_str_list, None, "jumps s_j"), "points": (_str_list, None, "points beta_j"),
                 "partition": (_groups, None, "classes, e.g. '0,1;2'"), "t": (str, "0", "translation t"),
                 "depth": (int, 20, "digit depth"), "k_max": (int, 50, "search bound for k'")},
    "reduce": {"N": (int, None, "convergent depth")},
    "witness": {"g": (_str_list, None, "target essential value"), "eps": (float, 0.1, "ball radius"),
                "depth": (int, 3, "dyadic partition depth"), "Nmax": (int, None, "largest |N|")},
    "scan": {"qn": (_int_list, None, "indices of the times q_n"), "delta": (Fraction, None, "atom mass threshold")},
    "report": {"betas": (_str_list, None, "betas of the affine cocycle instead of --phi")},
    "diag-line": {"betas": (_str_list, None, "betas"), "n": (int, 6, "index of q_n"),
                  "samples": (int, 100, "number of sample points")},
}
SAMPLING = {"diag-line", "weyl"}


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON session file")
    common.add_argument("--alpha", help="partial quotient spec, e.g. golden or formula:pow2")
    common.add_argument("--beta", action="append", default=[], metavar="NAME=VALUE",
                        help="register an independent symbol (sqrt:n, cf:spec, random:seed, ostrowski:rule)")
    common.add_argument("--relation", action="append", default=[], metavar="NAME=FORM",
                        help="declare a symbol as a linear form")
    common.add_argument("--phi", help="cocycle shorthand")
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    for key in ("delta", "tau", "eps_cluster", "c_threshold", "N", "N_max"):
        common.add_argument(f"--th-{key.replace('_', '-')}", dest=f"th_{key}", metavar="V",
                            help=f"threshold {key}")
    parser = argparse.ArgumentParser(prog="rotcocycles", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common])
        for key, (_, default, hlp) in params.items():
            flag = "--" + key.replace("_", "-")
            if key in ("N", "Nmax"):
                flag = "--" + key
            sp.add_argument(flag, dest=f"p_{key}", metavar="V", help=f"{hlp} (default {default})")
    return parser


def _session(args) -> SessionConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = SessionConfig.parse(fh.read())
        except OSError as exc:
            raise ConfigError(str(exc), args.config) from None
    else:
        cfg = SessionConfig()
    if args.alpha:
        cfg.alpha = args.alpha
    for item in args.beta:
        name, _, spec = item.partition("=")
        if not spec:
            raise ConfigError("expected NAME=VALUE", "--beta")
        cfg.betas[name] = spec
    for item in args.relation:
        name, _, form = item.partition("=")
        if not form:
            raise ConfigError("expected NAME=FORM", "--relation")
        cfg.relations[name] = form
    if args.phi:
        cfg.phi = args.phi
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("must be >= 1", "--threads")
        cfg.threads = args.threads
    for key in ("delta", "tau", "eps_cluster", "c_threshold", "N", "N_max"):
        v = getattr(args, f"th_{key}")
        if v is not None:
            try:
                cfg.thresholds[key] = THRESHOLD_KEYS[key](v)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value {v!r}", f"--th-{key}") from None
    return cfg


def _params(args, cfg: SessionConfig) -> dict:
    spec = COMMANDS[args.command]
    unknown = sorted(set(cfg.params) - set(spec))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} for {args.command}", f"params.{unknown[0]}")
    out = {}
    for key, (conv, default, _) in spec.items():
        raw = getattr(args, f"p_{key}")
        if raw is None:
            raw = cfg.params.get(key)
        if raw is None:
            out[key] = default
            continue
        try:
            out[key] = conv(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {raw!r}", key) from None
    return out


def _need(p: dict, key: str):
    if p.get(key) is None:
        raise ConfigError("required", key.replace("_", "-"))
    return p[key]


def _step(cfg: SessionConfig, basis) -> StepCocycle:
    phi = cfg.cocycle(basis)
    if not isinstance(phi, StepCocycle):
        raise ConfigError("this command needs a step cocycle", "phi")
    return phi


def _csv(header: list[str], rows: list[list]) -> str:
    return "\n".join([",".join(header)] + [",".join(str(x) for x in r) for r in rows]) + "\n"


def run(command: str, cfg: SessionConfig, p: dict) -> tuple[Any, str | None]:
    """Execute one command; returns (result, optional CSV text)."""
    from . import detect, orbits, ostrowski

    pq = cfg.pq()
    basis = pq.basis
    th = cfg.thresholds
    if command in SAMPLING and cfg.seed is None:
        raise ConfigError("a seed is required for sampling", "seed")

    if command == "cf":
        depth = p["depth"]
        audit = cf_identity_audit(pq, depth)
        rows = []
        for c in convergents(pq, depth):
            lo, hi = interval_strings(c.dist)
            rows.append([c.n, pq[c.n] if c.n >= 1 else 0, c.p, c.q, lo, hi])
        return audit, _csv(["n", "a_n", "p_n", "q_n", "dist_lo", "dist_hi"], rows)
    if command == "orbit":
        return orbits.three_distance_audit(pq, p["n"], basis.parse(p["x"])), None
    if command == "separation":
        tab = orbits.separation_table(basis.parse(_need(p, "target")), pq, p["n_max"], p["c"])
        return tab, tab.to_csv()
    if command == "weyl":
        rng = random.Random(cfg.seed)
        chars = orbits.characters_up_to(2, p["bound"])
        if p["betas"]:
            sets = [[basis.parse(b) for b in p["betas"]]]
            chars = orbits.characters_up_to(len(sets[0]), p["bound"])
        else:
            from .arithmetic import RandomBitsValue

            sets = [[basis.register(f"w{i}_{j}", value=RandomBitsValue(rng.getrandbits(63))) for j in range(2)]
                    for i in range(p["pairs"])]
        results = [orbits.weyl_equidistribution(b, chars, pq, p["N"]) for b in sets]
        rows = []
        for i, res in enumerate(results):
            for r in res:
                rows.append([i, " ".join(map(str, r.s)), repr(r.average)])
        return {"sets": [[repr(x) for x in b] for b in sets], "rows": results}, _csv(["set", "s", "average"], rows)
    if command == "pushforward":
        phi = _step(cfg, basis)
        n = p["n"] if p["n"] is not None else (pq.q(p["qn"]) if p["qn"] is not None else None)
        if n is None:
            raise ConfigError("give --n or --qn", "n")
        pf = pushforward(phi, n, method=p["method"])
        rows = []
        for a in pf.atoms:
            vals = [list(interval_strings(v)) for v in a.value]
            rows.append([" ".join(f"[{lo};{hi}]" for lo, hi in vals), *interval_strings(a.mass)])
        return pf, _csv(["value", "mass_lo", "mass_hi"], rows)
    if command == "dk-audit":
        cocs = []
        if p["random"]:
            if cfg.seed is None:
                raise ConfigError("a seed is required for sampling", "seed")
            rng = random.Random(cfg.seed)
            cocs = [random_step_cocycle(basis, rng) for _ in range(p["random"])]
        else:
            cocs = [_step(cfg, basis)]
        ns = [n for n in range(0, 200) if pq.q(n) <= p["q_max"]]
        return [denjoy_koksma_audit(c, pq, ns) for c in cocs], None
    if command == "wsd":
        phi = _step(cfg, basis)
        c = p["c"] if p["c"] is not None else th.get("c_threshold", detect.DEFAULT_C_THRESHOLD)
        rep = detect.wsd_check(phi, pq, range(0, p["n_max"] + 1), c)
        return rep, rep.to_csv()
    if command == "clusters":
        phi = _step(cfg, basis)
        eps = p["eps"] if p["eps"] is not None else th.get("eps_cluster", detect.DEFAULT_EPS_CLUSTER)
        return detect.cluster_analysis(phi, pq, pq.q(p["qn"]), eps), None
    if command == "mesu":
        phi = _step(cfg, basis)
        q = p["q"] if p["q"] is not None else (pq.q(p["qn"]) if p["qn"] is not None else None)
        if q is None:
            raise ConfigError("give --q or --qn", "q")
        return detect.mesu_measure(phi, q, p["ell"], raise_on_failure=True), None
    if command == "qn00":
        phi = _step(cfg, basis)
        rep = detect.qn00_scan(phi, pq, p["rho"], p["eta"], p["ns"], p["tol"])
        rows = [[r.n, r.q, r.ell, r.L, *(interval_strings(r.measure) if r.measure is not None else ("", "")),
                 r.note] for r in rep.rows]
        return rep, _csv(["n", "q_n", "ell", "L", "mu_lo", "mu_hi", "note"], rows)
    if command == "ostrowski":
        exp = ostrowski.expand(basis.parse(_need(p, "target")), pq, p["depth"])
        out: dict = {"expansion": exp}
        if p["ell"] is not None:
            out["coboundary"] = ostrowski.coboundary_criterion(p["ell"], exp)
        rows = [[n, exp.digit(n), *interval_strings(exp.residuals[n])] for n in range(exp.depth + 1)]
        return out, _csv(["n", "b_n", "r_lo", "r_hi"], rows)
    if command == "gp-check":
        jumps = [Fraction(x) for x in _need(p, "jumps")]
        pts = [basis.parse(x) for x in _need(p, "points")]
        part = p["partition"] if p["partition"] is not None else [list(range(len(pts)))]
        return ostrowski.guenais_parreau_check(jumps, pts, part, None, basis.parse(p["t"]), p["depth"], pq,
                                               p["k_max"]), None
    if command == "reduce":
        phi = _step(cfg, basis)
        N = p["N"] if p["N"] is not None else th.get("N", 20)
        return detect.rational_reduction(phi, pq, N, th.get("tau", detect.DEFAULT_TAU),
                                         th.get("delta", detect.DEFAULT_DELTA)), None
    if command == "witness":
        phi = _step(cfg, basis)
        g = [Fraction(x) for x in _need(p, "g")]
        if len(g) == 1 and phi.d > 1:
            g = g * phi.d
        nmax = p["Nmax"] if p["Nmax"] is not None else th.get("N_max", detect.DEFAULT_NMAX)
        return detect.essential_value_witness(phi, tuple(g), p["eps"], p["depth"], nmax), None
    if command == "scan":
        phi = _step(cfg, basis)
        idx = _need(p, "qn")
        delta = p["delta"] if p["delta"] is not None else th.get("delta", detect.DEFAULT_DELTA)
        return detect.quasi_period_scan(phi, [pq.q(n) for n in idx], delta), None
    if command == "report":
        rc = detect.ReportConfig()
        for key, attr in (("N", "N"), ("delta", "delta"), ("tau", "tau"), ("eps_cluster", "eps_cluster"),
                          ("c_threshold", "c_threshold")):
            if key in th:
                setattr(rc, attr, th[key])
        if p["betas"]:
            target = [basis.parse(b) for b in p["betas"]]
        else:
            target = cfg.cocycle(basis)
            if isinstance(target, PiecewiseAffineCocycle):
                target = list(target.betas[1:])
        return detect.regularity_report(target, pq, rc), None
    if command == "diag-line":
        return diagonal_line_check(basis, [basis.parse(b) for b in _need(p, "betas")], p["n"], p["samples"],
                                   cfg.seed), None
    raise ConfigError(f"unknown command {command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _session(args)
        p = _params(args, cfg)
        result, csv_text = run(args.command, cfg, p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AuditFailure as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return 2
    except UndecidableAtCap as exc:
        print(f"undecidable at precision cap: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": cfg.to_json(),
        "params": to_plain(p),
        "result": to_plain(result),
    }
    stem = os.path.join(cfg.out, args.command)
    _atomic_write(stem + ".json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if csv_text is not None:
        _atomic_write(stem + ".csv", csv_text)
    summary = doc["result"].get("verdict") if isinstance(doc["result"], dict) else None
    print(f"{args.command}: wrote {stem}.json" + (f" (verdict {summary})" if summary else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
