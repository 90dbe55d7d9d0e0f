"""Command-line front end: ``dfwb <subcommand> ...``.

Every subcommand accepts ``--format json|csv``, ``--seed`` and ``--output``.
Reports are deterministic functions of the flags.

Exit codes: 0 pass, 1 fail or violation, 2 inconclusive (refine and rerun),
3 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import affine, fingroup, pnorm, qalg
from .errors import NotAGroup, NotYetResolved, ParseError, StudyInconclusive, WorkbenchError

SCHEMA_VERSION = "1"
EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3

CSV_HEADERS = {
    "group": ["name", "order", "abelian", "center_size", "exponent", "verdict"],
    "df": ["trial", "pair_norm_defect", "p_idem_defect", "trace_of_e", "p_norm", "verdict"],
    "spectrum": ["re", "im", "witness_residual"],
    "pnorm": ["f_index", "p", "lower", "upper", "lhs_2norm", "verdict"],
    "ks": ["group", "p", "trials", "max_ratio", "verdict"],
    "xp": ["trial", "compatibility", "submult_slack", "assoc_defect"],
    "diep": ["level", "n", "index", "sigma"],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _clean(obj):
    """Recursively convert numpy scalars and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _emit(args, payload: dict, rows: list[list]) -> str:
    if args.format == "json":
        payload = {"schema_version": SCHEMA_VERSION, "command": args.command, "seed": args.seed, **payload}
        text = json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version=" + SCHEMA_VERSION])
        w.writerow(CSV_HEADERS[args.command])
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        text = buf.getvalue()
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def parse_function(text: str, order: int | None, identity: int = 0) -> dict[int, complex]:
    """``"e:1,3:2-1j"`` -> {identity: 1, 3: 2-1j}; indices may be negative for Z-truncations."""
    out: dict[int, complex] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if ":" not in item:
            raise UsageError(f"function term {item!r} must look like index:value")
        k, v = item.split(":", 1)
        idx = identity if k.strip() == "e" else int(k)
        if order is not None and not 0 <= idx < order:
            raise UsageError(f"index {idx} outside 0..{order - 1}")
        out[idx] = out.get(idx, 0) + complex(v.replace(" ", ""))
    return out


def _group_element(G: fingroup.FiniteGroup, spec: str) -> fingroup.GroupAlgElement:
    c = np.zeros(G.order, complex)
    for k, v in parse_function(spec, G.order, G.identity).items():
        c[k] = v
    return fingroup.GroupAlgElement(G, c)


# ----------------------------------------------------------------- commands

def cmd_group(args) -> int:
    try:
        G = fingroup.build_group(args.spec)
    except NotAGroup as exc:
        if args.action == "validate":
            _emit(args, {"verdict": "fail", "axiom": exc.axiom, "error": str(exc)}, [[args.spec, "", "", "", "", "fail"]])
            return EXIT_FAIL
        raise
    info = G.info()
    _emit(args, {"group": info, "verdict": "pass", "action": args.action},
          [[info["name"], info["order"], info["abelian"], info["center_size"], info["exponent"], "pass"]])
    return EXIT_PASS


def cmd_df(args) -> int:
    G = fingroup.build_group(args.spec)
    ctx = qalg.AlgContext.group_algebra(G)
    tau = qalg.TraceFunctional.normalized(ctx)
    tau.validate(seed=args.seed)
    rows, reports = [], []
    for t in range(args.trials):
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(t,)))
        a, b = qalg.random_quasi_inverse_pair(ctx, rng)
        rep = qalg.df_certify(a, b, tau, seed=args.seed, check_trace=False)
        reports.append(rep)
        rows.append([t, rep.pair_norm_defect, rep.p_idem_defect, rep.trace_of_e, rep.p_norm, rep.verdict])
    ok = all(r.passed for r in reports)
    summary = {
        "group": G.name,
        "trials": args.trials,
        "max_pair_norm_defect": max((r.pair_norm_defect for r in reports), default=0.0),
        "max_p_norm": max((r.p_norm for r in reports), default=0.0),
        "max_trace_of_e": max((r.trace_of_e or 0.0 for r in reports), default=0.0),
        "verdict": "pass" if ok else "fail",
    }
    _emit(args, summary, rows)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_spectrum(args) -> int:
    if args.z_truncation:
        f = parse_function(args.f, None)
        M = fingroup.z_circulant(f, args.z_truncation)
        label = f"Z/{args.z_truncation}"
    else:
        G = fingroup.build_group(args.spec)
        M = fingroup.lambda_matrix(_group_element(G, args.f))
        label = G.name
    z = fingroup.sort_spectrum(np.linalg.eigvals(M))
    res = [fingroup.approx_eigen_witness(M, zz)[1] for zz in z]
    ok = max(res, default=0.0) <= 1e-8
    _emit(args, {"group": label, "eigenvalues": [[x.real, x.imag] for x in z], "witness_residuals": res,
                 "verdict": "pass" if ok else "fail"},
          [[x.real, x.imag, r] for x, r in zip(z, res)])
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_pnorm(args) -> int:
    G = fingroup.build_group(args.spec)
    if args.f:
        fs = [_group_element(G, args.f)]
    else:
        fs = [fingroup.random_element(G, np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(i,))))
              for i in range(args.random)]
    rows, results = [], []
    for i, f in enumerate(fs):
        for p in args.p:
            rep = pnorm.herz_compare(f, p, seed=args.seed)
            lo, hi = rep.rhs_bracket
            verdict = rep.verdict if lo <= hi else "invalid-bracket"
            rows.append([i, p, lo, hi, rep.lhs, verdict])
            results.append({"f_index": i, "p": p, "bracket": [lo, hi], "lhs_2norm": rep.lhs, "verdict": verdict})
    ok = all(r["verdict"] == "pass" for r in results)
    _emit(args, {"group": G.name, "results": results, "verdict": "pass" if ok else "fail"}, rows)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_ks(args) -> int:
    G = fingroup.build_group(args.spec)
    reps = [pnorm.kunze_stein_check(G, p, args.trials, seed=args.seed) for p in args.p]
    ok = all(r.passed for r in reps)
    rows = [[r.group, r.p, r.trials, r.max_ratio, r.verdict] for r in reps]
    _emit(args, {"reports": [json.loads(r.to_json()) for r in reps], "verdict": "pass" if ok else "fail"}, rows)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_xp(args) -> int:
    G = fingroup.build_group(args.spec)
    rows, worst = [], {"compatibility": 0.0, "submult_slack": -math.inf, "assoc_defect": 0.0}
    for t in range(args.trials):
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(t,)))
        x, y, z = (pnorm.diag_p(fingroup.random_element(G, rng), args.p) for _ in range(3))
        xy = pnorm.xp_mul(x, y)
        comp = xy.compatibility_defect()
        slack = xy.norm() - x.norm() * y.norm()
        left, right = pnorm.xp_mul(xy, z), pnorm.xp_mul(x, pnorm.xp_mul(y, z))
        scale = 1.0 + x.norm() * y.norm() * z.norm()
        assoc = max(np.abs(left.g - right.g).max(), np.abs(left.T - right.T).max()) / scale
        rows.append([t, comp, slack, assoc])
        worst = {"compatibility": max(worst["compatibility"], comp),
                 "submult_slack": max(worst["submult_slack"], slack),
                 "assoc_defect": max(worst["assoc_defect"], float(assoc))}
    ok = worst["compatibility"] <= 1e-12 and worst["submult_slack"] <= 1e-9 and worst["assoc_defect"] <= 1e-11
    _emit(args, {"group": G.name, "p": args.p, "trials": args.trials, "worst": worst,
                 "verdict": "pass" if ok else "fail"}, rows)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_diep(args) -> int:
    grid = affine.QuadratureGrid.from_n(args.n, args.xmin, args.xmax, args.q)
    quad = affine.Quad2D(B=args.quad2d_b)
    payload: dict = {"grid": grid.describe(), "h_scale": args.h_scale}
    rows: list[list] = []
    try:
        base = affine.assemble_Sh(grid, args.h_scale)
        payload["crosscheck"] = affine.require_resolved(base)
        study = affine.diep_refinement_study(grid, args.levels, scale=args.h_scale, quad=quad, seed=args.seed)
    except NotYetResolved as exc:
        payload.update(verdict="not-yet-resolved", error=str(exc))
        _emit(args, payload, rows)
        return EXIT_INCONCLUSIVE
    except StudyInconclusive as exc:
        payload.update(verdict="inconclusive", error=str(exc))
        if exc.report is not None:
            payload["study"] = exc.report.to_dict()
        _emit(args, payload, rows)
        return EXIT_INCONCLUSIVE
    payload["study"] = study.to_dict()
    for lev, (rec, sig) in enumerate(zip(study.levels, study.sigma_profiles)):
        rows += [[lev, rec.n, i, s] for i, s in enumerate(sig)]
    if study.verdict != "left-invertible-not-invertible":
        payload["verdict"] = study.verdict
        _emit(args, payload, rows)
        return EXIT_FAIL
    try:
        ver = affine.left_inverse_verify(study.final_bundle, study.kernel_candidate)
    except NotYetResolved as exc:
        payload.update(verdict="not-yet-resolved", error=str(exc))
        _emit(args, payload, rows)
        return EXIT_INCONCLUSIVE
    payload["left_inverse"] = ver.to_dict()
    payload["verdict"] = "pass" if ver.passed else "fail"
    _emit(args, payload, rows)
    return EXIT_PASS if ver.passed else EXIT_FAIL


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--seed", type=int, default=20240601)
    common.add_argument("--output", default=None, help="write the report here instead of stdout")

    ap = _Parser(prog="dfwb", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("group", parents=[common], help="validate a group or print its invariants")
    p.add_argument("action", choices=["validate", "info"])
    p.add_argument("spec", help="cyclic(6), dihedral(4), symmetric(3), heisenberg(3), product(...), file(path)")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("df", parents=[common], help="certify b o a = 0 for random quasi-inverse pairs")
    p.add_argument("spec")
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_df)

    p = sub.add_parser("spectrum", parents=[common], help="spectrum of convolution by f with witness residuals")
    p.add_argument("spec", nargs="?", default="cyclic(1)")
    p.add_argument("--f", default="e:1", help="terms index:value, 'e' for the identity")
    p.add_argument("--z-truncation", type=int, default=0, help="use the Z/n circulant of f on Z instead")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("pnorm", parents=[common], help="p-norm brackets and the comparison with the 2-norm")
    p.add_argument("spec")
    p.add_argument("--p", type=float, nargs="+", default=[1.5, 3.0])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--f", default=None)
    g.add_argument("--random", type=int, default=10, help="number of random f")
    p.set_defaults(func=cmd_pnorm)

    p = sub.add_parser("ks", parents=[common], help="Kunze-Stein ratio sweep under normalized Haar measure")
    p.add_argument("spec")
    p.add_argument("--p", type=float, nargs="+", default=[1.5])
    p.add_argument("--trials", type=int, default=10_000)
    p.set_defaults(func=cmd_ks)

    p = sub.add_parser("xp", parents=[common], help="X_p algebra checks on random diagonal elements")
    p.add_argument("spec")
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_xp)

    p = sub.add_parser("diep", parents=[common], help="Galerkin refinement study of I - S(h) on Aff(R)")
    p.add_argument("--xmin", type=float, default=1e-3)
    p.add_argument("--xmax", type=float, default=12.0)
    p.add_argument("--n", type=int, default=200, help="nodes per sign at the base level")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--quad2d-b", type=float, default=8.0)
    p.add_argument("--q", type=int, default=3, help="Gauss nodes per cell")
    p.add_argument("--h-scale", type=float, default=1.0, help="replace h by h_scale*h (0 gives the identity control)")
    p.set_defaults(func=cmd_diep)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if getattr(args, "levels", 3) < 3:
            raise UsageError("--levels must be at least 3")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"dfwb: usage error: {exc}\n")
        return EXIT_USAGE
    except (ParseError, NotAGroup) as exc:
        sys.stderr.write(f"dfwb: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE
    except WorkbenchError as exc:
        sys.stderr.write(f"dfwb: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
