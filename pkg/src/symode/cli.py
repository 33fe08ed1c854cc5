"""Command-line frontend: JSON system documents in, JSON/text reports out.

Subcommands: gauge (normalization chain), classify, integrate, similar,
demo-n2.  Exit codes: 0 success, 2 schema error, 3 operation inapplicable,
4 numerical failure, 5 demo mismatch.  Flags have SYMODE_-prefixed
environment-variable overrides.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import casebook
from .gauge import (BARL, HOMOGENEOUS, LDOUBLEPRIME, LPRIME, GaugeError,
                    SystemDescriptor, gauge_A_zero, gauge_f_zero,
                    gauge_traceless, verify_equivalence)
from .integrate import IntegrationError, integrate_auto, residual
from .linalg import LinalgError
from .matfun import (CONJ_EXP, CONSTANT, POLYNOMIAL, MatrixFunction,
                     RepresentationError, ScalarFunction, VectorFunction)
from .scalars import Field, FieldError, ToleranceConfig
from .symalg import (CASE_BASIS_TEXT, ClassificationError, SymmetryVectorField,
                     classify, similar_constant_coeff, similar_structured)

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_INAPPLICABLE = 3
EXIT_NUMERICAL = 4
EXIT_MISMATCH = 5

_NUMBER = {"type": "number"}
_COMPLEX = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER,
                                "minItems": 2, "maxItems": 2}]}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _COMPLEX}}
_VECTOR = {"type": "array", "items": _COMPLEX}

_MATFUN_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["constant", "polynomial", "conj_exp", "sampled"]}},
    "allOf": [
        {"if": {"properties": {"kind": {"const": "constant"}}},
         "then": {"required": ["m"]}},
        {"if": {"properties": {"kind": {"const": "polynomial"}}},
         "then": {"required": ["coeffs"]}},
        {"if": {"properties": {"kind": {"const": "conj_exp"}}},
         "then": {"required": ["epsilon", "upsilon", "w"]}},
        {"if": {"properties": {"kind": {"const": "sampled"}}},
         "then": {"required": ["t", "values"]}},
    ],
}

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["n", "field", "class", "domain"],
    "properties": {
        "n": {"type": "integer", "minimum": 1, "maximum": 8},
        "field": {"enum": ["real", "complex"]},
        "class": {"enum": ["barL", "L", "Lprime", "Ldoubleprime"]},
        "domain": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
        "A": _MATFUN_SCHEMA, "B": _MATFUN_SCHEMA, "V": _MATFUN_SCHEMA,
        "f": _MATFUN_SCHEMA,
    },
}

SYMMETRY_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["tau"],
        "properties": {"tau": {"type": "object"}, "gamma": _MATRIX,
                       "chi": {"type": "object"}},
    },
}


class SchemaError(ValueError):
    pass


def _decode_entry(x):
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    raise SchemaError(f"bad numeric entry {x!r}")


def _decode_array(data):
    arr = np.array([[_decode_entry(x) for x in row] for row in data])
    if np.iscomplexobj(arr) and np.max(np.abs(arr.imag)) == 0.0:
        arr = arr.real
    return arr


def _decode_vector(data):
    arr = np.array([_decode_entry(x) for x in data])
    if np.iscomplexobj(arr) and np.max(np.abs(arr.imag)) == 0.0:
        arr = arr.real
    return arr


def _encode_entry(x):
    x = complex(x)
    if x.imag == 0.0:
        return x.real
    return [x.real, x.imag]


def _encode_array(m):
    return [[_encode_entry(x) for x in row] for row in np.asarray(m)]


def _encode_vector(v):
    return [_encode_entry(x) for x in np.asarray(v)]


def decode_matrix_function(doc, domain) -> MatrixFunction:
    kind = doc["kind"]
    if kind == "constant":
        return MatrixFunction.constant(_decode_array(doc["m"]), domain)
    if kind == "polynomial":
        return MatrixFunction.polynomial([_decode_array(c) for c in doc["coeffs"]],
                                         domain)
    if kind == "conj_exp":
        return MatrixFunction.conj_exp(_decode_entry(doc["epsilon"]),
                                       _decode_array(doc["upsilon"]),
                                       _decode_array(doc["w"]), domain)
    if kind == "sampled":
        vals = np.stack([_decode_array(v) for v in doc["values"]])
        return MatrixFunction.sampled(np.asarray(doc["t"], dtype=float), vals)
    raise SchemaError(f"unknown matrix kind {kind}")


def decode_vector_function(doc, domain) -> VectorFunction:
    kind = doc["kind"]
    if kind == "constant":
        return VectorFunction.constant(_decode_vector(doc["m"]), domain)
    if kind == "polynomial":
        return VectorFunction.polynomial([_decode_vector(c) for c in doc["coeffs"]],
                                         domain)
    if kind == "sampled":
        vals = np.stack([_decode_vector(v) for v in doc["values"]])
        return VectorFunction.sampled(np.asarray(doc["t"], dtype=float), vals)
    raise SchemaError(f"unknown vector kind {kind}")


def decode_scalar_function(doc, domain) -> ScalarFunction:
    kind = doc["kind"]
    if kind == "polynomial":
        return ScalarFunction.polynomial([_decode_entry(c) for c in doc["coeffs"]],
                                         domain)
    if kind == "sampled":
        return ScalarFunction.sampled(np.asarray(doc["t"], dtype=float),
                                      _decode_vector(doc["values"]))
    raise SchemaError(f"unknown scalar kind {kind}")


def encode_matrix_function(fun: MatrixFunction):
    if fun.kind == CONSTANT:
        return {"kind": "constant", "m": _encode_array(fun.value)}
    if fun.kind == POLYNOMIAL:
        return {"kind": "polynomial", "coeffs": [_encode_array(c) for c in fun.coeffs]}
    if fun.kind == CONJ_EXP:
        return {"kind": "conj_exp", "epsilon": _encode_entry(fun.epsilon),
                "upsilon": _encode_array(fun.upsilon), "w": _encode_array(fun.w)}
    return {"kind": "sampled", "t": [float(t) for t in fun.grid],
            "values": [_encode_array(v) for v in fun.values]}


def encode_vector_function(fun: VectorFunction):
    if fun.kind == CONSTANT:
        return {"kind": "constant", "m": _encode_vector(fun.value)}
    if fun.kind == POLYNOMIAL:
        return {"kind": "polynomial", "coeffs": [_encode_vector(c) for c in fun.coeffs]}
    return {"kind": "sampled", "t": [float(t) for t in fun.grid],
            "values": [_encode_vector(v) for v in fun.values]}


def encode_scalar_function(fun: ScalarFunction):
    if fun.kind == POLYNOMIAL:
        return {"kind": "polynomial", "coeffs": [_encode_entry(c) for c in fun.coeffs]}
    return {"kind": "sampled", "t": [float(t) for t in fun.grid],
            "values": [_encode_entry(v) for v in np.asarray(fun.values)]}


def load_system(path: str, cfg: ToleranceConfig) -> SystemDescriptor:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    return system_from_document(doc, cfg, origin=path)


def system_from_document(doc, cfg: ToleranceConfig, origin="<doc>") -> SystemDescriptor:
    if jsonschema is not None:
        try:
            jsonschema.validate(doc, SYSTEM_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise SchemaError(f"{origin}: schema violation at {path}: "
                              f"{exc.message}") from exc
    n = int(doc["n"])
    fld = Field(doc["field"])
    domain = (float(doc["domain"][0]), float(doc["domain"][1]))
    cls = doc["class"]
    try:
        if cls in (LPRIME, LDOUBLEPRIME):
            if "V" not in doc:
                raise SchemaError(f"{origin}: class {cls} needs V")
            v_fun = decode_matrix_function(doc["V"], domain)
            return SystemDescriptor(cls, n, fld, domain, V=v_fun, cfg=cfg)
        if "A" not in doc or "B" not in doc:
            raise SchemaError(f"{origin}: class {cls} needs A and B")
        a_fun = decode_matrix_function(doc["A"], domain)
        b_fun = decode_matrix_function(doc["B"], domain)
        f_fun = decode_vector_function(doc["f"], domain) if "f" in doc else None
        if cls == BARL:
            return SystemDescriptor(BARL, n, fld, domain, A=a_fun, B=b_fun,
                                    f=f_fun or VectorFunction.zero(n, domain),
                                    cfg=cfg)
        return SystemDescriptor(HOMOGENEOUS, n, fld, domain, A=a_fun, B=b_fun,
                                cfg=cfg)
    except (RepresentationError, FieldError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{origin}: {exc}") from exc


def system_to_document(sys: SystemDescriptor):
    doc = {"n": sys.n, "field": sys.field.value, "class": sys.cls,
           "domain": [sys.domain[0], sys.domain[1]]}
    if sys.cls in (LPRIME, LDOUBLEPRIME):
        doc["V"] = encode_matrix_function(sys.V)
    else:
        doc["A"] = encode_matrix_function(sys.A)
        doc["B"] = encode_matrix_function(sys.B)
        if sys.cls == BARL and sys.f is not None:
            doc["f"] = encode_vector_function(sys.f)
    return doc


def load_symmetries(path: str, domain):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    if jsonschema is not None:
        try:
            jsonschema.validate(doc, SYMMETRY_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"{path}: schema violation: {exc.message}") from exc
    out = []
    for item in doc:
        tau = decode_scalar_function(item["tau"], domain)
        gamma = _decode_array(item["gamma"]) if "gamma" in item else None
        chi = decode_vector_function(item["chi"], domain) if "chi" in item else None
        out.append(SymmetryVectorField(tau=tau, gamma=gamma, chi=chi))
    return out


def _tolerances(args) -> ToleranceConfig:
    return ToleranceConfig(rank_tol=args.rank_tol, residual_tol=args.tol)


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float,
                   default=float(os.environ.get("SYMODE_TOL", 1e-6)),
                   help="residual tolerance (env SYMODE_TOL)")
    p.add_argument("--rank-tol", type=float,
                   default=float(os.environ.get("SYMODE_RANK_TOL", 1e-9)),
                   help="rank decision cutoff (env SYMODE_RANK_TOL)")
    p.add_argument("--grid", type=int,
                   default=int(os.environ.get("SYMODE_GRID", 1024)),
                   help="ODE grid steps (env SYMODE_GRID)")
    p.add_argument("--seed", type=int,
                   default=int(os.environ.get("SYMODE_SEED", 0)),
                   help="seed for randomized searches (env SYMODE_SEED)")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def _emit(args, payload):
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_gauge(args) -> int:
    cfg = _tolerances(args)
    sys_in = load_system(args.input, cfg)
    try:
        if args.target == "f0":
            ts = gauge_f_zero(sys_in, args.grid)
        elif args.target == "a0":
            work = sys_in
            if sys_in.cls == BARL:
                work = gauge_f_zero(sys_in, args.grid).system
            ts = gauge_A_zero(work, args.grid)
        else:
            work = sys_in
            if work.cls == BARL:
                work = gauge_f_zero(work, args.grid).system
            if work.cls == HOMOGENEOUS:
                work = gauge_A_zero(work, args.grid).system
            ts = gauge_traceless(work, args.grid)
    except GaugeError as exc:
        print(f"gauge inapplicable: {exc}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except (LinalgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    resid = verify_equivalence(sys_in, ts.system, ts.transform, seed=args.seed,
                               grid_steps=min(args.grid, 2048))
    tr = ts.transform
    payload = {
        "system": system_to_document(ts.system),
        "transform": {
            "T": encode_scalar_function(tr.T),
            "H": encode_matrix_function(tr.H),
            "h": encode_vector_function(tr.h) if tr.h is not None else None,
            "branch": tr.branch_note,
        },
        "residual": resid,
        "provenance": ts.provenance,
        "tolerances": {"residual_tol": cfg.residual_tol, "rank_tol": cfg.rank_tol},
    }
    _emit(args, payload)
    if resid > 10 * cfg.residual_tol:
        print(f"numerical failure: equivalence residual {resid:.3g} above "
              f"tolerance", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def classification_payload(rep, cfg):
    payload = {
        "singular": rep.singular,
        "n": rep.n,
        "field": rep.field.value,
        "dim_total": rep.dim_total,
        "notes": rep.notes,
        "tolerances": {"residual_tol": cfg.residual_tol, "rank_tol": cfg.rank_tol},
    }
    if not rep.singular:
        payload.update({"k": rep.k, "dim_s": rep.dim_s, "dim_ess": rep.dim_ess,
                        "case": rep.case_label,
                        "improper_t_shift": rep.improper_shift})
        if rep.essential is not None:
            if rep.essential.verification_residual is not None:
                payload["verification_residual"] = \
                    rep.essential.verification_residual
            if rep.essential.confidence_gap is not None \
                    and np.isfinite(rep.essential.confidence_gap):
                payload["sv_confidence_gap"] = rep.essential.confidence_gap
    return payload


def cmd_classify(args) -> int:
    cfg = _tolerances(args)
    sys_in = load_system(args.input, cfg)
    try:
        rep = classify(sys_in)
    except ClassificationError as exc:
        print(f"classification inapplicable: {exc}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except (GaugeError, LinalgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.format == "json":
        _emit(args, classification_payload(rep, cfg))
    else:
        lines = [f"n = {rep.n}, field = {rep.field.value}"]
        if rep.singular:
            lines.append(f"singular class (free-particle orbit): "
                         f"dim_total = {rep.dim_total}")
        else:
            lines.append(f"k = {rep.k}, dim s = {rep.dim_s}, "
                         f"dim_ess = {rep.dim_ess}, dim_total = {rep.dim_total}")
            if rep.case_label is not None:
                lines.append(f"case {rep.case_label}: "
                             f"{CASE_BASIS_TEXT.get(rep.case_label, '')}")
            if rep.improper_shift:
                lines.append("improper t-shift invariance")
        for note in rep.notes:
            lines.append(f"  - {note}")
        text = "\n".join(lines)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
    return EXIT_OK


def cmd_integrate(args) -> int:
    cfg = _tolerances(args)
    sys_in = load_system(args.input, cfg)
    syms = []
    if args.symmetries:
        syms = load_symmetries(args.symmetries, sys_in.domain)
    try:
        sol = integrate_auto(sys_in, syms, args.grid)
    except IntegrationError as exc:
        print(f"integration inapplicable: {exc}", file=sys.stderr)
        print("regular systems require known symmetries with nonzero "
              "t-components", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except (GaugeError, LinalgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    h_sys = sys_in
    if sys_in.cls == BARL and (sys_in.f is None
                               or sys_in.f.max_norm() <= cfg.residual_tol):
        h_sys = SystemDescriptor(HOMOGENEOUS, sys_in.n, sys_in.field,
                                 sys_in.domain, A=sys_in.A, B=sys_in.B, cfg=cfg)
    res_sys = sys_in if sol.particular is not None else h_sys
    worst = 0.0
    for j in range(2 * sys_in.n):
        traj = sol.positions[:, :, j]
        if sol.particular is not None:
            traj = traj + sol.particular
        worst = max(worst, residual(res_sys, traj, sol.grid))
    payload = {
        "procedure": sol.plan.procedure if sol.plan else sol.method,
        "quadratures": sol.quadratures,
        "quadrature_bound": sol.plan.quadrature_bound if sol.plan else None,
        "residual": worst,
        "grid": [float(t) for t in sol.grid[:: max(1, len(sol.grid) // 128)]],
        "fundamental": [
            _encode_array(sol.positions[i])
            for i in range(0, len(sol.grid), max(1, len(sol.grid) // 128))
        ],
        "particular": None if sol.particular is None else [
            _encode_vector(sol.particular[i])
            for i in range(0, len(sol.grid), max(1, len(sol.grid) // 128))
        ],
        "notes": sol.plan.notes if sol.plan else [],
        "tolerances": {"residual_tol": cfg.residual_tol},
    }
    _emit(args, payload)
    print(f"procedure: {payload['procedure']}; quadratures: {sol.quadratures}; "
          f"residual: {worst:.3g}", file=sys.stderr)
    return EXIT_OK


def cmd_similar(args) -> int:
    cfg = _tolerances(args)
    sys_a = load_system(args.input_a, cfg)
    sys_b = load_system(args.input_b, cfg)

    def as_pair(s):
        if s.cls in (LPRIME, LDOUBLEPRIME):
            if s.V.kind == CONJ_EXP:
                v0 = (s.V.epsilon * np.eye(s.n) + s.V.w)
                return ("structured", s.V.upsilon, v0)
            if s.V.kind == CONSTANT:
                return ("structured", np.zeros((s.n, s.n)), s.V.value)
            return None
        if s.cls in (HOMOGENEOUS, BARL) and s.A.kind == CONSTANT \
                and s.B.kind == CONSTANT:
            return ("constant", s.A.value, s.B.value)
        return None

    pa, pb = as_pair(sys_a), as_pair(sys_b)
    if pa is None or pb is None or pa[0] != pb[0]:
        print("unsupported representations for the similarity test "
              "(need constant-coefficient or structured inputs of the same "
              "shape)", file=sys.stderr)
        return EXIT_INAPPLICABLE
    fld = Field.COMPLEX if Field.COMPLEX in (sys_a.field, sys_b.field) \
        else sys_a.field
    if pa[0] == "structured":
        verdict = similar_structured(pa[1:], pb[1:], cfg, fld, seed=args.seed)
    else:
        verdict = similar_constant_coeff(pa[1:], pb[1:], cfg, fld, seed=args.seed)
    payload = {"outcome": verdict.outcome, "notes": verdict.notes}
    if verdict.outcome == "similar":
        payload.update({"alpha": _encode_entry(verdict.alpha),
                        "m": _encode_array(verdict.m),
                        "gamma": _encode_array(verdict.gamma),
                        "residual": verdict.residual})
    if verdict.obstruction:
        payload["obstruction"] = verdict.obstruction
    _emit(args, payload)
    return EXIT_OK


def cmd_demo_n2(args) -> int:
    cfg = _tolerances(args)
    fld = Field(args.field)
    cases = casebook.n2_cases(fld, cfg)
    rows = []
    mismatches = []
    for case in cases:
        rep = classify(case.system)
        got = (rep.k, rep.dim_ess)
        expect = (case.expected_k, case.expected_dim_ess)
        ok = got == expect and rep.case_label == case.label
        rows.append((case.label, expect, got, rep.case_label, ok))
        if not ok:
            mismatches.append(case.label)
    width = 68
    print(f"{'case':>5} | {'expected (k, dim_ess)':>22} | "
          f"{'computed':>12} | {'label':>6} | ok")
    print("-" * width)
    for label, expect, got, got_label, ok in rows:
        print(f"{label:>5} | {str(expect):>22} | {str(got):>12} | "
              f"{got_label or '-':>6} | {'yes' if ok else 'NO'}")
    print(f"{len(rows)} rows, {len(rows) - len(mismatches)} matching")
    if mismatches:
        print(f"mismatched cases: {', '.join(mismatches)}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="symode",
        description="Normalize, classify and integrate normal linear systems "
                    "of second-order ODEs x_tt = A(t) x_t + B(t) x + f(t).")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gauge", help="apply a normalization gauge")
    g.add_argument("input")
    g.add_argument("--target", choices=["f0", "a0", "traceless"], required=True)
    _common_flags(g)
    g.set_defaults(func=cmd_gauge)

    c = sub.add_parser("classify", help="compute the essential symmetry structure")
    c.add_argument("input")
    c.add_argument("--format", choices=["json", "text"], default="json")
    _common_flags(c)
    c.set_defaults(func=cmd_classify)

    i = sub.add_parser("integrate", help="integrate via symmetry procedures")
    i.add_argument("input")
    i.add_argument("--symmetries", default=None,
                   help="JSON file with symmetry vector fields")
    _common_flags(i)
    i.set_defaults(func=cmd_integrate)

    s = sub.add_parser("similar", help="decide point-transformation similarity")
    s.add_argument("input_a")
    s.add_argument("input_b")
    _common_flags(s)
    s.set_defaults(func=cmd_similar)

    d = sub.add_parser("demo-n2", help="run the two-variable classification table")
    d.add_argument("--field", choices=["real", "complex"],
                   default=os.environ.get("SYMODE_FIELD", "complex"))
    _common_flags(d)
    d.set_defaults(func=cmd_demo_n2)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
