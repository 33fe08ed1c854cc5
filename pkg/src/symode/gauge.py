"""Equivalence transformations and the normalization chain f=0 -> A=0 -> tr V=0.

Systems live in one of four classes: barL (full x_tt = A x_t + B x + f),
L (homogeneous, f=0), Lprime (A=0, coefficient matrix V), Ldoubleprime
(traceless V).  Point transformations are triples (T, H, h) acting by
t~ = T(t), x~ = H(t) x + h(t), with the induced push-forward on coefficients

    A~ = T_t^-2 (T_t H A + 2 T_t H_t - T_tt H) H^-1,
    B~ = T_t^-3 (T_t H B - T_t^2 A~ H_t + T_t H_tt - T_tt H_t) H^-1,
    f~ = T_t^-3 (T_t H f + T_t h_tt - T_tt h_t - T_t^2 A~ h_t - T_t^3 B~ h),

all composed with the inverse time map.  For V-class systems the transforms
specialize to H = T_t^(1/2) C with constant invertible C and

    V~ = T_t^-2 C V C^-1 + ((2 T_t T_ttt - 3 T_tt^2) / (4 T_t^4)) E.

The singular subclass (orbit of the free particle) is detected by
B - (1/2) A_t + (1/4) A^2 being proportional to E with a time-dependent
factor; the +1/4 A^2 sign is the convention adopted throughout (re-derived
from H_t = -(1/2) H A).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import linalg
from .matfun import (CONSTANT, POLYNOMIAL, SAMPLED, MatrixFunction,
                     ScalarFunction, VectorFunction)
from .numutil import grid_derivative, rk4_bidirectional, uniform_grid
from .scalars import Field, ToleranceConfig

BARL = "barL"
HOMOGENEOUS = "L"
LPRIME = "Lprime"
LDOUBLEPRIME = "Ldoubleprime"

PROBES = 64


class GaugeError(RuntimeError):
    pass


@dataclass
class SystemDescriptor:
    """A system in one of the gauge classes, with its tolerance policy."""

    cls: str
    n: int
    field: Field
    domain: tuple
    A: MatrixFunction | None = None
    B: MatrixFunction | None = None
    f: VectorFunction | None = None
    V: MatrixFunction | None = None
    cfg: ToleranceConfig = dc_field(default_factory=ToleranceConfig)

    def __post_init__(self):
        self.domain = (float(self.domain[0]), float(self.domain[1]))
        if self.cls in (BARL, HOMOGENEOUS):
            if self.A is None or self.B is None:
                raise GaugeError(f"class {self.cls} needs A and B")
        elif self.cls in (LPRIME, LDOUBLEPRIME):
            if self.V is None:
                raise GaugeError(f"class {self.cls} needs V")
            if self.cls == LDOUBLEPRIME and not self.V.is_traceless(self.cfg.residual_tol):
                raise GaugeError("Ldoubleprime requires traceless V on the probe grid")
        else:
            raise GaugeError(f"unknown class {self.cls}")

    @classmethod
    def bar_l(cls, A, B, f, field=Field.REAL, domain=None, cfg=None):
        domain = domain or A.domain
        return cls(BARL, A.n, field, domain, A=A, B=B, f=f, cfg=cfg or ToleranceConfig())

    @classmethod
    def homogeneous(cls, A, B, field=Field.REAL, domain=None, cfg=None):
        domain = domain or A.domain
        return cls(HOMOGENEOUS, A.n, field, domain, A=A, B=B, cfg=cfg or ToleranceConfig())

    @classmethod
    def lprime(cls, V, field=Field.REAL, domain=None, cfg=None):
        domain = domain or V.domain
        return cls(LPRIME, V.n, field, domain, V=V, cfg=cfg or ToleranceConfig())

    @classmethod
    def ldoubleprime(cls, V, field=Field.REAL, domain=None, cfg=None):
        domain = domain or V.domain
        return cls(LDOUBLEPRIME, V.n, field, domain, V=V, cfg=cfg or ToleranceConfig())

    def coefficients(self):
        """(A, B, f) evaluators normalized across classes (V-classes: A=0, B=V)."""
        n, dom = self.n, self.domain
        zero_m = MatrixFunction.zero(n, dom)
        zero_v = VectorFunction.zero(n, dom)
        if self.cls in (LPRIME, LDOUBLEPRIME):
            return zero_m, self.V, zero_v
        return self.A, self.B, (self.f if self.f is not None else zero_v)

    def companion_rhs(self):
        """z' = M(t) z + g(t) on the 2n-dim state z = (x, x_t)."""
        a_fun, b_fun, f_fun = self.coefficients()
        n = self.n

        def rhs(t, z):
            a = a_fun.evaluate(t)
            b = b_fun.evaluate(t)
            ff = f_fun.evaluate(t)
            x, v = z[..., :n], z[..., n:]
            if z.ndim == 1:
                return np.concatenate([v, b @ x + a @ v + ff])
            return np.concatenate([v, (b @ x) + (a @ v) + ff[:, None]], axis=0)

        return rhs


@dataclass
class EquivalenceTransform:
    """Point transformation (T, H, h): t~ = T(t), x~ = H(t) x + h(t).

    T must have nonvanishing (positive) derivative on the domain; the
    square-root branch for the V-class specialization is the principal one,
    with orientation-reversing T handled by pre-composing t -> -t.
    """

    T: ScalarFunction
    H: MatrixFunction
    h: VectorFunction | None = None
    branch_note: str = "principal branch; T_t > 0 required"

    @classmethod
    def identity(cls, n, domain=(-1.0, 1.0)):
        return cls(T=ScalarFunction.polynomial([0.0, 1.0], domain),
                   H=MatrixFunction.constant(np.eye(n), domain),
                   h=None)

    def is_identity(self, tol=1e-12):
        if self.T.kind != POLYNOMIAL or self.T.degree() != 1:
            return False
        if abs(complex(self.T.coeffs[0])) > tol or abs(complex(self.T.coeffs[1]) - 1) > tol:
            return False
        if self.H.kind != CONSTANT or np.max(np.abs(self.H.value - np.eye(self.H.n))) > tol:
            return False
        return self.h is None or self.h.max_norm() <= tol

    def is_affine(self):
        return self.T.kind == POLYNOMIAL and (self.T.degree() or 0) <= 1

    def affine_coeffs(self):
        b = complex(self.T.coeffs[0]).real
        a = complex(self.T.coeffs[1]).real if self.T.degree() >= 1 else 0.0
        return a, b

    def validate(self, cfg: ToleranceConfig, probes: int = PROBES):
        lo, hi = self.T.domain
        ts = np.linspace(lo, hi, probes)
        tt = self.T.derivative(1).evaluate(ts)
        if np.any(np.real(tt) <= 0.0):
            raise GaugeError("T_t must stay positive on the domain "
                             "(pre-compose with t -> -t for orientation reversal)")
        hvals = self.H.evaluate(ts)
        dets = np.abs(np.linalg.det(hvals))
        scale = np.max(np.linalg.norm(hvals, axis=(1, 2))) ** self.H.n
        if np.any(dets <= cfg.rank_tol * max(scale, 1.0)):
            raise GaugeError("H loses invertibility on the probe grid")


@dataclass
class TransformedSystem:
    system: SystemDescriptor
    transform: EquivalenceTransform
    provenance: str = ""


def _poly_mul(a_coeffs, b_coeffs):
    n = a_coeffs[0].shape[0]
    out = [np.zeros((n, n), dtype=np.result_type(a_coeffs[0], b_coeffs[0]))
           for _ in range(len(a_coeffs) + len(b_coeffs) - 1)]
    for i, a in enumerate(a_coeffs):
        for j, b in enumerate(b_coeffs):
            out[i + j] = out[i + j] + a @ b
    return out


def criterion_matrix(sys: SystemDescriptor) -> MatrixFunction:
    """B - (1/2) A_t + (1/4) A^2 for barL/L; V itself for the V-classes."""
    if sys.cls in (LPRIME, LDOUBLEPRIME):
        return sys.V
    a_fun, b_fun = sys.A, sys.B
    if a_fun.kind == CONSTANT and b_fun.kind == CONSTANT:
        return MatrixFunction.constant(
            b_fun.value + 0.25 * (a_fun.value @ a_fun.value), sys.domain)
    if a_fun.kind in (CONSTANT, POLYNOMIAL) and b_fun.kind in (CONSTANT, POLYNOMIAL):
        ac = a_fun.coeffs if a_fun.kind == POLYNOMIAL else [a_fun.value]
        bc = b_fun.coeffs if b_fun.kind == POLYNOMIAL else [b_fun.value]
        at = [k * ac[k] for k in range(1, len(ac))] or [np.zeros_like(ac[0])]
        sq = _poly_mul(ac, ac)
        deg = max(len(bc), len(at), len(sq))
        n = sys.n
        coeffs = []
        for k in range(deg):
            term = np.zeros((n, n), dtype=np.result_type(ac[0], bc[0]))
            if k < len(bc):
                term = term + bc[k]
            if k < len(at):
                term = term - 0.5 * at[k]
            if k < len(sq):
                term = term + 0.25 * sq[k]
            coeffs.append(term)
        return MatrixFunction.polynomial(coeffs, sys.domain)
    grid = uniform_grid(*sys.domain, 256)
    avals = a_fun.evaluate(grid)
    at = a_fun.derivative(1).evaluate(grid)
    bvals = b_fun.evaluate(grid)
    vals = bvals - 0.5 * at + 0.25 * np.einsum("tij,tjk->tik", avals, avals)
    return MatrixFunction.sampled(grid, vals)


def singular_class_test(sys: SystemDescriptor) -> bool:
    """True iff the criterion matrix is proportional to E (time-dependent factor)."""
    crit = criterion_matrix(sys)
    ts = np.linspace(sys.domain[0], sys.domain[1], PROBES)
    vals = crit.evaluate(ts)
    scale = max(1.0, float(np.max(np.abs(vals))))
    tol = sys.cfg.residual_tol * scale
    n = sys.n
    off = vals.copy()
    idx = np.arange(n)
    off[:, idx, idx] = 0.0
    if np.max(np.abs(off)) >= tol:
        return False
    diags = vals[:, idx, idx]
    spread = np.max(np.abs(diags - diags[:, :1]))
    return bool(spread < tol)


def _eval_all(fun, ts):
    return fun.evaluate(ts)


def _push_full(sys, tr, grid_steps=1024):
    """General push-forward on a grid; returns sampled coefficient functions."""
    lo, hi = sys.domain
    if tr.T.kind == SAMPLED:
        grid = tr.T.grid
        grid = grid[(grid >= lo - 1e-12) & (grid <= hi + 1e-12)]
    else:
        grid = uniform_grid(lo, hi, grid_steps)
    a_fun, b_fun, f_fun = sys.coefficients()
    n = sys.n
    tvals = np.real(tr.T.evaluate(grid))
    t1 = np.real(tr.T.derivative(1).evaluate(grid))
    t2 = np.real(tr.T.derivative(2).evaluate(grid))
    hmat = tr.H.evaluate(grid)
    h1 = tr.H.derivative(1).evaluate(grid)
    h2 = tr.H.derivative(2).evaluate(grid)
    hinv = np.linalg.inv(hmat)
    a = a_fun.evaluate(grid)
    b = b_fun.evaluate(grid)
    t1c = t1[:, None, None]
    t2c = t2[:, None, None]
    anew = (t1c * np.einsum("tij,tjk->tik", hmat, a) + 2.0 * t1c * h1 - t2c * hmat)
    anew = np.einsum("tij,tjk->tik", anew, hinv) / t1c ** 2
    bnew = (t1c * np.einsum("tij,tjk->tik", hmat, b)
            - t1c ** 2 * np.einsum("tij,tjk->tik", anew, h1)
            + t1c * h2 - t2c * h1)
    bnew = np.einsum("tij,tjk->tik", bnew, hinv) / t1c ** 3
    fv = f_fun.evaluate(grid)
    if tr.h is not None:
        hv = tr.h.evaluate(grid)
        hv1 = tr.h.derivative(1).evaluate(grid)
        hv2 = tr.h.derivative(2).evaluate(grid)
    else:
        hv = hv1 = hv2 = np.zeros((len(grid), n))
    fnew = (t1[:, None] * np.einsum("tij,tj->ti", hmat, fv)
            + t1[:, None] * hv2 - t2[:, None] * hv1
            - t1[:, None] ** 2 * np.einsum("tij,tj->ti", anew, hv1)
            - t1[:, None] ** 3 * np.einsum("tij,tj->ti", bnew, hv))
    fnew = fnew / t1[:, None] ** 3
    order = np.argsort(tvals)
    tgrid = tvals[order]
    return (tgrid,
            MatrixFunction.sampled(tgrid, anew[order], note="pushed coefficients"),
            MatrixFunction.sampled(tgrid, bnew[order], note="pushed coefficients"),
            VectorFunction.sampled(tgrid, fnew[order], note="pushed coefficients"))


def _extract_constant_c(tr: EquivalenceTransform, cfg: ToleranceConfig):
    """For V-class transforms: C = T_t^-1/2 H must be constant."""
    lo, hi = tr.T.domain
    ts = np.linspace(lo, hi, PROBES)
    t1 = np.real(tr.T.derivative(1).evaluate(ts))
    if np.any(t1 <= 0):
        raise GaugeError("T_t must stay positive on the domain")
    hvals = tr.H.evaluate(ts)
    cvals = hvals / np.sqrt(t1)[:, None, None]
    c = cvals.mean(axis=0)
    dev = np.max(np.abs(cvals - c))
    if dev > cfg.residual_tol * (1.0 + np.max(np.abs(c))):
        raise GaugeError("transform is outside the V-class family (H != T_t^1/2 C)")
    return c


def apply_equivalence(sys: SystemDescriptor, tr: EquivalenceTransform,
                      grid_steps: int = 1024) -> SystemDescriptor:
    """Push sys forward through tr; representation stays closed when it can.

    Affine T with constant H (constant h) keeps constant/polynomial/
    conjugated-exponential coefficients closed; anything else degrades to
    sampled output with a provenance note.
    """
    cfg = sys.cfg
    tr.validate(cfg)
    if sys.cls in (LPRIME, LDOUBLEPRIME):
        if tr.h is not None and tr.h.max_norm() > cfg.residual_tol:
            raise GaugeError("V-class transforms carry no vector shift")
        c = _extract_constant_c(tr, cfg)
        if tr.is_affine():
            a, b = tr.affine_coeffs()
            vt = sys.V.conjugate(c).scale(1.0 / a ** 2).compose_affine(1.0 / a, -b / a)
            new_cls = LDOUBLEPRIME if sys.cls == LDOUBLEPRIME else LPRIME
            return SystemDescriptor(new_cls, sys.n, sys.field, vt.domain, V=vt, cfg=cfg)
        lo, hi = sys.domain
        grid = tr.T.grid if tr.T.kind == SAMPLED else uniform_grid(lo, hi, grid_steps)
        grid = grid[(grid >= lo - 1e-12) & (grid <= hi + 1e-12)]
        tvals = np.real(tr.T.evaluate(grid))
        t1 = np.real(tr.T.derivative(1).evaluate(grid))
        t2 = np.real(tr.T.derivative(2).evaluate(grid))
        t3 = np.real(tr.T.derivative(3).evaluate(grid))
        sch = t3 / t1 - 1.5 * (t2 / t1) ** 2
        v = sys.V.evaluate(grid)
        cv = np.einsum("ij,tjk,kl->til", c, v, np.linalg.inv(c))
        vt_vals = (cv + 0.5 * sch[:, None, None] * np.eye(sys.n)) / t1[:, None, None] ** 2
        order = np.argsort(tvals)
        vt = MatrixFunction.sampled(tvals[order], vt_vals[order],
                                    note="pushed through non-affine reparametrization")
        new_cls = LDOUBLEPRIME if vt.is_traceless(cfg.residual_tol) else LPRIME
        return SystemDescriptor(new_cls, sys.n, sys.field, vt.domain, V=vt, cfg=cfg)
    # barL / L input
    closed = (tr.is_affine() and tr.H.kind == CONSTANT
              and (tr.h is None or tr.h.kind == CONSTANT))
    if closed:
        a, b = tr.affine_coeffs()
        hconst = tr.H.value
        anew = sys.A.conjugate(hconst).scale(1.0 / a).compose_affine(1.0 / a, -b / a)
        bnew = sys.B.conjugate(hconst).scale(1.0 / a ** 2).compose_affine(1.0 / a, -b / a)
        f_src = sys.f if (sys.cls == BARL and sys.f is not None) else None
        hshift = tr.h.value if tr.h is not None else None
        fnew = None
        if f_src is not None or hshift is not None:
            fnew = _closed_f_push(sys, a, b, hconst, hshift, bnew)
        if fnew is None or fnew.max_norm() <= cfg.residual_tol:
            if sys.cls == BARL:
                zero = VectorFunction.zero(sys.n, anew.domain)
                return SystemDescriptor(BARL, sys.n, sys.field, anew.domain,
                                        A=anew, B=bnew, f=zero, cfg=cfg)
            return SystemDescriptor(HOMOGENEOUS, sys.n, sys.field, anew.domain,
                                    A=anew, B=bnew, cfg=cfg)
        return SystemDescriptor(BARL, sys.n, sys.field, anew.domain,
                                A=anew, B=bnew, f=fnew, cfg=cfg)
    tgrid, anew, bnew, fnew = _push_full(sys, tr, grid_steps)
    if sys.cls == HOMOGENEOUS and (tr.h is None or tr.h.max_norm() <= cfg.residual_tol):
        return SystemDescriptor(HOMOGENEOUS, sys.n, sys.field, (tgrid[0], tgrid[-1]),
                                A=anew, B=bnew, cfg=cfg)
    return SystemDescriptor(BARL, sys.n, sys.field, (tgrid[0], tgrid[-1]),
                            A=anew, B=bnew, f=fnew, cfg=cfg)


def _closed_f_push(sys, a, b, hconst, hshift, bnew):
    """f~ for affine T, constant H, constant h (exact in representation)."""
    f_src = sys.f if sys.f is not None else VectorFunction.zero(sys.n, sys.domain)
    if f_src.kind == CONSTANT:
        base = VectorFunction.constant(hconst @ f_src.value / a ** 2, bnew.domain)
    elif f_src.kind == POLYNOMIAL:
        coeffs = [hconst @ c / a ** 2 for c in f_src.coeffs]
        shifted = _vector_poly_compose_affine(coeffs, 1.0 / a, -b / a)
        base = VectorFunction.polynomial(shifted, bnew.domain)
    else:
        grid = np.linspace(bnew.domain[0], bnew.domain[1], len(f_src.grid))
        src_t = (grid - b) / a
        base = VectorFunction.sampled(grid, f_src.evaluate(src_t) @ hconst.T / a ** 2)
    if hshift is None or np.max(np.abs(hshift)) == 0.0:
        return base
    # constant h: f~ = base - B~ h
    if bnew.kind == CONSTANT:
        corr = VectorFunction.constant(bnew.value @ hshift, bnew.domain)
    elif bnew.kind == POLYNOMIAL:
        corr = VectorFunction.polynomial([c @ hshift for c in bnew.coeffs], bnew.domain)
    else:
        grid = np.linspace(bnew.domain[0], bnew.domain[1], 257)
        corr = VectorFunction.sampled(grid, np.einsum("tij,j->ti", bnew.evaluate(grid), hshift))
    return _vector_sub(base, corr)


def _vector_poly_compose_affine(coeffs, alpha, beta):
    from math import comb
    out = [np.zeros_like(coeffs[0]) for _ in coeffs]
    for l, c in enumerate(coeffs):
        for j in range(l + 1):
            out[j] = out[j] + c * comb(l, j) * (alpha ** j) * (beta ** (l - j))
    return out


def _vector_sub(u: VectorFunction, v: VectorFunction) -> VectorFunction:
    if u.kind == CONSTANT and v.kind == CONSTANT:
        return VectorFunction.constant(u.value - v.value, u.domain)
    if u.kind in (CONSTANT, POLYNOMIAL) and v.kind in (CONSTANT, POLYNOMIAL):
        uc = u.coeffs if u.kind == POLYNOMIAL else [u.value]
        vc = v.coeffs if v.kind == POLYNOMIAL else [v.value]
        deg = max(len(uc), len(vc))
        coeffs = []
        for k in range(deg):
            term = np.zeros_like(uc[0])
            if k < len(uc):
                term = term + uc[k]
            if k < len(vc):
                term = term - vc[k]
            coeffs.append(term)
        return VectorFunction.polynomial(coeffs, u.domain)
    grid = np.linspace(u.domain[0], u.domain[1], 257)
    return VectorFunction.sampled(grid, u.evaluate(grid) - v.evaluate(grid))


def gauge_f_zero(sys: SystemDescriptor, grid_steps: int = 1024) -> TransformedSystem:
    """Remove the inhomogeneity by subtracting a particular solution.

    The particular solution starts from zero data at the left endpoint; the
    transform carries its negative as the vector shift.
    """
    if sys.cls != BARL:
        raise GaugeError("gauge_f_zero expects a barL system")
    cfg = sys.cfg
    n = sys.n
    lo, hi = sys.domain
    f_fun = sys.f if sys.f is not None else VectorFunction.zero(n, sys.domain)
    out_sys = SystemDescriptor(HOMOGENEOUS, n, sys.field, sys.domain,
                               A=sys.A, B=sys.B, cfg=cfg)
    if f_fun.max_norm() <= cfg.residual_tol:
        return TransformedSystem(out_sys, EquivalenceTransform.identity(n, sys.domain),
                                 provenance="already homogeneous; identity transform")
    grid = uniform_grid(lo, hi, grid_steps)
    rhs = sys.companion_rhs()
    try:
        traj = rk4_bidirectional(rhs, np.zeros(2 * n), grid, 0)
    except (FloatingPointError, OverflowError) as exc:  # pragma: no cover
        raise GaugeError(f"ODE step failure in particular solution: {exc}") from exc
    if not np.all(np.isfinite(traj)):
        raise GaugeError("ODE step failure: non-finite particular solution")
    part = traj[:, :n]
    tr = EquivalenceTransform(
        T=ScalarFunction.polynomial([0.0, 1.0], sys.domain),
        H=MatrixFunction.constant(np.eye(n), sys.domain),
        h=VectorFunction.sampled(grid, -part, note="minus the particular solution"))
    return TransformedSystem(out_sys, tr,
                             provenance="subtracted the particular solution with zero "
                                        "initial data at the left endpoint")


def gauge_A_zero(sys: SystemDescriptor, grid_steps: int = 1024) -> TransformedSystem:
    """Gauge the first-derivative coefficient away: H solves H_t + (1/2) H A = 0.

    The result is the V-class system with V = H (B - (1/2)A_t + (1/4)A^2) H^-1;
    constant coefficients stay in conjugated-exponential closed form.
    """
    if sys.cls not in (HOMOGENEOUS, BARL):
        if sys.cls in (LPRIME, LDOUBLEPRIME):
            return TransformedSystem(sys, EquivalenceTransform.identity(sys.n, sys.domain),
                                     provenance="already in the V-class; identity transform")
        raise GaugeError("gauge_A_zero expects a homogeneous system")
    if sys.cls == BARL and sys.f is not None and sys.f.max_norm() > sys.cfg.residual_tol:
        raise GaugeError("gauge f away first (gauge_f_zero)")
    cfg = sys.cfg
    n = sys.n
    lo, hi = sys.domain
    t0 = 0.5 * (lo + hi)
    grid = uniform_grid(lo, hi, grid_steps)
    i0 = len(grid) // 2
    if sys.A.max_norm() <= cfg.residual_tol:
        out = SystemDescriptor(LPRIME, n, sys.field, sys.domain, V=sys.B, cfg=cfg)
        return TransformedSystem(out, EquivalenceTransform.identity(n, sys.domain),
                                 provenance="A = 0 already; identity transform")
    if sys.A.kind == CONSTANT:
        a = sys.A.value
        ups = -0.5 * a
        hs = np.stack([linalg.exp_factory(ups)(t - t0) for t in grid])
        crit = criterion_matrix(sys)
        if crit.kind == CONSTANT:
            ef = linalg.exp_factory(ups)
            w = ef(-t0) @ crit.value @ ef(t0)
            vfun = MatrixFunction.conj_exp(0.0, ups, w, sys.domain)
        else:
            cvals = crit.evaluate(grid)
            vals = np.einsum("tij,tjk,tkl->til", hs, cvals, np.linalg.inv(hs))
            vfun = MatrixFunction.sampled(grid, vals)
        hfun = MatrixFunction.sampled(grid, hs, note="closed-form exp(-(t-t0) A/2)")
    else:
        a_fun = sys.A

        def hrhs(t, hmat):
            return -0.5 * hmat @ a_fun.evaluate(t)

        hs = rk4_bidirectional(hrhs, np.eye(n, dtype=sys.field.dtype), grid, i0)
        dets = np.abs(np.linalg.det(hs))
        if np.any(dets < cfg.rank_tol):
            raise GaugeError("H lost invertibility during the A-gauge solve "
                             "(theoretically impossible; numerical failure)")
        crit = criterion_matrix(sys)
        cvals = crit.evaluate(grid)
        vals = np.einsum("tij,tjk,tkl->til", hs, cvals, np.linalg.inv(hs))
        vfun = MatrixFunction.sampled(grid, vals)
        hfun = MatrixFunction.sampled(grid, hs, note="fundamental solve of H_t = -H A/2")
    out = SystemDescriptor(LPRIME, n, sys.field, sys.domain, V=vfun, cfg=cfg)
    tr = EquivalenceTransform(T=ScalarFunction.polynomial([0.0, 1.0], sys.domain), H=hfun)
    return TransformedSystem(out, tr, provenance=f"A-gauge with H(t0)=E at t0={t0:g}")


def gauge_traceless(sys: SystemDescriptor, grid_steps: int = 1024,
                    min_length_fraction: float = 0.125) -> TransformedSystem:
    """Reparametrize time so the coefficient matrix becomes traceless.

    Solves phi_tt = u phi with u = tr V / n for a Wronskian-normalized
    fundamental pair, takes T = phi1/phi2 on a zero-free subinterval of phi2,
    and pushes V with H = T_t^(1/2) E.  Then V~(T(t)) = T_t^-2 (V - u E),
    traceless by construction.
    """
    if sys.cls == LDOUBLEPRIME:
        return TransformedSystem(sys, EquivalenceTransform.identity(sys.n, sys.domain),
                                 provenance="already traceless; identity transform")
    if sys.cls != LPRIME:
        raise GaugeError("gauge_traceless expects a V-class system")
    cfg = sys.cfg
    n = sys.n
    lo, hi = sys.domain
    if sys.V.is_traceless(cfg.residual_tol):
        out = SystemDescriptor(LDOUBLEPRIME, n, sys.field, sys.domain, V=sys.V, cfg=cfg)
        return TransformedSystem(out, EquivalenceTransform.identity(n, sys.domain),
                                 provenance="trace already zero; identity transform")
    grid = uniform_grid(lo, hi, grid_steps)
    i0 = len(grid) // 2
    u_fun = sys.V.trace_part()

    def phirhs(t, y):
        u = np.real(u_fun.evaluate(t))
        return np.array([y[1], u * y[0]])

    phi1 = rk4_bidirectional(phirhs, np.array([0.0, 1.0]), grid, i0)
    phi2 = rk4_bidirectional(phirhs, np.array([1.0, 0.0]), grid, i0)
    # maximal zero-free run of phi2 containing the midpoint
    pos = phi2[:, 0] > 0.0
    j_lo, j_hi = i0, i0
    while j_lo > 0 and pos[j_lo - 1]:
        j_lo -= 1
    while j_hi < len(grid) - 1 and pos[j_hi + 1]:
        j_hi += 1
    shrunk = (j_lo > 0) or (j_hi < len(grid) - 1)
    if (grid[j_hi] - grid[j_lo]) < min_length_fraction * (hi - lo):
        raise GaugeError("no zero-free subinterval of the requested minimum length "
                         "for the trace gauge")
    sel = slice(j_lo, j_hi + 1)
    sub = grid[sel]
    p1, p2 = phi1[sel, 0], phi2[sel, 0]
    tvals = p1 / p2
    t1 = 1.0 / p2 ** 2  # Wronskian-normalized pair
    vvals = sys.V.evaluate(sub)
    uvals = np.real(u_fun.evaluate(sub))
    vt_vals = (vvals - uvals[:, None, None] * np.eye(n)) / t1[:, None, None] ** 2
    order = np.argsort(tvals)
    tgrid = tvals[order]
    vfun = MatrixFunction.sampled(tgrid, vt_vals[order], note="trace-gauged")
    out = SystemDescriptor(LDOUBLEPRIME, n, sys.field, (tgrid[0], tgrid[-1]), V=vfun, cfg=cfg)
    tfun = ScalarFunction.sampled(sub, tvals)
    hfun = MatrixFunction.sampled(sub, np.sqrt(t1)[:, None, None] * np.eye(n))
    prov = "trace gauge via the Schwarzian equation"
    if shrunk:
        prov += f"; domain shrunk to [{sub[0]:g}, {sub[-1]:g}] avoiding phi2 zeros"
    return TransformedSystem(out, EquivalenceTransform(T=tfun, H=hfun), provenance=prov)


def verify_equivalence(src: SystemDescriptor, dst: SystemDescriptor,
                       tr: EquivalenceTransform, seed: int = 0,
                       n_traj: int = 3, grid_steps: int = 1024) -> float:
    """Push random src trajectories through tr and measure the dst residual.

    Integrates from random data at the domain midpoint, maps (t, x) by the
    transform, differentiates the pushed trajectory on the (nonuniform) image
    grid and returns the max normalized defect of the dst equation.
    """
    rng = np.random.default_rng(seed)
    n = src.n
    lo, hi = src.domain
    tlo = max(lo, tr.T.domain[0])
    thi = min(hi, tr.T.domain[1])
    grid = uniform_grid(tlo, thi, grid_steps)
    i0 = len(grid) // 2
    rhs = src.companion_rhs()
    tvals = np.real(tr.T.evaluate(grid))
    hvals = tr.H.evaluate(grid)
    hshift = tr.h.evaluate(grid) if tr.h is not None else np.zeros((len(grid), n))
    a_fun, b_fun, f_fun = dst.coefficients()
    inside = (tvals >= dst.domain[0] - 1e-12) & (tvals <= dst.domain[1] + 1e-12)
    worst = 0.0
    for _ in range(n_traj):
        z0 = rng.standard_normal(2 * n)
        if src.field is Field.COMPLEX:
            z0 = z0 + 1j * rng.standard_normal(2 * n)
        traj = rk4_bidirectional(rhs, z0, grid, i0)
        x = traj[:, :n]
        pushed = np.einsum("tij,tj->ti", hvals, x) + hshift
        tg = tvals[inside]
        xg = pushed[inside]
        # wide stencils keep the measurement floor below the gauge residuals
        # even when the time map compresses the image grid
        d1 = grid_derivative(tg, xg, 1, stencil=7)
        d2 = grid_derivative(tg, xg, 2, stencil=9)
        avals = a_fun.evaluate(tg)
        bvals = b_fun.evaluate(tg)
        fvals = f_fun.evaluate(tg)
        defect = d2 - (np.einsum("tij,tj->ti", avals, d1)
                       + np.einsum("tij,tj->ti", bvals, xg) + fvals)
        interior = slice(4, -4)
        scale = max(1.0, float(np.max(np.abs(xg))))
        worst = max(worst, float(np.max(np.abs(defect[interior]))) / scale)
    return worst
