"""Essential symmetry algebras of V-class systems and similarity tests.

A symmetry of x_tt = V(t) x is a vector field tau d_t + ((1/2)tau_t x^a
+ Gamma^{ab} x^b + chi^a) d_{x^a} whose data satisfies the classifying
condition

    tau V_t = [Gamma, V] - 2 tau_t V + (1/2) tau_ttt E.

The essential algebra decomposes as <I> + (t-part |x s^vf): the scaling field
I is always present, s is the centralizer of the coefficient orbit inside
sl(n), and the t-part has dimension k <= 2 for regular systems.  Structured
(t-shift-invariant) coefficients V = eps E + e^{tY} W e^{-tY} are classified
through the K-sequence K_0 = W, K_{l+1} = [Y, K_l]; general polynomial and
sampled coefficients go through linear classifying-condition solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import linalg
from .gauge import (SystemDescriptor, gauge_A_zero, gauge_f_zero,
                    gauge_traceless, singular_class_test)
from .linalg import SubspaceBasis, commutator
from .matfun import (CONJ_EXP, CONSTANT, POLYNOMIAL, SAMPLED, MatrixFunction,
                     ScalarFunction, VectorFunction, kl_sequence,
                     kl_sequence_with_tail)
from .scalars import DEFAULT_TOL, Field, ToleranceConfig

PROBES = 64


class ClassificationError(RuntimeError):
    pass


@dataclass
class SymmetryVectorField:
    """Symmetry data (tau, Gamma[, chi]); class-L systems carry eta instead."""

    tau: ScalarFunction
    gamma: np.ndarray | None = None
    chi: VectorFunction | None = None
    eta: MatrixFunction | None = None

    def eta_function(self, n: int, domain) -> MatrixFunction:
        """eta(t) = (1/2) tau_t E + Gamma as a matrix function (V-class form)."""
        if self.eta is not None:
            return self.eta
        gamma = self.gamma if self.gamma is not None else np.zeros((n, n))
        if self.tau.kind == POLYNOMIAL:
            taut = [complex(c) for c in self.tau.derivative(1).coeffs]
            coeffs = []
            for j, c in enumerate(taut):
                base = 0.5 * c * np.eye(n, dtype=np.result_type(gamma.dtype, complex))
                if j == 0:
                    base = base + gamma
                coeffs.append(base)
            coeffs = [c.real if not np.iscomplexobj(gamma)
                      and abs(np.max(np.abs(c.imag))) == 0.0 else c for c in coeffs]
            return MatrixFunction.polynomial(coeffs, domain)
        grid = self.tau.grid
        taut = self.tau.derivative(1).evaluate(grid)
        vals = 0.5 * taut[:, None, None] * np.eye(n) + gamma
        return MatrixFunction.sampled(grid, vals)

    def drop_chi(self) -> "SymmetryVectorField":
        return SymmetryVectorField(tau=self.tau, gamma=self.gamma, eta=self.eta)


@dataclass
class EssentialAlgebra:
    """Computed structure <I> + (t-part |x s^vf) of the essential algebra."""

    k: int
    t_part: list  # list of (tau: ScalarFunction, lam: ndarray traceless)
    s_basis: SubspaceBasis
    n: int
    field: Field
    includes_identity: bool = True
    improper_shift_flag: bool = False
    notes: list = dc_field(default_factory=list)
    confidence_gap: float | None = None
    verification_residual: float | None = None

    def verify_against(self, v_fun: MatrixFunction,
                       cfg: ToleranceConfig = DEFAULT_TOL) -> float:
        """Max classifying-condition residual over every computed basis field."""
        worst = verify_symmetry(
            v_fun, SymmetryVectorField(
                tau=ScalarFunction.constant(0.0, v_fun.domain),
                gamma=np.eye(self.n)), cfg)
        for g in self.s_basis.mats:
            q = SymmetryVectorField(tau=ScalarFunction.constant(0.0, v_fun.domain),
                                    gamma=g)
            worst = max(worst, verify_symmetry(v_fun, q, cfg))
        for tau, gamma in self.t_part:
            worst = max(worst, verify_symmetry(
                v_fun, SymmetryVectorField(tau=tau, gamma=gamma), cfg))
        self.verification_residual = worst
        return worst

    @property
    def dim_s(self) -> int:
        return self.s_basis.dim

    @property
    def dim_ess(self) -> int:
        return 1 + self.s_basis.dim + self.k

    @property
    def dim_total(self) -> int:
        return self.dim_ess + 2 * self.n


def verify_symmetry(v_fun: MatrixFunction, q: SymmetryVectorField,
                    cfg: ToleranceConfig = DEFAULT_TOL, probes: int = PROBES) -> float:
    """Residual of the classifying condition, maximized over probe points."""
    n = v_fun.n
    lo = max(v_fun.domain[0], q.tau.domain[0])
    hi = min(v_fun.domain[1], q.tau.domain[1])
    ts = np.linspace(lo, hi, probes)
    tau = q.tau.evaluate(ts)
    tau1 = q.tau.derivative(1).evaluate(ts)
    tau3 = q.tau.derivative(3).evaluate(ts)
    v = v_fun.evaluate(ts)
    vt = v_fun.derivative(1).evaluate(ts)
    gamma = q.gamma if q.gamma is not None else np.zeros((n, n))
    comm = np.einsum("ij,tjk->tik", gamma, v) - np.einsum("tij,jk->tik", v, gamma)
    resid = (tau[:, None, None] * vt - comm + 2.0 * tau1[:, None, None] * v
             - 0.5 * tau3[:, None, None] * np.eye(n))
    return float(np.max(np.linalg.norm(resid, axis=(1, 2))))


def verify_symmetry_homogeneous(a_fun: MatrixFunction, b_fun: MatrixFunction,
                                q: SymmetryVectorField,
                                cfg: ToleranceConfig = DEFAULT_TOL,
                                probes: int = PROBES) -> float:
    """Residual of the two classifying conditions for x_tt = A x_t + B x."""
    n = a_fun.n
    lo = max(a_fun.domain[0], q.tau.domain[0])
    hi = min(a_fun.domain[1], q.tau.domain[1])
    ts = np.linspace(lo, hi, probes)
    eta_fun = q.eta_function(n, (lo, hi))
    tau = q.tau.evaluate(ts)
    tau1 = q.tau.derivative(1).evaluate(ts)
    tau2 = q.tau.derivative(2).evaluate(ts)
    eta = eta_fun.evaluate(ts)
    eta1 = eta_fun.derivative(1).evaluate(ts)
    eta2 = eta_fun.derivative(2).evaluate(ts)
    a = a_fun.evaluate(ts)
    at = a_fun.derivative(1).evaluate(ts)
    b = b_fun.evaluate(ts)
    bt = b_fun.derivative(1).evaluate(ts)

    def brk(x, y):
        return np.einsum("tij,tjk->tik", x, y) - np.einsum("tij,tjk->tik", y, x)

    r1 = (tau[:, None, None] * at - brk(eta, a) + tau1[:, None, None] * a
          - 2.0 * eta1 + tau2[:, None, None] * np.eye(n))
    r2 = (tau[:, None, None] * bt - brk(eta, b) + 2.0 * tau1[:, None, None] * b
          + np.einsum("tij,tjk->tik", a, eta1) - eta2)
    return float(max(np.max(np.linalg.norm(r1, axis=(1, 2))),
                     np.max(np.linalg.norm(r2, axis=(1, 2)))))


# ---------------------------------------------------------------------------
# classifying-condition solvers


def _solver_rows_poly(coeffs, n, trace_rows=None):
    """Rows of the linear system in (c0, c1, c2, vec Gamma) for polynomial V.

    Coefficient of t^j in tau V_t + 2 tau_t V - [Gamma, V]:
        c0 (j+1) M_{j+1} + c1 (j+2) M_j + c2 (j+3) M_{j-1} - [Gamma, M_j].
    """
    d = len(coeffs) - 1
    dtype = np.result_type(np.float64, *(c.dtype for c in coeffs))
    rows = []

    def m_at(j):
        if 0 <= j <= d:
            return coeffs[j]
        return np.zeros((n, n), dtype=dtype)

    for j in range(d + 2):
        block = np.zeros((n * n, 3 + n * n), dtype=dtype)
        block[:, 0] = (j + 1) * m_at(j + 1).reshape(-1, order="F")
        block[:, 1] = (j + 2) * m_at(j).reshape(-1, order="F")
        block[:, 2] = (j + 3) * m_at(j - 1).reshape(-1, order="F")
        block[:, 3:] = -linalg.ad_operator(m_at(j))
        rows.append(block)
    if trace_rows is not None:
        # tau u_t + 2 tau_t u = 0 as polynomial identity (u = trace part / n)
        u = trace_rows
        du = len(u) - 1

        def u_at(j):
            return u[j] if 0 <= j <= du else 0.0

        for j in range(du + 2):
            row = np.zeros((1, 3 + n * n), dtype=dtype)
            row[0, 0] = (j + 1) * u_at(j + 1)
            row[0, 1] = (j + 2) * u_at(j)
            row[0, 2] = (j + 3) * u_at(j - 1)
            rows.append(row)
    return np.vstack(rows)


def _nullspace_with_gap(a, rank_tol):
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    smax = s[0] if s.size else 0.0
    cut = rank_tol * smax
    below = s[s <= cut]
    above = s[s > cut]
    rank = len(above)
    null = vh[rank:].conj().T
    if below.size and above.size:
        gap = float(above[-1] / max(below[0], 1e-300))
    else:
        gap = np.inf
    return null, gap


def _nullspace_by_spectral_gap(a, floor_rel=1e-12, band_rel=1e-4, gap_min=100.0):
    """Nullspace with the rank cut at the first large singular-value gap.

    Finite-difference noise lifts the should-be-zero singular values of
    sampled-data systems well above machine precision, so a fixed threshold
    either loses genuine directions or admits spurious ones.  Scanning from
    the top, the cut is placed at the first boundary whose discarded tail is
    plausibly zero (below band_rel * s_max) and whose gap ratio exceeds
    gap_min; the machine-precision tier below the noise tier then stays inside
    the nullspace.  Returns (basis, boundary gap ratio).
    """
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    ncols = vh.shape[0]
    if s.size == 0 or s[0] == 0.0:
        return np.eye(ncols, dtype=a.dtype), np.inf
    smax = s[0]
    floor = floor_rel * smax
    chosen = None
    for rank in range(1, len(s) + 1):
        largest_discarded = s[rank] if rank < len(s) else floor
        if largest_discarded > band_rel * smax:
            continue  # would discard a direction that is not plausibly zero
        ratio = float(s[rank - 1] / max(largest_discarded, 1e-300))
        if ratio >= gap_min:
            chosen = (rank, ratio)
            break
    if chosen is None:
        rank = int(np.sum(s > floor))
        below = s[rank] if rank < len(s) else floor
        ratio = float(s[rank - 1] / max(below, 1e-300)) if rank else np.inf
        chosen = (rank, ratio)
    rank, ratio = chosen
    null = vh[rank:].conj().T
    return null, ratio


def _tau_from_coeffs(c, domain):
    return ScalarFunction.polynomial([c[0], c[1], c[2]], domain)


def _build_algebra(null_vecs, n, fld, domain, cfg, note, gap=None):
    """Turn classifying-condition nullspace vectors into an EssentialAlgebra."""
    nv = null_vecs.T  # rows are solutions
    if nv.shape[0] == 0:
        raise ClassificationError("empty solution space; the scaling field is always "
                                  "a solution, so this is a numerical failure")
    taus = nv[:, :3]
    # nullspace rows are unit vectors of a scale-normalized problem, so the
    # tau-block rank is decided against an absolute floor, not s_max-relative
    sv = np.linalg.svd(taus, compute_uv=False) if taus.size else np.zeros(0)
    k = int(np.sum(sv > 1e-6))
    if k > 0:
        u, s, vh = np.linalg.svd(taus, full_matrices=True)
        mix = u.conj().T @ nv
        t_rows = mix[:k]
        z_rows = mix[k:]
        z_rows[:, :3] = 0.0
    else:
        t_rows = nv[:0]
        z_rows = nv
    # tau = 0 part: split off the identity direction, keep the sl(n) ideal
    zmats = [z_rows[i, 3:].reshape(n, n, order="F") for i in range(z_rows.shape[0])]
    s_mats = [m - (np.trace(m) / n) * np.eye(n) for m in zmats]
    s_mats = [m for m in s_mats if linalg.frobenius_norm(m) > 1e-8]
    s_mats = linalg._reorthonormalize(s_mats, n, cfg)
    if fld is Field.REAL:
        s_mats = [m.real if np.iscomplexobj(m) and np.max(np.abs(m.imag)) < 1e-9 else m
                  for m in s_mats]
    s_basis = SubspaceBasis(mats=s_mats, n=n, in_sl=True)
    t_part = []
    for i in range(k):
        c = t_rows[i, :3]
        gamma = t_rows[i, 3:].reshape(n, n, order="F")
        gamma = gamma - (np.trace(gamma) / n) * np.eye(n)
        if fld is Field.REAL and np.iscomplexobj(c) \
                and np.max(np.abs(c.imag)) < 1e-9 \
                and np.max(np.abs(gamma.imag)) < 1e-9:
            c = c.real
            gamma = gamma.real
        t_part.append((_tau_from_coeffs(c, domain), gamma))
    notes = [note] if note else []
    ess = EssentialAlgebra(k=k, t_part=t_part, s_basis=s_basis, n=n, field=fld,
                           notes=notes, confidence_gap=gap)
    if k == 2:
        _normalize_k2(ess, cfg)
    return ess


def _poly_wronskian(c1, c2):
    """Coefficients of tau1 tau2' - tau2 tau1' for cubic-capped inputs."""
    out = np.zeros(6, dtype=np.result_type(c1.dtype, c2.dtype, float))
    d1 = [(j + 1) * c1[j + 1] for j in range(len(c1) - 1)]
    d2 = [(j + 1) * c2[j + 1] for j in range(len(c2) - 1)]
    for i, a in enumerate(c1):
        for j, b in enumerate(d2):
            out[i + j] += a * b
    for i, a in enumerate(c2):
        for j, b in enumerate(d1):
            out[i + j] -= a * b
    return out


def _normalize_k2(ess: EssentialAlgebra, cfg: ToleranceConfig) -> None:
    """Recombine the two t-fields so [P, D] = P, with Jordan-splitting cleanup.

    D's matrix is replaced by its semisimple part (the nilpotent part lies in
    s), P's by its hat-part with respect to D; both changes stay inside the
    computed algebra.
    """
    (tau1, g1), (tau2, g2) = ess.t_part
    if tau1.kind != POLYNOMIAL or tau2.kind != POLYNOMIAL:
        return
    c1 = np.zeros(3, dtype=complex)
    c2 = np.zeros(3, dtype=complex)
    for j, c in enumerate(tau1.coeffs[:3]):
        c1[j] = complex(c)
    for j, c in enumerate(tau2.coeffs[:3]):
        c2[j] = complex(c)
    w = _poly_wronskian(c1, c2)
    basis = np.stack([np.concatenate([c1, np.zeros(3)]),
                      np.concatenate([c2, np.zeros(3)])])
    coef, *_ = np.linalg.lstsq(basis.T[:, :2].astype(complex), w.astype(complex), rcond=None)
    a, b = coef
    resid = np.linalg.norm(w - a * basis[0] - b * basis[1])
    if resid > 1e-8 * (1.0 + np.linalg.norm(w)):
        ess.notes.append("t-part bracket did not close on tau components; "
                         "left unnormalized")
        return
    # X = a Q1 + b Q2 carries the derived-algebra direction; Y with ad-bc = 1
    if abs(a) > abs(b):
        c, d = 0.0, 1.0 / a
    else:
        c, d = -1.0 / b, 0.0
    tau_x = [a * c1[j] + b * c2[j] for j in range(3)]
    tau_y = [c * c1[j] + d * c2[j] for j in range(3)]
    gx = a * g1 + b * g2
    gy = c * g1 + d * g2
    if ess.field is Field.REAL:
        tau_x = [t.real for t in tau_x]
        tau_y = [t.real for t in tau_y]
        gx, gy = gx.real, gy.real
    try:
        gy_s, gy_n = linalg.jordan_chevalley(gy, cfg)
        if ess.s_basis.dim and ess.s_basis.contains(gy_n):
            gy = gy_s
        gx_hat, gx_check = linalg.hat_check_split(gx, gy, cfg)
        if ess.s_basis.dim and ess.s_basis.contains(gx_check):
            gx = gx_hat
    except linalg.LinalgError:
        ess.notes.append("k=2 Jordan normalization skipped (defective data)")
    dom = tau1.domain
    ess.t_part = [(ScalarFunction.polynomial(list(tau_x), dom), gx),
                  (ScalarFunction.polynomial(list(tau_y), dom), gy)]
    ess.notes.append("t-part normalized to bracket form [P, D] = P")


def solve_symmetries_traceless_poly(v_fun: MatrixFunction,
                                    cfg: ToleranceConfig = DEFAULT_TOL,
                                    fld: Field | None = None,
                                    trace_part=None) -> EssentialAlgebra:
    """Exact polynomial-coefficient solve of the classifying condition.

    V must be traceless (or trace_part supplies the scalar polynomial u, whose
    compatibility equation tau u_t + 2 tau_t u = 0 is appended; candidates
    failing it are filtered out by the joint nullspace).
    """
    if v_fun.kind not in (CONSTANT, POLYNOMIAL):
        raise ClassificationError("polynomial solver needs constant/polynomial V")
    coeffs = v_fun.coeffs if v_fun.kind == POLYNOMIAL else [v_fun.value]
    n = v_fun.n
    fld = fld or v_fun.field
    if trace_part is None and not v_fun.is_traceless(cfg.residual_tol):
        raise ClassificationError("input is not traceless; split the trace first")
    if max(linalg.frobenius_norm(c) for c in coeffs) <= cfg.residual_tol:
        raise ClassificationError("singular class; use singular path")
    # solutions of the classifying condition are invariant under scaling V,
    # so normalize to keep tau and Gamma components balanced in the nullspace;
    # the trace rows are homogeneous on their own and get their own scale
    scale = max(linalg.frobenius_norm(c) for c in coeffs)
    coeffs = [c / scale for c in coeffs]
    if trace_part is not None:
        u_scale = max(max(abs(complex(u)) for u in trace_part), 1e-300)
        trace_part = [u / u_scale for u in trace_part]
    rows = _solver_rows_poly(coeffs, n, trace_rows=trace_part)
    null, gap = _nullspace_with_gap(rows, cfg.rank_tol)
    note = "exact polynomial coefficient matching"
    if trace_part is not None:
        note += "; non-traceless input handled by the trace compatibility filter " \
                "(complete for polynomial coefficients)"
    return _build_algebra(null, n, fld, v_fun.domain, cfg, note)


def solve_symmetries_sampled(v_fun: MatrixFunction,
                             cfg: ToleranceConfig = DEFAULT_TOL,
                             fld: Field | None = None,
                             probes: int = PROBES) -> EssentialAlgebra:
    """Discretized classifying-condition solve for sampled traceless V."""
    if v_fun.kind != SAMPLED:
        raise ClassificationError("sampled solver needs a sampled V")
    if len(v_fun.grid) < 32:
        raise ClassificationError("sampled solver needs a grid of at least 32 points")
    n = v_fun.n
    fld = fld or v_fun.field
    if not v_fun.is_traceless(100 * cfg.residual_tol):
        raise ClassificationError("input is not traceless; gauge the trace away first")
    if v_fun.max_norm() <= cfg.residual_tol:
        raise ClassificationError("singular class; use singular path")
    ts = np.linspace(v_fun.domain[0], v_fun.domain[1], probes)
    v = v_fun.evaluate(ts)
    vt = v_fun.derivative(1).evaluate(ts)
    scale = max(1.0, float(np.max(np.abs(v))))
    rows = []
    for i, t in enumerate(ts):
        block = np.zeros((n * n, 3 + n * n), dtype=v.dtype)
        block[:, 0] = vt[i].reshape(-1, order="F")
        block[:, 1] = (t * vt[i] + 2.0 * v[i]).reshape(-1, order="F")
        block[:, 2] = (t * t * vt[i] + 4.0 * t * v[i]).reshape(-1, order="F")
        block[:, 3:] = -linalg.ad_operator(v[i])
        rows.append(block / scale)
    a = np.vstack(rows)
    # finite-difference noise on sampled data pushes the should-be-zero
    # singular values well above machine precision; cut at the dominant
    # spectral gap inside the plausibly-zero band instead of a fixed level
    null, gap = _nullspace_by_spectral_gap(a)
    note = "sampled classifying-condition solve"
    ess = _build_algebra(null, n, fld, v_fun.domain, cfg, note, gap=gap)
    if np.isfinite(gap) and gap < 10.0:
        ess.notes.append(f"ill-separated singular values (gap {gap:.2f} < 10); "
                         "dimension inconclusive")
        ess.confidence_gap = gap
    return ess


# ---------------------------------------------------------------------------
# structured (t-shift-invariant) classification


def _lambda_candidate(kl, cfg):
    """Least-squares solve of [Lam, K_l] = (l+2) K_l over the truncated list."""
    n = kl[0].shape[0]
    rows = []
    rhs = []
    for l, k in enumerate(kl):
        scale = max(linalg.frobenius_norm(k), 1e-300)
        rows.append(_lam_op(k) / scale)
        rhs.append(((l + 2) * k / scale).reshape(-1, order="F"))
    a = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(a, b.astype(a.dtype), rcond=None)
    lam = sol.reshape(n, n, order="F")
    resid = float(np.linalg.norm(a @ sol - b))
    return lam, resid


def _lam_op(k):
    """Operator Lam -> [Lam, k] on vec(Lam)."""
    n = k.shape[0]
    eye = np.eye(n, dtype=k.dtype)
    return np.kron(k.T, eye) - np.kron(eye, k)


def _chain_shift(lam, cfg):
    """Shift eigenvalue chains of a semisimple matrix so chain minima are 0.

    Chains are maximal descending runs of distinct eigenvalues with successive
    differences 1 or 2 (real parts); only a single-chain spectrum admits a
    global shift by a multiple of the identity, the smallest-integer choice.
    """
    evs = np.linalg.eigvals(lam.astype(complex))
    order = np.argsort(-evs.real)
    distinct: list[complex] = []
    for e in evs[order]:
        if not distinct or abs(e - distinct[-1]) > cfg.eig_cluster_tol * (1 + abs(e)):
            distinct.append(complex(e))
    chains: list[list[complex]] = []
    for e in distinct:
        attach = bool(chains) and (abs(chains[-1][-1] - e - 1.0) < 0.25
                                   or abs(chains[-1][-1] - e - 2.0) < 0.25)
        if attach:
            chains[-1].append(e)
        else:
            chains.append([e])
    if len(chains) == 1:
        shift = -min(e.real for e in chains[0])
        return lam + shift * np.eye(lam.shape[0], dtype=lam.dtype), shift
    return lam, 0.0


def classify_structured(eps, upsilon: np.ndarray, w: np.ndarray,
                        cfg: ToleranceConfig = DEFAULT_TOL,
                        fld: Field = Field.REAL,
                        domain=(-1.0, 1.0)) -> EssentialAlgebra:
    """Essential algebra of V = eps E + e^{tY} W e^{-tY}.

    The centralizer of the K-sequence gives s; the t-shift field guarantees
    k >= 1.  A second t-field exists iff a candidate from the graded relation
    [Lam, K_l] = (l+2) K_l (proper, tau = t) or from the exponential branches
    tau = e^{+-2 sqrt(eps) t} (improper, eps != 0) verifies against the
    classifying condition; the improper case raises the shift flag.
    """
    upsilon = np.asarray(upsilon)
    w = np.asarray(w)
    n = w.shape[0]
    tr_w = np.trace(w) / n
    w0 = w - tr_w * np.eye(n)
    eps_eff = complex(eps) + complex(tr_w)
    if abs(eps_eff.imag) < 1e-14:
        eps_eff = eps_eff.real
    if linalg.frobenius_norm(w0) <= cfg.residual_tol:
        raise ClassificationError("singular class; use singular path")
    ups0 = upsilon - (np.trace(upsilon) / n) * np.eye(n)
    kl, tail, tail_rel = kl_sequence_with_tail(ups0, w0, cfg)
    s_basis = centralizer_of(kl, cfg)
    v_fun = MatrixFunction.conj_exp(eps_eff, ups0, w0, domain)
    notes = [f"structured classification; K-list length {len(kl)}"]
    t_part = [(ScalarFunction.constant(1.0, domain), ups0)]
    k = 1
    improper = False
    verify_tol = max(cfg.residual_tol,
                     1e-6 * (1.0 + v_fun.max_norm()))
    terminates = tail_rel <= 1e-7
    if terminates and all(linalg.is_nilpotent(kx, cfg) for kx in kl):
        lam, resid = _lambda_candidate(kl, cfg)
        scale = max(linalg.frobenius_norm(kx) for kx in kl)
        if resid <= 1e-7 * (1.0 + scale):
            q_d = SymmetryVectorField(tau=ScalarFunction.polynomial([0.0, 1.0], domain),
                                      gamma=lam)
            if verify_symmetry(v_fun, q_d, cfg) <= verify_tol:
                lam_s, _ = linalg.jordan_chevalley(lam, cfg)
                if fld is Field.REAL and np.iscomplexobj(lam_s) \
                        and np.max(np.abs(lam_s.imag)) < 1e-8:
                    lam_s = lam_s.real
                _, shift = _chain_shift(lam_s, cfg)
                lam0 = lam - (np.trace(lam) / n) * np.eye(n)
                t_part.append((ScalarFunction.polynomial([0.0, 1.0], domain), lam0))
                # normalize the t-shift field to its hat-part, realizing the
                # bracket relation [P, D] = P inside the computed algebra
                try:
                    ups_hat, ups_check = linalg.hat_check_split(ups0, lam_s, cfg)
                    if s_basis.dim == 0 or s_basis.contains(ups_check):
                        t_part[0] = (t_part[0][0], ups_hat)
                except linalg.LinalgError:
                    notes.append("hat-part normalization skipped (defective data)")
                notes.append(f"second t-field tau = t with chain representative "
                             f"shifted by {shift:g} so chain minima are 0")
                k = 2
    if k == 1 and abs(eps_eff) > cfg.residual_tol:
        branches = []
        root = np.sqrt(complex(eps_eff))
        if fld is Field.COMPLEX:
            branches = [2.0 * root, -2.0 * root]
        elif isinstance(eps_eff, float) and eps_eff > 0:
            branches = [2.0 * np.sqrt(eps_eff), -2.0 * np.sqrt(eps_eff)]
        # real field with eps < 0: the branches would come as a cos/sin pair,
        # forcing k = 3, impossible for regular systems; skip
        found = []
        k_ext = _k_extended(ups0, w0, len(kl) + 3)
        for g0 in branches:
            gamma0 = _improper_gamma(k_ext, len(kl) - 1, g0, cfg)
            if gamma0 is None:
                continue
            grid = np.linspace(domain[0], domain[1], 2049)
            tau_vals = np.exp(g0 * grid)
            tau = ScalarFunction.sampled(grid, tau_vals)
            q = SymmetryVectorField(tau=tau, gamma=gamma0)
            if verify_symmetry(v_fun, q, cfg) <= verify_tol:
                found.append((tau, gamma0, g0))
        if len(found) > 1:
            raise ClassificationError("both improper branches verified: k >= 3, "
                                      "which only singular systems admit; "
                                      "check the singular test inputs")
        if found:
            tau, gamma0, g0 = found[0]
            t_part.append((tau, gamma0))
            k = 2
            improper = True
            notes.append(f"improper t-shift pair with exponent {g0:g}")
    ess = EssentialAlgebra(k=k, t_part=t_part, s_basis=s_basis, n=n, field=fld,
                           improper_shift_flag=improper, notes=notes)
    return ess


def centralizer_of(kl, cfg: ToleranceConfig) -> SubspaceBasis:
    return linalg.centralizer_basis(kl, restrict_traceless=True,
                                    n=kl[0].shape[0], cfg=cfg)


def _improper_gamma(k_ext, mstar, g0, cfg):
    """Solve [Gamma0, V0(t)] = e^{g0 t}(V0_t + 2 g0 V0) in Taylor coefficients.

    Conditions per order m: [Gamma0, K_m] = sum_l C(m,l) g0^{m-l} (K_{l+1}
    + 2 g0 K_l); solved in least squares through the truncated list plus two
    guard orders, then confirmed pointwise by the caller.
    """
    from math import comb
    n = k_ext[0].shape[0]
    rows = []
    rhs = []
    for m in range(mstar + 3):
        km = k_ext[m].astype(complex)
        r = np.zeros((n, n), dtype=complex)
        for l in range(m + 1):
            r += comb(m, l) * (g0 ** (m - l)) * (k_ext[l + 1].astype(complex)
                                                 + 2.0 * g0 * k_ext[l].astype(complex))
        scale = max(np.linalg.norm(km), np.linalg.norm(r), 1.0)
        rows.append(_lam_op(km) / scale)
        rhs.append((r / scale).reshape(-1, order="F"))
    a = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = float(np.linalg.norm(a @ sol - b))
    if resid > 1e-7 * (1.0 + float(np.linalg.norm(b))):
        return None
    gamma = sol.reshape(n, n, order="F")
    gamma = gamma - (np.trace(gamma) / n) * np.eye(n)
    if np.max(np.abs(gamma.imag)) < 1e-10:
        gamma = gamma.real
    return gamma


def _k_extended(upsilon, w0, length):
    """K_0..K_{length} by direct recursion (no truncation)."""
    out = [w0]
    cur = w0
    for _ in range(length + 1):
        cur = commutator(upsilon, cur)
        out.append(cur)
    return out


# ---------------------------------------------------------------------------
# dispatcher, n=2 case labels


@dataclass
class ClassificationReport:
    singular: bool
    n: int
    field: Field
    dim_total: int
    k: int | None = None
    dim_s: int | None = None
    dim_ess: int | None = None
    case_label: str | None = None
    improper_shift: bool = False
    essential: EssentialAlgebra | None = None
    notes: list = dc_field(default_factory=list)


def classify(sys: SystemDescriptor) -> ClassificationReport:
    """Full classification pipeline for a system in any gauge class.

    Singular systems report the projective algebra dimension (n+2)^2 - 1;
    regular ones are gauged to the V-class and dispatched to the structured,
    exact-polynomial or sampled solver, with an n=2 case label attached.
    """
    cfg = sys.cfg
    n = sys.n
    notes = []
    if singular_class_test(sys):
        return ClassificationReport(singular=True, n=n, field=sys.field,
                                    dim_total=(n + 2) ** 2 - 1,
                                    notes=["singular class: similar to the free "
                                           "particle; algebra isomorphic to "
                                           f"sl({n + 2})"])
    work = sys
    if work.cls == "barL":
        ts = gauge_f_zero(work)
        work = ts.system
        notes.append("gauged f to zero")
    if work.cls == "L":
        ts = gauge_A_zero(work)
        work = ts.system
        notes.append("gauged A to zero")
    v_fun = work.V
    fld = sys.field
    if v_fun.kind in (CONJ_EXP, CONSTANT):
        if v_fun.kind == CONJ_EXP:
            ess = classify_structured(v_fun.epsilon, v_fun.upsilon, v_fun.w,
                                      cfg, fld, work.domain)
        else:
            ess = classify_structured(0.0, np.zeros((n, n)), v_fun.value,
                                      cfg, fld, work.domain)
        notes.append("structured (t-shift-invariant) route")
    elif v_fun.kind == POLYNOMIAL:
        if v_fun.is_traceless(cfg.residual_tol):
            ess = solve_symmetries_traceless_poly(v_fun, cfg, fld)
        else:
            # exponential-tau symmetries require exponential coefficients, so
            # the degree-2 ansatz plus the trace filter is complete here
            u, v0 = v_fun.trace_split()
            tr_coeffs = [complex(c) if np.iscomplexobj(np.asarray(c))
                         else float(np.real(c)) for c in u.coeffs]
            ess = solve_symmetries_traceless_poly(v0, cfg, fld, trace_part=tr_coeffs)
        notes.append("polynomial coefficient route")
    else:
        if v_fun.is_traceless(cfg.residual_tol):
            ess = solve_symmetries_sampled(v_fun, cfg, fld)
        else:
            ts = gauge_traceless(work)
            notes.append("trace gauged away before the sampled solve; " + ts.provenance)
            work = ts.system
            ess = solve_symmetries_sampled(work.V, cfg, fld)
        notes.append("sampled route")
    resid = ess.verify_against(work.V, cfg)
    notes.append(f"classifying-condition residual of the computed basis: {resid:.3g}")
    label = label_case_n2(ess, v_fun, fld) if n == 2 else None
    return ClassificationReport(singular=False, n=n, field=fld,
                                dim_total=ess.dim_total, k=ess.k, dim_s=ess.dim_s,
                                dim_ess=ess.dim_ess, case_label=label,
                                improper_shift=ess.improper_shift_flag,
                                essential=ess, notes=notes + ess.notes)


def _generator_type(g: np.ndarray, cfg: ToleranceConfig, fld: Field) -> str:
    evs = np.linalg.eigvals(g.astype(complex))
    scale = max(1.0, float(np.max(np.abs(evs))))
    tol = cfg.eig_cluster_tol * scale * 100
    if np.all(np.abs(evs) < max(tol, 1e-6 * scale)):
        return "nilpotent"
    if fld is Field.REAL and np.any(np.abs(evs.imag) > max(tol, 1e-6 * scale)):
        return "complex_pair"
    return "split"


CASE_EXPECTATIONS = {
    "0": (0, 1), "1": (0, 2), "2": (0, 2), "3": (1, 2), "4": (1, 2),
    "5": (1, 3), "6": (1, 3), "7": (2, 4),
    "1R": (0, 2), "3R": (1, 2), "5R": (1, 3),
}

CASE_BASIS_TEXT = {
    "0": "<I>",
    "1": "<I, x2 d_x1>",
    "2": "<I, x1 d_x1 - x2 d_x2>",
    "3": "<I, d_t + x2 d_x1>",
    "4": "<I, d_t + x1 d_x1 - x2 d_x2>",
    "5": "<I, x2 d_x1, d_t + g (x1 d_x1 - x2 d_x2)>",
    "6": "<I, x1 d_x1 - x2 d_x2, d_t>",
    "7": "<I, x2 d_x1, d_t, t d_t + 2 x1 d_x1>",
    "1R": "<I, x1 d_x2 - x2 d_x1>",
    "3R": "<I, d_t + x2 d_x1 - x1 d_x2>",
    "5R": "<I, x1 d_x2 - x2 d_x1, d_t>",
}


def label_case_n2(ess: EssentialAlgebra, v_fun: MatrixFunction, fld: Field,
                  cfg: ToleranceConfig = DEFAULT_TOL) -> str:
    """Decision tree on (k, dim s, conjugacy types) for the n=2 table."""
    if ess.n != 2:
        raise ClassificationError("case labels are defined for n = 2 only")
    k, p = ess.k, ess.dim_s
    if k == 2:
        return "7"
    if k == 0 and p == 0:
        return "0"
    if k == 0 and p == 1:
        t = _generator_type(ess.s_basis.mats[0], cfg, fld)
        return {"nilpotent": "1", "split": "2", "complex_pair": "1R"}[t]
    if k == 1 and p == 0:
        gamma = ess.t_part[0][1]
        t = _generator_type(gamma, cfg, fld)
        return {"nilpotent": "3", "split": "4", "complex_pair": "3R"}[t]
    if k == 1 and p == 1:
        t = _generator_type(ess.s_basis.mats[0], cfg, fld)
        return {"nilpotent": "5", "split": "6", "complex_pair": "5R"}[t]
    raise ClassificationError(
        f"(k, dim s) = ({k}, {p}) is outside the two-variable classification "
        "table; a numerical failure upstream is likely")


# ---------------------------------------------------------------------------
# similarity of t-shift-invariant systems


@dataclass
class SimilarityVerdict:
    outcome: str  # "similar" | "not_similar" | "inconclusive"
    alpha: complex | None = None
    m: np.ndarray | None = None
    gamma: np.ndarray | None = None
    residual: float | None = None
    obstruction: str | None = None
    notes: list = dc_field(default_factory=list)

    @property
    def is_similar(self):
        return self.outcome == "similar"


def _rank_pattern(m: np.ndarray, cfg) -> tuple:
    n = m.shape[0]
    out = []
    p = np.eye(n, dtype=complex)
    for _ in range(n):
        p = p @ m
        out.append(linalg.rank_of(p, 1e-7))
    return tuple(out)


def _spectrum(m: np.ndarray, tol: float) -> np.ndarray:
    evs = np.linalg.eigvals(m.astype(complex))
    return np.array(sorted(evs, key=lambda z: (round(z.real, 9), round(z.imag, 9))))


def _alpha_candidates(v0_a, v0_b, cfg, ups_a=None, ups_b=None):
    """Finite candidate set for the time-scaling alpha from spectral matching."""
    tol = cfg.eig_cluster_tol
    ev_a = _spectrum(v0_a, tol)
    ev_b = _spectrum(v0_b, tol)
    scale_a = max(np.abs(ev_a)) if len(ev_a) else 0.0
    scale_b = max(np.abs(ev_b)) if len(ev_b) else 0.0
    nil_a = scale_a < 1e-7 * (1 + linalg.frobenius_norm(v0_a))
    nil_b = scale_b < 1e-7 * (1 + linalg.frobenius_norm(v0_b))
    if nil_a != nil_b:
        return None, "nilpotency of V(0) differs"
    if nil_a and nil_b:
        # V(0) spectra give no constraint: guess from the upsilon spectra
        # (exact whenever adding s-elements preserves them), the norm ratio,
        # and the unit scaling; wrong guesses just fail the witness search
        guesses = [1.0 + 0.0j, -1.0 + 0.0j]
        if ups_a is not None and ups_b is not None:
            ua = _spectrum(ups_a, tol)
            ub = _spectrum(ups_b, tol)
            for la in ua:
                if abs(la) < 1e-8 * (1 + np.max(np.abs(ua))):
                    continue
                for lb in ub:
                    cand = lb / la
                    if abs(cand) > 1e-10 and \
                            not any(abs(cand - g) < 1e-9 for g in guesses):
                        guesses.append(cand)
        na, nb = linalg.frobenius_norm(v0_a), linalg.frobenius_norm(v0_b)
        if na > 0 and nb > 0:
            r = np.sqrt(nb / na)
            guesses += [complex(r), complex(-r), 1j * r, -1j * r]
        return guesses, None
    cands = []
    for la in ev_a:
        if abs(la) < 1e-9 * (1 + scale_a):
            continue
        for lb in ev_b:
            a2 = lb / la
            if abs(a2) < 1e-12:
                continue
            # the full multisets must match under alpha^2 scaling
            scaled = np.array(sorted(a2 * ev_a, key=lambda z: (round(z.real, 9),
                                                               round(z.imag, 9))))
            if np.max(np.abs(scaled - ev_b)) < 1e-6 * (1.0 + scale_b):
                root = np.sqrt(a2)
                for cand in (root, -root):
                    if not any(abs(cand - c) < 1e-9 for c in cands):
                        cands.append(cand)
    if not cands:
        return None, "no time scaling matches the V(0) spectra"
    return cands, None


def similar_structured(a: tuple, b: tuple, cfg: ToleranceConfig = DEFAULT_TOL,
                       fld: Field = Field.COMPLEX, seed: int = 0,
                       witness_tol: float = 1e-8) -> SimilarityVerdict:
    """Point-transformation similarity of V = e^{tY}V(0)e^{-tY} systems.

    a and b are (upsilon, v0) pairs.  Necessary invariants (rank patterns of
    V(0) powers, K-list length, dim s, spectral alpha-matching) prove
    NotSimilar; a verified witness (alpha, M, Gamma in s) proves Similar;
    anything else is Inconclusive.
    """
    ups_a, v0_a = (np.asarray(x) for x in a)
    ups_b, v0_b = (np.asarray(x) for x in b)
    n = v0_a.shape[0]
    if v0_b.shape[0] != n:
        return SimilarityVerdict("not_similar", obstruction="different dimensions")
    kl_a = kl_sequence(ups_a, v0_a, cfg)
    kl_b = kl_sequence(ups_b, v0_b, cfg)
    if len(kl_a) != len(kl_b):
        return SimilarityVerdict("not_similar",
                                 obstruction=f"K-list lengths differ "
                                             f"({len(kl_a)} vs {len(kl_b)})")
    s_a = centralizer_of(_traceless_list(kl_a), cfg)
    s_b = centralizer_of(_traceless_list(kl_b), cfg)
    if s_a.dim != s_b.dim:
        return SimilarityVerdict("not_similar",
                                 obstruction=f"centralizer dimensions differ "
                                             f"({s_a.dim} vs {s_b.dim})")
    if _rank_pattern(v0_a, cfg) != _rank_pattern(v0_b, cfg):
        return SimilarityVerdict("not_similar",
                                 obstruction="rank patterns of V(0) powers differ")
    cands, obstruction = _alpha_candidates(v0_a, v0_b, cfg, ups_a, ups_b)
    if cands is None:
        return SimilarityVerdict("not_similar", obstruction=obstruction)
    rng = np.random.default_rng(seed)
    complexify = fld is Field.COMPLEX
    for alpha in cands:
        if fld is Field.REAL and abs(np.imag(alpha)) > 1e-10:
            continue
        alpha_c = complex(alpha)
        witness = _witness_search(ups_a, v0_a, kl_a, s_a, ups_b, v0_b, kl_b,
                                  alpha_c, cfg, rng, complexify, witness_tol)
        if witness is not None:
            m, gamma, resid = witness
            if fld is Field.REAL:
                alpha_out = alpha_c.real
                m = m.real if np.max(np.abs(m.imag)) < 1e-9 else m
                gamma = gamma.real if np.max(np.abs(gamma.imag)) < 1e-9 else gamma
            else:
                alpha_out = alpha_c
            return SimilarityVerdict("similar", alpha=alpha_out, m=m, gamma=gamma,
                                     residual=resid)
    return SimilarityVerdict("inconclusive",
                             notes=["no witness converged within the trial budget"])


def _traceless_list(kl):
    n = kl[0].shape[0]
    out = []
    for k in kl:
        k0 = k - (np.trace(k) / n) * np.eye(n)
        if linalg.frobenius_norm(k0) > 1e-12:
            out.append(k0)
    return out or [kl[0] - (np.trace(kl[0]) / n) * np.eye(n)]


def _witness_search(ups_a, v0_a, kl_a, s_a, ups_b, v0_b, kl_b, alpha, cfg, rng,
                    complexify, witness_tol, trials=24):
    """Linear-lift search for (M, Gamma): K_b,l M = a^{l+2} M K_a,l and
    Y_b M = a M (Y_a + Gamma), Gamma in span(s_a).

    Unknowns (M, W_1..W_p) with W_i standing for g_i M; the bilinear Gamma
    coupling is relaxed to the linear rows Y_b M - a M Y_a = a sum S_i W_i,
    then every sampled invertible M is re-fit and re-verified exactly.
    """
    n = v0_a.shape[0]
    p = s_a.dim
    eye = np.eye(n, dtype=complex)
    blocks = []
    depth = max(len(kl_a), len(kl_b))
    k_as = _k_extended(ups_a, v0_a, depth + 1)
    k_bs = _k_extended(ups_b, v0_b, depth + 1)

    def k_rows(shift_col):
        rows = []
        for l in range(depth + 1):
            ka = k_as[l].astype(complex)
            kb = k_bs[l].astype(complex)
            scale = max(np.linalg.norm(ka), np.linalg.norm(kb), 1.0)
            op = (np.kron(eye, kb) - (alpha ** (l + 2)) * np.kron(ka.T, eye)) / scale
            row = np.zeros((n * n, n * n * (1 + p)), dtype=complex)
            row[:, shift_col:shift_col + n * n] = op
            rows.append(row)
        return rows

    blocks.extend(k_rows(0))
    for i in range(p):
        blocks.extend(k_rows((1 + i) * n * n))
    ups_row = np.zeros((n * n, n * n * (1 + p)), dtype=complex)
    ups_row[:, :n * n] = np.kron(eye, ups_b.astype(complex)) \
        - alpha * np.kron(ups_a.astype(complex).T, eye)
    for i, s_mat in enumerate(s_a.mats):
        ups_row[:, (1 + i) * n * n:(2 + i) * n * n] = \
            -alpha * np.kron(eye, s_mat.astype(complex))
    blocks.append(ups_row)
    a_mat = np.vstack(blocks)
    null = linalg.nullspace(a_mat, 1e-10)
    if null.shape[1] == 0:
        return None
    m_blocks = [null[:n * n, j].reshape(n, n, order="F") for j in range(null.shape[1])]
    zero = np.zeros((n, n), dtype=complex)
    for trial in range(trials):
        m = linalg.invertible_in_affine_space(m_blocks, zero, cfg,
                                              seed=int(rng.integers(1 << 30)),
                                              trials=16)
        if m is None:
            continue
        mi = np.linalg.inv(m)
        gamma_raw = (mi @ ups_b.astype(complex) @ m) / alpha - ups_a.astype(complex)
        if p:
            stack = np.stack([s.reshape(-1, order="F") for s in
                              (mm.astype(complex) for mm in s_a.mats)]).T
            coef, *_ = np.linalg.lstsq(stack, gamma_raw.reshape(-1, order="F"),
                                       rcond=None)
            gamma = sum(c * s.astype(complex) for c, s in zip(coef, s_a.mats))
        else:
            gamma = zero
        resid = (np.linalg.norm(ups_b - alpha * m @ (ups_a + gamma) @ mi)
                 + np.linalg.norm(v0_b - alpha ** 2 * m @ v0_a.astype(complex) @ mi))
        scale = 1.0 + np.linalg.norm(v0_b) + np.linalg.norm(ups_b)
        if resid <= witness_tol * scale:
            mn = m / np.linalg.norm(m) * np.sqrt(n)
            resid = (np.linalg.norm(ups_b - alpha * mn @ (ups_a + gamma)
                                    @ np.linalg.inv(mn))
                     + np.linalg.norm(v0_b - alpha ** 2 * mn @ v0_a.astype(complex)
                                      @ np.linalg.inv(mn)))
            return mn, gamma, float(resid)
    return None


def similar_constant_coeff(a: tuple, b: tuple, cfg: ToleranceConfig = DEFAULT_TOL,
                           fld: Field = Field.COMPLEX, seed: int = 0,
                           witness_tol: float = 1e-8) -> SimilarityVerdict:
    """Similarity of constant-coefficient systems x_tt = A x_t + B x.

    Converts via Y = -A/2, V(0) = B + Y^2, delegates to the structured test,
    and converts the witness back with Gamma_check = -2 Gamma.
    """
    a_mat, b_mat = (np.asarray(x) for x in a)
    a2_mat, b2_mat = (np.asarray(x) for x in b)
    ups_a = -0.5 * a_mat
    ups_b = -0.5 * a2_mat
    v0_a = b_mat + ups_a @ ups_a
    v0_b = b2_mat + ups_b @ ups_b
    verdict = similar_structured((ups_a, v0_a), (ups_b, v0_b), cfg, fld, seed,
                                 witness_tol)
    if verdict.outcome != "similar":
        return verdict
    gamma_check = -2.0 * verdict.gamma
    alpha, m = verdict.alpha, verdict.m
    mi = np.linalg.inv(m)
    corr = b_mat - 0.25 * (a_mat @ gamma_check + gamma_check @ a_mat
                           + gamma_check @ gamma_check)
    resid = (np.linalg.norm(a2_mat - alpha * m @ (a_mat + gamma_check) @ mi)
             + np.linalg.norm(b2_mat - alpha ** 2 * m @ corr @ mi))
    verdict.gamma = gamma_check
    verdict.residual = float(resid)
    verdict.notes.append("converted from the V-class witness; "
                         "Gamma_check = -2 Gamma")
    return verdict
