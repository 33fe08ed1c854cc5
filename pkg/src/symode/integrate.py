"""Symmetry-driven order reduction and integration.

Singular systems reduce to the free particle by the combined A-gauge and
trace-gauge (at most 2n quadratures for the inhomogeneity).  A single
symmetry with nonzero t-component straightens to a constant-coefficient
system (one quadrature for the time map); two symmetries with independent
t-components split the straightening solve into uncoupled blocks ordered by
the Jordan structure of zeta = eta2 - (tau2/tau1) eta1, with the quadrature
count bounded by n + p - r when the elementary divisors are distinct.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import linalg
from .gauge import (BARL, HOMOGENEOUS, LDOUBLEPRIME, LPRIME,
                    SystemDescriptor, criterion_matrix, gauge_f_zero,
                    singular_class_test)
from .matfun import POLYNOMIAL, MatrixFunction, ScalarFunction
from .numutil import (cumulative_integral, grid_derivative, rk4_bidirectional,
                      uniform_grid)
from .scalars import DEFAULT_TOL, Field, ToleranceConfig
from .symalg import SymmetryVectorField, verify_symmetry_homogeneous


class IntegrationError(RuntimeError):
    pass


@dataclass
class IntegrationPlan:
    procedure: str  # Singular | OneSymmetry | TwoSymmetry | ConstantDirect
    quadratures: int = 0
    h_grid: np.ndarray | None = None
    h_values: np.ndarray | None = None
    t_map: np.ndarray | None = None
    lam: np.ndarray | None = None
    modal: np.ndarray | None = None
    block_sizes: list = dc_field(default_factory=list)
    eligible_distinct_divisors: bool | None = None
    quadrature_bound: int | None = None
    notes: list = dc_field(default_factory=list)


@dataclass
class SolutionSet:
    """Fundamental solutions on a grid, plus an optional particular solution."""

    grid: np.ndarray
    positions: np.ndarray  # (m, n, 2n)
    velocities: np.ndarray  # (m, n, 2n)
    particular: np.ndarray | None
    method: str
    quadratures: int
    plan: IntegrationPlan | None = None
    generator: np.ndarray | None = None  # closed-form companion, when exact
    t0: float | None = None

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    def state_matrix(self, i: int) -> np.ndarray:
        """Stacked (2n x 2n) position/velocity state at grid index i."""
        return np.vstack([self.positions[i], self.velocities[i]])

    def wronskian(self, i: int) -> complex:
        return np.linalg.det(self.state_matrix(i))

    def min_abs_wronskian(self) -> float:
        return float(min(abs(self.wronskian(i)) for i in range(0, len(self.grid),
                                                               max(1, len(self.grid) // 32))))

    def general_solution(self, coeffs: np.ndarray) -> np.ndarray:
        """Trajectory sum_j c_j x_j (+ particular when present), on the grid."""
        out = np.einsum("mnj,j->mn", self.positions, coeffs)
        if self.particular is not None:
            out = out + self.particular
        return out


def residual(sys: SystemDescriptor, sol, grid) -> float:
    """Max normalized defect of x_tt = A x_t + B x + f along a trajectory.

    sol is either an (m, n) array of values on the grid or a callable
    returning them.
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 8:
        raise IntegrationError("residual grid too coarse (< 8 points)")
    vals = sol(grid) if callable(sol) else np.asarray(sol)
    a_fun, b_fun, f_fun = sys.coefficients()
    d1 = grid_derivative(grid, vals, 1)
    d2 = grid_derivative(grid, vals, 2)
    a = a_fun.evaluate(grid)
    b = b_fun.evaluate(grid)
    f = f_fun.evaluate(grid)
    defect = d2 - (np.einsum("tij,tj->ti", a, d1) + np.einsum("tij,tj->ti", b, vals) + f)
    interior = slice(3, -3)
    scale = max(1.0, float(np.max(np.abs(vals))))
    return float(np.max(np.abs(defect[interior]))) / scale


def bracket(q1: SymmetryVectorField, q2: SymmetryVectorField, n: int,
            domain) -> SymmetryVectorField:
    """Lie bracket of tau d_t + (eta x) d_x fields; chi components are dropped.

    tau3 = tau1 tau2_t - tau2 tau1_t and eta3 = tau1 eta2_t - tau2 eta1_t
    + [eta2, eta1], the orientation that realizes [P, D] = P when
    [Lam, Y] = Y.
    """
    e1 = q1.eta_function(n, domain)
    e2 = q2.eta_function(n, domain)
    if q1.tau.kind == POLYNOMIAL and q2.tau.kind == POLYNOMIAL \
            and e1.kind in (POLYNOMIAL, "constant") and e2.kind in (POLYNOMIAL, "constant"):
        c1 = [complex(c) for c in q1.tau.coeffs]
        c2 = [complex(c) for c in q2.tau.coeffs]
        tau3 = _poly_wr(c1, c2)
        m1 = e1.coeffs if e1.kind == POLYNOMIAL else [e1.value]
        m2 = e2.coeffs if e2.kind == POLYNOMIAL else [e2.value]
        eta3 = _poly_eta_bracket(c1, c2, m1, m2, n)
        tau_f = ScalarFunction.polynomial(tau3 if tau3 else [0.0], domain)
        eta_f = MatrixFunction.polynomial(eta3, domain)
        return SymmetryVectorField(tau=tau_f, eta=eta_f)
    grid = uniform_grid(domain[0], domain[1], 512)
    t1 = q1.tau.evaluate(grid)
    t2 = q2.tau.evaluate(grid)
    dt1 = q1.tau.derivative(1).evaluate(grid)
    dt2 = q2.tau.derivative(1).evaluate(grid)
    n1 = e1.evaluate(grid)
    n2 = e2.evaluate(grid)
    dn1 = e1.derivative(1).evaluate(grid)
    dn2 = e2.derivative(1).evaluate(grid)
    tau3 = t1 * dt2 - t2 * dt1
    eta3 = (t1[:, None, None] * dn2 - t2[:, None, None] * dn1
            + np.einsum("tij,tjk->tik", n2, n1) - np.einsum("tij,tjk->tik", n1, n2))
    return SymmetryVectorField(tau=ScalarFunction.sampled(grid, tau3),
                               eta=MatrixFunction.sampled(grid, eta3))


def _poly_wr(c1, c2):
    deg = len(c1) + len(c2)
    out = [0.0 + 0.0j] * max(deg - 1, 1)
    d1 = [(j + 1) * c1[j + 1] for j in range(len(c1) - 1)]
    d2 = [(j + 1) * c2[j + 1] for j in range(len(c2) - 1)]
    for i, a in enumerate(c1):
        for j, b in enumerate(d2):
            out[i + j] += a * b
    for i, a in enumerate(c2):
        for j, b in enumerate(d1):
            out[i + j] -= a * b
    return out


def _poly_eta_bracket(c1, c2, m1, m2, n):
    deg = max(len(c1) + len(m2), len(c2) + len(m1), len(m1) + len(m2))
    out = [np.zeros((n, n), dtype=complex) for _ in range(deg)]
    dm1 = [(j + 1) * m1[j + 1] for j in range(len(m1) - 1)]
    dm2 = [(j + 1) * m2[j + 1] for j in range(len(m2) - 1)]
    for i, a in enumerate(c1):
        for j, b in enumerate(dm2):
            out[i + j] = out[i + j] + a * b
    for i, a in enumerate(c2):
        for j, b in enumerate(dm1):
            out[i + j] = out[i + j] - a * b
    for i, a in enumerate(m2):
        for j, b in enumerate(m1):
            out[i + j] = out[i + j] + a @ b - b @ a
    while len(out) > 1 and np.max(np.abs(out[-1])) == 0.0:
        out.pop()
    reals = [o.real if np.max(np.abs(o.imag)) == 0.0 else o for o in out]
    return reals


def solve_constant(a_mat: np.ndarray, b_mat: np.ndarray, domain,
                   cfg: ToleranceConfig = DEFAULT_TOL,
                   grid_steps: int = 1024) -> SolutionSet:
    """State transition of x_tt = A x_t + B x via the companion exponential."""
    a_mat = np.asarray(a_mat)
    b_mat = np.asarray(b_mat)
    n = a_mat.shape[0]
    lo, hi = float(domain[0]), float(domain[1])
    t0 = 0.5 * (lo + hi)
    comp = np.zeros((2 * n, 2 * n), dtype=np.result_type(a_mat.dtype, b_mat.dtype, float))
    comp[:n, n:] = np.eye(n)
    comp[n:, :n] = b_mat
    comp[n:, n:] = a_mat
    ef = linalg.exp_factory(comp, cfg)
    grid = uniform_grid(lo, hi, grid_steps)
    states = np.stack([ef(t - t0) for t in grid])
    return SolutionSet(grid=grid, positions=states[:, :n, :],
                       velocities=states[:, n:, :], particular=None,
                       method="constant-coefficient companion exponential",
                       quadratures=0,
                       plan=IntegrationPlan(procedure="ConstantDirect"),
                       generator=comp, t0=t0)


def integrate_singular(sys: SystemDescriptor, grid_steps: int = 1024,
                       min_length_fraction: float = 0.125) -> SolutionSet:
    """Integrate a singular-class system by reduction to the free particle.

    M solves y_t + (1/2) A^T y = 0; phi1, phi2 solve phi_tt = U phi with
    U = tr(criterion)/n; the transform (T = phi1/phi2, H = T_t^(1/2) M^T)
    maps the system to x~_t~t~ = f~, integrated by two quadrature layers.
    """
    if not singular_class_test(sys):
        raise IntegrationError("system is not in the singular class")
    cfg = sys.cfg
    n = sys.n
    lo, hi = sys.domain
    grid = uniform_grid(lo, hi, grid_steps)
    i0 = len(grid) // 2
    a_fun, _, f_fun = sys.coefficients()

    def mrhs(t, m):
        return -0.5 * a_fun.evaluate(t).T @ m

    mmat = rk4_bidirectional(mrhs, np.eye(n, dtype=sys.field.dtype), grid, i0)
    crit = criterion_matrix(sys)
    uvals = np.real(np.trace(crit.evaluate(grid), axis1=1, axis2=2)) / n
    u_fun = ScalarFunction.sampled(grid, uvals)

    def phirhs(t, y):
        return np.array([y[1], float(np.real(u_fun.evaluate(t))) * y[0]])

    phi1 = rk4_bidirectional(phirhs, np.array([0.0, 1.0]), grid, i0)
    phi2 = rk4_bidirectional(phirhs, np.array([1.0, 0.0]), grid, i0)
    pos = phi2[:, 0] > 0.0
    j_lo, j_hi = i0, i0
    while j_lo > 0 and pos[j_lo - 1]:
        j_lo -= 1
    while j_hi < len(grid) - 1 and pos[j_hi + 1]:
        j_hi += 1
    if (grid[j_hi] - grid[j_lo]) < min_length_fraction * (hi - lo):
        raise IntegrationError("no zero-free subinterval of the requested minimum "
                               "length for the time reparametrization")
    sel = slice(j_lo, j_hi + 1)
    sub = grid[sel]
    p2 = phi2[sel, 0]
    p2t = phi2[sel, 1]
    tvals = phi1[sel, 0] / p2
    t1 = 1.0 / p2 ** 2
    t2 = -2.0 * p2t / p2 ** 3
    hvals = np.sqrt(t1)[:, None, None] * np.transpose(mmat[sel], (0, 2, 1))
    hinv = np.linalg.inv(hvals)
    fvals = f_fun.evaluate(sub)
    f_norm = float(np.max(np.abs(fvals))) if fvals.size else 0.0
    homogeneous = f_norm <= cfg.residual_tol
    ft_vals = np.einsum("tij,tj->ti", hvals, fvals) / t1[:, None] ** 2
    # two quadrature layers on the reparametrized time grid
    g1 = cumulative_integral(tvals, ft_vals)
    gvals = cumulative_integral(tvals, g1)
    m = len(sub)
    positions = np.zeros((m, n, 2 * n), dtype=hvals.dtype)
    velocities = np.zeros_like(positions)
    # x~ columns: e_j and T e_j; pull back through x = H^-1 x~(T)
    hdot = _singular_hdot(hvals, t1, t2, mmat[sel], a_fun, sub)
    hinv_dot = -np.einsum("tij,tjk,tkl->til", hinv, hdot, hinv)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        positions[:, :, j] = np.einsum("tij,j->ti", hinv, e)
        velocities[:, :, j] = np.einsum("tij,j->ti", hinv_dot, e)
        positions[:, :, n + j] = np.einsum("tij,j->ti", hinv, e) * tvals[:, None]
        velocities[:, :, n + j] = (np.einsum("tij,j->ti", hinv_dot, e) * tvals[:, None]
                                   + np.einsum("tij,j->ti", hinv, e) * t1[:, None])
    particular = None
    quad = 0
    if not homogeneous:
        particular = np.einsum("tij,tj->ti", hinv, gvals)
        quad = 2 * n
    plan = IntegrationPlan(procedure="Singular", quadratures=quad,
                           h_grid=sub, h_values=hvals, t_map=tvals,
                           quadrature_bound=2 * n,
                           notes=["reduced to the free particle by the combined "
                                  "A-gauge and trace gauge"])
    return SolutionSet(grid=sub, positions=positions, velocities=velocities,
                       particular=particular, method="singular-class reduction",
                       quadratures=quad, plan=plan)


def _singular_hdot(hvals, t1, t2, msel, a_fun, sub):
    # H = T_t^(1/2) M^T with M_t = -(1/2) A^T M
    mt = np.stack([-0.5 * a_fun.evaluate(t).T @ m for t, m in zip(sub, msel)])
    term1 = (0.5 * t2 / np.sqrt(t1))[:, None, None] * np.transpose(msel, (0, 2, 1))
    term2 = np.sqrt(t1)[:, None, None] * np.transpose(mt, (0, 2, 1))
    return term1 + term2


def integrate_one_symmetry(sys: SystemDescriptor, q: SymmetryVectorField,
                           grid_steps: int = 1024) -> SolutionSet:
    """Straighten one symmetry with nonzero t-component and solve.

    Steps: drop chi; H from tau y_t + eta y = 0 (transpose of a fundamental
    matrix); push-forward coefficients, asserted constant; constant solve;
    T from T_t = 1/tau (the single quadrature); pull back.
    """
    if sys.cls not in (HOMOGENEOUS, LPRIME, LDOUBLEPRIME):
        raise IntegrationError("integrate_one_symmetry expects a homogeneous "
                               "system (gauge f away first)")
    cfg = sys.cfg
    n = sys.n
    lo, hi = sys.domain
    a_fun, b_fun, _ = sys.coefficients()
    q = q.drop_chi()
    res = verify_symmetry_homogeneous(a_fun, b_fun, q, cfg)
    scale = 1.0 + b_fun.max_norm() + a_fun.max_norm()
    if res > 100 * cfg.residual_tol * scale:
        raise IntegrationError(f"symmetry not verified (residual {res:.3g})")
    grid = uniform_grid(lo, hi, grid_steps)
    i0 = len(grid) // 2
    tau = np.real(q.tau.evaluate(grid))
    if np.min(np.abs(tau)) <= 1e-12:
        raise IntegrationError("tau vanishes on the domain")
    eta_fun = q.eta_function(n, sys.domain)

    def hrhs(t, h):
        return -(1.0 / np.real(q.tau.evaluate(t))) * (h @ eta_fun.evaluate(t))

    hvals = rk4_bidirectional(hrhs, np.eye(n, dtype=sys.field.dtype), grid, i0)
    tmap = cumulative_integral(grid, 1.0 / tau)
    tmap = tmap - tmap[i0]
    abar, bbar = _pushforward_constant(sys, grid, tau, q.tau, eta_fun, hvals, cfg)
    tgrid_lo, tgrid_hi = float(np.min(tmap)), float(np.max(tmap))
    const = solve_constant(abar, bbar, (tgrid_lo, tgrid_hi), cfg, grid_steps)
    sol = _pullback(grid, tmap, 1.0 / tau, hvals, const, n, eta_fun, q.tau)
    plan = IntegrationPlan(procedure="OneSymmetry", quadratures=1,
                           h_grid=grid, h_values=hvals, t_map=tmap,
                           notes=["constant push-forward coefficients",
                                  f"A~ = {np.array2string(abar, precision=4)}",
                                  f"B~ = {np.array2string(bbar, precision=4)}"])
    sol.plan = plan
    sol.quadratures = 1
    sol.method = "one-symmetry straightening"
    return sol


def _pushforward_constant(sys, grid, tau, tau_fun, eta_fun, hvals, cfg):
    """A~, B~ via the point-transformation push-forward; asserted constant."""
    n = sys.n
    a_fun, b_fun, _ = sys.coefficients()
    taut = np.real(tau_fun.derivative(1).evaluate(grid))
    eta = eta_fun.evaluate(grid)
    etat = eta_fun.derivative(1).evaluate(grid)
    t1 = 1.0 / tau
    t2 = -taut / tau ** 2
    h = hvals
    ht = -np.einsum("tij,tjk->tik", h, eta) / tau[:, None, None]
    htt = (np.einsum("t,tij->tij", taut / tau ** 2, np.einsum("tij,tjk->tik", h, eta))
           + np.einsum("tij,tjk->tik", np.einsum("tij,tjk->tik", h, eta), eta)
           / tau[:, None, None] ** 2
           - np.einsum("tij,tjk->tik", h, etat) / tau[:, None, None])
    hinv = np.linalg.inv(h)
    a = a_fun.evaluate(grid)
    b = b_fun.evaluate(grid)
    t1c = t1[:, None, None]
    t2c = t2[:, None, None]
    anew = (t1c * np.einsum("tij,tjk->tik", h, a) + 2.0 * t1c * ht - t2c * h)
    anew = np.einsum("tij,tjk->tik", anew, hinv) / t1c ** 2
    bnew = (t1c * np.einsum("tij,tjk->tik", h, b)
            - t1c ** 2 * np.einsum("tij,tjk->tik", anew, ht)
            + t1c * htt - t2c * ht)
    bnew = np.einsum("tij,tjk->tik", bnew, hinv) / t1c ** 3
    i0 = len(grid) // 2
    abar, bbar = anew[i0], bnew[i0]
    dev_a = float(np.max(np.abs(anew - abar)))
    dev_b = float(np.max(np.abs(bnew - bbar)))
    tol_a = 1e4 * sys.cfg.residual_tol * (1.0 + float(np.max(np.abs(abar))))
    tol_b = 1e4 * sys.cfg.residual_tol * (1.0 + float(np.max(np.abs(bbar))))
    if dev_a > tol_a or dev_b > tol_b:
        raise IntegrationError(
            f"push-forward coefficients are not constant (deviations {dev_a:.3g}, "
            f"{dev_b:.3g}); symmetry not verified or numerics insufficient")
    return abar, bbar


def _pullback(grid, tmap, t1, hvals, const: SolutionSet, n, eta_fun, tau_fun):
    """x(t) = H^-1(t) x~(T(t)) for every fundamental column of const."""
    hinv = np.linalg.inv(hvals)
    tau = np.real(tau_fun.evaluate(grid))
    eta = eta_fun.evaluate(grid)
    ht = -np.einsum("tij,tjk->tik", hvals, eta) / tau[:, None, None]
    hinv_dot = -np.einsum("tij,tjk,tkl->til", hinv, ht, hinv)
    comp = _companion_evaluator(const)
    states = np.stack([comp(tv) for tv in tmap])
    xpos = states[:, :n, :]
    xvel = states[:, n:, :]
    positions = np.einsum("tij,tjk->tik", hinv, xpos)
    velocities = (np.einsum("tij,tjk->tik", hinv_dot, xpos)
                  + np.einsum("tij,tjk->tik", hinv, xvel) * t1[:, None, None])
    return SolutionSet(grid=grid, positions=positions, velocities=velocities,
                       particular=None, method="", quadratures=0)


def _companion_evaluator(const: SolutionSet):
    """Closed-form state evaluator t~ -> 2n x 2n from a constant solve."""
    ef = linalg.exp_factory(const.generator)
    t0 = const.t0

    def evaluate(tv):
        return ef(float(tv) - t0)

    return evaluate


def integrate_two_symmetries(sys: SystemDescriptor, q1: SymmetryVectorField,
                             q2: SymmetryVectorField,
                             grid_steps: int = 1024) -> SolutionSet:
    """Integrate using two symmetries with independent t-components.

    The pair is recombined so [Q1', Q2'] = Q1'; zeta = eta2 - (tau2/tau1) eta1
    is conjugated to its (constant) Jordan form Lam by the modal matrix, the
    conjugated eta1 is asserted block-diagonal along Lam's eigenspaces, the
    straightening fundamental solve splits blockwise, and the rest follows the
    one-symmetry path with T = tau2/tau1 (no quadrature for the time map).
    """
    if sys.cls not in (HOMOGENEOUS, LPRIME, LDOUBLEPRIME):
        raise IntegrationError("integrate_two_symmetries expects a homogeneous "
                               "system (gauge f away first)")
    cfg = sys.cfg
    n = sys.n
    lo, hi = sys.domain
    a_fun, b_fun, _ = sys.coefficients()
    q1 = q1.drop_chi()
    q2 = q2.drop_chi()
    scale = 1.0 + b_fun.max_norm() + a_fun.max_norm()
    for i, q in enumerate((q1, q2), 1):
        res = verify_symmetry_homogeneous(a_fun, b_fun, q, cfg)
        if res > 100 * cfg.residual_tol * scale:
            raise IntegrationError(f"symmetry {i} not verified (residual {res:.3g})")
    grid = uniform_grid(lo, hi, grid_steps)
    i0 = len(grid) // 2
    tau1 = q1.tau.evaluate(grid)
    tau2 = q2.tau.evaluate(grid)
    dt1 = q1.tau.derivative(1).evaluate(grid)
    dt2 = q2.tau.derivative(1).evaluate(grid)
    wr = tau1 * dt2 - tau2 * dt1
    tau_scale = max(float(np.max(np.abs(tau1))), float(np.max(np.abs(tau2))), 1e-30)
    if float(np.max(np.abs(wr))) <= 1e-9 * tau_scale:
        raise IntegrationError("tau-components dependent")
    # recombine to the bracket-normal form [X, Y] = X
    q3 = bracket(q1, q2, n, sys.domain)
    eta1_fun = q1.eta_function(n, sys.domain)
    eta2_fun = q2.eta_function(n, sys.domain)
    probes = np.linspace(lo, hi, 33)
    col1 = np.concatenate([np.atleast_1d(q1.tau.evaluate(probes)).astype(complex),
                           eta1_fun.evaluate(probes).reshape(-1)])
    col2 = np.concatenate([np.atleast_1d(q2.tau.evaluate(probes)).astype(complex),
                           eta2_fun.evaluate(probes).reshape(-1)])
    col3 = np.concatenate([np.atleast_1d(q3.tau.evaluate(probes)).astype(complex),
                           q3.eta_function(n, sys.domain).evaluate(probes).reshape(-1)])
    basis = np.stack([col1, col2], axis=1)
    coef, *_ = np.linalg.lstsq(basis, col3, rcond=None)
    aco, bco = complex(coef[0]), complex(coef[1])
    closure_resid = float(np.linalg.norm(col3 - basis @ coef))
    if closure_resid > 1e-6 * (1.0 + float(np.linalg.norm(col3))):
        raise IntegrationError("bracket does not close into the span: "
                               "not a 2-dimensional algebra")
    if max(abs(aco), abs(bco)) < 1e-12:
        raise IntegrationError("abelian pair with independent t-components "
                               "cannot occur; numerical failure")
    if abs(aco) > abs(bco):
        cco, dco = 0.0, 1.0 / aco
    else:
        cco, dco = -1.0 / bco, 0.0
    x_tau = _combine_scalar(q1.tau, q2.tau, aco, bco, sys.domain)
    y_tau = _combine_scalar(q1.tau, q2.tau, cco, dco, sys.domain)
    x_eta = _combine_matrix(eta1_fun, eta2_fun, aco, bco, sys.domain)
    y_eta = _combine_matrix(eta1_fun, eta2_fun, cco, dco, sys.domain)
    tau_x = x_tau.evaluate(grid)
    if np.min(np.abs(tau_x)) <= 1e-12:
        raise IntegrationError("recombined tau1 vanishes inside the domain; "
                               "restrict the domain")
    tau_y = y_tau.evaluate(grid)
    tmap = np.real(tau_y / tau_x)
    # zeta and its constant Jordan data from the midpoint probe
    ex = x_eta.evaluate(grid)
    ey = y_eta.evaluate(grid)
    zeta = ey - (tau_y / tau_x)[:, None, None] * ex
    charpolys = np.stack([np.poly(zeta[i]) for i in range(0, len(grid),
                                                          max(1, len(grid) // 16))])
    if float(np.max(np.abs(charpolys - charpolys[0]))) > \
            1e4 * cfg.residual_tol * (1.0 + float(np.max(np.abs(charpolys)))):
        raise IntegrationError("similarity invariants of zeta drift across the "
                               "grid; numerical failure")
    # complex eigenvalue pairs of a real system keep the complex modal
    # construction; the pulled-back solutions realify pairwise at the end
    lam, modal = linalg.jordan_form(zeta[i0], cfg)
    hhat = np.linalg.inv(modal)
    eta_check = np.einsum("ij,tjk,kl->til", hhat, ex, modal)
    clusters = linalg.eig_clustered(lam, cfg)
    sizes = [c.multiplicity for c in clusters]
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    offblock = eta_check.copy()
    for bi in range(len(sizes)):
        offblock[:, offs[bi]:offs[bi + 1], offs[bi]:offs[bi + 1]] = 0.0
    offmax = float(np.max(np.abs(offblock)))
    if offmax > 1e4 * cfg.residual_tol * (1.0 + float(np.max(np.abs(eta_check)))):
        raise IntegrationError(f"conjugated eta1 is not block-diagonal along the "
                               f"eigenspaces (off-block max {offmax:.3g}); "
                               "numerical failure")
    # blockwise straightening solves
    hcheck = np.zeros_like(eta_check)
    for bi in range(len(sizes)):
        sl = slice(offs[bi], offs[bi + 1])
        sub_fun = MatrixFunction.sampled(grid, eta_check[:, sl, sl])

        def blockrhs(t, h, fn=sub_fun):
            return -(1.0 / np.real(x_tau.evaluate(t))) * (h @ fn.evaluate(t))

        hb = rk4_bidirectional(blockrhs, np.eye(sizes[bi], dtype=complex), grid, i0)
        hcheck[:, sl, sl] = hb
    hvals = np.einsum("tij,jk->tik", hcheck, hhat)
    # push forward with exact derivatives of H = Hcheck Hhat
    abar, bbar = _pushforward_constant_pair(sys, grid, tau_x, x_tau,
                                            MatrixFunction.sampled(grid, eta_check),
                                            hcheck, hhat, cfg)
    order = np.argsort(tmap)
    t_lo, t_hi = float(tmap[order[0]]), float(tmap[order[-1]])
    const = solve_constant(abar, bbar, (t_lo, t_hi), cfg, grid_steps)
    comp = _companion_evaluator(const)
    states = np.stack([comp(tv) for tv in tmap])
    hinv = np.linalg.inv(hvals)
    hcheck_t = np.stack([-(1.0 / np.real(x_tau.evaluate(grid[i])))
                         * (hcheck[i] @ eta_check[i]) for i in range(len(grid))])
    ht = np.einsum("tij,jk->tik", hcheck_t, hhat)
    hinv_dot = -np.einsum("tij,tjk,tkl->til", hinv, ht, hinv)
    t1 = np.real(1.0 / tau_x)
    xpos = states[:, :n, :]
    xvel = states[:, n:, :]
    positions = np.einsum("tij,tjk->tik", hinv, xpos)
    velocities = (np.einsum("tij,tjk->tik", hinv_dot, xpos)
                  + np.einsum("tij,tjk->tik", hinv, xvel) * t1[:, None, None])
    if sys.field is Field.REAL and np.max(np.abs(positions.imag)) < 1e-7:
        positions = positions.real
        velocities = velocities.real
    # quadrature accounting from the Jordan structure of Lam
    quad = 0
    divisors = []
    for ci, c in enumerate(clusters):
        block_sizes = _jordan_block_sizes(lam, ci, offs)
        p_i = len(block_sizes)
        n_i = c.multiplicity
        quad += n_i + p_i - 1
        divisors.extend((round(c.value.real, 6), round(c.value.imag, 6), s)
                        for s in block_sizes)
    eligible = len(set(divisors)) == len(divisors)
    r = len(clusters)
    p_total = len(divisors)
    plan = IntegrationPlan(procedure="TwoSymmetry", quadratures=quad,
                           h_grid=grid, h_values=hvals, t_map=tmap, lam=lam,
                           modal=modal, block_sizes=sizes,
                           eligible_distinct_divisors=eligible,
                           quadrature_bound=n + p_total - r,
                           notes=[f"Lam eigenvalues {np.round(np.diag(lam), 6)}",
                                  f"blocks {sizes}"])
    return SolutionSet(grid=grid, positions=positions, velocities=velocities,
                       particular=None, method="two-symmetry straightening",
                       quadratures=quad, plan=plan)


def _jordan_block_sizes(lam, idx, offs):
    """Sizes of the Jordan blocks inside one eigenvalue cluster of lam."""
    sl = slice(offs[idx], offs[idx + 1])
    sub = lam[sl, sl]
    m = sub.shape[0]
    sizes = []
    size = 1
    for i in range(m - 1):
        if abs(sub[i, i + 1] - 1.0) < 1e-8:
            size += 1
        else:
            sizes.append(size)
            size = 1
    sizes.append(size)
    return sizes


def _combine_scalar(t1: ScalarFunction, t2: ScalarFunction, a, b, domain):
    if t1.kind == POLYNOMIAL and t2.kind == POLYNOMIAL:
        deg = max(len(t1.coeffs), len(t2.coeffs))
        coeffs = []
        for j in range(deg):
            c = 0.0 + 0.0j
            if j < len(t1.coeffs):
                c += a * complex(t1.coeffs[j])
            if j < len(t2.coeffs):
                c += b * complex(t2.coeffs[j])
            coeffs.append(c.real if abs(c.imag) < 1e-14 else c)
        return ScalarFunction.polynomial(coeffs, domain)
    grid = uniform_grid(domain[0], domain[1], 1024)
    return ScalarFunction.sampled(grid, a * t1.evaluate(grid) + b * t2.evaluate(grid))


def _combine_matrix(e1: MatrixFunction, e2: MatrixFunction, a, b, domain):
    grid = uniform_grid(domain[0], domain[1], 1024)
    vals = a * e1.evaluate(grid) + b * e2.evaluate(grid)
    if np.iscomplexobj(vals) and np.max(np.abs(vals.imag)) < 1e-14:
        vals = vals.real
    return MatrixFunction.sampled(grid, vals)


def _pushforward_constant_pair(sys, grid, tau_x, x_tau_fun, eta_check_fun,
                               hcheck, hhat, cfg):
    """A~, B~ for H = Hcheck Hhat with exact H_t, H_tt from the block ODE."""
    n = sys.n
    a_fun, b_fun, _ = sys.coefficients()
    tau = np.real(tau_x)
    taut = np.real(x_tau_fun.derivative(1).evaluate(grid))
    etac = eta_check_fun.evaluate(grid)
    etac_t = eta_check_fun.derivative(1).evaluate(grid)
    h = np.einsum("tij,jk->tik", hcheck, hhat)
    hc_t = -np.einsum("tij,tjk->tik", hcheck, etac) / tau[:, None, None]
    hc_tt = (np.einsum("t,tij->tij", taut / tau ** 2,
                       np.einsum("tij,tjk->tik", hcheck, etac))
             + np.einsum("tij,tjk->tik", np.einsum("tij,tjk->tik", hcheck, etac),
                         etac) / tau[:, None, None] ** 2
             - np.einsum("tij,tjk->tik", hcheck, etac_t) / tau[:, None, None])
    ht = np.einsum("tij,jk->tik", hc_t, hhat)
    htt = np.einsum("tij,jk->tik", hc_tt, hhat)
    hinv = np.linalg.inv(h)
    a = a_fun.evaluate(grid)
    b = b_fun.evaluate(grid)
    t1 = 1.0 / tau
    t2 = -taut / tau ** 2
    t1c = t1[:, None, None]
    t2c = t2[:, None, None]
    anew = (t1c * np.einsum("tij,tjk->tik", h, a) + 2.0 * t1c * ht - t2c * h)
    anew = np.einsum("tij,tjk->tik", anew, hinv) / t1c ** 2
    bnew = (t1c * np.einsum("tij,tjk->tik", h, b)
            - t1c ** 2 * np.einsum("tij,tjk->tik", anew, ht)
            + t1c * htt - t2c * ht)
    bnew = np.einsum("tij,tjk->tik", bnew, hinv) / t1c ** 3
    i0 = len(grid) // 2
    abar, bbar = anew[i0], bnew[i0]
    dev = max(float(np.max(np.abs(anew - abar))), float(np.max(np.abs(bnew - bbar))))
    tol = 1e4 * cfg.residual_tol * (1.0 + float(np.max(np.abs(bbar)))
                                    + float(np.max(np.abs(abar))))
    if dev > tol:
        raise IntegrationError(f"push-forward coefficients are not constant "
                               f"(deviation {dev:.3g}); numerical failure")
    return abar, bbar


def integrate_auto(sys: SystemDescriptor, symmetries=(),
                   grid_steps: int = 1024):
    """Dispatch: singular path, else one or two verified symmetries.

    Inhomogeneous regular systems are homogenized first (gauge_f_zero); the
    extra particular-solution work is recorded as n quadratures.
    """
    if singular_class_test(sys):
        return integrate_singular(sys, grid_steps)
    work = sys
    extra_quad = 0
    prov = []
    particular_fun = None
    if sys.cls == BARL and sys.f is not None and sys.f.max_norm() > sys.cfg.residual_tol:
        ts = gauge_f_zero(sys, grid_steps)
        work = ts.system
        extra_quad = sys.n
        particular_fun = ts.transform.h  # carries minus the particular solution
        prov.append("homogenized by subtracting a particular solution")
    elif sys.cls == BARL:
        work = SystemDescriptor(HOMOGENEOUS, sys.n, sys.field, sys.domain,
                                A=sys.A, B=sys.B, cfg=sys.cfg)
    usable = [q for q in symmetries
              if abs(np.max(np.abs(q.tau.evaluate(
                  np.linspace(*work.domain, 17))))) > 1e-9]
    if len(usable) >= 2:
        sol = integrate_two_symmetries(work, usable[0], usable[1], grid_steps)
    elif len(usable) == 1:
        sol = integrate_one_symmetry(work, usable[0], grid_steps)
    else:
        raise IntegrationError(
            "regular systems need known symmetries with nonzero t-components")
    sol.quadratures += extra_quad
    if particular_fun is not None:
        sol.particular = -particular_fun.evaluate(sol.grid)
    if sol.plan is not None:
        sol.plan.quadratures = sol.quadratures
        sol.plan.notes.extend(prov)
    return sol
