"""Independent brute-force oracles used to cross-check the library paths.

These deliberately avoid the library's Kronecker-lift/nullspace machinery:
linear systems are assembled entry by entry with explicit loops and ranks are
taken with numpy's default policies, so agreement is a genuine two-route
check.
"""

import numpy as np


def centralizer_dim_bruteforce(mats, n, traceless=False):
    """Dimension of {G : [G, K] = 0 for all K} by entrywise linear solve."""
    rows = []
    for k in mats:
        for i in range(n):
            for j in range(n):
                row = np.zeros(n * n, dtype=complex)
                # ([G, K])_{ij} = sum_a G_{ia} K_{aj} - K_{ia} G_{aj}
                for a in range(n):
                    row[i * n + a] += k[a, j]
                    row[a * n + j] -= k[i, a]
                rows.append(row)
    if traceless:
        row = np.zeros(n * n, dtype=complex)
        for i in range(n):
            row[i * n + i] = 1.0
        rows.append(row)
    if not rows:
        return n * n
    a = np.vstack(rows)
    return n * n - np.linalg.matrix_rank(a)


def symmetry_dims_least_squares(v_eval, vdot_eval, n, grid, complexify=False):
    """(k, dim_s) from the classifying condition sampled pointwise.

    Unknowns (c0, c1, c2, G entries, row-major); assembled entry by entry,
    nullspace by numpy matrix_rank/svd with default tolerances.
    """
    rows = []
    for t in grid:
        v = v_eval(t)
        vd = vdot_eval(t)
        for i in range(n):
            for j in range(n):
                row = np.zeros(3 + n * n, dtype=complex)
                row[0] = vd[i, j]
                row[1] = t * vd[i, j] + 2.0 * v[i, j]
                row[2] = t * t * vd[i, j] + 4.0 * t * v[i, j]
                # -(G V - V G)_{ij} written out entry by entry
                for a in range(n):
                    row[3 + i * n + a] -= v[a, j]
                    row[3 + a * n + j] += v[i, a]
                rows.append(row)
    a = np.vstack(rows)
    u, s, vh = np.linalg.svd(a)
    rank = int(np.sum(s > 1e-8 * s[0]))
    null = vh[rank:].conj()
    if null.shape[0] == 0:
        return 0, 0
    taus = null[:, :3]
    sv = np.linalg.svd(taus, compute_uv=False) if taus.size else np.zeros(1)
    k = int(np.sum(sv > 1e-6))
    dim_s = null.shape[0] - k - 1  # identity direction split off
    return k, dim_s


def double_quadrature_solution(grid, rhs_vals, c0, c1):
    """x(t) = c0 + c1 (t - t0) + iterated trapezoid integral of rhs (dense)."""
    out1 = np.zeros_like(rhs_vals)
    for i in range(1, len(grid)):
        out1[i] = out1[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (rhs_vals[i]
                                                                 + rhs_vals[i - 1])
    out2 = np.zeros_like(rhs_vals)
    for i in range(1, len(grid)):
        out2[i] = out2[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (out1[i] + out1[i - 1])
    t0 = grid[len(grid) // 2]
    return c0 + np.outer(grid - t0, c1).reshape(out2.shape[:1] + np.shape(c1)) + out2


def rk4_reference(a_eval, b_eval, f_eval, z0, grid):
    """Plain textbook RK4 on the companion system, written independently."""
    n = len(z0) // 2
    z = np.array(z0, dtype=complex)
    out = np.empty((len(grid), 2 * n), dtype=complex)
    out[0] = z

    def rhs(t, zz):
        x, v = zz[:n], zz[n:]
        return np.concatenate([v, a_eval(t) @ v + b_eval(t) @ x + f_eval(t)])

    for i in range(len(grid) - 1):
        t, h = grid[i], grid[i + 1] - grid[i]
        k1 = rhs(t, z)
        k2 = rhs(t + h / 2, z + h / 2 * k1)
        k3 = rhs(t + h / 2, z + h / 2 * k2)
        k4 = rhs(t + h, z + h * k3)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = z
    return out
