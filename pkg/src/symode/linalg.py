"""Dense small-dimension linear-algebra kernel.

Nullspaces, commutators, centralizers/normalizers, clustered eigenstructure,
Jordan-Chevalley splitting, matrix exponentials and a randomized search for
invertible elements of affine matrix families.  Everything is a pure function
of its inputs; matrices are numpy arrays (float64 or complex128), n <= 8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .scalars import DEFAULT_TOL, ToleranceConfig

MAX_DIM = 8


class LinalgError(ValueError):
    pass


def _check_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LinalgError(f"{name} must be square, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise LinalgError(f"dimension {m.shape[0]} exceeds supported maximum {MAX_DIM}")
    return m


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[a, b] = ab - ba."""
    a = _check_square(a, "a")
    b = _check_square(b, "b")
    if a.shape != b.shape:
        raise LinalgError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def frobenius_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


def nullspace(a: np.ndarray, rank_tol: float, abs_tol: float = 0.0) -> np.ndarray:
    """Orthonormal nullspace basis (columns), relative SV cutoff rank_tol.

    abs_tol adds an absolute zero level (used for matrix powers whose
    should-be-zero singular values sit at (perturbation)^j rather than at
    machine precision relative to the power's own scale).
    """
    a = np.atleast_2d(np.asarray(a))
    if a.size == 0:
        return np.eye(a.shape[1], dtype=a.dtype)
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    cut = max(rank_tol * (s[0] if s.size else 0.0), abs_tol)
    rank = int(np.sum(s > cut))
    return vh[rank:].conj().T


def rank_of(a: np.ndarray, rank_tol: float) -> int:
    a = np.atleast_2d(np.asarray(a))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def _vec(m: np.ndarray) -> np.ndarray:
    # column-major vec, matching the Kronecker identities used below
    return np.asarray(m).reshape(-1, order="F")


def _unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape((n, n), order="F")


def ad_operator(k: np.ndarray) -> np.ndarray:
    """Matrix of Gamma -> [Gamma, k] acting on vec(Gamma) (column-major)."""
    k = _check_square(k)
    n = k.shape[0]
    eye = np.eye(n, dtype=k.dtype)
    # vec(Gamma k) = (k^T ox I) vec(Gamma); vec(k Gamma) = (I ox k) vec(Gamma)
    return np.kron(k.T, eye) - np.kron(eye, k)


@dataclass
class SubspaceBasis:
    """A list of mutually independent matrices spanning a subspace of gl(n).

    Independence is certified by the rank of the Frobenius Gram matrix; when
    in_sl is set every element is traceless.
    """

    mats: list = field(default_factory=list)
    n: int = 0
    in_sl: bool = False

    def __post_init__(self) -> None:
        self.mats = [np.asarray(m) for m in self.mats]
        if self.mats:
            self.n = self.mats[0].shape[0]
            gram = np.array([[np.trace(a.conj().T @ b) for b in self.mats] for a in self.mats])
            if rank_of(gram, 1e-12) != len(self.mats):
                raise LinalgError("basis elements are not independent (Gram rank deficient)")
            if self.in_sl:
                for m in self.mats:
                    if abs(np.trace(m)) > 1e-9 * (1.0 + frobenius_norm(m)):
                        raise LinalgError("basis tagged sl(n) contains a non-traceless element")

    @property
    def dim(self) -> int:
        return len(self.mats)

    def stacked(self) -> np.ndarray:
        """Rows are vec'd basis elements; empty -> (0, n*n)."""
        if not self.mats:
            return np.zeros((0, self.n * self.n))
        return np.stack([_vec(m) for m in self.mats])

    def contains(self, m: np.ndarray, tol: float = 1e-8) -> bool:
        """Membership of span via least-squares projection residual."""
        if not self.mats:
            return frobenius_norm(m) <= tol
        a = self.stacked().T
        v = _vec(m)
        coef, *_ = np.linalg.lstsq(a, v.astype(a.dtype) if not np.iscomplexobj(v) else v, rcond=None)
        resid = frobenius_norm(v - a @ coef)
        return resid <= tol * (1.0 + frobenius_norm(m))

    def project_off(self, m: np.ndarray) -> np.ndarray:
        """Component of m orthogonal (Frobenius) to the span."""
        if not self.mats:
            return np.asarray(m)
        q, _ = np.linalg.qr(self.stacked().conj().T)
        v = _vec(m).astype(q.dtype)
        return _unvec(v - q @ (q.conj().T @ v), self.n)


def centralizer_basis(mats, restrict_traceless: bool = False, n: int | None = None,
                      cfg: ToleranceConfig = DEFAULT_TOL) -> SubspaceBasis:
    """Basis of {Gamma : [Gamma, K] = 0 for all K in mats}.

    Computed as the joint nullspace of the stacked operators Gamma -> [Gamma, K]
    (Kronecker lift), optionally intersected with sl(n) via the trace row.
    An empty collection needs n to fix the ambient dimension.
    """
    mats = [np.asarray(m) for m in mats]
    if mats:
        n = _check_square(mats[0]).shape[0]
        for m in mats:
            if _check_square(m).shape[0] != n:
                raise LinalgError("dimension mismatch in centralizer input")
    elif n is None:
        raise LinalgError("empty input needs explicit ambient dimension n")
    dtype = np.result_type(np.float64, *(m.dtype for m in mats)) if mats else np.float64
    blocks = [ad_operator(m) for m in mats]
    if restrict_traceless:
        blocks.append(_vec(np.eye(n, dtype=dtype))[None, :])
    if blocks:
        a = np.vstack([np.atleast_2d(b) for b in blocks])
    else:
        a = np.zeros((0, n * n), dtype=dtype)
    ns = nullspace(a, cfg.rank_tol)
    basis = [_unvec(ns[:, j], n) for j in range(ns.shape[1])]
    if restrict_traceless:
        # the trace row kills the E-direction only approximately; clean it up
        basis = [b - (np.trace(b) / n) * np.eye(n, dtype=b.dtype) for b in basis]
        basis = [b for b in basis if frobenius_norm(b) > cfg.rank_tol]
        basis = _reorthonormalize(basis, n, cfg)
    return SubspaceBasis(mats=basis, n=n, in_sl=restrict_traceless)


def _reorthonormalize(mats, n, cfg: ToleranceConfig):
    if not mats:
        return []
    stacked = np.stack([_vec(m) for m in mats])
    u, s, vh = np.linalg.svd(stacked, full_matrices=False)
    keep = s > cfg.rank_tol * s[0]
    return [_unvec(vh[j].conj(), n) for j in range(len(s)) if keep[j]]


def is_bracket_closed(s: SubspaceBasis, tol: float = 1e-8) -> bool:
    for i, a in enumerate(s.mats):
        for b in s.mats[i + 1:]:
            if not s.contains(commutator(a, b), tol):
                return False
    return True


def normalizer_basis(s: SubspaceBasis, cfg: ToleranceConfig = DEFAULT_TOL) -> SubspaceBasis:
    """Basis of N_sl(s) = {u in sl(n) : [u, v] in span(s) for all v in s}.

    Input must be bracket-closed (a subalgebra); computed as the nullspace of
    u -> project-off-span(s) of [u, v_j], stacked over the basis, plus the
    trace constraint.
    """
    if s.n == 0:
        raise LinalgError("normalizer of an empty basis with unknown dimension")
    if not is_bracket_closed(s):
        raise LinalgError("not a subalgebra")
    n = s.n
    dtype = np.result_type(np.float64, *(m.dtype for m in s.mats)) if s.mats else np.float64
    rows = [_vec(np.eye(n, dtype=dtype))[None, :]]
    if s.mats:
        q, _ = np.linalg.qr(s.stacked().conj().T)  # n^2 x dim(s), orthonormal
        proj_off = np.eye(n * n, dtype=q.dtype) - q @ q.conj().T
        for v in s.mats:
            # u -> [u, v]: vec([u,v]) = (v^T ox I - I ox v) vec(u)
            op = np.kron(v.T, np.eye(n, dtype=dtype)) - np.kron(np.eye(n, dtype=dtype), v)
            rows.append(proj_off @ op)
    a = np.vstack(rows)
    ns = nullspace(a, cfg.rank_tol)
    basis = [_unvec(ns[:, j], n) for j in range(ns.shape[1])]
    basis = [b - (np.trace(b) / n) * np.eye(n, dtype=b.dtype) for b in basis]
    basis = [b for b in basis if frobenius_norm(b) > cfg.rank_tol]
    return SubspaceBasis(mats=_reorthonormalize(basis, n, cfg), n=n, in_sl=True)


def double_centralizer_fixed(s: SubspaceBasis, cfg: ToleranceConfig = DEFAULT_TOL) -> bool:
    """True iff span(s) equals the centralizer of its centralizer inside sl(n)."""
    if s.n == 0:
        raise LinalgError("ambient dimension unknown")
    c = centralizer_basis(s.mats, restrict_traceless=True, n=s.n, cfg=cfg)
    cc = centralizer_basis(c.mats, restrict_traceless=True, n=s.n, cfg=cfg)
    if cc.dim != s.dim:
        return False
    return all(cc.contains(m) for m in s.mats)


@dataclass
class EigCluster:
    value: complex
    multiplicity: int
    basis: np.ndarray  # n x multiplicity, generalized eigenvectors
    promoted: bool = False  # real input, nonreal cluster value


def eig_clustered(m: np.ndarray, cfg: ToleranceConfig = DEFAULT_TOL,
                  _radius_scale: float = 1.0) -> list:
    """Clustered eigen-decomposition with generalized eigenbases.

    Eigenvalues within the absolute-plus-relative radius merge into one
    cluster; clusters are ordered by ascending real part, then imaginary part.
    Real-tagged inputs are promoted to complex for the decomposition; nonreal
    clusters are flagged promoted.  Near-defective structure (a cluster whose
    generalized eigenspace comes up short because the computed eigenvalues
    split beyond the radius) escalates the radius before failing.
    """
    m = _check_square(m)
    n = m.shape[0]
    real_input = not np.iscomplexobj(m)
    mc = m.astype(np.complex128)
    try:
        vals = np.linalg.eigvals(mc)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - QR iteration cap
        raise LinalgError(f"eigenvalue iteration failed to converge: {exc}") from exc
    radius = _radius_scale * cfg.eig_cluster_tol * \
        (1.0 + float(np.max(np.abs(vals))) if vals.size else 1.0)
    # union-find on pairwise proximity
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(vals[i] - vals[j]) <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    reps = []
    for idx in groups.values():
        mu = complex(np.mean(vals[idx]))
        reps.append((mu, len(idx)))
    reps.sort(key=lambda p: (round(p[0].real, 12), round(p[0].imag, 12)))
    clusters = []
    for mu, mult in reps:
        shifted = mc - mu * np.eye(n)
        basis = None
        # defective clusters push the should-be-zero singular values of
        # (M - mu E)^j up to ~(cluster spread)^j; admit them through an
        # absolute zero level at (10 radius)^j once the strict cut fails
        for use_abs in (False, True):
            power = np.eye(n, dtype=np.complex128)
            for j in range(1, mult + 1):
                power = power @ shifted
                abs_cut = (10.0 * radius) ** j if use_abs else 0.0
                basis = nullspace(power, cfg.rank_tol, abs_tol=abs_cut)
                if basis.shape[1] >= mult:
                    break
            if basis is not None and basis.shape[1] >= mult:
                break
        if basis is None or basis.shape[1] < mult:
            if _radius_scale < 1e4:
                return eig_clustered(m, cfg, _radius_scale=10.0 * _radius_scale)
            raise LinalgError("generalized eigenspace smaller than clustered "
                              "multiplicity; borderline clustering, adjust "
                              "eig_cluster_tol")
        basis = basis[:, :mult]
        promoted = real_input and abs(mu.imag) > radius
        clusters.append(EigCluster(value=mu, multiplicity=mult, basis=basis, promoted=promoted))
    assert sum(c.multiplicity for c in clusters) == n
    return clusters


def jordan_chevalley(m: np.ndarray, cfg: ToleranceConfig = DEFAULT_TOL):
    """Split m = m_s + m_n into commuting semisimple and nilpotent parts.

    m_s = sum mu_i P_i with spectral projectors built from the clustered
    generalized eigenspaces.
    """
    m = _check_square(m)
    n = m.shape[0]
    clusters = eig_clustered(m, cfg)
    s = np.hstack([c.basis for c in clusters])
    diag = np.concatenate([[c.value] * c.multiplicity for c in clusters])
    ms = s @ np.diag(diag) @ np.linalg.inv(s)
    if not np.iscomplexobj(m):
        if np.max(np.abs(ms.imag)) < 1e4 * cfg.rank_tol * (1.0 + frobenius_norm(m)):
            ms = ms.real
    mn = m - ms
    return ms, mn


def is_nilpotent(m: np.ndarray, cfg: ToleranceConfig = DEFAULT_TOL) -> bool:
    """Nilpotency of the structure at the matrix's own scale.

    The power test ||m^n|| <= tol * ||m||^n is basis-insensitive and stable
    under the entry-level noise that splits the eigenvalues of a conjugated
    nilpotent matrix (the Jordan-Chevalley split is not); callers that need a
    sharp decision verify the resulting candidate field directly.
    """
    m = _check_square(m)
    n = m.shape[0]
    norm = frobenius_norm(m)
    if norm == 0.0:
        return True
    power = np.linalg.matrix_power(m / norm, n)
    return frobenius_norm(power) <= 100.0 * cfg.eig_cluster_tol


def jordan_form(m: np.ndarray, cfg: ToleranceConfig = DEFAULT_TOL):
    """Jordan normal form (J, S) with m = S J S^{-1}, blocks per cluster.

    Jordan chains are built by the standard nullspace filtration of
    (m - mu E)^j inside each clustered generalized eigenspace.
    """
    m = _check_square(m)
    n = m.shape[0]
    mc = m.astype(np.complex128)
    clusters = eig_clustered(m, cfg)
    cols = []
    jblocks = []
    for c in clusters:
        a = mc - c.value * np.eye(n)
        # nullspace filtration N_1 subset N_2 subset ...
        spaces = []
        power = np.eye(n, dtype=np.complex128)
        for _ in range(c.multiplicity):
            power = power @ a
            spaces.append(nullspace(power, cfg.rank_tol))
            if spaces[-1].shape[1] >= c.multiplicity:
                break
        depth = len(spaces)
        used = np.zeros((n, 0), dtype=np.complex128)
        chains = []
        for j in range(depth, 0, -1):
            top = spaces[j - 1]
            below = spaces[j - 2] if j >= 2 else np.zeros((n, 0), dtype=np.complex128)
            # candidates at height j not already covered and not lower-height
            avoid = np.hstack([below, used]) if below.size or used.size else np.zeros((n, 0))
            picked = _complement_columns(top, avoid, cfg)
            for v in picked.T:
                chain = [v]
                for _ in range(j - 1):
                    chain.append(a @ chain[-1])
                chains.append(chain[::-1])  # eigenvector first
                downs = np.stack(chain, axis=1)
                used = np.hstack([used, downs])
        for chain in chains:
            k = len(chain)
            cols.extend(chain)
            jb = c.value * np.eye(k, dtype=np.complex128) + np.eye(k, k, 1, dtype=np.complex128)
            jblocks.append(jb)
    s = np.stack(cols, axis=1)
    j = scipy.linalg.block_diag(*jblocks) if jblocks else np.zeros((0, 0), dtype=np.complex128)
    return j, s


def _complement_columns(space: np.ndarray, avoid: np.ndarray, cfg: ToleranceConfig) -> np.ndarray:
    """Columns of `space` independent from span(avoid), orthonormalized."""
    if avoid.size == 0:
        return space
    q, _ = np.linalg.qr(avoid)
    resid = space - q @ (q.conj().T @ space)
    u, s, _ = np.linalg.svd(resid, full_matrices=False)
    keep = s > cfg.rank_tol * (s[0] if s.size and s[0] > 0 else 1.0)
    return u[:, keep]


def matrix_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring Pade core)."""
    m = _check_square(m)
    norm = frobenius_norm(m)
    if norm > 600.0:
        raise LinalgError(f"matrix exponential overflow risk at norm {norm:.3g}")
    return scipy.linalg.expm(m)


def exp_factory(m: np.ndarray, cfg: ToleranceConfig = DEFAULT_TOL):
    """Return t -> exp(t*m) using the semisimple/nilpotent split.

    exp(t m) = S diag(e^{t mu}) S^{-1} * poly(t m_n); the two factors commute,
    so evaluation is cheap per t.  Real inputs return real results.  Nearly
    defective inputs, where the clustered split degrades, fall back to the
    scaling-and-squaring exponential per evaluation.
    """
    m = _check_square(m)
    n = m.shape[0]
    real_input = not np.iscomplexobj(m)
    try:
        ms, mn = jordan_chevalley(m, cfg)
        scale = 1.0 + frobenius_norm(m)
        ok = (frobenius_norm(commutator(ms, mn)) < 1e-8 * scale
              and frobenius_norm(np.linalg.matrix_power(mn, n)) < 1e-8 * scale ** n)
    except LinalgError:
        ok = False
    if not ok:
        def evaluate_direct(t: float) -> np.ndarray:
            return scipy.linalg.expm(t * m)

        return evaluate_direct
    clusters = eig_clustered(ms if np.iscomplexobj(ms) else ms.astype(np.complex128), cfg)
    s = np.hstack([c.basis for c in clusters])
    mu = np.concatenate([[c.value] * c.multiplicity for c in clusters])
    sinv = np.linalg.inv(s)
    mn_pows = [np.eye(n, dtype=np.complex128)]
    acc = np.eye(n, dtype=np.complex128)
    for _ in range(1, n):
        acc = acc @ mn
        if frobenius_norm(acc) < 1e-300:
            break
        mn_pows.append(acc.copy())
    facts = [1.0]
    for k in range(1, len(mn_pows)):
        facts.append(facts[-1] * k)

    def evaluate(t: float) -> np.ndarray:
        es = s @ np.diag(np.exp(t * mu)) @ sinv
        en = sum((t ** k / facts[k]) * mn_pows[k] for k in range(len(mn_pows)))
        out = es @ en
        if real_input:
            out = out.real
        return out

    return evaluate


def hat_check_split(upsilon: np.ndarray, lam: np.ndarray,
                    cfg: ToleranceConfig = DEFAULT_TOL):
    """Split upsilon into (hat, check) blocks in the eigenbasis of lam.

    hat keeps blocks (i, j) with mu_i = mu_j + 1 (within the clustering
    radius); check keeps the rest.  lam must be semisimple; then
    [lam, hat] = hat.
    """
    upsilon = _check_square(upsilon, "upsilon")
    lam = _check_square(lam, "lambda")
    _, ln = jordan_chevalley(lam, cfg)
    if frobenius_norm(ln) > 100.0 * cfg.eig_cluster_tol * (1.0 + frobenius_norm(lam)):
        raise LinalgError("lambda is not semisimple")
    clusters = eig_clustered(lam, cfg)
    s = np.hstack([c.basis for c in clusters])
    sinv = np.linalg.inv(s)
    u = sinv @ upsilon.astype(np.complex128) @ s
    sizes = [c.multiplicity for c in clusters]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    hat_b = np.zeros_like(u)
    for i, ci in enumerate(clusters):
        for j, cj in enumerate(clusters):
            if abs(ci.value - (cj.value + 1.0)) <= cfg.eig_cluster_tol * (1.0 + abs(ci.value)):
                hat_b[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = \
                    u[offs[i]:offs[i + 1], offs[j]:offs[j + 1]]
    hat = s @ hat_b @ sinv
    if not np.iscomplexobj(upsilon) and not np.iscomplexobj(lam):
        if np.max(np.abs(hat.imag)) < 1e4 * cfg.rank_tol * (1.0 + frobenius_norm(upsilon)):
            hat = hat.real
    check = upsilon - hat
    return hat, check


def invertible_in_affine_space(basis, offset: np.ndarray,
                               cfg: ToleranceConfig = DEFAULT_TOL,
                               seed: int = 0, trials: int = 64):
    """Search offset + span(basis) for an invertible element.

    Seeded randomized coefficients, first from the integer grid {-2..2}, then
    Gaussian.  Returns a witness matrix or None; absence of a witness in the
    trial budget is a value, not an error.
    """
    offset = _check_square(offset, "offset")
    basis = [np.asarray(b) for b in basis]
    n = offset.shape[0]
    rng = np.random.default_rng(seed)
    complex_field = np.iscomplexobj(offset) or any(np.iscomplexobj(b) for b in basis)

    def candidate(coeffs):
        m = offset.astype(np.complex128 if complex_field else np.float64).copy()
        for c, b in zip(coeffs, basis):
            m = m + c * b
        return m

    def invertible(m):
        s = np.linalg.svd(m, compute_uv=False)
        return s[-1] > cfg.rank_tol * max(s[0], 1.0)

    k = len(basis)
    if k == 0:
        return offset if invertible(offset) else None
    grid_trials = trials // 2
    for _ in range(grid_trials):
        coeffs = rng.integers(-2, 3, size=k).astype(float)
        if complex_field:
            coeffs = coeffs + 1j * rng.integers(-2, 3, size=k)
        m = candidate(coeffs)
        if invertible(m):
            return m
    for _ in range(trials - grid_trials):
        coeffs = rng.standard_normal(k)
        if complex_field:
            coeffs = coeffs + 1j * rng.standard_normal(k)
        m = candidate(coeffs)
        if invertible(m):
            return m
    return None
