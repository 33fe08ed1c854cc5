import numpy as np
import pytest

from symode import linalg
from symode.linalg import (SubspaceBasis, centralizer_basis, commutator,
                           double_centralizer_fixed, eig_clustered,
                           hat_check_split, invertible_in_affine_space,
                           jordan_chevalley, jordan_form, matrix_exp,
                           normalizer_basis)
from conftest import E2, S1, S2, S3, Z2, random_traceless
from oracles import centralizer_dim_bruteforce


class TestCommutator:
    def test_sl2_relations(self):
        np.testing.assert_allclose(commutator(S1, S2), -2 * S1)
        np.testing.assert_allclose(commutator(S2, S3), -2 * S3)
        np.testing.assert_allclose(commutator(S1, S3), -S2)

    def test_self_commutator_zero(self, rng):
        m = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(commutator(m, m), np.zeros((3, 3)))

    def test_antisymmetry_exact(self, rng):
        for _ in range(20):
            a = rng.standard_normal((3, 3))
            b = rng.standard_normal((3, 3))
            np.testing.assert_array_equal(commutator(a, b), -commutator(b, a))

    def test_bilinearity(self, rng):
        a, b, c = (rng.standard_normal((2, 2)) for _ in range(3))
        lhs = commutator(2.0 * a + 0.5 * b, c)
        rhs = 2.0 * commutator(a, c) + 0.5 * commutator(b, c)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(linalg.LinalgError):
            commutator(S1, np.eye(3))


class TestCentralizer:
    def test_s1_traceless(self):
        basis = centralizer_basis([S1], restrict_traceless=True)
        assert basis.dim == 1
        coef = basis.mats[0][0, 1]
        np.testing.assert_allclose(basis.mats[0], coef * S1, atol=1e-12)

    def test_empty_input_gives_sl(self):
        basis = centralizer_basis([], restrict_traceless=True, n=2)
        assert basis.dim == 3

    def test_jordan_j_n3(self):
        j = np.zeros((3, 3))
        j[0, 1] = 1.0
        expected = centralizer_dim_bruteforce([j], 3, traceless=True)
        assert expected == 4  # n^2 - 2n + 1
        basis = centralizer_basis([j], restrict_traceless=True)
        assert basis.dim == expected

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_against_bruteforce_seeded(self, n):
        rng = np.random.default_rng(100 + n)
        for trial in range(67):
            count = rng.integers(1, 4)
            mats = [rng.standard_normal((n, n)) for _ in range(count)]
            traceless = bool(trial % 2)
            got = centralizer_basis(mats, restrict_traceless=traceless).dim
            want = centralizer_dim_bruteforce(mats, n, traceless=traceless)
            assert got == want

    def test_every_element_commutes(self, rng):
        mats = [rng.standard_normal((3, 3)) for _ in range(2)]
        basis = centralizer_basis(mats, restrict_traceless=True)
        for g in basis.mats:
            for k in mats:
                assert np.linalg.norm(commutator(g, k)) < 1e-9


class TestNormalizer:
    def test_s2_self_normalizing(self):
        s = SubspaceBasis(mats=[S2 / np.sqrt(2)], in_sl=True)
        n = normalizer_basis(s)
        assert n.dim == 1
        assert s.contains(n.mats[0])

    def test_s1_normalizer_is_borel(self):
        s = SubspaceBasis(mats=[S1], in_sl=True)
        n = normalizer_basis(s)
        assert n.dim == 2
        borel = SubspaceBasis(mats=[S1, S2 / np.sqrt(2)], in_sl=True)
        for m in n.mats:
            assert borel.contains(m)

    def test_sl2_normalizes_itself(self):
        s = SubspaceBasis(mats=[S1, S2 / np.sqrt(2), S3], in_sl=True)
        assert normalizer_basis(s).dim == 3

    def test_not_closed_raises(self):
        s = SubspaceBasis(mats=[S1, S3], in_sl=True)  # [S1,S3] = -S2 outside
        with pytest.raises(linalg.LinalgError, match="not a subalgebra"):
            normalizer_basis(s)


class TestDoubleCentralizer:
    def test_borel_not_fixed(self):
        s = SubspaceBasis(mats=[S1, S2 / np.sqrt(2)], in_sl=True)
        assert double_centralizer_fixed(s) is False

    def test_torus_fixed(self):
        assert double_centralizer_fixed(SubspaceBasis(mats=[S2 / np.sqrt(2)],
                                                      in_sl=True)) is True

    def test_zero_fixed(self):
        assert double_centralizer_fixed(SubspaceBasis(mats=[], n=2, in_sl=True)) is True

    def test_span_contained_in_double_centralizer(self, rng, cfg):
        # every centralizer is bracket-closed, and s subset C(C(s)) must hold
        for trial in range(10):
            seedm = [random_traceless(rng, 3) for _ in range(2)]
            s = centralizer_basis(seedm, restrict_traceless=True)
            if s.dim == 0:
                continue
            c = centralizer_basis(s.mats, restrict_traceless=True, n=3)
            cc = centralizer_basis(c.mats, restrict_traceless=True, n=3)
            for m in s.mats:
                assert cc.contains(m)


class TestEigAndJordan:
    def test_diagonal_clusters(self, cfg):
        clusters = eig_clustered(np.diag([2.0, 0.0]), cfg)
        assert [(round(c.value.real, 9), c.multiplicity) for c in clusters] \
            == [(0.0, 1), (2.0, 1)]

    def test_nilpotent_block_single_cluster(self, cfg):
        clusters = eig_clustered(S1, cfg)
        assert len(clusters) == 1
        assert clusters[0].multiplicity == 2
        assert abs(clusters[0].value) < 1e-7
        assert clusters[0].basis.shape == (2, 2)

    def test_complex_pair_promotion(self, cfg):
        m = np.array([[1.0, 1.0], [-1.0, 1.0]])
        clusters = eig_clustered(m, cfg)
        vals = sorted((c.value for c in clusters), key=lambda z: z.imag)
        np.testing.assert_allclose(vals, [1 - 1j, 1 + 1j], atol=1e-9)
        assert all(c.promoted for c in clusters)

    def test_jc_diagonalizable(self, cfg):
        m = np.array([[2.0, 1.0], [0.0, -1.0]])
        ms, mn = jordan_chevalley(m, cfg)
        np.testing.assert_allclose(ms, m, atol=1e-9)
        np.testing.assert_allclose(mn, Z2, atol=1e-9)

    def test_jc_nilpotent(self, cfg):
        ms, mn = jordan_chevalley(S1, cfg)
        np.testing.assert_allclose(ms, Z2, atol=1e-7)
        np.testing.assert_allclose(mn, S1, atol=1e-7)

    def test_jc_jordan_block(self, cfg):
        m = np.array([[1.0, 1.0], [0.0, 1.0]])
        ms, mn = jordan_chevalley(m, cfg)
        np.testing.assert_allclose(ms, E2, atol=1e-7)
        np.testing.assert_allclose(mn, S1, atol=1e-7)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_jc_properties_random(self, n, cfg):
        rng = np.random.default_rng(300 + n)
        for _ in range(25):
            m = rng.standard_normal((n, n))
            ms, mn = jordan_chevalley(m, cfg)
            scale = 1.0 + np.linalg.norm(m)
            assert np.linalg.norm(m - ms - mn) < cfg.residual_tol * scale
            assert np.linalg.norm(commutator(ms, mn)) < cfg.residual_tol * scale
            assert np.linalg.norm(np.linalg.matrix_power(mn, n)) \
                < cfg.residual_tol * scale ** n
            # semisimple part has a full eigenvector basis
            _, vecs = np.linalg.eig(ms.astype(complex))
            assert np.linalg.matrix_rank(vecs) == n

    def test_jordan_form_roundtrip(self, cfg):
        m = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
        j, s = jordan_form(m, cfg)
        np.testing.assert_allclose(s @ j @ np.linalg.inv(s), m, atol=1e-8)


class TestMatrixExp:
    def test_zero(self):
        np.testing.assert_allclose(matrix_exp(Z2), E2)

    def test_nilpotent(self):
        np.testing.assert_allclose(matrix_exp(S1), E2 + S1)

    def test_diagonal(self):
        out = matrix_exp(np.diag([0.3, -1.2]))
        np.testing.assert_allclose(out, np.diag([np.exp(0.3), np.exp(-1.2)]))

    def test_inverse_property_random(self, cfg):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m = rng.standard_normal((3, 3))
            m *= min(1.0, 5.0 / np.linalg.norm(m))
            resid = np.linalg.norm(matrix_exp(m) @ matrix_exp(-m) - np.eye(3))
            assert resid < cfg.residual_tol

    def test_overflow_guard(self):
        with pytest.raises(linalg.LinalgError, match="overflow"):
            matrix_exp(1e4 * np.eye(2))

    def test_exp_factory_matches(self, cfg):
        rng = np.random.default_rng(12)
        m = rng.standard_normal((3, 3))
        ef = linalg.exp_factory(m, cfg)
        for t in (-1.3, 0.0, 0.7):
            np.testing.assert_allclose(ef(t), matrix_exp(t * m), atol=1e-9)


class TestHatCheckSplit:
    def test_no_unit_gap(self, rng, cfg):
        ups = rng.standard_normal((2, 2))
        hat, check = hat_check_split(ups, np.diag([2.0, 0.0]), cfg)
        np.testing.assert_allclose(hat, Z2, atol=1e-9)
        np.testing.assert_allclose(check, ups, atol=1e-9)

    def test_unit_gap_keeps_corner(self, rng, cfg):
        ups = rng.standard_normal((2, 2))
        hat, check = hat_check_split(ups, np.diag([1.0, 0.0]), cfg)
        expected = np.zeros((2, 2))
        expected[0, 1] = ups[0, 1]
        np.testing.assert_allclose(hat, expected, atol=1e-9)
        np.testing.assert_allclose(hat + check, ups, atol=1e-12)

    def test_zero_upsilon(self, cfg):
        hat, check = hat_check_split(Z2, np.diag([1.0, 0.0]), cfg)
        np.testing.assert_allclose(hat, Z2)
        np.testing.assert_allclose(check, Z2)

    def test_bracket_identity(self, cfg):
        rng = np.random.default_rng(13)
        lam = np.diag([3.0, 2.0, 0.0])
        ups = rng.standard_normal((3, 3))
        hat, _ = hat_check_split(ups, lam, cfg)
        assert np.linalg.norm(commutator(lam, hat) - hat) < cfg.residual_tol

    def test_non_semisimple_rejected(self, cfg):
        with pytest.raises(linalg.LinalgError, match="not semisimple"):
            hat_check_split(S2, np.array([[1.0, 1.0], [0.0, 1.0]]), cfg)


class TestInvertibleSearch:
    def test_identity_line(self, cfg):
        m = invertible_in_affine_space([E2], Z2, cfg, seed=1)
        assert m is not None
        assert abs(np.linalg.det(m)) > 1e-9

    def test_nilpotent_line_none(self, cfg):
        assert invertible_in_affine_space([S1], Z2, cfg, seed=1) is None

    def test_affine_shift(self, cfg):
        m = invertible_in_affine_space([S1], E2, cfg, seed=1)
        assert m is not None
        np.testing.assert_allclose(np.linalg.det(m), 1.0, atol=1e-9)
