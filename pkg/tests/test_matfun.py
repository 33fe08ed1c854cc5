import numpy as np
import pytest

from symode.matfun import (MatrixFunction, RepresentationError, ScalarFunction,
                           VectorFunction, kl_sequence, kl_sequence_with_tail,
                           schwarzian)
from conftest import DOM, E2, S1, S2, S3, Z2


class TestEvaluate:
    def test_conj_exp_at_zero_gives_w(self, rng):
        ups = rng.standard_normal((2, 2))
        w = rng.standard_normal((2, 2))
        f = MatrixFunction.conj_exp(0.0, ups, w, DOM)
        np.testing.assert_allclose(f.evaluate(0.0), w, atol=1e-12)

    def test_polynomial_linear(self):
        m0 = np.diag([1.0, 2.0])
        m1 = S1
        f = MatrixFunction.polynomial([m0, m1], (-3.0, 3.0))
        np.testing.assert_allclose(f.evaluate(2.0), m0 + 2.0 * m1)

    def test_conj_exp_zero_upsilon(self):
        f = MatrixFunction.conj_exp(0.25, Z2, S1, DOM)
        for t in (-0.7, 0.0, 0.9):
            np.testing.assert_allclose(f.evaluate(t), 0.25 * E2 + S1)

    def test_sampled_outside_hull_rejected(self):
        grid = np.linspace(-1, 1, 33)
        f = MatrixFunction.sampled(grid, np.broadcast_to(S1, (33, 2, 2)))
        with pytest.raises(RepresentationError):
            f.evaluate(1.5)

    def test_spectrum_of_conjugation_is_time_independent(self, cfg):
        f = MatrixFunction.conj_exp(0.3, S2, S1 + 0.5 * S2, DOM)
        base = np.sort_complex(np.linalg.eigvals(f.evaluate(0.0) - 0.3 * E2))
        for t in np.linspace(-1, 1, 9):
            evs = np.sort_complex(np.linalg.eigvals(f.evaluate(t) - 0.3 * E2))
            np.testing.assert_allclose(evs, base, atol=cfg.eig_cluster_tol)


class TestDifferentiate:
    def test_conj_exp_derivative_is_first_bracket(self):
        ups, w = S2, S1 + S3
        f = MatrixFunction.conj_exp(0.7, ups, w, DOM)
        df = f.derivative()
        np.testing.assert_allclose(df.evaluate(0.0), ups @ w - w @ ups, atol=1e-12)

    def test_constant_derivative_zero(self):
        f = MatrixFunction.constant(S2, DOM)
        assert f.derivative().max_norm() == 0.0

    def test_polynomial_derivative(self):
        f = MatrixFunction.polynomial([Z2, S1], DOM)
        df = f.derivative()
        assert df.kind == "constant"
        np.testing.assert_allclose(df.value, S1)

    @pytest.mark.parametrize("builder", [
        # degree >= 3 so the central-difference truncation term is nonzero
        lambda: MatrixFunction.polynomial([S1, S2, 0.5 * S3, 0.4 * S1], DOM),
        lambda: MatrixFunction.conj_exp(0.1, S2, S1 + S3, DOM),
    ])
    def test_fd_consistency_quadratic_order(self, builder):
        f = builder()
        df = f.derivative()
        t = 0.2
        errs = []
        for h in (1e-3, 1e-4):
            fd = (f.evaluate(t + h) - f.evaluate(t - h)) / (2 * h)
            errs.append(np.max(np.abs(fd - df.evaluate(t))))
        ratio = errs[0] / max(errs[1], 1e-300)
        assert 50.0 < ratio < 200.0  # quadratic convergence ~100x per decade


class TestTraceSplit:
    def test_conj_exp_traceless_w(self):
        f = MatrixFunction.conj_exp(0.6, S2, S1, DOM)
        u, f0 = f.trace_split()
        np.testing.assert_allclose(complex(u.evaluate(0.3)), 0.6)
        assert f0.kind == "conj_exp" and f0.epsilon == 0.0

    def test_constant_split(self):
        f = MatrixFunction.constant(np.diag([3.0, 1.0]), DOM)
        u, f0 = f.trace_split()
        np.testing.assert_allclose(complex(u.evaluate(0.0)), 2.0)
        np.testing.assert_allclose(f0.value, S2)

    def test_polynomial_split(self):
        f = MatrixFunction.polynomial([S2, E2], DOM)
        u, f0 = f.trace_split()
        np.testing.assert_allclose(complex(u.evaluate(0.5)), 0.5)
        np.testing.assert_allclose(f0.evaluate(0.5), S2, atol=1e-14)

    @pytest.mark.parametrize("builder", [
        lambda: MatrixFunction.polynomial([S2 + 2 * E2, E2, S1], DOM),
        lambda: MatrixFunction.conj_exp(0.4, S2, S1 + 0.3 * E2, DOM),
        lambda: MatrixFunction.sampled(
            np.linspace(-1, 1, 65),
            np.linspace(-1, 1, 65)[:, None, None] * (S1 + E2) + S2),
    ])
    def test_traceless_residual_at_probes(self, builder):
        f0 = builder().traceless_part()
        ts = np.linspace(f0.domain[0], f0.domain[1], 32)
        traces = np.trace(f0.evaluate(ts), axis1=1, axis2=2)
        assert np.max(np.abs(traces)) < 1e-6


class TestKlSequence:
    def test_diagonal_upsilon_scaling(self):
        b1, b3 = 0.7, -1.3
        kl = kl_sequence(S2, b1 * S1 + b3 * S3)
        assert len(kl) == 2
        for l, k in enumerate(kl):
            np.testing.assert_allclose(k, (2.0 ** l) * b1 * S1
                                       + ((-2.0) ** l) * b3 * S3, atol=1e-12)

    def test_zero_upsilon(self, rng):
        w = rng.standard_normal((3, 3))
        kl = kl_sequence(np.zeros((3, 3)), w)
        assert len(kl) == 1
        np.testing.assert_allclose(kl[0], w)

    def test_nilpotent_chain(self):
        b2, b3 = 0.4, -0.9
        kl, tail, rel = kl_sequence_with_tail(S1, b2 * S2 + b3 * S3)
        np.testing.assert_allclose(kl[1], -2 * b2 * S1 - b3 * S2, atol=1e-12)
        np.testing.assert_allclose(kl[2], 2 * b3 * S1, atol=1e-12)
        assert len(kl) == 3
        assert rel < 1e-12  # K_3 = 0: the sequence terminates

    def test_projection_residual_bounded(self, rng, cfg):
        for _ in range(10):
            ups = rng.standard_normal((3, 3))
            w = rng.standard_normal((3, 3))
            kl, tail, rel = kl_sequence_with_tail(ups, w, cfg)
            stacked = np.stack([m.reshape(-1) for m in kl])
            coef, *_ = np.linalg.lstsq(stacked.T, tail.reshape(-1), rcond=None)
            resid = np.linalg.norm(tail.reshape(-1) - stacked.T @ coef)
            assert resid <= 1e-6 * max(1.0, np.linalg.norm(tail))


class TestScalarAndVector:
    def test_scalar_poly_derivatives(self):
        tau = ScalarFunction.polynomial([1.0, 2.0, 3.0], DOM)
        assert complex(tau.derivative(1).evaluate(0.5)) == pytest.approx(2 + 3.0)
        assert complex(tau.derivative(3).evaluate(0.1)) == 0.0

    def test_sampled_third_derivative(self):
        grid = np.linspace(-1, 1, 1025)
        tau = ScalarFunction.sampled(grid, np.exp(grid))
        d3 = tau.derivative(3).evaluate(np.array([0.0, 0.4]))
        np.testing.assert_allclose(d3, np.exp([0.0, 0.4]), atol=1e-7)

    def test_vector_roundtrip(self):
        v = VectorFunction.polynomial([np.array([1.0, 0.0]), np.array([0.0, 2.0])],
                                      DOM)
        np.testing.assert_allclose(v.evaluate(0.5), [1.0, 1.0])
        np.testing.assert_allclose(v.derivative(1).evaluate(0.5), [0.0, 2.0])


class TestSchwarzian:
    def test_affine_zero(self):
        t_fun = ScalarFunction.polynomial([0.3, 2.0], DOM)
        assert np.max(np.abs(schwarzian(t_fun).values)) < 1e-12

    def test_moebius_vanishes(self):
        grid = np.linspace(-1, 1, 2049)
        t_fun = ScalarFunction.sampled(grid, (2 * grid) / (grid + 4))
        assert np.max(np.abs(schwarzian(t_fun).values)) < 1e-6

    def test_exponential_value(self):
        grid = np.linspace(-1, 1, 2049)
        t_fun = ScalarFunction.sampled(grid, np.exp(grid))
        vals = schwarzian(t_fun).values
        np.testing.assert_allclose(vals, -0.5 * np.ones_like(vals), atol=1e-6)


class TestRepresentationClosure:
    def test_conjugate_stays_closed(self, rng):
        c = rng.standard_normal((2, 2)) + np.eye(2)
        for f in (MatrixFunction.constant(S2, DOM),
                  MatrixFunction.polynomial([S1, S3], DOM),
                  MatrixFunction.conj_exp(0.2, S2, S1, DOM)):
            g = f.conjugate(c)
            assert g.kind == f.kind
            np.testing.assert_allclose(g.evaluate(0.4),
                                       c @ f.evaluate(0.4) @ np.linalg.inv(c),
                                       atol=1e-10)

    def test_compose_affine(self):
        f = MatrixFunction.conj_exp(0.1, S2, S1, DOM)
        g = f.compose_affine(0.5, 0.25)
        np.testing.assert_allclose(g.evaluate(0.3), f.evaluate(0.5 * 0.3 + 0.25),
                                   atol=1e-10)
        assert g.kind == "conj_exp"

    def test_resample_notes_degradation(self):
        f = MatrixFunction.conj_exp(0.1, S2, S1, DOM)
        g = f.resample(np.linspace(-1, 1, 65))
        assert g.kind == "sampled"
        assert "resampled from conj_exp" in g.note
