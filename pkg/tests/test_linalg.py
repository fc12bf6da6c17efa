import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delaycert import linalg
from delaycert.exceptions import DimensionError, PlacementError, PreconditionError, SymmetryError

from conftest import random_hurwitz

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def cmat(n, m):
    return st.tuples(arrays(float, (n, m), elements=finite),
                     arrays(float, (n, m), elements=finite)).map(lambda p: p[0] + 1j * p[1])


class TestMatExp:
    def test_zero_time_is_identity(self):
        A = np.random.default_rng(0).normal(size=(4, 4))
        assert np.array_equal(linalg.mat_exp(A, 0.0), np.eye(4))

    def test_diagonal(self):
        E = linalg.mat_exp(np.diag([-1.0, 2.0]), 1.0)
        assert np.allclose(E, np.diag([np.exp(-1), np.exp(2)]), rtol=1e-14, atol=0)

    def test_inverse_product(self, example1):
        A = example1[0]
        err = np.linalg.norm(linalg.mat_exp(A, 1.0) @ linalg.mat_exp(A, -1.0) - np.eye(2), 2)
        assert err < 1e-10

    def test_semigroup(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            A = rng.normal(size=(4, 4))
            A *= rng.uniform(0.1, 10) / np.linalg.norm(A, 2)
            s, t = rng.uniform(-1, 1, 2)
            lhs = linalg.mat_exp(A, s) @ linalg.mat_exp(A, t)
            rhs = linalg.mat_exp(A, s + t)
            assert np.linalg.norm(lhs - rhs, 2) <= 1e-9 * max(1.0, np.linalg.norm(rhs, 2))

    def test_non_square(self):
        with pytest.raises(DimensionError):
            linalg.mat_exp(np.ones((2, 3)))

    def test_against_series_for_nilpotent(self):
        N = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        # exp(tN) = I + tN + t^2 N^2 / 2 exactly
        t = 2.5
        expected = np.eye(3) + t * N + 0.5 * t * t * N @ N
        assert np.allclose(linalg.mat_exp(N, t), expected, atol=1e-13)


class TestSpectral:
    def test_example1_abscissa(self, example1):
        A, B, K = example1
        assert linalg.spectral_abscissa(A + B @ K) == pytest.approx(-1.0, abs=1e-12)

    def test_scalar_zero(self):
        assert linalg.spectral_abscissa(np.zeros((1, 1))) == 0.0

    def test_companion_cubic(self):
        coeffs = np.poly([-0.75, -1.0, -1.25])
        C = np.zeros((3, 3))
        C[0] = -coeffs[1:]
        C[1, 0] = C[2, 1] = 1.0
        assert linalg.spectral_abscissa(C) == pytest.approx(-0.75, abs=1e-9)

    def test_spectrum_sorted_and_conjugate_closed(self):
        A = np.random.default_rng(3).normal(size=(6, 6))
        ev = linalg.spectrum(A)
        assert np.all(np.diff(ev.real) >= 0)
        assert np.allclose(np.sort_complex(ev), np.sort_complex(ev.conj()))


class TestNorm:
    def test_diag(self):
        assert linalg.induced_norm2(np.diag([3.0, -5.0])) == pytest.approx(5.0, rel=1e-14)

    def test_vector(self):
        assert linalg.induced_norm2(np.array([3.0, 4.0])) == pytest.approx(5.0, rel=1e-14)

    def test_random_unit_vectors_lower_bound(self):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(5, 5))
        v = rng.normal(size=(5, 10 ** 4))
        v /= np.linalg.norm(v, axis=0)
        sampled = np.max(np.linalg.norm(A @ v, axis=0))
        exact = linalg.induced_norm2(A)
        assert sampled <= exact * (1 + 1e-12)
        # the power iteration oracle converges to the exact value
        x = v[:, 0]
        for _ in range(500):
            x = A.T @ (A @ x)
            x /= np.linalg.norm(x)
        assert np.linalg.norm(A @ x) == pytest.approx(exact, rel=1e-6)

    @given(arrays(float, (4, 3), elements=finite))
    def test_transpose_invariance(self, A):
        assert linalg.induced_norm2(A) == pytest.approx(linalg.induced_norm2(A.T), rel=1e-10, abs=1e-12)


class TestLyapunov:
    def test_scalar(self):
        assert linalg.solve_lyapunov_identity(np.array([[-1.0]]))[0, 0] == pytest.approx(0.5)

    def test_diagonal(self):
        P = linalg.solve_lyapunov_identity(np.diag([-1.0, -2.0]))
        assert np.allclose(P, np.diag([0.5, 0.25]), atol=1e-14)

    def test_residual(self):
        M = np.array([[0.0, 1.0], [-1.0, -2.0]])
        P = linalg.solve_lyapunov_identity(M)
        assert np.linalg.norm(M.T @ P + P @ M + np.eye(2)) < 1e-9

    def test_non_hurwitz(self):
        with pytest.raises(PreconditionError):
            linalg.solve_lyapunov_identity(np.diag([-1.0, 0.0]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10 ** 6))
    def test_residual_and_definiteness(self, n, seed):
        M = random_hurwitz(np.random.default_rng(seed), n, margin=0.3)
        P = linalg.solve_lyapunov_identity(M)
        assert np.linalg.norm(M.T @ P + P @ M + np.eye(n), 2) < 1e-9 * max(1.0, np.linalg.norm(P, 2))
        assert np.array_equal(P, P.T)
        assert np.linalg.eigvalsh(P)[0] > 0


class TestRealify:
    def test_imaginary_unit(self):
        assert np.array_equal(linalg.realify(np.array([[1j]])), np.array([[0.0, -1.0], [1.0, 0.0]]))

    def test_real_input(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        R = linalg.realify(M)
        assert np.array_equal(R, np.block([[M, np.zeros((2, 2))], [np.zeros((2, 2)), M]]))

    @given(cmat(3, 3), cmat(3, 3))
    def test_homomorphism(self, M, N):
        assert np.array_equal(linalg.realify(M + N), linalg.realify(M) + linalg.realify(N))
        assert np.allclose(linalg.realify(M @ N), linalg.realify(M) @ linalg.realify(N),
                           atol=1e-12 * (1 + np.abs(M).max() * np.abs(N).max()) * 3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_spectrum_union(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        ev = np.linalg.eigvals(M)
        expected = np.sort_complex(np.concatenate([ev, ev.conj()]))
        got = np.sort_complex(np.linalg.eigvals(linalg.realify(M)))
        # match as multisets
        for z in expected:
            j = np.argmin(np.abs(got - z))
            assert abs(got[j] - z) < 1e-8
            got = np.delete(got, j)


class TestControllability:
    def test_identity(self):
        assert linalg.controllability_rank(np.zeros((3, 3)), np.eye(3)) == 3

    def test_untouched_mode(self):
        assert linalg.controllability_rank(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]])) == 1


class TestExtremalEigs:
    def test_diag(self):
        assert linalg.symmetric_extremal_eigs(np.diag([1.0, 4.0])) == (1.0, 4.0)

    def test_identity(self):
        assert linalg.symmetric_extremal_eigs(np.eye(3)) == (1.0, 1.0)

    def test_random_against_full_spectrum(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(6, 6))
        P = X + X.T
        lo, hi = linalg.symmetric_extremal_eigs(P)
        # independent oracle: roots of the characteristic polynomial
        roots = np.sort(np.roots(np.poly(P)).real)
        assert lo == pytest.approx(roots[0], abs=1e-8)
        assert hi == pytest.approx(roots[-1], abs=1e-8)

    def test_asymmetric(self):
        with pytest.raises(SymmetryError):
            linalg.symmetric_extremal_eigs(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestPolePlacement:
    def test_zero_gain_shortcut(self):
        A = np.diag([0.3, -0.1, -2.0])
        K = linalg.place_poles(A, np.ones((3, 2)), [0.3, -0.1, -2.0])
        assert np.array_equal(K, np.zeros((2, 3)))

    def test_double_integrator(self):
        K = linalg.place_poles(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), [-1, -2])
        assert np.allclose(K, [[-2.0, -3.0]], atol=1e-12)

    def test_truncated_reaction_diffusion(self, rd_config):
        from delaycert.pde import truncated_matrices
        A, B = truncated_matrices(rd_config, 3)
        targets = [-0.75, -1.0, -1.25]
        K = linalg.place_poles(A, B, targets)
        ev = np.sort(np.linalg.eigvals(A + B @ K).real)
        assert np.max(np.abs(ev - np.sort(targets))) < 1e-6
        assert np.array_equal(K, linalg.place_poles(A, B, targets))

    def test_uncontrollable(self):
        with pytest.raises(PlacementError):
            linalg.place_poles(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]]), [-1, -2])

    def test_complex_targets(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 2))
        targets = [-1 + 1j, -1 - 1j, -2, -3]
        K = linalg.place_poles(A, B, targets)
        assert np.isrealobj(K)
        assert linalg.spectral_abscissa(A + B @ K) == pytest.approx(-1.0, abs=1e-6)

    def test_target_overlapping_open_loop_eigenvalue(self):
        A = np.diag([1.0, -1.0, 2.0])
        B = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        targets = [-1.0, -2.0, -3.0]
        K = linalg.place_poles(A, B, targets)
        ev = np.sort(np.linalg.eigvals(A + B @ K).real)
        assert np.allclose(ev, [-3, -2, -1], atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(2, 5), st.integers(1, 3))
    def test_random_placement(self, seed, n, m):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        targets = -np.sort(rng.uniform(0.5, 3.0, n))
        K = linalg.place_poles(A, B, targets)
        ev = np.sort(np.linalg.eigvals(A + B @ K).real)
        assert np.max(np.abs(ev - np.sort(targets))) < 1e-6 * max(1.0, np.abs(targets).max())
