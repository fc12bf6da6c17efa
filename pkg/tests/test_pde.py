import math

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from delaycert import dde, linalg, lmi, pde
from delaycert.dde import DelaySignal, TransitionSignal
from delaycert.exceptions import AssumptionError, PreconditionError


@pytest.fixture(scope="module")
def gain(rd_config):
    return pde.design_gain(rd_config)


class TestModalData:
    def test_eigenvalues(self, rd_config):
        # a n^2 pi^2 / L^2 = n^2 / 8 for the default data
        for n in range(1, 8):
            assert pde.eigenvalue(rd_config, n) == pytest.approx(0.5 - n * n / 8, abs=1e-14)

    def test_input_coefficients(self, rd_config):
        b1 = 0.5 * math.pi * math.sqrt(2 / (2 * math.pi) ** 3)
        for n in range(1, 6):
            bn1, bn2 = pde.input_coefficients(rd_config, n)
            assert bn1 == pytest.approx(n * b1, rel=1e-14)
            assert bn2 == pytest.approx((-1) ** (n + 1) * n * b1, rel=1e-14)

    def test_truncated_shapes_and_rank(self, rd_config):
        A, B = pde.truncated_matrices(rd_config, 3)
        assert A.shape == (3, 3) and B.shape == (3, 2)
        assert linalg.controllability_rank(A, B) == 3

    def test_spectral_gap(self, rd_config):
        assert pde.spectral_gap(rd_config, 3) == pytest.approx(1.5)
        assert pde.spectral_gap(rd_config, 2) == pytest.approx(0.625)
        with pytest.raises(AssumptionError):
            pde.spectral_gap(rd_config, 1)

    def test_index_validation(self, rd_config):
        with pytest.raises(ValueError):
            pde.eigenvalue(rd_config, 0)

    def test_finite_difference_eigenvalues(self, rd_config):
        # second-difference Dirichlet Laplacian as an independent oracle
        n_int = 2000
        dx = rd_config.L / (n_int + 1)
        diag = np.full(n_int, 2.0 / dx ** 2)
        off = np.full(n_int - 1, -1.0 / dx ** 2)
        mu = eigh_tridiagonal(diag, off, select="i", select_range=(0, 9), eigvals_only=True)
        for n in range(1, 11):
            diffusion = rd_config.c - pde.eigenvalue(rd_config, n)
            assert rd_config.a * mu[n - 1] == pytest.approx(diffusion, rel=5e-3)

    def test_mode_orthonormality(self, rd_config):
        c = pde.project_initial(rd_config, lambda x: pde.mode_shape(rd_config, 2, x), 6)
        assert np.allclose(c, [0, 1, 0, 0, 0, 0], atol=1e-10)


class TestProjection:
    def test_first_mode(self, rd_config):
        c = pde.project_initial(rd_config, lambda x: pde.mode_shape(rd_config, 1, x), 5)
        assert c[0] == pytest.approx(1.0, abs=1e-10)

    def test_zero(self, rd_config):
        assert not np.any(pde.project_initial(rd_config, lambda x: 0.0 * x, 5))

    def test_refinement(self, rd_config):
        L = rd_config.L
        X0 = lambda x: -x * (2 * L / 3 - x) * (L - x)  # noqa: E731
        coarse = pde.project_initial(rd_config, X0, 10, points=2001)
        fine = pde.project_initial(rd_config, X0, 10, points=8001)
        assert np.max(np.abs(coarse - fine)) < 1e-8

    def test_parseval(self, rd_config):
        L = rd_config.L
        X0 = lambda x: -x * (2 * L / 3 - x) * (L - x)  # noqa: E731
        c = pde.project_initial(rd_config, X0, 50)
        x = np.linspace(0, L, 20001)
        energy = np.trapezoid(X0(x) ** 2, x)
        assert np.sum(c ** 2) == pytest.approx(energy, rel=0.02)

    def test_minimum_points(self, rd_config):
        with pytest.raises(ValueError):
            pde.project_initial(rd_config, np.sin, 3, points=101)


class TestDesign:
    def test_poles(self, rd_config, gain):
        A, B = pde.truncated_matrices(rd_config, 3)
        ev = np.sort(np.linalg.eigvals(A + B @ gain).real)
        assert np.allclose(ev, [-1.25, -1.0, -0.75], atol=1e-8)

    def test_residual_mode_must_be_stable(self):
        with pytest.raises(AssumptionError):
            pde.SpectralSystem([1.0, 0.5], [[1.0], [1.0]], N0=1)


def sim(cfg, K, X0, N_sim=10, T=12.0, delay=None, h=0.02):
    delay = delay or DelaySignal.sinusoid(1.0, 0.1, 1.0)
    return pde.simulate_pde_closed_loop(cfg, 3, N_sim, K, 1.0, delay, TransitionSignal(1.0), X0, T, h=h)


class TestSimulation:
    def test_zero_gain_not_hurwitz(self, rd_config):
        with pytest.raises(PreconditionError):
            sim(rd_config, np.zeros((2, 3)), np.ones(10))

    def test_residual_mode_is_decoupled(self, rd_config, gain):
        # starting on mode 5 the controller never sees a signal
        c0 = np.zeros(10)
        c0[4] = 1.0
        traj = sim(rd_config, gain, c0)
        assert not np.any(traj.u)
        lam5 = pde.eigenvalue(rd_config, 5)
        # RK4 global error at this step is about 1e-5 relative
        assert np.allclose(traj.c[:, 4], np.exp(lam5 * traj.t), rtol=1e-4, atol=0)
        assert not np.any(traj.c[:, [0, 1, 2, 3, 5, 6, 7, 8, 9]])

    def test_truncated_matches_lumped_simulator(self, rd_config, gain):
        c0 = np.array([1.0, -0.5, 0.25])
        delay = DelaySignal.sinusoid(1.0, 0.1, 1.0)
        traj = sim(rd_config, gain, c0, N_sim=3, delay=delay)
        A, B = pde.truncated_matrices(rd_config, 3)
        ref = dde.simulate_closed_loop(A, B, gain, 1.0, delay, TransitionSignal(1.0), c0, 12.0, h=0.02)
        assert np.max(np.abs(traj.c - ref.x)) < 1e-12
        assert np.max(np.abs(traj.u - ref.u)) < 1e-12

    def test_field_reconstruction(self, rd_config, gain):
        L = rd_config.L
        traj = sim(rd_config, gain, lambda x: np.sin(x / 2) + 0.2 * np.sin(3 * x / 2), T=4.0)
        x = traj.x_grid
        assert np.allclose(traj.y[0], np.sin(x / 2) + 0.2 * np.sin(3 * x / 2), atol=1e-8)
        assert x[0] == 0 and x[-1] == pytest.approx(L)

    def test_decay_and_residual_modes(self, rd_config, gain):
        L = rd_config.L
        traj = sim(rd_config, gain, lambda x: -x * (2 * L / 3 - x) * (L - x), T=30.0)
        rate, _ = dde.fit_decay(traj, 10.0, 30.0)
        eta = lmi.decay_rate_eta(0.2, pde.spectral_gap(rd_config, 3))
        assert rate >= 0.95 * eta
        residual = np.linalg.norm(traj.c[:, 3:], axis=1)
        r_rate, _ = dde.fit_log_linear(traj.t, residual, 10.0, 30.0)
        assert r_rate >= 0.95 * eta

    def test_csv_outputs(self, rd_config, gain, tmp_path):
        traj = sim(rd_config, gain, lambda x: np.sin(x / 2), T=2.0)
        traj.modal_csv(tmp_path / "modal.csv")
        traj.field_csv(tmp_path / "field.csv", stride=10)
        head = (tmp_path / "modal.csv").read_text().splitlines()[0].split(",")
        assert head[:2] == ["t", "c_1"] and head[-2:] == ["utilde_1", "utilde_2"]
        rows = (tmp_path / "field.csv").read_text().splitlines()
        assert rows[0] == "t,x,y"
        assert len(rows) == 1 + 11 * traj.x_grid.size

    def test_complex_system(self):
        # one oscillatory unstable mode controlled through one complex input
        system = pde.SpectralSystem(np.array([0.2 + 1j, -2.0 + 0.5j]), np.array([[1.0 + 0j], [0.5 + 0j]]), 1)
        A, B = system.real_truncated()
        K = linalg.place_poles(A, B, [-1.0, -1.5])
        traj = pde.simulate_pde_closed_loop(system, 1, 2, K, 1.0, DelaySignal.sinusoid(1.0, 0.05, 1.0),
                                            TransitionSignal(1.0), np.array([1.0 + 0.5j, 0.3]), 30.0, h=0.02)
        assert traj.c.shape[1] == 4
        assert np.linalg.norm(traj.c[-1]) < 1e-3 * np.linalg.norm(traj.c[0])


class TestCertification:
    def test_kappa_monotone(self, rd_config, gain):
        lo = pde.certify_pde(rd_config, 3, gain, 1.0, 0.2, tol=1e-3)
        hi = pde.certify_pde(rd_config, 3, gain, 1.0, 0.0, tol=1e-3)
        assert lo.delta > 0
        assert hi.delta >= lo.delta
