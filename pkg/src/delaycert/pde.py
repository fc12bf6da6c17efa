"""Modal model of a diagonal boundary-control system with delayed input.

The state is expanded on an eigenbasis, ``X(t) = sum_n c_n(t) phi_n``, and
every modal coefficient obeys ``c_n' = lambda_n c_n + b_n . u(t - D(t))``.
The controller is designed on the first ``N0`` modes and observes only
those; the remaining modes are simulated open loop.

The reaction-diffusion equation ``y_t = a y_xx + c y`` on ``(0, L)`` with
Dirichlet actuation at both ends is the concrete instance provided.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import dde, linalg, lmi
from .exceptions import AssumptionError, DimensionError, PreconditionError

__all__ = [
    "ReactionDiffusionConfig",
    "SpectralSystem",
    "ModalTrajectory",
    "eigenvalue",
    "input_coefficients",
    "mode_shape",
    "truncated_matrices",
    "spectral_gap",
    "project_initial",
    "reaction_diffusion_system",
    "design_gain",
    "simulate_pde_closed_loop",
    "certify_pde",
    "DEFAULT_POLES",
]

# closed-loop targets used for the reference reaction-diffusion design
DEFAULT_POLES = (-0.75, -1.0, -1.25)


@dataclass(frozen=True)
class ReactionDiffusionConfig:
    """``y_t = a y_xx + c y`` on ``(0, L)``.

    Attributes
    ----------
    a : float
        Diffusivity (length**2 / s).
    c : float
        Reaction rate (1 / s).
    L : float
        Domain length.
    """

    a: float = 0.5
    c: float = 0.5
    L: float = 2 * math.pi

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0 and self.L > 0):
            raise ValueError("a, c and L must be positive")


def _check_index(n):
    if int(n) != n or n < 1:
        raise ValueError("mode index must be a positive integer")
    return int(n)


def eigenvalue(cfg, n):
    """``c - a n^2 pi^2 / L^2``."""
    n = _check_index(n)
    return cfg.c - cfg.a * n * n * math.pi ** 2 / cfg.L ** 2


def input_coefficients(cfg, n):
    """Coefficients ``(b_n1, b_n2)`` of the two boundary inputs on mode `n`."""
    n = _check_index(n)
    b1 = cfg.a * n * math.pi * math.sqrt(2.0 / cfg.L ** 3)
    return b1, (-1) ** (n + 1) * b1


def mode_shape(cfg, n, x):
    """Orthonormal Dirichlet eigenfunction ``sqrt(2/L) sin(n pi x / L)``."""
    n = _check_index(n)
    return math.sqrt(2.0 / cfg.L) * np.sin(n * math.pi * np.asarray(x, dtype=float) / cfg.L)


def truncated_matrices(cfg, N0):
    """``A_N0 = diag(lambda_1..lambda_N0)`` and ``B_N0 = (b_nk)``."""
    N0 = _check_index(N0)
    A = np.diag([eigenvalue(cfg, n) for n in range(1, N0 + 1)])
    B = np.array([input_coefficients(cfg, n) for n in range(1, N0 + 1)])
    return A, B


def spectral_gap(cfg, N0):
    """Decay bound ``alpha = -lambda_(N0+1)`` of the residual modes.

    Raises
    ------
    AssumptionError
        If the first residual mode is not exponentially stable.
    """
    lam = eigenvalue(cfg, _check_index(N0) + 1)
    if lam >= 0:
        raise AssumptionError(f"residual mode {N0 + 1} is not stable (lambda = {lam:g})")
    return -lam


def project_initial(cfg, X0, N_sim, points=2001):
    """Modal coefficients ``<X0, phi_n>`` by composite Simpson quadrature.

    Parameters
    ----------
    X0 : callable
        Vectorized function of ``x`` on ``[0, L]``.
    N_sim : int
    points : int
        Quadrature nodes, odd and at least 2001.
    """
    if points < 2001:
        raise ValueError("at least 2001 quadrature points are required")
    if points % 2 == 0:
        points += 1
    x = np.linspace(0.0, cfg.L, points)
    fx = np.broadcast_to(np.asarray(X0(x), dtype=float), x.shape)
    return np.array([simpson(fx * mode_shape(cfg, n, x), x=x) for n in range(1, N_sim + 1)])


# --------------------------------------------------------------------------
# generic spectral data


@dataclass(frozen=True)
class SpectralSystem:
    """Spectral data of a diagonal boundary-control system.

    Attributes
    ----------
    eigenvalues : (N_sim,) array
        Real or complex ``lambda_n``.
    input_coeffs : (N_sim, m) array
        Rows ``b_n``.
    N0 : int
        Number of modes used for design.
    riesz_bounds : tuple
        ``(m_R, M_R)``; ``(1, 1)`` for an orthonormal basis.
    shapes : callable, optional
        ``shapes(n, x)`` evaluates mode ``n`` (1-based) for field output.
    domain : tuple, optional
        ``(x_min, x_max)`` used for the reconstruction grid.
    """

    eigenvalues: np.ndarray
    input_coeffs: np.ndarray
    N0: int
    riesz_bounds: tuple = (1.0, 1.0)
    shapes: object = None
    domain: tuple = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues).ravel()
        if lam.dtype.kind not in "fc":
            lam = lam.astype(float)
        b = np.atleast_2d(np.asarray(self.input_coeffs))
        if b.dtype.kind not in "fc":
            b = b.astype(float)
        if b.shape[0] != lam.size:
            raise DimensionError("one row of input coefficients per eigenvalue is required")
        if not 1 <= self.N0 <= lam.size:
            raise ValueError("N0 must lie in [1, N_sim]")
        m_r, M_r = self.riesz_bounds
        if not 0 < m_r <= M_r:
            raise ValueError("Riesz bounds must satisfy 0 < m_R <= M_R")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "input_coeffs", b)
        object.__setattr__(self, "N0", int(self.N0))
        if lam.size > self.N0 and np.max(lam[self.N0:].real) >= 0:
            raise AssumptionError("every residual mode must have negative real part")

    @property
    def N_sim(self):
        return self.eigenvalues.size

    @property
    def is_complex(self):
        return np.iscomplexobj(self.eigenvalues) or np.iscomplexobj(self.input_coeffs)

    @property
    def alpha(self):
        """Spectral gap ``-max Re lambda_n`` over the simulated residual modes."""
        if self.N_sim == self.N0:
            return math.inf
        return float(-np.max(self.eigenvalues[self.N0:].real))

    def truncated(self, N=None):
        N = self.N0 if N is None else N
        return np.diag(self.eigenvalues[:N]), self.input_coeffs[:N].copy()

    def real_truncated(self, N=None):
        """Truncated pair, realified when the data are complex."""
        A, B = self.truncated(N)
        if self.is_complex:
            return linalg.realify(A), linalg.realify(B)
        return A.real.astype(float), B.real.astype(float)

    def with_modes(self, N_sim):
        return SpectralSystem(self.eigenvalues[:N_sim], self.input_coeffs[:N_sim], self.N0,
                              self.riesz_bounds, self.shapes, self.domain)


def reaction_diffusion_system(cfg, N0=3, N_sim=10):
    """:class:`SpectralSystem` of the reaction-diffusion family."""
    if N_sim < N0:
        raise ValueError("N_sim must be at least N0")
    lam = [eigenvalue(cfg, n) for n in range(1, N_sim + 1)]
    b = [input_coefficients(cfg, n) for n in range(1, N_sim + 1)]
    return SpectralSystem(np.array(lam), np.array(b), N0,
                          shapes=lambda n, x: mode_shape(cfg, n, x), domain=(0.0, cfg.L))


def _as_system(system, N0, N_sim):
    if isinstance(system, ReactionDiffusionConfig):
        return reaction_diffusion_system(system, N0, N0 if N_sim is None else N_sim)
    if N0 is not None and N0 != system.N0:
        raise ValueError("N0 disagrees with the spectral system")
    if N_sim is not None:
        if N_sim > system.N_sim:
            raise ValueError("N_sim exceeds the available modes")
        system = system.with_modes(N_sim)
    return system


def design_gain(system, poles=DEFAULT_POLES, N0=None):
    """Pole placement on the truncated pair (see :func:`linalg.place_poles`)."""
    if isinstance(system, ReactionDiffusionConfig):
        system = reaction_diffusion_system(system, N0 or 3, N0 or 3)
    A, B = system.truncated()
    if linalg.controllability_rank(A, B) < A.shape[0]:
        raise AssumptionError("truncated pair is not controllable")
    return linalg.place_poles(A, B, poles)


# --------------------------------------------------------------------------
# simulation


@dataclass
class ModalTrajectory:
    """Modal closed-loop run.

    Attributes
    ----------
    t : (K,) ndarray
    c : (K, N_sim) ndarray
        Modal coefficients (realified layout for complex systems).
    u : (K, m) ndarray
        Controller output ``u(t)``.
    u_tilde : (K, m) ndarray
        Delayed boundary input ``u(t - D(t))``.
    z : (K, n_ctrl) ndarray
    N0 : int
    x_grid, y : ndarray or None
        Reconstruction grid and ``y(t, x)`` samples of shape ``(K, len(x_grid))``.
    """

    t: np.ndarray
    c: np.ndarray
    u: np.ndarray
    u_tilde: np.ndarray
    z: np.ndarray
    N0: int
    D: np.ndarray = None
    phi: np.ndarray = None
    x_grid: np.ndarray = None
    y: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def Y(self):
        return self.c[:, :self.N0]

    def decay_signal(self):
        return np.linalg.norm(self.Y, axis=1) + np.linalg.norm(self.u, axis=1)

    def modal_csv(self, path):
        names = ["t"] + [f"c_{n + 1}" for n in range(self.c.shape[1])]
        names += [f"utilde_{k + 1}" for k in range(self.u_tilde.shape[1])]
        dde.write_csv(path, names, np.column_stack([self.t, self.c, self.u_tilde]))

    def field_csv(self, path, stride=1):
        """Long format ``t, x, y``; `stride` subsamples the time grid."""
        if self.y is None:
            raise ValueError("no field samples recorded")
        idx = np.arange(0, self.t.size, max(1, int(stride)))
        tt = np.repeat(self.t[idx], self.x_grid.size)
        xx = np.tile(self.x_grid, idx.size)
        dde.write_csv(path, ["t", "x", "y"], np.column_stack([tt, xx, self.y[idx].ravel()]))


def simulate_pde_closed_loop(system, N0, N_sim, K, D0, delay, phi, X0, T, h=None,
                             x_points=201):
    """Closed-loop modal simulation with the predictor on the first `N0` modes.

    Parameters
    ----------
    system : ReactionDiffusionConfig or SpectralSystem
    N0, N_sim : int
        Design and simulation basis sizes (``N_sim >= N0``).
    K : (m, N0) array_like
        Gain for the truncated pair (realified layout for complex data).
    D0 : float
    delay : dde.DelaySignal
    phi : dde.TransitionSignal
    X0 : callable or array_like
        Initial profile (projected on the modes) or its modal coefficients.
    T, h : float
        As in :func:`dde.simulate_closed_loop`.
    x_points : int
        Size of the uniform field reconstruction grid; 0 disables it.

    Returns
    -------
    ModalTrajectory
    """
    system = _as_system(system, N0, N_sim)
    N0 = system.N0
    if system.N_sim < N0:
        raise ValueError("N_sim must be at least N0")
    Ac, Bc = system.real_truncated(N0)
    Ap, Bp = system.real_truncated(system.N_sim)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (Bc.shape[1], Ac.shape[0]):
        raise DimensionError(f"K must have shape {(Bc.shape[1], Ac.shape[0])}")
    if linalg.spectral_abscissa(Ac + Bc @ K) >= 0:
        raise PreconditionError("A_N0 + B_N0 K must be Hurwitz")
    if callable(X0):
        if system.shapes is None:
            raise ValueError("a callable X0 needs mode shapes; pass coefficients instead")
        c0 = _project_generic(system, X0)
    else:
        c0 = np.asarray(X0).ravel()[:system.N_sim]
    if system.is_complex:
        c0 = np.concatenate([np.real(c0), np.imag(c0)])
    c0 = np.asarray(c0, dtype=float)
    if c0.size != Ap.shape[0]:
        raise DimensionError("initial coefficients have the wrong length")
    if h is None:
        h = dde.default_step(phi.t0, D0, delay.delta)
    _, _, n_steps = dde._check_step(h, D0, delay, phi.t0, T)
    C = _observer(system)
    loop = dde._PredictorLoop(Ap, Bp, Ac, Bc, C, K, D0, delay, phi, h)
    t, cs, us, zs, ud, _ = loop.run(c0, n_steps)
    traj = ModalTrajectory(t, cs, us, ud, zs, N0 if not system.is_complex else 2 * N0,
                           np.asarray(delay(t), dtype=float), phi(t),
                           meta={"h": h, "D0": D0, "delta": delay.delta})
    if system.is_complex:
        # Y occupies the leading N0 real and N0 imaginary parts; reorder so
        # the first 2 * N0 columns are the controlled ones
        n = system.N_sim
        order = list(range(N0)) + list(range(n, n + N0)) + list(range(N0, n)) \
            + list(range(n + N0, 2 * n))
        traj.c = cs[:, order]
    if x_points and system.shapes is not None and not system.is_complex:
        x = np.linspace(system.domain[0], system.domain[1], x_points)
        basis = np.array([system.shapes(n, x) for n in range(1, system.N_sim + 1)])
        traj.x_grid, traj.y = x, cs @ basis
    return traj


def _project_generic(system, X0):
    if system.domain is None:
        raise ValueError("system has no domain")
    x = np.linspace(system.domain[0], system.domain[1], 2001)
    fx = np.broadcast_to(np.asarray(X0(x), dtype=float), x.shape)
    return np.array([simpson(fx * system.shapes(n, x), x=x) for n in range(1, system.N_sim + 1)])


def _observer(system):
    n, N0 = system.N_sim, system.N0
    if not system.is_complex:
        return np.eye(n)[:N0]
    C = np.zeros((2 * N0, 2 * n))
    C[:N0, :N0] = np.eye(N0)
    C[N0:, n:n + N0] = np.eye(N0)
    return C


def certify_pde(system, N0, K, D0, kappa, tol=lmi.DEFAULT_TOL, **solver_kw):
    """Largest certified delay deviation for the truncated closed loop.

    ``M = A_N0 + B_N0 K`` and ``N = e^{D0 A_N0} B_N0 K`` (realified when
    complex) are handed to :func:`lmi.search_max_delta`.

    Returns
    -------
    lmi.DeltaSearch
    """
    system = _as_system(system, N0, None)
    A, B = system.truncated()
    K = np.asarray(K)
    if K.shape[1] == 2 * A.shape[0] and system.is_complex:
        A, B = system.real_truncated()
    problem = lmi.build_problem(A, B, K, D0, kappa)
    return lmi.search_max_delta(problem, tol, **solver_kw)
