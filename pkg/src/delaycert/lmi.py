"""Robustness certificates for constant-delay predictor feedback.

Three routes to an admissible delay deviation ``delta`` are provided:

* the Lyapunov-Krasovskii LMI ``Theta(delta, kappa) < 0`` searched by
  bisection (:func:`max_delta`), with the closed-form inner bound
  :func:`delta_star`;
* the small-gain condition (:func:`small_gain_delta`) and its closed-form
  upper estimate (:func:`delta_E`).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .exceptions import DimensionError, IndeterminateError, PreconditionError
from .sdp import (AffineSymmetricMap, STRICTNESS_THRESHOLD, Status, SymmetricBlock,
                  minimize_max_eig)

__all__ = [
    "CertificationProblem",
    "LkCertificate",
    "SmallGainEnvelope",
    "DeltaSearch",
    "assemble_theta",
    "theta_map",
    "NormalizedMap",
    "check_feasibility",
    "max_delta",
    "search_max_delta",
    "delta_star",
    "build_problem",
    "delta_E",
    "estimate_envelope",
    "small_gain_delta",
    "default_mu_grid",
    "decay_rate_eta",
]

log = logging.getLogger(__name__)

DEFAULT_EPS_PD = 1e-6
DEFAULT_TOL = 1e-4
# entrywise bound on the slack matrices P2 and P3
_SLACK_CAP = 1e3


@dataclass(frozen=True)
class CertificationProblem:
    """Data of one LMI query: ``M``, ``N``, nominal delay and decay rate."""

    M: np.ndarray
    N: np.ndarray
    D0: float
    kappa: float = 0.0
    eps_pd: float = DEFAULT_EPS_PD

    def __post_init__(self):
        M = linalg.as_matrix(self.M, "M", square=True)
        N = linalg.as_matrix(self.N, "N", square=True)
        if M.shape != N.shape:
            raise DimensionError("M and N must have the same order")
        if np.iscomplexobj(M) or np.iscomplexobj(N):
            raise DimensionError("M and N must be real; realify complex data first")
        if not self.D0 > 0:
            raise ValueError("D0 must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if not self.eps_pd > 0:
            raise ValueError("eps_pd must be positive")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "N", N)

    @property
    def order(self):
        return self.M.shape[0]

    def with_kappa(self, kappa):
        return CertificationProblem(self.M, self.N, self.D0, kappa, self.eps_pd)


@dataclass
class LkCertificate:
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    Q: np.ndarray
    margin: float
    delta: float = float("nan")
    kappa: float = float("nan")


@dataclass(frozen=True)
class SmallGainEnvelope:
    """Constants with ``||expm(A_cl t)|| <= M_const * exp(-mu t)``."""

    M_const: float
    mu: float


@dataclass
class DeltaSearch:
    """Outcome of the bisection on ``delta``."""

    delta: float
    certificate: LkCertificate = None
    indeterminate: list = field(default_factory=list)
    evaluations: int = 0
    diagnostic: str = ""

    @property
    def flagged(self):
        return bool(self.indeterminate)


def assemble_theta(P1, P2, P3, Q, delta, problem):
    """The ``3n x 3n`` Lyapunov-Krasovskii matrix ``Theta(delta, kappa)``.

    Row blocks::

        [2k P1 + M'P2 + P2'M,  P1 - P2' + M'P3,   d P2'N        ]
        [        .,            -P3 - P3' + 2d Q,  d P3'N        ]
        [        .,                   .,          -d e^{-2kD0} Q]

    The lower triangle is the transpose of the upper one, so the output is
    exactly symmetric.
    """
    M, N, k, D0 = problem.M, problem.N, problem.kappa, problem.D0
    n = problem.order
    mats = [np.asarray(P, dtype=float) for P in (P1, P2, P3, Q)]
    if any(P.shape != (n, n) for P in mats):
        raise DimensionError(f"decision matrices must be {n}x{n}")
    P1, P2, P3, Q = mats
    d = float(delta)
    b11 = 2 * k * P1 + M.T @ P2 + P2.T @ M
    b12 = P1 - P2.T + M.T @ P3
    b13 = d * P2.T @ N
    b22 = -P3 - P3.T + 2 * d * Q
    b23 = d * P3.T @ N
    b33 = -d * math.exp(-2 * k * D0) * Q
    theta = np.block([
        [b11, b12, b13],
        [b12.T, b22, b23],
        [b13.T, b23.T, b33],
    ])
    # diagonal blocks symmetrized explicitly so theta == theta.T bit for bit
    iu = np.triu_indices(3 * n, 1)
    theta[(iu[1], iu[0])] = theta[iu]
    return theta


def _variable_basis(n):
    """Basis matrices for (P1 sym, P2, P3, Q sym) in decision-vector order."""
    sym, full = [], []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            sym.append(E)
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = 1.0
            full.append(E)
    z = np.zeros((n, n))
    basis = []
    for E in sym:
        basis.append((E, z, z, z))
    for E in full:
        basis.append((z, E, z, z))
    for E in full:
        basis.append((z, z, E, z))
    for E in sym:
        basis.append((z, z, z, E))
    return basis


def unpack(x, n):
    """Split a decision vector into ``(P1, P2, P3, Q)``."""
    basis = _variable_basis(n)
    out = [np.zeros((n, n)) for _ in range(4)]
    for xi, mats in zip(x, basis):
        for acc, E in zip(out, mats):
            acc += xi * E
    return tuple(out)


@dataclass(frozen=True)
class NormalizedMap:
    """Feasibility map in reduced coordinates plus the lift back to ``x``."""

    amap: AffineSymmetricMap
    offset: np.ndarray
    T: np.ndarray

    def lift(self, z):
        return self.offset + self.T @ np.asarray(z, dtype=float)


def theta_map(problem, delta):
    """Affine map whose max-eigenvalue minimization decides feasibility.

    Blocks: ``Theta``, ``-P1``, ``-Q`` and an entrywise box on ``P2``,
    ``P3``, restricted to the slice ``tr P1 + tr Q = 1``. The normalization
    fixes the scale of the otherwise homogeneous problem, so the optimal
    margin is negative exactly when a strict certificate exists and is
    bounded away from zero on clearly infeasible instances. The
    positive-definiteness floor ``eps_pd`` is restored afterwards by
    rescaling the witness (see :func:`check_feasibility`).
    """
    n = problem.order
    basis = _variable_basis(n)
    d = len(basis)
    theta_coef = np.array([assemble_theta(*mats, delta, problem) for mats in basis])
    p1_coef = np.array([mats[0] for mats in basis])
    q_coef = np.array([mats[3] for mats in basis])
    full = AffineSymmetricMap(d, (
        SymmetricBlock(np.zeros((3 * n, 3 * n)), theta_coef),
        SymmetricBlock(np.zeros((n, n)), -p1_coef),
        SymmetricBlock(np.zeros((n, n)), -q_coef),
        _slack_box(basis, n),
    ))
    # trace constraint: eliminate P1[0, 0] (coordinate 0)
    trace_row = np.array([np.trace(m[0]) + np.trace(m[3]) for m in basis])
    offset = np.zeros(d)
    offset[0] = 1.0
    T = np.eye(d)[:, 1:]
    T[0] = -trace_row[1:]
    return NormalizedMap(full.substitute(offset, T), offset, T)


def _slack_box(basis, n):
    n_sym = n * (n + 1) // 2
    d = len(basis)
    slack = np.arange(n_sym, n_sym + 2 * n * n)
    order = 2 * slack.size
    coef = np.zeros((d, order, order))
    for i, k in enumerate(slack):
        coef[k, 2 * i, 2 * i] = 1.0
        coef[k, 2 * i + 1, 2 * i + 1] = -1.0
    return SymmetricBlock(-_SLACK_CAP * np.eye(order), coef)


def _verify(cert, problem, delta, strictness):
    theta = assemble_theta(cert.P1, cert.P2, cert.P3, cert.Q, delta, problem)
    lam_theta = float(np.linalg.eigvalsh(theta)[-1])
    lam_p1 = float(np.linalg.eigvalsh(cert.P1)[0])
    lam_q = float(np.linalg.eigvalsh(cert.Q)[0])
    ok = lam_theta < -strictness and lam_p1 >= problem.eps_pd and lam_q >= problem.eps_pd
    return ok, lam_theta


def check_feasibility(problem, delta, tol_gap=1e-7, strictness=STRICTNESS_THRESHOLD,
                      max_iters=800):
    """Decide strict feasibility of ``Theta(delta, kappa) < 0``.

    Returns
    -------
    feasible : bool
    certificate : LkCertificate or None
        Present only when feasible; it has been re-checked by assembling
        ``Theta`` from the returned variables.

    Raises
    ------
    IndeterminateError
        When the solver fails to converge. This is not a refutation.
    """
    if not 0 < delta < problem.D0:
        raise ValueError("delta must lie in (0, D0)")
    nmap = theta_map(problem, delta)
    outcome = minimize_max_eig(nmap.amap, tol_gap=tol_gap, max_iters=max_iters,
                               strictness=strictness, decide_at=-strictness)
    if outcome.status is Status.NUMERICAL_FAILURE:
        raise IndeterminateError(
            f"solver failed at delta={delta:g} after {outcome.iterations} iterations")
    if outcome.status is not Status.STRICTLY_FEASIBLE:
        return False, None
    P1, P2, P3, Q = unpack(nmap.lift(outcome.witness), problem.order)
    floor = min(np.linalg.eigvalsh(P1)[0], np.linalg.eigvalsh(Q)[0])
    if floor <= 0:
        return False, None
    # Theta is homogeneous: lift the witness onto the eps_pd floor
    scale = max(1.0, 1.000001 * problem.eps_pd / floor)
    P1, P2, P3, Q = (scale * P for P in (P1, P2, P3, Q))
    cert = LkCertificate(P1, P2, P3, Q, margin=float("nan"), delta=delta,
                         kappa=problem.kappa)
    ok, lam = _verify(cert, problem, delta, strictness)
    cert.margin = lam
    if not ok:
        log.warning("solver witness at delta=%g failed re-verification (lambda_max=%g)",
                    delta, lam)
        return False, None
    return True, cert


def search_max_delta(problem, tol=DEFAULT_TOL, **solver_kw):
    """Bisection for the largest certified ``delta`` on the grid ``k * tol``.

    Feasibility is downward closed in ``delta`` (a certificate for ``delta``
    also certifies every smaller value), so the search is over the integer
    ``k``. The result ``delta = k * tol`` is certified and ``(k + 1) * tol``
    is not (or reaches ``D0``). Indeterminate solver calls count as "not
    certified" for the search but are recorded.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if linalg.spectral_abscissa(problem.M) >= 0:
        raise PreconditionError("M must be Hurwitz")
    result = DeltaSearch(delta=0.0)

    def probe(k):
        delta = k * tol
        result.evaluations += 1
        try:
            return check_feasibility(problem, delta, **solver_kw)
        except IndeterminateError as exc:
            result.indeterminate.append(delta)
            log.warning("%s", exc)
            return False, None

    k_max = math.ceil(problem.D0 / tol) - 1
    if k_max < 1:
        result.diagnostic = "tolerance not smaller than D0"
        return result
    ok, cert = probe(1)
    if not ok:
        result.diagnostic = (f"not certified even at delta={tol:g}; "
                             f"M is not certified Hurwitz by the LMI at kappa={problem.kappa:g}")
        log.info(result.diagnostic)
        return result
    lo, best = 1, cert
    ok, cert = probe(k_max)
    if ok:
        lo, best = k_max, cert
        hi = k_max + 1
    else:
        hi = k_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok, cert = probe(mid)
        if ok:
            lo, best = mid, cert
        else:
            hi = mid
    result.delta = round(lo * tol, 12)
    result.certificate = best
    return result


def max_delta(problem, tol=DEFAULT_TOL, **solver_kw):
    """Largest ``delta`` (rounded down to `tol`) with ``Theta < 0`` certified."""
    return search_max_delta(problem, tol, **solver_kw).delta


def delta_star(problem):
    """Closed-form inner bound on the LMI feasibility interval.

    With ``P2`` solving ``M'P2 + P2 M = -I``::

        delta* = min(D0, min(1 - 4 k lmax(P2), lmin(M^-T M^-1))
                         / (2 sqrt(2) e^{k D0} ||N' [P2, -M^-T P2]||))

    and ``delta* = D0`` when ``N = 0``.
    """
    M, N, k, D0 = problem.M, problem.N, problem.kappa, problem.D0
    if linalg.spectral_abscissa(M) >= 0:
        raise PreconditionError("M must be Hurwitz")
    P2 = linalg.solve_lyapunov_identity(M)
    lam_p2 = linalg.symmetric_extremal_eigs(P2)[1]
    if not 0 <= k < 1.0 / (4.0 * lam_p2):
        raise PreconditionError(
            f"kappa must lie in [0, {1.0 / (4.0 * lam_p2):.6g}) for this M")
    if not np.any(N):
        return float(D0)
    Minv = np.linalg.inv(M)
    S3 = Minv.T @ Minv
    beta0 = min(1.0 - 4.0 * k * lam_p2, linalg.symmetric_extremal_eigs(0.5 * (S3 + S3.T))[0])
    coupling = linalg.induced_norm2(N.T @ np.hstack([P2, -Minv.T @ P2]))
    return float(min(D0, beta0 / (2.0 * math.sqrt(2.0) * math.exp(k * D0) * coupling)))


def _closed_loop(A, B, K):
    A = linalg.as_matrix(A, "A", square=True)
    B = linalg.as_matrix(B, "B")
    K = np.atleast_2d(np.asarray(K))
    if B.shape[0] != A.shape[0] or K.shape != (B.shape[1], A.shape[0]):
        raise DimensionError("incompatible shapes for A, B, K")
    return A, B, K, A + B @ K


def build_problem(A, B, K, D0, kappa=0.0, eps_pd=DEFAULT_EPS_PD):
    """``M = A + BK`` and ``N = expm(D0 A) B K``, realified for complex data."""
    A, B, K, Acl = _closed_loop(A, B, K)
    if linalg.spectral_abscissa(Acl) >= 0:
        raise PreconditionError("A + BK must be Hurwitz")
    N = linalg.mat_exp(A, D0) @ B @ K
    if np.iscomplexobj(Acl) or np.iscomplexobj(N):
        Acl, N = linalg.realify(Acl), linalg.realify(N)
    return CertificationProblem(Acl, N, D0, kappa, eps_pd)


def delta_E(A, B, K, D0):
    """Closed-form upper estimate on any small-gain admissible ``delta``.

    ``log(1 + mu_M / ||expm(D0 A) B K||) / ||A + BK||``, capped at ``D0``
    when the mismatch matrix vanishes.
    """
    A, B, K, Acl = _closed_loop(A, B, K)
    mu_M = -linalg.spectral_abscissa(Acl)
    if mu_M <= 0:
        raise PreconditionError("A + BK must be Hurwitz")
    n_mis = linalg.induced_norm2(linalg.mat_exp(A, D0) @ B @ K)
    if n_mis == 0.0:
        return float(D0)
    return float(math.log1p(mu_M / n_mis) / linalg.induced_norm2(Acl))


def envelope_grid(A_cl):
    """Sampling grid ``[0, 50 / mu_M]`` with 1000 uniform steps."""
    mu_M = -linalg.spectral_abscissa(A_cl)
    horizon = 50.0 / mu_M
    return np.linspace(0.0, horizon, 1001)


def _norm_profile(A_cl, times):
    step = linalg.mat_exp(A_cl, times[1] - times[0])
    E = np.eye(A_cl.shape[0])
    out = np.empty(times.size)
    for i in range(times.size):
        out[i] = linalg.induced_norm2(E)
        E = E @ step
    return out


def estimate_envelope(A_cl, mu, safety=1.01):
    """Overshoot constant ``M_const`` for the decay rate `mu`.

    ``M_const = safety * max_t ||expm(A_cl t)|| e^{mu t}`` over
    :func:`envelope_grid`, and never below 1.
    """
    A_cl = linalg.as_matrix(A_cl, "A_cl", square=True)
    mu_M = -linalg.spectral_abscissa(A_cl)
    if not 0 < mu < mu_M:
        raise PreconditionError("mu must lie in (0, mu_M(A_cl))")
    times = envelope_grid(A_cl)
    peak = float(np.max(_norm_profile(A_cl, times) * np.exp(mu * times)))
    return SmallGainEnvelope(max(1.0, safety * peak), float(mu))


def small_gain_lhs(envelope, norm_acl, norm_mismatch, delta):
    """Left side of the small-gain condition (to be compared with ``mu``)."""
    return envelope.M_const * norm_mismatch * (math.exp(norm_acl * delta)
                                               - math.exp(-envelope.mu * delta))


def default_mu_grid(A_cl, points=19):
    mu_M = -linalg.spectral_abscissa(A_cl)
    return mu_M * np.linspace(0.05, 0.95, points)


def small_gain_delta(A, B, K, D0, mu_grid=None):
    """Best small-gain admissible ``delta`` over a grid of decay rates.

    For every ``mu`` the envelope constant comes from
    :func:`estimate_envelope`; the left side of the condition increases with
    ``delta``, so the largest admissible value is found by bisection and
    nudged inside the strict inequality.

    Returns
    -------
    delta : float
    envelope : SmallGainEnvelope
    """
    A, B, K, Acl = _closed_loop(A, B, K)
    if mu_grid is None:
        mu_grid = default_mu_grid(Acl)
    mu_grid = list(np.atleast_1d(mu_grid))
    if not mu_grid:
        raise ValueError("mu_grid is empty")
    norm_acl = linalg.induced_norm2(Acl)
    norm_mis = linalg.induced_norm2(linalg.mat_exp(A, D0) @ B @ K)
    best = (-1.0, None)
    for mu in mu_grid:
        env = estimate_envelope(Acl, float(mu))

        def excess(d):
            return small_gain_lhs(env, norm_acl, norm_mis, d) - env.mu

        if excess(D0) < 0:
            delta = D0 * (1.0 - 1e-12)
        else:
            lo, hi = 0.0, D0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if excess(mid) < 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * D0:
                    break
            delta = lo
        if delta > best[0]:
            best = (delta, env)
    return float(best[0]), best[1]


def decay_rate_eta(kappa, alpha):
    """Decay rate for the full infinite-dimensional closed loop.

    ``kappa`` when the spectral gap ``alpha`` exceeds it, otherwise just
    below ``alpha`` (``0.99 * alpha``).
    """
    if kappa <= 0 or alpha <= 0:
        raise ValueError("kappa and alpha must be positive")
    return float(kappa) if alpha > kappa else 0.99 * float(alpha)
