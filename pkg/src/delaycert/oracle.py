"""Brute-force feasibility oracle for scalar (n = 1) instances of Theta.

Theta is homogeneous in its variables, so ``P1 = 1`` without loss of
generality. The oracle scans ``(P2, P3) in [-10, 10]^2`` and
``Q in (0, 10]`` and tests negative definiteness through the leading
principal minors of the 3x3 matrix (signs ``-, +, -``). It shares no code
with the semidefinite solver and is only meant for cross-checking it.
"""

import math

import numpy as np

__all__ = ["scalar_theta_feasible", "oracle_grid", "compare_with_oracle"]


def _grids(points, q_points):
    p = np.linspace(-10.0, 10.0, points)
    q = np.linspace(10.0 / q_points, 10.0, q_points)
    return p, q


def scalar_theta_feasible(m, n, D0, delta, kappa, points=201, q_points=80):
    """Whether some grid point makes the scalar Theta negative definite.

    Parameters
    ----------
    m, n : float
        Scalar ``M`` and ``N``.
    D0, delta, kappa : float
    points, q_points : int
        Grid sizes for ``P2``/``P3`` and for ``Q``.
    """
    p, qs = _grids(points, q_points)
    p2, p3 = np.meshgrid(p, p, indexing="ij")
    a = 2.0 * kappa + 2.0 * m * p2
    b = 1.0 - p2 + m * p3
    c = delta * p2 * n
    e = delta * p3 * n
    ok1 = a < 0
    if not np.any(ok1):
        return False
    decay = math.exp(-2.0 * kappa * D0)
    for q in qs:
        d = -2.0 * p3 + 2.0 * delta * q
        f = -delta * decay * q
        minor2 = a * d - b * b
        # 3x3 determinant of [[a, b, c], [b, d, e], [c, e, f]]
        det3 = a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c)
        if np.any(ok1 & (minor2 > 0) & (det3 < 0)):
            return True
    return False


def oracle_grid(m, n, D0, deltas, kappas, **kw):
    """Oracle verdicts on a ``len(deltas) x len(kappas)`` grid."""
    return np.array([[scalar_theta_feasible(m, n, D0, d, k, **kw) for k in kappas]
                     for d in deltas])


def _boundary_band(verdicts):
    """Cells with a 4-neighbour of the opposite verdict."""
    band = np.zeros_like(verdicts, dtype=bool)
    rows, cols = verdicts.shape
    for i in range(rows):
        for j in range(cols):
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < rows and 0 <= b < cols and verdicts[a, b] != verdicts[i, j]:
                    band[i, j] = True
    return band


def compare_with_oracle(solver_verdicts, oracle_verdicts):
    """Disagreements outside the one-cell band around the oracle boundary.

    Returns
    -------
    outside : int
        Disagreements that are not excused by the band.
    total : int
        All disagreements.
    """
    solver_verdicts = np.asarray(solver_verdicts, dtype=bool)
    oracle_verdicts = np.asarray(oracle_verdicts, dtype=bool)
    diff = solver_verdicts != oracle_verdicts
    band = _boundary_band(oracle_verdicts)
    return int(np.sum(diff & ~band)), int(np.sum(diff))
