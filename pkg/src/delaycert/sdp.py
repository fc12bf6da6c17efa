"""Small dense semidefinite feasibility via max-eigenvalue minimization.

The problem solved is ::

    minimize t  subject to  F_i(x) = C_i + sum_k x_k F_ik  <=  t I   for all i

with a log-det barrier path-following method (damped Newton centering,
geometric increase of the barrier weight). After centering at weight ``s``
the duality gap is at most ``m / s`` where ``m`` is the total block order,
which is how the ``tol_gap`` guarantee is met.

Callers never have to trust the solver: the returned witness is always the
decision vector itself, and the reported margin is recomputed from it.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "SymmetricBlock",
    "AffineSymmetricMap",
    "Status",
    "FeasibilityOutcome",
    "minimize_max_eig",
    "DEFAULT_TOL_GAP",
    "STRICTNESS_THRESHOLD",
    "UNBOUNDED_CLAMP",
]

DEFAULT_TOL_GAP = 1e-7
STRICTNESS_THRESHOLD = 1e-8
UNBOUNDED_CLAMP = -1e6


@dataclass(frozen=True)
class SymmetricBlock:
    """One diagonal block ``constant + sum_k x_k * coefficients[k]``."""

    constant: np.ndarray
    coefficients: np.ndarray  # shape (decision_dim, order, order)

    def __post_init__(self):
        c = np.asarray(self.constant, dtype=float)
        f = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("block constant must be square")
        if f.ndim != 3 or f.shape[1:] != c.shape:
            raise ValueError("coefficient matrices must match the block order")
        for mat in (c, *f):
            if np.max(np.abs(mat - mat.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(mat), initial=0.0)):
                raise ValueError("block matrices must be symmetric")
        object.__setattr__(self, "constant", 0.5 * (c + c.T))
        object.__setattr__(self, "coefficients", 0.5 * (f + f.transpose(0, 2, 1)))

    @property
    def order(self):
        return self.constant.shape[0]

    def evaluate(self, x):
        return self.constant + np.tensordot(x, self.coefficients, axes=1)


@dataclass(frozen=True)
class AffineSymmetricMap:
    decision_dim: int
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for b in self.blocks:
            if b.coefficients.shape[0] != self.decision_dim:
                raise ValueError("every block needs one coefficient per decision coordinate")

    @property
    def total_order(self):
        return sum(b.order for b in self.blocks)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return [b.evaluate(x) for b in self.blocks]

    def max_eig(self, x):
        """Largest eigenvalue over all blocks at `x`."""
        return max(float(np.linalg.eigvalsh(F)[-1]) for F in self.evaluate(x))

    def substitute(self, offset, T):
        """Map in new coordinates ``z`` with ``x = offset + T @ z``."""
        offset = np.asarray(offset, dtype=float)
        T = np.asarray(T, dtype=float)
        if offset.shape != (self.decision_dim,) or T.ndim != 2 or T.shape[0] != self.decision_dim:
            raise ValueError("substitution does not match the decision dimension")
        blocks = [SymmetricBlock(b.evaluate(offset), np.tensordot(T.T, b.coefficients, axes=1))
                  for b in self.blocks]
        return AffineSymmetricMap(T.shape[1], blocks)


class Status(str, Enum):
    STRICTLY_FEASIBLE = "strictly_feasible"
    MARGINAL = "marginal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class FeasibilityOutcome:
    status: Status
    margin: float
    witness: np.ndarray
    lower_bound: float = -np.inf
    iterations: int = 0
    clamped: bool = False
    info: dict = field(default_factory=dict)


def _classify(margin, lower_bound, tol_gap, strictness):
    if margin < -strictness:
        return Status.STRICTLY_FEASIBLE
    if lower_bound > tol_gap:
        return Status.INFEASIBLE
    if margin <= tol_gap:
        return Status.MARGINAL
    return Status.INFEASIBLE


class _Barrier:
    """Log-det barrier of ``t I - F_i(x)`` together with its derivatives.

    A ball term ``-log(R**2 - |x|**2)`` keeps every centering problem
    bounded even when the map has recession directions.
    """

    def __init__(self, amap, radius):
        self.map = amap
        self.r2 = radius ** 2
        d = amap.decision_dim
        # derivative of S_i = t I - F_i(x) with respect to (x, t)
        self.dS = []
        for b in amap.blocks:
            g = np.empty((d + 1, b.order, b.order))
            g[:d] = -b.coefficients
            g[d] = np.eye(b.order)
            self.dS.append(g)

    def slacks(self, y):
        x, t = y[:-1], y[-1]
        return [t * np.eye(b.order) - b.evaluate(x) for b in self.map.blocks]

    @staticmethod
    def _chol(S):
        try:
            return np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None

    def log_barrier(self, y):
        """``-log(room) - sum log det S_i`` or ``inf`` outside the domain."""
        room = self.r2 - y[:-1] @ y[:-1]
        if room <= 0:
            return np.inf
        total = -np.log(room)
        for S in self.slacks(y):
            L = self._chol(S)
            if L is None:
                return np.inf
            total -= 2.0 * np.sum(np.log(np.diag(L)))
        return total

    def newton(self, y, s):
        n = y.size
        grad = np.zeros(n)
        grad[-1] = s
        hess = np.zeros((n, n))
        x = y[:-1]
        room = self.r2 - x @ x
        grad[:-1] += 2.0 * x / room
        hess[:-1, :-1] += 2.0 * np.eye(n - 1) / room + 4.0 * np.outer(x, x) / room ** 2
        for S, dS in zip(self.slacks(y), self.dS):
            L = np.linalg.cholesky(S)
            Linv = np.linalg.inv(L)
            W = Linv @ dS @ Linv.T
            grad -= np.trace(W, axis1=1, axis2=2)
            Wf = W.reshape(n, -1)
            hess += Wf @ Wf.T
        return grad, hess


def _newton_direction(grad, hess):
    scale = np.sqrt(np.maximum(np.diag(hess), 1e-300))
    Hs = hess / np.outer(scale, scale)
    gs = grad / scale
    # tiny ridge keeps free (unbounded) directions solvable
    Hs = Hs + 1e-12 * np.eye(len(gs))
    try:
        step = -np.linalg.solve(Hs, gs)
    except np.linalg.LinAlgError:
        step = -np.linalg.lstsq(Hs, gs, rcond=None)[0]
    return step / scale


def minimize_max_eig(amap, tol_gap=DEFAULT_TOL_GAP, max_iters=500, x0=None,
                     strictness=STRICTNESS_THRESHOLD, clamp=UNBOUNDED_CLAMP,
                     decide_at=None, radius=1e7):
    """Minimize the largest eigenvalue of an affine block-diagonal map.

    Parameters
    ----------
    amap : AffineSymmetricMap
    tol_gap : float
        Absolute accuracy on the optimal margin.
    max_iters : int
        Budget of Newton steps; exhausting it yields ``NUMERICAL_FAILURE``.
    x0 : array_like, optional
        Starting decision vector (any point works; zero by default).
    strictness : float
        Margin below ``-strictness`` counts as strictly feasible.
    clamp : float
        Stop as soon as the margin drops below this (unbounded problems).
    decide_at : float, optional
        When given, stop as soon as the sign of ``margin - decide_at`` is
        settled: either a witness with margin below it is found, or the
        centered lower bound exceeds it. The outcome then only certifies
        that sign, not the ``tol_gap`` accuracy.
    radius : float
        Decision vectors are confined to the ball of this radius, which
        must exceed ``abs(clamp)`` for the clamp to be reachable on
        unbounded problems.

    Returns
    -------
    FeasibilityOutcome
    """
    if tol_gap <= 0:
        raise ValueError("tol_gap must be positive")
    d = amap.decision_dim
    m = amap.total_order
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.append(x, amap.max_eig(x) + 1.0)
    if x @ x >= radius ** 2:
        raise ValueError("x0 lies outside the search ball")
    barrier = _Barrier(amap, radius)

    def finish(status_hint, lb, iters, clamped=False):
        witness = y[:-1].copy()
        margin = amap.max_eig(witness)
        status = status_hint or _classify(margin, lb, tol_gap, strictness)
        return FeasibilityOutcome(status, margin, witness, lb, iters, clamped,
                                  {"barrier_weight": s})

    s = max(1.0, m / max(1.0, abs(y[-1])))
    iters = 0
    lb = -np.inf
    while True:
        # centering
        centered = False
        while iters < max_iters:
            iters += 1
            grad, hess = barrier.newton(y, s)
            step = _newton_direction(grad, hess)
            decrement = float(-grad @ step)
            if decrement < 1e-6:
                centered = True
                break
            phi0 = barrier.log_barrier(y)
            alpha = 1.0
            moved = False
            while alpha > 1e-12:
                y_new = y + alpha * step
                # objective difference kept in relative form; absolute values
                # of s * t swamp the decrement once s is large
                change = s * alpha * step[-1] + (barrier.log_barrier(y_new) - phi0)
                if change <= -0.25 * alpha * decrement and change < -1e-13 * (1.0 + abs(phi0)):
                    moved = True
                    break
                alpha *= 0.5
            if not moved:
                # no representable progress left: centered as far as
                # floating point allows
                centered = decrement < 1e-4
                break
            y = y_new
            if y[-1] < clamp:
                y[-1] = amap.max_eig(y[:-1])
                if y[-1] < clamp:
                    return finish(Status.STRICTLY_FEASIBLE, -np.inf, iters, clamped=True)
            if decide_at is not None and y[-1] < decide_at:
                witness_margin = amap.max_eig(y[:-1])
                if witness_margin < decide_at:
                    return finish(None, lb, iters)
        if not centered:
            return finish(Status.NUMERICAL_FAILURE, lb, iters)
        lb = y[-1] - m / s
        if m / s <= tol_gap:
            return finish(None, lb, iters)
        if decide_at is not None and lb > decide_at:
            return finish(None, lb, iters)
        s *= 8.0
