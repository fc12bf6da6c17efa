"""Closed-loop simulation of predictor feedback under time-varying input delay.

The plant ``x' = A x + B u(t - D(t))`` is integrated with classical RK4 on a
uniform grid. The controller

    u(t) = phi(t) K z(t),   z(t) = e^{D0 A} x(t) + int_{t-D0}^{t} e^{(t-s)A} B u(s) ds

is evaluated at every grid point, the integral by the composite trapezoidal
rule on the same grid. The same loop serves the modal PDE simulation, where
the controller only observes the leading modes.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .exceptions import DimensionError, DivergenceError

__all__ = [
    "DelaySignal",
    "TransitionSignal",
    "quintic_transition",
    "HistoryBuffer",
    "Trajectory",
    "default_step",
    "simulate_closed_loop",
    "artstein_transform",
    "simulate_z_ode",
    "fit_decay",
    "fit_log_linear",
]

# states beyond this magnitude are treated as diverged (avoids overflow noise)
_BLOWUP = 1e100


# --------------------------------------------------------------------------
# signals


@dataclass(frozen=True)
class DelaySignal:
    """Time-varying input delay ``D(t)``.

    ``kind`` is one of ``"constant"``, ``"sinusoid"`` (``D0 + amplitude *
    sin(omega t + phase)``) or ``"table"`` (linear interpolation of
    ``(time, value)`` samples, held constant outside the table).
    """

    kind: str
    D0: float
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    table: tuple = None

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid", "table"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if not self.D0 > 0:
            raise ValueError("D0 must be positive")
        if self.kind == "table":
            if self.table is None:
                raise ValueError("table delay needs (time, value) samples")
            arr = np.asarray(self.table, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
                raise ValueError("table must be a sequence of (time, value) pairs")
            if np.any(np.diff(arr[:, 0]) <= 0):
                raise ValueError("table times must be strictly increasing")
            object.__setattr__(self, "table", tuple(map(tuple, arr)))
        if self.delta >= 2 * self.D0:
            raise ValueError("delay range must stay inside (0, 2 D0)")
        if self.lower_bound <= 0:
            raise ValueError("delay must stay positive")

    @classmethod
    def constant(cls, D0):
        return cls("constant", D0)

    @classmethod
    def sinusoid(cls, D0, amplitude, omega, phase=0.0):
        return cls("sinusoid", D0, amplitude, omega, phase)

    @property
    def delta(self):
        """Largest deviation ``|D(t) - D0|``."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "sinusoid":
            return abs(self.amplitude)
        vals = np.array(self.table)[:, 1]
        return float(np.max(np.abs(vals - self.D0)))

    @property
    def lower_bound(self):
        if self.kind == "table":
            return float(np.min(np.array(self.table)[:, 1]))
        return self.D0 - self.delta

    def __call__(self, t):
        if self.kind == "constant":
            return np.full_like(np.asarray(t, dtype=float), self.D0)[()]
        if self.kind == "sinusoid":
            return self.D0 + self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase)
        tab = np.array(self.table)
        return np.interp(t, tab[:, 0], tab[:, 1])


def quintic_transition(t, t0, derivative=False):
    """Smooth ramp ``10 s^3 - 15 s^4 + 6 s^5`` with ``s = clip(t / t0, 0, 1)``.

    With ``derivative=True`` the pair ``(phi, dphi/dt)`` is returned.
    """
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    s = np.clip(np.asarray(t, dtype=float) / t0, 0.0, 1.0)
    val = s ** 3 * (10.0 + s * (-15.0 + 6.0 * s))
    if not derivative:
        return val[()]
    # 30 s^2 (1 - s)^2 / t0 vanishes at both clip points, so no masking needed
    der = 30.0 * s ** 2 * (1.0 - s) ** 2 / t0
    return val[()], der[()]


@dataclass(frozen=True)
class TransitionSignal:
    t0: float

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")

    def __call__(self, t):
        return quintic_transition(t, self.t0)

    def with_derivative(self, t):
        return quintic_transition(t, self.t0, derivative=True)


# --------------------------------------------------------------------------
# history


class HistoryBuffer:
    """Uniformly sampled vector signal with random-access lookup.

    Values before ``origin`` are zero (zero initial history). Lookups use
    cubic Hermite interpolation with the stored derivative samples, except on
    the first interval where linear interpolation is used.

    Parameters
    ----------
    step : float
    dim : int
    origin : float
    capacity : int, optional
        Preallocated number of samples (grows as needed).
    """

    def __init__(self, step, dim, origin=0.0, capacity=1024):
        if not step > 0:
            raise ValueError("step must be positive")
        self.step = float(step)
        self.origin = float(origin)
        self.dim = int(dim)
        self._vals = np.zeros((max(capacity, 2), self.dim))
        self._ders = np.zeros_like(self._vals)
        self.size = 0

    def append(self, value, deriv):
        if self.size == self._vals.shape[0]:
            self._vals = np.concatenate([self._vals, np.zeros_like(self._vals)])
            self._ders = np.concatenate([self._ders, np.zeros_like(self._ders)])
        self._vals[self.size] = value
        self._ders[self.size] = deriv
        self.size += 1

    @property
    def values(self):
        return self._vals[:self.size]

    @property
    def derivatives(self):
        return self._ders[:self.size]

    @property
    def end(self):
        return self.origin + (self.size - 1) * self.step

    def sample(self, k):
        """Stored sample ``k`` (grid time ``origin + k * step``); zero for ``k < 0``."""
        if k < 0:
            return np.zeros(self.dim)
        if k >= self.size:
            raise IndexError(f"sample {k} not stored yet")
        return self._vals[k]

    def __call__(self, t):
        rel = (t - self.origin) / self.step
        if rel <= 0.0:
            if rel < 0.0:
                return np.zeros(self.dim)
            return self._vals[0].copy() if self.size else np.zeros(self.dim)
        last = self.size - 1
        if rel > last + 1e-9:
            raise ValueError(f"lookup at t={t:g} beyond stored history (end {self.end:g})")
        i = min(int(math.floor(rel)), last - 1) if last > 0 else 0
        if last == 0:
            return self._vals[0].copy()
        s = rel - i
        y0, y1 = self._vals[i], self._vals[i + 1]
        if i == 0:
            return (1.0 - s) * y0 + s * y1
        h = self.step
        d0, d1 = self._ders[i], self._ders[i + 1]
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
                + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Sampled closed-loop run.

    Attributes
    ----------
    t : (K,) ndarray
    x, u, z : (K, n), (K, m), (K, n_z) ndarray
        Plant state, controller output ``u(t)`` and transformed state.
    D, phi : (K,) ndarray
        Delay and transition signal on the grid.
    u_delayed : (K, m) ndarray
        Plant input ``u(t - D(t))``.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    D: np.ndarray
    phi: np.ndarray
    u_delayed: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def decay_signal(self):
        return np.linalg.norm(self.x, axis=1) + np.linalg.norm(self.u, axis=1)

    def columns(self):
        names = ["t"]
        names += [f"x_{i + 1}" for i in range(self.x.shape[1])]
        names += [f"u_{i + 1}" for i in range(self.u.shape[1])]
        names += [f"z_{i + 1}" for i in range(self.z.shape[1])]
        names += ["D", "phi"]
        data = np.column_stack([self.t, self.x, self.u, self.z, self.D, self.phi])
        return names, data

    def to_csv(self, path):
        names, data = self.columns()
        write_csv(path, names, data)


def write_csv(path, header, rows):
    """Write numeric rows with 15 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if (isinstance(v, float) and math.isnan(v)) else f"{v:.15g}" for v in row])


# --------------------------------------------------------------------------
# simulation engine


def default_step(t0, D0, delta):
    """``min(t0, D0 - delta) / 50``."""
    return min(t0, D0 - delta) / 50.0


def _steps(length, h, name):
    k = length / h
    n = int(round(k))
    if n < 1 or abs(k - n) > 1e-9 * max(1.0, k):
        raise ValueError(f"h={h:g} must divide {name}={length:g}")
    return n


def _check_step(h, D0, delay, t0, T):
    if not h > 0:
        raise ValueError("h must be positive")
    if delay.D0 != D0:
        raise ValueError("delay signal nominal value differs from D0")
    if h > (D0 - delay.delta) / 10.0 + 1e-15:
        raise ValueError(f"h={h:g} exceeds (D0 - delta)/10 = {(D0 - delay.delta) / 10:g}")
    return _steps(D0, h, "D0"), _steps(t0, h, "t0"), _steps(T, h, "T")


class _PredictorLoop:
    """Shared fixed-step engine.

    The plant ``(Ap, Bp)`` may be larger than the controller model
    ``(Ac, Bc)``; the controller observes ``C @ x``.
    """

    def __init__(self, Ap, Bp, Ac, Bc, C, K, D0, delay, phi, h):
        self.Ap, self.Bp, self.Ac, self.Bc, self.C, self.K = Ap, Bp, Ac, Bc, C, K
        self.D0, self.delay, self.phi, self.h = D0, delay, phi, h
        self.nD = _steps(D0, h, "D0")
        self.E0 = linalg.mat_exp(Ac, D0)
        # kernel e^{jhA} B for j = 0..nD, j = age of the sample
        self.kernel = np.array([linalg.mat_exp(Ac, j * h) @ Bc for j in range(self.nD + 1)])
        self.weights = np.full(self.nD + 1, h)
        self.weights[0] = self.weights[-1] = 0.5 * h
        self.E0B = self.E0 @ Bc

    def run(self, x0, n_steps):
        Ap, Bp, C, K, h = self.Ap, self.Bp, self.C, self.K, self.h
        m = Bp.shape[1]
        buf = HistoryBuffer(h, m, capacity=n_steps + 2)
        n_rec = n_steps + 1
        t_arr = h * np.arange(n_rec)
        xs = np.zeros((n_rec, Ap.shape[0]))
        us = np.zeros((n_rec, m))
        zs = np.zeros((n_rec, self.Ac.shape[0]))
        ud = np.zeros((n_rec, m))
        x = np.asarray(x0, dtype=float).copy()
        # padded input history: index nD + k holds u at grid k
        u_pad = np.zeros((self.nD + n_rec, m))
        eye_m = np.eye(m)
        delay = self.delay

        def rhs(t, x):
            return Ap @ x + Bp @ buf(t - delay(t))

        for k in range(n_rec):
            t = t_arr[k]
            if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > _BLOWUP:
                raise DivergenceError(f"state diverged before t={t:g}", time=t_arr[k - 1] if k else 0.0)
            phi, dphi = self.phi.with_derivative(t)
            y = C @ x
            # trapezoid over ages 1..nD uses stored samples; age 0 is u itself
            past = u_pad[k + self.nD - np.arange(1, self.nD + 1)]
            rest = np.einsum("j,jnm,jm->n", self.weights[1:], self.kernel[1:], past)
            base = self.E0 @ y + rest
            lhs = eye_m - phi * self.weights[0] * K @ self.kernel[0]
            u = np.linalg.solve(lhs, phi * (K @ base))
            z = base + self.weights[0] * self.kernel[0] @ u
            u_tilde = buf(t - delay(t)) if k else np.zeros(m)
            # derivative of u for Hermite lookups
            ydot = C @ (Ap @ x + Bp @ u_tilde)
            zdot = (self.E0 @ ydot + self.Bc @ u - self.E0B @ u_pad[k]
                    + self.Ac @ (z - self.E0 @ y))
            udot = dphi * (K @ z) + phi * (K @ zdot)
            buf.append(u, udot)
            u_pad[k + self.nD] = u
            xs[k], us[k], zs[k], ud[k] = x, u, z, u_tilde
            if k == n_rec - 1:
                break
            k1 = rhs(t, x)
            k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = rhs(t + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return t_arr, xs, us, zs, ud, buf


def _system(A, B, K):
    A = linalg.as_matrix(A, "A", square=True)
    B = linalg.as_matrix(B, "B")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if B.shape[0] != A.shape[0] or K.shape != (B.shape[1], A.shape[0]):
        raise DimensionError("incompatible shapes for A, B, K")
    if np.iscomplexobj(A) or np.iscomplexobj(B):
        raise DimensionError("simulation expects real data; realify complex systems first")
    return A, B, K


def simulate_closed_loop(A, B, K, D0, delay, phi, x0, T, h=None):
    """Simulate ``x' = A x + B u(t - D(t))`` under the predictor controller.

    Parameters
    ----------
    A, B, K : array_like
        Plant and gain; ``A + B K`` need not be Hurwitz (no check is made).
    D0 : float
        Nominal delay used by the predictor.
    delay : DelaySignal
    phi : TransitionSignal
    x0 : array_like
    T : float
        Final time.
    h : float, optional
        Step; defaults to :func:`default_step`. It must divide ``D0``,
        ``t0`` and ``T`` and satisfy ``h <= (D0 - delta) / 10``.

    Returns
    -------
    Trajectory

    Raises
    ------
    DivergenceError
        If the state stops being finite.
    """
    A, B, K = _system(A, B, K)
    if h is None:
        h = default_step(phi.t0, D0, delay.delta)
    _, _, n_steps = _check_step(h, D0, delay, phi.t0, T)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != A.shape[0]:
        raise DimensionError("x0 has the wrong length")
    loop = _PredictorLoop(A, B, A, B, np.eye(A.shape[0]), K, D0, delay, phi, h)
    t, xs, us, zs, ud, _ = loop.run(x0, n_steps)
    return Trajectory(t, xs, us, zs, np.asarray(delay(t), dtype=float), phi(t), ud,
                      meta={"h": h, "D0": D0, "delta": delay.delta})


def artstein_transform(x_t, u_hist, A, B, D0, t):
    """``e^{D0 A} x(t) + int_{t-D0}^{t} e^{(t-s)A} B u(s) ds`` by trapezoid.

    Parameters
    ----------
    x_t : array_like
    u_hist : HistoryBuffer
        Must hold samples up to ``t``; the quadrature nodes are its grid.
    A, B : array_like
    D0, t : float
    """
    A = linalg.as_matrix(A, "A", square=True)
    B = linalg.as_matrix(B, "B")
    h = u_hist.step
    nD = _steps(D0, h, "D0")
    k = (t - u_hist.origin) / h
    kt = int(round(k))
    if abs(k - kt) > 1e-9 * max(1.0, abs(k)):
        raise ValueError("t must lie on the history grid")
    if kt >= u_hist.size:
        raise ValueError("history does not cover [t - D0, t]")
    total = linalg.mat_exp(A, D0) @ np.asarray(x_t, dtype=float).ravel()
    for j in range(nD + 1):
        w = 0.5 * h if j in (0, nD) else h
        total = total + w * linalg.mat_exp(A, j * h) @ B @ u_hist.sample(kt - j)
    return total


def simulate_z_ode(A, B, K, D0, delay, phi, z0, T, h=None, z_history=None):
    """Integrate the transformed dynamics directly.

    ``z' = (A + phi B K) z + e^{D0 A} B K ([phi z](t - D(t)) - [phi z](t - D0))``

    Used to cross-check :func:`simulate_closed_loop`. ``z_history`` (callable
    of ``t < 0``) only matters through ``phi``, which vanishes for ``t <= 0``,
    so it is accepted for completeness and ignored by the zero default.

    Returns
    -------
    t : (K,) ndarray
    z : (K, n) ndarray
    """
    A, B, K = _system(A, B, K)
    if h is None:
        h = default_step(phi.t0, D0, delay.delta)
    _, _, n_steps = _check_step(h, D0, delay, phi.t0, T)
    n = A.shape[0]
    BK = B @ K
    G = linalg.mat_exp(A, D0) @ BK
    buf = HistoryBuffer(h, n, capacity=n_steps + 2)

    def w_at(s):
        # [phi z](s); seed history before 0 is multiplied by phi(s) = 0
        if s < 0 and z_history is not None:
            return phi(s) * np.asarray(z_history(s), dtype=float)
        return buf(s)

    def rhs(t, z):
        return (A + phi(t) * BK) @ z + G @ (w_at(t - delay(t)) - w_at(t - D0))

    z = np.asarray(z0, dtype=float).ravel().copy()
    ts = h * np.arange(n_steps + 1)
    out = np.zeros((n_steps + 1, n))
    for k, t in enumerate(ts):
        if not np.all(np.isfinite(z)) or np.max(np.abs(z), initial=0.0) > _BLOWUP:
            raise DivergenceError(f"z diverged before t={t:g}", time=ts[k - 1] if k else 0.0)
        p, dp = phi.with_derivative(t)
        dz = rhs(t, z) if k else (A + p * BK) @ z
        buf.append(p * z, dp * z + p * dz)
        out[k] = z
        if k == n_steps:
            break
        k1 = rhs(t, z)
        k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2)
        k4 = rhs(t + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return ts, out


# --------------------------------------------------------------------------
# decay estimation


def fit_log_linear(t, values, t_start, t_end, min_samples=10):
    """Least-squares fit of ``log(values)`` against ``t`` on a window.

    If the values stop being positive inside the window, the window ends at
    the last positive sample before that point.

    Returns
    -------
    rate : float
        Negated slope.
    log_intercept : float
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t_start >= t_end or t_start < t[0] - 1e-12 or t_end > t[-1] + 1e-12:
        raise ValueError("fit window must lie inside the trajectory")
    mask = (t >= t_start - 1e-12) & (t <= t_end + 1e-12)
    idx = np.flatnonzero(mask)
    bad = np.flatnonzero(~(values[idx] > 0))
    if bad.size:
        idx = idx[:bad[0]]
    if idx.size < min_samples:
        raise ValueError(f"need at least {min_samples} positive samples in the window, got {idx.size}")
    slope, intercept = np.polyfit(t[idx], np.log(values[idx]), 1)
    return float(-slope), float(intercept)


def fit_decay(traj, t_start, t_end):
    """Decay rate of ``|x(t)| + |u(t)|`` on ``[t_start, t_end]``.

    `traj` is any object with a time grid ``t`` and a ``decay_signal()``
    method (both trajectory types of the package qualify).
    """
    return fit_log_linear(traj.t, traj.decay_signal(), t_start, t_end)
