"""Dense linear-algebra kernels for small real and complex systems.

Everything here works on plain ``numpy`` arrays. The matrices handled by the
package are tiny (order 20 at most), so clarity wins over speed throughout.
"""

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, PlacementError, PreconditionError, SymmetryError

__all__ = [
    "as_matrix",
    "mat_exp",
    "spectrum",
    "spectral_abscissa",
    "induced_norm2",
    "solve_lyapunov_identity",
    "realify",
    "place_poles",
    "controllability_matrix",
    "controllability_rank",
    "symmetric_extremal_eigs",
]


def as_matrix(a, name="matrix", square=False):
    """Convert `a` to a finite 2-D array (vectors become columns)."""
    arr = np.asarray(a)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def mat_exp(A, t=1.0):
    """Return ``expm(t * A)``.

    Uses scipy's scaling-and-squaring Padé implementation, which keeps the
    relative 2-norm error near machine precision for the moderate norms
    encountered here.
    """
    A = as_matrix(A, "A", square=True)
    return scipy.linalg.expm(float(t) * A)


def spectrum(A):
    """Eigenvalues of a square matrix, sorted by (real, imag)."""
    A = as_matrix(A, "A", square=True)
    ev = np.linalg.eigvals(A).astype(complex)
    return ev[np.lexsort((ev.imag, ev.real))]


def spectral_abscissa(A):
    """Largest real part over the spectrum of `A`."""
    return float(np.max(spectrum(A).real))


def induced_norm2(A):
    """Spectral norm (largest singular value)."""
    A = as_matrix(A, "A")
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def solve_lyapunov_identity(M):
    """Solve ``M.T @ P + P @ M = -I`` for a Hurwitz `M`.

    The equation is vectorized into an ``n**2`` linear system, which is
    plenty for the matrix orders used in this package.

    Raises
    ------
    PreconditionError
        If `M` is not Hurwitz.
    """
    M = as_matrix(M, "M", square=True)
    if spectral_abscissa(M) >= 0:
        raise PreconditionError("Lyapunov solve requires a Hurwitz matrix")
    n = M.shape[0]
    eye = np.eye(n)
    # column-major vec: vec(M^T P) = (I kron M^T) vec P, vec(P M) = (M^T kron I) vec P
    op = np.kron(eye, M.T) + np.kron(M.T, eye)
    p = np.linalg.solve(op, -eye.reshape(-1, order="F"))
    P = p.reshape(n, n, order="F")
    if np.iscomplexobj(P) and np.allclose(P.imag, 0.0):
        P = P.real
    return 0.5 * (P + P.conj().T)


def realify(M):
    """Real embedding ``[[Re M, -Im M], [Im M, Re M]]`` of a complex matrix."""
    M = np.asarray(M, dtype=complex)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    re, im = M.real, M.imag
    return np.block([[re, -im], [im, re]])


def controllability_matrix(A, B):
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError("A and B must have the same number of rows")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def controllability_rank(A, B, rtol=1e-9):
    """Rank of ``[B, AB, ..., A^(n-1) B]``.

    Singular values below ``rtol`` times the largest one count as zero.
    """
    sv = np.linalg.svd(controllability_matrix(A, B), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def symmetric_extremal_eigs(P, tol=1e-12):
    """Return ``(lambda_min, lambda_max)`` of a symmetric matrix."""
    P = as_matrix(P, "P", square=True)
    scale = max(1.0, float(np.max(np.abs(P))))
    if np.max(np.abs(P - P.T)) > tol * scale:
        raise SymmetryError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(0.5 * (P + P.T))
    return float(ev[0]), float(ev[-1])


# --------------------------------------------------------------------------
# pole placement


def _sorted_targets(targets):
    # Repeated values end up adjacent, which the cyclic parameter pattern
    # relies on.
    t = np.asarray(targets, dtype=complex).ravel()
    return t[np.lexsort((np.abs(t.imag), t.real))]


def _same_multiset(a, b, tol):
    a = list(np.asarray(a, dtype=complex))
    for z in np.asarray(b, dtype=complex):
        if not a:
            return False
        j = int(np.argmin([abs(z - w) for w in a]))
        if abs(z - a[j]) > tol:
            return False
        a.pop(j)
    return not a


def _is_conjugate_closed(t, tol=1e-9):
    return _same_multiset(t, np.conj(t), tol)


def _ackermann(A, b, targets):
    n = A.shape[0]
    coeffs = np.poly(targets)
    if _is_conjugate_closed(targets):
        coeffs = coeffs.real
    pA = np.zeros_like(A, dtype=np.result_type(A, coeffs))
    for c in coeffs:
        pA = pA @ A + c * np.eye(n)
    C = controllability_matrix(A, b)
    last = np.zeros(n)
    last[-1] = 1.0
    return -np.linalg.solve(C.T, last) @ pA


def _real_block_form(targets):
    """Real quasi-diagonal matrix with the given conjugate-closed spectrum."""
    n = len(targets)
    lam = np.zeros((n, n))
    rest = list(targets)
    i = 0
    while rest:
        z = rest.pop(0)
        if abs(z.imag) < 1e-12:
            lam[i, i] = z.real
            i += 1
            continue
        j = int(np.argmin([abs(np.conj(z) - w) for w in rest]))
        rest.pop(j)
        a, b = z.real, abs(z.imag)
        lam[i:i + 2, i:i + 2] = [[a, b], [-b, a]]
        i += 2
    return lam


def _sylvester_gain(A, B, targets, real):
    n, m = B.shape
    if real:
        lam = _real_block_form(list(targets))
    else:
        lam = np.diag(targets)
    # fixed parameter pattern: column j is the unit vector e_(j mod m)
    G = np.zeros((m, n))
    G[np.arange(n) % m, np.arange(n)] = 1.0
    X = scipy.linalg.solve_sylvester(A, -lam, -B @ G)
    if np.linalg.cond(X) > 1e12:
        raise PlacementError("Sylvester solution is singular for this target set")
    return G @ np.linalg.inv(X)


def place_poles(A, B, targets, tol=1e-6):
    """State-feedback gain `K` such that ``A + B K`` has the target spectrum.

    The gain is a deterministic function of the inputs:

    * if the targets already equal the spectrum of `A`, ``K = 0``;
    * single input: Ackermann's formula (the gain is unique);
    * multiple inputs: the Sylvester-equation method ``A X - X L = -B G``,
      ``K = G X^{-1}``, where ``L`` has the target spectrum (real block form
      when the data are real) and ``G`` is the fixed pattern whose column
      ``j`` is the unit vector ``e_(j mod m)``.

    When some target coincides with an eigenvalue of `A` (and the shortcut
    does not apply) the Sylvester equation is singular, so the spectrum is
    first shifted by a preliminary placement and the two gains are summed.

    Parameters
    ----------
    A : (n, n) array_like
    B : (n, m) array_like
    targets : sequence of n complex
        Must be closed under conjugation when `A` and `B` are real.
    tol : float
        Accepted eigenvalue mismatch after placement.

    Returns
    -------
    K : (m, n) ndarray
        Real whenever `A`, `B` are real.

    Raises
    ------
    PlacementError
        Uncontrollable pair, inconsistent targets, or failed verification.
    """
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B")
    n, m = B.shape
    if A.shape[0] != n:
        raise DimensionError("A and B must have the same number of rows")
    targets = _sorted_targets(targets)
    if targets.size != n:
        raise PlacementError(f"need {n} target poles, got {targets.size}")
    real = not (np.iscomplexobj(A) or np.iscomplexobj(B))
    if real and not _is_conjugate_closed(targets):
        raise PlacementError("targets must be closed under conjugation for real data")
    if controllability_rank(A, B) < n:
        raise PlacementError("(A, B) is not controllable")

    sp_a = spectrum(A)
    if _same_multiset(sp_a, targets, 1e-9):
        return np.zeros((m, n), dtype=A.dtype if not real else float)

    if m == 1:
        K = _ackermann(A, B, targets)
        K = np.atleast_2d(K)
    else:
        gap = min(abs(z - w) for z in targets for w in sp_a)
        if gap > 1e-8:
            K = _sylvester_gain(A, B, targets, real)
        else:
            shift = 1.0 + float(np.max(np.abs(np.concatenate([targets, sp_a]))))
            K0 = _sylvester_gain(A, B, targets - shift, real)
            K = K0 + _sylvester_gain(A + B @ K0, B, targets, real)
    if real:
        K = np.real(K)
    achieved = spectrum(A + B @ K)
    scale = max(1.0, float(np.max(np.abs(targets))))
    if not _same_multiset(achieved, targets, tol * scale):
        raise PlacementError("placement verification failed (ill-conditioned targets?)")
    return K
