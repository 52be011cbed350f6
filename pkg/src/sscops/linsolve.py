"""Dense matrix kernels.

Decompositions, Sylvester/Lyapunov/Riccati solvers, matrix exponential and
numerical rank, shared by every other module.  All functions are pure: they
never mutate their arguments and keep no global state.

The Sylvester solver reduces both coefficient matrices to complex Schur
form once and runs a triangular back-substitution recurrence.  That
recurrence is the hottest loop in the library and lives in the compiled
kernel (with a pure fallback) selected by ``sscops._backend``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _backend
from .errors import (
    NonSquare,
    NotHurwitz,
    NotStabilizable,
    NumericalFailure,
    RiccatiDivergence,
    SpectraOverlap,
)

__all__ = [
    "Spectrum",
    "eigenvalues",
    "spectral_gap",
    "check_spectral_gap",
    "SylvesterOperator",
    "solve_sylvester",
    "solve_lyapunov",
    "lqr_gain",
    "dual_lqr_gain",
    "expm",
    "numerical_rank",
    "as_matrix",
]

#: Relative spectral-gap tolerance below which eig(A) and eig(B) are
#: considered overlapping (the Sylvester problem is then refused).
GAP_RTOL = 1e-8

#: Real parts within this band of zero count as "on the imaginary axis".
AXIS_BAND = 1e-9


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and return ``m`` as a 2-D array with finite entries."""
    arr = np.atleast_2d(np.asarray(m))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if not np.iscomplexobj(arr):
        arr = arr.astype(float, copy=False)
    return arr


def _require_square(m: np.ndarray, name: str) -> np.ndarray:
    if m.shape[0] != m.shape[1]:
        raise NonSquare(f"{name} must be square, got shape {m.shape}")
    return m


def _realify(x: np.ndarray, scale: float, rtol: float = 1e-8) -> np.ndarray:
    """Strip a negligible imaginary part left over from complex arithmetic."""
    if not np.iscomplexobj(x):
        return x
    imag = np.abs(x.imag).max(initial=0.0)
    if imag <= rtol * max(1.0, scale):
        return np.ascontiguousarray(x.real)
    return x


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a square matrix together with the spectral abscissa."""

    eigenvalues: np.ndarray
    abscissa: float = field(init=False)

    def __post_init__(self):
        eig = np.asarray(self.eigenvalues, dtype=complex)
        object.__setattr__(self, "eigenvalues", eig)
        absc = float(np.max(eig.real)) if eig.size else -np.inf
        object.__setattr__(self, "abscissa", absc)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def radius(self) -> float:
        """Spectral radius."""
        return float(np.max(np.abs(self.eigenvalues), initial=0.0))

    def is_hurwitz(self, margin: float = 0.0) -> bool:
        return self.abscissa < -margin

    def in_closed_left_half_plane(self, band: float = AXIS_BAND) -> bool:
        return self.abscissa <= band


def eigenvalues(m) -> Spectrum:
    """All eigenvalues (with multiplicity) of a square matrix.

    Parameters
    ----------
    m : (n, n) array_like
        Square matrix with finite entries.

    Returns
    -------
    Spectrum
        Eigenvalues and their maximal real part.
    """
    a = _require_square(as_matrix(m, "m"), "m")
    try:
        vals = np.linalg.eigvals(a) if a.size else np.zeros(0, dtype=complex)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue iteration failed: {exc}") from exc
    return Spectrum(vals)


def spectral_gap(eigs_a, eigs_b) -> float:
    """Smallest pairwise distance between two eigenvalue sets."""
    a = np.asarray(eigs_a, dtype=complex).ravel()
    b = np.asarray(eigs_b, dtype=complex).ravel()
    if a.size == 0 or b.size == 0:
        return np.inf
    return float(np.abs(a[:, None] - b[None, :]).min())


def check_spectral_gap(a, b) -> float:
    """Raise :class:`SpectraOverlap` unless eig(A) and eig(B) are disjoint.

    Accepts matrices or eigenvalue vectors; returns the observed gap.  The
    tolerance is ``GAP_RTOL * (1 + max spectral radius)`` since solutions
    become ill-conditioned near resonance.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    eigs_a = np.linalg.eigvals(a) if a.ndim == 2 else a.astype(complex)
    eigs_b = np.linalg.eigvals(b) if b.ndim == 2 else b.astype(complex)
    radius = max(
        np.abs(eigs_a).max(initial=0.0), np.abs(eigs_b).max(initial=0.0)
    )
    gap = spectral_gap(eigs_a, eigs_b)
    tol = GAP_RTOL * (1.0 + radius)
    if gap <= tol:
        raise SpectraOverlap(
            f"minimum eigenvalue gap {gap:.3e} is below the tolerance {tol:.3e}"
        )
    return gap


class SylvesterOperator:
    """Factored solver for A X - X B = C with fixed (A, B).

    Both Schur decompositions are computed once, so repeated solves against
    different right-hand sides (as needed when building vectorized operator
    matrices) cost only the triangular recurrence.
    """

    def __init__(self, a, b):
        self.a = _require_square(as_matrix(a, "A"), "A")
        self.b = _require_square(as_matrix(b, "B"), "B")
        try:
            self._ta, self._qa = scipy.linalg.schur(
                self.a.astype(complex), output="complex"
            )
            self._tb, self._qb = scipy.linalg.schur(
                self.b.astype(complex), output="complex"
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"Schur reduction failed: {exc}") from exc
        self.eigs_a = np.diag(self._ta)
        self.eigs_b = np.diag(self._tb)
        check_spectral_gap(self.eigs_a, self.eigs_b)
        self._real_data = not (
            np.iscomplexobj(self.a) or np.iscomplexobj(self.b)
        )

    def solve(self, c) -> np.ndarray:
        """Return the unique X with A X - X B = C."""
        c = as_matrix(c, "C")
        n, nu = self.a.shape[0], self.b.shape[0]
        if c.shape != (n, nu):
            raise ValueError(f"C must have shape {(n, nu)}, got {c.shape}")
        ctil = self._qa.conj().T @ c.astype(complex) @ self._qb
        y = _backend.sylvester_triu(
            np.ascontiguousarray(self._ta),
            np.ascontiguousarray(self._tb),
            np.ascontiguousarray(ctil),
        )
        x = self._qa @ y @ self._qb.conj().T
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("Sylvester back-substitution overflowed")
        if self._real_data and not np.iscomplexobj(c):
            x = _realify(x, float(np.abs(x).max(initial=0.0)))
        return x

    def residual(self, x, c) -> float:
        """Relative residual of a candidate solution."""
        num = np.linalg.norm(self.a @ x - x @ self.b - c)
        na, nb = np.linalg.norm(self.a), np.linalg.norm(self.b)
        nx, nc = np.linalg.norm(x), np.linalg.norm(c)
        scale = max(na * nx, nx * nb, nc, np.finfo(float).tiny)
        return float(num / scale)


def solve_sylvester(a, b, c) -> np.ndarray:
    """Solve the Sylvester equation A X - X B = C.

    Requires eig(A) and eig(B) to be disjoint (up to a relative gap
    tolerance); raises :class:`SpectraOverlap` otherwise.

    Parameters
    ----------
    a : (n, n) array_like
    b : (nu, nu) array_like
    c : (n, nu) array_like

    Returns
    -------
    (n, nu) ndarray
        The unique solution.  Real when all inputs are real.
    """
    return SylvesterOperator(a, b).solve(c)


def solve_lyapunov(a, q) -> np.ndarray:
    """Solve A' P + P A + Q = 0 for Hurwitz A and symmetric Q.

    Reduces to a Sylvester solve: A' P - P (-A) = -Q.
    """
    a = _require_square(as_matrix(a, "A"), "A")
    q = _require_square(as_matrix(q, "Q"), "Q")
    if not eigenvalues(a).is_hurwitz():
        raise NotHurwitz("A must be Hurwitz for the Lyapunov equation")
    if np.linalg.norm(q - q.conj().T) > 1e-10 * max(1.0, np.linalg.norm(q)):
        raise ValueError("Q must be symmetric")
    p = solve_sylvester(a.conj().T, -a, -q)
    return (p + p.conj().T) / 2.0


def _is_stabilizable(a: np.ndarray, b: np.ndarray) -> bool:
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real < -AXIS_BAND:
            continue
        m = np.hstack([a - lam * np.eye(n), b])
        if numerical_rank(m) < n:
            return False
    return True


def _care_residual(a, b, q, r, p) -> tuple[float, float]:
    """Riccati residual norm and its natural relative version."""
    gain_term = p @ b @ np.linalg.solve(r, b.T @ p)
    res = a.T @ p + p @ a - gain_term + q
    scale = max(
        1.0,
        np.linalg.norm(a.T @ p),
        np.linalg.norm(q),
        np.linalg.norm(gain_term),
    )
    return float(np.linalg.norm(res)), float(np.linalg.norm(res) / scale)


def lqr_gain(a, b, q=None, r=None) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time LQR gain and Riccati solution.

    Solves A'P + PA - P B R^-1 B' P + Q = 0 and returns ``(K, P)`` with
    K = -R^-1 B' P, so that A + B K is Hurwitz.  The equation is solved in
    diagonally balanced coordinates and polished by Newton iterations
    (each a Lyapunov solve) until the residual stops improving; badly
    scaled state matrices (oscillators with widely separated entry
    magnitudes) would otherwise lose most of the solver's accuracy.

    Parameters
    ----------
    a : (n, n) array_like
    b : (n, m) array_like
    q : (n, n) array_like, optional
        State weight, positive semidefinite.  Identity by default.
    r : (m, m) array_like, optional
        Input weight, positive definite.  Identity by default.
    """
    a = _require_square(as_matrix(a, "A"), "A")
    b = as_matrix(b, "B")
    n, m = b.shape
    if a.shape[0] != n:
        raise NonSquare(f"A ({a.shape}) and B ({b.shape}) are inconsistent")
    q = np.eye(n) if q is None else _require_square(as_matrix(q, "Q"), "Q")
    r = np.eye(m) if r is None else _require_square(as_matrix(r, "R"), "R")
    if not _is_stabilizable(a, b):
        raise NotStabilizable("(A, B) is not stabilizable")
    try:
        a_bal, t = scipy.linalg.matrix_balance(a)  # a = t @ a_bal @ t^-1
        tinv = np.linalg.inv(t)
        p_bal = scipy.linalg.solve_continuous_are(
            a_bal, tinv @ b, t.T @ q @ t, r
        )
        p = tinv.T @ p_bal @ tinv
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiDivergence(f"Riccati solve failed: {exc}") from exc
    p = (p + p.T) / 2.0

    # Newton polish: each step solves the Lyapunov equation of the current
    # closed loop; stop as soon as the residual stops improving
    best_norm, _ = _care_residual(a, b, q, r, p)
    for _ in range(8):
        k = -np.linalg.solve(r, b.T @ p)
        a_cl = a + b @ k
        if not eigenvalues(a_cl).is_hurwitz():
            break
        try:
            p_next = scipy.linalg.solve_continuous_lyapunov(
                a_cl.T, -(q + k.T @ r @ k)
            )
        except (np.linalg.LinAlgError, ValueError):
            break
        p_next = (p_next + p_next.T) / 2.0
        next_norm, _ = _care_residual(a, b, q, r, p_next)
        if not np.isfinite(next_norm) or next_norm >= best_norm:
            break
        p, best_norm = p_next, next_norm

    k = -np.linalg.solve(r, b.T @ p)
    _, rel = _care_residual(a, b, q, r, p)
    if rel > 1e-8:
        raise RiccatiDivergence(
            f"Riccati residual {rel:.3e} exceeds tolerance after polishing"
        )
    if not eigenvalues(a + b @ k).is_hurwitz():
        raise RiccatiDivergence("closed loop A + BK is not Hurwitz")
    return k, p


def dual_lqr_gain(a, c, q=None, r=None) -> np.ndarray:
    """Output-injection gain L with A + L C Hurwitz (LQR on the transpose)."""
    k, _ = lqr_gain(as_matrix(a, "A").T, as_matrix(c, "C").T, q, r)
    return k.T


def expm(m, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^{M t} (scaling-and-squaring Pade)."""
    a = _require_square(as_matrix(m, "M"), "M")
    return scipy.linalg.expm(a * t)


def numerical_rank(m, tol: float | None = None) -> int:
    """Number of singular values above ``tol``.

    The default tolerance is ``max(rows, cols) * eps * sigma_max``.
    """
    a = as_matrix(m, "m")
    if a.size == 0:
        return 0
    sigma = np.linalg.svd(a, compute_uv=False)
    if tol is None:
        tol = max(a.shape) * np.finfo(float).eps * sigma[0]
    return int(np.count_nonzero(sigma > tol))
