"""State-space containers and structural tests.

``Plant`` holds the driven system (A, B, C, D); ``Driver`` holds the
driving system (F, G, H, J).  The two cascade orientations are assembled
here, along with the Rosenbrock matrix and eigenvector (PBH) tests for
controllability, observability, stabilizability and detectability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonSquare
from .linsolve import AXIS_BAND, Spectrum, as_matrix, eigenvalues, numerical_rank

__all__ = [
    "Plant",
    "Driver",
    "CascadeSystem",
    "compose_primal",
    "compose_dual",
    "rosenbrock",
    "PbhResult",
    "pbh",
]


@dataclass(frozen=True)
class Plant:
    """Driven LTI system dx = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        b = as_matrix(self.B, "B")
        c = as_matrix(self.C, "C")
        d = as_matrix(self.D, "D")
        if a.shape[0] != a.shape[1]:
            raise NonSquare(f"A must be square, got {a.shape}")
        n = a.shape[0]
        if b.shape[0] != n or c.shape[1] != n or d.shape != (c.shape[0], b.shape[1]):
            raise DimensionMismatch(
                f"inconsistent plant dimensions A{a.shape} B{b.shape} "
                f"C{c.shape} D{d.shape}"
            )
        for name, val in (("A", a), ("B", b), ("C", c), ("D", d)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_abc(cls, a, b, c, d=None) -> "Plant":
        """Build a plant, defaulting D to a zero matrix of inferred shape."""
        a, b, c = as_matrix(a, "A"), as_matrix(b, "B"), as_matrix(c, "C")
        if d is None:
            d = np.zeros((c.shape[0], b.shape[1]))
        return cls(a, b, c, d)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def is_square(self) -> bool:
        return self.p == self.m

    def poles(self) -> Spectrum:
        return eigenvalues(self.A)

    def transfer(self, s: complex) -> np.ndarray:
        """Transfer matrix C (sI - A)^-1 B + D at a non-pole point s."""
        x = np.linalg.solve(s * np.eye(self.n) - self.A.astype(complex), self.B)
        return self.C @ x + self.D

    def state_feedback(self, k) -> "Plant":
        """Plant seen after u = K x + u~: (A + BK, B, C + DK, D)."""
        k = as_matrix(k, "K")
        return Plant(self.A + self.B @ k, self.B, self.C + self.D @ k, self.D)

    def output_injection(self, l) -> "Plant":
        """Plant seen after injecting L y into the state: (A + LC, B + LD, C, D)."""
        l = as_matrix(l, "L")
        return Plant(self.A + l @ self.C, self.B + l @ self.D, self.C, self.D)

    def transpose(self) -> "Plant":
        """The dual plant (A', C', B', D')."""
        return Plant(self.A.T, self.C.T, self.B.T, self.D.T)


@dataclass(frozen=True)
class Driver:
    """Driving LTI system d(eta) = F eta + G v, z = H eta + J v."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        f = as_matrix(self.F, "F")
        g = as_matrix(self.G, "G")
        h = as_matrix(self.H, "H")
        j = as_matrix(self.J, "J")
        if f.shape[0] != f.shape[1]:
            raise NonSquare(f"F must be square, got {f.shape}")
        nu = f.shape[0]
        if g.shape[0] != nu or h.shape[1] != nu or j.shape != (h.shape[0], g.shape[1]):
            raise DimensionMismatch(
                f"inconsistent driver dimensions F{f.shape} G{g.shape} "
                f"H{h.shape} J{j.shape}"
            )
        for name, val in (("F", f), ("G", g), ("H", h), ("J", j)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_fg(cls, f, g=None, h=None, j=None) -> "Driver":
        """Build a driver, defaulting absent G/H/J to zero matrices."""
        f = as_matrix(f, "F")
        nu = f.shape[0]
        if g is None and h is None:
            raise DimensionMismatch("at least one of G, H must be given")
        g = np.zeros((nu, 1)) if g is None else as_matrix(g, "G")
        h = np.zeros((1, nu)) if h is None else as_matrix(h, "H")
        if j is None:
            j = np.zeros((h.shape[0], g.shape[1]))
        return cls(f, g, h, j)

    @property
    def nu(self) -> int:
        return self.F.shape[0]

    def modes(self) -> Spectrum:
        return eigenvalues(self.F)

    def check_partner(self, plant: Plant) -> None:
        """Dimension consistency with a partner plant (G columns = p, H rows = m)."""
        if self.G.shape[1] != plant.p:
            raise DimensionMismatch(
                f"driver input dimension {self.G.shape[1]} != plant output "
                f"dimension {plant.p}"
            )
        if self.H.shape[0] != plant.m:
            raise DimensionMismatch(
                f"driver output dimension {self.H.shape[0]} != plant input "
                f"dimension {plant.m}"
            )


@dataclass(frozen=True)
class CascadeSystem:
    """Composite state-space realization of a cascade interconnection.

    ``orientation`` is ``"primal"`` when the driver feeds the plant (u = z)
    and ``"dual"`` when the plant feeds the driver (v = y).  The composite
    state is stacked as (x, eta); ``partition`` records (n, nu).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    partition: tuple[int, int]
    orientation: str
    plant: Plant = field(repr=False)
    driver: Driver = field(repr=False)

    def modes(self) -> Spectrum:
        return eigenvalues(self.A)


def compose_primal(plant: Plant, driver: Driver) -> CascadeSystem:
    """Cascade with the driver feeding the plant (u = z).

    State matrix [[A, B H], [0, F]], input column [B J; G] for the driver
    input v, measured output [C, D H] with feedthrough D J.
    """
    driver.check_partner(plant)
    n, nu = plant.n, driver.nu
    a = np.block([
        [plant.A, plant.B @ driver.H],
        [np.zeros((nu, n)), driver.F],
    ])
    b = np.vstack([plant.B @ driver.J, driver.G])
    c = np.hstack([plant.C, plant.D @ driver.H])
    d = plant.D @ driver.J
    return CascadeSystem(a, b, c, d, (n, nu), "primal", plant, driver)


def compose_dual(plant: Plant, driver: Driver) -> CascadeSystem:
    """Cascade with the plant feeding the driver (v = y).

    State matrix [[A, 0], [G C, F]], input column [B; G D] for the plant
    input u.  The driver output z is dropped.
    """
    driver.check_partner(plant)
    n, nu = plant.n, driver.nu
    a = np.block([
        [plant.A, np.zeros((n, nu))],
        [driver.G @ plant.C, driver.F],
    ])
    b = np.vstack([plant.B, driver.G @ plant.D])
    c = np.eye(n + nu)
    d = np.zeros((n + nu, plant.m))
    return CascadeSystem(a, b, c, d, (n, nu), "dual", plant, driver)


def rosenbrock(plant: Plant, lam: complex) -> np.ndarray:
    """System matrix [[A - lam I, B], [C, D]] of shape (n+p, n+m)."""
    n = plant.n
    return np.block([
        [plant.A - lam * np.eye(n), plant.B],
        [plant.C, plant.D],
    ])


@dataclass(frozen=True)
class PbhResult:
    """Outcome of an eigenvector rank test over the relevant spectrum."""

    verdict: bool
    mode: str
    witness: complex | None
    witness_sigma: float | None
    tested: tuple

    def __bool__(self) -> bool:
        return self.verdict


def pbh(a, bc, mode: str = "controllable") -> PbhResult:
    """Eigenvector rank test for a matrix pair.

    Parameters
    ----------
    a : (n, n) array_like
    bc : array_like
        Input matrix (n, m) for the controllable/stabilizable modes, output
        matrix (p, n) for observable/detectable.
    mode : str
        One of ``controllable``, ``observable``, ``stabilizable``,
        ``detectable``.

    Returns
    -------
    PbhResult
        ``verdict`` is True iff rank [A - lam I, B] = n at every tested
        eigenvalue (all of them, or only those with Re lam >= 0 for the
        stabilizable/detectable modes; a band of 1e-9 around the imaginary
        axis counts as unstable).  On failure, ``witness`` is the most
        marginal offending eigenvalue.
    """
    a = as_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise NonSquare(f"first argument must be square, got {a.shape}")
    bc = as_matrix(bc, "B/C")
    if mode in ("observable", "detectable"):
        dual = {"observable": "controllable", "detectable": "stabilizable"}[mode]
        res = pbh(a.conj().T, bc.conj().T, dual)
        return PbhResult(res.verdict, mode, res.witness, res.witness_sigma, res.tested)
    if mode not in ("controllable", "stabilizable"):
        raise ValueError(f"unknown mode {mode!r}")

    n = a.shape[0]
    only_unstable = mode == "stabilizable"
    tested = []
    failures = []
    for lam in np.linalg.eigvals(a):
        if only_unstable and lam.real < -AXIS_BAND:
            continue
        m = np.hstack([a - lam * np.eye(n), bc])
        sigma = np.linalg.svd(m, compute_uv=False)
        tol = max(m.shape) * np.finfo(float).eps * sigma[0]
        ok = sigma[n - 1] > tol
        tested.append((complex(lam), bool(ok), float(sigma[n - 1])))
        if not ok:
            failures.append((float(sigma[n - 1]), complex(lam)))
    if failures:
        sig, lam = min(failures, key=lambda t: t[0])
        return PbhResult(False, mode, lam, sig, tuple(tested))
    return PbhResult(True, mode, None, None, tuple(tested))
