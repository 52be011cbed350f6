"""Shared generators and independent oracles used across the test suite."""

import numpy as np
import pytest

from sscops.linsolve import spectral_gap
from sscops.systems import Driver, Plant


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# random instance generators
# ---------------------------------------------------------------------------

def random_hurwitz(rng, n, shift=1.0):
    """Random matrix shifted left until comfortably Hurwitz."""
    a = rng.standard_normal((n, n))
    absc = np.max(np.linalg.eigvals(a).real)
    return a - (absc + shift) * np.eye(n)


def random_plant(rng, n, m, p, stable=False):
    a = random_hurwitz(rng, n) if stable else rng.standard_normal((n, n))
    return Plant(
        a,
        rng.standard_normal((n, m)),
        rng.standard_normal((p, n)),
        rng.standard_normal((p, m)),
    )


def random_f_disjoint(rng, nu, plant, neutral=False, min_gap=0.3):
    """Random driver dynamics with spectrum well separated from eig(A)."""
    eigs_a = np.linalg.eigvals(plant.A)
    for _ in range(50):
        if neutral:
            f = random_neutral_f(rng, nu)
        else:
            f = rng.standard_normal((nu, nu))
        if spectral_gap(np.linalg.eigvals(f), eigs_a) > min_gap:
            return f
    raise RuntimeError("could not generate a spectrally separated F")


def random_neutral_f(rng, nu):
    """Skew-symmetric (neutrally stable, semisimple) dynamics."""
    s = rng.standard_normal((nu, nu))
    return (s - s.T) / 2.0


def oscillator(omega):
    return np.array([[0.0, 1.0], [-omega**2, 0.0]])


def random_driver(rng, nu, plant, neutral=False):
    f = random_f_disjoint(rng, nu, plant, neutral=neutral)
    return Driver(
        f,
        rng.standard_normal((nu, plant.p)),
        rng.standard_normal((plant.m, nu)),
        rng.standard_normal((plant.m, plant.p)),
    )


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def kron_sylvester_solve(a, b, c):
    """Direct Kronecker-vectorized solve of A X - X B = C (oracle)."""
    n, nu = c.shape
    coef = np.kron(np.eye(nu), a) - np.kron(b.T, np.eye(n))
    x = np.linalg.solve(coef, c.reshape(-1, order="F"))
    return x.reshape((n, nu), order="F")


def rk4_matrix_ode(m, t, steps):
    """Integrate dX/dt = M X from X(0) = I with fixed-step RK4 (oracle)."""
    x = np.eye(m.shape[0])
    h = t / steps
    for _ in range(steps):
        k1 = m @ x
        k2 = m @ (x + 0.5 * h * k1)
        k3 = m @ (x + 0.5 * h * k2)
        k4 = m @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def kalman_rank_controllable(a, b):
    """Rank of [B, AB, ..., A^{n-1} B] equals n (oracle for PBH)."""
    n = a.shape[0]
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def transfer_matrix(plant, s):
    """Direct transfer-matrix evaluation (oracle mirror of Plant.transfer)."""
    n = plant.A.shape[0]
    return (
        plant.C @ np.linalg.solve(s * np.eye(n) - plant.A.astype(complex), plant.B)
        + plant.D
    )
