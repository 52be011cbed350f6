"""Dense kernel tests: frozen values, oracle comparisons, invariants."""

import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sscops.errors import (
    NonSquare,
    NotHurwitz,
    NotStabilizable,
    SpectraOverlap,
)
from sscops.linsolve import (
    eigenvalues,
    expm,
    lqr_gain,
    numerical_rank,
    solve_lyapunov,
    solve_sylvester,
    spectral_gap,
)

from .conftest import kron_sylvester_solve, random_hurwitz, rk4_matrix_ode


class TestEigenvalues:
    def test_rotation_matrix(self):
        spec = eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
        assert_allclose(sorted(spec.eigenvalues.imag), [-1.0, 1.0], atol=1e-12)
        assert_allclose(spec.eigenvalues.real, 0.0, atol=1e-12)
        assert abs(spec.abscissa) < 1e-12

    def test_scalar(self):
        spec = eigenvalues([[-1.0]])
        assert_allclose(spec.eigenvalues, [-1.0])
        assert spec.abscissa == -1.0
        assert spec.is_hurwitz()

    def test_companion_matrix_roots(self, rng):
        # polynomial with chosen roots; its companion matrix must return them
        roots = np.array([-3.0, -1.5, -0.5, 0.25, 1.0, 2.0])
        coeffs = np.poly(roots)  # leading coefficient 1
        n = len(roots)
        comp = np.zeros((n, n))
        comp[0, :] = -coeffs[1:]
        comp[1:, :-1] = np.eye(n - 1)
        got = np.sort_complex(eigenvalues(comp).eigenvalues)
        assert_allclose(got, np.sort_complex(roots.astype(complex)), atol=1e-8)

    def test_nonsquare_rejected(self):
        with pytest.raises(NonSquare):
            eigenvalues(np.zeros((2, 3)))


class TestSylvester:
    def test_scalar(self):
        x = solve_sylvester([[-1.0]], [[1.0]], [[2.0]])
        assert_allclose(x, [[-1.0]], atol=1e-14)

    def test_zero_rhs(self, rng):
        a = random_hurwitz(rng, 4)
        b = rng.standard_normal((3, 3)) + 4 * np.eye(3)
        x = solve_sylvester(a, b, np.zeros((4, 3)))
        assert_allclose(x, 0.0, atol=1e-14)

    def test_against_kronecker_oracle(self, rng):
        a = random_hurwitz(rng, 5)
        b = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        c = rng.standard_normal((5, 3))
        x = solve_sylvester(a, b, c)
        assert_allclose(x, kron_sylvester_solve(a, b, c), atol=1e-8)

    def test_residual_sweep(self, rng):
        for _ in range(25):
            n, nu = rng.integers(1, 9), rng.integers(1, 7)
            a = random_hurwitz(rng, n, shift=0.5)
            b = rng.standard_normal((nu, nu)) + 3 * np.eye(nu)
            c = rng.standard_normal((n, nu))
            x = solve_sylvester(a, b, c)
            num = np.linalg.norm(a @ x - x @ b - c)
            scale = max(
                np.linalg.norm(a) * np.linalg.norm(x),
                np.linalg.norm(x) * np.linalg.norm(b),
                np.linalg.norm(c),
            )
            assert num <= 1e-9 * scale
            if n * nu <= 64:
                assert_allclose(x, kron_sylvester_solve(a, b, c), atol=1e-8)

    def test_real_output_for_real_input(self, rng):
        a = random_hurwitz(rng, 4)
        b = rng.standard_normal((2, 2)) + 3 * np.eye(2)
        x = solve_sylvester(a, b, rng.standard_normal((4, 2)))
        assert not np.iscomplexobj(x)

    def test_complex_spectra_handled(self, rng):
        # strongly rotational A exercises the complex Schur path
        a = np.array([[0.0, 5.0], [-5.0, 0.0]]) - 0.1 * np.eye(2)
        b = np.array([[1.0]])
        c = rng.standard_normal((2, 1))
        x = solve_sylvester(a, b, c)
        assert_allclose(a @ x - x @ b, c, atol=1e-10)

    def test_spectra_overlap_rejected(self):
        a = np.diag([1.0, -2.0])
        b = np.array([[1.0]])
        with pytest.raises(SpectraOverlap):
            solve_sylvester(a, b, np.ones((2, 1)))


class TestLyapunov:
    def test_scalar(self):
        assert_allclose(solve_lyapunov([[-1.0]], [[2.0]]), [[1.0]], atol=1e-14)

    def test_minus_identity(self):
        p = solve_lyapunov(-np.eye(3), np.eye(3))
        assert_allclose(p, np.eye(3) / 2, atol=1e-12)

    def test_reduces_to_sylvester(self, rng):
        a = random_hurwitz(rng, 4)
        q0 = rng.standard_normal((4, 4))
        q = q0 + q0.T
        p = solve_lyapunov(a, q)
        assert_allclose(p, solve_sylvester(a.T, -a, -q), atol=1e-9)
        assert_allclose(a.T @ p + p @ a + q, 0.0, atol=1e-9 * np.linalg.norm(q))

    def test_not_hurwitz_rejected(self):
        with pytest.raises(NotHurwitz):
            solve_lyapunov([[1.0]], [[1.0]])


class TestLqr:
    def test_scalar_riccati(self):
        k, p = lqr_gain([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        assert_allclose(p, [[1.0]], atol=1e-10)
        assert_allclose(k, [[-1.0]], atol=1e-10)

    def test_zero_weight_on_stable_plant(self, rng):
        a = random_hurwitz(rng, 3)
        b = rng.standard_normal((3, 2))
        k, p = lqr_gain(a, b, np.zeros((3, 3)), np.eye(2))
        assert_allclose(p, 0.0, atol=1e-9)
        assert_allclose(k, 0.0, atol=1e-9)

    def test_random_stabilizable(self, rng):
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 2))
        q0 = rng.standard_normal((4, 4))
        q = q0 @ q0.T
        r = np.eye(2)
        k, p = lqr_gain(a, b, q, r)
        res = a.T @ p + p @ a - p @ b @ np.linalg.solve(r, b.T @ p) + q
        assert np.linalg.norm(res) <= 1e-8 * max(1.0, np.linalg.norm(a.T @ p))
        assert eigenvalues(a + b @ k).abscissa < 0

    def test_not_stabilizable_rejected(self):
        with pytest.raises(NotStabilizable):
            lqr_gain(np.diag([-1.0, 1.0]), [[1.0], [0.0]])


class TestExpm:
    def test_zero(self):
        assert_allclose(expm(np.zeros((3, 3))), np.eye(3), atol=1e-15)

    def test_rotation_quarter_turn(self):
        m = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert_allclose(expm(m, np.pi / 2), [[0.0, 1.0], [-1.0, 0.0]], atol=1e-12)

    def test_against_rk4_oracle(self, rng):
        m = rng.standard_normal((5, 5))
        got = expm(m, 1.0)
        want = rk4_matrix_ode(m, 1.0, 10000)
        assert np.max(np.abs(got - want)) <= 1e-6

    def test_semigroup_property(self, rng):
        for _ in range(5):
            m = random_hurwitz(rng, 4)
            s, t = rng.uniform(0, 1, size=2)
            lhs = expm(m, s) @ expm(m, t)
            rhs = expm(m, s + t)
            assert np.linalg.norm(lhs - rhs) <= 1e-8 * max(
                1.0, np.linalg.norm(rhs)
            )


class TestNumericalRank:
    def test_identity(self):
        assert numerical_rank(np.eye(3)) == 3

    def test_zero(self):
        assert numerical_rank(np.zeros((2, 4))) == 0

    def test_rank_one_by_construction(self):
        assert numerical_rank([[1.0, 2.0], [2.0, 4.0]]) == 1


def test_spectral_gap_basics():
    assert spectral_gap([1.0, 2.0], [4.0]) == 2.0
    assert np.isinf(spectral_gap([], [1.0]))


def test_sylvester_battery_speed(rng):
    # smoke-scale version of the acceptance timing contract
    start = time.perf_counter()
    for _ in range(40):
        n, nu = int(rng.integers(2, 13)), int(rng.integers(1, 9))
        a = random_hurwitz(rng, n, shift=0.5)
        b = rng.standard_normal((nu, nu)) + 3 * np.eye(nu)
        solve_sylvester(a, b, rng.standard_normal((n, nu)))
    assert time.perf_counter() - start < 5.0
