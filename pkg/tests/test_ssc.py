"""Steady-state cascade operator tests: values, operator matrices, batteries."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sscops.errors import SpectraOverlap, Unsolvable
from sscops.linsolve import numerical_rank
from sscops.ssc import (
    hautus_check,
    invertibility_ok,
    left_invertibility_report,
    operator_matrix,
    right_invertibility_report,
    solve_dual_francis,
    solve_francis,
    solve_operator_equation,
    ssc_dual,
    ssc_primal,
)
from sscops.systems import Plant, pbh

from .conftest import random_driver, random_f_disjoint, random_plant, transfer_matrix


@pytest.fixture
def scalar_plant():
    return Plant([[-1.0]], [[1.0]], [[1.0]], [[0.0]])


class TestOperatorValues:
    def test_primal_scalar_dc_gain(self, scalar_plant):
        sol = ssc_primal(scalar_plant, [[0.0]], [[1.0]])
        assert_allclose(sol.sylvester, [[1.0]], atol=1e-14)
        assert_allclose(sol.value, [[1.0]], atol=1e-14)  # transfer at s=0
        assert sol.residual <= 1e-12

    def test_dual_scalar(self, scalar_plant):
        sol = ssc_dual(scalar_plant, [[0.0]], [[1.0]])
        assert_allclose(sol.sylvester, [[-1.0]], atol=1e-14)
        assert_allclose(sol.value, [[1.0]], atol=1e-14)

    def test_dual_zero_argument(self, rng):
        plant = random_plant(rng, 4, 2, 3)
        f = random_f_disjoint(rng, 3, plant)
        sol = ssc_dual(plant, f, np.zeros((3, 3)))
        assert_allclose(sol.sylvester, 0.0, atol=1e-14)
        assert_allclose(sol.value, 0.0, atol=1e-14)

    def test_reduced_model_recovers_identity(self, rng):
        # plant (F - Bh H, Bh, ...) measured against its own data (F, H)
        # has the identity as its unique invariant-subspace solution
        nu = 4
        f = rng.standard_normal((nu, nu))
        h = rng.standard_normal((2, nu))
        bh = rng.standard_normal((nu, 2))
        a_hat = f - bh @ h
        rom = Plant(a_hat, bh, np.zeros((1, nu)), np.zeros((1, 2)))
        sol = ssc_primal(rom, f, h)
        assert np.max(np.abs(sol.sylvester - np.eye(nu))) <= 1e-10

    def test_primal_linearity(self, rng):
        plant = random_plant(rng, 5, 2, 3)
        f = random_f_disjoint(rng, 3, plant)
        h1 = rng.standard_normal((2, 3))
        h2 = rng.standard_normal((2, 3))
        alpha = float(rng.normal())
        lhs = ssc_primal(plant, f, h1 + alpha * h2).value
        rhs = ssc_primal(plant, f, h1).value + alpha * ssc_primal(plant, f, h2).value
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.abs(rhs).max())

    def test_residuals_reported(self, rng):
        plant = random_plant(rng, 6, 2, 2, stable=True)
        f = random_f_disjoint(rng, 4, plant)
        sol = ssc_primal(plant, f, rng.standard_normal((2, 4)))
        assert sol.residual <= 1e-9

    def test_gap_precondition(self):
        plant = Plant([[1.0]], [[1.0]], [[1.0]], [[0.0]])
        with pytest.raises(SpectraOverlap):
            ssc_primal(plant, [[1.0]], [[1.0]])


class TestOperatorMatrix:
    def test_scalar_equals_transfer_at_driver_pole(self, scalar_plant):
        om = operator_matrix(scalar_plant, [[2.0]], "primal")
        assert om.matrix.shape == (1, 1)
        want = transfer_matrix(scalar_plant, 2.0)[0, 0].real
        assert_allclose(om.matrix, [[want]], atol=1e-12)

    def test_probe_identity(self, rng):
        plant = random_plant(rng, 4, 2, 3)
        f = random_f_disjoint(rng, 3, plant)
        om = operator_matrix(plant, f, "primal")
        for _ in range(20):
            h = rng.standard_normal((2, 3))
            want = ssc_primal(plant, f, h).value
            got = om.apply(h)
            assert np.max(np.abs(got - want)) <= 1e-8 * max(1.0, np.abs(want).max())

    def test_dual_probe_identity(self, rng):
        plant = random_plant(rng, 4, 2, 3)
        f = random_f_disjoint(rng, 3, plant)
        om = operator_matrix(plant, f, "dual")
        g = rng.standard_normal((3, 3))
        want = ssc_dual(plant, f, g).value
        assert np.max(np.abs(om.apply(g) - want)) <= 1e-8

    def test_square_invertible_case_full_rank(self, rng):
        # square plant with no transmission zeros at eig(F): both operator
        # matrices are square and invertible
        for _ in range(5):
            plant = random_plant(rng, 4, 2, 2)
            f = random_f_disjoint(rng, 3, plant)
            ok, _ = invertibility_ok(plant, f)
            if not ok:
                continue
            om_p = operator_matrix(plant, f, "primal")
            om_d = operator_matrix(plant, f, "dual")
            assert om_p.is_surjective and om_p.is_injective
            assert om_d.is_surjective and om_d.is_injective


class TestSolveOperatorEquation:
    def test_round_trip_square(self, rng):
        plant = random_plant(rng, 4, 2, 2)
        f = random_f_disjoint(rng, 3, plant)
        om = operator_matrix(plant, f, "primal")
        if not (om.is_surjective and om.is_injective):
            pytest.skip("random instance not invertible")
        x = rng.standard_normal((2, 3))
        target = ssc_primal(plant, f, x).value
        got = solve_operator_equation(plant, f, "primal", target)
        assert np.max(np.abs(got - x)) <= 1e-8 * max(1.0, np.abs(x).max())

    def test_zero_target(self, rng):
        plant = random_plant(rng, 3, 2, 2)
        f = random_f_disjoint(rng, 2, plant)
        got = solve_operator_equation(plant, f, "dual", np.zeros((2, 2)))
        assert_allclose(got, 0.0, atol=1e-12)

    def test_minimum_norm_in_wide_case(self, rng):
        # p < m: cp is onto but not injective; the returned solution must
        # not be beaten by any feasible perturbation along the kernel
        plant = random_plant(rng, 4, 3, 1)
        f = random_f_disjoint(rng, 2, plant)
        om = operator_matrix(plant, f, "primal")
        assert om.is_surjective
        target = rng.standard_normal((1, 2))
        x = solve_operator_equation(plant, f, "primal", target)
        resid = om.apply(x) - target
        assert np.max(np.abs(resid)) <= 1e-8
        # kernel directions via SVD
        _, s, vh = np.linalg.svd(om.matrix)
        kernel = vh[om.rank :]
        for _ in range(100):
            w = rng.standard_normal(kernel.shape[0]) @ kernel
            x_alt = x + w.reshape(x.shape, order="F")
            assert np.linalg.norm(x) <= np.linalg.norm(x_alt) + 1e-10

    def test_unsolvable_detected(self, rng):
        # p > m: cp cannot be surjective; a random target is infeasible
        plant = random_plant(rng, 4, 1, 3)
        f = random_f_disjoint(rng, 2, plant)
        with pytest.raises(Unsolvable):
            solve_operator_equation(
                plant, f, "primal", rng.standard_normal((3, 2))
            )


def _plant_with_zero_at(rng, lam, n=4, m=2, p=2):
    """Square plant whose transfer matrix is singular exactly at lam (real)."""
    a = rng.standard_normal((n, n))
    while abs(np.linalg.eigvals(a) - lam).min() < 0.5:
        a = rng.standard_normal((n, n))
    b = rng.standard_normal((n, m))
    c = rng.standard_normal((p, n))
    base = c @ np.linalg.solve(lam * np.eye(n) - a, b)
    # choose D so the transfer at lam equals a rank-deficient target
    w = rng.standard_normal((p, 1)) @ rng.standard_normal((1, m))
    d = w - base
    return Plant(a, b, c, d)


class TestBatteries:
    def test_all_true_for_invertible_square(self, rng):
        plant = random_plant(rng, 4, 2, 2)
        f = random_f_disjoint(rng, 3, plant)
        ok, _ = invertibility_ok(plant, f)
        if not ok:
            pytest.skip("random instance not invertible")
        right = right_invertibility_report(plant, f)
        left = left_invertibility_report(plant, f)
        assert right.all_ok() and right.consistent
        assert left.all_ok() and left.consistent

    def test_transmission_zero_flips_all_verdicts(self, rng):
        lam = 0.5
        plant = _plant_with_zero_at(rng, lam)
        f = np.diag([lam, -2.5])
        report = right_invertibility_report(plant, f)
        assert not report.all_ok()
        assert report.consistent  # all five verdicts flip together
        assert any(
            abs(w.eigenvalue - lam) < 1e-8 for w in report.witnesses
        )
        # witness carries a genuine left null vector of the system matrix
        w = report.witnesses[0]
        from sscops.systems import rosenbrock

        r = rosenbrock(plant, w.eigenvalue)
        assert np.linalg.norm(w.null_vector @ r) <= 1e-6 * np.linalg.norm(r)

    def test_more_outputs_than_inputs_fails_row_rank(self, rng):
        plant = random_plant(rng, 4, 1, 3)
        f = random_f_disjoint(rng, 2, plant)
        report = right_invertibility_report(plant, f)
        assert not report.rosenbrock_ok
        assert not report.cp_ok

    def test_more_inputs_than_outputs_fails_column_rank(self, rng):
        plant = random_plant(rng, 4, 3, 1)
        f = random_f_disjoint(rng, 2, plant)
        report = left_invertibility_report(plant, f)
        assert not report.rosenbrock_ok
        assert not report.cp_ok  # injectivity side

    def test_consistency_sweep(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, 4))
            p = int(rng.integers(1, 4))
            plant = random_plant(rng, n, m, p)
            f = random_f_disjoint(rng, int(rng.integers(1, 4)), plant)
            right = right_invertibility_report(plant, f)
            left = left_invertibility_report(plant, f)
            assert right.consistent, (n, m, p)
            assert left.consistent, (n, m, p)

    def test_controllability_transfer_sweep(self, rng):
        checked = 0
        for _ in range(50):
            plant = random_plant(rng, int(rng.integers(2, 6)), 2, 2)
            nu = int(rng.integers(1, 5))
            f = random_f_disjoint(rng, nu, plant)
            g = rng.standard_normal((nu, 2))
            report = right_invertibility_report(plant, f, g=g)
            assert report.transfer.implication_full
            assert report.transfer.implication_weak
            checked += 1
        assert checked == 50

    def test_observability_transfer_sweep(self, rng):
        for _ in range(50):
            plant = random_plant(rng, int(rng.integers(2, 6)), 2, 2)
            nu = int(rng.integers(1, 5))
            f = random_f_disjoint(rng, nu, plant)
            h = rng.standard_normal((2, nu))
            report = left_invertibility_report(plant, f, h=h)
            assert report.transfer.implication_full
            assert report.transfer.implication_weak

    def test_feedback_and_injection_invariance(self, rng):
        # the rank verdict is a transmission-zero property: unchanged under
        # state feedback and output injection
        for _ in range(10):
            plant = random_plant(rng, 4, 2, 2)
            f = random_f_disjoint(rng, 3, plant)
            k = rng.standard_normal((2, 4)) * 0.5
            l = rng.standard_normal((4, 2)) * 0.5
            transformed = plant.state_feedback(k).output_injection(l)
            try:
                r1 = right_invertibility_report(plant, f)
                r2 = right_invertibility_report(transformed, f)
            except SpectraOverlap:
                continue
            assert r1.rosenbrock_ok == r2.rosenbrock_ok


class TestFrancisSolvers:
    def test_zero_data_gives_zero_solution(self, rng):
        plant = random_plant(rng, 3, 2, 2)
        f = random_f_disjoint(rng, 2, plant)
        pi, psi = solve_francis(plant, f, np.zeros((3, 2)), np.zeros((2, 2)))
        assert_allclose(pi, 0.0, atol=1e-12)
        assert_allclose(psi, 0.0, atol=1e-12)

    def test_surjectivity_construction(self, rng):
        # P = 0, Q = -Hbar reproduces the operator equation cp(.) = Hbar
        plant = random_plant(rng, 4, 2, 2)
        f = random_f_disjoint(rng, 3, plant)
        if not right_invertibility_report(plant, f).rosenbrock_ok:
            pytest.skip("random instance lost row rank")
        hbar = rng.standard_normal((2, 3))
        pi, psi = solve_francis(plant, f, np.zeros((4, 3)), -hbar)
        assert np.max(np.abs(plant.C @ pi + plant.D @ psi - hbar)) <= 1e-8
        assert np.max(
            np.abs(pi @ f - plant.A @ pi - plant.B @ psi)
        ) <= 1e-8 * max(1.0, np.abs(pi).max())

    def test_random_solvable_instance_residual(self, rng):
        plant = random_plant(rng, 4, 2, 2)
        f = random_f_disjoint(rng, 3, plant)
        # manufacture a solvable right-hand side from a known solution
        pi0 = rng.standard_normal((4, 3))
        psi0 = rng.standard_normal((2, 3))
        p = pi0 @ f - plant.A @ pi0 - plant.B @ psi0
        q = -(plant.C @ pi0 + plant.D @ psi0)
        pi, psi = solve_francis(plant, f, p, q)
        assert np.max(np.abs(pi @ f - plant.A @ pi - plant.B @ psi - p)) <= 1e-7
        assert np.max(np.abs(plant.C @ pi + plant.D @ psi + q)) <= 1e-7

    def test_dual_zero_data(self, rng):
        plant = random_plant(rng, 3, 2, 2)
        f = random_f_disjoint(rng, 2, plant)
        m, g = solve_dual_francis(plant, f, np.zeros((2, 3)), np.zeros((2, 2)))
        assert_allclose(m, 0.0, atol=1e-12)
        assert_allclose(g, 0.0, atol=1e-12)

    def test_dual_unique_under_invertibility(self, rng):
        plant = random_plant(rng, 4, 2, 2)
        f = random_f_disjoint(rng, 3, plant)
        ok, _ = invertibility_ok(plant, f)
        if not ok:
            pytest.skip("random instance not invertible")
        pbar = rng.standard_normal((3, 4))
        qbar = rng.standard_normal((3, 2))
        m1, g1 = solve_dual_francis(plant, f, pbar, qbar)
        # independent route: square dense solve of the stacked system
        from sscops.ssc import _dual_francis_matrix, _unvec, _vec

        smat = _dual_francis_matrix(plant)(f)
        sol = np.linalg.solve(smat, np.concatenate([_vec(pbar), _vec(-qbar)]))
        m2 = _unvec(sol[: 3 * 4], (3, 4))
        g2 = _unvec(sol[3 * 4 :], (3, 2))
        assert np.max(np.abs(m1 - m2)) <= 1e-10 * max(1.0, np.abs(m2).max())
        assert np.max(np.abs(g1 - g2)) <= 1e-10 * max(1.0, np.abs(g2).max())


class TestHautus:
    def test_single_invertible_coefficient(self, rng):
        r1 = rng.standard_normal((3, 3))
        while numerical_rank(r1) < 3:
            r1 = rng.standard_normal((3, 3))
        f = rng.standard_normal((2, 2))
        report = hautus_check(f, [r1], [[1.0]])
        assert report.hp_surjective and report.hp_injective
        assert report.hd_surjective and report.hd_injective
        assert report.consistent

    def test_reproduces_regulator_solvability(self, rng):
        # coefficients ([[-A, -B], [C, D]], [[I, 0], [0, 0]]) with
        # polynomials (1, s) encode the primal regulator-type system
        plant = random_plant(rng, 3, 2, 2)
        f = random_f_disjoint(rng, 2, plant)
        n, m, p = 3, 2, 2
        r1 = np.block([[-plant.A, -plant.B], [plant.C, plant.D]])
        r2 = np.block([
            [np.eye(n), np.zeros((n, m))],
            [np.zeros((p, n)), np.zeros((p, m))],
        ])
        report = hautus_check(f, [r1, r2], [[1.0], [0.0, 1.0]])
        battery = right_invertibility_report(plant, f)
        assert report.hp_surjective == battery.francis_ok
        assert report.row_rank_ok == battery.rosenbrock_ok

    def test_random_sweep_equivalences(self, rng):
        for _ in range(100):
            n1 = int(rng.integers(1, 5))
            n2 = int(rng.integers(1, 5))
            nu = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            rs = [rng.standard_normal((n1, n2)) for _ in range(k)]
            qs = [rng.standard_normal(int(rng.integers(1, 4))) for _ in range(k)]
            f = rng.standard_normal((nu, nu))
            report = hautus_check(f, rs, qs)
            assert report.consistent
