"""Stabilizer pathway tests: certificates, triangularity, feedback algebra."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sscops.errors import (
    FNotNeutrallyStable,
    NoEpsilonFound,
    NotSquarePlant,
    RankConditionFailed,
)
from sscops.fourtank import fourtank_plant, regulation_driver
from sscops.linsolve import eigenvalues
from sscops.sim import simulate_lti
from sscops.ssc import ssc_dual, ssc_primal
from sscops.stab_design import (
    certify_low_gain,
    default_eps_grid,
    design_forwarding,
    design_lowgain_cd,
    design_lowgain_cp,
    design_stabilizer,
)
from sscops.systems import Driver, Plant

from .conftest import random_hurwitz, random_neutral_f


@pytest.fixture
def scalar_cascade():
    plant = Plant([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    driver = Driver([[0.0]], [[1.0]], np.zeros((1, 1)), np.zeros((1, 1)))
    return plant, driver


def random_neutral_driver(rng, nu, plant):
    f = random_neutral_f(rng, nu)
    g = rng.standard_normal((nu, plant.p))
    return Driver(f, g, np.zeros((plant.m, nu)), np.zeros((plant.m, plant.p)))


class TestCertifyLowGain:
    def test_pure_scaling_family(self):
        cert = certify_low_gain(lambda e: np.array([[-e]]), default_eps_grid())
        assert_allclose(cert.c_margin, 1.0, atol=1e-12)
        assert_allclose(cert.epsilon_star, 0.1, atol=1e-12)

    def test_unstable_family_rejected(self):
        with pytest.raises(NoEpsilonFound):
            certify_low_gain(lambda e: np.array([[e]]), default_eps_grid())

    def test_coupled_family_slow_eigenvalue(self):
        # slow eigenvalue about -2 eps for small eps; c stays bounded below
        fam = lambda e: np.array([[-1.0, 1.0], [-e, -e]])  # noqa: E731
        grid = default_eps_grid(1e-4, 1e-2, 10)
        cert = certify_low_gain(fam, grid)
        # eigenvalue perturbation oracle on the same grid
        for e, absc in zip(cert.grid, cert.abscissas):
            slow = max(np.linalg.eigvals(fam(e)).real)
            assert_allclose(absc, slow, atol=1e-12)
            assert absc <= -cert.c_margin * e + 1e-15
        assert cert.c_margin > 0.5

    def test_prefix_requirement(self):
        # family turns unstable after the 3rd point: no certificate
        grid = default_eps_grid(1e-3, 1e-1, 10)

        def fam(e):
            return np.array([[-e if e < grid[2] else +e]])

        with pytest.raises(NoEpsilonFound):
            certify_low_gain(fam, grid)


class TestForwarding:
    def test_zero_k_accepted_for_stable_plant(self, rng):
        plant = Plant(
            random_hurwitz(rng, 3),
            rng.standard_normal((3, 2)),
            rng.standard_normal((2, 3)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 4, plant)
        res = design_forwarding(plant, driver, K=np.zeros((2, 3)))
        assert_allclose(res.K, 0.0)
        assert res.certificate.kind == "hurwitz"
        assert res.certificate.abscissa < 0

    def test_triangular_structure_exact(self, rng):
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        res = design_forwarding(plant, driver)
        n = plant.n
        assert_allclose(res.closed_loop[n:, :n], 0.0, atol=1e-14)
        # diagonal blocks are the decoupled pieces
        assert_allclose(res.closed_loop[:n, :n], plant.A + plant.B @ res.K)
        assert (
            eigenvalues(res.closed_loop[n:, n:]).abscissa < 0
        )  # driver loop stabilized

    def test_original_coordinates_similar(self, rng):
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        res = design_forwarding(plant, driver)
        got = np.sort_complex(np.linalg.eigvals(res.closed_loop_original))
        want = np.sort_complex(np.linalg.eigvals(res.closed_loop))
        assert np.max(np.abs(got - want)) <= 1e-8

    def test_feedback_equivalence_by_simulation(self, rng):
        # simulating the raw coordinates with the designed static feedback
        # matches the transformed triangular realization mapped back
        plant = Plant(
            random_hurwitz(rng, 3),
            rng.standard_normal((3, 2)),
            rng.standard_normal((2, 3)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 2, plant)
        res = design_forwarding(plant, driver)
        m_mat = res.M_or_Pi
        x0 = rng.standard_normal(3)
        eta0 = rng.standard_normal(2)
        tr_orig = simulate_lti(
            res.closed_loop_original, x0=np.concatenate([x0, eta0]),
            horizon=5.0, dt=0.01,
        )
        zeta0 = eta0 - m_mat @ x0
        tr_tri = simulate_lti(
            res.closed_loop, x0=np.concatenate([x0, zeta0]),
            horizon=5.0, dt=0.01,
        )
        x_tri = tr_tri.states[:, :3]
        eta_tri = tr_tri.states[:, 3:] + x_tri @ m_mat.T
        recon = np.hstack([x_tri, eta_tri])
        assert np.max(np.abs(recon - tr_orig.states)) <= 1e-6

    def test_fix_keta_round_trip(self, rng):
        # designed G must realize cd(G) = L to operator-equation accuracy
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        k_eta = rng.standard_normal((2, 3))
        res = design_forwarding(plant, driver, mode="fix_Keta", given=k_eta)
        assert res.pathway == "3a1b"
        plant_t = plant.state_feedback(res.K)
        realized = ssc_dual(plant_t, driver.F, res.G_used).value
        # F + cd(G) K_eta must be Hurwitz, with cd(G) the designed target
        assert eigenvalues(driver.F + realized @ k_eta).abscissa < 0
        assert res.certificate.abscissa < 0

    def test_non_square_fix_keta_rejected(self, rng):
        plant = Plant(
            random_hurwitz(rng, 3),
            rng.standard_normal((3, 1)),
            rng.standard_normal((2, 3)),
            np.zeros((2, 1)),
        )
        driver = Driver(
            random_neutral_f(rng, 2),
            rng.standard_normal((2, 2)),
            np.zeros((1, 2)),
            np.zeros((1, 2)),
        )
        with pytest.raises(NotSquarePlant):
            design_forwarding(
                plant, driver, mode="fix_Keta", given=rng.standard_normal((1, 2))
            )


class TestLowGainCd:
    def test_scalar_epsilon_gain(self, scalar_cascade):
        plant, driver = scalar_cascade
        res = design_lowgain_cd(plant, driver)
        assert res.pathway == "3a2a"
        # base gain is the scalar LQR gain -1, so K_eta = -eps exactly
        assert_allclose(res.K_eta, [[-res.epsilon]], atol=1e-12)
        assert 0.9 <= res.certificate.c_margin <= 1.5
        assert_allclose(res.K, 0.0)  # Hurwitz plant: eta-only feedback

    def test_unstable_driver_rejected(self, rng, scalar_cascade):
        plant, _ = scalar_cascade
        driver = Driver([[0.5]], [[1.0]], np.zeros((1, 1)), np.zeros((1, 1)))
        with pytest.raises(FNotNeutrallyStable):
            design_lowgain_cd(plant, driver)

    def test_certificate_matches_closed_loop(self, rng):
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        res = design_lowgain_cd(plant, driver)
        assert_allclose(
            eigenvalues(res.closed_loop).abscissa,
            res.certificate.abscissa,
            atol=1e-10,
        )
        # the (x, zeta) realization is similar to the raw (x, eta) loop
        got = np.sort_complex(np.linalg.eigvals(res.closed_loop_original))
        want = np.sort_complex(np.linalg.eigvals(res.closed_loop))
        assert np.max(np.abs(got - want)) <= 1e-8

    def test_family_blocks_scale_linearly(self, rng):
        # off-diagonal and coupling blocks of the realized family are O(eps)
        plant = Plant(
            random_hurwitz(rng, 3),
            rng.standard_normal((3, 2)),
            rng.standard_normal((2, 3)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 2, plant)
        res = design_lowgain_cd(plant, driver)
        n = plant.n
        k0 = res.K_eta / res.epsilon
        m0 = res.M_or_Pi
        cd0 = res.operator_value
        ratios = []
        for eps in default_eps_grid():
            n1 = plant.B @ (eps * k0) @ m0
            n2 = plant.B @ (eps * k0)
            n3 = cd0 @ (eps * k0) @ m0
            ratios.append(
                max(np.linalg.norm(n1), np.linalg.norm(n2), np.linalg.norm(n3))
                / eps
            )
        assert np.ptp(ratios) <= 1e-8 * max(ratios)  # exactly linear in eps

    def test_fix_keta_design(self, rng):
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        k_eta = rng.standard_normal((2, 3))
        res = design_lowgain_cd(plant, driver, mode="fix_Keta", given=k_eta)
        assert res.pathway == "3a2b"
        assert_allclose(res.K_eta, k_eta)
        # realized injection scales with the certified epsilon
        realized = ssc_dual(
            plant.state_feedback(res.K), driver.F, res.G_used
        ).value
        assert eigenvalues(driver.F + realized @ k_eta).abscissa < 0


class TestLowGainCp:
    def test_scalar_moment_gain(self, scalar_cascade):
        plant, driver = scalar_cascade
        res = design_lowgain_cp(plant, driver)
        assert res.pathway == "3a3a"
        # Z(eps) = -eps and cp has dc gain 1, so K_eta = -eps
        assert_allclose(res.K_eta, [[-res.epsilon]], atol=1e-10)

    def test_round_trip_operator_equation(self, rng):
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        res = design_lowgain_cp(plant, driver)
        plant_t = plant.state_feedback(res.K)
        z_target = res.operator_value  # eps * Z0
        realized = ssc_primal(plant_t, driver.F, res.K_eta).value
        assert np.max(np.abs(realized - z_target)) <= 1e-8 * max(
            1.0, np.abs(z_target).max()
        )

    def test_fix_keta_design(self, rng):
        plant = Plant(
            random_hurwitz(rng, 4),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            np.zeros((2, 2)),
        )
        driver = random_neutral_driver(rng, 3, plant)
        k_eta = rng.standard_normal((2, 3))
        res = design_lowgain_cp(plant, driver, mode="fix_Keta", given=k_eta)
        assert res.pathway == "3a3b"
        realized_y = ssc_primal(
            plant.state_feedback(res.K), driver.F, k_eta
        ).value
        assert (
            eigenvalues(driver.F + res.G_used @ realized_y).abscissa < 0
        )


class TestFourTank:
    @pytest.mark.parametrize("method", ["3a1a", "3a1b", "3a2a", "3a2b", "3a3a", "3a3b"])
    def test_all_pathways_stabilize(self, method):
        from sscops.demos import fourtank_regulation_design

        res = fourtank_regulation_design(method)
        assert eigenvalues(res.closed_loop_original).abscissa < 0
        if res.certificate.kind == "low_gain":
            assert res.certificate.c_margin > 0
            assert len(res.certificate.grid) >= 5

    def test_rank_verdicts_invariant_under_preliminary_feedback(self):
        from sscops.ssc import right_invertibility_report

        plant = fourtank_plant()
        driver = regulation_driver()
        res = design_forwarding(plant, driver)
        before = right_invertibility_report(plant, driver.F).rosenbrock_ok
        after = right_invertibility_report(
            plant.state_feedback(res.K), driver.F
        ).rosenbrock_ok
        assert before == after


def test_dispatch_rejects_unknown_method():
    with pytest.raises(ValueError):
        design_stabilizer(fourtank_plant(), regulation_driver(), "9z9z")
