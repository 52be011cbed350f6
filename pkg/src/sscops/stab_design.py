"""Stabilizer design pathways for the plant-feeds-driver cascade.

The cascade

    dx   = A x + B u
    deta = F eta + G (C x + D u)

is stabilized by u = Kx + K_eta * (coordinate), in six flavours that differ
in which datum is fixed (the driver injection G or the gain K_eta), and in
whether the deviation coordinate zeta = eta - M x is fed back (forwarding,
giving a triangular closed loop) or eta itself is fed back with a small
gain (low-gain designs, certified over an epsilon sweep).  Pathway codes:

    3a1a  forwarding, fix G, design K_eta         (exact, feedback in x, zeta)
    3a1b  forwarding, fix K_eta, design G          (requires p == m)
    3a2a  low-gain via cd, fix G, design K_eta(eps)
    3a2b  low-gain via cd, fix K_eta, design G(eps) (requires p == m)
    3a3a  low-gain via cp, fix G, design K_eta(eps)
    3a3b  low-gain via cp, fix K_eta, design G(eps) (requires p == m)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FNotNeutrallyStable,
    NoEpsilonFound,
    NotDetectable,
    NotHurwitz,
    NotSquarePlant,
    RankConditionFailed,
    SpectraOverlap,
)
from .linsolve import (
    AXIS_BAND,
    as_matrix,
    check_spectral_gap,
    dual_lqr_gain,
    eigenvalues,
    lqr_gain,
)
from .ssc import (
    SscFactory,
    invertibility_ok,
    right_invertibility_report,
    solve_operator_equation,
)
from .systems import Driver, Plant, pbh

__all__ = [
    "StabilityCertificate",
    "DesignResult",
    "default_eps_grid",
    "certify_low_gain",
    "design_forwarding",
    "design_lowgain_cd",
    "design_lowgain_cp",
    "design_stabilizer",
    "STAB_PATHWAYS",
]

STAB_PATHWAYS = ("3a1a", "3a1b", "3a2a", "3a2b", "3a3a", "3a3b")


def default_eps_grid(lo: float = 1e-4, hi: float = 1e-1, npts: int = 20) -> np.ndarray:
    """Log-spaced epsilon sweep used by the low-gain designs."""
    return np.geomspace(lo, hi, npts)


@dataclass(frozen=True)
class StabilityCertificate:
    """Stability evidence attached to a design.

    ``kind == "hurwitz"``: plain spectral abscissa of the closed loop.
    ``kind == "low_gain"``: over the swept grid prefix up to
    ``epsilon_star`` the abscissa satisfies abscissa(eps) <= -c_margin*eps.
    """

    kind: str
    abscissa: float
    epsilon_star: float | None = None
    c_margin: float | None = None
    grid: np.ndarray | None = field(default=None, repr=False)
    abscissas: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "abscissa": self.abscissa}
        if self.kind == "low_gain":
            out["epsilon_star"] = self.epsilon_star
            out["c_margin"] = self.c_margin
        return out


@dataclass(frozen=True)
class DesignResult:
    """A completed stabilizer design.

    ``closed_loop`` is the realization in the pathway's natural coordinates
    ((x, zeta) for the cd routes, (xi, eta) for the cp routes);
    ``closed_loop_original`` is the equivalent matrix in the raw (x, eta)
    coordinates with the total feedback u = state_gain x + eta_gain eta.
    """

    pathway: str
    K: np.ndarray
    K_eta: np.ndarray
    G_used: np.ndarray
    M_or_Pi: np.ndarray
    epsilon: float | None
    closed_loop: np.ndarray
    certificate: StabilityCertificate
    state_gain: np.ndarray
    eta_gain: np.ndarray
    closed_loop_original: np.ndarray
    operator_value: np.ndarray

    def gains_dict(self) -> dict:
        return {
            "K": self.K.tolist(),
            "K_eta": self.K_eta.tolist(),
            "G_used": self.G_used.tolist(),
            "state_gain": self.state_gain.tolist(),
            "eta_gain": self.eta_gain.tolist(),
        }


def certify_low_gain(family, eps_grid) -> StabilityCertificate:
    """Certify abscissa(eps) <= -c*eps over the longest feasible grid prefix.

    ``family`` maps a positive epsilon to a square matrix.  The certificate
    reports the largest grid prefix on which every abscissa is strictly
    negative, with c the worst observed abscissa/epsilon ratio; fewer than
    five qualifying points raises :class:`NoEpsilonFound`.
    """
    grid = np.asarray(eps_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("eps_grid must be positive and strictly increasing")
    abscissas = np.array([eigenvalues(family(e)).abscissa for e in grid])
    negative = abscissas < 0
    prefix = int(np.argmin(negative)) if not negative.all() else len(grid)
    if prefix < 5:
        raise NoEpsilonFound(
            f"only {prefix} leading grid points are stable; need at least 5"
        )
    ratios = -abscissas[:prefix] / grid[:prefix]
    c_margin = float(ratios.min())
    eps_star = float(grid[prefix - 1])
    return StabilityCertificate(
        "low_gain",
        float(abscissas[prefix - 1]),
        epsilon_star=eps_star,
        c_margin=c_margin,
        grid=grid[:prefix],
        abscissas=abscissas[:prefix],
    )


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------

def _identity_weights(weights, n, m):
    if weights is None:
        return np.eye(n), np.eye(m)
    q, r = weights
    q = np.eye(n) if q is None else as_matrix(q, "Q")
    r = np.eye(m) if r is None else as_matrix(r, "R")
    return q, r


def _state_gain_with_gap(plant: Plant, f: np.ndarray, weights, retries: int = 3):
    """LQR gain K with A + BK Hurwitz and spectrum disjoint from eig(F).

    The spectral gap is enforced by re-solving with Q inflated by the
    identity, up to ``retries`` times.
    """
    q, r = _identity_weights(weights, plant.n, plant.m)
    f_eigs = np.linalg.eigvals(f)
    last_exc = None
    for _ in range(retries + 1):
        k, _ = lqr_gain(plant.A, plant.B, q, r)
        try:
            check_spectral_gap(np.linalg.eigvals(plant.A + plant.B @ k), f_eigs)
            return k
        except SpectraOverlap as exc:
            last_exc = exc
            q = q + np.eye(plant.n)
    raise last_exc


def _resolve_k(plant: Plant, f: np.ndarray, k, k_weights, allow_zero: bool):
    """Preliminary feedback: user-provided, zero for a Hurwitz A, or LQR."""
    if k is not None:
        k = as_matrix(k, "K")
        acl = plant.A + plant.B @ k
        if not eigenvalues(acl).is_hurwitz():
            raise NotHurwitz("provided K does not make A + BK Hurwitz")
        check_spectral_gap(np.linalg.eigvals(acl), np.linalg.eigvals(f))
        return k
    if allow_zero and eigenvalues(plant.A).is_hurwitz():
        k = np.zeros((plant.m, plant.n))
        check_spectral_gap(np.linalg.eigvals(plant.A), np.linalg.eigvals(f))
        return k
    return _state_gain_with_gap(plant, f, k_weights)


def _check_f_neutral(f: np.ndarray) -> None:
    spec = eigenvalues(f)
    if not spec.in_closed_left_half_plane():
        raise FNotNeutrallyStable(
            f"eig(F) must lie in Re <= 0; abscissa is {spec.abscissa:.3e}"
        )


def _require_detectable_pair(f, k_eta) -> None:
    res = pbh(f, k_eta, "detectable")
    if not res.verdict:
        raise NotDetectable(
            f"(F, K_eta) is not detectable (witness eigenvalue {res.witness})"
        )


def _stabilizable_image_or_raise(plant_t: Plant, f, g, value) -> None:
    res = pbh(f, value, "stabilizable")
    if res.verdict:
        return
    report = right_invertibility_report(plant_t, f, g=g)
    raise RankConditionFailed(
        "the steady-state actuation pair (F, cd(G)) is not stabilizable; "
        f"rank condition holds on the unstable spectrum: "
        f"{report.rosenbrock_unstable_ok}, (F, G) stabilizable: "
        f"{report.transfer.hypothesis_weak.verdict}",
        witness=res.witness,
    )


def _invertibility_or_raise(plant_t: Plant, f) -> None:
    if not plant_t.is_square:
        raise NotSquarePlant(
            f"pathway requires p == m, got p = {plant_t.p}, m = {plant_t.m}"
        )
    ok, witnesses = invertibility_ok(plant_t, f)
    if not ok:
        witness = witnesses[0].eigenvalue if witnesses else None
        raise RankConditionFailed(
            "the system matrix is singular at an eigenvalue of F; the "
            "cascade operators are not invertible",
            witness=witness,
        )


def _closed_loop_original(plant: Plant, f, g, state_gain, eta_gain) -> np.ndarray:
    """Autonomous (x, eta) matrix under u = state_gain x + eta_gain eta."""
    n, nu = plant.n, f.shape[0]
    a11 = plant.A + plant.B @ state_gain
    a12 = plant.B @ eta_gain
    a21 = g @ (plant.C + plant.D @ state_gain)
    a22 = f + g @ plant.D @ eta_gain
    return np.block([[a11, a12], [a21, a22]])


# ---------------------------------------------------------------------------
# pathways
# ---------------------------------------------------------------------------

def design_forwarding(
    plant: Plant,
    driver: Driver,
    mode: str = "fix_G",
    given=None,
    K=None,
    k_weights=None,
    gain_weights=None,
) -> DesignResult:
    """Exact recursive design through the deviation coordinate (3a1a/3a1b).

    The preliminary gain K decouples the cascade; the remaining freedom is
    either a gain K_eta stabilizing (F, cd(G)) (``fix_G``) or, for square
    plants, an injection G solving cd(G) = L for a stabilizing L
    (``fix_Keta``, with ``given`` the fixed K_eta).  The closed loop in
    (x, zeta) coordinates is block triangular; the returned feedback in the
    original coordinates is u = (K - K_eta M) x + K_eta eta.
    """
    f = driver.F
    k = _resolve_k(plant, f, K, k_weights, allow_zero=False)
    plant_t = plant.state_feedback(k)
    fac = SscFactory(plant_t, f)

    if mode == "fix_G":
        g = driver.G if given is None else as_matrix(given, "G")
        dsol = fac.dual(g)
        _stabilizable_image_or_raise(plant_t, f, g, dsol.value)
        q2, r2 = _identity_weights(gain_weights, driver.nu, plant.m)
        k_eta, _ = lqr_gain(f, dsol.value, q2, r2)
        pathway = "3a1a"
    elif mode == "fix_Keta":
        if given is None:
            raise ValueError("fix_Keta requires the fixed K_eta as `given`")
        k_eta = as_matrix(given, "K_eta")
        _require_detectable_pair(f, k_eta)
        _invertibility_or_raise(plant_t, f)
        q2, r2 = _identity_weights(gain_weights, driver.nu, plant.m)
        l_gain = dual_lqr_gain(f, k_eta, q2, r2)
        g = solve_operator_equation(plant_t, f, "dual", l_gain)
        dsol = fac.dual(g)
        pathway = "3a1b"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    m_mat = dsol.sylvester
    cd_val = dsol.value
    nu = driver.nu
    closed = np.block([
        [plant_t.A, plant.B @ k_eta],
        [np.zeros((nu, plant.n)), f + cd_val @ k_eta],
    ])
    state_gain = k - k_eta @ m_mat
    cert = StabilityCertificate("hurwitz", eigenvalues(closed).abscissa)
    return DesignResult(
        pathway=pathway,
        K=k,
        K_eta=k_eta,
        G_used=g,
        M_or_Pi=m_mat,
        epsilon=None,
        closed_loop=closed,
        certificate=cert,
        state_gain=state_gain,
        eta_gain=k_eta,
        closed_loop_original=_closed_loop_original(plant, f, g, state_gain, k_eta),
        operator_value=cd_val,
    )


def design_lowgain_cd(
    plant: Plant,
    driver: Driver,
    mode: str = "fix_G",
    given=None,
    K=None,
    eps_grid=None,
    k_weights=None,
    gain_weights=None,
) -> DesignResult:
    """Low-gain design through the actuation operator cd (3a2a/3a2b).

    Feedback u = K x + K_eta eta with no deviation coordinate; requires
    eig(F) in the closed left half-plane.  The epsilon-scaled gain family
    is certified a posteriori over ``eps_grid`` and realized at the largest
    certified epsilon.
    """
    f = driver.F
    _check_f_neutral(f)
    k = _resolve_k(plant, f, K, k_weights, allow_zero=True)
    plant_t = plant.state_feedback(k)
    fac = SscFactory(plant_t, f)
    a_t, b = plant_t.A, plant_t.B
    nu = driver.nu
    grid = default_eps_grid() if eps_grid is None else np.asarray(eps_grid)

    if mode == "fix_G":
        g0 = driver.G if given is None else as_matrix(given, "G")
        dsol = fac.dual(g0)
        _stabilizable_image_or_raise(plant_t, f, g0, dsol.value)
        q2, r2 = _identity_weights(gain_weights, nu, plant.m)
        k_eta0, _ = lqr_gain(f, dsol.value, q2, r2)
        m0, cd0 = dsol.sylvester, dsol.value

        def family(eps: float) -> np.ndarray:
            k_eta = eps * k_eta0
            return np.block([
                [a_t + b @ k_eta @ m0, b @ k_eta],
                [cd0 @ k_eta @ m0, f + cd0 @ k_eta],
            ])

        cert = certify_low_gain(family, grid)
        eps = cert.epsilon_star
        k_eta = eps * k_eta0
        g = g0
        m_mat = m0
        cd_val = cd0
        pathway = "3a2a"
    elif mode == "fix_Keta":
        if given is None:
            raise ValueError("fix_Keta requires the fixed K_eta as `given`")
        k_eta = as_matrix(given, "K_eta")
        _require_detectable_pair(f, k_eta)
        _invertibility_or_raise(plant_t, f)
        q2, r2 = _identity_weights(gain_weights, nu, plant.m)
        l0 = dual_lqr_gain(f, k_eta, q2, r2)
        g0 = solve_operator_equation(plant_t, f, "dual", l0)
        m0 = fac.dual(g0).sylvester

        def family(eps: float) -> np.ndarray:
            # G(eps) = eps G0, hence M(eps) = eps M0 and cd(G(eps)) = eps L0
            return np.block([
                [a_t + eps * b @ k_eta @ m0, b @ k_eta],
                [eps**2 * l0 @ k_eta @ m0, f + eps * l0 @ k_eta],
            ])

        cert = certify_low_gain(family, grid)
        eps = cert.epsilon_star
        g = eps * g0
        m_mat = eps * m0
        cd_val = eps * l0
        pathway = "3a2b"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    return DesignResult(
        pathway=pathway,
        K=k,
        K_eta=k_eta,
        G_used=g,
        M_or_Pi=m_mat,
        epsilon=eps,
        closed_loop=family(eps),
        certificate=cert,
        state_gain=k,
        eta_gain=k_eta,
        closed_loop_original=_closed_loop_original(plant, f, g, k, k_eta),
        operator_value=cd_val,
    )


def design_lowgain_cp(
    plant: Plant,
    driver: Driver,
    mode: str = "fix_G",
    given=None,
    K=None,
    eps_grid=None,
    k_weights=None,
    gain_weights=None,
) -> DesignResult:
    """Low-gain design through the observation operator cp (3a3a/3a3b).

    ``fix_G`` designs a target Z(eps) with F + G Z(eps) low-gain stable and
    lifts it through the operator equation cp(K_eta) = Z; only moment-level
    information about the plant enters the gain synthesis.  ``fix_Keta``
    fixes the gain and designs the injection G(eps) against the detectable
    pair (F, cp(K_eta)).
    """
    f = driver.F
    _check_f_neutral(f)
    k = _resolve_k(plant, f, K, k_weights, allow_zero=True)
    plant_t = plant.state_feedback(k)
    fac = SscFactory(plant_t, f)
    a_t, b, c_t = plant_t.A, plant_t.B, plant_t.C
    nu = driver.nu
    grid = default_eps_grid() if eps_grid is None else np.asarray(eps_grid)

    if mode == "fix_G":
        g = driver.G if given is None else as_matrix(given, "G")
        report = right_invertibility_report(plant_t, f)
        if not report.rosenbrock_ok:
            witness = report.witnesses[0].eigenvalue if report.witnesses else None
            raise RankConditionFailed(
                "the system matrix loses row rank at an eigenvalue of F; "
                "the observation operator is not surjective",
                witness=witness,
            )
        res = pbh(f, g, "stabilizable")
        if not res.verdict:
            raise RankConditionFailed(
                "(F, G) is not stabilizable", witness=res.witness
            )
        q2, r2 = _identity_weights(gain_weights, nu, plant.p)
        z0, _ = lqr_gain(f, g, q2, r2)
        k_eta0 = solve_operator_equation(plant_t, f, "primal", z0)
        psol = fac.primal(k_eta0)
        pi0 = psol.sylvester

        def family(eps: float) -> np.ndarray:
            # K_eta(eps) = eps K0, hence Pi(eps) = eps Pi0, cp = eps Z0
            return np.block([
                [a_t - eps * pi0 @ g @ c_t, -(eps**2) * pi0 @ g @ z0],
                [g @ c_t, f + eps * g @ z0],
            ])

        cert = certify_low_gain(family, grid)
        eps = cert.epsilon_star
        k_eta = eps * k_eta0
        pi_mat = eps * pi0
        cp_val = eps * z0
        g_used = g
        pathway = "3a3a"
    elif mode == "fix_Keta":
        if given is None:
            raise ValueError("fix_Keta requires the fixed K_eta as `given`")
        if not plant.is_square:
            raise NotSquarePlant(
                f"pathway requires p == m, got p = {plant.p}, m = {plant.m}"
            )
        k_eta = as_matrix(given, "K_eta")
        _require_detectable_pair(f, k_eta)
        psol = fac.primal(k_eta)
        pi_mat, y_val = psol.sylvester, psol.value
        res = pbh(f, y_val, "detectable")
        if not res.verdict:
            raise RankConditionFailed(
                "the steady-state observation pair (F, cp(K_eta)) is not "
                "detectable",
                witness=res.witness,
            )
        q2, r2 = _identity_weights(gain_weights, nu, plant.p)
        g0 = dual_lqr_gain(f, y_val, q2, r2)

        def family(eps: float) -> np.ndarray:
            g_eps = eps * g0
            return np.block([
                [a_t - pi_mat @ g_eps @ c_t, -pi_mat @ g_eps @ y_val],
                [g_eps @ c_t, f + g_eps @ y_val],
            ])

        cert = certify_low_gain(family, grid)
        eps = cert.epsilon_star
        g_used = eps * g0
        cp_val = y_val
        pathway = "3a3b"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    return DesignResult(
        pathway=pathway,
        K=k,
        K_eta=k_eta,
        G_used=g_used,
        M_or_Pi=pi_mat,
        epsilon=eps,
        closed_loop=family(eps),
        certificate=cert,
        state_gain=k,
        eta_gain=k_eta,
        closed_loop_original=_closed_loop_original(plant, f, g_used, k, k_eta),
        operator_value=cp_val,
    )


def design_stabilizer(plant: Plant, driver: Driver, method: str, **kwargs) -> DesignResult:
    """Dispatch a stabilizer design by pathway code (see module docstring)."""
    method = method.lower()
    table = {
        "3a1a": (design_forwarding, "fix_G"),
        "3a1b": (design_forwarding, "fix_Keta"),
        "3a2a": (design_lowgain_cd, "fix_G"),
        "3a2b": (design_lowgain_cd, "fix_Keta"),
        "3a3a": (design_lowgain_cp, "fix_G"),
        "3a3b": (design_lowgain_cp, "fix_Keta"),
    }
    if method not in table:
        raise ValueError(f"unknown stabilizer pathway {method!r}")
    func, mode = table[method]
    return func(plant, driver, mode=mode, **kwargs)
