"""Invariance equations and observers for cascades with one nonlinear side.

When a nonlinear signal generator eta' = f(eta) drives an LTI plant
through u = h(eta), the invariant-manifold function pi solves the primal
invariance equation

    (d pi / d eta)(eta) f(eta) - A pi(eta) = B h(eta),      pi(0) = 0,

whose unique solution (for Hurwitz A and bounded backward orbits) is the
convolution integral pi(eta) = int_0^inf e^{A s} B h(etabar(-s, eta)) ds
over the backward orbit.  Dually, for a nonlinear plant x' = a(x) feeding
an LTI driver through v = c(x), mu solves

    (d mu / d x)(x) a(x) - F mu(x) = G c(x),                mu(0) = 0,

with mu(x) = int_0^inf e^{F s} G c(xbar(s, x)) ds over the forward orbit.
Both are computed here by trajectory quadrature (RK4 orbits, composite
Simpson) and validated against finite-difference residuals.  The module
also provides the pointwise nonlinear cascade operators, a globally
convergent observer built from a monotone output factorization and a
differential detectability certificate, and the worked oscillator example
with its closed-form invariant manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    KappaTooSmall,
    NotConvergent,
    NotHurwitz,
    O1Violated,
    O2Violated,
    ResidualTooLarge,
    TrajectoryEscape,
)
from .linsolve import AXIS_BAND, as_matrix, eigenvalues, expm, numerical_rank
from .systems import Plant

__all__ = [
    "VectorField",
    "linear_field",
    "register_field",
    "get_field",
    "InvarianceSolution",
    "solve_invariance_primal",
    "solve_invariance_dual",
    "nonlinear_cp",
    "nonlinear_cd",
    "NlObserverDesign",
    "design_nl_observer",
    "coupled_observer_field",
    "VdpModel",
    "vdp_example",
]


@dataclass(frozen=True)
class VectorField:
    """A finite-dimensional vector field with an optional analytic Jacobian.

    ``evaluate`` maps a state array to its derivative; when ``jacobian`` is
    omitted a central finite difference is used.
    """

    dim: int
    evaluate: callable
    jacobian: callable | None = None
    name: str = ""

    def __call__(self, x):
        return np.asarray(self.evaluate(np.asarray(x, dtype=float)), dtype=float)

    def jac(self, x, fd_step: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        n = len(x)
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = fd_step
            cols.append((self(x + e) - self(x - e)) / (2 * fd_step))
        return np.column_stack(cols)


def linear_field(f_matrix) -> VectorField:
    """The linear field eta -> F eta (used by the LTI specialization tests)."""
    f = as_matrix(f_matrix, "F")
    return VectorField(
        f.shape[0], lambda x: f @ x, lambda x: f, name="linear"
    )


# Named registry for demo/user fields; no dynamic code loading.
_FIELD_REGISTRY: dict[str, VectorField] = {}


def register_field(name: str, field_obj: VectorField) -> None:
    _FIELD_REGISTRY[name] = field_obj


def get_field(name: str) -> VectorField:
    try:
        return _FIELD_REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown field {name!r}; registered: {sorted(_FIELD_REGISTRY)}"
        ) from None


@dataclass
class InvarianceSolution:
    """Sampled invariant-manifold function with an evaluable extension.

    ``evaluate`` recomputes the quadrature at unseen arguments (with a
    cache), so the solution behaves as a function rather than a lookup
    table.  ``residual_stats`` records the invariance-equation defect over
    the validation points.
    """

    points: np.ndarray
    values: np.ndarray
    evaluate: callable
    residual_stats: dict = field(default_factory=dict)
    which: str = "primal"

    def jacobian(self, x, fd_step: float = 1e-4) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = []
        for i in range(len(x)):
            e = np.zeros(len(x))
            e[i] = fd_step
            cols.append(
                (self.evaluate(x + e) - self.evaluate(x - e)) / (2 * fd_step)
            )
        return np.column_stack(cols)


def _simpson_weights(nsteps: int, step: float) -> np.ndarray:
    # nsteps is even; nsteps + 1 nodes
    w = np.ones(nsteps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (step / 3.0)


def _rk4_step(func, x, h):
    k1 = func(x)
    k2 = func(x + 0.5 * h * k1)
    k3 = func(x + 0.5 * h * k2)
    k4 = func(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_invariance_primal(
    f: VectorField,
    h,
    a,
    b,
    points,
    step: float = 1e-2,
    trunc_tol: float = 1e-8,
    traj_bound: float = 1e6,
    residual_tol: float = 1e-4,
    validate: bool = True,
    max_validate: int = 8,
) -> InvarianceSolution:
    """Solve the primal invariance equation at the given generator states.

    Backward orbits of ``f`` are integrated with fixed-step RK4 over a
    horizon chosen so the plant propagator has decayed below ``trunc_tol``;
    the convolution integral is evaluated by composite Simpson on the same
    grid.  When ``validate`` is set, the invariance residual (with a
    finite-difference Jacobian) is checked on a subset of the points and
    at the origin.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    spec = eigenvalues(a)
    if not spec.is_hurwitz():
        raise NotHurwitz("the plant matrix must be Hurwitz")
    # horizon: ||e^{A T}|| below trunc_tol, grown if the estimate from the
    # abscissa alone is optimistic (non-normal transients)
    horizon = math.log(1.0 / trunc_tol) / abs(spec.abscissa)
    for _ in range(60):
        if np.linalg.norm(expm(a, horizon), 2) <= trunc_tol:
            break
        horizon *= 1.3
    nsteps = int(math.ceil(horizon / step))
    nsteps += nsteps % 2
    weights = _simpson_weights(nsteps, step)
    e_step = expm(a, step)

    def back(x):
        return -f(x)

    def compute(eta0):
        eta0 = np.asarray(eta0, dtype=float)
        gamma = eta0.copy()
        prop = np.eye(a.shape[0])
        acc = weights[0] * (prop @ b @ np.asarray(h(gamma), dtype=float))
        for k in range(1, nsteps + 1):
            gamma = _rk4_step(back, gamma, step)
            if not np.all(np.isfinite(gamma)) or np.linalg.norm(gamma) > traj_bound:
                raise TrajectoryEscape(
                    f"backward orbit from {eta0} left the bound at "
                    f"tau = {k * step:.3g}"
                )
            prop = prop @ e_step
            acc = acc + weights[k] * (prop @ b @ np.asarray(h(gamma), dtype=float))
        return acc

    cache: dict[tuple, np.ndarray] = {}

    def evaluate(eta):
        key = tuple(np.round(np.asarray(eta, dtype=float), 12))
        if key not in cache:
            cache[key] = compute(eta)
        return cache[key]

    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.array([evaluate(pt) for pt in points])
    sol = InvarianceSolution(points, values, evaluate, which="primal")

    if validate:
        stats = _validate_invariance(
            sol, lambda x: f(x), h, a, b, points[:max_validate]
        )
        origin = np.zeros(points.shape[1])
        stats["origin_norm"] = float(np.linalg.norm(evaluate(origin)))
        sol.residual_stats = stats
        if stats["max"] > residual_tol:
            raise ResidualTooLarge(
                f"invariance residual {stats['max']:.3e} exceeds "
                f"{residual_tol:.1e}"
            )
    return sol


def _validate_invariance(sol, dyn, out_map, a, b, pts) -> dict:
    worst, total = 0.0, 0.0
    for pt in pts:
        jac = sol.jacobian(pt)
        res = jac @ dyn(pt) - a @ sol.evaluate(pt) - b @ np.asarray(out_map(pt))
        r = float(np.max(np.abs(res)))
        worst = max(worst, r)
        total += r
    return {"max": worst, "mean": total / max(len(pts), 1)}


def _axis_semisimple(f: np.ndarray) -> bool:
    vals = np.linalg.eigvals(f)
    radius = np.abs(vals).max(initial=0.0)
    tol = 1e-7 * (1.0 + radius)
    for lam in vals:
        if abs(lam.real) > AXIS_BAND:
            continue
        alg = int(np.sum(np.abs(vals - lam) <= tol))
        geo = f.shape[0] - numerical_rank(f - lam * np.eye(f.shape[0]))
        if geo < alg:
            return False
    return True


def solve_invariance_dual(
    a_field: VectorField,
    b_field,
    c,
    d,
    f,
    g,
    points,
    step: float = 1e-2,
    horizon_max: float = 200.0,
    conv_tol: float = 1e-9,
    residual_tol: float = 1e-4,
    validate: bool = True,
    max_validate: int = 8,
) -> InvarianceSolution:
    """Solve the dual invariance equation at the given plant states.

    Forward orbits of ``a_field`` must approach the origin (globally
    asymptotically stable origin); eig(F) must lie in the closed left
    half-plane with semisimple axis eigenvalues.  ``b_field`` and ``d``
    are accepted for signature symmetry with the pointwise dual operator
    and may be None.
    """
    f = as_matrix(f, "F")
    g = as_matrix(g, "G")
    spec = eigenvalues(f)
    if not spec.in_closed_left_half_plane() or not _axis_semisimple(f):
        raise NotHurwitz(
            "F must have spectrum in Re <= 0 with semisimple axis eigenvalues"
        )

    def compute(x0):
        x0 = np.asarray(x0, dtype=float)
        xbar = x0.copy()
        scale = 1.0 + np.linalg.norm(x0)
        e_step = expm(f, step)
        prop = np.eye(f.shape[0])
        samples = [prop @ g @ np.asarray(c(xbar), dtype=float)]
        nmax = int(math.ceil(horizon_max / step))
        converged_at = None
        for k in range(1, nmax + 1):
            xbar = _rk4_step(a_field, xbar, step)
            if not np.all(np.isfinite(xbar)):
                raise NotConvergent("forward orbit blew up")
            prop = prop @ e_step
            samples.append(prop @ g @ np.asarray(c(xbar), dtype=float))
            if np.linalg.norm(xbar) <= conv_tol * scale and k % 2 == 0:
                converged_at = k
                break
        if converged_at is None:
            raise NotConvergent(
                f"orbit from {x0} did not reach {conv_tol:.1e} within "
                f"t = {horizon_max}"
            )
        weights = _simpson_weights(converged_at, step)
        return np.einsum("k,kj->j", weights, np.array(samples))

    cache: dict[tuple, np.ndarray] = {}

    def evaluate(x):
        key = tuple(np.round(np.asarray(x, dtype=float), 12))
        if key not in cache:
            cache[key] = compute(x)
        return cache[key]

    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.array([evaluate(pt) for pt in points])
    sol = InvarianceSolution(points, values, evaluate, which="dual")

    if validate:
        stats = _validate_invariance(
            sol, lambda x: a_field(x), c, f, g, points[:max_validate]
        )
        origin = np.zeros(points.shape[1])
        stats["origin_norm"] = float(np.linalg.norm(evaluate(origin)))
        sol.residual_stats = stats
        if stats["max"] > residual_tol:
            raise ResidualTooLarge(
                f"invariance residual {stats['max']:.3e} exceeds "
                f"{residual_tol:.1e}"
            )
    return sol


def nonlinear_cp(pi, c, d, h):
    """Pointwise steady-state observation map eta -> C pi(eta) + D h(eta)."""
    c = as_matrix(c, "C")
    d = as_matrix(d, "D")
    pi_eval = getattr(pi, "evaluate", pi)

    def value(eta):
        eta = np.asarray(eta, dtype=float)
        return c @ np.asarray(pi_eval(eta)) + d @ np.asarray(h(eta))

    return value


def nonlinear_cd(mu: InvarianceSolution, b_field, g, d_map=None):
    """Pointwise steady-state actuation map x -> -J_mu(x) b(x) + G d(x)."""
    g = as_matrix(g, "G")

    def value(x):
        x = np.asarray(x, dtype=float)
        out = -mu.jacobian(x) @ np.asarray(b_field(x))
        if d_map is not None:
            out = out + g @ np.asarray(d_map(x))
        return out

    return value


# ---------------------------------------------------------------------------
# observer design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NlObserverDesign:
    """Certified observer data for the nonlinear-generator cascade.

    The injection gain is K_eta = kappa P^-1 L' R; the plant estimate is
    corrected through the manifold Jacobian: w_eta = K_eta (yhat - y),
    w_x = J_pi(etahat) w_eta.  ``o2_margin`` is the worst certified
    eps in the differential detectability inequality over the grid.
    """

    L: np.ndarray
    R: np.ndarray
    P: np.ndarray
    rho: float
    kappa: float
    K_eta: np.ndarray
    pi: callable
    pi_jacobian: callable
    o1_checked: bool
    o2_margin: float
    grid: np.ndarray = field(repr=False)

    def injections(self):
        """(w_eta, w_x) as functions of (yhat - y, etahat)."""

        def w_eta(dy):
            return self.K_eta @ np.atleast_1d(dy)

        def w_x(dy, etahat):
            return self.pi_jacobian(etahat) @ w_eta(dy)

        return w_eta, w_x


def design_nl_observer(
    plant: Plant,
    f: VectorField,
    h,
    *,
    L,
    R,
    P,
    rho: float,
    kappa: float,
    grid,
    pi=None,
    pi_jacobian=None,
    psi=None,
    factorization_rtol: float = 1e-6,
) -> NlObserverDesign:
    """Certify and assemble the invariance-based cascade observer.

    Requirements checked here: the plant is strictly proper with Hurwitz A;
    kappa >= rho; the differential detectability inequality

        P J_f(eta) + J_f(eta)' P - 2 rho L' L <= -2 eps I

    holds at every grid point (worst eps returned as ``o2_margin``); and,
    when ``psi`` is given, the observation map factors as psi(L eta) with
    R-monotone psi on the grid.  ``pi`` may be a callable closed form or
    omitted, in which case the invariance integral is solved by quadrature
    at the grid points.
    """
    l_mat = as_matrix(L, "L")
    r_mat = as_matrix(R, "R")
    p_mat = as_matrix(P, "P")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if np.abs(plant.D).max(initial=0.0) > 0:
        raise ValueError("the observer construction requires D = 0")
    if not eigenvalues(plant.A).is_hurwitz():
        raise NotHurwitz("the plant matrix must be Hurwitz")
    if kappa < rho:
        raise KappaTooSmall(f"kappa = {kappa} must be at least rho = {rho}")
    if np.any(np.linalg.eigvalsh((p_mat + p_mat.T) / 2) <= 0):
        raise ValueError("P must be positive definite")
    if np.any(np.linalg.eigvalsh((r_mat + r_mat.T) / 2) <= 0):
        raise ValueError("R must be positive definite")

    # differential detectability certificate on the grid
    ltl = l_mat.T @ l_mat
    worst_eps = np.inf
    worst_point = None
    for eta in grid:
        jac = f.jac(eta)
        s = p_mat @ jac + jac.T @ p_mat - 2.0 * rho * ltl
        eps_here = -float(np.linalg.eigvalsh((s + s.T) / 2).max()) / 2.0
        if eps_here < worst_eps:
            worst_eps, worst_point = eps_here, eta
    if worst_eps <= 0:
        raise O2Violated(
            f"differential detectability fails on the grid "
            f"(margin {worst_eps:.3e})",
            point=worst_point,
        )

    if pi is None:
        sol = solve_invariance_primal(f, h, plant.A, plant.B, grid)
        pi_callable = sol.evaluate
        if pi_jacobian is None:
            pi_jacobian = sol.jacobian
    else:
        pi_callable = getattr(pi, "evaluate", pi)
        if pi_jacobian is None:
            fd = InvarianceSolution(
                np.zeros((0, f.dim)), np.zeros((0, plant.n)), pi_callable
            )
            pi_jacobian = fd.jacobian

    o1_checked = False
    if psi is not None:
        cp_map = nonlinear_cp(pi_callable, plant.C, plant.D, h)
        fd_step = 1e-6
        for eta in grid:
            val = cp_map(eta)
            s_arg = l_mat @ eta
            want = np.atleast_1d(psi(s_arg))
            scale = max(1.0, float(np.abs(want).max()))
            if np.max(np.abs(val - want)) > factorization_rtol * scale:
                raise O1Violated(
                    "observation map does not factor through psi(L eta)",
                    point=eta,
                )
            # monotonicity of psi at the visited argument
            p_dim = l_mat.shape[0]
            jac_psi = np.column_stack([
                (
                    np.atleast_1d(psi(s_arg + fd_step * e))
                    - np.atleast_1d(psi(s_arg - fd_step * e))
                )
                / (2 * fd_step)
                for e in np.eye(p_dim)
            ])
            mono = r_mat @ jac_psi + jac_psi.T @ r_mat
            if np.linalg.eigvalsh((mono + mono.T) / 2).min() < 2.0 - 1e-6:
                raise O1Violated(
                    "psi is not strongly monotone under R at a grid point",
                    point=eta,
                )
        o1_checked = True

    k_eta = kappa * np.linalg.solve(p_mat, l_mat.T @ r_mat)
    return NlObserverDesign(
        L=l_mat,
        R=r_mat,
        P=p_mat,
        rho=float(rho),
        kappa=float(kappa),
        K_eta=k_eta,
        pi=pi_callable,
        pi_jacobian=pi_jacobian,
        o1_checked=o1_checked,
        o2_margin=float(worst_eps),
        grid=grid,
    )


def coupled_observer_field(model, design: NlObserverDesign, ubar=None):
    """Vector field of (eta, x, xhat, etahat) for plant + observer runs.

    ``ubar`` is an optional known input map t-less (state-independent
    constant vector) added to both the plant and the observer; the
    estimation error is unaffected by it.
    """
    plant = model.plant
    f, h = model.f, model.h
    n, nu = plant.n, f.dim
    a_mat, b_mat, c_mat = plant.A, plant.B, plant.C
    k_eta = design.K_eta
    jac_pi = design.pi_jacobian
    u_extra = np.zeros(b_mat.shape[1]) if ubar is None else np.asarray(ubar)

    def fieldfun(state):
        eta = state[:nu]
        x = state[nu : nu + n]
        xhat = state[nu + n : nu + 2 * n]
        etahat = state[nu + 2 * n :]
        dy = (c_mat @ (xhat - x)).ravel()
        w_eta = k_eta @ dy
        w_x = jac_pi(etahat) @ w_eta
        deta = f(eta)
        dx = a_mat @ x + b_mat @ (np.asarray(h(eta)) + u_extra)
        dxhat = a_mat @ xhat + b_mat @ (np.asarray(h(etahat)) + u_extra) - w_x
        detahat = f(etahat) - w_eta
        return np.concatenate([deta, dx, dxhat, detahat])

    return VectorField(2 * (n + nu), fieldfun, name="coupled-observer")


# ---------------------------------------------------------------------------
# worked example: linear plant driven by a Van der Pol oscillator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VdpModel:
    """Oscillator-driven plant with a closed-form invariant manifold.

    The plant matrices are constructed from the oscillator strength mu and
    the row of positive parameters so that pi is the cubic-linear form
    pi_i(eta) = a_i eta1^3 + b_i eta2 + c_i eta1 and the observation map
    collapses to k * eta1.
    """

    plant: Plant
    f: VectorField
    h: callable
    pi: callable
    pi_jacobian: callable
    constants: dict
    L: np.ndarray
    R: np.ndarray
    k: float
    psi: callable
    mu: float

    def P(self, q: float) -> np.ndarray:
        return np.array([[1.0, -q], [-q, 1.0]])

    def certification_grid(
        self, eta1_lo: float = 1.3, eta1_hi: float = 2.2, eta2_max: float = 3.0,
        n1: int = 9, n2: int = 13,
    ) -> np.ndarray:
        """Grid on the annular region where the detectability certificate
        holds (the oscillator's limit cycle is attractive from inside, so
        small |eta1| excursions do not destroy convergence)."""
        e1 = np.concatenate([
            np.linspace(-eta1_hi, -eta1_lo, n1),
            np.linspace(eta1_lo, eta1_hi, n1),
        ])
        e2 = np.linspace(-eta2_max, eta2_max, n2)
        return np.array([[a, b] for a in e1 for b in e2])

    def interior_points(self, count: int, rng=None, radius: float = 1.1) -> np.ndarray:
        """Sample points strictly inside the limit cycle (its closest
        approach to the origin is about 1.26 for mu = 3), where backward
        orbits contract to the origin and the invariance integral is
        well-posed."""
        rng = np.random.default_rng(0) if rng is None else rng
        angles = rng.uniform(0.0, 2.0 * np.pi, size=count)
        radii = radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
        return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def vdp_example(
    mu: float = 3.0,
    alpha1: float = 1.0,
    alpha3: float = 1.0,
    alpha4: float = 1.0,
    beta3: float = 1.0,
) -> VdpModel:
    """Construct the oscillator-driven estimation example.

    The second plant parameter row is tied to the first (alpha2 = alpha1),
    which is what makes the closed-form manifold exact.  All remaining
    coefficients follow from the stated parameter formulas.
    """
    alpha2 = alpha1
    abar = alpha1 * alpha4 + alpha2 * alpha3
    a1 = beta3 * alpha2 / abar
    a2 = beta3 * alpha1 / abar
    b1 = 3.0 * a1 / mu
    b2 = 3.0 * a2 / mu
    c1 = (alpha4 * b1 + alpha2 * (b1 + beta3)) / abar
    c2 = (-alpha3 * b1 + alpha1 * (b1 + beta3)) / abar
    kappa1 = b2
    kappa2 = -b1
    beta2 = c1 + (mu + alpha1) * b1 - alpha2 * b2
    beta4 = c2 + (mu + alpha4) * b2 + alpha3 * b1

    a_mat = np.array([[-alpha1, alpha2], [-alpha3, -alpha4]])
    b_mat = np.array([[0.0, beta2], [beta3, beta4]])
    c_mat = np.array([[kappa1, kappa2]])
    plant = Plant(a_mat, b_mat, c_mat, np.zeros((1, 2)))

    def f_eval(eta):
        return np.array([eta[1], mu * (1.0 - eta[0] ** 2) * eta[1] - eta[0]])

    def f_jac(eta):
        return np.array([
            [0.0, 1.0],
            [-2.0 * mu * eta[0] * eta[1] - 1.0, mu * (1.0 - eta[0] ** 2)],
        ])

    f = VectorField(2, f_eval, f_jac, name="vdp")

    def h(eta):
        return np.array([eta[0] + eta[0] ** 3, eta[1]])

    def pi(eta):
        e1, e2 = eta[0], eta[1]
        return np.array([
            a1 * e1**3 + b1 * e2 + c1 * e1,
            a2 * e1**3 + b2 * e2 + c2 * e1,
        ])

    def pi_jacobian(eta):
        e1 = eta[0]
        return np.array([
            [3.0 * a1 * e1**2 + c1, b1],
            [3.0 * a2 * e1**2 + c2, b2],
        ])

    k = 9.0 * beta3**2 / (mu**2 * alpha1 * (alpha3 + alpha4) ** 2)

    def psi(s):
        return k * np.atleast_1d(s)

    constants = {
        "alpha_bar": abar,
        "a1": a1, "a2": a2, "b1": b1, "b2": b2,
        "c1": c1, "c2": c2,
        "kappa1": kappa1, "kappa2": kappa2,
        "beta2": beta2, "beta4": beta4,
        "k": k,
    }
    model = VdpModel(
        plant=plant,
        f=f,
        h=h,
        pi=pi,
        pi_jacobian=pi_jacobian,
        constants=constants,
        L=np.array([[1.0, 0.0]]),
        R=np.array([[1.0 / k]]),
        k=k,
        psi=psi,
        mu=mu,
    )
    register_field("vdp", f)
    return model
