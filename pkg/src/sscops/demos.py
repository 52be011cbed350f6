"""End-to-end demo runs: four-tank regulation/estimation, oscillator observer.

Each runner designs the requested pathway, simulates the resulting closed
loop under the benchmark disturbance, and reports convergence metrics.
Tuning weights below are demo choices, documented here; the pathways
accept arbitrary weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fourtank, nonlinear
from .est_design import ObserverResult, design_estimator
from .linsolve import eigenvalues
from .sim import Trace, simulate_lti, simulate_nl
from .stab_design import DesignResult, design_stabilizer
from .systems import Driver, Plant

__all__ = [
    "DemoRun",
    "fourtank_regulation_design",
    "fourtank_regulation_run",
    "fourtank_estimation_design",
    "fourtank_estimation_run",
    "vdp_observer_run",
    "REG_HORIZON",
]

#: Regulation benchmark horizon (s); slow disturbance components at
#: 0.001 rad/s need tens of thousands of seconds to settle.
REG_HORIZON = 3.0e4

# Demo tuning: preliminary plant gains follow the classic LQR weights for
# this process; driver-side designs weight the internal-model states in
# their frequency-balanced metric (the raw oscillator realization mixes
# entry magnitudes 1 and omega^2, under which identity weights barely move
# the slow modes), with per-method input weights chosen so every pathway
# settles well within the benchmark horizon.
_REG_K_WEIGHTS = (np.diag([3.0, 3.0, 1.0, 1.0]), 0.1 * np.eye(2))


def _balanced_metric(core: np.ndarray, copies: int) -> np.ndarray:
    """State weight equal to identity in balanced oscillator coordinates."""
    q = np.kron(np.diag(core), np.eye(copies)) if copies > 1 else np.diag(core)
    return q


def _reg_metric() -> np.ndarray:
    return _balanced_metric(
        np.array([1.0, 1.0, 1.0 / fourtank.OMEGA1**2, 1.0, 1.0 / fourtank.OMEGA2**2]),
        2,
    )


def _est_metric() -> np.ndarray:
    return _balanced_metric(
        np.array([1.0, 1.0, 1.0 / fourtank.OMEGA1**2, 1.0, 1.0 / fourtank.OMEGA2**2]),
        1,
    )


_REG_GAIN_R = {
    "3a1a": 1e2,
    "3a1b": 1e2,
    "3a2a": 1e0,
    "3a2b": 1e0,
    "3a3a": 1e0,
    "3a3b": 1e0,
}
_EST_LX_WEIGHTS = (np.diag([3.0, 3.0, 1.0, 1.0]), np.eye(1))
_EST_GAIN_R = {
    "b1a": 1e0,
    "b1b": 1e0,
    "b2a": 1e0,
    "b2b": 1e0,
    "b3a": 1e0,
    "b3b": 1e0,
}


@dataclass
class DemoRun:
    """A demo outcome: the design, the simulated trace, and scalar metrics."""

    name: str
    design: object
    trace: Trace
    metrics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        cert = getattr(self.design, "certificate", None)
        out = {"demo": self.name, "metrics": self.metrics}
        if cert is not None:
            out["certificate"] = cert.as_dict()
        if hasattr(self.design, "pathway"):
            out["pathway"] = self.design.pathway
        return out


def _fixed_regulation_keta(driver: Driver) -> np.ndarray:
    """Default fixed gain for the fix-gain pathways: the transposed
    injection pattern, which is detectable against the internal model."""
    return driver.G.T.copy()


def fourtank_regulation_design(
    method: str, eps_grid=None, plant: Plant | None = None,
    driver: Driver | None = None,
) -> DesignResult:
    """Design one regulation pathway on the four-tank benchmark."""
    method = method.lower()
    plant = plant or fourtank.fourtank_plant()
    driver = driver or fourtank.regulation_driver()
    r = _REG_GAIN_R[method]
    kwargs = {
        "k_weights": _REG_K_WEIGHTS,
        "gain_weights": (_reg_metric(), r * np.eye(2)),
    }
    if eps_grid is not None:
        if method in ("3a2a", "3a2b", "3a3a", "3a3b"):
            kwargs["eps_grid"] = eps_grid
    if method.endswith("b"):
        kwargs["given"] = _fixed_regulation_keta(driver)
    return design_stabilizer(plant, driver, method, **kwargs)


def fourtank_regulation_run(
    method: str,
    horizon: float = REG_HORIZON,
    dt: float = 5.0,
    eps_grid=None,
) -> DemoRun:
    """Simulate the regulated four-tank loop under the benchmark disturbance.

    The unmeasured inflow d(t) = 20 + 20 sin(w1 t) + 30 sin(w2 t) enters
    upper tank 4; the internal-model controller must drive both measured
    level errors to zero.  Metrics: peak and final output norms and their
    ratio (the regulation figure of merit).
    """
    plant = fourtank.fourtank_plant()
    driver = fourtank.regulation_driver()
    res = fourtank_regulation_design(method, eps_grid, plant, driver)
    n, nu = plant.n, driver.nu
    e_col = fourtank.disturbance_input_column()
    b_cl = np.vstack([e_col, np.zeros((nu, 1))])
    c_cl = np.hstack([plant.C, np.zeros((2, nu))])
    trace = simulate_lti(
        res.closed_loop_original,
        b_cl,
        c=c_cl,
        input=lambda t: np.atleast_1d(fourtank.disturbance_signal(t)),
        x0=np.zeros(n + nu),
        horizon=horizon,
        dt=dt,
        labels=tuple(
            [f"x{i}" for i in range(n)]
            + [f"eta{i}" for i in range(nu)]
            + ["e1", "e2"]
        ),
    )
    norms = np.linalg.norm(trace.outputs, axis=1)
    peak = float(norms.max())
    final = float(norms[-1])
    metrics = {
        "peak_output_norm": peak,
        "final_output_norm": final,
        "final_over_peak": final / peak if peak else 0.0,
        "abscissa": eigenvalues(res.closed_loop_original).abscissa,
    }
    return DemoRun(f"fourtank-reg-{method}", res, trace, metrics)


def _fixed_estimation_leta(driver: Driver) -> np.ndarray:
    """Default fixed injection for the fix-injection estimator pathways."""
    return np.array([[1.0], [0.0], [1.0], [0.0], [1.0]])


def fourtank_estimation_design(
    method: str, eps_grid=None, plant: Plant | None = None,
    driver: Driver | None = None,
) -> ObserverResult:
    """Design one disturbance-estimator pathway on the four-tank benchmark."""
    method = method.lower()
    plant = plant or fourtank.estimation_plant()
    driver = driver or fourtank.estimation_internal_model()
    r = _EST_GAIN_R[method]
    kwargs = {"gain_weights": (_est_metric(), r * np.eye(1))}
    if method.startswith("b1"):
        kwargs["lx_weights"] = _EST_LX_WEIGHTS
    if eps_grid is not None and method[1] in ("2", "3"):
        kwargs["eps_grid"] = eps_grid
    if method.endswith("b"):
        kwargs["given"] = _fixed_estimation_leta(driver)
    return design_estimator(plant, driver, method, **kwargs)


def _matched_generator_state(driver: Driver, h_used: np.ndarray) -> np.ndarray:
    """Initial driver state that makes h_used reproduce the benchmark d(t).

    When a pathway designs its own coupling map, the modelled cascade can
    still generate the physical disturbance from a different initial
    state; the per-mode coefficients are rescaled through the eigenbasis.
    """
    from .moments import jordan_structure

    h_true = fourtank.estimation_internal_model().H
    eta0_true = fourtank.disturbance_initial_state()
    js = jordan_structure(driver.F)
    eta0 = np.zeros(driver.nu, dtype=complex)
    for blk in js.blocks:
        proj = blk.x_matrix(0)
        c_true = (h_true @ proj @ eta0_true).item()
        denom_vec = h_used @ blk.v  # 1 x m_k
        # solve (h_used restricted to the eigenspace) * theta = c_true
        theta, *_ = np.linalg.lstsq(
            denom_vec.reshape(1, -1), np.array([c_true]), rcond=None
        )
        eta0 = eta0 + (blk.v @ theta).ravel()
    return np.real_if_close(eta0, tol=1e6).real


def fourtank_estimation_run(
    method: str,
    horizon: float | None = None,
    dt: float | None = None,
    eps_grid=None,
) -> DemoRun:
    """Simulate plant + observer and measure disturbance reconstruction.

    The physical cascade runs the true generator; the observer runs the
    pathway's (possibly redesigned) coupling map.  Metrics: the worst
    reconstruction error |d - d_hat| over the trailing quarter of the
    horizon, relative to the disturbance amplitude, plus the empirical
    decay rate of the error dynamics against the certified abscissa.
    """
    plant = fourtank.estimation_plant()
    driver = fourtank.estimation_internal_model()
    res = fourtank_estimation_design(method, eps_grid, plant, driver)
    n, nu = plant.n, driver.nu
    absc = eigenvalues(res.error_matrix).abscissa
    if horizon is None:
        horizon = float(min(max(2.0e4, 10.0 / abs(absc)), 4.0e5))
    if dt is None:
        dt = horizon / 40000.0

    a_cpl = res.observer.coupled_autonomous(plant, driver.H)
    eta0 = fourtank.disturbance_initial_state()
    x0 = np.zeros(n)
    s0 = np.zeros(n + nu)
    trace = simulate_lti(
        a_cpl,
        x0=np.concatenate([eta0, x0, s0]),
        c=np.eye(a_cpl.shape[0]),
        horizon=horizon,
        dt=dt,
        labels=tuple(
            [f"eta{i}" for i in range(nu)]
            + [f"x{i}" for i in range(n)]
            + [f"xhat{i}" for i in range(n)]
            + [f"etahat{i}" for i in range(nu)]
        ),
    )
    d_true = fourtank.disturbance_signal(trace.times)
    etahat = trace.states[:, n + nu + n :]
    d_hat = etahat @ res.H_used.ravel()
    err = np.abs(d_true - d_hat)
    amplitude = float(np.abs(d_true).max())
    tail = trace.times >= 0.75 * horizon
    metrics = {
        "disturbance_amplitude": amplitude,
        "tail_error": float(err[tail].max()),
        "tail_error_relative": float(err[tail].max() / amplitude),
        "abscissa": absc,
    }
    trace_out = Trace(
        trace.times,
        trace.states,
        np.column_stack([d_true, d_hat, err]),
        tuple(list(trace.labels[: trace.states.shape[1]]) + ["d", "dhat", "abs_err"]),
    )
    return DemoRun(f"fourtank-est-{method}", res, trace_out, metrics)


def estimation_error_decay_check(res: ObserverResult, factor: float = 3.0,
                                 seed: int = 0) -> dict:
    """Empirical decay rate of the error dynamics versus the certificate.

    Simulates the autonomous error realization from a random initial
    condition and fits the decay rate over a late window; the certificate
    abscissa must agree within ``factor``.
    """
    rng = np.random.default_rng(seed)
    absc = eigenvalues(res.error_matrix).abscissa
    horizon = 12.0 / abs(absc)
    dt = horizon / 4000.0
    e0 = rng.standard_normal(res.error_matrix.shape[0])
    tr = simulate_lti(res.error_matrix, x0=e0, horizon=horizon, dt=dt)
    norms = np.linalg.norm(tr.states, axis=1)
    i1 = int(0.55 * len(norms))
    i2 = len(norms) - 1
    rate = -(np.log(norms[i2]) - np.log(norms[i1])) / (
        tr.times[i2] - tr.times[i1]
    )
    ratio = rate / abs(absc)
    return {
        "empirical_rate": float(rate),
        "certified_rate": float(abs(absc)),
        "ratio": float(ratio),
        "within_factor": bool(1.0 / factor <= ratio <= factor),
    }


def vdp_observer_run(
    horizon: float = 200.0,
    dt: float = 1e-3,
    seed: int = 7,
    kappa: float = 100.0,
    q: float = 0.01,
) -> DemoRun:
    """Oscillator-driven disturbance estimation (nonlinear observer demo).

    A two-state linear plant is driven by a Van der Pol oscillator through
    a cubic coupling; the observer of the invariance-based design estimates
    both the plant state and the oscillator state from the scalar output.
    Metric: combined estimation error at the end of the horizon relative
    to its initial value.
    """
    model = nonlinear.vdp_example()
    design = nonlinear.design_nl_observer(
        model.plant,
        model.f,
        model.h,
        L=model.L,
        R=model.R,
        P=model.P(q),
        rho=kappa,
        kappa=kappa,
        grid=model.certification_grid(),
        pi=model.pi,
        pi_jacobian=model.pi_jacobian,
        psi=model.psi,
    )
    rng = np.random.default_rng(seed)
    eta0 = np.array([2.0, 0.0])
    x0 = model.pi(eta0) + rng.standard_normal(2)
    etahat0 = eta0 + rng.standard_normal(2)
    xhat0 = rng.standard_normal(2)
    field = nonlinear.coupled_observer_field(model, design)
    state0 = np.concatenate([eta0, x0, xhat0, etahat0])
    trace = simulate_nl(field, state0, horizon, dt,
                        labels=tuple(
                            ["eta1", "eta2", "x1", "x2",
                             "xhat1", "xhat2", "etahat1", "etahat2"]))
    err = np.linalg.norm(
        trace.states[:, 2:4] - trace.states[:, 4:6], axis=1
    ) + np.linalg.norm(trace.states[:, 0:2] - trace.states[:, 6:8], axis=1)
    metrics = {
        "initial_error": float(err[0]),
        "final_error": float(err[-1]),
        "final_over_initial": float(err[-1] / err[0]),
    }
    return DemoRun("vdp-observer", design, trace, metrics)
