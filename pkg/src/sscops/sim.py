"""Time-domain simulation and trace capture.

LTI closed loops are propagated exactly through the matrix exponential
(zero-order hold for forced systems), so there is no integration drift even
over the very slow horizons of the flow-control demos.  Nonlinear fields
use fixed-step RK4 with a step-halving error estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import lti_propagate, lti_propagate_forced
from .errors import DimensionMismatch, NonFinite
from .linsolve import as_matrix, expm

__all__ = ["Trace", "simulate_lti", "simulate_nl"]


@dataclass(frozen=True)
class Trace:
    """Time-stamped state and output samples from one simulation run."""

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    labels: tuple[str, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        y = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if not (len(t) == x.shape[0] == y.shape[0]):
            raise DimensionMismatch("times/states/outputs lengths differ")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if len(self.labels) != x.shape[1] + y.shape[1]:
            raise DimensionMismatch("one label per state and output column")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def columns(self) -> np.ndarray:
        return np.hstack([self.states, self.outputs])

    def to_csv(self, path) -> None:
        """Write ``time`` plus all labelled columns at full precision."""
        header = ",".join(["time", *self.labels])
        data = np.column_stack([self.times, self.states, self.outputs])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _default_labels(nx: int, ny: int) -> tuple[str, ...]:
    return tuple(
        [f"x{i}" for i in range(nx)] + [f"y{i}" for i in range(ny)]
    )


def simulate_lti(
    a,
    b=None,
    c=None,
    d=None,
    input=None,
    x0=None,
    horizon: float = 10.0,
    dt: float = 1.0,
    labels=None,
) -> Trace:
    """Propagate an LTI system exactly on a uniform grid.

    The autonomous part advances by the matrix exponential of ``a * dt``; a
    time-dependent input is applied with exact zero-order-hold
    discretization (the input callable is sampled at the left endpoint of
    each step and held).

    Parameters
    ----------
    a : (n, n) array_like
    b : (n, m) array_like, optional
    c : (q, n) array_like, optional
        Output map; identity when omitted.
    d : (q, m) array_like, optional
    input : callable, optional
        Maps time to an input vector of length m.
    x0 : (n,) array_like, optional
        Zero when omitted.
    horizon, dt : float
        Final time and step; ``horizon >= dt > 0``.
    """
    a = as_matrix(a, "A")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionMismatch(f"A must be square, got {a.shape}")
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 must have length {n}")
    c = np.eye(n) if c is None else as_matrix(c, "C")
    if c.shape[1] != n:
        raise DimensionMismatch("C has the wrong number of columns")
    nsteps = int(round(horizon / dt))
    times = np.arange(nsteps + 1) * dt

    if input is None or b is None:
        ad = expm(a, dt)
        states = lti_propagate(np.ascontiguousarray(ad), x0, nsteps)
        u_all = None
    else:
        b = as_matrix(b, "B")
        if b.shape[0] != n:
            raise DimensionMismatch("B has the wrong number of rows")
        m = b.shape[1]
        aug = np.zeros((n + m, n + m))
        aug[:n, :n] = a
        aug[:n, n:] = b
        ead = expm(aug, dt)
        ad, bd = ead[:n, :n], ead[:n, n:]
        u_all = np.empty((nsteps + 1, m))
        for k, t in enumerate(times):
            u_all[k] = np.asarray(input(t), dtype=float).ravel()
        states = lti_propagate_forced(
            np.ascontiguousarray(ad), np.ascontiguousarray(bd), x0,
            np.ascontiguousarray(u_all[:-1]),
        )

    outputs = states @ c.T
    if d is not None and u_all is not None:
        d = as_matrix(d, "D")
        outputs = outputs + u_all @ d.T
    if not np.all(np.isfinite(states)):
        raise NonFinite("LTI propagation produced non-finite states")
    labels = labels or _default_labels(n, outputs.shape[1])
    return Trace(times, states, outputs, labels, meta={"dt": dt})


def simulate_nl(
    field,
    x0,
    horizon: float,
    dt: float = 1e-2,
    output=None,
    labels=None,
    error_check_stride: int = 16,
) -> Trace:
    """Fixed-step RK4 integration of a nonlinear field.

    ``field`` is a callable mapping the state to its derivative (objects
    with an ``evaluate`` attribute, like :class:`sscops.nonlinear.VectorField`,
    are accepted too).  Every ``error_check_stride`` steps one step is
    re-taken as two half steps; the largest mismatch is recorded in
    ``meta["step_halving_estimate"]`` and a warning is emitted when it
    exceeds ``1e-5`` times the state norm.
    """
    f = getattr(field, "evaluate", field)
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    x = np.asarray(x0, dtype=float).ravel()
    nsteps = int(round(horizon / dt))
    times = np.arange(nsteps + 1) * dt
    states = np.empty((nsteps + 1, len(x)))
    states[0] = x

    def rk4(x, h):
        k1 = np.asarray(f(x))
        k2 = np.asarray(f(x + 0.5 * h * k1))
        k3 = np.asarray(f(x + 0.5 * h * k2))
        k4 = np.asarray(f(x + h * k3))
        return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    worst = 0.0
    for k in range(nsteps):
        x_full = rk4(x, dt)
        if error_check_stride and k % error_check_stride == 0:
            x_half = rk4(rk4(x, dt / 2), dt / 2)
            worst = max(worst, float(np.max(np.abs(x_full - x_half))))
            x = x_half
        else:
            x = x_full
        if not np.all(np.isfinite(x)):
            raise NonFinite(f"state blew up at t = {times[k + 1]:.6g}")
        states[k + 1] = x

    scale = max(1.0, float(np.abs(states).max()))
    if worst > 1e-5 * scale:
        warnings.warn(
            f"step-halving estimate {worst:.2e} above 1e-5 * state scale; "
            "consider a smaller dt"
        )
    if output is None:
        outputs = np.zeros((nsteps + 1, 0))
    else:
        outputs = np.array([np.asarray(output(s), dtype=float).ravel()
                            for s in states])
    labels = labels or _default_labels(states.shape[1], outputs.shape[1])
    return Trace(times, states, outputs, labels,
                 meta={"dt": dt, "step_halving_estimate": worst})
