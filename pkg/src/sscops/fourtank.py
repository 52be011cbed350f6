"""Linearized four-tank flow process used by the demos.

Classic quadruple-tank laboratory setup: two lower tanks (1, 2) whose
levels are measured, fed by two upper tanks (3, 4) and two pumps whose
flows split between a lower tank and the diagonally opposite upper tank.
Parameters follow the standard minimum-phase operating point of the
original laboratory description (valve split gamma1 + gamma2 > 1, all
transmission zeros in the open left half-plane).

The regulation demo drives the plant with a post-processing internal model
containing integrators and oscillators at the disturbance frequencies; the
estimation demo reconstructs an unmeasured inflow into upper tank 4 from
the level error of lower tank 2 alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import Driver, Plant

__all__ = [
    "TankParameters",
    "fourtank_plant",
    "disturbance_input_column",
    "regulation_driver",
    "estimation_internal_model",
    "estimation_plant",
    "disturbance_signal",
    "disturbance_initial_state",
    "OMEGA1",
    "OMEGA2",
]

#: Disturbance frequencies rejected/estimated by the demos (rad/s).
OMEGA1 = 1e-3
OMEGA2 = 5e-3


@dataclass(frozen=True)
class TankParameters:
    """Physical data of the quadruple-tank process (cgs units).

    ``area``: tank cross sections (cm^2); ``outlet``: outlet hole cross
    sections (cm^2); ``level``: operating-point levels (cm); ``pump_gain``:
    pump flow per unit command (cm^3/(V s)); ``split``: valve fractions
    routed to the lower tanks; ``sensor_gain``: level-to-voltage gain.
    """

    area: tuple = (28.0, 32.0, 28.0, 32.0)
    outlet: tuple = (0.071, 0.057, 0.071, 0.057)
    level: tuple = (12.4, 12.7, 1.8, 1.4)
    pump_gain: tuple = (3.33, 3.35)
    split: tuple = (0.70, 0.60)
    sensor_gain: float = 0.50
    gravity: float = 981.0

    def time_constants(self) -> np.ndarray:
        a = np.asarray(self.area)
        s = np.asarray(self.outlet)
        h = np.asarray(self.level)
        return (a / s) * np.sqrt(2.0 * h / self.gravity)


def fourtank_plant(params: TankParameters | None = None) -> Plant:
    """Linearized plant: states are level deviations, outputs the two
    measured lower-tank level errors (sensor volts), inputs the two pump
    commands."""
    prm = params or TankParameters()
    a1, a2, a3, a4 = prm.area
    t1, t2, t3, t4 = prm.time_constants()
    k1, k2 = prm.pump_gain
    g1, g2 = prm.split
    kc = prm.sensor_gain
    a = np.array([
        [-1.0 / t1, 0.0, a3 / (a1 * t3), 0.0],
        [0.0, -1.0 / t2, 0.0, a4 / (a2 * t4)],
        [0.0, 0.0, -1.0 / t3, 0.0],
        [0.0, 0.0, 0.0, -1.0 / t4],
    ])
    b = np.array([
        [g1 * k1 / a1, 0.0],
        [0.0, g2 * k2 / a2],
        [0.0, (1.0 - g2) * k2 / a3],
        [(1.0 - g1) * k1 / a4, 0.0],
    ])
    c = np.array([[kc, 0.0, 0.0, 0.0], [0.0, kc, 0.0, 0.0]])
    d = np.zeros((2, 2))
    return Plant(a, b, c, d)


def disturbance_input_column(params: TankParameters | None = None) -> np.ndarray:
    """Input column of an exogenous flow (cm^3/s) into upper tank 4."""
    prm = params or TankParameters()
    return np.array([[0.0], [0.0], [0.0], [1.0 / prm.area[3]]])


def _internal_model_core(omega1: float, omega2: float) -> np.ndarray:
    f = np.zeros((5, 5))
    f[1, 2] = 1.0
    f[2, 1] = -(omega1**2)
    f[3, 4] = 1.0
    f[4, 3] = -(omega2**2)
    return f


def regulation_driver(
    omega1: float = OMEGA1, omega2: float = OMEGA2
) -> Driver:
    """Post-processing internal model for the two regulated outputs.

    A two-copy stack (Kronecker with the 2x2 identity) of an integrator and
    two undamped oscillators, fed by the regulation errors:
    F = blkdiag(0, osc(omega1), osc(omega2)) kron I2, G = col(1,0,1,0,1)
    kron I2.
    """
    f = np.kron(_internal_model_core(omega1, omega2), np.eye(2))
    g = np.kron(np.array([[1.0], [0.0], [1.0], [0.0], [1.0]]), np.eye(2))
    h = np.zeros((2, 10))
    j = np.zeros((2, 2))
    return Driver(f, g, h, j)


def estimation_internal_model(
    omega1: float = OMEGA1, omega2: float = OMEGA2
) -> Driver:
    """Autonomous disturbance generator: d = H eta, eta' = F eta.

    F = blkdiag(0, osc(omega1), osc(omega2)), H = [2, omega1, 0, omega2, 0].
    With the initial state from :func:`disturbance_initial_state` this
    reproduces d(t) = 20 + 20 sin(omega1 t) + 30 sin(omega2 t).
    """
    f = _internal_model_core(omega1, omega2)
    h = np.array([[2.0, omega1, 0.0, omega2, 0.0]])
    g = np.zeros((5, 1))
    j = np.zeros((1, 1))
    return Driver(f, g, h, j)


def estimation_plant(params: TankParameters | None = None) -> Plant:
    """Single-input single-output channel for disturbance estimation.

    Input: the unmeasured inflow into upper tank 4; output: the measured
    level error of lower tank 2.
    """
    full = fourtank_plant(params)
    e = disturbance_input_column(params)
    c = full.C[1:2, :]
    return Plant(full.A, e, c, np.zeros((1, 1)))


def disturbance_signal(
    t, omega1: float = OMEGA1, omega2: float = OMEGA2
) -> np.ndarray:
    """d(t) = 20 + 20 sin(omega1 t) + 30 sin(omega2 t)."""
    t = np.asarray(t, dtype=float)
    return 20.0 + 20.0 * np.sin(omega1 * t) + 30.0 * np.sin(omega2 * t)


def disturbance_initial_state() -> np.ndarray:
    """Generator initial state reproducing :func:`disturbance_signal`."""
    return np.array([10.0, 0.0, 20.0, 0.0, 30.0])
