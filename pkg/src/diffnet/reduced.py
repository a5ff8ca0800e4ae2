"""Reduced network: intracellular ODEs closed by the static interconnection U = G Y.

Once the field and the intracellular signal are eliminated, each cell only
sees ``u_i = (gain @ Y)_i``.  Receivers have zero output, so only the sender
columns of the gain matrix enter the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import RK45, solve_ivp

from .greens import GainMatrix, assemble_gain, assemble_green
from .kinetics import receiver_rate, sender_rate
from .types import SystemSpec, Trajectory

RTOL = 1e-6
ATOL = 1e-6
RK4_DT = 0.1


def build_gain(spec: SystemSpec) -> GainMatrix:
    green = assemble_green(spec.domain, spec.cells)
    return assemble_gain(green, spec.signal, spec.volumes)


def interconnect(gain: GainMatrix, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    n = gain.entries.shape[0]
    if Y.shape != (n,):
        raise ValueError(f"Y must have length {n}, got shape {Y.shape}")
    return gain.entries @ Y


@dataclass(frozen=True)
class ReducedSystem:
    spec: SystemSpec
    gain: GainMatrix
    x: np.ndarray
    t: float = 0.0
    last_dt: Optional[float] = None

    @classmethod
    def from_spec(cls, spec: SystemSpec, gain: Optional[GainMatrix] = None) -> "ReducedSystem":
        return cls(spec, gain if gain is not None else build_gain(spec), spec.stacked_initial_state())

    def signals(self, x=None) -> np.ndarray:
        x = self.x if x is None else x
        return _Rhs(self.spec, self.gain).signals(x)


class _Rhs:
    """dx/dt for the stacked state with the interconnection evaluated in place."""

    def __init__(self, spec: SystemSpec, gain: GainMatrix):
        self.spec = spec
        self.N = spec.n_senders
        # (n_cells, N) slice: the only columns that multiply non-zero outputs
        self.cols = np.ascontiguousarray(gain.entries[:, :self.N])

    def signals(self, x):
        return self.cols @ x[:self.N]

    def __call__(self, t, x):
        spec, N = self.spec, self.N
        dx = np.empty_like(x)
        dx[:N] = sender_rate(x[:N], spec.sender_params)
        if spec.n_receivers:
            u = self.signals(x)
            dx[N:] = receiver_rate(x[N:].reshape(-1, 2), u[N:], spec.receiver_params).ravel()
        return dx


def _rk4(f, t, x, dt):
    k1 = f(t, x)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_reduced(system: ReducedSystem, dt: float, method: str = "rk4",
                 rtol: float = RTOL, atol: float = ATOL) -> ReducedSystem:
    """Advance by one integrator step.

    ``rk4`` takes exactly ``dt``.  ``rk45`` attempts one Dormand-Prince step
    capped at ``dt``; if the error controller shrinks it the returned system
    reports the accepted step in ``last_dt``.
    """
    if not (dt > 0):
        raise ValueError("dt must be positive")
    f = _Rhs(system.spec, system.gain)
    if method == "rk4":
        x = _rk4(f, system.t, system.x, dt)
        h = dt
    elif method == "rk45":
        solver = RK45(f, system.t, system.x, system.t + dt, rtol=rtol, atol=atol,
                      first_step=dt, max_step=dt)
        solver.step()
        if solver.status == "failed":
            raise RuntimeError("adaptive step failed")
        x, h = solver.y, solver.t - system.t
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise RuntimeError(f"non-finite state at t={system.t + h:g}")
    return ReducedSystem(system.spec, system.gain, x, system.t + h, h)


def simulate_reduced(spec: SystemSpec, t_end: float, output_dt: float = 1.0, method: str = "rk45",
                     rtol: float = RTOL, atol: float = ATOL, dt: float = RK4_DT,
                     gain: Optional[GainMatrix] = None) -> Trajectory:
    """Integrate the reduced model and sample it on multiples of ``output_dt``.

    ``signals`` holds U(t) and ``field_samples`` the quasi-steady field at the
    cells. ``method="rk4"`` uses fixed steps of ``dt`` for bit-reproducible runs.
    """
    if not (t_end > 0):
        raise ValueError("t_end must be positive")
    gain = gain if gain is not None else build_gain(spec)
    f = _Rhs(spec, gain)
    n_out = int(round(t_end / output_dt))
    if abs(n_out * output_dt - t_end) > 1e-9 * t_end:
        raise ValueError("t_end must be a multiple of output_dt")
    times = output_dt * np.arange(n_out + 1)
    x0 = spec.stacked_initial_state()
    if method == "rk45":
        sol = solve_ivp(f, (0.0, t_end), x0, method="RK45", t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"integration failed: {sol.message}")
        X = sol.y.T
    elif method == "rk4":
        sub = int(round(output_dt / dt))
        if sub < 1 or abs(sub * dt - output_dt) > 1e-9 * output_dt:
            raise ValueError("output_dt must be a multiple of dt")
        X = np.empty((len(times), len(x0)))
        X[0] = x = x0
        for k in range(1, len(times)):
            for j in range(sub):
                x = _rk4(f, ((k - 1) * sub + j) * dt, x, dt)
            X[k] = x
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(X)):
        raise RuntimeError("integration produced a non-finite state")
    Y = np.zeros((len(times), spec.n_cells))
    Y[:, :spec.n_senders] = X[:, :spec.n_senders]
    U = Y @ gain.entries.T
    nu = U @ gain.field_operator.T
    return Trajectory(times, X, U, spec.kinds, nu,
                      meta={"model": "reduced", "method": method, "rtol": rtol, "atol": atol, "dt": dt})
