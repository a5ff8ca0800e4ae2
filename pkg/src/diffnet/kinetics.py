"""Intracellular rate laws for the LuxI sender and the LacI/TetR toggle receiver.

All rate functions are vectorised: the last axis of ``x`` indexes species, any
leading axes index cells.
"""

import numpy as np

from .types import DomainSpec, ReceiverParams, SenderParams, SignalParams

HILL_EXPONENT = 2


def sender_rate(x, params: SenderParams):
    """d[LuxI]/dt = a_s - gamma_s * LuxI (constitutive expression)."""
    x = np.asarray(x, dtype=float)
    return params.a_s - params.gamma_s * x


def receiver_rate(x, u, params: ReceiverParams):
    """Toggle switch: TetR represses LacI, LacI represses TetR, AHL activates TetR.

    Returns an array shaped like ``x`` with [dLacI/dt, dTetR/dt] on the last axis.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lac, tet = x[..., 0], x[..., 1]
    p = params
    K1sq, K2sq, Kusq = p.K_1**2, p.K_2**2, p.K_u**2
    dlac = p.a_r1 * K2sq / (K2sq + tet**2) - p.gamma_r1 * lac
    # u^2/(Ku^2 + u^2) in a form that stays finite as u -> inf
    with np.errstate(divide="ignore", over="ignore"):
        activation = 1.0 / (1.0 + Kusq / (u * u))
    dtet = p.a_r2 * (activation + K1sq / (K1sq + lac**2)) - p.gamma_r2 * tet
    return np.stack([dlac, dtet], axis=-1)


def signal_rate(u, y, v_local, signal: SignalParams):
    """du/dt = a_u y - gamma_u u + alpha (v_local - u)."""
    return signal.a_u * y - signal.gamma_u * u + signal.alpha * (v_local - u)


def sender_fixed_point(params: SenderParams) -> float:
    return params.a_s / params.gamma_s


# Reference parameter set (units nM, min, um).
# Production rates in listed order map to (a_s, a_r1, a_r2); the three
# dissociation constants map to (K_2, K_1, K_u).
REFERENCE_PARAMS = {
    "sender": SenderParams(a_s=5.0, gamma_s=0.01),
    "receiver": ReceiverParams(a_r1=5.0, a_r2=2.5, gamma_r1=0.01, gamma_r2=0.01,
                               K_1=50.0, K_2=50.0, K_u=10.0),
    "signal": SignalParams(alpha=1.0, a_u=2.0, gamma_u=0.01),
    "R": 1.5,
    "D": 2.0e4,
}


def reference_domain(L: float) -> DomainSpec:
    return DomainSpec(L=L, D=REFERENCE_PARAMS["D"])
