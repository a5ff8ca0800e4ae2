import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffnet import SystemSpec, simulate_reduced
from diffnet.kinetics import REFERENCE_PARAMS as P, receiver_rate, sender_fixed_point, sender_rate, signal_rate
from diffnet.types import CellSpec, DomainSpec, SignalParams

from oracles import toggle_steady


def test_sender_fixed_point_is_equilibrium():
    assert sender_rate([sender_fixed_point(P["sender"])], P["sender"])[0] == pytest.approx(0.0, abs=1e-12)


def test_sender_rate_at_initial_value():
    # a_s - gamma_s * 400 = 5 - 4
    assert sender_rate([400.0], P["sender"])[0] == pytest.approx(1.0, rel=1e-12)


def test_sender_rate_at_zero_is_production():
    assert sender_rate([0.0], P["sender"])[0] == P["sender"].a_s


def test_receiver_rate_reference_values():
    d = receiver_rate([300.0, 1.0], 0.0, P["receiver"])
    assert d[0] == pytest.approx(5 * 2500 / 2501 - 3, rel=1e-12)
    assert d[0] == pytest.approx(1.998, abs=5e-4)
    assert d[1] == pytest.approx(2.5 * 2500 / 92500 - 0.01, rel=1e-12)
    assert d[1] == pytest.approx(0.0576, abs=5e-5)


def test_receiver_limits():
    p = P["receiver"]
    d = receiver_rate([1e12, 7.0], 0.0, p)
    assert d[1] == pytest.approx(-p.gamma_r2 * 7.0, rel=1e-9)
    d = receiver_rate([0.0, 7.0], np.inf, p)
    assert d[1] == pytest.approx(2 * p.a_r2 - p.gamma_r2 * 7.0, rel=1e-12)


def test_signal_rate_examples():
    sig0 = SignalParams(alpha=1.0, a_u=2.0, gamma_u=0.0)
    assert signal_rate(3.0, 0.0, 3.0, sig0) == 0.0
    assert signal_rate(0.0, 400.0, 0.0, P["signal"]) == pytest.approx(800.0)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 1e4))
def test_receiver_rate_inward_at_zero(lac, tet, u):
    # production terms are nonnegative, so the boundary of the orthant is never crossed
    d0 = receiver_rate([0.0, tet], u, P["receiver"])
    d1 = receiver_rate([lac, 0.0], u, P["receiver"])
    assert d0[0] >= 0 and d1[1] >= 0


def test_receiver_rate_vectorised():
    x = np.array([[300.0, 1.0], [1.0, 300.0], [50.0, 50.0]])
    u = np.array([0.0, 5.0, 100.0])
    batch = receiver_rate(x, u, P["receiver"])
    for k in range(3):
        np.testing.assert_allclose(batch[k], receiver_rate(x[k], u[k], P["receiver"]), rtol=0, atol=0)


@pytest.mark.parametrize("x0", [0.0, 1000.0])
def test_sender_converges_to_fixed_point(x0):
    spec = SystemSpec(DomainSpec(20, 2e4), (CellSpec((0, 0, 0), "sender"),), P["signal"], P["sender"],
                      P["receiver"], initial_state=((x0,),))
    tr = simulate_reduced(spec, 2000.0, 10.0)
    assert tr.states[-1, 0] == pytest.approx(500.0, rel=1e-3)


def test_toggle_is_bistable_without_signal():
    p = P["receiver"]
    off = toggle_steady(0.0, p, [300.0, 1.0])
    on = toggle_steady(0.0, p, [1.0, 300.0])
    assert off[0] > off[1] and on[1] > on[0]
    # both are equilibria of the package's rate function
    np.testing.assert_allclose(receiver_rate(off, 0.0, p), 0.0, atol=1e-6)
    np.testing.assert_allclose(receiver_rate(on, 0.0, p), 0.0, atol=1e-6)


def test_receiver_states_bounded():
    p = P["receiver"]
    bound = max(p.a_r1 / p.gamma_r1, 2 * p.a_r2 / p.gamma_r2)
    for u in (0.0, 5.0, 50.0):
        for x0 in ([300.0, 1.0], [1.0, 300.0], [0.0, 0.0]):
            x = toggle_steady(u, p, x0, t_end=5000.0)
            assert np.all(x >= 0) and np.all(x <= bound * (1 + 1e-9))


def _equilibria(u, p):
    lac = np.linspace(0.0, 600.0, 600001)
    act = u * u / (p.K_u**2 + u * u)
    tet = p.a_r2 / p.gamma_r2 * (act + p.K_1**2 / (p.K_1**2 + lac**2))
    F = p.a_r1 / p.gamma_r1 * p.K_2**2 / (p.K_2**2 + tet**2) - lac
    return lac[:-1][np.sign(F[:-1]) != np.sign(F[1:])]


def test_toggle_equilibrium_count_across_signal():
    # one OFF state without signal, three equilibria in the bistable window, one ON state above it
    p = P["receiver"]
    assert len(_equilibria(0.0, p)) == 1 and _equilibria(0.0, p)[0] > 400
    assert len(_equilibria(4.5, p)) == 3
    on = _equilibria(8.0, p)
    assert len(on) == 1 and on[0] < 20
