import math

import numpy as np
import pytest

from diffnet import (CellSpec, DomainSpec, FullFieldModel, SystemSpec, assemble_green, build_grid,
                     deposit_and_sample, frozen_relaxation, simulate_full, simulate_reduced, static_field)
from diffnet.analysis import classify_toggle, fit_decay_rate, max_abs_error
from diffnet.field import (SolverError, eigenmode, snapshot_from_bytes, snapshot_to_bytes, snapshot_to_csv,
                           stencil_matrix)
from diffnet.kinetics import REFERENCE_PARAMS as P
from diffnet.types import SignalParams

from conftest import two_cell_spec
from oracles import ball_lattice_count

DOM = DomainSpec(20.0, 2e4)


def make(cells, signal=P["signal"], **kw):
    return SystemSpec(DOM, tuple(cells), signal, P["sender"], P["receiver"], **kw)


def test_grid_node_count():
    g = build_grid(DOM, 1.0)
    assert g.n_interior == ball_lattice_count(20.0, 1.0)
    assert abs(g.n_interior - 4 / 3 * math.pi * 20**3) <= 0.02 * 4 / 3 * math.pi * 20**3


def test_grid_rejects_coarse_spacing():
    for h in (20.0, 6.0, 0.0, -1.0):
        with pytest.raises(ValueError):
            build_grid(DOM, h)


def test_boundary_node_is_masked():
    g = build_grid(DOM, 1.0)
    assert g.index[g.n, g.n, g.n + 20] == -1
    assert g.index[g.n, g.n, g.n + 19] >= 0


def test_laplacian_symmetric_negative_definite():
    g = build_grid(DomainSpec(6.0, 1.0), 1.0)
    A = g.laplacian.toarray()
    np.testing.assert_allclose(A, A.T, rtol=0, atol=0)
    assert np.linalg.eigvalsh(A).max() < 0


def test_stencil_on_node_and_cube_centre():
    g = build_grid(DOM, 1.0)
    st = deposit_and_sample(g, (3.0, -2.0, 5.0))
    assert len(st.indices) == 1 and st.weights[0] == pytest.approx(1.0)
    st = deposit_and_sample(g, (3.5, -2.5, 5.5))
    assert len(st.indices) == 8
    np.testing.assert_allclose(st.weights, 1 / 8)
    st = deposit_and_sample(build_grid(DOM, 0.5), (0.1, 0.2, 0.3))
    assert st.weights.sum() * 0.5**3 == pytest.approx(1.0, rel=1e-14)


def test_stencil_touching_exterior_rejected():
    g = build_grid(DOM, 1.0)
    with pytest.raises(ValueError):
        deposit_and_sample(g, (19.5, 0.3, 0.0))


def test_eigenmode_decay_rate():
    spec = make([], initial_field=eigenmode(20.0))
    m = FullFieldModel(spec, h=1.0)
    st = m.initial_state()
    dt = 5e-3
    norms = [m.grid.l2_norm(st.v)]
    for _ in range(12):
        st = m.step(st, dt)
        norms.append(m.grid.l2_norm(st.v))
    rho = norms[-1] / norms[-2]
    lam = math.pi**2 * 2e4 / 400
    assert (1 / rho - 1) / dt == pytest.approx(lam, rel=0.02)


def test_dissipative_without_production():
    spec = make([CellSpec((0, 0, 0), "sender"), CellSpec((10, 0, 0), "receiver")],
                signal=SignalParams(alpha=1.0, a_u=0.0, gamma_u=0.01), initial_u=(50.0, 20.0))
    m = FullFieldModel(spec, h=1.0)
    st = m.initial_state()
    mass = [m.total_mass(st)]
    for _ in range(200):
        st = m.step(st, 5e-3, audit=True)
        mass.append(m.total_mass(st))
        assert st.audit.relative_imbalance <= 1e-8
    assert np.all(np.diff(mass) <= 1e-12 * mass[0])
    assert mass[-1] < mass[0]


def test_mass_audit_with_production():
    m = FullFieldModel(two_cell_spec(), h=1.0)
    st = m.initial_state()
    for _ in range(100):
        st = m.step(st, 5e-3, audit=True)
        assert st.audit.relative_imbalance <= 1e-8


def test_frozen_relaxation_rate():
    m = FullFieldModel(two_cell_spec(initial_u=(50.0, 1.0)), h=1.0)
    res = frozen_relaxation(m, 1e-4, 0.01)
    fit = fit_decay_rate(res.times, res.norms)
    assert fit.rate >= 0.9 * math.pi**2 * 2e4 / 400
    assert res.max_relative_imbalance <= 1e-8


def test_superposition_of_frozen_sources():
    spec = make([CellSpec((-10, 0, 0), "sender"), CellSpec((10, 0, 0), "sender")])
    m = FullFieldModel(spec, h=1.0)
    both = m.frozen_steady_field([700.0, 300.0])
    parts = m.frozen_steady_field([700.0, 0.0]) + m.frozen_steady_field([0.0, 300.0])
    np.testing.assert_allclose(both, parts, rtol=1e-8, atol=1e-10 * np.abs(both).max())
    origin = m.grid.index[m.grid.n, m.grid.n, m.grid.n]
    pair = m.frozen_steady_field([800.0, 800.0])[origin]
    single = FullFieldModel(make([CellSpec((10, 0, 0), "sender")]), h=1.0).frozen_steady_field([800.0])
    assert pair == pytest.approx(2 * single[origin], rel=1e-4)


def _steady_errors(h):
    spec = two_cell_spec()
    U = np.array([800.0, 0.0])
    probes = np.array([(15, 0, 0), (5, 5, 0), (-10, 0, 0), (0, 0, -12), (7, -3, 2)], float)
    ref = static_field(assemble_green(spec.domain, spec.cells), spec.signal, spec.volumes, U, probes=probes)
    m = FullFieldModel(spec, h=h)
    v = m.frozen_steady_field(U)
    got = h**3 * (stencil_matrix(m.grid, probes).T @ v)
    return np.abs(got - ref) / np.abs(ref)


def test_steady_field_matches_green_kernel():
    coarse = _steady_errors(1.0)
    assert coarse.max() <= 0.10
    fine = _steady_errors(0.5)
    assert fine.max() < coarse.max()


def test_engines_agree():
    spec = two_cell_spec()
    m = FullFieldModel(spec, h=1.0)
    g = simulate_full(spec, t_end=1.0, output_dt=0.25, engine="grid", model=m, cg_rtol=1e-12)
    k = simulate_full(spec, t_end=1.0, output_dt=0.25, engine="kernel", model=m)
    np.testing.assert_allclose(k.states, g.states, rtol=1e-12)
    np.testing.assert_allclose(k.signals, g.signals, rtol=1e-8)
    np.testing.assert_allclose(k.field_samples, g.field_samples, rtol=1e-7)


def test_unstable_step_rejected():
    with pytest.raises(ValueError, match="try dt"):
        simulate_full(two_cell_spec(), dt=0.2, t_end=1.0)


def test_snapshot_formats(tmp_path):
    spec = two_cell_spec()
    tr = simulate_full(spec, t_end=0.02, output_dt=0.01, snapshot_times=[0.01], engine="grid")
    snap = tr.meta["snapshots"][0.01]
    m = FullFieldModel(spec, h=1.0)
    data = snapshot_to_bytes(m.grid, snap)
    assert data[:4] == b"DNSF" and len(data) == 32 + 8 * snap.size
    back, h, L = snapshot_from_bytes(data)
    assert h == 1.0 and L == 20.0
    np.testing.assert_array_equal(back, snap)
    kern = simulate_full(spec, t_end=0.02, output_dt=0.01, snapshot_times=[0.01], engine="kernel", model=m)
    np.testing.assert_allclose(kern.meta["snapshots"][0.01], snap, rtol=1e-7, atol=1e-9 * np.abs(snap).max())
    text = snapshot_to_csv(m.grid, snap)
    assert text.startswith("x,y,z,v\n") and text.count("\n") == snap.size + 1
    with pytest.raises(ValueError):
        snapshot_from_bytes(b"XXXX" + data[4:])


def test_two_cell_models_agree(two_cell_runs):
    full, red = two_cell_runs
    err = max_abs_error(full, red, ["x21", "x22"])
    assert max(err.values()) < 0.1
    assert classify_toggle(full, 1).value == "OFF" and classify_toggle(red, 1).value == "OFF"


def test_faster_diffusion_shrinks_receiver_error(two_cell_runs):
    # time-stepping error dominates the protein gap; the receiver signal gap tracks eps_v
    full, red = two_cell_runs
    base = max_abs_error(full, red, ["u2", "x21"])
    spec = two_cell_spec(D=2e5)
    fast = max_abs_error(simulate_full(spec, t_end=1000.0), simulate_reduced(spec, 1000.0), ["u2", "x21"])
    assert fast["u2"] < 0.2 * base["u2"]
    assert fast["x21"] < base["x21"]
