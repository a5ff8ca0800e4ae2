import numpy as np
from hypothesis import given, strategies as st

from diffnet import CellKind, Trajectory
from diffnet.io import atomic_write_text, fmt, plot_data, trajectory_from_csv, trajectory_to_csv


def sample_traj():
    t = np.array([0.0, 0.1, 0.30000000000000004])
    states = np.array([[400.0, 300.0, 1.0], [401.5, 299.9, 1.1], [1 / 3, 2 / 3, 1e-300]])
    return Trajectory(t, states, np.arange(6.0).reshape(3, 2) / 7, (CellKind.SENDER, CellKind.RECEIVER),
                      np.ones((3, 2)) * 0.1)


def test_trajectory_csv_round_trip(tmp_path):
    tr = sample_traj()
    text = trajectory_to_csv(tr, tmp_path / "t.csv")
    assert text.splitlines()[0] == "time,cell_id,kind,species,value"
    assert "0.1,1,receiver,TetR,1.1" in text
    back = trajectory_from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.times, tr.times)
    np.testing.assert_array_equal(back.states, tr.states)
    np.testing.assert_array_equal(back.signals, tr.signals)
    np.testing.assert_array_equal(back.field_samples, tr.field_samples)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(fmt(x)) == x


def test_plot_data_header():
    lines = plot_data(sample_traj()).splitlines()
    assert lines[0] == "# time LuxI[0] u[0] v[0] LacI[1] TetR[1] u[1] v[1]"
    assert len(lines) == 4 and len(lines[1].split()) == 8


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write_text(tmp_path / "a.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
