"""Time-scale separation, model-error metrics, decay fits and toggle readout."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .types import CellKind, SystemSpec, Trajectory

EPS_OK = 0.1


@dataclass(frozen=True)
class TimeScales:
    tau_v: float
    tau_u: float
    tau_x: float
    eps_v: float
    eps_u: float

    @property
    def ok(self) -> bool:
        return self.eps_v <= EPS_OK and self.eps_u <= EPS_OK


def time_scales(spec: SystemSpec) -> TimeScales:
    """tau_v = L^2/(pi^2 D), tau_u = 1/alpha, tau_x = 1/max intracellular degradation."""
    rates = [spec.sender_params.gamma_s, spec.receiver_params.gamma_r1, spec.receiver_params.gamma_r2]
    fastest = max(rates)
    if not (fastest > 0):
        raise ValueError("intracellular degradation rates must be positive to define tau_x")
    tau_x = 1.0 / fastest
    tau_v = spec.domain.L**2 / (math.pi**2 * spec.domain.D)
    tau_u = 1.0 / spec.signal.alpha
    return TimeScales(tau_v, tau_u, tau_x, tau_v / tau_x, tau_u / tau_x)


Selector = Union[str, tuple]
_X = re.compile(r"^x(\d+?)[,.]?([12])$")
_UV = re.compile(r"^([uv])(\d+)$")


def _series(traj: Trajectory, sel: Selector) -> np.ndarray:
    """Resolve a species selector.

    Strings use 1-based subscript names: ``"x21"`` is component 1 of cell 2,
    ``"u2"``/``"v2"`` the signal/field at cell 2.  Tuples ``(cell, comp)`` are 0-based.
    """
    if isinstance(sel, tuple):
        return traj.species(*sel)
    m = _X.match(sel)
    if m:
        return traj.species(int(m.group(1)) - 1, int(m.group(2)) - 1)
    m = _UV.match(sel)
    if m:
        i = int(m.group(2)) - 1
        if m.group(1) == "u":
            return traj.signals[:, i]
        if traj.field_samples is None:
            raise ValueError("trajectory has no field samples")
        return traj.field_samples[:, i]
    raise ValueError(f"unrecognised species selector {sel!r}")


def max_abs_error(a: Trajectory, b: Trajectory, species: Iterable[Selector]) -> dict:
    """Largest |a - b| over a's time grid for each selected species.

    ``b`` is linearly interpolated onto ``a``'s times inside their overlap.
    """
    lo, hi = max(a.times[0], b.times[0]), min(a.times[-1], b.times[-1])
    if lo > hi:
        raise ValueError("trajectories have disjoint time ranges")
    keep = (a.times >= lo) & (a.times <= hi)
    t = a.times[keep]
    same = len(a.times) == len(b.times) and np.array_equal(a.times, b.times)
    out = {}
    for sel in species:
        sa = _series(a, sel)[keep]
        sb = _series(b, sel)
        sb = sb[keep] if same else np.interp(t, b.times, sb)
        out[sel if isinstance(sel, str) else tuple(sel)] = float(np.max(np.abs(sa - sb)))
    return out


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    window: tuple[float, float]
    n_samples: int

    def to_json(self) -> str:
        return json.dumps({"rate": self.rate, "r_squared": self.r_squared,
                           "window": list(self.window), "n_samples": self.n_samples})


def fit_decay_rate(times, norms, window: Optional[tuple[float, float]] = None) -> DecayFit:
    """Least-squares exponential rate: minus the slope of log(norm) against t.

    The default window is the last 60% of the series, which skips the
    fast multi-mode transient.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if window is None:
        t0 = t[0] + 0.4 * (t[-1] - t[0])
        window = (t0, t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 10:
        raise ValueError("need at least 10 samples in the fit window")
    if np.any(y[sel] <= 0):
        raise ValueError("norms must be positive inside the fit window")
    tw, ly = t[sel], np.log(y[sel])
    slope, intercept = np.polyfit(tw, ly, 1)
    resid = ly - (slope * tw + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), r2, (float(window[0]), float(window[1])), int(sel.sum()))


class ToggleState(str, enum.Enum):
    ON = "ON"
    OFF = "OFF"


def classify_toggle(traj: Trajectory, cell: int, t: Optional[float] = None) -> ToggleState:
    """ON iff TetR > LacI at time ``t`` (default: last sample); ties read OFF."""
    if CellKind(traj.kinds[cell]) is not CellKind.RECEIVER:
        raise ValueError(f"cell {cell} is a sender; only receivers carry a toggle")
    lac, tet = traj.species(cell, 0), traj.species(cell, 1)
    if t is None:
        lac_t, tet_t = lac[-1], tet[-1]
    else:
        if not traj.times[0] <= t <= traj.times[-1]:
            raise ValueError("t outside the trajectory")
        lac_t, tet_t = np.interp(t, traj.times, lac), np.interp(t, traj.times, tet)
    return ToggleState.ON if tet_t > lac_t else ToggleState.OFF


def classify_state(lac: float, tet: float) -> ToggleState:
    return ToggleState.ON if tet > lac else ToggleState.OFF


@dataclass
class SweepResult:
    rows: list
    species: tuple
    slopes: dict

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "eps_u", "eps_v"] + [f"err_{s}" for s in self.species])
        for r in self.rows:
            w.writerow([repr(r["gamma"]), repr(r["eps_u"]), repr(r["eps_v"])]
                       + [repr(r["errors"][s]) for s in self.species])
        for s in self.species:
            if math.isfinite(self.slopes[s]):
                buf.write(f"# loglog_slope_{s}={self.slopes[s]!r}\n")
        text = buf.getvalue()
        if path is not None:
            from .io import atomic_write_text

            atomic_write_text(path, text)
        return text

    def monotone(self, s) -> bool:
        """Errors strictly decrease as eps_u decreases."""
        order = sorted(self.rows, key=lambda r: r["eps_u"])
        errs = [r["errors"][s] for r in order]
        return all(e1 < e2 for e1, e2 in zip(errs, errs[1:]))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


def with_degradation(spec: SystemSpec, gamma: float) -> SystemSpec:
    """Same system with gamma_s = gamma_r1 = gamma_r2 = gamma."""
    return spec.replace(
        sender_params=dataclasses.replace(spec.sender_params, gamma_s=gamma),
        receiver_params=dataclasses.replace(spec.receiver_params, gamma_r1=gamma, gamma_r2=gamma),
    )


def epsilon_sweep(base: SystemSpec, gammas: Sequence[float], t_end: float = 1000.0,
                  output_dt: float = 1.0, species: Optional[Sequence[str]] = None,
                  full_options: Optional[dict] = None, reduced_options: Optional[dict] = None,
                  runner=None, workers: int = 1) -> SweepResult:
    """Run both models for each common intracellular degradation rate and tabulate errors.

    ``species`` defaults to the two toggle proteins of the first receiver.
    ``runner(spec)`` may replace the pair of simulations (returns full, reduced).
    Sweep points are independent; ``workers > 1`` runs them on a thread pool.
    """
    from .field import simulate_full
    from .reduced import simulate_reduced

    if species is None:
        first_rx = next((i for i, k in enumerate(base.kinds) if k is CellKind.RECEIVER), None)
        if first_rx is None:
            raise ValueError("the sweep needs at least one receiver")
        species = (f"x{first_rx + 1}1", f"x{first_rx + 1}2")
    species = tuple(species)
    full_options = dict(full_options or {})
    reduced_options = dict(reduced_options or {})

    def point(g):
        spec = with_degradation(base, g)
        ts = time_scales(spec)
        if runner is not None:
            full, red = runner(spec)
        else:
            full = simulate_full(spec, t_end=t_end, output_dt=output_dt, **full_options)
            red = simulate_reduced(spec, t_end, output_dt, **reduced_options)
        errs = max_abs_error(full, red, species)
        return {"gamma": float(g), "eps_u": ts.eps_u, "eps_v": ts.eps_v, "errors": errs}

    if workers > 1 and len(gammas) > 1:
        with ThreadPoolExecutor(min(workers, len(gammas))) as pool:
            rows = list(pool.map(point, gammas))
    else:
        rows = [point(g) for g in gammas]
    eps = [r["eps_u"] for r in rows]
    slopes = {s: loglog_slope(eps, [r["errors"][s] for r in rows]) if len(rows) > 1 else math.nan
              for s in species}
    return SweepResult(rows, species, slopes)
