"""Full PDE-ODE model: 3-D diffusion in the ball coupled to point-like cells.

The ball is discretised on a Cartesian lattice of spacing ``h``; nodes with
``|r| < L`` are unknowns and everything else is held at zero.  Near the
sphere the 7-point Laplacian uses the symmetric ghost-point closure (linear
extrapolation through the zero crossing on the true boundary), which keeps
the operator SPD and the boundary error second order.

Each time step is IMEX: backward Euler for ``D lap v`` solved with
Jacobi-preconditioned CG, forward Euler for membrane exchange and for the
intracellular ODEs, all reading the field at the start of the step.  Cells
deposit into and sample from the field through the same trilinear stencil,
so exchange conserves mass exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kinetics import receiver_rate, sender_rate
from .types import DomainSpec, SystemSpec, Trajectory

THETA_MIN = 1e-3
SNAPSHOT_MAGIC = b"DNSF"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class FieldGrid:
    L: float
    h: float
    n: int  # nodes per axis are 2n + 1, coordinates h * (-n .. n)
    mask: np.ndarray
    index: np.ndarray
    points: np.ndarray
    laplacian: sp.csr_matrix
    boundary: str = "ghost"

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def n_interior(self) -> int:
        return len(self.points)

    @property
    def axis(self) -> np.ndarray:
        return self.h * np.arange(-self.n, self.n + 1)

    def to_array(self, values) -> np.ndarray:
        """Scatter interior values onto the full lattice (zeros outside)."""
        out = np.zeros(self.shape)
        out[self.mask] = values
        return out

    def sample_function(self, fn) -> np.ndarray:
        p = self.points
        return np.asarray(fn(p[:, 0], p[:, 1], p[:, 2]), dtype=float)

    def l2_norm(self, values) -> float:
        return math.sqrt(self.h**3 * float(np.dot(values, values)))

    def mass(self, values) -> float:
        return self.h**3 * float(np.sum(values))


def build_grid(domain: DomainSpec, h: float, boundary: str = "ghost") -> FieldGrid:
    """Masked lattice over [-L, L]^3 with the discrete Laplacian on interior nodes.

    ``boundary="staircase"`` drops the ghost-point closure and treats every
    exterior neighbour as a zero at distance ``h``.
    """
    L = domain.L
    if not (h > 0):
        raise ValueError("grid spacing must be positive")
    if h > L / 4:
        raise ValueError(f"grid spacing h={h:g} is too coarse for L={L:g} (need h <= L/4)")
    if boundary not in ("ghost", "staircase"):
        raise ValueError(f"unknown boundary closure {boundary!r}")
    n = int(math.floor(L / h)) + 1
    c = h * np.arange(-n, n + 1)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    mask = X * X + Y * Y + Z * Z < L * L
    index = np.full(mask.shape, -1, dtype=np.int64)
    ijk = np.argwhere(mask)
    N = len(ijk)
    index[mask] = np.arange(N)
    pts = np.column_stack([X[mask], Y[mask], Z[mask]])

    rows, cols = [], []
    diag = np.zeros(N)
    for d in range(3):
        for s in (-1, 1):
            nb = ijk.copy()
            nb[:, d] += s
            j = index[nb[:, 0], nb[:, 1], nb[:, 2]]
            inside = j >= 0
            rows.append(np.nonzero(inside)[0])
            cols.append(j[inside])
            diag[inside] += 1.0
            out = ~inside
            if boundary == "staircase":
                diag[out] += 1.0
                continue
            # fraction theta of the link from node to exterior neighbour lying inside
            p = pts[out]
            a = s * p[:, d]
            rest = np.einsum("ij,ij->i", p, p)
            theta = (-a + np.sqrt(np.maximum(a * a - (rest - L * L), 0.0))) / h
            theta = np.clip(theta, THETA_MIN, 1.0)
            diag[out] += 1.0 / theta
    r = np.concatenate(rows)
    cc = np.concatenate(cols)
    off = sp.coo_matrix((np.ones(len(r)), (r, cc)), shape=(N, N))
    lap = (off - sp.diags(diag)).tocsr() / (h * h)
    return FieldGrid(L, h, n, mask, index, pts, lap, boundary)


@dataclass(frozen=True)
class SourceStencil:
    """Interior node indices and weights (1/um^3) with ``sum(weights) * h^3 == 1``."""

    indices: np.ndarray
    weights: np.ndarray


def deposit_and_sample(grid: FieldGrid, position) -> SourceStencil:
    """Trilinear (cloud-in-cell) stencil of a cell at ``position``.

    The same weights deposit the cell's source into the field and, scaled by
    ``h^3``, interpolate the field back at the cell.
    """
    p = np.asarray(position, dtype=float)
    h = grid.h
    g = p / h + grid.n
    base = np.floor(g).astype(int)
    frac = g - base
    idx, wts = [], []
    for corner in np.ndindex(2, 2, 2):
        c = np.array(corner)
        w = float(np.prod(np.where(c == 1, frac, 1.0 - frac)))
        if w == 0.0:
            continue
        node = base + c
        if np.any(node < 0) or np.any(node >= grid.shape[0]) or grid.index[tuple(node)] < 0:
            raise ValueError(
                f"cell at {tuple(p)} touches an exterior node; geometry too tight for h={h:g}")
        idx.append(int(grid.index[tuple(node)]))
        wts.append(w / h**3)
    return SourceStencil(np.array(idx), np.array(wts))


def stencil_matrix(grid: FieldGrid, positions) -> sp.csc_matrix:
    """Sparse (n_interior, n_cells) deposition matrix W; sampling is ``h^3 W^T``."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    rows, cols, vals = [], [], []
    for i, pos in enumerate(positions):
        st = deposit_and_sample(grid, pos)
        rows.extend(st.indices)
        cols.extend([i] * len(st.indices))
        vals.extend(st.weights)
    return sp.csc_matrix((vals, (rows, cols)), shape=(grid.n_interior, len(positions)))


def eigenmode(L: float, amplitude: float = 1.0):
    """First Dirichlet eigenfunction of the ball, sin(pi r/L)/(pi r/L)."""

    def fn(x, y, z):
        k = math.pi * np.sqrt(x * x + y * y + z * z) / L
        return amplitude * np.sinc(k / math.pi)

    return fn


@dataclass(frozen=True)
class StepAudit:
    """Per-step mass bookkeeping (amounts, not rates)."""

    mass_before: float
    mass_after: float
    production: float
    degradation: float
    boundary_outflux: float

    @property
    def imbalance(self) -> float:
        return (self.mass_after - self.mass_before) - (
            self.production - self.degradation - self.boundary_outflux)

    @property
    def relative_imbalance(self) -> float:
        scale = max(abs(self.mass_before), abs(self.mass_after), 1e-300)
        return abs(self.imbalance) / scale


@dataclass(frozen=True)
class FullState:
    t: float
    v: np.ndarray
    x: np.ndarray
    u: np.ndarray
    cg_iterations: int = 0
    audit: Optional[StepAudit] = field(default=None, compare=False)


class FullFieldModel:
    """Discretised PDE-ODE system for one :class:`SystemSpec`."""

    def __init__(self, spec: SystemSpec, h: float = 1.0, cg_rtol: float = 1e-9,
                 boundary: str = "ghost", grid: Optional[FieldGrid] = None):
        self.spec = spec
        self.grid = grid if grid is not None else build_grid(spec.domain, h, boundary)
        self.h = self.grid.h
        self.cg_rtol = cg_rtol
        if spec.n_cells and self.h > spec.radii.min():
            raise ValueError(f"grid spacing h={self.h:g} exceeds the cell radius {spec.radii.min():g}")
        self.W = stencil_matrix(self.grid, spec.positions)
        self.WT_sample = (self.h**3 * self.W.T).tocsr()
        self.volumes = spec.volumes
        self._ops: dict[float, tuple] = {}
        N = spec.n_senders
        self._sender = slice(0, N)
        self._recv = slice(N, spec.state_dim)

    # -- operators --------------------------------------------------------
    def exchange_rate_bound(self) -> float:
        sig = self.spec.signal
        vmax = self.volumes.max() if self.spec.n_cells else 0.0
        return sig.alpha + sig.gamma_u + vmax * sig.alpha / self.h**3

    def check_stability(self, dt: float) -> None:
        rate = self.exchange_rate_bound()
        if dt * rate > 1.0:
            raise ValueError(
                f"dt={dt:g} violates the explicit exchange bound dt*(alpha+gamma_u+V alpha/h^3) <= 1 "
                f"(value {dt * rate:.3g}); try dt <= {0.5 / rate:.3g}")

    def operator(self, dt: float):
        if dt not in self._ops:
            N = self.grid.n_interior
            A = (sp.identity(N, format="csr") - dt * self.spec.domain.D * self.grid.laplacian).tocsr()
            Minv = sp.diags(1.0 / A.diagonal())
            self._ops[dt] = (A, Minv)
        return self._ops[dt]

    def solve(self, dt: float, b: np.ndarray, x0=None, rtol=None) -> tuple[np.ndarray, int]:
        A, Minv = self.operator(dt)
        rtol = self.cg_rtol if rtol is None else rtol
        count = [0]

        def cb(_):
            count[0] += 1

        sol, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, M=Minv, maxiter=20000, callback=cb)
        if info != 0:
            raise SolverError(f"conjugate gradient did not converge (info={info})")
        return sol, count[0]

    # -- state ------------------------------------------------------------
    def initial_state(self) -> FullState:
        spec = self.spec
        v0 = np.zeros(self.grid.n_interior)
        if spec.initial_field is not None:
            v0 = self.grid.sample_function(spec.initial_field)
        return FullState(0.0, v0, spec.stacked_initial_state(), np.array(spec.initial_u, dtype=float))

    def sample(self, v: np.ndarray) -> np.ndarray:
        return self.WT_sample @ v

    def rhs_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        spec = self.spec
        N = spec.n_senders
        dx = np.empty_like(x)
        dx[:N] = sender_rate(x[:N], spec.sender_params)
        if spec.n_receivers:
            xr = x[N:].reshape(-1, 2)
            dx[N:] = receiver_rate(xr, u[N:], spec.receiver_params).ravel()
        return dx

    def total_mass(self, state: FullState) -> float:
        return self.grid.mass(state.v) + float(self.volumes @ state.u)

    def step(self, state: FullState, dt: float, freeze_intracellular: bool = False,
             freeze_signals: bool = False, audit: bool = False) -> FullState:
        spec, sig = self.spec, self.spec.signal
        p = self.sample(state.v)
        strength = self.volumes * sig.alpha * (state.u - p)
        b = state.v + dt * (self.W @ strength)
        v_new, iters = self.solve(dt, b, x0=state.v)
        y = spec.outputs(state.x)
        if freeze_signals:
            u_new = state.u
        else:
            u_new = state.u + dt * (sig.a_u * y - sig.gamma_u * state.u + sig.alpha * (p - state.u))
        x_new = state.x if freeze_intracellular else state.x + dt * self.rhs_x(state.x, state.u)
        if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(u_new)) and np.all(np.isfinite(x_new))):
            raise SolverError(f"non-finite state at t={state.t + dt:g}")
        rec = None
        if audit:
            outflux = -dt * spec.domain.D * self.grid.mass(self.grid.laplacian @ v_new)
            prod = 0.0 if freeze_signals else dt * float(self.volumes @ (sig.a_u * y))
            deg = 0.0 if freeze_signals else dt * float(self.volumes @ (sig.gamma_u * state.u))
            if freeze_signals:
                # frozen u: the cells act as a reservoir; count exchange as external input
                prod = dt * float(strength.sum())
            rec = StepAudit(self.total_mass(state),
                            self.grid.mass(v_new) + float(self.volumes @ u_new),
                            prod, deg, outflux)
        return FullState(state.t + dt, v_new, x_new, u_new, iters, rec)

    # -- steady states and responses -------------------------------------
    def frozen_steady_field(self, u, rtol: float = 1e-13) -> np.ndarray:
        """Field that balances diffusion and exchange for fixed intracellular ``u``."""
        sig = self.spec.signal
        D = self.spec.domain.D
        K = -D * self.grid.laplacian
        if self.spec.n_cells:
            coup = self.W @ sp.diags(self.volumes * sig.alpha) @ self.WT_sample
            K = (K + coup).tocsr()
        rhs = self.W @ (self.volumes * sig.alpha * np.asarray(u, dtype=float))
        Minv = sp.diags(1.0 / K.diagonal())
        sol, info = spla.cg(K, rhs, rtol=rtol, atol=0.0, M=Minv, maxiter=50000)
        if info != 0:
            raise SolverError("steady-field CG did not converge")
        return sol

    def response_kernel(self, dt: float, tol: float = 1e-17, max_terms: int = 100000,
                        keep_fields: bool = False):
        """Sampled impulse response of the discrete field.

        Returns ``H`` of shape (K, n_cells, n_cells) with
        ``H[j-1] = dt * S^T A^{-j} W`` so that the field at the cells after
        step n is ``sum_j H[j-1] @ s_{n-j}`` for exchange strengths ``s``.
        Terms are generated until they fall below ``tol`` relative to the first.
        """
        rtol = min(self.cg_rtol, 1e-12)
        n = self.spec.n_cells
        phi = dt * self.W.toarray()
        Hs, fields = [], []
        first = None
        for _ in range(max_terms):
            phi = np.column_stack([self.solve(dt, phi[:, i], x0=phi[:, i], rtol=rtol)[0]
                                   for i in range(n)]) if n else phi
            Hj = self.WT_sample @ phi
            Hs.append(Hj)
            if keep_fields:
                fields.append(phi.copy())
            scale = np.abs(Hj).max() if n else 0.0
            if first is None:
                first = scale
            if scale <= tol * first:
                break
        else:
            raise SolverError("field response did not decay within max_terms steps")
        H = np.array(Hs).reshape(len(Hs), n, n)
        return (H, fields) if keep_fields else H

    def free_decay(self, v0: np.ndarray, dt: float, tol: float = 1e-17, max_terms: int = 100000):
        """Samples at the cells of the unforced field ``A^{-n} v0`` for n = 0, 1, ... until negligible."""
        out = [self.sample(v0)]
        fields = [v0]
        norm0 = np.abs(v0).max()
        v = v0
        if norm0 == 0:
            return np.array(out).reshape(1, -1), fields
        rtol = min(self.cg_rtol, 1e-12)
        for _ in range(max_terms):
            v, _ = self.solve(dt, v, x0=v, rtol=rtol)
            out.append(self.sample(v))
            fields.append(v)
            if np.abs(v).max() <= tol * norm0:
                break
        return np.array(out), fields


def step_full(model: FullFieldModel, state: FullState, dt: float, **kw) -> FullState:
    """Advance the coupled system one IMEX step of length ``dt``."""
    return model.step(state, dt, **kw)


def _steps(total: float, dt: float, what: str) -> int:
    n = int(round(total / dt))
    if n <= 0 or abs(n * dt - total) > 1e-9 * max(total, 1.0):
        raise ValueError(f"{what}={total:g} is not a positive multiple of dt={dt:g}")
    return n


def simulate_full(spec: SystemSpec, h: float = 1.0, dt: float = 5e-3, t_end: float = 1000.0,
                  output_dt: float = 1.0, engine: str = "kernel", cg_rtol: float = 1e-9,
                  boundary: str = "ghost", snapshot_times: Sequence[float] = (),
                  model: Optional[FullFieldModel] = None) -> Trajectory:
    """Run the full model and sample it every ``output_dt``.

    ``engine="grid"`` advances the lattice field with a CG solve every step.
    ``engine="kernel"`` uses the field's precomputed sampled impulse response
    (the same discrete operator, summed as a convolution), which is exact to
    rounding and far cheaper for long horizons with few cells.
    Field snapshots, when requested, land in ``traj.meta["snapshots"]`` as
    full-lattice arrays keyed by time.
    """
    model = model or FullFieldModel(spec, h=h, cg_rtol=cg_rtol, boundary=boundary)
    model.check_stability(dt)
    n_steps = _steps(t_end, dt, "t_end")
    stride = _steps(output_dt, dt, "output_dt")
    snap_steps = {int(round(t / dt)): t for t in snapshot_times}
    if engine == "grid":
        return _run_grid(model, dt, n_steps, stride, snap_steps)
    if engine == "kernel":
        return _run_kernel(model, dt, n_steps, stride, snap_steps)
    raise ValueError(f"unknown engine {engine!r}")


@dataclass
class FrozenRelaxation:
    times: np.ndarray
    norms: np.ndarray
    steady: np.ndarray
    max_relative_imbalance: float


def frozen_relaxation(model: FullFieldModel, dt: float, t_end: float, perturbation=None,
                      audit: bool = True) -> FrozenRelaxation:
    """Relaxation of the field towards its frozen-cell steady state.

    Intracellular states and signals are held at their initial values; the
    field starts at the steady field plus ``perturbation`` (a callable of
    (x, y, z), default the fundamental sine mode of the ball) and the L2 norm
    of the deviation is recorded every step.
    """
    spec = model.spec
    steady = model.frozen_steady_field(np.array(spec.initial_u, dtype=float))
    pert = perturbation if perturbation is not None else eigenmode(spec.domain.L)
    v0 = steady + model.grid.sample_function(pert)
    state = FullState(0.0, v0, spec.stacked_initial_state(), np.array(spec.initial_u, dtype=float))
    n_steps = _steps(t_end, dt, "t_end")
    times = [0.0]
    norms = [model.grid.l2_norm(v0 - steady)]
    worst = 0.0
    for k in range(1, n_steps + 1):
        state = model.step(state, dt, freeze_intracellular=True, freeze_signals=True, audit=audit)
        if audit:
            worst = max(worst, state.audit.relative_imbalance)
        times.append(k * dt)
        norms.append(model.grid.l2_norm(state.v - steady))
    return FrozenRelaxation(np.array(times), np.array(norms), steady, worst)


def _trajectory(spec, times, xs, us, ps, engine, dt, snapshots):
    return Trajectory(np.array(times), np.array(xs).reshape(len(times), -1),
                      np.array(us).reshape(len(times), -1), spec.kinds,
                      np.array(ps).reshape(len(times), -1),
                      meta={"model": "full", "engine": engine, "dt": dt, "snapshots": snapshots})


def _run_grid(model, dt, n_steps, stride, snap_steps):
    state = model.initial_state()
    times, xs, us, ps = [0.0], [state.x], [state.u], [model.sample(state.v)]
    snapshots = {}
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = model.grid.to_array(state.v)
    for k in range(1, n_steps + 1):
        state = model.step(state, dt)
        if k in snap_steps:
            snapshots[snap_steps[k]] = model.grid.to_array(state.v)
        if k % stride == 0:
            times.append(k * dt)
            xs.append(state.x)
            us.append(state.u)
            ps.append(model.sample(state.v))
    return _trajectory(model.spec, times, xs, us, ps, "grid", dt, snapshots)


def _run_kernel(model, dt, n_steps, stride, snap_steps):
    spec, sig = model.spec, model.spec.signal
    n = spec.n_cells
    keep = bool(snap_steps)
    if keep:
        H, phis = model.response_kernel(dt, keep_fields=True)
    else:
        H = model.response_kernel(dt)
    K = len(H)
    state0 = model.initial_state()
    free, free_fields = model.free_decay(state0.v, dt)

    buf = np.zeros((2 * K, n))
    pos = 0
    x, u = state0.x.copy(), state0.u.copy()
    p = free[0].copy()
    Vs = model.volumes * sig.alpha
    times, xs, us, ps = [0.0], [x], [u], [p]
    snapshots = {}

    def field_at(k):
        v = free_fields[k] if k < len(free_fields) else np.zeros(model.grid.n_interior)
        window = buf[pos:pos + K]
        for j in range(min(k, K)):
            v = v + phis[j] @ window[j]
        return model.grid.to_array(v)

    if 0 in snap_steps:
        snapshots[snap_steps[0]] = model.grid.to_array(state0.v)
    for k in range(1, n_steps + 1):
        s = Vs * (u - p)
        pos = (pos - 1) % K
        buf[pos] = s
        buf[pos + K] = s
        y = spec.outputs(x)
        u_new = u + dt * (sig.a_u * y - sig.gamma_u * u + sig.alpha * (p - u))
        x = x + dt * model.rhs_x(x, u)
        u = u_new
        window = buf[pos:pos + K]
        m = min(k, K)
        p = np.einsum("jab,jb->a", H[:m], window[:m])
        if k < len(free):
            p = p + free[k]
        if k in snap_steps:
            snapshots[snap_steps[k]] = field_at(k)
        if k % stride == 0:
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
                raise SolverError(f"non-finite state at t={k * dt:g}")
            times.append(k * dt)
            xs.append(x)
            us.append(u)
            ps.append(p)
    return _trajectory(spec, times, xs, us, ps, "kernel", dt, snapshots)


# -- snapshot export ----------------------------------------------------------

def snapshot_to_csv(grid: FieldGrid, values3d: np.ndarray, path=None) -> str:
    """Flat ``x,y,z,v`` rows for every lattice node (exterior nodes are 0)."""
    c = grid.axis
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    lines = ["x,y,z,v"]
    for x, y, z, v in zip(X.ravel(), Y.ravel(), Z.ravel(), values3d.ravel()):
        lines.append(f"{x!r},{y!r},{z!r},{float(v)!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        from .io import atomic_write_text

        atomic_write_text(path, text)
    return text


def snapshot_to_bytes(grid: FieldGrid, values3d: np.ndarray) -> bytes:
    """32-byte header (magic, three int32 dims, float64 h, float64 L) then
    little-endian float64 values, row-major with z fastest."""
    nx, ny, nz = values3d.shape
    header = struct.pack("<4s3idd", SNAPSHOT_MAGIC, nx, ny, nz, grid.h, grid.L)
    return header + np.ascontiguousarray(values3d, dtype="<f8").tobytes()


def snapshot_from_bytes(data: bytes):
    magic, nx, ny, nz, h, L = struct.unpack("<4s3idd", data[:32])
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a field snapshot (bad magic)")
    values = np.frombuffer(data[32:], dtype="<f8").reshape(nx, ny, nz).copy()
    return values, h, L
