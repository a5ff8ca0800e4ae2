"""Domain model shared by every simulator: geometry, cells, parameters, trajectories.

Units are fixed throughout the package: lengths in um, times in min,
concentrations in nM.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np


class CellKind(str, enum.Enum):
    SENDER = "sender"
    RECEIVER = "receiver"

    @property
    def state_dim(self) -> int:
        return 1 if self is CellKind.SENDER else 2

    @property
    def species(self) -> tuple[str, ...]:
        return ("LuxI",) if self is CellKind.SENDER else ("LacI", "TetR")


@dataclass(frozen=True)
class DomainSpec:
    """Spherical bead of radius ``L`` with diffusivity ``D`` and an absorbing boundary."""

    L: float
    D: float


@dataclass(frozen=True)
class CellSpec:
    position: tuple[float, float, float]
    kind: CellKind
    R: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "kind", CellKind(self.kind))

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.R**3 / 3.0


@dataclass(frozen=True)
class SignalParams:
    alpha: float  # membrane exchange, 1/min
    a_u: float  # AHL production per unit LuxI, 1/min
    gamma_u: float  # AHL degradation, 1/min


@dataclass(frozen=True)
class SenderParams:
    a_s: float
    gamma_s: float


@dataclass(frozen=True)
class ReceiverParams:
    a_r1: float
    a_r2: float
    gamma_r1: float
    gamma_r2: float
    K_1: float
    K_2: float
    K_u: float


# zero field, or a callable v(x, y, z) evaluated at grid nodes
FieldInit = Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]]

DEFAULT_SENDER_STATE = (400.0,)
DEFAULT_RECEIVER_STATE = (300.0, 1.0)


@dataclass(frozen=True)
class SystemSpec:
    """Complete description of one sender-receiver system.

    ``initial_state`` holds one tuple per cell (1 entry for senders, 2 for
    receivers). When omitted the LuxI=400, [LacI, TetR]=[300, 1] values are
    used, with all intracellular signals starting at zero.
    """

    domain: DomainSpec
    cells: tuple[CellSpec, ...]
    signal: SignalParams
    sender_params: SenderParams
    receiver_params: ReceiverParams
    initial_state: Optional[tuple[tuple[float, ...], ...]] = None
    initial_u: Optional[tuple[float, ...]] = None
    initial_field: FieldInit = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.initial_state is None:
            x0 = tuple(
                DEFAULT_SENDER_STATE if c.kind is CellKind.SENDER else DEFAULT_RECEIVER_STATE
                for c in self.cells
            )
            object.__setattr__(self, "initial_state", x0)
        else:
            object.__setattr__(
                self, "initial_state", tuple(tuple(float(v) for v in s) for s in self.initial_state)
            )
        if self.initial_u is None:
            object.__setattr__(self, "initial_u", (0.0,) * len(self.cells))
        else:
            object.__setattr__(self, "initial_u", tuple(float(v) for v in self.initial_u))

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_senders(self) -> int:
        return sum(c.kind is CellKind.SENDER for c in self.cells)

    @property
    def n_receivers(self) -> int:
        return self.n_cells - self.n_senders

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.cells], dtype=float).reshape(-1, 3)

    @property
    def radii(self) -> np.ndarray:
        return np.array([c.R for c in self.cells], dtype=float)

    @property
    def volumes(self) -> np.ndarray:
        return 4.0 * np.pi * self.radii**3 / 3.0

    @property
    def kinds(self) -> tuple[CellKind, ...]:
        return tuple(c.kind for c in self.cells)

    @property
    def state_offsets(self) -> np.ndarray:
        """Start index of each cell's block in the stacked state vector (length n_cells + 1)."""
        dims = [c.kind.state_dim for c in self.cells]
        return np.concatenate([[0], np.cumsum(dims)]).astype(int)

    @property
    def state_dim(self) -> int:
        return int(self.state_offsets[-1])

    def stacked_initial_state(self) -> np.ndarray:
        return np.concatenate([np.asarray(s, dtype=float) for s in self.initial_state]) \
            if self.cells else np.zeros(0)

    def outputs(self, x: np.ndarray) -> np.ndarray:
        """Stacked LuxI outputs Y for a stacked state vector (receivers contribute 0)."""
        y = np.zeros(self.n_cells)
        N = self.n_senders
        # senders precede receivers and carry one species each
        y[:N] = x[:N]
        return y

    def replace(self, **changes) -> "SystemSpec":
        import dataclasses

        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


class ValidationReport(list):
    """List of :class:`Violation`; empty means valid."""

    @property
    def ok(self) -> bool:
        return len(self) == 0

    def codes(self) -> list[str]:
        return [v.code for v in self]

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(f"{v.code}: {v.message}" for v in self)


def validate(spec: SystemSpec, allow_overlap: bool = False) -> ValidationReport:
    """Check every invariant of ``spec`` without mutating it.

    ``allow_overlap`` skips the pairwise no-contact check; dense point-source
    layouts (thousands of cells on a small shell) cannot satisfy it at the
    physical cell radius.
    """
    report = ValidationReport()
    dom = spec.domain

    def bad(code, msg):
        report.append(Violation(code, msg))

    if not (dom.L > 0):
        bad("domain", f"domain radius L must be positive (got {dom.L})")
    if not (dom.D > 0):
        bad("domain", f"diffusivity D must be positive (got {dom.D})")

    sig = spec.signal
    if not (sig.alpha > 0):
        bad("signal", f"alpha must be positive (got {sig.alpha})")
    if sig.a_u < 0 or sig.gamma_u < 0:
        bad("signal", "a_u and gamma_u must be non-negative")
    if not (sig.alpha + sig.gamma_u > 0):
        bad("signal", "alpha + gamma_u must be positive")

    sp = spec.sender_params
    if sp.a_s < 0 or not (sp.gamma_s > 0):
        bad("sender_params", "need a_s >= 0 and gamma_s > 0")
    rp = spec.receiver_params
    for name in ("a_r1", "a_r2", "gamma_r1", "gamma_r2", "K_1", "K_2", "K_u"):
        if not (getattr(rp, name) > 0):
            bad("receiver_params", f"{name} must be strictly positive")

    seen_receiver = False
    for i, c in enumerate(spec.cells):
        if c.kind is CellKind.RECEIVER:
            seen_receiver = True
        elif seen_receiver:
            bad("ordering", f"sender cell {i} follows a receiver; senders must come first")
        if not (c.R > 0):
            bad("cell radius", f"cell {i} has non-positive radius {c.R}")
        r = math.sqrt(sum(p * p for p in c.position))
        if not (r < dom.L - c.R):
            bad("cell outside domain", f"cell {i} at |l|={r:g} is not inside |l| < L - R = {dom.L - c.R:g}")

    if len(spec.initial_state) != spec.n_cells:
        bad("initial_state", "initial_state must have one entry per cell")
    else:
        for i, (c, s) in enumerate(zip(spec.cells, spec.initial_state)):
            if len(s) != c.kind.state_dim:
                bad("initial_state", f"cell {i} ({c.kind.value}) needs {c.kind.state_dim} initial values, got {len(s)}")
    if len(spec.initial_u) != spec.n_cells:
        bad("initial_u", "initial_u must have one entry per cell")

    if not allow_overlap and spec.n_cells > 1:
        pos = spec.positions
        radii = spec.radii
        from scipy.spatial import cKDTree

        tree = cKDTree(pos)
        pairs = tree.query_pairs(2.0 * radii.max())
        for i, j in sorted(pairs):
            d = float(np.linalg.norm(pos[i] - pos[j]))
            if not (d > radii[i] + radii[j]):
                bad("cell overlap", f"cells {i} and {j} are {d:g} um apart (radii {radii[i]:g}, {radii[j]:g})")
    return report


def output_map(kind: Union[CellKind, str], state: Sequence[float]) -> float:
    """LuxI output of one cell: last state component for senders, 0 for receivers."""
    kind = CellKind(kind)
    state = np.asarray(state, dtype=float)
    if state.shape[-1:] != (kind.state_dim,):
        raise ValueError(f"{kind.value} state must have {kind.state_dim} components, got shape {state.shape}")
    if kind is CellKind.SENDER:
        return state[..., -1]
    return np.zeros(state.shape[:-1]) if state.ndim > 1 else 0.0


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled record of a simulation.

    ``states`` is (T, state_dim) in the stacked layout of the SystemSpec,
    ``signals`` is (T, n_cells) holding u_i, ``field_samples`` (T, n_cells)
    holds v(t, l_i) when available.
    """

    times: np.ndarray
    states: np.ndarray
    signals: np.ndarray
    kinds: tuple[CellKind, ...]
    field_samples: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be a strictly increasing 1-D array")
        n = len(self.kinds)
        dim = sum(CellKind(k).state_dim for k in self.kinds)
        if self.states.shape != (len(t), dim) or self.signals.shape != (len(t), n):
            raise ValueError("trajectory arrays are not length-consistent with the cell list")
        if self.field_samples is not None and self.field_samples.shape != (len(t), n):
            raise ValueError("field_samples must be (T, n_cells)")

    @property
    def offsets(self) -> np.ndarray:
        dims = [CellKind(k).state_dim for k in self.kinds]
        return np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def species(self, cell: int, component: int) -> np.ndarray:
        """Time series of component ``component`` (0-based) of cell ``cell`` (0-based)."""
        off = self.offsets
        if not 0 <= component < off[cell + 1] - off[cell]:
            raise IndexError(f"cell {cell} has no component {component}")
        return self.states[:, off[cell] + component]

    def cell_state(self, cell: int) -> np.ndarray:
        off = self.offsets
        return self.states[:, off[cell]:off[cell + 1]]

    def final_state(self, cell: int) -> np.ndarray:
        return self.cell_state(cell)[-1]
