"""Dirichlet Green's function of the ball and the communication gain matrix.

The ball's Green's function for ``-D lap g = delta`` with ``g = 0`` on
``|r| = L`` is built from a single image charge at ``l* = (L/|l|)^2 l``
carrying weight ``L/|l|``.  Self-interaction is regularised by averaging the
free-space singularity over the cell volume.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .types import CellSpec, DomainSpec, SignalParams

ORIGIN_TOL = 1e-9  # relative to L; sources closer than this use the centred limit
MAX_CONDITION = 1e12
_CHUNK = 512


class SingularSystemError(np.linalg.LinAlgError):
    """A linear system in the gain construction is singular or too ill-conditioned."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (1-norm condition estimate {condition:.3e})")
        self.condition = condition


def _as_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    return p


def green_pair(domain: DomainSpec, source, probe) -> float:
    """g(probe, source) for distinct points, via the image-point construction.

    A probe exactly on the sphere is accepted and evaluates to zero up to
    rounding; anything farther out is rejected.
    """
    L, D = domain.L, domain.D
    src, prb = _as_point(source), _as_point(probe)
    rs, rp = float(np.linalg.norm(src)), float(np.linalg.norm(prb))
    if not rs < L:
        raise ValueError(f"source at |l|={rs:g} is outside the domain (L={L:g})")
    if rp > L * (1.0 + 1e-12):
        raise ValueError(f"probe at |r|={rp:g} is outside the domain (L={L:g})")
    d = float(np.linalg.norm(prb - src))
    if d == 0.0:
        raise ValueError("coincident source and probe; use green_self for the diagonal")
    if rs < ORIGIN_TOL * L:
        # image point recedes to infinity; its contribution tends to 1/L
        return (1.0 / d - 1.0 / L) / (4.0 * math.pi * D)
    image = (L * L / (rs * rs)) * src
    return (1.0 / d - (L / rs) / float(np.linalg.norm(prb - image))) / (4.0 * math.pi * D)


def green_self(domain: DomainSpec, position, R: float) -> float:
    """Cell-averaged self term 3/(8 pi D R) - L/(4 pi D (L^2 - |l|^2)).

    The free-space singularity is averaged over the ball of radius ``R``;
    the (smooth) image term is evaluated at the cell centre.
    """
    L, D = domain.L, domain.D
    r = float(np.linalg.norm(_as_point(position)))
    if not (R > 0):
        raise ValueError("cell radius must be positive")
    if not r < L - R:
        raise ValueError(f"cell at |l|={r:g} lies within R={R:g} of the boundary (L={L:g})")
    return 3.0 / (8.0 * math.pi * D * R) - L / (4.0 * math.pi * D * (L * L - r * r))


def green_block(domain: DomainSpec, probes, sources) -> np.ndarray:
    """Matrix of g(probe_p, source_s) for arrays of points, shape (P, S).

    Uses the expanded image form
    ``1/|p - s| - 1/sqrt(L^2 - 2 p.s + |p|^2 |s|^2 / L^2)``, which is symmetric
    in (p, s) and has no special case at the origin.  Coincident pairs give inf.
    """
    L, D = domain.L, domain.D
    P = np.asarray(probes, dtype=float).reshape(-1, 3)
    S = np.asarray(sources, dtype=float).reshape(-1, 3)
    out = np.empty((len(P), len(S)))
    s2 = np.einsum("ij,ij->i", S, S)
    for start in range(0, len(P), _CHUNK):
        p = P[start:start + _CHUNK]
        p2 = np.einsum("ij,ij->i", p, p)
        # elementwise products keep the result bitwise symmetric under p <-> s
        dot = (p[:, None, 0] * S[None, :, 0] + p[:, None, 1] * S[None, :, 1]
               + p[:, None, 2] * S[None, :, 2])
        dx = p[:, None, 0] - S[None, :, 0]
        dy = p[:, None, 1] - S[None, :, 1]
        dz = p[:, None, 2] - S[None, :, 2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        img = np.sqrt(L * L - 2.0 * dot + (p2[:, None] * s2[None, :]) / (L * L))
        with np.errstate(divide="ignore"):
            out[start:start + _CHUNK] = (1.0 / dist - 1.0 / img) / (4.0 * math.pi * D)
    return out


@dataclass(frozen=True)
class GreenMatrix:
    entries: np.ndarray
    domain: DomainSpec
    positions: np.ndarray
    radii: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path=None) -> str:
        return matrix_to_csv(self.entries, path)


def assemble_green(domain: DomainSpec, cells: Sequence[CellSpec]) -> GreenMatrix:
    """Dense symmetric matrix with g(l_j, l_i) off the diagonal and the
    regularised self term on it."""
    pos = np.array([c.position for c in cells], dtype=float).reshape(-1, 3)
    radii = np.array([c.R for c in cells], dtype=float)
    n = len(pos)
    if n:
        norms = np.linalg.norm(pos, axis=1)
        if np.any(norms >= domain.L - radii):
            i = int(np.argmax(norms + radii - domain.L))
            raise ValueError(f"cell {i} lies within R of the boundary or outside the domain")
    G = green_block(domain, pos, pos) if n else np.zeros((0, 0))
    for i in range(n):
        G[i, i] = green_self(domain, pos[i], radii[i])
    if n and not np.all(np.isfinite(G)):
        raise ValueError("coincident cell positions give an infinite interaction")
    # mirror the upper triangle so symmetry is exact regardless of rounding
    iu = np.triu_indices(n, 1)
    G[(iu[1], iu[0])] = G[iu]
    return GreenMatrix(G, domain, pos, radii)


@dataclass(frozen=True)
class GainMatrix:
    """Static map U = entries @ Y together with its building blocks.

    ``field_operator`` maps U to the quasi-steady field at the cells.
    """

    entries: np.ndarray
    source_green: GreenMatrix
    signal: SignalParams
    V: np.ndarray
    field_operator: np.ndarray
    conditions: tuple[float, float] = field(default=(1.0, 1.0))

    def to_csv(self, path=None) -> str:
        return matrix_to_csv(self.entries, path)

    def field_at_cells(self, U) -> np.ndarray:
        return self.field_operator @ np.asarray(U, dtype=float)


def _factor(A: np.ndarray, what: str):
    anorm = np.abs(A).sum(axis=0).max()
    with warnings.catch_warnings():
        # singularity is judged by the condition estimate below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, overwrite_a=True, check_finite=False)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    cond = math.inf if rcond == 0.0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(f"{what} is singular for this geometry/parameter combination", cond)
    return (lu, piv), cond


def _volumes(V, n: int) -> np.ndarray:
    V = np.broadcast_to(np.asarray(V, dtype=float), (n,)).copy()
    if np.any(V <= 0):
        raise ValueError("cell volumes must be positive")
    return V


def assemble_gain(green: GreenMatrix, signal: SignalParams, V) -> GainMatrix:
    """Communication gain matrix

    ``(I - alpha/(alpha+gamma_u) * M)^{-1} * a_u/(alpha+gamma_u)``,
    with ``M = (I + alpha G V)^{-1} alpha G V`` the field-reconstruction
    operator. For uniform cell volume ``M = V alpha G (I + V alpha G)^{-1}``.
    ``V`` may be a scalar or one volume per cell.
    """
    n = green.n
    Vv = _volumes(V, n)
    alpha, a_u, gamma_u = signal.alpha, signal.a_u, signal.gamma_u
    if not (alpha + gamma_u > 0):
        raise ValueError("alpha + gamma_u must be positive")
    if n == 0:
        empty = np.zeros((0, 0))
        return GainMatrix(empty, green, signal, Vv, empty)
    I = np.eye(n)
    B = alpha * green.entries * Vv[None, :]
    lu1, cond1 = _factor(I + B, "I + V alpha G")
    M = sla.lu_solve(lu1, B, check_finite=False)
    c = alpha / (alpha + gamma_u)
    lu2, cond2 = _factor(I - c * M, "I - V alpha^2/(alpha+gamma_u) G (I + V alpha G)^-1")
    gain = sla.lu_solve(lu2, (a_u / (alpha + gamma_u)) * I, check_finite=False)
    return GainMatrix(gain, green, signal, Vv, M, (cond1, cond2))


def static_field(green: GreenMatrix, signal: SignalParams, V, U, probes=None) -> np.ndarray:
    """Quasi-steady field for frozen intracellular signals ``U``.

    Without ``probes`` returns the field at the cell positions
    ``nu = (I + alpha G V)^{-1} alpha G V U``.  With probes, returns
    ``alpha * sum_j V_j g(r, l_j) (u_j - nu_j)`` at each probe; probes that
    coincide with a cell get that cell's ``nu``.
    """
    n = green.n
    Vv = _volumes(V, n)
    U = np.asarray(U, dtype=float)
    if U.shape != (n,):
        raise ValueError(f"U must have length {n}")
    B = signal.alpha * green.entries * Vv[None, :]
    lu, _ = _factor(np.eye(n) + B, "I + V alpha G")
    nu = sla.lu_solve(lu, B @ U, check_finite=False)
    if probes is None:
        return nu
    P = np.asarray(probes, dtype=float).reshape(-1, 3)
    L = green.domain.L
    if np.any(np.linalg.norm(P, axis=1) > L * (1.0 + 1e-12)):
        raise ValueError("probe outside the domain")
    K = green_block(green.domain, P, green.positions)
    strength = signal.alpha * Vv * (U - nu)
    out = np.empty(len(P))
    for k in range(len(P)):
        d = np.linalg.norm(green.positions - P[k], axis=1)
        hit = np.nonzero(d <= 1e-12 * L)[0]
        out[k] = nu[hit[0]] if hit.size else K[k] @ strength
    return out


def matrix_to_csv(A: np.ndarray, path=None) -> str:
    """Row-major CSV with a header row of column (cell) indices."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell"] + [str(j) for j in range(A.shape[1])])
    for i, row in enumerate(A):
        w.writerow([str(i)] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        from .io import atomic_write_text

        atomic_write_text(path, text)
    return text


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])
