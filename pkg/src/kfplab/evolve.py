"""Time stepping for the primal flow and its quadrature-exact dual.

The default scheme is implicit Euler: each forward step solves
(I - dt L) f_{n+1} = f_n with a cached sparse LU factorization, and the dual
backward step reuses the same factorization transposed. Since
<A^{-1} f, g> = <f, A^{-T} g>, the pairing <f_n, g_n>_h is invariant step by
step up to solver roundoff — no separate discretization of the dual flow is
ever introduced.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from .grid import PhaseGrid
from .operator import GeneratorMatrix

SNAPSHOT_MAGIC = b"KFPF"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class PhaseField:
    """A scalar field on the phase grid at one instant."""

    values: np.ndarray = field(repr=False)  # flat, length Nx*Nv
    t: float = 0.0
    kind: str = "primal"  # or "dual"

    def reshape(self, grid: PhaseGrid) -> np.ndarray:
        return self.values.reshape(grid.Nx, grid.Nv)


@dataclass(frozen=True)
class TimeScheme:
    """Stepping scheme and step size.

    ``implicit_euler`` (default) is unconditionally positivity-preserving for
    Metzler generators; ``crank_nicolson`` trades that for second order;
    ``explicit_euler`` requires dt below the generator's positivity bound.
    """

    dt: float
    method: str = "implicit_euler"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.method not in ("implicit_euler", "crank_nicolson", "explicit_euler"):
            raise ValueError(f"unknown time scheme {self.method!r}")


def default_dt(grid: PhaseGrid) -> float:
    """Step size min(dx, dv^2)/4: transport and diffusion scales balanced."""
    return min(grid.dx, grid.dv ** 2) / 4.0


@dataclass
class _Stepper:
    """Cached factorizations for one (generator, scheme) pair."""

    Lh: GeneratorMatrix
    scheme: TimeScheme
    _lu: object = None
    _rhs: sparse.csr_matrix = None  # Crank-Nicolson explicit half

    def __post_init__(self):
        n = self.Lh.size
        I = sparse.identity(n, format="csc")
        L = self.Lh.matrix
        if self.scheme.method == "implicit_euler":
            self._lu = splu((I - self.scheme.dt * L).tocsc())
        elif self.scheme.method == "crank_nicolson":
            half = 0.5 * self.scheme.dt
            self._lu = splu((I - half * L).tocsc())
            self._rhs = (sparse.identity(n) + half * L).tocsr()
        else:
            bound = self.Lh.explicit_dt_bound()
            if self.scheme.dt > bound:
                raise ValueError(
                    f"explicit step dt={self.scheme.dt} exceeds the positivity "
                    f"bound {bound:.3e}; reduce dt or use implicit_euler")

    def forward(self, f: np.ndarray) -> np.ndarray:
        if self.scheme.method == "implicit_euler":
            return self._lu.solve(f)
        if self.scheme.method == "crank_nicolson":
            return self._lu.solve(self._rhs @ f)
        return f + self.scheme.dt * (self.Lh.matrix @ f)

    def backward_dual(self, g: np.ndarray) -> np.ndarray:
        """One dual step backward in time, the exact transpose of forward."""
        if self.scheme.method == "implicit_euler":
            return self._lu.solve(g, trans="T")
        if self.scheme.method == "crank_nicolson":
            return self._rhs.T @ self._lu.solve(g, trans="T")
        return g + self.scheme.dt * (self.Lh.matrix.T @ g)


@dataclass(frozen=True)
class Trajectory:
    """Stored snapshots of an evolution, in increasing time order."""

    fields: tuple[PhaseField, ...]
    scheme: TimeScheme
    n_steps: int

    @property
    def final(self) -> PhaseField:
        return self.fields[-1]

    @property
    def initial(self) -> PhaseField:
        return self.fields[0]


def _resolve_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if not np.isclose(n * dt, T, rtol=1e-9, atol=1e-12):
        raise ValueError(f"horizon T={T} is not an integer multiple of dt={dt}")
    if n < 1:
        raise ValueError(f"horizon T={T} shorter than one step dt={dt}")
    return n


def evolve_forward(f0: np.ndarray | PhaseField, Lh: GeneratorMatrix, T: float,
                   scheme: TimeScheme | None = None,
                   snapshot_every: int = 0) -> Trajectory:
    """Evolve the primal field from time 0 to T.

    ``snapshot_every`` = k stores every k-th step (0 keeps only the ends).
    """
    scheme = scheme or TimeScheme(dt=default_dt(Lh.grid))
    start = f0.values if isinstance(f0, PhaseField) else np.asarray(f0, dtype=float)
    if start.shape != (Lh.size,):
        raise ValueError(f"field has {start.shape} entries, expected ({Lh.size},)")
    n = _resolve_steps(T, scheme.dt)
    stepper = _Stepper(Lh, scheme)
    fields = [PhaseField(values=start.copy(), t=0.0, kind="primal")]
    f = start.copy()
    for k in range(1, n + 1):
        f = stepper.forward(f)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError(f"non-finite field values after step {k}")
        if (snapshot_every and k % snapshot_every == 0) or k == n:
            fields.append(PhaseField(values=f.copy(), t=k * scheme.dt, kind="primal"))
    return Trajectory(fields=tuple(fields), scheme=scheme, n_steps=n)


def evolve_dual_backward(gT: np.ndarray | PhaseField, Lh: GeneratorMatrix, T: float,
                         scheme: TimeScheme | None = None,
                         snapshot_every: int = 0) -> Trajectory:
    """Evolve the dual field backward from time T to 0.

    Each step is the transpose of the corresponding forward step, so the
    pairing with any forward trajectory is invariant to solver precision.
    Snapshots are returned in increasing time order (t=0 first).
    """
    scheme = scheme or TimeScheme(dt=default_dt(Lh.grid))
    start = gT.values if isinstance(gT, PhaseField) else np.asarray(gT, dtype=float)
    if start.shape != (Lh.size,):
        raise ValueError(f"field has {start.shape} entries, expected ({Lh.size},)")
    n = _resolve_steps(T, scheme.dt)
    stepper = _Stepper(Lh, scheme)
    fields = [PhaseField(values=start.copy(), t=T, kind="dual")]
    g = start.copy()
    for k in range(1, n + 1):
        g = stepper.backward_dual(g)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite dual values after step {k}")
        if (snapshot_every and k % snapshot_every == 0) or k == n:
            fields.append(PhaseField(values=g.copy(), t=T - k * scheme.dt, kind="dual"))
    return Trajectory(fields=tuple(fields[::-1]), scheme=scheme, n_steps=n)


def fundamental_solution(z0: tuple[int, int], Lh: GeneratorMatrix, T: float,
                         scheme: TimeScheme | None = None) -> PhaseField:
    """Evolve a normalized grid delta at node z0 = (i, j) to time T."""
    grid = Lh.grid
    f0 = np.zeros(Lh.size)
    f0[grid.flat_index(*z0)] = 1.0 / grid.cell_volume
    return evolve_forward(f0, Lh, T, scheme).final


def step_matrix(Lh: GeneratorMatrix, T: float,
                scheme: TimeScheme | None = None) -> np.ndarray:
    """Dense matrix of the discrete flow map over [0, T] (columns = images of e_j).

    Intended for the small grids used in spectral certification; the cost is
    one factorized solve per step applied to all columns at once.
    """
    scheme = scheme or TimeScheme(dt=default_dt(Lh.grid))
    n_steps = _resolve_steps(T, scheme.dt)
    stepper = _Stepper(Lh, scheme)
    S = np.eye(Lh.size)
    for _ in range(n_steps):
        S = stepper.forward(S)
    return S


def write_snapshot(path: str, f: PhaseField, grid: PhaseGrid,
                   timestamp: float | None = None) -> None:
    """Binary snapshot: magic, version, Nx, Nv, timestamp, row-major payload.

    All fields little-endian; the payload is x-major float64 like the flat
    in-memory layout.
    """
    ts = time.time() if timestamp is None else float(timestamp)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIId", SNAPSHOT_VERSION, grid.Nx, grid.Nv, ts))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path: str) -> tuple[np.ndarray, int, int, float]:
    """Read a snapshot back; returns (values, Nx, Nv, timestamp)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, not a snapshot file")
        version, Nx, Nv, ts = struct.unpack("<IIId", fh.read(20))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        payload = fh.read(8 * Nx * Nv)
        if len(payload) != 8 * Nx * Nv:
            raise ValueError(f"{path}: truncated payload")
        values = np.frombuffer(payload, dtype="<f8").astype(float)
    return values, Nx, Nv, ts


def mass(f: np.ndarray | PhaseField, grid: PhaseGrid) -> float:
    vals = f.values if isinstance(f, PhaseField) else f
    return float(np.sum(vals) * grid.cell_volume)
