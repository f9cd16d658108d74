"""Phase-space discretization: slab in position times a truncated velocity interval.

The domain is (0, L) x (-V, V) with a uniform cell-centered grid. The velocity
grid has an even number of cells so that it is exactly symmetric under
v -> -v (mirror map) and never places a node at v = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform cell-centered grid on (0, L) x (-V, V).

    Immutable after construction; safe to share across threads.
    """

    L: float
    V: float
    Nx: int
    Nv: int
    x_nodes: np.ndarray = field(repr=False)
    v_nodes: np.ndarray = field(repr=False)
    dx: float = 0.0
    dv: float = 0.0

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dv

    @property
    def size(self) -> int:
        return self.Nx * self.Nv

    def mirror_index(self, j: int | np.ndarray):
        """Index sigma(j) with v[sigma(j)] = -v[j] exactly."""
        return self.Nv - 1 - j

    def flat_index(self, i: int, j: int) -> int:
        """Row-major flattening, x-major / v-minor."""
        return i * self.Nv + j

    def delta(self, x: np.ndarray | float):
        """Distance to the spatial boundary, min(x, L - x)."""
        return np.minimum(x, self.L - x)

    def normal_extension(self, x: np.ndarray | float):
        """Interior normal extension n(x) = -delta'(x): -1 left half, +1 right half.

        The jump at x = L/2 is accepted as-is; n(x) only ever enters through
        the bounded factor n(x)*v/<v>^4.
        """
        return np.where(np.asarray(x) < self.L / 2, -1.0, 1.0)


@dataclass(frozen=True)
class Wall:
    """One wall of the slab: its position, outward normal and velocity index sets."""

    name: str
    position: float
    normal: float
    incoming: np.ndarray = field(repr=False)  # j with v_j * n < 0
    outgoing: np.ndarray = field(repr=False)  # j with v_j * n > 0
    cell_index: int = 0  # spatial index of the adjacent cell


@dataclass(frozen=True)
class BoundaryGeometry:
    """Wall geometry of the slab: normals and incoming/outgoing velocity sets."""

    left: Wall
    right: Wall

    @property
    def walls(self) -> tuple[Wall, Wall]:
        return (self.left, self.right)


@dataclass(frozen=True)
class CoreRegion:
    """Nodes with delta(x) > eps and |v| < 1/eps (the region O_eps)."""

    eps: float
    mask: np.ndarray = field(repr=False)  # boolean over flat indices
    empty: bool = False

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def make_grid(L: float, V: float, Nx: int, Nv: int) -> PhaseGrid:
    """Build a uniform cell-centered phase grid.

    Nv must be even so the velocity nodes are exactly mirror-symmetric and
    no node sits at v = 0.
    """
    if L <= 0 or V <= 0:
        raise ValueError(f"domain dimensions must be positive, got L={L}, V={V}")
    if Nx < 1 or Nv < 2:
        raise ValueError(f"need Nx >= 1 and Nv >= 2, got Nx={Nx}, Nv={Nv}")
    if Nv % 2 != 0:
        raise ValueError(f"Nv must be even for exact specular symmetry, got Nv={Nv}")
    dx = L / Nx
    dv = 2.0 * V / Nv
    x_nodes = (np.arange(Nx) + 0.5) * dx
    # Symmetric construction: build the positive half then mirror, so that
    # v[sigma(j)] == -v[j] holds bit-for-bit.
    half = (np.arange(Nv // 2) + 0.5) * dv
    v_nodes = np.concatenate([-half[::-1], half])
    x_nodes.setflags(write=False)
    v_nodes.setflags(write=False)
    return PhaseGrid(L=float(L), V=float(V), Nx=int(Nx), Nv=int(Nv),
                     x_nodes=x_nodes, v_nodes=v_nodes, dx=dx, dv=dv)


def boundary_geometry(grid: PhaseGrid) -> BoundaryGeometry:
    """Wall descriptors for the slab: left wall at x=0 (n=-1), right at x=L (n=+1)."""
    v = grid.v_nodes
    left = Wall(
        name="left", position=0.0, normal=-1.0,
        incoming=np.flatnonzero(v > 0), outgoing=np.flatnonzero(v < 0),
        cell_index=0,
    )
    right = Wall(
        name="right", position=grid.L, normal=1.0,
        incoming=np.flatnonzero(v < 0), outgoing=np.flatnonzero(v > 0),
        cell_index=grid.Nx - 1,
    )
    return BoundaryGeometry(left=left, right=right)


def core_region(grid: PhaseGrid, eps: float) -> CoreRegion:
    """Nodes at distance > eps from the walls with speed below 1/eps.

    An empty region is reported through the ``empty`` flag, not an error.
    """
    if eps <= 0:
        raise ValueError(f"core parameter eps must be positive, got {eps}")
    x_ok = grid.delta(grid.x_nodes) > eps
    v_ok = np.abs(grid.v_nodes) < 1.0 / eps
    mask = np.outer(x_ok, v_ok).reshape(-1)
    mask.setflags(write=False)
    return CoreRegion(eps=float(eps), mask=mask, empty=not mask.any())
