"""Node-centred tensor grid and the weighted discrete L2 space.

The domain [0, lx] x [0, ly] x [0, lz] is sampled at the (nx+1)(ny+1)(nz+1)
nodes of a uniform tensor grid, boundary nodes included.  Integrals are
trapezoidal: along each axis the end nodes carry weight 1/2, interior nodes
weight 1, and the 3-D quadrature weight is the tensor product of the axis
weights times dx*dy*dz.  All inner products, norms and energies in this
package are taken in that weighted sense.

Fields are extended past each face by two layers of even (mirror) ghost
nodes, U[-m] = U[m] and U[N+m] = U[N-m]; this is the discrete Neumann
boundary condition and is what makes the difference operators in
`calculus` self-adjoint.  Per-axis reflections commute, so corner and edge
ghosts are well defined by composing the three axis reflections.

Reductions use numpy's pairwise summation over a fixed C-order layout, so
repeated evaluation of the same inner product is bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Depth of the ghost-node skirt.  Two layers: the widest stencil (the
# squared Laplacian via re-extension never needs more, but mixed second
# differences read i+2 directly).
GHOST = 2


@dataclass(frozen=True)
class GridSpec:
    """Interval counts and spacings of the node-centred grid.

    nx, ny, nz count intervals, so there are nx+1 nodes along x.  The box
    lengths are exact products (lx = nx*dx); they are not stored.
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
                raise ValueError(f"{name} must be an integer, got {n!r}")
            # depth-2 even reflection reads node N-2, so N >= 2
            if n < 2:
                raise ValueError(f"{name} must be >= 2, got {n}")
        for name in ("dx", "dy", "dz"):
            h = getattr(self, name)
            if not (isinstance(h, (float, int, np.floating)) and math.isfinite(h) and h > 0):
                raise ValueError(f"{name} must be a positive finite number, got {h!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx + 1, self.ny + 1, self.nz + 1)

    @property
    def node_count(self) -> int:
        return (self.nx + 1) * (self.ny + 1) * (self.nz + 1)

    @property
    def lx(self) -> float:
        return self.nx * self.dx

    @property
    def ly(self) -> float:
        return self.ny * self.dy

    @property
    def lz(self) -> float:
        return self.nz * self.dz

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.lz

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Node coordinates along each axis."""
        return (
            self.dx * np.arange(self.nx + 1),
            self.dy * np.arange(self.ny + 1),
            self.dz * np.arange(self.nz + 1),
        )

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x, y, z = self.axes()
        return np.meshgrid(x, y, z, indexing="ij")


def _axis_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[0] = 0.5
    w[-1] = 0.5
    return w


@dataclass(frozen=True)
class QuadWeights:
    """Trapezoidal quadrature weights for a grid.

    `wx, wy, wz` are the bare per-axis vectors (1/2 at the ends); `w3`
    is their tensor product scaled by dx*dy*dz, so w3.sum() equals the
    box volume.
    """

    grid: GridSpec
    wx: np.ndarray = field(repr=False)
    wy: np.ndarray = field(repr=False)
    wz: np.ndarray = field(repr=False)
    w3: np.ndarray = field(repr=False)


def quad_weights(grid: GridSpec) -> QuadWeights:
    wx = _axis_weights(grid.nx)
    wy = _axis_weights(grid.ny)
    wz = _axis_weights(grid.nz)
    w3 = (grid.dx * grid.dy * grid.dz) * (
        wx[:, None, None] * wy[None, :, None] * wz[None, None, :]
    )
    for a in (wx, wy, wz, w3):
        a.setflags(write=False)
    return QuadWeights(grid, wx, wy, wz, w3)


@dataclass(frozen=True)
class Field:
    """Immutable node values on a grid, indexed values[i, j, k]."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if v is self.values and v.flags.writeable:
            v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class ExtendedField:
    """A field plus two even-reflection ghost layers on every face.

    `values` has shape (nx+5, ny+5, nz+5); the interior block starts at
    offset GHOST.  Ghosts satisfy U[-m] = U[m] and U[N+m] = U[N-m] along
    every axis, corners included.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        g = GHOST
        return self.values[g:-g, g:-g, g:-g]


def extend_array(values: np.ndarray) -> np.ndarray:
    """Pad by two even-reflection ghost layers per face.

    numpy's 'reflect' mode mirrors about the edge node without repeating
    it, which is exactly the even extension U[-m] = U[m].
    """
    return np.pad(values, GHOST, mode="reflect")


def extend(f: Field) -> ExtendedField:
    ext = extend_array(f.values)
    ext.setflags(write=False)
    return ExtendedField(f.grid, ext)


# ---------------------------------------------------------------------------
# weighted reductions

def weighted_sum(grid_or_w, integrand: np.ndarray) -> float:
    """Trapezoidal integral of a node array over the box.

    numpy's pairwise reduction over the fixed C-order layout keeps this
    bitwise reproducible run to run.
    """
    w3 = grid_or_w.w3 if isinstance(grid_or_w, QuadWeights) else quad_weights(grid_or_w).w3
    return float(np.sum(w3 * integrand))


def inner(w: QuadWeights, f: np.ndarray, g: np.ndarray) -> float:
    """Weighted L2 inner product of two node arrays."""
    return float(np.sum(w.w3 * f * g))


def norm_l2(w: QuadWeights, f: np.ndarray) -> float:
    return math.sqrt(max(inner(w, f, f), 0.0))


def norm_linf(f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


def trapezoidal_sum_1d(values: np.ndarray, h: float) -> float:
    """1-D trapezoidal sum h*(v0/2 + v1 + ... + v_{N-1} + vN/2)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need a 1-D sequence with at least two entries")
    if not (math.isfinite(h) and h > 0):
        raise ValueError(f"spacing must be positive and finite, got {h!r}")
    return float(h * (np.sum(v) - 0.5 * v[0] - 0.5 * v[-1]))


# ---------------------------------------------------------------------------
# field constructors

def filtered_noise(grid: GridSpec, amplitude: float, seed: int) -> Field:
    """Uniform node noise smoothed once per axis with a [1/4, 1/2, 1/4] kernel.

    Smoothing uses the even extension, so the result lives in the same
    discrete Neumann space as everything else.  The field is rescaled to
    the requested sup norm; deterministic for a given seed.
    """
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=grid.shape)
    ext = extend_array(u)
    for axis in range(3):
        lo = np.roll(ext, 1, axis=axis)
        hi = np.roll(ext, -1, axis=axis)
        ext = 0.25 * lo + 0.5 * ext + 0.25 * hi
    g = GHOST
    u = ext[g:-g, g:-g, g:-g]
    peak = np.max(np.abs(u))
    if peak == 0.0:  # pragma: no cover - measure-zero draw
        raise ValueError("degenerate noise draw")
    return Field(grid, u * (amplitude / peak))


def cosine_field(grid: GridSpec, modes, amplitudes) -> Field:
    """Sum of Neumann-compatible cosine modes.

    Each mode (mx, my, mz) contributes
    a * cos(mx*pi*x/lx) * cos(my*pi*y/ly) * cos(mz*pi*z/lz); these sample
    exactly into the even-reflection space.
    """
    x, y, z = grid.meshgrid()
    u = np.zeros(grid.shape)
    for (mx, my, mz), a in zip(modes, amplitudes, strict=True):
        u += (
            a
            * np.cos(mx * np.pi * x / grid.lx)
            * np.cos(my * np.pi * y / grid.ly)
            * np.cos(mz * np.pi * z / grid.lz)
        )
    return Field(grid, u)
