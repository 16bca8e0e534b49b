"""Finite-difference operators on the even-extended grid.

Every operator here reads the two-layer even extension of its argument
(see `lattice.extend_array`) and returns plain node arrays.  Under the
trapezoidal inner product this makes the Laplacian self-adjoint and the
squared Laplacian symmetric positive semidefinite; the summation-by-parts
identity

    <f, lap g> = -1/2 * (<grad+ f, grad+ g> + <grad- f, grad- g>)

holds to roundoff, which is what the energy bookkeeping in `energy` and
`scheme` relies on.

The squared Laplacian is the composition lap(extend(lap(u))): the
intermediate result is re-extended evenly before the second application.
Mixed second differences (used by the norm-identity checks) are read
directly off a single depth-2 extension of the argument.
"""

from __future__ import annotations

import numpy as np

from .lattice import GHOST, GridSpec, extend_array

FORWARD = "forward"
BACKWARD = "backward"
CENTRAL = "central"
SECOND = "second"

_KINDS = (FORWARD, BACKWARD, CENTRAL, SECOND)


def _shift(ext: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """Interior-shaped view of the extension displaced along one axis."""
    idx = []
    n4 = ext.shape
    for a in range(3):
        o = offset if a == axis else 0
        idx.append(slice(GHOST + o, n4[a] - GHOST + o))
    return ext[tuple(idx)]


def diff_ext(ext: np.ndarray, grid: GridSpec, axis: int, kind: str) -> np.ndarray:
    """One-axis difference of an already-extended array."""
    h = grid.spacing[axis]
    c = _shift(ext, axis, 0)
    if kind == FORWARD:
        return (_shift(ext, axis, +1) - c) / h
    if kind == BACKWARD:
        return (c - _shift(ext, axis, -1)) / h
    if kind == CENTRAL:
        return (_shift(ext, axis, +1) - _shift(ext, axis, -1)) / (2.0 * h)
    if kind == SECOND:
        return (_shift(ext, axis, +1) - 2.0 * c + _shift(ext, axis, -1)) / (h * h)
    raise ValueError(f"unknown difference kind {kind!r}; expected one of {_KINDS}")


def diff(values: np.ndarray, grid: GridSpec, axis: int, kind: str) -> np.ndarray:
    """Per-axis difference (forward/backward/central/second) of a node array."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    return diff_ext(extend_array(values), grid, axis, kind)


def second_diff_ext(
    ext: np.ndarray,
    grid: GridSpec,
    axis_a: int,
    sign_a: int,
    axis_b: int,
    sign_b: int,
) -> np.ndarray:
    """Composition delta_a^{sign_a} delta_b^{sign_b} off one extension.

    Signs are +1 (forward) or -1 (backward).  Same-axis compositions read
    the depth-2 ghosts, e.g. delta+delta+ along x needs U[i+2].
    """
    ha = grid.spacing[axis_a]
    hb = grid.spacing[axis_b]
    oa = sign_a if sign_a > 0 else 0
    ob = sign_b if sign_b > 0 else 0

    def node(da: int, db: int) -> np.ndarray:
        idx = [0, 0, 0]
        idx[axis_a] += da
        if axis_a == axis_b:
            idx[axis_a] += db
        else:
            idx[axis_b] += db
        out = ext
        for a in range(3):
            sl = [slice(None)] * 3
            sl[a] = slice(GHOST + idx[a], ext.shape[a] - GHOST + idx[a])
            out = out[tuple(sl)]
        return out

    # (f(a+oa) - f(a+oa-1)) applied twice, once per axis
    return (
        node(oa, ob) - node(oa - 1, ob) - node(oa, ob - 1) + node(oa - 1, ob - 1)
    ) / (ha * hb)


def laplacian_ext(ext: np.ndarray, grid: GridSpec) -> np.ndarray:
    dx, dy, dz = grid.spacing
    c = _shift(ext, 0, 0)
    out = (_shift(ext, 0, +1) - 2.0 * c + _shift(ext, 0, -1)) / (dx * dx)
    out += (_shift(ext, 1, +1) - 2.0 * c + _shift(ext, 1, -1)) / (dy * dy)
    out += (_shift(ext, 2, +1) - 2.0 * c + _shift(ext, 2, -1)) / (dz * dz)
    return out


def laplacian(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Discrete Laplacian: sum of per-axis second differences."""
    return laplacian_ext(extend_array(values), grid)


def bilaplacian(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Squared Laplacian with even re-extension of the intermediate."""
    return laplacian(laplacian(values, grid), grid)


def gradient_plus(values: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, ...]:
    ext = extend_array(values)
    return tuple(diff_ext(ext, grid, a, FORWARD) for a in range(3))


def gradient_minus(values: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, ...]:
    ext = extend_array(values)
    return tuple(diff_ext(ext, grid, a, BACKWARD) for a in range(3))


def seminorm_d_squared(values: np.ndarray, grid: GridSpec, w3: np.ndarray) -> float:
    """||DU||^2: the average of forward and backward gradient energies."""
    ext = extend_array(values)
    total = 0.0
    for a in range(3):
        gp = diff_ext(ext, grid, a, FORWARD)
        gm = diff_ext(ext, grid, a, BACKWARD)
        total += 0.5 * float(np.sum(w3 * (gp * gp + gm * gm)))
    return total


def summation_by_parts_defect(
    f: np.ndarray, g: np.ndarray, grid: GridSpec, w3: np.ndarray
) -> float:
    """Absolute defect of <f, lap g> + (||grad+ pair|| + ||grad- pair||)/2.

    Zero (to roundoff) for any two node arrays; the identity-suite checks
    in `verify` assert this relatively.
    """
    fe = extend_array(f)
    ge = extend_array(g)
    lhs = float(np.sum(w3 * f * laplacian_ext(ge, grid)))
    rhs = 0.0
    for a in range(3):
        rhs += float(np.sum(w3 * diff_ext(fe, grid, a, FORWARD) * diff_ext(ge, grid, a, FORWARD)))
        rhs += float(np.sum(w3 * diff_ext(fe, grid, a, BACKWARD) * diff_ext(ge, grid, a, BACKWARD)))
    return abs(lhs + 0.5 * rhs)


def laplacian_norm_identity(values: np.ndarray, grid: GridSpec, w3: np.ndarray) -> dict:
    """Both sides of the Laplacian-norm expansion, plus the mixed-norm pieces.

    Returns the weighted squares of: the Laplacian; the per-axis second
    differences; the four mixed differences per axis pair.  The identity

        ||lap U||^2 = sum_axis ||d2_a U||^2 + 1/2 * sum_{a<b} mixed_ab

    holds exactly, where mixed_ab = ||d+a d+b||^2 + ||d+a d-b||^2
    + ||d-a d+b||^2 + ||d-a d-b||^2.  The companion second-difference
    seminorm ||D2 U||^2 uses quarter weights on the same mixed terms and
    satisfies ||D2 U|| <= ||lap U|| <= sqrt(2) ||D2 U||.
    """
    ext = extend_array(values)
    lap = laplacian_ext(ext, grid)
    lap_sq = float(np.sum(w3 * lap * lap))
    axis_sq = []
    for a in range(3):
        d2 = diff_ext(ext, grid, a, SECOND)
        axis_sq.append(float(np.sum(w3 * d2 * d2)))
    mixed_sq = {}
    for a in range(3):
        for b in range(a + 1, 3):
            s = 0.0
            for sa in (+1, -1):
                for sb in (+1, -1):
                    m = second_diff_ext(ext, grid, a, sa, b, sb)
                    s += float(np.sum(w3 * m * m))
            mixed_sq[(a, b)] = s
    pure = float(sum(axis_sq))
    cross = float(sum(mixed_sq.values()))
    return {
        "lap_sq": lap_sq,
        "axis_sq": axis_sq,
        "mixed_sq": mixed_sq,
        "expansion": pure + 0.5 * cross,
        "dd_sq": pure + 0.25 * cross,
    }
