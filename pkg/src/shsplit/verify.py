"""Verification harness: dense oracles, identity suites, samplers, studies.

Everything here exists to check the production kernels against an
independent route:

* `DenseOracle` assembles the difference operators as explicit matrices
  straight from the reflection index rule, never calling the stencil
  code, and exposes the quadratic forms (mass, gradient seminorm,
  Laplacian norm, second-difference seminorm) as matrices.
* `identity_suite` evaluates the discrete-calculus identities
  (summation by parts, telescoping, the Laplacian/mixed-norm
  expansions) on batches of random fields and reports worst relative
  defects.
* `convexity_sampler` probes the smoothness/strong-convexity moduli of
  the energy pieces, including a negative control that must fail.
* `MMSProblem`, `temporal_convergence` and `spatial_convergence` measure
  convergence orders of the integrator (self-convergence in time,
  manufactured solutions in space).

Random fields are filtered uniform noise with fixed, logged seeds, so
every run of the suite sees the same data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus, energy, lattice, linsolve, splitting
from .energy import PhysParams
from .lattice import Field, GridSpec, quad_weights

_AXES = (0, 1, 2)


# ---------------------------------------------------------------------------
# dense oracle


def _reflect_index(i: int, n: int) -> int:
    """Even-reflection index map for |overhang| <= n."""
    if i < 0:
        i = -i
    if i > n:
        i = 2 * n - i
    if i < 0 or i > n:
        raise ValueError(f"index {i} not reachable by one reflection on [0, {n}]")
    return i


def _diff_matrix_1d(n: int, h: float, kind: str) -> np.ndarray:
    """Per-axis difference matrix with the reflection folded in."""
    m = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        if kind == calculus.FORWARD:
            m[i, _reflect_index(i + 1, n)] += 1.0 / h
            m[i, i] += -1.0 / h
        elif kind == calculus.BACKWARD:
            m[i, i] += 1.0 / h
            m[i, _reflect_index(i - 1, n)] += -1.0 / h
        elif kind == calculus.CENTRAL:
            m[i, _reflect_index(i + 1, n)] += 0.5 / h
            m[i, _reflect_index(i - 1, n)] += -0.5 / h
        elif kind == calculus.SECOND:
            m[i, _reflect_index(i + 1, n)] += 1.0 / (h * h)
            m[i, i] += -2.0 / (h * h)
            m[i, _reflect_index(i - 1, n)] += 1.0 / (h * h)
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return m


def _stencil_matrix_1d(n: int, coeffs: dict[int, float]) -> np.ndarray:
    """Matrix of a 1-D stencil {offset: coeff} with reflected indices."""
    m = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for off, c in coeffs.items():
            m[i, _reflect_index(i + off, n)] += c
    return m


class DenseOracle:
    """Explicit matrices for every operator, on grids small enough to afford.

    Flat index convention: fields are flattened C-order from values[i,j,k],
    so z varies fastest.  `apply`-style checks compare these matrices with
    the matrix-free kernels; the quadratic-form matrices feed the sharp
    Sobolev constant and the SPD checks.
    """

    def __init__(self, grid: GridSpec, node_limit: int = 4096):
        if grid.node_count > node_limit:
            raise ValueError(
                f"grid has {grid.node_count} nodes; dense oracle limited to {node_limit}"
            )
        self.grid = grid
        self.weights = quad_weights(grid)
        self.w_flat = self.weights.w3.ravel()
        self._eye = {
            0: np.eye(grid.nx + 1),
            1: np.eye(grid.ny + 1),
            2: np.eye(grid.nz + 1),
        }

    def _lift(self, m: np.ndarray, axis: int) -> np.ndarray:
        """Promote a per-axis matrix to the full grid via Kronecker products."""
        parts = [self._eye[0], self._eye[1], self._eye[2]]
        parts[axis] = m
        return np.kron(parts[0], np.kron(parts[1], parts[2]))

    def _n(self, axis: int) -> int:
        return (self.grid.nx, self.grid.ny, self.grid.nz)[axis]

    def diff_matrix(self, axis: int, kind: str) -> np.ndarray:
        return self._lift(_diff_matrix_1d(self._n(axis), self.grid.spacing[axis], kind), axis)

    def mixed_matrix(self, axis_a: int, sign_a: int, axis_b: int, sign_b: int) -> np.ndarray:
        """Second difference delta_a^{sa} delta_b^{sb} off a single extension.

        Same-axis compositions collapse to a 3-point stencil (the middle
        nodes coincide); cross-axis ones are products of the per-axis
        matrices, which is identical to reading one extension because the
        reflections commute and single-axis differences preserve evenness
        along the other axes.
        """
        if axis_a == axis_b:
            h = self.grid.spacing[axis_a]
            s = (1 if sign_a > 0 else 0) + (1 if sign_b > 0 else 0)
            coeffs = {s: 1.0 / (h * h), s - 1: -2.0 / (h * h), s - 2: 1.0 / (h * h)}
            return self._lift(_stencil_matrix_1d(self._n(axis_a), coeffs), axis_a)
        ka = calculus.FORWARD if sign_a > 0 else calculus.BACKWARD
        kb = calculus.FORWARD if sign_b > 0 else calculus.BACKWARD
        return self.diff_matrix(axis_a, ka) @ self.diff_matrix(axis_b, kb)

    def laplacian_matrix(self) -> np.ndarray:
        return sum(self.diff_matrix(a, calculus.SECOND) for a in _AXES)

    def bilaplacian_matrix(self) -> np.ndarray:
        # composition re-extends the intermediate, which the folded
        # matrices encode by construction
        a = self.laplacian_matrix()
        return a @ a

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.w_flat)

    def seminorm_form(self) -> np.ndarray:
        """Matrix G with u' G u = ||Du||^2."""
        w = self.mass_matrix()
        g = np.zeros((self.grid.node_count, self.grid.node_count))
        for a in _AXES:
            dp = self.diff_matrix(a, calculus.FORWARD)
            dm = self.diff_matrix(a, calculus.BACKWARD)
            g += 0.5 * (dp.T @ w @ dp + dm.T @ w @ dm)
        return g

    def laplacian_norm_form(self) -> np.ndarray:
        """Matrix L with u' L u = ||lap u||^2."""
        lap = self.laplacian_matrix()
        return lap.T @ self.mass_matrix() @ lap

    def dd_norm_form(self) -> np.ndarray:
        """Matrix with u' A u = ||D2 u||^2 (quarter-weighted mixed terms)."""
        w = self.mass_matrix()
        out = np.zeros((self.grid.node_count, self.grid.node_count))
        for a in _AXES:
            d2 = self.diff_matrix(a, calculus.SECOND)
            out += d2.T @ w @ d2
        for a in _AXES:
            for b in range(a + 1, 3):
                for sa in (+1, -1):
                    for sb in (+1, -1):
                        m = self.mixed_matrix(a, sa, b, sb)
                        out += 0.25 * (m.T @ w @ m)
        return out

    def sobolev_form(self) -> np.ndarray:
        """SPD matrix Q with u' Q u = ||u||^2 + ||Du||^2 + ||lap u||^2."""
        return self.mass_matrix() + self.seminorm_form() + self.laplacian_norm_form()

    def flatten(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).ravel()

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(self.grid.shape)


# ---------------------------------------------------------------------------
# random fields and the identity suite


def random_fields(grid: GridSpec, count: int, seed: int, amplitude: float = 1.0):
    """Deterministic stream of filtered-noise fields (seed logged by callers)."""
    for k in range(count):
        yield lattice.filtered_noise(grid, amplitude, seed + k)


def _rel(defect: float, scale: float) -> float:
    return defect / max(scale, 1e-300)


@dataclass
class IdentityReport:
    grid: GridSpec
    fields: int
    seed: int
    worst: dict[str, float] = field(default_factory=dict)

    @property
    def max_defect(self) -> float:
        return max(self.worst.values())

    def passed(self, tol: float = 1e-12) -> bool:
        return self.max_defect <= tol


def telescope_defects(seq: np.ndarray) -> tuple[float, float]:
    """Telescoping-sum identity on a 1-D sequence, raw and even-extended.

    For any sequence f_0..f_{N+1} the trapezoidal sum of the differences
    f_{i+1} - f_i over i = 0..N equals (f_{N+1}+f_N)/2 - (f_1+f_0)/2; on
    an evenly extended sequence (f_{N+1} = f_{N-1}) the bracket becomes
    (f_{N-1}+f_N)/2 - (f_1+f_0)/2.  Returns both absolute defects.
    """
    f = np.asarray(seq, dtype=np.float64)
    n = f.size - 2  # treat the last entry as f_{N+1}
    if n < 1:
        raise ValueError("need at least three entries")
    d = f[1:] - f[:-1]  # length N+1, entries i = 0..N
    lhs = float(np.sum(d) - 0.5 * d[0] - 0.5 * d[-1])
    raw = abs(lhs - ((f[n + 1] + f[n]) / 2.0 - (f[1] + f[0]) / 2.0))
    g = f.copy()
    g[n + 1] = g[n - 1]  # impose the even extension
    dg = g[1:] - g[:-1]
    lhs_even = float(np.sum(dg) - 0.5 * dg[0] - 0.5 * dg[-1])
    even = abs(lhs_even - ((g[n - 1] + g[n]) / 2.0 - (g[1] + g[0]) / 2.0))
    return raw, even


def like_laplacian_defect(u: np.ndarray, grid: GridSpec, w3: np.ndarray) -> float:
    """Worst relative defect of <lap U, d2_a U> = quarter mixed-gradient sums.

    For each axis a the inner product of the Laplacian with the axis
    second difference equals 1/4 of the sum of the four gradient energies
    of the shifted first differences delta_a^{+-}.
    """
    ext = lattice.extend_array(u)
    lap = calculus.laplacian_ext(ext, grid)
    worst = 0.0
    for a in _AXES:
        d2 = calculus.diff_ext(ext, grid, a, calculus.SECOND)
        lhs = float(np.sum(w3 * lap * d2))
        rhs = 0.0
        for sa in (+1, -1):
            for sb in (+1, -1):
                for b in _AXES:
                    m = calculus.second_diff_ext(ext, grid, b, sb, a, sa)
                    rhs += float(np.sum(w3 * m * m))
        rhs *= 0.25
        worst = max(worst, _rel(abs(lhs - rhs), max(abs(lhs), abs(rhs))))
    return worst


def identity_suite(
    grid: GridSpec, n_fields: int = 100, seed: int = 0, amplitude: float = 1.0
) -> IdentityReport:
    """Run every discrete-calculus identity on a batch of random fields."""
    w = quad_weights(grid)
    w3 = w.w3
    report = IdentityReport(grid=grid, fields=n_fields, seed=seed)
    worst = {
        "summation_by_parts": 0.0,
        "self_adjoint": 0.0,
        "bilap_is_lap_sq_norm": 0.0,
        "telescope_raw": 0.0,
        "telescope_even": 0.0,
        "like_laplacian": 0.0,
        "lap_norm_expansion": 0.0,
        "sandwich": 0.0,
        "constant_kernel": 0.0,
    }
    rng = np.random.default_rng(seed ^ 0x5EED)
    fields = list(random_fields(grid, n_fields, seed))
    for idx, f in enumerate(fields):
        u = f.values
        g = fields[(idx + 1) % len(fields)].values

        sc = max(lattice.norm_l2(w, u), lattice.norm_l2(w, g), 1.0)
        worst["summation_by_parts"] = max(
            worst["summation_by_parts"],
            _rel(calculus.summation_by_parts_defect(u, g, grid, w3), sc * sc),
        )

        lap_u = calculus.laplacian(u, grid)
        lap_g = calculus.laplacian(g, grid)
        lhs = lattice.inner(w, u, lap_g)
        rhs = lattice.inner(w, lap_u, g)
        worst["self_adjoint"] = max(
            worst["self_adjoint"], _rel(abs(lhs - rhs), max(abs(lhs), abs(rhs), sc))
        )

        bil = lattice.inner(w, u, calculus.bilaplacian(u, grid))
        lap_sq = lattice.inner(w, lap_u, lap_u)
        worst["bilap_is_lap_sq_norm"] = max(
            worst["bilap_is_lap_sq_norm"], _rel(abs(bil - lap_sq), max(abs(lap_sq), 1e-30))
        )

        # 1-D telescoping on a random lattice line of the extension
        j = int(rng.integers(0, grid.ny + 1))
        k = int(rng.integers(0, grid.nz + 1))
        line = lattice.extend_array(u)[1:, j + lattice.GHOST, k + lattice.GHOST]
        raw, even = telescope_defects(line[1 : grid.nx + 4])
        amp = float(np.max(np.abs(line))) or 1.0
        worst["telescope_raw"] = max(worst["telescope_raw"], _rel(raw, amp))
        worst["telescope_even"] = max(worst["telescope_even"], _rel(even, amp))

        worst["like_laplacian"] = max(worst["like_laplacian"], like_laplacian_defect(u, grid, w3))

        parts = calculus.laplacian_norm_identity(u, grid, w3)
        worst["lap_norm_expansion"] = max(
            worst["lap_norm_expansion"],
            _rel(abs(parts["lap_sq"] - parts["expansion"]), max(parts["lap_sq"], 1e-30)),
        )
        dd = parts["dd_sq"]
        ls = parts["lap_sq"]
        sandwich_violation = max(dd - ls, ls - 2.0 * dd, 0.0)
        worst["sandwich"] = max(worst["sandwich"], _rel(sandwich_violation, max(ls, 1e-30)))

    const = np.full(grid.shape, 0.7)
    k_lap = float(np.max(np.abs(calculus.laplacian(const, grid))))
    k_bil = float(np.max(np.abs(calculus.bilaplacian(const, grid))))
    for a in _AXES:
        for kind in (calculus.FORWARD, calculus.BACKWARD, calculus.CENTRAL, calculus.SECOND):
            k_lap = max(k_lap, float(np.max(np.abs(calculus.diff(const, grid, a, kind)))))
    worst["constant_kernel"] = max(k_lap, k_bil)  # must be exactly zero

    report.worst = worst
    return report


# ---------------------------------------------------------------------------
# curvature sampling: Lipschitz ratios and convexity moduli


@dataclass(frozen=True)
class LipschitzReport:
    bound: float
    max_ratio: float
    pairs: int

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.bound * (1.0 + 1e-12)


def lipschitz_sampler(
    derivative,
    bound: float,
    grid: GridSpec,
    *,
    pairs: int = 200,
    seed: int = 0,
    span: float = 1.0,
) -> LipschitzReport:
    """Largest pointwise |f'(a)-f'(b)| / |a-b| over random pairs in [-span, span].

    `derivative` acts elementwise on arrays.  The report passes when the
    sampled ratio never exceeds `bound`.
    """
    if pairs < 1:
        raise ValueError("need at least one pair")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        a = span * (2.0 * rng.random(grid.shape) - 1.0)
        b = span * (2.0 * rng.random(grid.shape) - 1.0)
        gap = np.abs(a - b)
        mask = gap > 1e-12 * span
        if not np.any(mask):
            continue
        ratio = np.abs(derivative(a) - derivative(b))[mask] / gap[mask]
        worst = max(worst, float(np.max(ratio)))
    return LipschitzReport(bound=bound, max_ratio=worst, pairs=pairs)


def truncated_cubic_lipschitz(
    grid: GridSpec, m: float, *, pairs: int = 200, seed: int = 0, span: float | None = None
) -> LipschitzReport:
    span = 3.0 * m if span is None else span

    def der(x):
        return energy.psi_trunc(x, m)[1]

    return lipschitz_sampler(der, 3.0 * m * m, grid, pairs=pairs, seed=seed, span=span)


def raw_cubic_lipschitz(
    grid: GridSpec, m: float, *, pairs: int = 200, seed: int = 0, span: float | None = None
) -> LipschitzReport:
    """Negative control: x^3 against the claim valid only for the truncation.

    The raw slope ratio grows like 6 * span, so any span above m^2 / 2
    pushes it past the claimed 3 m^2 and .passed must come back False; a
    sampler that cannot catch this is broken.  Default span: m^2.
    """
    span = m * m if span is None else span
    return lipschitz_sampler(lambda x: 3.0 * x * x, 3.0 * m * m, grid,
                             pairs=pairs, seed=seed, span=span)


@dataclass(frozen=True)
class ConvexityReport:
    label: str
    modulus: float
    min_slack: float          # remainder - modulus/2 ||d||^2, over all pairs
    max_quad_defect: float    # |remainder - value(d)| for the quadratic pieces

    def passed(self, tol: float = 1e-10) -> bool:
        return self.min_slack >= -tol and self.max_quad_defect <= tol


def _quadratic_convexity(label, value, gradient, modulus, grid, w, pairs, seed, span):
    """Sample f(b) - f(a) - <grad f(a), b-a> against modulus/2 ||b-a||^2.

    For quadratic f the remainder equals f(b-a) exactly; the defect from
    that identity is tracked too (scaled by the sampled magnitudes).
    """
    rng = np.random.default_rng(seed)
    min_slack = math.inf
    max_defect = 0.0
    for _ in range(pairs):
        a = span * (2.0 * rng.random(grid.shape) - 1.0)
        b = span * (2.0 * rng.random(grid.shape) - 1.0)
        d = b - a
        remainder = value(b) - value(a) - lattice.inner(w, gradient(a), d)
        d_sq = lattice.inner(w, d, d)
        scale = 1.0 + abs(value(a)) + abs(value(b)) + d_sq
        min_slack = min(min_slack, (remainder - 0.5 * modulus * d_sq) / scale)
        max_defect = max(max_defect, abs(remainder - value(d)) / scale)
    return ConvexityReport(label, modulus, min_slack, max_defect)


def convexity_suite(
    grid: GridSpec,
    params: PhysParams,
    m: float,
    *,
    pairs: int = 64,
    seed: int = 0,
    span: float = 1.0,
) -> dict[str, object]:
    """Sampled curvature certificates for the three-way energy split.

    Checks, on random field pairs: the truncated cubic slope is
    3m^2-Lipschitz and monotone; the implicit quadratic piece carries its
    claimed strong-convexity modulus; the explicit concave-side piece is
    convex.  Quadratic pieces must satisfy the remainder identity to
    roundoff, not just the inequality.
    """
    w = quad_weights(grid)
    eps, eta = params.epsilon, params.eta
    rng = np.random.default_rng(seed ^ 0xC0FFEE)

    out: dict[str, object] = {}
    out["nu1_lipschitz"] = truncated_cubic_lipschitz(grid, m, pairs=pairs, seed=seed)

    worst_mono = math.inf
    for _ in range(pairs):
        a = 3.0 * m * (2.0 * rng.random(grid.shape) - 1.0)
        b = 3.0 * m * (2.0 * rng.random(grid.shape) - 1.0)
        prod = (energy.psi_trunc(a, m)[1] - energy.psi_trunc(b, m)[1]) * (a - b)
        worst_mono = min(worst_mono, float(np.min(prod)))
    out["nu1_monotone_min"] = worst_mono

    def norm_sq(u):
        return lattice.inner(w, u, u)

    def lap_sq(u):
        l = calculus.laplacian(u, grid)
        return lattice.inner(w, l, l)

    if eta < 1.0:
        nu2 = lambda u: 0.5 * (1.0 - eta) * norm_sq(u) + 0.5 * eps * lap_sq(u)
        grad_nu2 = lambda u: (1.0 - eta) * u + eps * calculus.bilaplacian(u, grid)
        mu2 = 1.0 - eta
        nu3 = lambda u: calculus.seminorm_d_squared(u, grid, w.w3)
        grad_nu3 = lambda u: -2.0 * calculus.laplacian(u, grid)
        mu3 = 0.0
    else:
        nu2 = lambda u: 0.5 * eps * lap_sq(u)
        grad_nu2 = lambda u: eps * calculus.bilaplacian(u, grid)
        mu2 = 0.0
        nu3 = lambda u: 0.5 * (eta - 1.0) * norm_sq(u) + calculus.seminorm_d_squared(
            u, grid, w.w3)
        grad_nu3 = lambda u: (eta - 1.0) * u - 2.0 * calculus.laplacian(u, grid)
        mu3 = eta - 1.0

    out["nu2"] = _quadratic_convexity("nu2", nu2, grad_nu2, mu2, grid, w,
                                      pairs, seed ^ 0x22, span)
    out["nu3"] = _quadratic_convexity("nu3", nu3, grad_nu3, mu3, grid, w,
                                      pairs, seed ^ 0x33, span)
    return out


def dissipation_negative_control() -> splitting.DissipationCheck:
    """A dishonest problem the per-step certificate must reject.

    The raw cubic is claimed 3-Lipschitz (true only inside [-1, 1]) while
    the state sits at 2; one big step then raises the energy and the
    quantitative decrement fails.  Used to prove the check has teeth.
    """
    grid = GridSpec(2, 2, 2, 0.5, 0.5, 0.5)
    w3 = quad_weights(grid).w3
    u = np.full(grid.shape, 2.0)

    def implicit_solve(rhs, dt):
        return rhs / (1.0 / dt + 1.0), 1, 0.0

    prob = splitting.SplittingProblem(
        grad_nu1=lambda v: v**3,
        grad_nu3=lambda v: np.zeros_like(v),
        implicit_solve=implicit_solve,
        lipschitz=3.0,
        mu2=1.0,
        mu3=0.0,
        weights=w3,
        nu3_convex=True,
        nu_total=lambda v: float(np.sum(w3 * (0.25 * v**4 + 0.5 * v**2))),
    )
    _, report = splitting.scc_step(prob, u, 1.0)
    return splitting.dissipation_check(report, 3.0, 1.0, 0.0)


def broken_reflection_control(trials: int = 50, seed: int = 0) -> linsolve.SPDReport:
    """A miscoded boundary the symmetry probe must reject.

    Replicated-edge ghosts instead of even reflection destroy
    self-adjointness under the trapezoid weights; the probe on the
    resulting shifted laplacian has to fail, proving it can see the bug.
    """
    grid = GridSpec(4, 4, 4, 0.5, 0.5, 0.5)

    def bad_lap(x):
        e = np.pad(x, 1, mode="edge")
        out = np.zeros_like(x)
        for axis, h in enumerate(grid.spacing):
            lo = [slice(1, -1)] * 3
            hi = [slice(1, -1)] * 3
            lo[axis] = slice(0, -2)
            hi[axis] = slice(2, None)
            out += (e[tuple(lo)] - 2 * x + e[tuple(hi)]) / (h * h)
        return out

    return linsolve.spd_probe(lambda x: 2.0 * x - bad_lap(x), grid.shape,
                              quad_weights(grid).w3, trials=trials, seed=seed)


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass
class MMSProblem:
    """Forced problem whose exact solution is a drifting cosine mix.

    u*(x, t) = sum_k a_k exp(-t/tau) prod_axis cos(k_axis pi x / l_axis)

    Each mode is a Neumann-compatible eigenfunction of the continuum
    laplacian, so the source has a closed form; only the cubic couples
    the modes, and it is evaluated pointwise on the sampled field.
    """

    grid: GridSpec
    params: PhysParams
    modes: tuple[tuple[int, int, int], ...]
    amplitudes: tuple[float, ...]
    tau: float = 2.0

    def __post_init__(self):
        if len(self.modes) != len(self.amplitudes):
            raise ValueError("one amplitude per mode")
        if not (self.tau > 0):
            raise ValueError("tau must be positive")
        g = self.grid
        xs, ys, zs = g.meshgrid()
        shapes = []
        lams = []
        for (kx, ky, kz) in self.modes:
            fx, fy, fz = kx * math.pi / g.lx, ky * math.pi / g.ly, kz * math.pi / g.lz
            shapes.append(np.cos(fx * xs) * np.cos(fy * ys) * np.cos(fz * zs))
            lams.append(fx * fx + fy * fy + fz * fz)
        self._shapes = shapes
        self._lams = lams

    def _coeffs(self, t: float) -> list[float]:
        decay = math.exp(-t / self.tau)
        return [a * decay for a in self.amplitudes]

    def exact(self, t: float) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        for c, s in zip(self._coeffs(t), self._shapes):
            out += c * s
        return out

    def source(self, t: float) -> np.ndarray:
        """du*/dt + u*^3 + (1-eta) u* + eps lap^2 u* + 2 lap u*, sampled."""
        eps, eta = self.params.epsilon, self.params.eta
        out = np.zeros(self.grid.shape)
        for c, s, lam in zip(self._coeffs(t), self._shapes, self._lams):
            linear = -1.0 / self.tau + (1.0 - eta) + eps * lam * lam - 2.0 * lam
            out += c * linear * s
        return out + self.exact(t) ** 3

    def gamma_defect(self, t: float) -> np.ndarray:
        """Consistency gap of the lattice operators on the sampled exact field.

        gamma = eps (lap_d^2 - lap^2) u* + 2 (lap_d - lap) u*, the quantity
        whose max norm must shrink by ~4x per mesh halving.
        """
        eps = self.params.epsilon
        u = self.exact(t)
        cont_lap = np.zeros(self.grid.shape)
        cont_bilap = np.zeros(self.grid.shape)
        for c, s, lam in zip(self._coeffs(t), self._shapes, self._lams):
            cont_lap += -lam * c * s
            cont_bilap += lam * lam * c * s
        disc_lap = calculus.laplacian(u, self.grid)
        disc_bilap = calculus.bilaplacian(u, self.grid)
        return eps * (disc_bilap - cont_bilap) + 2.0 * (disc_lap - cont_lap)


# ---------------------------------------------------------------------------
# convergence studies


def _integral_steps(t_final: float, dt: float) -> int:
    steps = round(t_final / dt)
    if steps < 1 or abs(steps * dt - t_final) > 1e-9 * t_final:
        raise ValueError(f"t_final = {t_final!r} is not an integer multiple of dt = {dt!r}")
    return steps


@dataclass(frozen=True)
class TemporalStudy:
    dts: tuple[float, ...]
    errors: tuple[float, ...]
    orders: tuple[float, ...]
    slope: float
    ref_dt: float
    t_final: float


def temporal_convergence(
    grid: GridSpec,
    params: PhysParams,
    u0: Field,
    *,
    dts: tuple[float, ...],
    ref_dt: float,
    t_final: float,
    cg_config=None,
) -> TemporalStudy:
    """Self-convergence of the time march against a much finer reference.

    All runs share grid and initial state, so the spatial error cancels
    and the gap to the reference isolates the O(dt) term.  Requires
    ref_dt <= min(dts)/20 to keep reference contamination below the
    fitting noise; step counts must divide t_final exactly.
    """
    from .scheme import SHScheme

    dts = tuple(sorted(dts, reverse=True))
    if ref_dt > min(dts) / 20.0:
        raise ValueError(f"reference dt = {ref_dt!r} too coarse; need <= min(dts)/20")
    sch = SHScheme(grid, params, u0, cg_config=cg_config)

    def final_state(dt):
        steps = _integral_steps(t_final, dt)
        log = sch.run(dt, steps, monitors=False, log_every=steps)
        return log.final_state.values

    ref = final_state(ref_dt)
    w = quad_weights(grid)
    errors = []
    for dt in dts:
        diff = final_state(dt) - ref
        errors.append(math.sqrt(max(lattice.inner(w, diff, diff), 0.0)))
    orders = tuple(
        math.log(errors[i] / errors[i + 1]) / math.log(dts[i] / dts[i + 1])
        for i in range(len(dts) - 1)
    )
    logs = np.log(np.asarray(dts))
    slope = float(np.polyfit(logs, np.log(np.asarray(errors)), 1)[0])
    return TemporalStudy(dts, tuple(errors), orders, slope, ref_dt, t_final)


@dataclass(frozen=True)
class SpatialLevel:
    n: int
    h: float
    error_l2: float
    error_linf: float
    gamma_linf: float


@dataclass(frozen=True)
class SpatialStudy:
    levels: tuple[SpatialLevel, ...]
    orders_l2: tuple[float, ...]
    orders_linf: tuple[float, ...]
    gamma_ratios: tuple[float, ...]
    dt: float
    t_final: float


def spatial_convergence(
    params: PhysParams,
    *,
    box: tuple[float, float, float] = (1.0, 1.0, 1.0),
    ns: tuple[int, ...] = (8, 16, 32),
    modes: tuple[tuple[int, int, int], ...] = ((1, 1, 0), (2, 0, 1)),
    amplitudes: tuple[float, ...] = (0.25, 0.15),
    tau: float = 2.0,
    dt: float = 1e-5,
    t_final: float = 1e-3,
    cg_config=None,
) -> SpatialStudy:
    """Mesh-refinement study against a manufactured solution on a fixed box.

    dt is held tiny so the measured error is spatial; alongside the field
    errors the study records the operator consistency gap gamma whose 4x
    decay certifies the second-order stencils independent of the march.
    """
    from .scheme import SHScheme

    steps = _integral_steps(t_final, dt)
    levels = []
    for n in ns:
        grid = GridSpec(n, n, n, box[0] / n, box[1] / n, box[2] / n)
        prob = MMSProblem(grid, params, tuple(modes), tuple(amplitudes), tau)
        sch = SHScheme(grid, params, Field(grid, prob.exact(0.0)), cg_config=cg_config)
        log = sch.run(dt, steps, monitors=False, forcing=prob.source, log_every=steps)
        err = log.final_state.values - prob.exact(t_final)
        w = quad_weights(grid)
        levels.append(
            SpatialLevel(
                n=n,
                h=max(grid.dx, grid.dy, grid.dz),
                error_l2=math.sqrt(max(lattice.inner(w, err, err), 0.0)),
                error_linf=float(np.max(np.abs(err))),
                gamma_linf=float(np.max(np.abs(prob.gamma_defect(0.0)))),
            )
        )
    def order(pair, attr):
        a, b = pair
        return math.log(getattr(a, attr) / getattr(b, attr)) / math.log(a.h / b.h)

    pairs = list(zip(levels, levels[1:]))
    return SpatialStudy(
        levels=tuple(levels),
        orders_l2=tuple(order(p, "error_l2") for p in pairs),
        orders_linf=tuple(order(p, "error_linf") for p in pairs),
        gamma_ratios=tuple(a.gamma_linf / b.gamma_linf for a, b in pairs),
        dt=dt,
        t_final=t_final,
    )


def oracle_equivalence(grid: GridSpec, *, n_fields: int = 3, seed: int = 0) -> float:
    """Worst relative gap between the stencil kernels and the dense oracle.

    Covers every first/second difference, the mixed second differences
    from the shared extension, both composite operators, and the three
    quadratic forms.  The oracle assembles its matrices from the
    reflection index map alone, so agreement here pins the kernels to an
    independent route.
    """
    oracle = DenseOracle(grid)
    w = quad_weights(grid)
    rng = np.random.default_rng(seed)
    a_lap = oracle.laplacian_matrix()
    a_bil = oracle.bilaplacian_matrix()
    diffs = {(a, k): oracle.diff_matrix(a, k)
             for a in _AXES
             for k in (calculus.FORWARD, calculus.BACKWARD, calculus.CENTRAL, calculus.SECOND)}
    mixed = {(a, sa, b, sb): oracle.mixed_matrix(a, sa, b, sb)
             for a in _AXES for b in _AXES for sa in (1, -1) for sb in (1, -1)}
    g_semi = oracle.seminorm_form()
    g_lap = oracle.laplacian_norm_form()
    g_dd = oracle.dd_norm_form()

    worst = 0.0

    def rel(mf, dn):
        return float(np.max(np.abs(mf - dn)) / max(np.max(np.abs(dn)), 1.0))

    for _ in range(n_fields):
        u = rng.standard_normal(grid.shape)
        flat = u.ravel()
        worst = max(worst, rel(calculus.laplacian(u, grid).ravel(), a_lap @ flat))
        worst = max(worst, rel(calculus.bilaplacian(u, grid).ravel(), a_bil @ flat))
        for (a, k), mat in diffs.items():
            worst = max(worst, rel(calculus.diff(u, grid, a, k).ravel(), mat @ flat))
        ext = lattice.extend_array(u)
        for (a, sa, b, sb), mat in mixed.items():
            worst = max(
                worst, rel(calculus.second_diff_ext(ext, grid, a, sa, b, sb).ravel(), mat @ flat)
            )
        semi = calculus.seminorm_d_squared(u, grid, w.w3)
        worst = max(worst, _rel(abs(semi - flat @ g_semi @ flat), max(abs(semi), 1.0)))
        parts = calculus.laplacian_norm_identity(u, grid, w.w3)
        worst = max(worst, _rel(abs(parts["lap_sq"] - flat @ g_lap @ flat),
                                max(parts["lap_sq"], 1.0)))
        worst = max(worst, _rel(abs(parts["dd_sq"] - flat @ g_dd @ flat),
                                max(parts["dd_sq"], 1.0)))
    # structural identities on the matrices themselves
    wa = -oracle.mass_matrix() @ a_lap
    worst = max(worst, float(np.max(np.abs(g_semi - wa)) / np.max(np.abs(g_semi))))
    worst = max(worst, float(np.max(np.abs(wa - wa.T)) / np.max(np.abs(wa))))
    worst = max(worst, float(np.max(np.abs(a_bil - a_lap @ a_lap)) / np.max(np.abs(a_bil))))
    return worst
