"""Discrete energy, its gradients, truncation, and the sup-norm bound.

The free energy of a node field U splits into four trapezoidal sums

    phi1 = S'' U^4/4          phi2 = S'' (1-eta)/2 U^2
    phi3 = S'' (|grad+ U|^2 + |grad- U|^2)/2
    phi4 = S'' eps/2 (lap U)^2

with total H = phi1 + phi2 - phi3 + phi4.  Their weighted-L2 gradients
are U^3, (1-eta)U, -2 lap U and eps lap^2 U.

`psi_trunc` is the quartic with quadratic tails glued on at |x| = M; it
makes phi1 globally 3M^2-smooth without changing it on |U| <= M.
`bound_M` evaluates the a-priori sup bound machinery: the coercivity
constant C_{eps,eta,zeta}, the per-grid Sobolev constant C of

    ||U||_inf <= C sqrt(||U||^2 + ||DU||^2 + ||lap U||^2),

the truncation level M, and the step-size limit 2/(3M^2 - |1-eta|)
under which the scheme provably dissipates H and keeps ||U^n||_inf
under the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import calculus, lattice, linsolve
from .lattice import Field, GridSpec, QuadWeights, quad_weights


@dataclass(frozen=True)
class PhysParams:
    """Model parameters: eps weights the fourth-order term, eta the linear one."""

    epsilon: float
    eta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        if not math.isfinite(self.eta):
            raise ValueError(f"eta must be finite, got {self.eta!r}")


@dataclass(frozen=True)
class EnergyBreakdown:
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    phi1_trunc: float | None = None

    @property
    def total(self) -> float:
        return self.phi1 + self.phi2 - self.phi3 + self.phi4

    @property
    def total_trunc(self) -> float | None:
        if self.phi1_trunc is None:
            return None
        return self.phi1_trunc + self.phi2 - self.phi3 + self.phi4


def energy_parts(
    u: np.ndarray,
    grid: GridSpec,
    params: PhysParams,
    w: QuadWeights | None = None,
    m_trunc: float | None = None,
) -> EnergyBreakdown:
    """All four energy pieces of a node array (plus the truncated phi1 if asked)."""
    w = w or quad_weights(grid)
    w3 = w.w3
    phi1 = 0.25 * float(np.sum(w3 * u**4))
    phi2 = 0.5 * (1.0 - params.eta) * float(np.sum(w3 * u * u))
    phi3 = calculus.seminorm_d_squared(u, grid, w3)
    lap = calculus.laplacian(u, grid)
    phi4 = 0.5 * params.epsilon * float(np.sum(w3 * lap * lap))
    phi1_trunc = None
    if m_trunc is not None:
        val, _ = psi_trunc(u, m_trunc)
        phi1_trunc = float(np.sum(w3 * val))
    return EnergyBreakdown(phi1, phi2, phi3, phi4, phi1_trunc)


@dataclass(frozen=True)
class EnergyGradients:
    """Weighted-L2 gradients of the four pieces, as node arrays."""

    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    g4: np.ndarray

    @property
    def total(self) -> np.ndarray:
        # H = phi1 + phi2 - phi3 + phi4
        return self.g1 + self.g2 - self.g3 + self.g4


def grad_energy_parts(u: np.ndarray, grid: GridSpec, params: PhysParams) -> EnergyGradients:
    lap = calculus.laplacian(u, grid)
    return EnergyGradients(
        g1=u**3,
        g2=(1.0 - params.eta) * u,
        g3=-2.0 * lap,
        g4=params.epsilon * calculus.laplacian(lap, grid),
    )


def psi_trunc(x, m: float):
    """Quartic with C1 quadratic tails: value and derivative at x.

    psi(x) = x^4/4 on |x| <= m and (3m^2/2)x^2 -+ 2m^3 x + 3m^4/4 outside
    (sign chosen so value and slope match at x = -+m).  The derivative is
    globally 3m^2-Lipschitz.
    """
    if not (math.isfinite(m) and m > 0):
        raise ValueError(f"truncation level must be positive and finite, got {m!r}")
    x = np.asarray(x, dtype=np.float64)
    lo = x < -m
    hi = x > m
    val = 0.25 * x**4
    der = x**3
    a = 1.5 * m * m
    b = 2.0 * m**3
    c = 0.75 * m**4
    val = np.where(hi, a * x * x - b * x + c, val)
    val = np.where(lo, a * x * x + b * x + c, val)
    der = np.where(hi, 2.0 * a * x - b, der)
    der = np.where(lo, 2.0 * a * x + b, der)
    if val.ndim == 0:
        return float(val), float(der)
    return val, der


# ---------------------------------------------------------------------------
# coercivity constant


def zeta_default(params: PhysParams) -> float:
    """One above the admissibility threshold (and never below one)."""
    return max(0.0, 1.0 / params.epsilon + params.eta - 1.0) + 1.0


def zeta_threshold(params: PhysParams) -> float:
    return 1.0 / params.epsilon + params.eta - 1.0


@dataclass(frozen=True)
class Coercivity:
    """C_{eps,eta,zeta} and its companion root omega.

    omega solves the coupling between the zeta-split quadratic and the
    Laplacian cross term; the three expressions
    (zeta + 1 - eta - 1/omega)/2, (eps - omega)/2 and (3/2) C agree
    identically, which `verify` and the acceptance gate re-check.
    """

    c: float
    omega: float


def c_eps_eta_zeta(params: PhysParams, zeta: float) -> Coercivity:
    if not (math.isfinite(zeta) and zeta > zeta_threshold(params)):
        raise ValueError(
            f"zeta must exceed 1/eps + eta - 1 = {zeta_threshold(params)!r}, got {zeta!r}"
        )
    s = params.epsilon - 1.0 + params.eta - zeta
    root = math.sqrt(s * s + 4.0)
    c = (params.epsilon + 1.0 - params.eta + zeta - root) / 6.0
    omega = (root + s) / 2.0
    return Coercivity(c=c, omega=omega)


# ---------------------------------------------------------------------------
# per-grid Sobolev constant


def _sobolev_apply(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """A = I - lap + lap^2; the Sobolev form is u' W A u by parts."""
    lap = calculus.laplacian(u, grid)
    return u - lap + calculus.laplacian(lap, grid)


def default_probe_nodes(grid: GridSpec) -> list[tuple[int, int, int]]:
    """Corners, face/edge midpoints and the center: 27 candidate maximizers."""
    pts = []
    for i in {0, grid.nx // 2, grid.nx}:
        for j in {0, grid.ny // 2, grid.ny}:
            for k in {0, grid.nz // 2, grid.nz}:
                pts.append((i, j, k))
    return sorted(set(pts))


@dataclass(frozen=True)
class SobolevReport:
    c: float
    mode: str
    node: tuple[int, int, int]
    solves: int


def sobolev_constant(
    grid: GridSpec,
    mode: str = "auto",
    dense_limit: int = 4096,
    probes: list[tuple[int, int, int]] | None = None,
    cg_config: "linsolve.CGConfig | None" = None,
) -> SobolevReport:
    """Sharp per-grid constant of the sup-norm embedding.

    The maximizer of |U_p| under the quadratic form Q is the solved
    column Q^{-1} e_p, so C^2 is the largest diagonal entry of Q^{-1}.
    Dense mode factorizes Q and takes the exact maximum over all nodes;
    probe mode runs one weighted CG solve per candidate node and maximizes
    over those (exact whenever the true maximizer is probed, a certified
    lower bound otherwise).
    """
    if mode == "auto":
        mode = "dense" if grid.node_count <= dense_limit else "probe"
    w = quad_weights(grid)
    if mode == "dense":
        if grid.node_count > dense_limit:
            raise ValueError(
                f"dense mode needs node_count <= {dense_limit}, got {grid.node_count}"
            )
        n = grid.node_count
        w_flat = w.w3.ravel()
        q = np.empty((n, n))
        basis = np.zeros(grid.shape)
        for j in range(n):
            basis.ravel()[j] = 1.0
            q[:, j] = w_flat * _sobolev_apply(basis, grid).ravel()
            basis.ravel()[j] = 0.0
        q = 0.5 * (q + q.T)  # roundoff symmetrization
        cho = scipy.linalg.cho_factor(q, lower=True)
        inv = scipy.linalg.cho_solve(cho, np.eye(n))
        diag = np.diag(inv)
        p = int(np.argmax(diag))
        c = math.sqrt(float(diag[p]))
        node = np.unravel_index(p, grid.shape)
        return SobolevReport(c=c, mode="dense", node=tuple(int(v) for v in node), solves=1)
    if mode == "probe":
        probes = probes or default_probe_nodes(grid)
        if not probes:
            raise ValueError("need at least one probe node")
        cfg = cg_config or linsolve.CGConfig()
        best_c2 = -math.inf
        best_node = probes[0]
        for p in probes:
            rhs = np.zeros(grid.shape)
            rhs[p] = 1.0 / w.w3[p]
            res = linsolve.cg_solve(lambda v: _sobolev_apply(v, grid), rhs, w.w3, cfg)
            if not res.converged:
                raise linsolve.LinearSolveError(
                    f"Sobolev probe solve at node {p} stalled at residual {res.residual:.3e}"
                )
            c2 = float(res.x[p])
            if c2 > best_c2:
                best_c2, best_node = c2, p
        return SobolevReport(
            c=math.sqrt(best_c2), mode="probe", node=best_node, solves=len(probes)
        )
    raise ValueError(f"unknown mode {mode!r}; expected auto, dense or probe")


# ---------------------------------------------------------------------------
# truncation level, sup bound, step-size limit


@dataclass(frozen=True)
class BoundReport:
    """Everything `bound_M` certifies, frozen at scheme start."""

    zeta: float
    c_grid: float
    c_zeta: float
    omega: float
    h0: float
    volume: float
    sup_bound: float
    m_trunc: float
    dt_limit: float


def dt_limit_for(m_trunc: float, params: PhysParams) -> float:
    """Largest provably dissipative step: 2/(3M^2 - |1-eta|), or inf."""
    l = 3.0 * m_trunc * m_trunc
    musum = abs(1.0 - params.eta)
    if l <= musum:
        return math.inf
    return 2.0 / (l - musum)


def bound_M(
    u0: Field,
    params: PhysParams,
    zeta: float | None = None,
    c_grid: float | None = None,
    sobolev_mode: str = "auto",
    dense_limit: int = 4096,
) -> BoundReport:
    """Truncation level M and companions from the initial state.

    M = max(sqrt(max(0, zeta)), sup_bound) with
    sup_bound = sqrt(C^2/C_zeta * (H(U0) + zeta^2 V / 4)); M >= sqrt(zeta)
    makes the truncated and plain energies share the lower bound, and
    M >= sup_bound >= ||U0||_inf keeps every iterate inside the tube
    where U^3 is 3M^2-Lipschitz.
    """
    grid = u0.grid
    if zeta is None:
        zeta = zeta_default(params)
    coer = c_eps_eta_zeta(params, zeta)
    if c_grid is None:
        c_grid = sobolev_constant(grid, mode=sobolev_mode, dense_limit=dense_limit).c
    if not (math.isfinite(c_grid) and c_grid > 0):
        raise ValueError(f"grid Sobolev constant must be positive, got {c_grid!r}")
    h0 = energy_parts(u0.values, grid, params).total
    budget = h0 + zeta * zeta * grid.volume / 4.0
    if budget < -1e-10 * (1.0 + abs(h0)):
        raise ValueError(
            f"energy budget H0 + zeta^2 V/4 = {budget!r} is negative; "
            "the lower-bound lemma excludes this"
        )
    sup_bound = math.sqrt(c_grid * c_grid * max(budget, 0.0) / coer.c)
    m_trunc = max(math.sqrt(max(0.0, zeta)), sup_bound)
    return BoundReport(
        zeta=zeta,
        c_grid=c_grid,
        c_zeta=coer.c,
        omega=coer.omega,
        h0=h0,
        volume=grid.volume,
        sup_bound=sup_bound,
        m_trunc=m_trunc,
        dt_limit=dt_limit_for(m_trunc, params),
    )


def energy_lower_bound(
    u: np.ndarray, grid: GridSpec, params: PhysParams, zeta: float, c_grid: float
) -> float:
    """Certified floor: H(u) >= C_zeta/C^2 ||u||_inf^2 - zeta^2 V/4."""
    coer = c_eps_eta_zeta(params, zeta)
    linf = float(np.max(np.abs(u)))
    return coer.c / (c_grid * c_grid) * linf * linf - zeta * zeta * grid.volume / 4.0
