"""The Swift-Hohenberg instantiation of the splitting integrator.

The flow dU/dt = -(U^3 + (1-eta)U + eps lap^2 U + 2 lap U) is advanced
with the cubic and the backward-diffusion term explicit and the stiff
part implicit.  The sign of 1 - eta picks the branch:

    eta < 1:  X/dt + (1-eta) X + eps lap^2 X = U/dt - U^3 - 2 lap U
    eta >= 1: X/dt           + eps lap^2 X = U/dt - U^3 + (eta-1) U - 2 lap U

Both leave a constant-plus-bilaplacian operator on the left, symmetric
positive definite in the weighted inner product, solved matrix-free by
CG.  At eta = 1 the two branches coincide; the second is used.

At construction the scheme freezes the a-priori machinery of
`energy.bound_M`: the truncation level M (which certifies that U^3 is
effectively 3M^2-Lipschitz along the run), the sup bound, and the step
limit dt_limit = 2/(3M^2 - |1-eta|).  Monitored runs enforce, step by
step, that the energy never increases and the sup bound holds, aborting
loudly on violation; `adaptive_run` additionally steers dt inside a
user interval strictly below dt_limit until the fixed-point residual
||grad H|| is small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import calculus, energy, linsolve, splitting
from .energy import BoundReport, PhysParams
from .lattice import Field, GridSpec, quad_weights


class MonitorError(RuntimeError):
    """A certified inequality failed during a monitored run."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class RunRow:
    n: int
    t: float
    dt: float
    h: float
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    linf: float
    l2: float
    cg_iters: int
    cg_residual: float
    dissipation_slack: float
    supbound_slack: float
    fp_residual: float


@dataclass
class RunLog:
    rows: list[RunRow] = dc_field(default_factory=list)
    bounds: BoundReport | None = None
    monitors: bool = True
    stopped_on: str = "steps"
    final_state: Field | None = None

    @property
    def final(self) -> RunRow:
        return self.rows[-1]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


class SHScheme:
    def __init__(
        self,
        grid: GridSpec,
        params: PhysParams,
        u0: Field,
        *,
        zeta: float | None = None,
        c_grid: float | None = None,
        sobolev_mode: str = "auto",
        dense_limit: int = 4096,
        cg_config: linsolve.CGConfig | None = None,
        monitor_rel_tol: float = 1e-10,
    ):
        if u0.grid != grid:
            raise ValueError("initial state lives on a different grid")
        self.grid = grid
        self.params = params
        self.u0 = u0
        self.weights = quad_weights(grid)
        self.cg_config = cg_config or linsolve.CGConfig()
        self.monitor_rel_tol = monitor_rel_tol
        self.linear_implicit = params.eta < 1.0
        self._bound_kwargs = dict(
            zeta=zeta, c_grid=c_grid, sobolev_mode=sobolev_mode, dense_limit=dense_limit
        )
        self._bounds: BoundReport | None = None

    # -- frozen constants ---------------------------------------------------

    @property
    def bounds(self) -> BoundReport:
        # deferred: forced/unmonitored runs never need the Sobolev solve
        if self._bounds is None:
            self._bounds = energy.bound_M(self.u0, self.params, **self._bound_kwargs)
        return self._bounds

    @property
    def dt_limit(self) -> float:
        return self.bounds.dt_limit

    @property
    def sup_bound(self) -> float:
        return self.bounds.sup_bound

    @property
    def m_trunc(self) -> float:
        return self.bounds.m_trunc

    def effective_moduli(self) -> tuple[float, float, float]:
        """(L, mu2, mu3) certified along the run: L = 3M^2, moduli by branch."""
        l = 3.0 * self.m_trunc**2
        if self.linear_implicit:
            return l, 1.0 - self.params.eta, 0.0
        return l, 0.0, self.params.eta - 1.0

    # -- one step -----------------------------------------------------------

    def _a0(self, dt: float) -> float:
        if self.linear_implicit:
            return 1.0 / dt + (1.0 - self.params.eta)
        return 1.0 / dt

    def implicit_operator(self, dt: float) -> Callable[[np.ndarray], np.ndarray]:
        """X -> a0 X + eps lap^2 X with a0 = 1/dt (+ 1-eta on that branch)."""
        if not (math.isfinite(dt) and dt > 0):
            raise ValueError(f"dt must be positive and finite, got {dt!r}")
        a0 = self._a0(dt)
        eps = self.params.epsilon
        grid = self.grid

        def apply(x: np.ndarray) -> np.ndarray:
            return a0 * x + eps * calculus.bilaplacian(x, grid)

        return apply

    def _rhs(self, u: np.ndarray, dt: float, force: np.ndarray | None = None) -> np.ndarray:
        lap = calculus.laplacian(u, self.grid)
        if self.linear_implicit:
            rhs = u / dt - u**3 - 2.0 * lap
        else:
            rhs = u / dt - u**3 + (self.params.eta - 1.0) * u - 2.0 * lap
        if force is not None:
            rhs = rhs + force
        return rhs

    def _solve(self, rhs: np.ndarray, dt: float) -> linsolve.CGResult:
        # diagonal-part warm start; shared by the direct and generic routes
        x0 = rhs / self._a0(dt)
        res = linsolve.cg_solve(
            self.implicit_operator(dt), rhs, self.weights.w3, self.cg_config, x0=x0
        )
        if not res.converged:
            raise linsolve.LinearSolveError(
                f"implicit solve stalled: {res.iterations} iterations, "
                f"residual {res.residual:.3e} of ||b|| = {res.b_norm:.3e}"
            )
        return res

    def step_arrays(
        self, u: np.ndarray, dt: float, force: np.ndarray | None = None
    ) -> tuple[np.ndarray, linsolve.CGResult]:
        res = self._solve(self._rhs(u, dt, force), dt)
        return res.x, res

    def step(self, u: Field, dt: float) -> tuple[Field, splitting.StepReport]:
        """One step with a full report (energies included)."""
        x, res = self.step_arrays(u.values, dt)
        inc = x - u.values
        inc_norm = math.sqrt(max(float(np.sum(self.weights.w3 * inc * inc)), 0.0))
        l, mu2, mu3 = self.effective_moduli()
        report = splitting.StepReport(
            dt=dt,
            increment_norm=inc_norm,
            guaranteed_decrement=splitting.guaranteed_decrement(dt, inc_norm, l - mu2 - mu3),
            solver_iterations=res.iterations,
            solver_residual=res.relative_residual,
            energy_before=energy.energy_parts(u.values, self.grid, self.params, self.weights).total,
            energy_after=energy.energy_parts(x, self.grid, self.params, self.weights).total,
        )
        return Field(self.grid, x), report

    # -- diagnostics ----------------------------------------------------------

    def fixed_point_residual(self, u: np.ndarray) -> float:
        """|| U^3 + (1-eta)U + eps lap^2 U + 2 lap U || — zero exactly at rest."""
        lap = calculus.laplacian(u, self.grid)
        g = (
            u**3
            + (1.0 - self.params.eta) * u
            + self.params.epsilon * calculus.laplacian(lap, self.grid)
            + 2.0 * lap
        )
        return math.sqrt(max(float(np.sum(self.weights.w3 * g * g)), 0.0))

    def as_splitting_problem(self) -> splitting.SplittingProblem:
        """The same step assembled from the energy gradients (dual route)."""
        grid, params, w3 = self.grid, self.params, self.weights.w3
        l, mu2, mu3 = self.effective_moduli()

        if self.linear_implicit:
            # nu1 = phi1, nu2 = phi2 + phi4, nu3 = phi3
            def grad_nu1(u):
                return energy.grad_energy_parts(u, grid, params).g1

            def grad_nu3(u):
                return energy.grad_energy_parts(u, grid, params).g3
        else:
            # nu1 = phi1, nu2 = phi4, nu3 = -phi2 + phi3
            def grad_nu1(u):
                return energy.grad_energy_parts(u, grid, params).g1

            def grad_nu3(u):
                g = energy.grad_energy_parts(u, grid, params)
                return g.g3 - g.g2

        def implicit_solve(rhs, dt):
            res = self._solve(rhs, dt)
            return res.x, res.iterations, res.relative_residual

        return splitting.SplittingProblem(
            grad_nu1=grad_nu1,
            grad_nu3=grad_nu3,
            implicit_solve=implicit_solve,
            lipschitz=l,
            mu2=mu2,
            mu3=mu3,
            weights=w3,
            nu3_convex=(mu3 == 0.0),
            nu_total=lambda u: energy.energy_parts(u, grid, params, self.weights).total,
        )

    # -- runs -----------------------------------------------------------------

    def _row(self, n, t, dt, parts, u, cg_iters, cg_residual, diss_slack):
        h = parts.total
        if self._bounds is not None:
            sup_slack = self.sup_bound - float(np.max(np.abs(u)))
        else:
            sup_slack = float("nan")
        return RunRow(
            n=n,
            t=t,
            dt=dt,
            h=h,
            phi1=parts.phi1,
            phi2=parts.phi2,
            phi3=parts.phi3,
            phi4=parts.phi4,
            linf=float(np.max(np.abs(u))),
            l2=math.sqrt(max(float(np.sum(self.weights.w3 * u * u)), 0.0)),
            cg_iters=cg_iters,
            cg_residual=cg_residual,
            dissipation_slack=diss_slack,
            supbound_slack=sup_slack,
            fp_residual=self.fixed_point_residual(u),
        )

    def _monitor(self, n, h_prev, h_new, linf_new):
        tol_h = self.monitor_rel_tol * (1.0 + abs(h_prev))
        if h_new > h_prev + tol_h:
            raise MonitorError(
                f"energy increased: H went {h_prev!r} -> {h_new!r} (tol {tol_h:.3e})", n
            )
        tol_s = self.monitor_rel_tol * (1.0 + self.sup_bound)
        if linf_new > self.sup_bound + tol_s:
            raise MonitorError(
                f"sup bound violated: ||U||_inf = {linf_new!r} > {self.sup_bound!r}", n
            )

    def run(
        self,
        dt: float,
        steps: int,
        *,
        u0: Field | None = None,
        monitors: bool = True,
        forcing: Callable[[float], np.ndarray] | None = None,
        t0: float = 0.0,
        log_every: int = 1,
        on_state: Callable[[int, float, Field], None] | None = None,
        on_state_every: int = 1,
    ) -> RunLog:
        """Fixed-step march with optional certified monitors.

        Monitors require dt <= dt_limit and no forcing; they enforce the
        energy decrease and the sup bound every step and abort on
        violation.  `log_every` thins the rows (the final state is always
        logged); monitor checks still run every step.  `on_state` is called
        with (n, t, field) after every `on_state_every`-th accepted step.
        """
        if not (math.isfinite(dt) and dt > 0):
            raise ValueError(f"dt must be positive and finite, got {dt!r}")
        if steps < 1:
            raise ValueError("need at least one step")
        if monitors and forcing is not None:
            raise ValueError("monitors certify the unforced flow; disable one of the two")
        if monitors and dt > self.dt_limit * (1.0 + 1e-12):
            raise ValueError(
                f"dt = {dt!r} exceeds the certified limit {self.dt_limit!r}; "
                "pass monitors=False to run outside the theory"
            )
        if log_every < 1:
            raise ValueError("log_every must be >= 1")
        if on_state_every < 1:
            raise ValueError("on_state_every must be >= 1")

        u = (u0 or self.u0).values
        if monitors or self._bounds is not None:
            l, mu2, mu3 = self.effective_moduli()
            l_hat = l - mu2 - mu3
        else:
            # decrement bookkeeping needs M; off-theory runs skip it
            l_hat = None
        parts = energy.energy_parts(u, self.grid, self.params, self.weights)
        log = RunLog(bounds=self._bounds, monitors=monitors)
        log.rows.append(self._row(0, t0, dt, parts, u, 0, 0.0,
                                  0.0 if l_hat is not None else float("nan")))
        if monitors:
            self._monitor(0, parts.total, parts.total, float(np.max(np.abs(u))))
        h_prev = parts.total
        t = t0
        for n in range(1, steps + 1):
            force = forcing(t) if forcing is not None else None
            x, res = self.step_arrays(u, dt, force)
            inc = x - u
            inc_norm = math.sqrt(max(float(np.sum(self.weights.w3 * inc * inc)), 0.0))
            parts = energy.energy_parts(x, self.grid, self.params, self.weights)
            h_new = parts.total
            if l_hat is not None:
                diss_slack = (h_prev - h_new) - splitting.guaranteed_decrement(
                    dt, inc_norm, l_hat)
            else:
                diss_slack = float("nan")
            t = t0 + n * dt
            u = x
            if monitors:
                self._monitor(n, h_prev, h_new, float(np.max(np.abs(u))))
            h_prev = h_new
            if n % log_every == 0 or n == steps:
                log.rows.append(self._row(n, t, dt, parts, u, res.iterations,
                                          res.relative_residual, diss_slack))
            if on_state is not None and n % on_state_every == 0:
                on_state(n, t, Field(self.grid, u))
        log.final_state = Field(self.grid, u)
        log.stopped_on = "steps"
        return log

    def adaptive_run(
        self,
        dt_lo: float,
        dt_hi: float,
        *,
        max_steps: int,
        residual_tol: float,
        u0: Field | None = None,
        target_decrement: float | None = None,
        growth_cap: float = 1.5,
        log_every: int = 1,
        on_state: Callable[[int, float, Field], None] | None = None,
        on_state_every: int = 1,
    ) -> RunLog:
        """March with proportional step control until ||grad H|| is small.

        Any step sequence inside [dt_lo, dt_hi] with dt_hi strictly below
        dt_limit inherits the dissipation and boundedness certificates, so
        the controller is free to chase a per-step energy-drop target:
        dt <- clamp(dt * sqrt(target/observed)), growth capped.
        """
        if not (0 < dt_lo <= dt_hi):
            raise ValueError(f"need 0 < dt_lo <= dt_hi, got {dt_lo!r}, {dt_hi!r}")
        if not dt_hi < self.dt_limit:
            raise ValueError(
                f"dt_hi = {dt_hi!r} must stay strictly below dt_limit = {self.dt_limit!r}"
            )
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not (growth_cap > 1.0):
            raise ValueError("growth_cap must exceed 1")
        if on_state_every < 1:
            raise ValueError("on_state_every must be >= 1")

        u = (u0 or self.u0).values
        l, mu2, mu3 = self.effective_moduli()
        l_hat = l - mu2 - mu3
        parts = energy.energy_parts(u, self.grid, self.params, self.weights)
        h_prev = parts.total
        if target_decrement is None:
            target_decrement = 1e-6 * (1.0 + abs(h_prev))
        log = RunLog(bounds=self.bounds, monitors=True)
        log.rows.append(self._row(0, 0.0, dt_lo, parts, u, 0, 0.0, 0.0))
        dt = dt_lo
        t = 0.0
        for n in range(1, max_steps + 1):
            x, res = self.step_arrays(u, dt)
            inc = x - u
            inc_norm = math.sqrt(max(float(np.sum(self.weights.w3 * inc * inc)), 0.0))
            parts = energy.energy_parts(x, self.grid, self.params, self.weights)
            h_new = parts.total
            diss_slack = (h_prev - h_new) - splitting.guaranteed_decrement(dt, inc_norm, l_hat)
            t += dt
            u = x
            self._monitor(n, h_prev, h_new, float(np.max(np.abs(u))))
            observed = max(h_prev - h_new, 0.0)
            h_prev = h_new
            residual = self.fixed_point_residual(u)
            if n % log_every == 0 or residual <= residual_tol or n == max_steps:
                row = self._row(n, t, dt, parts, u, res.iterations,
                                res.relative_residual, diss_slack)
                log.rows.append(row)
            if on_state is not None and n % on_state_every == 0:
                on_state(n, t, Field(self.grid, u))
            if residual <= residual_tol:
                log.stopped_on = "residual"
                break
            factor = growth_cap if observed <= 0.0 else math.sqrt(target_decrement / observed)
            dt = min(max(dt * min(growth_cap, factor), dt_lo), dt_hi)
        else:
            log.stopped_on = "max_steps"
        log.final_state = Field(self.grid, u)
        return log
