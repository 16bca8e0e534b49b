"""Generic smooth/convex/concave splitting step and its guarantees.

A gradient flow for nu_total = nu1 + nu2 - nu3 is advanced by treating
the smooth piece nu1 and the concave correction -nu3 explicitly and the
convex piece nu2 implicitly:

    (X - U)/dt = -( grad nu1(U) + grad nu2(X) - grad nu3(U) )

Each step therefore solves grad nu2(X) + X/dt = U/dt - grad nu1(U)
+ grad nu3(U), which is the unique minimizer of a (mu2 + 1/dt)-strongly
convex functional, so the step always exists and is unique.

With nu1 L-smooth, nu2 mu2-strongly convex and nu3 mu3-strongly convex,
the energy drops by at least (1/dt - (L - mu2 - mu3)/2) ||X - U||^2
whenever dt <= 2/(L - mu2 - mu3) (any dt if L <= mu2 + mu3).
`dissipation_check` asserts exactly that decrement; `error_prefactor`
evaluates the constants of the first-order error bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SplittingProblem:
    """One splitting instance: gradient callables plus certified moduli.

    `implicit_solve(rhs, dt)` must return (X, iterations, relative_residual)
    with X solving grad nu2(X) + X/dt = rhs.  `mu3 > 0` is required unless
    `nu3_convex` is set, which declares nu3 merely convex and zeroes its
    modulus in every formula.  `nu_total` is optional and only feeds the
    energy columns of step reports.
    """

    grad_nu1: Callable[[np.ndarray], np.ndarray]
    grad_nu3: Callable[[np.ndarray], np.ndarray]
    implicit_solve: Callable[[np.ndarray, float], tuple[np.ndarray, int, float]]
    lipschitz: float
    mu2: float
    mu3: float
    weights: np.ndarray
    nu3_convex: bool = False
    nu_total: Callable[[np.ndarray], float] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lipschitz) and self.lipschitz > 0):
            raise ValueError(f"lipschitz must be positive and finite, got {self.lipschitz!r}")
        if not (math.isfinite(self.mu2) and self.mu2 >= 0):
            raise ValueError(f"mu2 must be nonnegative, got {self.mu2!r}")
        if self.nu3_convex:
            if self.mu3 != 0.0:
                raise ValueError("nu3_convex declares mu3 = 0; do not pass a nonzero mu3")
        elif not (math.isfinite(self.mu3) and self.mu3 > 0):
            raise ValueError(
                f"mu3 must be positive (or set nu3_convex for a merely convex nu3), "
                f"got {self.mu3!r}"
            )

    @property
    def mu3_effective(self) -> float:
        return 0.0 if self.nu3_convex else self.mu3

    @property
    def l_hat(self) -> float:
        """Excess smoothness L - mu2 - mu3 that the step size must control."""
        return self.lipschitz - self.mu2 - self.mu3_effective


@dataclass(frozen=True)
class StepReport:
    dt: float
    increment_norm: float
    guaranteed_decrement: float
    solver_iterations: int
    solver_residual: float
    energy_before: float | None = None
    energy_after: float | None = None


def guaranteed_decrement(dt: float, increment_norm: float, l_hat: float) -> float:
    """Certified energy drop (1/dt - l_hat/2) * ||X - U||^2; may be negative
    past the stability limit, in which case it is only a weaker bound."""
    return (1.0 / dt - 0.5 * l_hat) * increment_norm * increment_norm


def scc_step(problem: SplittingProblem, u: np.ndarray, dt: float) -> tuple[np.ndarray, StepReport]:
    """One splitting step from u with step size dt."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt!r}")
    rhs = u / dt - problem.grad_nu1(u) + problem.grad_nu3(u)
    x, iterations, residual = problem.implicit_solve(rhs, dt)
    inc = x - u
    inc_norm = math.sqrt(max(float(np.sum(problem.weights * inc * inc)), 0.0))
    e_before = e_after = None
    if problem.nu_total is not None:
        e_before = problem.nu_total(u)
        e_after = problem.nu_total(x)
    return x, StepReport(
        dt=dt,
        increment_norm=inc_norm,
        guaranteed_decrement=guaranteed_decrement(dt, inc_norm, problem.l_hat),
        solver_iterations=iterations,
        solver_residual=residual,
        energy_before=e_before,
        energy_after=e_after,
    )


def max_stable_dt(lipschitz: float, mu2: float, mu3: float) -> float:
    """2/(L - mu2 - mu3), or inf when the moduli absorb the smoothness."""
    if not (math.isfinite(lipschitz) and lipschitz > 0):
        raise ValueError(f"lipschitz must be positive and finite, got {lipschitz!r}")
    if mu2 < 0 or mu3 < 0:
        raise ValueError("moduli must be nonnegative")
    l_hat = lipschitz - mu2 - mu3
    if l_hat <= 0:
        return math.inf
    return 2.0 / l_hat


@dataclass(frozen=True)
class DissipationCheck:
    ok: bool
    slack: float  # actual drop minus guaranteed drop; >= -tol passes
    tol: float
    decrement: float


def dissipation_check(
    report: StepReport, lipschitz: float, mu2: float, mu3: float, rel_tol: float = 1e-10
) -> DissipationCheck:
    """Assert energy_after - energy_before <= -guaranteed decrement (+tol)."""
    if report.energy_before is None or report.energy_after is None:
        raise ValueError("step report carries no energies; construct the problem with nu_total")
    l_hat = lipschitz - mu2 - mu3
    dec = guaranteed_decrement(report.dt, report.increment_norm, l_hat)
    scale = 1.0 + max(abs(report.energy_before), abs(report.energy_after))
    tol = rel_tol * scale
    slack = (report.energy_before - report.energy_after) - dec
    return DissipationCheck(ok=slack >= -tol, slack=slack, tol=tol, decrement=dec)


@dataclass(frozen=True)
class ErrorBoundConstants:
    """Constants of the first-order error bound for given tuning knobs.

    The global error obeys
        ||e^n|| <= prefactor * (c_time * dt + gamma_max) * growth(T)
    with growth(T) = sqrt(exp(rate * T) - 1), valid for dt <= dt_max
    (no restriction when the moduli dominate, l_hat < 0).
    """

    l_hat: float
    dt_max: float
    prefactor: float
    rate: float
    horizon: float
    growth: float

    def bound(self, dt: float, c_time: float, gamma_max: float) -> float:
        if dt > self.dt_max:
            raise ValueError(f"bound holds only for dt <= {self.dt_max!r}, got {dt!r}")
        return self.prefactor * (c_time * dt + gamma_max) * self.growth


def error_prefactor(
    lipschitz: float,
    mu2: float,
    mu3: float,
    kappa1: float = 2.0 / 3.0,
    kappa2: float = 2.0 / 3.0,
    r: float = 0.5,
    horizon: float = 1.0,
) -> ErrorBoundConstants:
    """Evaluate the error-bound constants.

    kappa1, kappa2 > 0 with kappa1 + kappa2 < 2 split the Young-inequality
    budget; r in (0, 1) is the fraction of the stability budget the step
    size may consume.  The defaults are the standard specialization, for
    which dt_max = 1/(3 l_hat) and prefactor = 1/sqrt(l_hat^2 + 4 L^2).
    """
    if not (math.isfinite(lipschitz) and lipschitz > 0):
        raise ValueError(f"lipschitz must be positive and finite, got {lipschitz!r}")
    if mu2 < 0 or mu3 < 0:
        raise ValueError("moduli must be nonnegative")
    if not (0.0 < r < 1.0):
        raise ValueError(f"r must lie in (0, 1), got {r!r}")
    if not (kappa1 > 0 and kappa2 > 0 and kappa1 + kappa2 < 2):
        raise ValueError(
            f"need kappa1, kappa2 > 0 with kappa1 + kappa2 < 2, got {kappa1!r}, {kappa2!r}"
        )
    if not (math.isfinite(horizon) and horizon > 0):
        raise ValueError(f"horizon must be positive and finite, got {horizon!r}")
    l_hat = lipschitz - mu2 - mu3
    if l_hat == 0.0:
        raise ValueError("the bound assumes L - mu2 - mu3 != 0")
    theta = 1.0 if l_hat > 0 else 0.0
    dt_max = r * kappa2 / l_hat if l_hat > 0 else math.inf
    prefactor = math.sqrt(
        kappa1 * kappa2
        / ((2.0 - kappa1 - kappa2) * (kappa1 * l_hat**2 + 4.0 * kappa2 * lipschitz**2))
    )
    rate = 4.0 * lipschitz**2 / (kappa1 * abs(l_hat)) + abs(l_hat) / (kappa2 * (1.0 - r * theta))
    arg = rate * horizon
    growth = math.inf if arg > 700.0 else math.sqrt(math.expm1(arg))
    return ErrorBoundConstants(
        l_hat=l_hat,
        dt_max=dt_max,
        prefactor=prefactor,
        rate=rate,
        horizon=horizon,
        growth=growth,
    )
