"""Matrix-free conjugate gradients in the trapezoidal inner product.

The implicit operators of the scheme are self-adjoint and positive
definite with respect to the *weighted* inner product <f, g> =
sum(w3 f g), not the Euclidean one, so the solver carries the weights
through every dot product.  No preconditioner in this version; the
`precondition` hook is accepted and must be the identity-like callable
if given.

Breakdown (a non-positive p'Ap) means the operator is not positive
definite in the weighted sense and raises immediately; NaNs abort with
the iteration index.  Hitting max_iter returns the best iterate with
converged=False and lets the caller decide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class LinearSolveError(RuntimeError):
    """Solver failed in a way iteration cannot fix (NaN, stall)."""


class BreakdownError(LinearSolveError):
    """p'Ap <= 0: the operator is not SPD in the weighted inner product."""


@dataclass(frozen=True)
class CGConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int | None = None  # default 10 * node count

    def __post_init__(self):
        if not (self.rel_tol >= 0 and self.abs_tol >= 0):
            raise ValueError("tolerances must be nonnegative")
        if self.rel_tol == 0 and self.abs_tol == 0:
            raise ValueError("one of rel_tol, abs_tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # true weighted residual norm ||b - A x||
    b_norm: float
    converged: bool

    @property
    def relative_residual(self) -> float:
        return self.residual / self.b_norm if self.b_norm > 0 else self.residual


def cg_solve(
    apply_a: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    w3: np.ndarray,
    config: CGConfig | None = None,
    x0: np.ndarray | None = None,
    precondition: Callable[[np.ndarray], np.ndarray] | None = None,
) -> CGResult:
    """Solve A x = b for a weighted-SPD operator A.

    Stops when the weighted residual norm falls under
    max(rel_tol * ||b||, abs_tol); the returned residual is recomputed
    from scratch (one extra apply), and the loop resumes if the recursion
    residual drifted optimistically.
    """
    cfg = config or CGConfig()
    b = np.asarray(b, dtype=np.float64)
    max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * b.size

    def wdot(u, v):
        return float(np.sum(w3 * u * v))

    b_norm = math.sqrt(max(wdot(b, b), 0.0))
    if b_norm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, 0.0, True)
    threshold = max(cfg.rel_tol * b_norm, cfg.abs_tol)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_a(x) if x0 is not None else b.copy()
    it = 0
    restarts = 0
    while True:
        z = precondition(r) if precondition is not None else r
        rz = wdot(r, z)
        p = z.copy()
        r_norm = math.sqrt(max(wdot(r, r), 0.0))
        while r_norm > threshold and it < max_iter:
            ap = apply_a(p)
            pap = wdot(p, ap)
            if not math.isfinite(pap):
                raise LinearSolveError(f"non-finite curvature at iteration {it}")
            if pap <= 0.0:
                raise BreakdownError(
                    f"<p, Ap> = {pap:.6e} at iteration {it}; operator is not "
                    "positive definite in the weighted inner product"
                )
            alpha = rz / pap
            x = x + alpha * p
            r = r - alpha * ap
            if not np.all(np.isfinite(r)):
                raise LinearSolveError(f"non-finite residual at iteration {it}")
            z = precondition(r) if precondition is not None else r
            rz_next = wdot(r, z)
            beta = rz_next / rz
            rz = rz_next
            p = z + beta * p
            r_norm = math.sqrt(max(wdot(r, r), 0.0))
            it += 1
        # trust only the recomputed residual
        true_r = b - apply_a(x)
        true_norm = math.sqrt(max(wdot(true_r, true_r), 0.0))
        if true_norm <= threshold:
            return CGResult(x, it, true_norm, b_norm, True)
        if it >= max_iter or restarts >= 2:
            return CGResult(x, it, true_norm, b_norm, False)
        r = true_r
        restarts += 1


@dataclass(frozen=True)
class SPDReport:
    trials: int
    worst_asymmetry: float  # relative
    worst_negativity: float  # relative, 0 when all curvatures nonnegative
    passed: bool


def spd_probe(
    apply_a: Callable[[np.ndarray], np.ndarray],
    shape: tuple[int, ...],
    w3: np.ndarray,
    trials: int,
    seed: int = 0,
    sym_tol: float = 1e-11,
    psd_tol: float = 1e-12,
) -> SPDReport:
    """Randomized self-adjointness and positivity check in the weighted product.

    Draws `trials` Gaussian pairs (x, y) and compares <Ax, y> with
    <x, Ay>, and <x, Ax> against zero, both relative to the natural
    scale ||Ax|| ||y|| (resp. ||Ax|| ||x||).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)

    def wdot(u, v):
        return float(np.sum(w3 * u * v))

    def wnorm(u):
        return math.sqrt(max(wdot(u, u), 0.0))

    worst_asym = 0.0
    worst_neg = 0.0
    for _ in range(trials):
        x = rng.standard_normal(shape)
        y = rng.standard_normal(shape)
        ax = apply_a(x)
        ay = apply_a(y)
        scale = max(wnorm(ax) * wnorm(y), wnorm(ay) * wnorm(x), 1e-300)
        worst_asym = max(worst_asym, abs(wdot(ax, y) - wdot(x, ay)) / scale)
        curv = wdot(x, ax)
        scale_c = max(wnorm(ax) * wnorm(x), 1e-300)
        worst_neg = max(worst_neg, max(0.0, -curv) / scale_c)
    return SPDReport(
        trials=trials,
        worst_asymmetry=worst_asym,
        worst_negativity=worst_neg,
        passed=(worst_asym <= sym_tol and worst_neg <= psd_tol),
    )
