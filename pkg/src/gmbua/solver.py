"""ADMM solver for simplex-constrained mixed-norm sparse regression, the
coarse-scale problem, the stacked fine-scale problem, and global abundance
aggregation.

Splitting: consensus form with two auxiliary blocks, one carrying the
penalty prox and one the simplex projection, so the data-term subproblem is
a single linear solve against a cached Cholesky factor of (B'B + 2*rho*I).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import AbundanceMatrix, BundleLibrary, DataError, TAU_FEAS
from .penalties import (
    GroupStructure,
    PenaltySpec,
    penalty_matrix,
    project_simplex,
    prox,
)
from .superpix import ScaleOperators, coarsen, upsample


class SolverError(Exception):
    """Hard numerical failure (NaN/Inf in iterates)."""


@dataclass(frozen=True)
class SolverParams:
    rho: float = 0.1
    max_iter: int = 1000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    adapt_rho: bool = True
    init: str = "uniform"  # or "warm"

    def __post_init__(self):
        if self.rho <= 0 or self.max_iter < 1:
            raise ValueError("rho must be positive and max_iter >= 1")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveInfo:
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    objective: float
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class StackedProblem:
    """Augmented data (Y over sqrt(beta)*X_D) and dictionary (B over
    sqrt(beta)*I) whose least-squares misfit equals the beta-regularized
    fine-scale objective."""

    y: np.ndarray
    b: np.ndarray
    beta: float


def admm_unmix(
    y: np.ndarray,
    b: np.ndarray,
    groups: GroupStructure,
    spec: PenaltySpec = PenaltySpec("none"),
    lam: float = 0.0,
    params: SolverParams = SolverParams(),
    init: np.ndarray | None = None,
    trace: bool = False,
) -> tuple[AbundanceMatrix, SolveInfo]:
    """Solve min_{X in simplex} 0.5||Y - BX||_F^2 + lam * R(X).

    Returns the best feasible iterate seen (its columns lie on the simplex
    exactly, and its objective is non-increasing over accepted iterates).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    q, n = b.shape[1], y.shape[1]
    if y.shape[0] != b.shape[0]:
        raise DataError("Y and B band counts differ")
    if not (np.isfinite(y).all() and np.isfinite(b).all()):
        raise SolverError("non-finite values in solver input")
    if groups.q != q:
        raise DataError("group ranges do not cover the library columns")

    rho = params.rho
    gram = b.T @ b
    bty = b.T @ y
    factor = cho_factor(gram + 2.0 * rho * np.eye(q))

    if init is not None:
        if init.shape != (q, n):
            raise DataError(f"init must be ({q}, {n})")
        x = np.array(init, dtype=np.float64)
    else:
        x = np.full((q, n), 1.0 / q)
    u = x.copy()
    v = project_simplex(x)
    du = np.zeros((q, n))
    dv = np.zeros((q, n))

    use_penalty = spec.kind != "none" and lam > 0.0

    def objective(a):
        r = y - b @ a
        val = 0.5 * float(np.sum(r * r))
        if use_penalty:
            val += lam * penalty_matrix(a, groups, spec)
        return val

    best_v = v.copy()
    best_obj = objective(v)
    info = SolveInfo(0, np.inf, np.inf, False, best_obj)

    for it in range(1, params.max_iter + 1):
        x = cho_solve(factor, bty + rho * (u - du) + rho * (v - dv))
        u_prev, v_prev = u, v
        if use_penalty:
            u = prox(x + du, groups, spec, lam / rho)
        else:
            u = x + du
        v = project_simplex(x + dv)
        du = du + x - u
        dv = dv + x - v

        if not np.isfinite(x).all():
            raise SolverError(f"NaN/Inf in ADMM iterates at iteration {it}")

        r_norm = np.sqrt(np.sum((x - u) ** 2) + np.sum((x - v) ** 2))
        s_norm = rho * np.sqrt(np.sum((u - u_prev) ** 2) + np.sum((v - v_prev) ** 2))
        x_norm = max(np.linalg.norm(x), np.linalg.norm(u), np.linalg.norm(v), 1e-12)
        d_norm = max(rho * np.sqrt(np.sum(du**2) + np.sum(dv**2)), 1e-12)
        rel_r = r_norm / x_norm
        rel_s = s_norm / d_norm

        at_tol = rel_r <= params.tol_primal and rel_s <= params.tol_dual
        # objective bookkeeping every few iterations keeps the data-term
        # matmul from doubling the per-iteration cost
        if at_tol or it % 5 == 0 or trace:
            obj = objective(v)
            if obj < best_obj:
                best_obj = obj
                best_v = v.copy()
            if trace:
                info.trace.append((it, rel_r, rel_s, obj, rho))

        if at_tol:
            info.iterations = it
            info.primal_residual = rel_r
            info.dual_residual = rel_s
            info.converged = True
            break

        if params.adapt_rho and it % 10 == 0:
            if rel_r > 10.0 * rel_s and rho < 1e4:
                rho *= 2.0
                du /= 2.0
                dv /= 2.0
                factor = cho_factor(gram + 2.0 * rho * np.eye(q))
            elif rel_s > 10.0 * rel_r and rho > 1e-4:
                rho /= 2.0
                du *= 2.0
                dv *= 2.0
                factor = cho_factor(gram + 2.0 * rho * np.eye(q))
        info.iterations = it
        info.primal_residual = rel_r
        info.dual_residual = rel_s

    info.objective = best_obj
    result = AbundanceMatrix(
        level="bundle", coefficients=best_v, groups=groups, tol=TAU_FEAS
    )
    return result, info


def fclsu(y, b, groups, params: SolverParams = SolverParams()):
    """Fully constrained least squares: the lam = 0 special case."""
    return admm_unmix(y, b, groups, PenaltySpec("none"), 0.0, params)


def coarse_unmix(
    y,
    b,
    groups,
    ops: ScaleOperators,
    lam_c: float,
    spec: PenaltySpec,
    params: SolverParams = SolverParams(),
):
    """Solve the sparse problem on the superpixel-averaged cube."""
    yc = coarsen(np.asarray(y, dtype=np.float64), ops)
    return admm_unmix(yc, b, groups, spec, lam_c, params)


def build_stacked(y, b, x_d, beta: float) -> StackedProblem:
    """Assemble the augmented problem equivalent to the beta-regularized one."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x_d = np.asarray(x_d, dtype=np.float64)
    q = b.shape[1]
    if x_d.shape != (q, y.shape[1]):
        raise DataError(f"X_D must be ({q}, {y.shape[1]}), got {x_d.shape}")
    root = np.sqrt(beta)
    y_t = np.vstack([y, root * x_d])
    b_t = np.vstack([b, root * np.eye(q)])
    return StackedProblem(y=y_t, b=b_t, beta=beta)


def multiscale_unmix(
    y,
    b,
    groups,
    ops: ScaleOperators,
    spec: PenaltySpec,
    lam: float,
    lam_c: float,
    beta: float,
    params: SolverParams = SolverParams(),
):
    """Coarse solve -> upsample -> stacked fine-scale solve (warm started)."""
    y = np.asarray(y, dtype=np.float64)
    if beta == 0.0:
        return admm_unmix(y, b, groups, spec, lam, params)
    xc, _ = coarse_unmix(y, b, groups, ops, lam_c, spec, params)
    x_d = upsample(xc.coefficients, ops)
    stacked = build_stacked(y, b, x_d, beta)
    return admm_unmix(
        stacked.y, stacked.b, groups, spec, lam, params, init=x_d
    )


def aggregate_global(x: AbundanceMatrix, groups: GroupStructure | None = None):
    """Sum bundle-level abundances within each group (global abundances)."""
    if x.level != "bundle":
        raise DataError("aggregate_global expects a bundle-level matrix")
    groups = groups or x.groups
    z = np.add.reduceat(x.coefficients, groups.starts, axis=0)
    # allow for summation rounding on top of the source matrix's tolerance
    return AbundanceMatrix(level="global", coefficients=z, tol=x.tol * 2)


def reconstruct(b: np.ndarray, x: AbundanceMatrix) -> np.ndarray:
    """Predicted cube B @ X."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[1] != x.coefficients.shape[0]:
        raise DataError("library and abundance dimensions do not match")
    return b @ x.coefficients
