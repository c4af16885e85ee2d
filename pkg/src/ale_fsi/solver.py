"""Newton iteration and sparse direct solves."""

import logging
import time
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import SuperLU, splu

from ale_fsi import config
from ale_fsi.errors import LinearSolveFailed, NonConvergence, SingularPivot
from ale_fsi.models import NewtonConfig, NewtonStats

logger = logging.getLogger(__name__)

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], sparse.spmatrix]


def factorize(a: sparse.spmatrix) -> SuperLU:
    """LU factors with a fill-reducing column ordering."""
    if a.shape[0] != a.shape[1]:
        raise LinearSolveFailed(f"matrix is not square: {a.shape}")
    try:
        return splu(sparse.csc_matrix(a), permc_spec="COLAMD")
    except RuntimeError as e:
        raise SingularPivot(str(e)) from e


def backward_error(a: sparse.spmatrix, x: np.ndarray, b: np.ndarray) -> float:
    """Normwise backward error |b - Ax| / (|A| |x| + |b|) in the infinity norm."""
    r = b - a @ x
    norm_a = float(abs(a).sum(axis=1).max()) if a.shape[0] else 0.0
    denom = norm_a * float(np.max(np.abs(x), initial=0.0)) + float(np.max(np.abs(b), initial=0.0))
    return float(np.max(np.abs(r), initial=0.0)) / denom if denom > 0 else 0.0


def sparse_lu_solve(a: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
    """Solve Ax = b by sparse LU with one step of iterative refinement if needed."""
    lu = factorize(a)
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularPivot("LU solve produced non-finite values")
    err = backward_error(a, x, b)
    if err > config.LU_BACKWARD_ERROR_TOL:
        x = x + lu.solve(b - a @ x)
        err = backward_error(a, x, b)
        if err > config.LU_BACKWARD_ERROR_TOL:
            raise LinearSolveFailed(f"backward error {err:.2e} after refinement")
    return np.asarray(x)


def newton_solve(
    residual_fn: ResidualFn,
    jacobian_fn: JacobianFn,
    x0: np.ndarray,
    cfg: NewtonConfig,
    *,
    context: str = "",
) -> tuple[np.ndarray, NewtonStats]:
    """Damped Newton iteration with Armijo backtracking on |R|^2.

    Converged when |R| <= max(abs_tol, rel_tol |R(x0)|), or when a full step is
    below step_tol relative to x (round-off floor of stiff solid terms).

    Raises:
        NonConvergence: max_iter reached or line search exhausted.
        LinearSolveFailed: the linearized system could not be solved.
    """
    start_time = time.time()
    stats = NewtonStats()
    x = np.array(x0, dtype=float)
    r = residual_fn(x)
    norm = float(np.linalg.norm(r))
    stats.residual_norms.append(norm)
    target = max(cfg.abs_tol, cfg.rel_tol * norm)
    logger.debug(f"[NEWTON] {context} iter=0 residual={norm:.6e}")

    while norm > target:
        if stats.iterations >= cfg.max_iter:
            logger.warning(f"[NEWTON] {context} no convergence after {cfg.max_iter} iterations")
            raise NonConvergence(
                f"{context}: residual {norm:.3e} after {cfg.max_iter} iterations", stats
            )
        delta = sparse_lu_solve(jacobian_fn(x), -r)
        alpha = 1.0
        for _ in range(cfg.max_halvings + 1):
            trial = x + alpha * delta
            r_trial = residual_fn(trial)
            norm_trial = float(np.linalg.norm(r_trial))
            if norm_trial**2 <= (1.0 - 2.0 * cfg.armijo_c * alpha) * norm**2:
                break
            alpha *= cfg.backtrack_factor
        else:
            step = float(np.max(np.abs(delta), initial=0.0))
            if step <= cfg.step_tol * max(1.0, float(np.max(np.abs(x), initial=0.0))):
                # residual sits at its round-off floor
                stats.iterations += 1
                stats.converged = True
                logger.debug(f"[NEWTON] {context} stalled at round-off, residual={norm:.6e}")
                return x, stats
            raise NonConvergence(f"{context}: line search failed at residual {norm:.3e}", stats)
        x, r, norm = trial, r_trial, norm_trial
        stats.iterations += 1
        stats.residual_norms.append(norm)
        logger.debug(
            f"[NEWTON] {context} iter={stats.iterations} residual={norm:.6e} alpha={alpha:g}"
        )
        step = alpha * float(np.max(np.abs(delta), initial=0.0))
        if alpha == 1.0 and step <= cfg.step_tol * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            break

    stats.converged = True
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[NEWTON] {context} converged iterations={stats.iterations} "
        f"residual={norm:.3e} elapsed={elapsed_ms:.0f}ms"
    )
    return x, stats
