"""Matrix-free Krylov solvers: BiCGStab for nonsymmetric transport systems
and deflated CG for the singular pressure system.

Both solvers report the *recomputed* final residual ||Ax - b||_2, not the
recursively updated one, so a ``converged`` report always means the returned
iterate actually satisfies the tolerance.  The deflated solver removes a
supplied null-space basis from the right-hand side and re-projects the
iterates every step, so semiconvergence against kernel drift never occurs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

__all__ = ["LinearOperator", "SolveReport", "solve_transport", "solve_deflated_spd"]


@dataclass(frozen=True)
class LinearOperator:
    """A matrix-free linear map on flat float64 vectors of a fixed dimension."""

    apply: Callable[[np.ndarray], np.ndarray]
    dimension: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def check_linearity(self, trials: int = 3, tol: float = 1e-8,
                        seed: int = 0) -> None:
        """Statistical linearity check: A(ax + by) = a Ax + b Ay on random data.

        Raises ``ValueError`` when the relative defect exceeds ``tol``.
        """
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            x = rng.standard_normal(self.dimension)
            y = rng.standard_normal(self.dimension)
            a, b = rng.standard_normal(2)
            lhs = self.apply(a * x + b * y)
            rhs = a * self.apply(x) + b * self.apply(y)
            scale = np.linalg.norm(rhs) + 1.0
            defect = np.linalg.norm(lhs - rhs) / scale
            if not defect <= tol:
                raise ValueError(f"operator is not linear: defect {defect:.3e}")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a Krylov solve.

    ``residual`` is the recomputed ||Ax - b||_2 of the returned iterate (with
    the deflated right-hand side when a null basis was supplied);
    ``deflated_norm`` is the norm of the component removed from b.
    """

    iterations: int
    residual: float
    converged: bool
    deflated_norm: float = 0.0


def _true_residual(A, b, x) -> float:
    return float(np.linalg.norm(b - A(x)))


def solve_transport(A: LinearOperator, b: np.ndarray, tol: float = 1e-10,
                    max_iter: int = 400, diag: np.ndarray | None = None,
                    x0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """BiCGStab with optional diagonal (Jacobi) preconditioning.

    Solves A x = b to ``||Ax - b||_2 <= tol * ||b||_2``.  ``diag`` is the
    operator diagonal for preconditioning (callers of matrix-free operators
    usually know it analytically); ``x0`` warm-starts the iteration.
    Non-convergence is flagged on the report and logged, never silent.
    """
    b = np.asarray(b, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    target = tol * bnorm
    inv_diag = None
    if diag is not None:
        inv_diag = 1.0 / np.asarray(diag, dtype=np.float64)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A(x)
    r_hat = r.copy()
    rho_prev = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    iterations = 0

    while iterations < max_iter:
        rho = float(np.dot(r_hat, r))
        if rho == 0.0:
            break  # breakdown; report what we have
        beta = (rho / rho_prev) * (alpha / omega)
        p = r + beta * (p - omega * v)
        p_hat = p if inv_diag is None else inv_diag * p
        v = A(p_hat)
        denom = float(np.dot(r_hat, v))
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        iterations += 1
        if np.linalg.norm(s) <= target:
            x = x + alpha * p_hat
            if _true_residual(A, b, x) <= target:
                break
            r = b - A(x)
            rho_prev = rho
            continue
        s_hat = s if inv_diag is None else inv_diag * s
        t = A(s_hat)
        tt = float(np.dot(t, t))
        if tt == 0.0:
            x = x + alpha * p_hat
            break
        omega = float(np.dot(t, s)) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        rho_prev = rho
        if omega == 0.0:
            break
        if np.linalg.norm(r) <= target and _true_residual(A, b, x) <= target:
            break

    residual = _true_residual(A, b, x)
    converged = residual <= target
    if not converged:
        log.warning("transport solve did not converge: %d iterations, "
                    "residual %.3e (target %.3e)", iterations, residual, target)
    return x, SolveReport(iterations, residual, converged)


def _project_out(basis: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Remove the span of orthonormal columns ``basis`` from ``v`` in place."""
    v -= basis @ (basis.T @ v)
    return v


def solve_deflated_spd(A: LinearOperator, b: np.ndarray,
                       null_basis: np.ndarray, tol: float = 1e-10,
                       max_iter: int | None = None,
                       x0: np.ndarray | None = None,
                       precond: Callable[[np.ndarray], np.ndarray] | None = None,
                       ) -> tuple[np.ndarray, SolveReport]:
    """Conjugate gradients for a symmetric positive semidefinite system.

    ``null_basis`` is an (n, k) matrix whose columns span the operator's
    kernel; it is orthonormalized once, the matching component of ``b`` is
    removed (its norm lands in ``deflated_norm``), and both residual and
    iterate are re-projected every iteration.  ``precond`` applies an SPD
    approximate inverse (preconditioned update directions are re-projected
    too).  The returned solution is orthogonal to the kernel.
    """
    b = np.asarray(b, dtype=np.float64)
    basis = np.asarray(null_basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != b.shape[0]:
        raise ValueError("null_basis must be (n, k)")
    basis, _ = np.linalg.qr(basis)

    b_defl = b.copy()
    _project_out(basis, b_defl)
    removed = float(np.linalg.norm(b - b_defl))
    bnorm = float(np.linalg.norm(b_defl))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, removed)
    target = tol * bnorm
    if max_iter is None:
        max_iter = 2 * b.shape[0]

    def precondition(v: np.ndarray) -> np.ndarray:
        return v if precond is None else _project_out(basis, precond(v))

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    _project_out(basis, x)
    r = b_defl - A(x)
    _project_out(basis, r)
    z = precondition(r)
    p = z.copy()
    rz = float(np.dot(r, z))
    iterations = 0

    while iterations < max_iter:
        if np.linalg.norm(r) <= target and _true_residual(A, b_defl, x) <= target:
            break
        Ap = A(p)
        pAp = float(np.dot(p, Ap))
        if pAp <= 0.0:
            log.warning("pressure operator lost positive definiteness "
                        "(p'Ap = %.3e); returning current iterate", pAp)
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        _project_out(basis, r)
        _project_out(basis, x)
        z = precondition(r)
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        iterations += 1

    residual = _true_residual(A, b_defl, x)
    converged = residual <= target
    if not converged:
        log.warning("deflated CG did not converge: %d iterations, "
                    "residual %.3e (target %.3e)", iterations, residual, target)
    return x, SolveReport(iterations, residual, converged, removed)
