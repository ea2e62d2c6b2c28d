"""Jacobi-preconditioned conjugate gradients for SPD sparse systems."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolverError(RuntimeError):
    """CG failed to converge or hit a non-finite value."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-12
    atol: float = 1e-14
    maxiter: int | None = None   # default: 10 * dimension

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.atol < 0:
            raise ValueError("atol must be nonnegative")


@dataclass
class SolveReport:
    iterations: int
    residual: float                     # worst column, absolute 2-norm
    residual_history: list = field(default_factory=list, repr=False)


def cg_solve(op, rhs, config: SolverConfig | None = None, x0=None):
    """Solve ``op @ x = rhs`` by PCG with a diagonal preconditioner.

    ``rhs`` may be a vector or an (n, m) block; columns are iterated
    independently (shared matrix products) and each must satisfy
    ``||op x - b|| <= rtol ||b|| + atol``.  Returns ``(x, SolveReport)``.
    """
    config = config or SolverConfig()
    b = np.asarray(rhs, dtype=float)
    vector = b.ndim == 1
    B = b[:, None] if vector else b
    n = B.shape[0]
    if op.shape != (n, n):
        raise ValueError(f"operator shape {op.shape} does not match rhs length {n}")
    maxiter = config.maxiter if config.maxiter is not None else 10 * max(n, 1)

    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
    if n == 0:
        return (X[:, 0] if vector else X), SolveReport(0, 0.0)

    diag = np.asarray(op.diagonal(), dtype=float)
    if np.any(diag <= 0):
        raise SolverError("operator diagonal is not positive; Jacobi preconditioner undefined")
    inv_diag = (1.0 / diag)[:, None]

    bnorm = np.linalg.norm(B, axis=0)
    target = config.rtol * bnorm + config.atol
    R = B - op @ X if x0 is not None else B.copy()
    rnorm = np.linalg.norm(R, axis=0)
    history = [float(rnorm.max())]
    active = rnorm > target
    Z = inv_diag * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    it = 0
    while active.any():
        if it >= maxiter:
            raise SolverError(
                f"CG did not converge in {maxiter} iterations (residual {rnorm.max():.3e})",
                history,
            )
        cols = np.flatnonzero(active)
        Pa = P[:, cols]
        Q = op @ Pa
        pq = np.einsum("ij,ij->j", Pa, Q)
        alpha = rz[cols] / pq
        X[:, cols] += alpha * Pa
        R[:, cols] -= alpha * Q
        rnorm[cols] = np.linalg.norm(R[:, cols], axis=0)
        if not np.all(np.isfinite(rnorm[cols])):
            raise SolverError("non-finite residual in CG", history)
        it += 1
        history.append(float(rnorm.max()))
        active = rnorm > target
        cols = np.flatnonzero(active)
        if len(cols) == 0:
            break
        Z = inv_diag * R[:, cols]
        rz_new = np.einsum("ij,ij->j", R[:, cols], Z)
        beta = rz_new / rz[cols]
        rz[cols] = rz_new
        P[:, cols] = Z + beta * P[:, cols]

    report = SolveReport(iterations=it, residual=float(rnorm.max()), residual_history=history)
    return (X[:, 0] if vector else X), report
