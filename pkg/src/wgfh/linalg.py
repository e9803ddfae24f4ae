"""Conjugate gradients for the periodic elliptic systems used throughout.

The torus operators have a one-dimensional kernel of constants, so the CG
variant here projects the right side, the initial guess and every residual
onto the mean-zero complement.
"""

import numpy as np


class SolverError(RuntimeError):
    pass


def _project_mean_zero(v):
    return v - v.mean()


def cg(apply_a, b, *, tol=1e-13, maxiter=None, diag=None, x0=None, mean_zero=False):
    """Solve A x = b for symmetric positive (semi-)definite A.

    apply_a : callable taking and returning arrays of b's shape.
    diag    : optional Jacobi preconditioner (the diagonal of A).
    mean_zero : project b, iterates and residuals onto the mean-zero
        complement; required when A is singular with constant kernel.

    Returns (x, iterations). Raises SolverError past the iteration cap.
    """
    b = np.asarray(b, dtype=np.float64)
    if mean_zero:
        b = _project_mean_zero(b)
    if maxiter is None:
        maxiter = max(200, 12 * b.size)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if mean_zero and x0 is not None:
        x = _project_mean_zero(x)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x if x0 is not None else np.zeros_like(b), 0
    r = b - apply_a(x)
    if mean_zero:
        r = _project_mean_zero(r)
    z = r / diag if diag is not None else r
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, maxiter + 1):
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it - 1
        ap = apply_a(p)
        denom = float(np.vdot(p, ap))
        if denom <= 0.0:
            raise SolverError(f"CG breakdown: non-positive curvature {denom:.3e} at it {it}")
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        if mean_zero:
            r = _project_mean_zero(r)
        z = r / diag if diag is not None else r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x, maxiter
    raise SolverError(
        f"CG did not converge in {maxiter} iterations "
        f"(residual {np.linalg.norm(r) / bnorm:.3e}, tol {tol:.1e})"
    )


def spd_eigenvalues_2x2(m):
    """Eigenvalues of symmetric 2x2 matrices, shape (..., 2, 2) -> (..., 2)."""
    a = m[..., 0, 0]
    d = m[..., 1, 1]
    b = m[..., 0, 1]
    mean = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + b**2)
    return np.stack([mean - rad, mean + rad], axis=-1)
