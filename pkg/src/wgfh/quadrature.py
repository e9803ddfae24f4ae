"""Refining quadratures: periodic averages and line integrals."""

import numpy as np


class QuadratureError(RuntimeError):
    """Successive refinements failed to settle below the requested tolerance."""


def periodic_average(f, n0=1024, rel_tol=1e-12, max_doublings=9):
    """Average of a 1-periodic function over [0,1) by the midpoint rule.

    The midpoint rule on a periodic integrand is spectrally accurate; the
    node count doubles until the relative change drops below `rel_tol`.
    `f` must accept numpy arrays.
    """
    n = n0
    prev = None
    for _ in range(max_doublings + 1):
        y = (np.arange(n) + 0.5) / n
        val = float(np.mean(f(y)))
        if prev is not None:
            scale = max(abs(val), abs(prev), 1e-300)
            if abs(val - prev) <= rel_tol * scale:
                return val
        prev = val
        n *= 2
    raise QuadratureError(
        f"periodic average did not converge below rel_tol={rel_tol} with {n // 2} points"
    )


def integrate_line(f, a, b, n0=256, rel_tol=1e-10, max_doublings=14):
    """Composite-Simpson integral of f over [a, b] with interval doubling."""
    if a == b:
        return 0.0
    n = n0
    prev = None
    for _ in range(max_doublings + 1):
        x = np.linspace(a, b, n + 1)
        fx = f(x)
        h = (b - a) / n
        val = float(h / 3.0 * (fx[0] + fx[-1] + 4.0 * fx[1:-1:2].sum() + 2.0 * fx[2:-1:2].sum()))
        if prev is not None:
            scale = max(abs(val), abs(prev), 1e-300)
            if abs(val - prev) <= rel_tol * scale:
                return val
        prev = val
        n *= 2
    raise QuadratureError(f"line integral on [{a}, {b}] did not converge below {rel_tol}")
