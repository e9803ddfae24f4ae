"""Periodic cell problems on the y-torus and the effective tensors they induce.

For each slow point x and direction i the corrector w_i solves

    div_y( D(x,y) (grad_y w_i + e_i) ) = 0  on the torus,  D = pi B^{-1},

discretized with nodal elements on a uniform periodic grid (linear in 1-d,
bilinear with full Gauss quadrature in 2-d, element coefficients frozen at
element midpoints).  The singular system is solved by conjugate gradients
with mean-zero projection; correctors are normalized to zero mean.  Slow
fields are summarized as

    D_bar = int D dy,   G_bar[:, i] = int D grad_y w_i dy,
    pi_bar = int pi dy, B_bar = ((D_bar + G_bar) / pi_bar)^{-1}.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import SolverError, cg
from .media import Medium, average_pi
from .quadrature import integrate_line, periodic_average

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _shape_gradients(xi, eta):
    """Reference-square gradients of the bilinear shape functions, node order
    (0,0), (1,0), (1,1), (0,1)."""
    dxi = np.array([-(1 - eta), (1 - eta), eta, -eta])
    deta = np.array([-(1 - xi), -xi, xi, (1 - xi)])
    return dxi, deta


def _universal_q1_matrices():
    kxx = np.zeros((4, 4))
    kxy = np.zeros((4, 4))
    kyy = np.zeros((4, 4))
    for xi in _GAUSS:
        for eta in _GAUSS:
            dxi, deta = _shape_gradients(xi, eta)
            kxx += 0.25 * np.outer(dxi, dxi)
            kxy += 0.25 * np.outer(dxi, deta)
            kyy += 0.25 * np.outer(deta, deta)
    return kxx, kxy, kyy


_KXX, _KXY, _KYY = _universal_q1_matrices()
# reference-square averages of the shape gradients (values at the center)
_DXI_MEAN = np.array([-0.5, 0.5, 0.5, -0.5])
_DETA_MEAN = np.array([-0.5, -0.5, 0.5, 0.5])


class CellProblemError(RuntimeError):
    pass


def _element_nodes_2d(n):
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ip, jp = (i + 1) % n, (j + 1) % n
    return (
        (i * n + j).ravel(),
        (ip * n + j).ravel(),
        (ip * n + jp).ravel(),
        (i * n + jp).ravel(),
    )


def _assemble_1d(d_elem):
    """Periodic linear-element stiffness, a(u,v) = sum_e d_e du dv / h."""
    n = d_elem.size
    h = 1.0 / n
    d_prev = np.roll(d_elem, 1)
    diag = (d_elem + d_prev) / h
    rows = np.concatenate([np.arange(n)] * 3)
    cols = np.concatenate([np.arange(n), (np.arange(n) + 1) % n, (np.arange(n) - 1) % n])
    vals = np.concatenate([diag, -d_elem / h, -d_prev / h])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _assemble_2d(d_elem):
    """Periodic bilinear-element stiffness for elementwise-constant 2x2 D."""
    n = d_elem.shape[0]
    nodes = _element_nodes_2d(n)
    d11 = d_elem[..., 0, 0].ravel()
    d12 = 0.5 * (d_elem[..., 0, 1] + d_elem[..., 1, 0]).ravel()
    d22 = d_elem[..., 1, 1].ravel()
    ne = n * n
    rows = np.empty(16 * ne, dtype=np.int64)
    cols = np.empty(16 * ne, dtype=np.int64)
    vals = np.empty(16 * ne)
    k = 0
    for a in range(4):
        for b in range(4):
            coeff = (
                d11 * _KXX[a, b]
                + d12 * (_KXY[a, b] + _KXY[b, a])
                + d22 * _KYY[a, b]
            )
            rows[k * ne:(k + 1) * ne] = nodes[a]
            cols[k * ne:(k + 1) * ne] = nodes[b]
            vals[k * ne:(k + 1) * ne] = coeff
            k += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))


def _rhs_1d(d_elem, p=1.0):
    # b_i = -int D p dphi_i = p (d_i - d_{i-1})
    return p * (d_elem - np.roll(d_elem, 1))


def _rhs_2d(d_elem, p):
    n = d_elem.shape[0]
    h = 1.0 / n
    dp = d_elem @ np.asarray(p, dtype=np.float64)  # (n, n, 2)
    b = np.zeros(n * n)
    nodes = _element_nodes_2d(n)
    f1 = dp[..., 0].ravel() * h
    f2 = dp[..., 1].ravel() * h
    for a in range(4):
        np.add.at(b, nodes[a], -(f1 * _DXI_MEAN[a] + f2 * _DETA_MEAN[a]))
    return b


def _solve_singular(a_mat, b, tol=1e-13):
    diag = a_mat.diagonal()
    if np.linalg.norm(b) <= 1e-14 * np.linalg.norm(diag):
        # rhs is zero to round-off: the zero-mean solution is identically zero
        return np.zeros_like(b), 0.0, 0
    compat = abs(b.sum()) / np.abs(b).sum()
    if compat > 1e-10:
        raise CellProblemError(f"compatibility violated: relative mean of rhs {compat:.2e}")
    try:
        w, its = cg(a_mat.dot, b, tol=tol, diag=diag, mean_zero=True,
                    maxiter=max(2000, 40 * int(np.sqrt(b.size)) * 20))
    except SolverError as exc:
        raise CellProblemError(str(exc)) from exc
    w -= w.mean()
    res = float(np.linalg.norm(a_mat.dot(w) - (b - b.mean())) / max(np.linalg.norm(b), 1e-300))
    return w, res, its


def _center_gradients_2d(w2, h):
    w0 = w2
    w1 = np.roll(w2, -1, axis=0)
    w2r = np.roll(np.roll(w2, -1, axis=0), -1, axis=1)
    w3 = np.roll(w2, -1, axis=1)
    gx = (w1 + w2r - w0 - w3) / (2 * h)
    gy = (w3 + w2r - w0 - w1) / (2 * h)
    return np.stack([gx, gy], axis=-1)


@dataclass
class CellSolution:
    """Correctors at one slow point: nodal values and element-center gradients."""

    x: object
    dim: int
    ycells: int
    w: list          # per direction, nodal arrays ((N,) or (N,N))
    grad: list       # per direction, element gradients ((N,) or (N,N,2))
    residuals: list  # relative linear-system residual per direction

    def mean_abs(self):
        return max(float(abs(np.mean(wi))) for wi in self.w)


def _check_ycells(ycells):
    if ycells < 32:
        raise CellProblemError(f"ycells must be at least 32 per axis, got {ycells}")


def solve_cell(medium, x=0.0, ycells=64, tol=1e-13):
    """Solve the corrector problems for every direction at slow point x."""
    _check_ycells(ycells)
    d = medium.conductivity_cells(x, ycells)
    return _solve_cell_from_coefficients(d, x, ycells, tol)


def _solve_cell_from_coefficients(d, x, ycells, tol=1e-13):
    h = 1.0 / ycells
    if d.ndim == 1:
        a_mat = _assemble_1d(d)
        b = _rhs_1d(d)
        w, res, _ = _solve_singular(a_mat, b, tol)
        grad = (np.roll(w, -1) - w) / h
        return CellSolution(x=x, dim=1, ycells=ycells, w=[w], grad=[grad], residuals=[res])
    a_mat = _assemble_2d(d)
    ws, grads, residuals = [], [], []
    for i in range(2):
        p = np.zeros(2)
        p[i] = 1.0
        b = _rhs_2d(d, p)
        w, res, _ = _solve_singular(a_mat, b, tol)
        w2 = w.reshape(ycells, ycells)
        ws.append(w2)
        grads.append(_center_gradients_2d(w2, h))
        residuals.append(res)
    return CellSolution(x=x, dim=2, ycells=ycells, w=ws, grad=grads, residuals=residuals)


@dataclass
class EffectiveTensors:
    """Slow-variable fields produced by cell solves.

    Arrays are indexed by slow point (a single entry when the medium carries
    no slow dependence): D_bar, G_bar, B_bar have shape (M, dim, dim) and
    pi_bar has shape (M,).
    """

    dim: int
    points: np.ndarray  # (M,) or (M, 2); single zero row when x-independent
    D_bar: np.ndarray
    G_bar: np.ndarray
    B_bar: np.ndarray
    pi_bar: np.ndarray
    ycells: int
    variant: str = "general"

    @property
    def x_independent(self):
        return self.points.shape[0] == 1

    def mobility_scalar(self, k=0):
        if self.dim != 1:
            raise ValueError("mobility_scalar applies to 1-d tensors")
        return float(self.B_bar[k, 0, 0])

    def flux_tensor(self, k=0):
        """D_bar + G_bar at slow index k (the homogenized conductance)."""
        return self.D_bar[k] + self.G_bar[k]

    def validate(self, mobility_bounds=None, density_bounds=None):
        for k in range(self.points.shape[0]):
            m = self.flux_tensor(k)
            if not np.allclose(m, m.T, rtol=0, atol=1e-10 * np.abs(m).max()):
                raise CellProblemError("effective flux tensor is not symmetric")
            eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
            if eigs.min() <= 0:
                raise CellProblemError(
                    "effective flux tensor is not positive definite "
                    "(discretization too coarse?)"
                )
            if mobility_bounds is not None and density_bounds is not None:
                c1, c2 = mobility_bounds
                mp, mbig = density_bounds
                lo, hi = mp / c2, mbig / c1
                if eigs.min() < lo * (1 - 1e-8) or eigs.max() > hi * (1 + 1e-8):
                    raise CellProblemError(
                        f"effective flux eigenvalues {eigs} leave [{lo}, {hi}]"
                    )
            recomputed = np.linalg.inv(m / self.pi_bar[k])
            if self.variant == "uniform":
                # B_bar was built from the unscaled flux so that pi0 cancels
                # bitwise; the recomputation round-trips through pi0
                if not np.allclose(recomputed, self.B_bar[k], rtol=1e-13, atol=0):
                    raise CellProblemError("stored B_bar fails the recomputation identity")
            elif not np.array_equal(recomputed, self.B_bar[k]):
                raise CellProblemError("stored B_bar fails the recomputation identity")


def _tensors_at(medium, x, ycells, tol):
    d = medium.conductivity_cells(x, ycells)
    sol = _solve_cell_from_coefficients(d, x, ycells, tol)
    vol = (1.0 / ycells) ** medium.dim
    if medium.dim == 1:
        d_bar = np.array([[np.sum(d) * vol]])
        g_bar = np.array([[np.sum(d * sol.grad[0]) * vol]])
    else:
        d_bar = np.sum(d, axis=(0, 1)) * vol
        g_bar = np.stack(
            [np.sum(np.einsum("ijab,ijb->ija", d, sol.grad[i]), axis=(0, 1)) * vol
             for i in range(2)],
            axis=-1,
        )
    pi_bar = float(average_pi(medium.density, x))
    if medium.density.variant == "uniform":
        # the cell problem ran on B^{-1} alone, so B_bar comes straight from
        # the unscaled flux and is bitwise independent of pi0; the stored
        # D_bar, G_bar carry the pi0 factor expected by flow consumers
        b_bar = np.linalg.inv(d_bar + g_bar)
        d_bar = pi_bar * d_bar
        g_bar = pi_bar * g_bar
    else:
        b_bar = np.linalg.inv((d_bar + g_bar) / pi_bar)
    return d_bar, g_bar, b_bar, pi_bar


def effective_tensors(medium, slow_points=None, ycells=64, tol=1e-13):
    """Cell-solve the effective fields D_bar, G_bar, B_bar, pi_bar.

    slow_points: array of slow grid points ((M,) in 1-d, (M, 2) in 2-d).
    Omit it for media without slow dependence; the tensors are then computed
    once.  The uniform density variant factors pi0 out of the cell problem,
    so its tensors never depend on pi0 (B_bar = (int B^{-1} (I + grad w))^{-1}).
    """
    _check_ycells(ycells)
    if isinstance(medium, tuple):
        medium = Medium(*medium)
    if slow_points is None:
        if medium.density.depends_on_x:
            raise CellProblemError(
                "medium depends on the slow variable; pass slow_points explicitly"
            )
        pts = np.zeros((1, medium.dim)) if medium.dim == 2 else np.zeros(1)
        xs = [0.0 if medium.dim == 1 else np.zeros(2)]
    else:
        pts = np.asarray(slow_points, dtype=np.float64)
        xs = list(pts) if medium.dim == 1 else [pts[k] for k in range(pts.shape[0])]
    n = len(xs)
    d_all = np.empty((n, medium.dim, medium.dim))
    g_all = np.empty((n, medium.dim, medium.dim))
    b_all = np.empty((n, medium.dim, medium.dim))
    p_all = np.empty(n)
    for k, x in enumerate(xs):
        d_all[k], g_all[k], b_all[k], p_all[k] = _tensors_at(medium, x, ycells, tol)
    out = EffectiveTensors(dim=medium.dim, points=pts, D_bar=d_all, G_bar=g_all,
                           B_bar=b_all, pi_bar=p_all, ycells=ycells,
                           variant=medium.density.variant)
    out.validate()
    return out


def effective_tensors_uniform_case(medium, slow_points=None, ycells=64, tol=1e-13):
    """Effective tensors for the vanishing-oscillation density variant.

    The cell problem runs on B^{-1} alone; the stationary factor pi0 scales
    D_bar and G_bar but cancels from B_bar exactly.
    """
    if medium.density.variant != "uniform":
        raise CellProblemError("effective_tensors_uniform_case needs a uniform-variant density")
    return effective_tensors(medium, slow_points=slow_points, ycells=ycells, tol=tol)


def effective_tensor_variational(medium, x=0.0, p=1.0, ycells=64, tol=1e-13):
    """Minimum of int <D(x,y)(grad v + p), grad v + p> dy over periodic v.

    Independent route to <(D_bar + G_bar) p, p>: a fresh solve with load
    direction p, evaluated through the energy rather than the tensors.
    """
    _check_ycells(ycells)
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if float(np.linalg.norm(p)) == 0.0:
        raise CellProblemError("direction p must be nonzero")
    d = medium.conductivity_cells(x, ycells)
    if medium.dim == 1:
        a_mat = _assemble_1d(d)
        b = _rhs_1d(d, p[0])
        w, _, _ = _solve_singular(a_mat, b, tol)
        return _energy_1d(d, w, p[0])
    a_mat = _assemble_2d(d)
    b = _rhs_2d(d, p)
    w, _, _ = _solve_singular(a_mat, b, tol)
    return _energy_2d(d, w.reshape(ycells, ycells), p)


def _energy_1d(d_elem, w, p):
    n = d_elem.size
    h = 1.0 / n
    g = (np.roll(w, -1) - w) / h + p
    return float(np.sum(d_elem * g * g) * h)


def _energy_2d(d_elem, w, p):
    n = d_elem.shape[0]
    h = 1.0 / n
    w0 = w
    w1 = np.roll(w, -1, axis=0)
    w2 = np.roll(np.roll(w, -1, axis=0), -1, axis=1)
    w3 = np.roll(w, -1, axis=1)
    total = 0.0
    for xi in _GAUSS:
        for eta in _GAUSS:
            gx = (-(1 - eta) * w0 + (1 - eta) * w1 + eta * w2 - eta * w3) / h + p[0]
            gy = (-(1 - xi) * w0 - xi * w1 + xi * w2 + (1 - xi) * w3) / h + p[1]
            total += 0.25 * np.sum(
                d_elem[..., 0, 0] * gx * gx
                + (d_elem[..., 0, 1] + d_elem[..., 1, 0]) * gx * gy
                + d_elem[..., 1, 1] * gy * gy
            )
    return float(total * h * h)


def closed_form_mobility_1d(medium, x=0.0):
    """1-d closed form B_bar(x) = pi_bar(x) * int B(y)/pi(x,y) dy.

    Serves as the independent oracle for the discrete cell solves; uses
    refining quadrature, with exact slab-wise integration for layered media.
    """
    if medium.dim != 1:
        raise CellProblemError("closed form applies to 1-d media only")
    density = medium.density
    mobility = medium.mobility
    pi_bar = average_pi(density, x)
    if density.variant == "uniform":
        # the oscillation has vanished in the limit: B_bar = int B dy
        if mobility.kind == "layered":
            return float(np.mean(mobility.layer_values))
        return periodic_average(lambda y: mobility.scalar_values(y))

    def one_over_pi(y):
        return 1.0 / density.values((np.asarray(x, dtype=np.float64),), (y,))

    if mobility.kind == "layered":
        vals = mobility.layer_values
        k = len(vals)
        total = 0.0
        for j, v in enumerate(vals):
            total += v * integrate_line(one_over_pi, j / k, (j + 1) / k, rel_tol=1e-13)
        return float(pi_bar * total)
    integrand = lambda y: mobility.scalar_values(y) * one_over_pi(y)
    return float(pi_bar * periodic_average(integrand))
