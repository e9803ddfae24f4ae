"""Oscillatory Dirichlet energies, their effective limits, and recovery fields.

The functional F_eps(v) = int <A(x/eps) grad v, grad v> over the unit box is
minimized subject to boundary data, compared against the effective value
computed from cell problems, and attained by explicit recovery fields

    v_eps = affine_j + eps * cutoff_j * |p_j| * corrector_j(x / eps)

glued over an axis-aligned partition: the cutoff vanishes near piece
boundaries (collar width between d1*eps and d2*eps) so the field stays
globally continuous while its gradient carries the optimal oscillation
inside each piece.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import cell as cell_mod
from .linalg import SolverError, cg


class GammaError(RuntimeError):
    pass


class PiecewiseAffine:
    """Continuous piecewise-affine data over stripes [b_j, b_{j+1}] x [0,1]^..

    slopes has shape (pieces, dim); continuity across stripe faces forces a
    common transverse slope, so only the first component may jump.  Offsets
    are chained from `base` = value at the origin.
    """

    def __init__(self, breaks, slopes, base=0.0, dim=1):
        self.breaks = np.asarray(breaks, dtype=np.float64)
        slopes = np.asarray(slopes, dtype=np.float64)
        if slopes.ndim == 1:
            slopes = slopes[:, None]
        self.slopes = slopes
        self.dim = dim
        self.base = float(base)
        if self.breaks[0] != 0.0 or self.breaks[-1] != 1.0 or np.any(np.diff(self.breaks) <= 0):
            raise GammaError("breaks must increase from 0 to 1")
        if slopes.shape != (self.breaks.size - 1, dim):
            raise GammaError(f"need one slope of dim {dim} per piece")
        if dim > 1 and not np.allclose(slopes[:, 1:], slopes[0, 1:], rtol=0, atol=0):
            raise GammaError("transverse slope components must match for continuity")
        # offsets chained so the restriction agrees on stripe faces
        self.offsets = np.empty(slopes.shape[0])
        self.offsets[0] = self.base
        for j in range(1, slopes.shape[0]):
            b = self.breaks[j]
            self.offsets[j] = (self.offsets[j - 1]
                               + (self.slopes[j - 1, 0] - self.slopes[j, 0]) * b)

    @property
    def pieces(self):
        return self.slopes.shape[0]

    def piece_of(self, x1):
        idx = np.searchsorted(self.breaks, x1, side="right") - 1
        return np.clip(idx, 0, self.pieces - 1)

    def values(self, *coords):
        x1 = np.asarray(coords[0], dtype=np.float64)
        j = self.piece_of(x1)
        out = self.offsets[j] + self.slopes[j, 0] * x1
        for a in range(1, self.dim):
            out = out + self.slopes[0, a] * np.asarray(coords[a], dtype=np.float64)
        return out

    def max_slope(self):
        return float(np.max(np.linalg.norm(self.slopes, axis=1)))

    def min_piece_width(self):
        return float(np.min(np.diff(self.breaks)))


def oscillatory_weight(medium, eps, cells):
    """A(x/eps) = pi B^{-1} at the element midpoints of a `cells` grid on the
    unit box; the density must carry no slow dependence."""
    if medium.density.depends_on_x:
        raise GammaError("oscillatory weights need a density without slow dependence")
    mids = (np.arange(cells) + 0.5) / cells
    if medium.dim == 1:
        return _conductivity_1d(medium, mids / eps)
    g1, g2 = np.meshgrid(mids, mids, indexing="ij")
    return _conductivity_2d(medium, g1 / eps, g2 / eps)


def _conductivity_1d(medium, y):
    b = medium.mobility.scalar_values(y)
    if medium.density.variant == "uniform":
        return 1.0 / b
    pi = medium.density.values((np.zeros_like(y),), (y,))
    return pi / b


def _conductivity_2d(medium, y1, y2):
    from .media import _inv_2x2

    binv = _inv_2x2(medium.mobility.tensor_values(y1, y2))
    if medium.density.variant == "uniform":
        return binv
    pi = medium.density.values((np.zeros_like(y1), np.zeros_like(y1)), (y1, y2))
    return pi[..., None, None] * binv


@dataclass
class DirichletProblem:
    """Weighted Dirichlet energy on the unit box with piecewise-affine data.

    mode "dirichlet" pins the boundary to the data; mode "periodic-affine"
    minimizes over data + periodic fields on one period (the variational
    route to the effective tensor).  weight_elems holds the weight at element
    midpoints; f_weight, if given, multiplies it piecewise per data piece.
    """

    dim: int
    cells: int
    weight_elems: np.ndarray
    data: PiecewiseAffine
    mode: str = "dirichlet"
    f_weight: np.ndarray = None  # one factor per data piece

    def element_weights(self):
        w = self.weight_elems
        if self.f_weight is None:
            return w
        mids = (np.arange(self.cells) + 0.5) / self.cells
        piece = self.data.piece_of(mids)
        factor = np.asarray(self.f_weight, dtype=np.float64)[piece]
        if self.dim == 1:
            return w * factor
        return w * factor[:, None, None, None]


def minimize_dirichlet(problem):
    """Minimize the weighted Dirichlet energy; returns (nodal field, energy)."""
    if problem.mode == "periodic-affine":
        return _minimize_periodic_affine(problem)
    if problem.mode != "dirichlet":
        raise GammaError(f"unknown mode {problem.mode!r}")
    if problem.dim == 1:
        return _minimize_dirichlet_1d(problem)
    return _minimize_dirichlet_2d(problem)


def _minimize_periodic_affine(problem):
    if problem.data.pieces != 1:
        raise GammaError("periodic-affine mode needs single-piece (globally affine) data")
    p = problem.data.slopes[0]
    a = problem.element_weights()
    n = problem.cells
    if problem.dim == 1:
        mat = cell_mod._assemble_1d(a)
        b = cell_mod._rhs_1d(a, p[0])
        w, _, _ = cell_mod._solve_singular(mat, b)
        return w, cell_mod._energy_1d(a, w, p[0])
    mat = cell_mod._assemble_2d(a)
    b = cell_mod._rhs_2d(a, p)
    w, _, _ = cell_mod._solve_singular(mat, b)
    w2 = w.reshape(n, n)
    return w2, cell_mod._energy_2d(a, w2, p)


def _minimize_dirichlet_1d(problem):
    n = problem.cells
    h = 1.0 / n
    a = problem.element_weights() / h  # P1 stiffness scale
    nodes = np.linspace(0.0, 1.0, n + 1)
    u = problem.data.values(nodes).astype(np.float64)
    if n > 1:
        banded = np.zeros((3, n - 1))
        banded[1] = a[:-1] + a[1:]
        banded[0, 1:] = -a[1:-1]
        banded[2, :-1] = -a[1:-1]
        rhs = np.zeros(n - 1)
        rhs[0] += a[0] * u[0]
        rhs[-1] += a[-1] * u[-1]
        u[1:-1] = sla.solve_banded((1, 1), banded, rhs)
    grad = (u[1:] - u[:-1]) / h
    energy = float(np.sum(problem.element_weights() * grad * grad) * h)
    return u, energy


def _minimize_dirichlet_2d(problem):
    n = problem.cells
    n1 = n + 1
    d = problem.element_weights()
    # Q1 assembly over the non-periodic node grid
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    nodes = [
        (ii * n1 + jj).ravel(),
        ((ii + 1) * n1 + jj).ravel(),
        ((ii + 1) * n1 + jj + 1).ravel(),
        (ii * n1 + jj + 1).ravel(),
    ]
    d11 = d[..., 0, 0].ravel()
    d12 = 0.5 * (d[..., 0, 1] + d[..., 1, 0]).ravel()
    d22 = d[..., 1, 1].ravel()
    ne = n * n
    rows = np.empty(16 * ne, dtype=np.int64)
    cols = np.empty(16 * ne, dtype=np.int64)
    vals = np.empty(16 * ne)
    k = 0
    for a in range(4):
        for b in range(4):
            coeff = (d11 * cell_mod._KXX[a, b]
                     + d12 * (cell_mod._KXY[a, b] + cell_mod._KXY[b, a])
                     + d22 * cell_mod._KYY[a, b])
            rows[k * ne:(k + 1) * ne] = nodes[a]
            cols[k * ne:(k + 1) * ne] = nodes[b]
            vals[k * ne:(k + 1) * ne] = coeff
            k += 1
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n1 * n1, n1 * n1))
    g1, g2 = np.meshgrid(np.linspace(0, 1, n1), np.linspace(0, 1, n1), indexing="ij")
    u = problem.data.values(g1, g2).ravel()
    boundary = np.zeros(n1 * n1, dtype=bool)
    idx = np.arange(n1 * n1).reshape(n1, n1)
    boundary[idx[0, :]] = boundary[idx[-1, :]] = True
    boundary[idx[:, 0]] = boundary[idx[:, -1]] = True
    interior = ~boundary
    rhs = -mat.dot(u)
    a_int = mat[interior][:, interior]
    try:
        sol, _ = cg(a_int.dot, rhs[interior], tol=1e-12, diag=a_int.diagonal(),
                    maxiter=200 * n)
    except SolverError as exc:
        raise GammaError(f"Dirichlet solve failed: {exc}") from exc
    u = u.copy()
    u[interior] += sol
    u2 = u.reshape(n1, n1)
    energy = _q1_energy_box(d, u2)
    return u2, energy


def _q1_energy_box(d_elems, u_nodes):
    n = d_elems.shape[0]
    h = 1.0 / n
    w0 = u_nodes[:-1, :-1]
    w1 = u_nodes[1:, :-1]
    w2 = u_nodes[1:, 1:]
    w3 = u_nodes[:-1, 1:]
    total = 0.0
    for xi in cell_mod._GAUSS:
        for eta in cell_mod._GAUSS:
            gx = (-(1 - eta) * w0 + (1 - eta) * w1 + eta * w2 - eta * w3) / h
            gy = (-(1 - xi) * w0 - xi * w1 + xi * w2 + (1 - xi) * w3) / h
            total += 0.25 * np.sum(
                d_elems[..., 0, 0] * gx * gx
                + (d_elems[..., 0, 1] + d_elems[..., 1, 0]) * gx * gy
                + d_elems[..., 1, 1] * gy * gy
            )
    return float(total * h * h)


def dirichlet_energy(v_nodes, weight_elems, dim):
    """Energy of a nodal field on the unit box against element weights."""
    if dim == 1:
        n = weight_elems.shape[0]
        h = 1.0 / n
        grad = np.diff(v_nodes) / h
        return float(np.sum(weight_elems * grad * grad) * h)
    return _q1_energy_box(weight_elems, v_nodes)


def effective_energy(data, flux_tensor, f_weight=None):
    """Limit energy sum_j <A_bar p_j, p_j> |C_j| (times f weights if given)."""
    widths = np.diff(data.breaks)
    total = 0.0
    for j in range(data.pieces):
        p = data.slopes[j]
        val = float(p @ flux_tensor @ p) if data.dim > 1 else float(flux_tensor * p[0] ** 2)
        w = 1.0 if f_weight is None else float(f_weight[j])
        total += val * widths[j] * w
    return total


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass
class RecoverySequence:
    """Recovery field for one eps: affine data plus cut-off fast correctors."""

    eps: float
    data: PiecewiseAffine
    medium: object
    d1: float
    d2: float
    correctors: list = field(repr=False, default_factory=list)  # per piece
    ycells: int = 256

    def _corrector_interp(self, j, y):
        w = self.correctors[j]
        n = w.size
        nodes = np.arange(n + 1) / n
        tab = np.concatenate([w, [w[0]]])
        return np.interp(np.mod(y, 1.0), nodes, tab)

    def cutoff(self, j, x1, *rest):
        lo, hi = self.data.breaks[j], self.data.breaks[j + 1]
        dist = np.minimum(x1 - lo, hi - x1)
        for a, c in enumerate(rest):
            dist = np.minimum(dist, np.minimum(c, 1.0 - c))
        return _smoothstep((dist - self.d1 * self.eps) / ((self.d2 - self.d1) * self.eps))

    def values(self, *coords):
        x1 = np.asarray(coords[0], dtype=np.float64)
        out = self.data.values(*coords).astype(np.float64)
        j_idx = self.data.piece_of(x1)
        for j in range(self.data.pieces):
            mask = j_idx == j
            if not np.any(mask):
                continue
            p = self.data.slopes[j, 0]
            eta = self.cutoff(j, x1[mask], *[np.asarray(c)[mask] for c in coords[1:]])
            w = self._corrector_interp(j, x1[mask] / self.eps)
            out[mask] += self.eps * eta * p * w
        return out

    def gradient_bound_constant(self, samples=4096):
        """max |grad recovery| / max |grad data| over a fine scan (1-d)."""
        x = np.linspace(0.0, 1.0, samples + 1)
        v = self.values(x)
        g = np.abs(np.diff(v) * samples).max()
        return float(g / self.data.max_slope())


def build_recovery(data, medium, eps, d1=2.0, d2=4.0, ycells=256):
    """Solve the per-piece directional correctors and assemble the recovery
    field.  Fails if the collar d2*eps does not fit inside every piece."""
    if not (0 < d1 < d2):
        raise GammaError("need 0 < d1 < d2")
    if d2 * eps >= data.min_piece_width() / 2:
        raise GammaError(
            f"partition too fine for eps: collar {d2 * eps} exceeds half piece width"
        )
    if medium.dim != 1:
        raise GammaError("recovery construction is implemented for 1-d media")
    if medium.density.depends_on_x:
        raise GammaError("recovery construction needs a density without slow dependence")
    sol = cell_mod.solve_cell(medium, x=0.0, ycells=ycells)
    # the corrector is linear in the direction, so one solve serves all pieces
    correctors = [sol.w[0] for _ in range(data.pieces)]
    return RecoverySequence(eps=eps, data=data, medium=medium, d1=d1, d2=d2,
                            correctors=correctors, ycells=ycells)


def recovery_energy(rec, cells, f_weight=None):
    """F_eps of the recovery field on a `cells` evaluation grid."""
    medium = rec.medium
    a = _conductivity_1d(medium, ((np.arange(cells) + 0.5) / cells) / rec.eps)
    problem_weights = a
    if f_weight is not None:
        mids = (np.arange(cells) + 0.5) / cells
        piece = rec.data.piece_of(mids)
        problem_weights = a * np.asarray(f_weight, dtype=np.float64)[piece]
    nodes = np.linspace(0.0, 1.0, cells + 1)
    v = rec.values(nodes)
    return dirichlet_energy(v, problem_weights, dim=1)


@dataclass
class GammaReport:
    rows: list                 # (eps, F_eps, F_limit, deficit)
    deficits_decreasing: bool


def gamma_liminf_check(entries, limit_value, medium=None):
    """Lower-bound bookkeeping along a refining sequence.

    entries are (eps, field) pairs with nodal fields on their own grids
    (energies are evaluated against the eps-oscillatory weight of `medium`),
    or precomputed (eps, F_eps) pairs when no medium is given.  Deficits
    max(0, F_limit - F_eps) must shrink as eps does.
    """
    rows = []
    deficits = []
    for eps, item in entries:
        if medium is not None:
            v = np.asarray(item, dtype=np.float64)
            cells = v.shape[0] - 1
            a = oscillatory_weight(medium, eps, cells)
            f_eps = dirichlet_energy(v, a, dim=medium.dim)
        else:
            f_eps = float(item)
        deficit = max(0.0, limit_value - f_eps)
        rows.append((eps, f_eps, limit_value, deficit))
        deficits.append(deficit)
    dec = all(b <= a + 1e-12 for a, b in zip(deficits, deficits[1:]))
    return GammaReport(rows=rows, deficits_decreasing=dec)
