"""Transport metrics of the oscillatory medium and their limits.

Three scalings of distance live side by side in 1-d:

  * d_eps(x, y)   = int_x^y sqrt(B(z/eps)) dz, the geodesic distance of the
    medium at scale eps;
  * the minimum-path limit sqrt(C_bar) |x - y| with C_bar = (int sqrt(B))^2;
  * the flow-induced limit sqrt(B_bar) |x - y| with B_bar from the cell
    problem (B_bar = pi_bar int B / pi in closed form).

Cauchy-Schwarz gives C_bar <= B_bar with equality exactly when pi is a
constant multiple of sqrt(B): minimum paths see the medium pointwise while
the flow averages it.  Wasserstein distances over any of these costs reduce,
on the line, to quantile coupling through the isometry Phi(x) = int_0^x
sqrt(cost density): the monotone rearrangement is optimal and no coupling
solver is needed.  The 2-d checkerboard medium with a cheap skeleton gets a
lattice geodesic lab whose shortest paths converge to the Finsler limit
sqrt(alpha) |v|_1, a value the averaged tensor cannot see.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .cell import closed_form_mobility_1d
from .media import Medium
from .quadrature import integrate_line, periodic_average


class MetricError(ValueError):
    pass


def _sqrt_b_integral(mobility, a, b, eps=1.0):
    """int_a^b sqrt(B(z/eps)) dz, slab-exact for layered media."""
    if a == b:
        return 0.0
    if mobility.kind == "layered":
        vals = np.sqrt(mobility.layer_values)
        k = len(vals)
        # antiderivative of sqrt(B(y)) in the fast variable
        lo, hi = (a, b) if a <= b else (b, a)
        ylo, yhi = lo / eps, hi / eps

        def anti(y):
            full, frac = divmod(y, 1.0)
            idx = min(int(frac * k), k - 1)
            partial = vals[:idx].sum() / k + vals[idx] * (frac - idx / k)
            return full * vals.mean() + partial

        out = eps * (anti(yhi) - anti(ylo))
        return out if a <= b else -out
    return integrate_line(lambda z: np.sqrt(mobility.scalar_values(z / eps)), a, b,
                          n0=max(256, int(64 * abs(b - a) / eps + 2) // 2 * 2),
                          rel_tol=1e-12)


def d_eps_1d(mobility, eps, x, y, topology="line"):
    """Geodesic distance of the eps-medium between points of [0, 1]."""
    if mobility.dim != 1:
        raise MetricError("d_eps_1d needs a 1-d mobility")
    if topology == "line":
        return abs(_sqrt_b_integral(mobility, x, y, eps))
    if topology == "torus":
        direct = abs(_sqrt_b_integral(mobility, x, y, eps))
        lo, hi = min(x, y), max(x, y)
        around = abs(_sqrt_b_integral(mobility, 0.0, lo, eps)) + abs(
            _sqrt_b_integral(mobility, hi, 1.0, eps)
        )
        return min(direct, around)
    raise MetricError(f"unknown topology {topology!r}")


def d_gh_coefficient(mobility):
    """Minimum-path limit coefficient C_bar = (int_0^1 sqrt(B))^2."""
    if mobility.dim != 1:
        raise MetricError("d_gh_coefficient needs a 1-d mobility")
    if mobility.kind == "layered":
        root_mean = float(np.mean(np.sqrt(mobility.layer_values)))
    else:
        root_mean = periodic_average(lambda y: np.sqrt(mobility.scalar_values(y)))
    return root_mean**2


def d_bar(b_bar, x, y):
    """Flow-induced distance sqrt(<B_bar (y-x), y-x>); b_bar is a scalar in
    1-d or a (2, 2) tensor."""
    b = np.atleast_2d(np.asarray(b_bar, dtype=np.float64))
    dx = np.atleast_1d(np.asarray(y, dtype=np.float64) - np.asarray(x, dtype=np.float64))
    if b.shape != (dx.size, dx.size):
        raise MetricError(f"tensor shape {b.shape} does not match points of dim {dx.size}")
    return float(np.sqrt(dx @ b @ dx))


class TransportCost:
    """Isometry map Phi turning a 1-d ground cost into a Euclidean one."""

    def __init__(self, name, phi):
        self.name = name
        self.phi = phi

    @classmethod
    def euclidean(cls):
        return cls("euclidean", lambda x: np.asarray(x, dtype=np.float64))

    @classmethod
    def from_eps(cls, mobility, eps, table_cells=None):
        """Phi_eps(x) = int_0^x sqrt(B_eps): tabulated per-cell with midpoint
        increments (slab-exact for layered media), then interpolated."""
        m = round(1.0 / eps)
        if abs(1.0 / eps - m) > 1e-9:
            raise MetricError(f"eps must be the reciprocal of an integer, got {eps}")
        n = table_cells or max(1024, 64 * m)
        n = ((n + m - 1) // m) * m  # commensurate with the period
        nodes = np.linspace(0.0, 1.0, n + 1)
        mids = (nodes[:-1] + nodes[1:]) / 2
        inc = np.sqrt(mobility.scalar_values(mids / eps)) / n
        table = np.concatenate([[0.0], np.cumsum(inc)])
        return cls(f"d_eps({eps})", lambda x: np.interp(x, nodes, table))

    @classmethod
    def gromov_hausdorff(cls, mobility):
        root = np.sqrt(d_gh_coefficient(mobility))
        return cls("d_gh", lambda x: root * np.asarray(x, dtype=np.float64))

    @classmethod
    def induced(cls, b_bar):
        root = float(np.sqrt(b_bar))
        return cls("d_bar", lambda x: root * np.asarray(x, dtype=np.float64))


def _quantiles(rho, levels):
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise MetricError("densities must be positive")
    n = rho.size
    mass = rho.sum() / n
    if abs(mass - 1.0) > 1e-8:
        raise MetricError(f"density is not normalized: total mass {mass}")
    nodes = np.linspace(0.0, 1.0, n + 1)
    cdf = np.concatenate([[0.0], np.cumsum(rho) / (n * mass)])
    cdf[-1] = 1.0
    return np.interp(levels, cdf, nodes)


def wasserstein_1d(rho0, rho1, cost, levels_per_cell=8):
    """Transport distance between cell-averaged densities on [0, 1].

    W^2 = int_0^1 (Phi(Q_0(u)) - Phi(Q_1(u)))^2 du with Q_i the quantile
    functions (piecewise-linear CDF inversion) and Phi the cost's isometry;
    the monotone coupling is optimal for these convex costs.  Returns W.
    """
    rho0 = np.asarray(rho0, dtype=np.float64)
    rho1 = np.asarray(rho1, dtype=np.float64)
    k = levels_per_cell * max(rho0.size, rho1.size)
    u = (np.arange(k) + 0.5) / k
    q0 = _quantiles(rho0, u)
    q1 = _quantiles(rho1, u)
    diff = cost.phi(q0) - cost.phi(q1)
    return float(np.sqrt(np.mean(diff**2)))


@dataclass
class MetricReport1D:
    """Side-by-side coefficients of the three limiting metrics."""

    c_bar: float
    b_bar: float
    gap: float
    equality: bool
    eps_list: list = field(default_factory=list)
    phi_tables: dict = field(default_factory=dict)  # eps -> TransportCost


def gap_report(medium, eps_list=()):
    """Coefficient comparison for a 1-d medium with y-only density.

    equality is declared when pi / sqrt(B) is constant to 1e-10 in relative
    sup norm, the exact condition for the minimum-path and flow-induced
    limits to agree.
    """
    if isinstance(medium, tuple):
        medium = Medium(*medium)
    if medium.dim != 1:
        raise MetricError("gap_report applies to 1-d media")
    if medium.density.depends_on_x:
        raise MetricError("gap_report needs a density without slow dependence")
    c_bar = d_gh_coefficient(medium.mobility)
    b_bar = closed_form_mobility_1d(medium)
    y = (np.arange(8192) + 0.5) / 8192
    if medium.density.variant == "uniform":
        # the oscillation vanishes in the limit: compare against pi0 alone
        pi_vals = np.full_like(y, medium.density.average(0.0))
    else:
        pi_vals = medium.density.values((0.0,), (y,))
    ratio = pi_vals / np.sqrt(medium.mobility.scalar_values(y))
    mean = float(ratio.mean())
    equality = float(np.abs(ratio - mean).max()) / abs(mean) < 1e-10
    tables = {eps: TransportCost.from_eps(medium.mobility, eps) for eps in eps_list}
    return MetricReport1D(c_bar=c_bar, b_bar=b_bar, gap=b_bar - c_bar,
                          equality=equality, eps_list=list(eps_list), phi_tables=tables)


@dataclass
class GeodesicGrid2D:
    """Lattice geodesic lab for the skeleton-checkerboard medium.

    Nodes cover [0, 1]^2 with spacing at most eps/8; edges along the skeleton
    lines {z_i in eps Z} weigh sqrt(alpha) per unit length, interior edges
    sqrt(beta).  The skeleton has measure zero, so only the graph sees it.
    """

    eps: float
    alpha: float
    beta: float
    spacing: float = None
    source: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise MetricError("checkerboard weights must be positive")
        m = round(1.0 / self.eps)
        if abs(1.0 / self.eps - m) > 1e-9:
            raise MetricError("eps must be the reciprocal of an integer")
        if self.spacing is None:
            self.spacing = self.eps / 8
        per = self.eps / self.spacing
        if abs(per - round(per)) > 1e-9 or round(per) < 8:
            raise MetricError("node spacing must divide eps with at least 8 nodes per cell")
        self.per_cell = int(round(per))
        self.side = int(round(1.0 / self.spacing))

    def node_index(self, point):
        i = round(point[0] / self.spacing)
        j = round(point[1] / self.spacing)
        if not (0 <= i <= self.side and 0 <= j <= self.side):
            raise MetricError(f"point {point} outside the unit square")
        if abs(i * self.spacing - point[0]) + abs(j * self.spacing - point[1]) > 1e-9:
            raise MetricError(f"point {point} is not a lattice node at spacing {self.spacing}")
        return i * (self.side + 1) + j

    def graph(self):
        n1 = self.side + 1
        ii, jj = np.meshgrid(np.arange(n1), np.arange(n1), indexing="ij")
        on_skeleton_row = (jj % self.per_cell) == 0  # lines z2 = const in eps Z
        on_skeleton_col = (ii % self.per_cell) == 0
        wa, wb = np.sqrt(self.alpha) * self.spacing, np.sqrt(self.beta) * self.spacing
        rows = []
        cols = []
        vals = []
        # horizontal edges (i, j) - (i+1, j): skeleton when the row z2 = j h
        # lies on a lattice line
        src = (ii[:-1, :] * n1 + jj[:-1, :]).ravel()
        dst = (ii[1:, :] * n1 + jj[1:, :]).ravel()
        w = np.where(on_skeleton_row[:-1, :].ravel(), wa, wb)
        rows.append(src), cols.append(dst), vals.append(w)
        # vertical edges (i, j) - (i, j+1)
        src = (ii[:, :-1] * n1 + jj[:, :-1]).ravel()
        dst = (ii[:, 1:] * n1 + jj[:, 1:]).ravel()
        w = np.where(on_skeleton_col[:, :-1].ravel(), wa, wb)
        rows.append(src), cols.append(dst), vals.append(w)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        n = n1 * n1
        return sp.csr_matrix((v, (r, c)), shape=(n, n))


def checkerboard_geodesic(grid, target):
    """Shortest-path length from the grid source to the target point."""
    g = grid.graph()
    src = grid.node_index(grid.source)
    dist = _csgraph_dijkstra(g, directed=False, indices=src)
    out = float(dist[grid.node_index(target)])
    if not np.isfinite(out):
        raise MetricError("geodesic grid is disconnected; this is a construction bug")
    return out


def finsler_limit(alpha, source, target):
    """Limit value sqrt(alpha) * |target - source|_1 of the skeleton medium."""
    d = np.abs(np.asarray(target, dtype=np.float64) - np.asarray(source, dtype=np.float64))
    return float(np.sqrt(alpha) * d.sum())
