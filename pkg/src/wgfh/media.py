"""Oscillatory periodic media: mobility tensors B(y) and stationary densities pi(x, y).

A medium fixes the fast-scale structure of the flow.  Mobility tensors are
symmetric, 1-periodic and uniformly elliptic between declared bounds
C1 I <= B(y) <= C2 I; stationary densities are positive, 1-periodic in the
fast variable and may carry slow-variable dependence.  Dedicated parametric
families (constant, layered, checkerboard) exist so that discontinuity
placement is exact rather than squeezed through expressions.
"""

from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from .grids import Grid, harmonic_face_mean
from .linalg import spd_eigenvalues_2x2
from .quadrature import periodic_average


class MediumError(ValueError):
    pass


def _as_expr(source):
    if isinstance(source, ex.Expr):
        return source
    return ex.parse(source)


class MobilityTensor:
    """B(y): n x n symmetric field on the unit y-torus, n in {1, 2}.

    kind is one of "expr", "constant", "layered", "checkerboard".  The
    checkerboard family evaluates to beta * I almost everywhere; its skeleton
    value alpha lives on a null set and is carried as metadata for the
    geodesic lab.
    """

    def __init__(self, dim, bounds, kind, *, entries=None, values=None,
                 skeleton=None, interior=None):
        if dim not in (1, 2):
            raise MediumError(f"mobility dimension must be 1 or 2, got {dim}")
        c1, c2 = float(bounds[0]), float(bounds[1])
        if not (0.0 < c1 <= c2):
            raise MediumError(f"ellipticity bounds must satisfy 0 < C1 <= C2, got {bounds}")
        self.dim = dim
        self.bounds = (c1, c2)
        self.kind = kind
        self.entries = entries
        self.layer_values = values
        self.skeleton = skeleton
        self.interior = interior

    @classmethod
    def constant(cls, value, dim=1, bounds=None):
        m = np.atleast_2d(np.asarray(value, dtype=np.float64))
        if m.shape == (1, 1) and dim == 2:
            m = m[0, 0] * np.eye(2)
        if m.shape != (dim, dim):
            raise MediumError(f"constant mobility shape {m.shape} does not match dim {dim}")
        if not np.allclose(m, m.T):
            raise MediumError("constant mobility must be symmetric")
        eigs = np.linalg.eigvalsh(m)
        if bounds is None:
            bounds = (eigs.min(), eigs.max())
        entries = [[ex.Const(m[i, j]) for j in range(dim)] for i in range(dim)]
        return cls(dim, bounds, "constant", entries=entries)

    @classmethod
    def from_expr(cls, source, bounds, dim=1):
        """Entries from expression text: a single scalar for dim 1, a nested
        list [[b11, b12], [b21, b22]] in y1, y2 for dim 2."""
        if dim == 1:
            entries = [[_as_expr(source)]]
            allowed = {"y"}
        else:
            if not (isinstance(source, (list, tuple)) and len(source) == 2):
                raise MediumError("2-d mobility needs a 2x2 nested list of expressions")
            entries = [[_as_expr(source[i][j]) for j in range(2)] for i in range(2)]
            allowed = {"y1", "y2"}
        for row in entries:
            for e in row:
                extra = ex.free_variables(e) - allowed
                if extra:
                    raise MediumError(
                        f"mobility entries may only use {sorted(allowed)}, found {sorted(extra)}"
                    )
        return cls(dim, bounds, "expr", entries=entries)

    @classmethod
    def layered(cls, values, dim=1, bounds=None):
        """Piecewise constant in y1 on equal slabs [k/K, (k+1)/K)."""
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 2:
            raise MediumError("layered mobility needs at least two slab values")
        if np.any(vals <= 0):
            raise MediumError("layered mobility values must be positive")
        if bounds is None:
            bounds = (vals.min(), vals.max())
        return cls(dim, bounds, "layered", values=vals)

    @classmethod
    def checkerboard(cls, alpha, beta):
        """2-d medium worth beta in the open cells and alpha on the grid
        skeleton {y_i integer}; pointwise samples only ever see beta."""
        if alpha <= 0 or beta <= 0:
            raise MediumError("checkerboard weights must be positive")
        return cls(2, (min(alpha, beta), max(alpha, beta)), "checkerboard",
                   skeleton=float(alpha), interior=float(beta))

    @property
    def is_diagonal(self):
        if self.kind in ("layered", "checkerboard"):
            return True
        off = [self.entries[i][j] for i in range(self.dim) for j in range(self.dim) if i != j]
        return all(e == ex.Const(0.0) for e in off)

    def _layer_lookup(self, y1):
        k = np.floor(np.mod(y1, 1.0) * len(self.layer_values)).astype(int)
        k = np.minimum(k, len(self.layer_values) - 1)
        return self.layer_values[k]

    def scalar_values(self, y):
        """1-d mobility values B(y)."""
        if self.dim != 1:
            raise MediumError("scalar_values requires a 1-d mobility")
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "layered":
            return self._layer_lookup(y)
        return np.broadcast_to(
            ex.evaluate_array(self.entries[0][0], {"y": np.mod(y, 1.0)}), y.shape
        ).astype(np.float64, copy=True)

    def tensor_values(self, y1, y2=None):
        """Values with shape points.shape + (dim, dim)."""
        y1 = np.asarray(y1, dtype=np.float64)
        if self.dim == 1:
            return self.scalar_values(y1)[..., None, None]
        y2 = np.asarray(y2, dtype=np.float64)
        out = np.empty(y1.shape + (2, 2))
        if self.kind == "checkerboard":
            out[...] = 0.0
            out[..., 0, 0] = self.interior
            out[..., 1, 1] = self.interior
            return out
        if self.kind == "layered":
            v = self._layer_lookup(y1)
            out[...] = 0.0
            out[..., 0, 0] = v
            out[..., 1, 1] = v
            return out
        bind = {"y1": np.mod(y1, 1.0), "y2": np.mod(y2, 1.0)}
        for i in range(2):
            for j in range(2):
                out[..., i, j] = ex.evaluate_array(self.entries[i][j], bind)
        return out

    def validate(self, samples=64, tol=1e-9):
        """Check symmetry, ellipticity bounds and 1-periodicity by sampling."""
        c1, c2 = self.bounds
        pts = (np.arange(samples) + 0.5) / samples
        if self.dim == 1:
            vals = self.scalar_values(pts)
            if np.any(vals < c1 - tol * c1) or np.any(vals > c2 + tol * c2):
                raise MediumError(
                    f"mobility leaves declared bounds [{c1}, {c2}]: "
                    f"range [{vals.min():.6g}, {vals.max():.6g}]"
                )
            wrap = self.scalar_values(pts + 1.0)
            if not np.allclose(vals, wrap, rtol=1e-12, atol=0):
                raise MediumError("mobility is not 1-periodic")
            return
        g1, g2 = np.meshgrid(pts, pts, indexing="ij")
        vals = self.tensor_values(g1, g2)
        if not np.allclose(vals[..., 0, 1], vals[..., 1, 0], rtol=0, atol=tol * c2):
            raise MediumError("mobility tensor is not symmetric")
        eigs = spd_eigenvalues_2x2(vals)
        if np.any(eigs[..., 0] < c1 - tol * c1) or np.any(eigs[..., 1] > c2 + tol * c2):
            raise MediumError(
                f"mobility eigenvalues leave declared bounds [{c1}, {c2}]: "
                f"range [{eigs.min():.6g}, {eigs.max():.6g}]"
            )
        for shift in ((1.0, 0.0), (0.0, 1.0)):
            wrap = self.tensor_values(g1 + shift[0], g2 + shift[1])
            if not np.allclose(vals, wrap, rtol=1e-12, atol=0):
                raise MediumError("mobility is not 1-periodic")


class StationaryDensity:
    """pi(x, y) > 0, 1-periodic in y.

    variant "general":     pi given directly as an expression in x and y;
    variant "oscillatory": pi = pi0(x) + pi1(x, y), order-one oscillation;
    variant "uniform":     pi_eps = pi0(x) + eps * pi1(x, y), vanishing
                           oscillation, averaged limit exactly pi0.
    """

    def __init__(self, variant, dim=1, pi=None, pi0=None, pi1=None, bounds=None):
        if variant not in ("general", "oscillatory", "uniform"):
            raise MediumError(f"unknown stationary-density variant {variant!r}")
        self.variant = variant
        self.dim = dim
        self.pi = _as_expr(pi) if pi is not None else None
        self.pi0 = _as_expr(pi0) if pi0 is not None else None
        self.pi1 = _as_expr(pi1) if pi1 is not None else None
        if variant == "general" and self.pi is None:
            raise MediumError("general density needs the expression pi")
        if variant != "general" and self.pi0 is None:
            raise MediumError(f"{variant} density needs pi0")
        self.bounds = tuple(float(b) for b in bounds) if bounds is not None else None
        self._xnames = ("x",) if dim == 1 else ("x1", "x2")
        self._ynames = ("y",) if dim == 1 else ("y1", "y2")

    @classmethod
    def constant(cls, value=1.0, dim=1):
        return cls("general", dim=dim, pi=ex.Const(value), bounds=(value, value))

    @classmethod
    def general(cls, pi, dim=1, bounds=None):
        return cls("general", dim=dim, pi=pi, bounds=bounds)

    @classmethod
    def oscillatory(cls, pi0, pi1, dim=1, bounds=None):
        return cls("oscillatory", dim=dim, pi0=pi0, pi1=pi1, bounds=bounds)

    @classmethod
    def uniform(cls, pi0, pi1, dim=1, bounds=None):
        return cls("uniform", dim=dim, pi0=pi0, pi1=pi1, bounds=bounds)

    @property
    def depends_on_x(self):
        names = set()
        for e in (self.pi, self.pi0, self.pi1):
            if e is not None:
                names |= ex.free_variables(e)
        return bool(names & set(self._xnames))

    def _bind(self, xs, ys):
        bind = {}
        xs = np.broadcast_arrays(*[np.asarray(v, dtype=np.float64) for v in xs])
        ys = [np.mod(np.asarray(v, dtype=np.float64), 1.0) for v in ys]
        for name, v in zip(self._xnames, xs):
            bind[name] = v
        for name, v in zip(self._ynames, ys):
            bind[name] = v
        return bind

    def values(self, xs, ys, eps=None):
        """pi at slow points xs and fast points ys (tuples of arrays, one per
        axis; scalars broadcast).  `eps` is required for the uniform variant."""
        xs = xs if isinstance(xs, (tuple, list)) else (xs,)
        ys = ys if isinstance(ys, (tuple, list)) else (ys,)
        bind = self._bind(xs, ys)
        shape = np.broadcast_shapes(*[np.shape(v) for v in bind.values()])
        if self.variant == "general":
            out = ex.evaluate_array(self.pi, bind)
        elif self.variant == "oscillatory":
            out = ex.evaluate_array(self.pi0, bind) + ex.evaluate_array(self.pi1, bind)
        else:
            if eps is None:
                raise MediumError("uniform-variant density needs eps to be sampled")
            out = ex.evaluate_array(self.pi0, bind) + eps * ex.evaluate_array(self.pi1, bind)
        out = np.broadcast_to(out, shape).astype(np.float64, copy=True)
        if np.any(out <= 0.0):
            raise MediumError("stationary density is not positive at some sample points")
        return out

    def _slow_bindings(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.dim == 1:
            return {"x": x}
        if x.ndim == 0:
            return {"x1": x, "x2": x}
        return {"x1": x[..., 0], "x2": x[..., 1]}

    def average(self, x=0.0):
        """Averaged density: the y-average for the general and oscillatory
        variants, exactly pi0(x) for the uniform variant."""
        x = np.asarray(x, dtype=np.float64)
        if self.variant == "uniform":
            val = ex.evaluate_array(self.pi0, self._slow_bindings(x))
            return float(val) if val.ndim == 0 else np.asarray(val)
        if self.dim == 1:
            return periodic_average(lambda y: self.values((x,), (y,)))
        # 2-d torus average: midpoint product rule with doubling
        def avg2(n):
            c = (np.arange(n) + 0.5) / n
            g1, g2 = np.meshgrid(c, c, indexing="ij")
            if x.ndim == 0:
                xs = (np.full_like(g1, float(x)), np.full_like(g1, float(x)))
            else:
                xs = (np.full_like(g1, x[0]), np.full_like(g1, x[1]))
            return float(np.mean(self.values(xs, (g1, g2))))

        n, prev = 64, None
        for _ in range(7):
            val = avg2(n)
            if prev is not None and abs(val - prev) <= 1e-12 * max(abs(val), 1.0):
                return val
            prev, n = val, 2 * n
        return prev

    def validate(self, samples=64, eps=None):
        pts = (np.arange(samples) + 0.5) / samples
        if self.dim == 1:
            vals = self.values((pts,), (pts[::-1],), eps=eps)
        else:
            g1, g2 = np.meshgrid(pts, pts, indexing="ij")
            vals = self.values((g1, g2), (g2, g1), eps=eps)
        if self.bounds is not None:
            m, big = self.bounds
            if np.any(vals < m - 1e-9 * m) or np.any(vals > big + 1e-9 * big):
                raise MediumError(
                    f"density leaves declared bounds [{m}, {big}]: "
                    f"range [{vals.min():.6g}, {vals.max():.6g}]"
                )


def average_pi(density, x=0.0):
    """Averaged stationary density at slow point x (quadrature with doubling)."""
    return density.average(x)


@dataclass(frozen=True)
class Medium:
    """A mobility tensor paired with a stationary density."""

    mobility: MobilityTensor
    density: StationaryDensity

    def __post_init__(self):
        if self.mobility.dim != self.density.dim:
            raise MediumError(
                f"mobility dim {self.mobility.dim} != density dim {self.density.dim}"
            )

    @property
    def dim(self):
        return self.mobility.dim

    def conductivity_cells(self, x, ycells):
        """D(x, .) = pi(x, .) B^{-1} at the centers of a ycells grid on the
        y-torus; for the uniform variant the pi0 factor cancels from the cell
        problem, so D = B^{-1} there.

        Returns (N,) in 1-d, (N, N, 2, 2) in 2-d.
        """
        c = (np.arange(ycells) + 0.5) / ycells
        if self.dim == 1:
            b = self.mobility.scalar_values(c)
            if self.density.variant == "uniform":
                return 1.0 / b
            pi = self.density.values((np.asarray(x, dtype=np.float64),), (c,))
            return pi / b
        g1, g2 = np.meshgrid(c, c, indexing="ij")
        b = self.mobility.tensor_values(g1, g2)
        binv = _inv_2x2(b)
        if self.density.variant == "uniform":
            return binv
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        xs = (np.full_like(g1, x[0]), np.full_like(g1, x[-1]))
        pi = self.density.values(xs, (g1, g2))
        return pi[..., None, None] * binv


def _inv_2x2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


@dataclass
class SampledMedium:
    """Medium sampled onto a cell-centered torus grid for one eps.

    pi_cells holds pi_eps at cell centers; B_faces holds the axis-diagonal
    mobility entry on the faces of each axis (midpoint values for smooth
    families, harmonic means of abutting cell values for piecewise ones);
    B_cells keeps the full tensor at centers.  pibar_cells is the averaged
    density at the same centers, used by well-prepared initial data.
    """

    grid: Grid
    eps: float
    medium: Medium
    pi_cells: np.ndarray
    B_cells: np.ndarray
    B_faces: dict = field(repr=False)
    pibar_cells: np.ndarray = None

    @property
    def cells_per_period(self):
        return int(round(self.grid.cells * self.eps))


def sample_medium(mobility, density, eps, cells):
    """Sample (B_eps, pi_eps) on a `cells` grid, enforcing the resonance rule.

    Requires eps = 1/m for integer m, cells divisible by m, and at least 16
    cells per fast period so that discretization error stays subordinate to
    homogenization error in sweeps.
    """
    m = round(1.0 / eps)
    if m < 1 or abs(1.0 / eps - m) > 1e-9:
        raise MediumError(f"eps must be the reciprocal of an integer, got {eps}")
    if cells % m != 0:
        raise MediumError(f"cells={cells} is not divisible by 1/eps={m}")
    if cells // m < 16:
        raise MediumError(
            f"resonance rule violated: {cells}/{m} = {cells // m} < 16 cells per period"
        )
    medium = Medium(mobility, density)
    mobility.validate()
    density.validate(eps=eps if density.variant == "uniform" else None)
    grid = Grid(mobility.dim, cells)
    piecewise = mobility.kind in ("layered", "checkerboard")
    if mobility.dim == 1:
        x = grid.centers()
        y = x / eps
        b_cells = mobility.scalar_values(y)
        pi_cells = density.values((x,), (y,), eps=eps)
        if piecewise:
            b_face = harmonic_face_mean(b_cells)
        else:
            b_face = mobility.scalar_values(grid.faces() / eps)
        b_faces = {0: b_face}
        B_cells = b_cells
        pibar = _pibar_on_centers(density, (x,))
    else:
        x1, x2 = grid.centers()
        b_cells_t = mobility.tensor_values(x1 / eps, x2 / eps)
        pi_cells = density.values((x1, x2), (x1 / eps, x2 / eps), eps=eps)
        if piecewise:
            b_faces = {
                0: harmonic_face_mean(b_cells_t[..., 0, 0], axis=0),
                1: harmonic_face_mean(b_cells_t[..., 1, 1], axis=1),
            }
        else:
            f = grid.faces()
            c = grid.centers()[0][:, 0]
            fx1, fx2 = np.meshgrid(f, c, indexing="ij")
            gx1, gx2 = np.meshgrid(c, f, indexing="ij")
            b_faces = {
                0: mobility.tensor_values(fx1 / eps, fx2 / eps)[..., 0, 0],
                1: mobility.tensor_values(gx1 / eps, gx2 / eps)[..., 1, 1],
            }
        B_cells = b_cells_t
        pibar = _pibar_on_centers(density, (x1, x2))
    _check_sample_bounds(mobility, B_cells, pi_cells, density)
    return SampledMedium(grid=grid, eps=eps, medium=medium, pi_cells=pi_cells,
                         B_cells=B_cells, B_faces=b_faces, pibar_cells=pibar)


def _pibar_on_centers(density, centers):
    if not density.depends_on_x:
        val = density.average()
        return np.full_like(centers[0], val)
    if density.dim == 1:
        return np.array([density.average(x) for x in centers[0]])
    out = np.empty_like(centers[0])
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = density.average(np.array([centers[0][i, j], centers[1][i, j]]))
    return out


def _check_sample_bounds(mobility, b_cells, pi_cells, density):
    c1, c2 = mobility.bounds
    tol = 1e-9
    if mobility.dim == 1:
        bad_lo, bad_hi = b_cells.min() < c1 * (1 - tol), b_cells.max() > c2 * (1 + tol)
    else:
        eigs = spd_eigenvalues_2x2(b_cells)
        bad_lo, bad_hi = eigs.min() < c1 * (1 - tol), eigs.max() > c2 * (1 + tol)
    if bad_lo or bad_hi:
        raise MediumError(f"sampled mobility violates declared bounds [{c1}, {c2}]")
    if np.any(pi_cells <= 0):
        raise MediumError("sampled stationary density is not positive")
    if density.bounds is not None:
        m, big = density.bounds
        if pi_cells.min() < m * (1 - tol) or pi_cells.max() > big * (1 + tol):
            raise MediumError(f"sampled density violates declared bounds [{m}, {big}]")
