"""Structure-preserving finite-volume evolution of the oscillatory flow.

The density rho relaxes by dt rho = div(pi B^{-1} grad f), f = rho / pi.
Implicit Euler steps are taken in the f variable, where the generator is
self-adjoint in the pi-weighted inner product:

    (Pi - dt L_h) f_next = Pi f_prev,     L_h f = div_h(c grad_h f),

with face conductances c given by harmonic means of the cell values of
pi B^{-1}.  The step matrix is an M-matrix, so mass conservation, positivity
and the discrete maximum principle hold exactly; both are asserted every
step.  The same machinery drives the homogenized system by feeding the
effective flux tensor D_bar + G_bar as the conductance field and pi_bar as
the weight.

The 2-d path supports diagonal mobility tensors only; full tensors are the
business of the cell-problem solver.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import expressions as ex
from .grids import Grid, face_divergence, forward_diff, harmonic_face_mean
from .linalg import SolverError, cg


class FlowError(RuntimeError):
    pass


@dataclass
class DensityState:
    """Cell-averaged density with its weight ratio f = rho / pi."""

    grid: Grid
    rho: np.ndarray
    f: np.ndarray
    t: float

    @property
    def mass(self):
        return float(self.rho.sum() * self.grid.cell_volume)


@dataclass
class DiagnosticsRecord:
    t: float
    f_min: float
    f_max: float
    norm2_pi: float       # ||f||^2 weighted by pi
    dirichlet: float      # int <grad f, c grad f>
    dtf_norm2: float      # ||(f_k - f_{k-1})/dt||^2 weighted; 0 at the start
    mass: float


@dataclass
class InitialConstants:
    """Size of the initial data and its generator in the weighted norms."""

    a0: float  # ||f_0||^2_pi
    b0: float  # Dirichlet energy of f_0
    c0: float  # ||L f_0||^2_pi
    d0: float  # Dirichlet energy of L f_0


class FlowSystem:
    """Grid, weights and face conductances for one flow (eps-level or limit)."""

    def __init__(self, grid, pi_cells, cond_faces, inv_mobility_cells, pibar_cells=None,
                 eps=None, medium=None):
        self.grid = grid
        self.dim = grid.dim
        self.pi_cells = np.asarray(pi_cells, dtype=np.float64)
        self.cond_faces = {a: np.asarray(c, dtype=np.float64) for a, c in cond_faces.items()}
        # axis-diagonal entries of B^{-1} at cells; the dissipation ledger
        # builds its rho-weighted face mobilities from these
        self.inv_mobility_cells = {
            a: np.asarray(v, dtype=np.float64) for a, v in inv_mobility_cells.items()
        }
        self.pibar_cells = (np.asarray(pibar_cells, dtype=np.float64)
                            if pibar_cells is not None else self.pi_cells)
        self.eps = eps
        self.medium = medium
        for c in self.cond_faces.values():
            if np.any(c <= 0):
                raise FlowError("face conductances must be positive")
        if np.any(self.pi_cells <= 0):
            raise FlowError("cell weights must be positive")
        self._steppers = {}

    @classmethod
    def from_sampled(cls, sampled):
        """Assemble the eps-level system from a sampled medium."""
        if sampled.grid.dim == 1:
            inv_mob = {0: 1.0 / sampled.B_cells}
            cond = {0: harmonic_face_mean(sampled.pi_cells * inv_mob[0])}
        else:
            b = sampled.B_cells
            off = max(abs(b[..., 0, 1]).max(), abs(b[..., 1, 0]).max())
            if off > 1e-12 * abs(b).max():
                raise FlowError("the 2-d flow solver requires a diagonal mobility tensor")
            inv_mob = {0: 1.0 / b[..., 0, 0], 1: 1.0 / b[..., 1, 1]}
            cond = {
                0: harmonic_face_mean(sampled.pi_cells * inv_mob[0], axis=0),
                1: harmonic_face_mean(sampled.pi_cells * inv_mob[1], axis=1),
            }
        return cls(sampled.grid, sampled.pi_cells, cond, inv_mob,
                   pibar_cells=sampled.pibar_cells, eps=sampled.eps,
                   medium=sampled.medium)

    @classmethod
    def from_effective(cls, eff, grid):
        """Assemble the homogenized system, piecewise constant per slow cell."""
        flux = eff.D_bar + eff.G_bar
        if eff.x_independent:
            if grid.dim == 1:
                pi = np.full(grid.shape, eff.pi_bar[0])
                cond = {0: np.full(grid.shape, flux[0, 0, 0])}
            else:
                _check_diag(flux[0])
                pi = np.full(grid.shape, eff.pi_bar[0])
                cond = {
                    0: np.full(grid.shape, flux[0, 0, 0]),
                    1: np.full(grid.shape, flux[0, 1, 1]),
                }
            inv_mob = {a: c / pi for a, c in cond.items()}  # B_bar^{-1} diagonal
            return cls(grid, pi, cond, inv_mob, eps=None)
        if grid.dim != 1:
            raise FlowError("slow-varying effective systems are supported in 1-d only")
        centers = grid.centers()
        if eff.points.shape[0] != grid.cells or np.abs(eff.points - centers).max() > 1e-12:
            raise FlowError("effective tensors must be sampled at the slow-grid cell centers")
        d_cells = flux[:, 0, 0]
        pi = eff.pi_bar.copy()
        return cls(grid, pi, {0: harmonic_face_mean(d_cells)}, {0: d_cells / pi}, eps=None)

    # -- quadratic forms and operators -------------------------------------

    def weighted_norm2(self, u):
        return float(np.sum(self.pi_cells * u * u) * self.grid.cell_volume)

    def inner_pi(self, u, v):
        return float(np.sum(self.pi_cells * u * v) * self.grid.cell_volume)

    def dirichlet_form(self, f):
        """int <grad f, c grad f> with the face conductances of this system."""
        h = self.grid.h
        total = 0.0
        for axis, c in self.cond_faces.items():
            df = forward_diff(f, axis=axis)
            total += float(np.sum(c * df * df))
        return total * self.grid.cell_volume / h**2

    def flux_divergence(self, f):
        """div_h(c grad_h f): the instantaneous generator of rho (cell values)."""
        h = self.grid.h
        out = np.zeros_like(f)
        for axis, c in self.cond_faces.items():
            out += face_divergence(c * forward_diff(f, axis=axis), axis=axis)
        return out / h**2

    def backward_operator(self, f):
        """L f = (1/pi) div_h(c grad_h f)."""
        return self.flux_divergence(f) / self.pi_cells

    def state_from_f(self, f, t=0.0):
        f = np.asarray(f, dtype=np.float64)
        rho = self.pi_cells * f
        return DensityState(grid=self.grid, rho=rho, f=f, t=t)

    def state_from_rho(self, rho, t=0.0, normalize=False):
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho <= 0):
            raise FlowError("density must be positive")
        if normalize:
            rho = rho / (rho.sum() * self.grid.cell_volume)
        return DensityState(grid=self.grid, rho=rho, f=rho / self.pi_cells, t=t)

    def stationary_state(self):
        """The normalized stationary density: f constant."""
        z = self.pi_cells.sum() * self.grid.cell_volume
        return self.state_from_f(np.full(self.grid.shape, 1.0 / z))

    def initial_constants(self, f0):
        lf0 = self.backward_operator(f0)
        return InitialConstants(
            a0=self.weighted_norm2(f0),
            b0=self.dirichlet_form(f0),
            c0=self.weighted_norm2(lf0),
            d0=self.dirichlet_form(lf0),
        )

    def stepper(self, dt):
        key = float(dt)
        if key not in self._steppers:
            self._steppers[key] = _ImplicitStepper(self, key)
        return self._steppers[key]


def _check_diag(m):
    if abs(m[0, 1]) + abs(m[1, 0]) > 1e-12 * np.abs(m).max():
        raise FlowError("the 2-d flow solver requires a diagonal flux tensor")


class _ImplicitStepper:
    """(Pi - dt L_h) f_next = Pi f_prev.

    1-d: the cyclic-tridiagonal matrix is factorized once and reused.
    2-d: diagonally preconditioned CG warm-started from the previous step;
    the solution is shifted along the constant kernel direction so that mass
    telescopes exactly despite the iterative tolerance.
    """

    def __init__(self, system, dt):
        self.system = system
        self.dt = dt
        grid = system.grid
        h2 = grid.h**2
        if grid.dim == 1:
            n = grid.cells
            c = system.cond_faces[0]
            c_prev = np.roll(c, 1)
            diag = system.pi_cells + dt * (c + c_prev) / h2
            idx = np.arange(n)
            rows = np.concatenate([idx, idx, idx])
            cols = np.concatenate([idx, (idx + 1) % n, (idx - 1) % n])
            vals = np.concatenate([diag, -dt * c / h2, -dt * c_prev / h2])
            mat = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
            self._solve = spla.factorized(mat)
            self._diag = None
        else:
            diag = system.pi_cells.copy()
            for axis, c in system.cond_faces.items():
                diag += dt * (c + np.roll(c, 1, axis=axis)) / h2
            self._diag = diag
            self._solve = None
        self._warm = None

    def _matvec(self, u):
        return self.system.pi_cells * u - self.dt * self.system.flux_divergence(u)

    def step_f(self, f):
        rhs = self.system.pi_cells * f
        if self._solve is not None:
            return self._solve(rhs)
        x0 = self._warm if self._warm is not None else f
        try:
            sol, _ = cg(self._matvec, rhs, tol=1e-13, diag=self._diag, x0=x0,
                        maxiter=40 * self.system.grid.cells)
        except SolverError as exc:
            raise FlowError(f"implicit step failed: {exc}") from exc
        # exact mass telescoping along the constant (kernel) direction
        vol = self.system.grid.cell_volume
        deficit = float(np.sum(self.system.pi_cells * (f - sol)) * vol)
        sol = sol + deficit / (float(self.system.pi_cells.sum()) * vol)
        self._warm = sol
        return sol


def step(state, system, dt):
    """One implicit-Euler step; enforces mass, positivity and max principle."""
    if dt <= 0:
        raise FlowError(f"dt must be positive, got {dt}")
    f_new = system.stepper(dt).step_f(state.f)
    _check_step_invariants(state.f, f_new, system)
    return system.state_from_f(f_new, t=state.t + dt)


def _check_step_invariants(f_old, f_new, system):
    lo, hi = float(f_old.min()), float(f_old.max())
    slack = 1e-12 * max(abs(lo), abs(hi), hi - lo)
    if f_new.min() < lo - slack or f_new.max() > hi + slack:
        raise FlowError(
            f"maximum principle violated: [{f_new.min()}, {f_new.max()}] "
            f"outside [{lo}, {hi}]"
        )
    if np.any(f_new <= 0) and np.all(f_old > 0):
        raise FlowError("positivity lost in implicit step")
    vol = system.grid.cell_volume
    m_old = float(np.sum(system.pi_cells * f_old) * vol)
    m_new = float(np.sum(system.pi_cells * f_new) * vol)
    if abs(m_new - m_old) > 1e-13 * max(abs(m_old), 1e-300):
        raise FlowError(f"mass conservation violated: {m_old} -> {m_new}")


@dataclass
class Trajectory:
    """Snapshots plus per-step diagnostics of one evolution run."""

    system: FlowSystem
    dt: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    generators: list = field(default_factory=list)  # div(c grad f) per snapshot
    records: list = field(default_factory=list)
    constants: InitialConstants = None
    # pieces of the exact implicit-Euler energy identity, summed over steps
    sum_dirichlet: float = 0.0
    sum_jumps: float = 0.0

    @property
    def stride_dt(self):
        return self.times[1] - self.times[0] if len(self.times) > 1 else self.dt

    def l2_identity_residual(self):
        """Residual of 0.5||f_T||^2 + sum dt*Dir(f_{k+1}) + 0.5 sum ||df||^2
        = 0.5||f_0||^2, relative to the initial size (exact up to round-off)."""
        a0 = 0.5 * self.system.weighted_norm2(self.states[0].f)
        at = 0.5 * self.system.weighted_norm2(self.states[-1].f)
        return (at + self.sum_dirichlet + self.sum_jumps - a0) / max(a0, 1e-300)


def evolve(initial, system, T, dt, snapshot_stride=1, observer=None):
    """Run the flow to time T; diagnostics every step, snapshots per stride.

    The observer, if given, is called as observer(k, t_new, f_old, f_new)
    after every accepted step; it is how the dissipation ledger follows long
    runs without storing every state.
    """
    if T < 0:
        raise FlowError(f"final time must be nonnegative, got {T}")
    nsteps = int(round(T / dt)) if T > 0 else 0
    if T > 0 and abs(nsteps * dt - T) > 1e-9 * T:
        raise FlowError(f"T={T} is not an integer multiple of dt={dt}")
    if nsteps % snapshot_stride != 0:
        # snapshots must stay uniformly spaced for the difference-quotient
        # diagnostics
        raise FlowError(f"snapshot_stride={snapshot_stride} does not divide {nsteps} steps")
    if np.any(initial.f <= 0):
        raise FlowError("initial state must have a positive weight ratio")
    traj = Trajectory(system=system, dt=dt, constants=system.initial_constants(initial.f))
    f = initial.f.copy()
    t = initial.t
    rec = _record(system, f, t, None, dt)
    traj.records.append(rec)
    traj.times.append(t)
    traj.states.append(system.state_from_f(f, t))
    traj.generators.append(system.flux_divergence(f))
    stepper = system.stepper(dt)
    energy = _free_energy_of_f(system, f)
    for k in range(1, nsteps + 1):
        f_new = stepper.step_f(f)
        _check_step_invariants(f, f_new, system)
        energy_new = _free_energy_of_f(system, f_new)
        if energy_new > energy + 1e-12 * max(abs(energy), 1.0):
            raise FlowError(f"free energy increased: {energy} -> {energy_new}")
        energy = energy_new
        t = initial.t + k * dt
        traj.sum_dirichlet += dt * system.dirichlet_form(f_new)
        traj.sum_jumps += 0.5 * system.weighted_norm2(f_new - f)
        traj.records.append(_record(system, f_new, t, f, dt))
        if observer is not None:
            observer(k, t, f, f_new)
        if k % snapshot_stride == 0 or k == nsteps:
            traj.times.append(t)
            traj.states.append(system.state_from_f(f_new, t))
            traj.generators.append(system.flux_divergence(f_new))
        f = f_new
    return traj


def _free_energy_of_f(system, f):
    # E(rho) = int rho log(rho/pi) = int pi f log f
    return float(np.sum(system.pi_cells * f * np.log(f)) * system.grid.cell_volume)


def _record(system, f, t, f_prev, dt):
    dtf = 0.0
    if f_prev is not None:
        dtf = system.weighted_norm2((f - f_prev) / dt)
    return DiagnosticsRecord(
        t=t, f_min=float(f.min()), f_max=float(f.max()),
        norm2_pi=system.weighted_norm2(f), dirichlet=system.dirichlet_form(f),
        dtf_norm2=dtf, mass=float(np.sum(system.pi_cells * f) * system.grid.cell_volume),
    )


@dataclass
class TimeDerivativeReport:
    times: list
    norm2_pi: list       # ||h_k||^2 weighted, h_k the difference quotient
    dirichlet: list
    identity_residual: float


def time_derivative_diagnostics(traj):
    """Difference-quotient diagnostics h_k = (f_{k+1} - f_k)/dt.

    h satisfies the same implicit recursion as f, so on a stride-1 trajectory
    its own energy identity holds to round-off; the residual is reported
    relative to ||h_0||^2 (nan when snapshots are strided, where the per-step
    identity does not apply).
    """
    if len(traj.states) < 3:
        raise FlowError("need at least 3 snapshots for time-derivative diagnostics")
    system = traj.system
    dt = traj.stride_dt
    hs = [(traj.states[k + 1].f - traj.states[k].f) / dt for k in range(len(traj.states) - 1)]
    norms = [system.weighted_norm2(h) for h in hs]
    dirich = [system.dirichlet_form(h) for h in hs]
    if abs(dt - traj.dt) <= 1e-12 * traj.dt:
        half_last = 0.5 * norms[-1]
        sum_dir = dt * sum(dirich[1:])
        sum_jumps = sum(0.5 * system.weighted_norm2(hs[k + 1] - hs[k])
                        for k in range(len(hs) - 1))
        res = (half_last + sum_dir + sum_jumps - 0.5 * norms[0]) / max(0.5 * norms[0], 1e-300)
    else:
        res = float("nan")
    times = [traj.times[k] for k in range(len(hs))]
    return TimeDerivativeReport(times=times, norm2_pi=norms, dirichlet=dirich,
                                identity_residual=res)


def well_prepared_initial(rho0, system):
    """Initial data rho_0^eps = c_eps f_0 pi_eps with f_0 = rho0 / pibar.

    Keeps the weight ratio f_0 independent of eps (up to the mass normalizer)
    so the free energies converge to the limit value without an initial layer.
    rho0 may be an expression in x (1-d) or x1, x2 (2-d), or a cell array.
    """
    grid = system.grid
    if isinstance(rho0, (str, bytes, ex.Expr)):
        e = rho0 if isinstance(rho0, ex.Expr) else ex.parse(rho0)
        if grid.dim == 1:
            vals = ex.evaluate_array(e, {"x": grid.centers()})
        else:
            x1, x2 = grid.centers()
            vals = ex.evaluate_array(e, {"x1": x1, "x2": x2})
        vals = np.broadcast_to(vals, grid.shape).astype(np.float64, copy=True)
    else:
        vals = np.asarray(rho0, dtype=np.float64)
    if np.any(vals <= 0):
        raise FlowError("initial density must be positive")
    f0 = vals / system.pibar_cells
    mass = float(np.sum(f0 * system.pi_cells) * grid.cell_volume)
    return system.state_from_f(f0 / mass)
