"""Free energy, dissipation potentials and the energy-dissipation ledger.

Along a flow trajectory the ledger tracks

    E(rho_t) + int_0^t [ psi(rho, dt rho) + psi*(rho, -log f) ] dtau <= E(rho_0),

with the two dissipation potentials evaluated as quadratic forms in the face
mobility K = rho B^{-1}:

  * psi(rho, s): solve -div(K grad u) = s and return the kinetic energy of
    the potential u (an explicit flux antiderivative in 1-d, projected CG in
    2-d);
  * psi*(rho, xi): the dual quadratic form in grad xi.  On the flow it is
    evaluated in the Fisher form 2 int <grad sqrt(f), pi B^{-1} grad sqrt(f)>,
    which stays bounded for small oscillations of f.

Built from the same face coefficients, psi and the dual form are exact convex
conjugates at the discrete level, so the Fenchel-Young gap is nonnegative by
algebra and vanishes exactly on gradient-flow velocities.
"""

from dataclasses import dataclass

import numpy as np

from .flow import evolve
from .grids import face_divergence, forward_diff, harmonic_face_mean
from .linalg import SolverError, cg


class EDIError(RuntimeError):
    pass


def free_energy(state, pi_cells):
    """int rho log(rho / pi) over the torus (midpoint quadrature on cells)."""
    rho = state.rho
    pi_cells = np.asarray(pi_cells, dtype=np.float64)
    if np.any(rho <= 0) or np.any(pi_cells <= 0):
        raise EDIError("free energy needs positive density and weight")
    return float(np.sum(rho * np.log(rho / pi_cells)) * state.grid.cell_volume)


def _face_mobility(state, system):
    """K = rho B^{-1} harmonically averaged onto faces, one array per axis."""
    return {
        axis: harmonic_face_mean(state.rho * inv_mob, axis=axis)
        for axis, inv_mob in system.inv_mobility_cells.items()
    }


def _quadratic_face_form(k_faces, field, grid):
    h = grid.h
    total = 0.0
    for axis, k in k_faces.items():
        df = forward_diff(field, axis=axis)
        total += float(np.sum(k * df * df))
    return 0.5 * total * grid.cell_volume / h**2


def psi_star(state, system):
    """On-flow cotangent dissipation in the Fisher form,
    2 int <grad sqrt(f), pi B^{-1} grad sqrt(f)>, with f = rho / pi."""
    f = state.rho / system.pi_cells
    root = np.sqrt(f)
    h = state.grid.h
    total = 0.0
    for axis, c in system.cond_faces.items():
        d = forward_diff(root, axis=axis)
        total += float(np.sum(c * d * d))
    return 2.0 * total * state.grid.cell_volume / h**2


def psi_star_quadratic(state, xi, system):
    """General cotangent dissipation 0.5 int <grad xi, B^{-1} grad xi> rho."""
    return _quadratic_face_form(_face_mobility(state, system), xi, state.grid)


def _check_tangent(s, grid):
    total = abs(float(np.sum(s))) * grid.cell_volume
    scale = float(np.abs(s).sum()) * grid.cell_volume
    if scale > 0 and total > 1e-10 * scale:
        raise EDIError(f"tangent field must have zero mean (relative mean {total / scale:.2e})")


def psi_potential(state, s, system, tol=1e-12):
    """Potential u with -div(K grad u) = s, K = rho B^{-1} at faces, mean zero."""
    grid = state.grid
    s = np.asarray(s, dtype=np.float64)
    _check_tangent(s, grid)
    k_faces = _face_mobility(state, system)
    h = grid.h
    if grid.dim == 1:
        k = k_faces[0]
        # explicit flux antiderivative: J_{i+1/2} = J_* + h cumsum(s),
        # with the free constant fixed by periodicity of u
        p = h * np.cumsum(s)
        j0 = -float(np.sum(p / k) / np.sum(1.0 / k))
        j = j0 + p
        du = -j * h / k
        u = np.concatenate(([0.0], np.cumsum(du[:-1])))
        return u - u.mean()

    def apply_a(u2):
        out = np.zeros_like(u2)
        for axis, k in k_faces.items():
            out -= face_divergence(k * forward_diff(u2, axis=axis), axis=axis)
        return out / h**2

    diag = np.zeros(grid.shape)
    for axis, k in k_faces.items():
        diag += (k + np.roll(k, 1, axis=axis)) / h**2
    try:
        u, _ = cg(apply_a, s, tol=tol, diag=diag, mean_zero=True,
                  maxiter=80 * grid.cells)
    except SolverError as exc:
        raise EDIError(f"tangent-dissipation solve failed: {exc}") from exc
    return u - u.mean()


def psi(state, s, system, tol=1e-12):
    """Tangent dissipation 0.5 int <grad u, B^{-1} grad u> rho with
    -div(rho B^{-1} grad u) = s."""
    u = psi_potential(state, s, system, tol=tol)
    return _quadratic_face_form(_face_mobility(state, system), u, state.grid)


def fenchel_young_gap(state, s, xi, system):
    """psi(rho, s) + psi*(rho, xi) - <xi, s>; nonnegative, zero iff xi is the
    potential of s (up to a constant)."""
    s = np.asarray(s, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    pairing = float(np.sum(xi * s) * state.grid.cell_volume)
    return psi(state, s, system) + psi_star_quadratic(state, xi, system) - pairing


@dataclass
class EDIRecord:
    t: float
    energy: float
    int_psi: float        # cumulative tangent dissipation
    int_psi_star: float   # cumulative cotangent dissipation (Fisher form)
    residual: float       # E(rho_0) - E(rho_t) - int(psi + psi*)
    fy_gap: float         # on-flow Fenchel-Young gap at time t


def edi_trace(traj, system=None):
    """Ledger along a stored trajectory: energies, running dissipation
    integrals and the inequality residual.

    Time integrals use the right-endpoint rule, the quadrature intrinsic to
    the implicit-Euler step: with it the per-step inequality
    E_k - E_{k+1} >= dt (psi + psi*)(k+1) holds by convexity up to round-off,
    so the cumulative residual keeps the correct sign.  (A trapezoid ledger
    overshoots the energy decrease at O(dt) and drifts negative.)
    """
    system = system or traj.system
    n = len(traj.states)
    if n < 1:
        raise EDIError("empty trajectory")
    energies = np.empty(n)
    psis = np.empty(n)
    psi_stars = np.empty(n)
    gaps = np.empty(n)
    for k, state in enumerate(traj.states):
        s_k = traj.generators[k]
        energies[k] = free_energy(state, system.pi_cells)
        psis[k] = psi(state, s_k, system)
        psi_stars[k] = psi_star(state, system)
        f = state.rho / system.pi_cells
        xi = -np.log(f)
        pairing = float(np.sum(xi * s_k) * state.grid.cell_volume)
        gaps[k] = psis[k] + psi_star_quadratic(state, xi, system) - pairing
    records = []
    int_psi = 0.0
    int_star = 0.0
    for k in range(n):
        if k > 0:
            dt_k = traj.times[k] - traj.times[k - 1]
            int_psi += dt_k * psis[k]
            int_star += dt_k * psi_stars[k]
        residual = energies[0] - energies[k] - int_psi - int_star
        records.append(EDIRecord(t=traj.times[k], energy=energies[k], int_psi=int_psi,
                                 int_psi_star=int_star, residual=residual, fy_gap=gaps[k]))
    return records


def run_edi(system, rho0, T, dt, snapshot_stride=1):
    """Evolve well-prepared data and return (trajectory, ledger records)."""
    from .flow import well_prepared_initial

    state = well_prepared_initial(rho0, system)
    traj = evolve(state, system, T=T, dt=dt, snapshot_stride=snapshot_stride)
    return traj, edi_trace(traj)


@dataclass
class SweepRow:
    eps: float
    t: float
    energy_eps: float
    int_psi_eps: float
    int_psi_star_eps: float
    energy_limit: float
    int_psi_limit: float
    int_psi_star_limit: float

    @property
    def energy_diff(self):
        return self.energy_eps - self.energy_limit

    @property
    def int_psi_diff(self):
        return self.int_psi_eps - self.int_psi_limit

    @property
    def int_psi_star_diff(self):
        return self.int_psi_star_eps - self.int_psi_star_limit


@dataclass
class SweepResult:
    rows: list
    deltas: dict          # eps -> worst lower-bound deficit max(0, -diff)
    deltas_decreasing: bool

    def rows_for(self, eps):
        return [r for r in self.rows if r.eps == eps]


def _records_at(records, times):
    by_t = {round(r.t, 12): r for r in records}
    out = []
    for t in times:
        key = round(t, 12)
        if key not in by_t:
            raise EDIError(f"no ledger record at t={t}; align sample times with dt")
        out.append(by_t[key])
    return out


def lower_bound_sweep(eps_list, mobility, density, rho0, *, cells, dt, T,
                      sample_times, ycells=256):
    """Compare the eps-level ledger with the homogenized one over an eps sweep.

    For each eps the run starts from well-prepared data on a common grid; the
    limit system uses the cell-problem tensors on the same grid and time step.
    Lower-bound deficits delta(eps) = max(0, limit - eps value) over the three
    tracked functionals and sample times must shrink as eps does.
    """
    from . import cell as cell_mod
    from . import media as media_mod
    from .flow import FlowSystem, well_prepared_initial
    from .grids import Grid

    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise EDIError("eps list must be strictly decreasing")
    medium = media_mod.Medium(mobility, density)
    grid = Grid(mobility.dim, cells)
    if density.depends_on_x:
        slow_points = grid.centers()
        eff = cell_mod.effective_tensors(medium, slow_points=slow_points, ycells=ycells)
    else:
        eff = cell_mod.effective_tensors(medium, ycells=ycells)
    limit_sys = FlowSystem.from_effective(eff, grid)
    limit_traj = evolve(well_prepared_initial(rho0, limit_sys), limit_sys, T=T, dt=dt)
    limit_records = _records_at(edi_trace(limit_traj), sample_times)

    rows = []
    deltas = {}
    for eps in eps_list:
        sampled = media_mod.sample_medium(mobility, density, eps, cells)
        system = FlowSystem.from_sampled(sampled)
        traj = evolve(well_prepared_initial(rho0, system), system, T=T, dt=dt)
        recs = _records_at(edi_trace(traj), sample_times)
        worst = 0.0
        for r_eps, r_lim, t in zip(recs, limit_records, sample_times):
            row = SweepRow(
                eps=eps, t=t,
                energy_eps=r_eps.energy, int_psi_eps=r_eps.int_psi,
                int_psi_star_eps=r_eps.int_psi_star,
                energy_limit=r_lim.energy, int_psi_limit=r_lim.int_psi,
                int_psi_star_limit=r_lim.int_psi_star,
            )
            rows.append(row)
            worst = max(worst, -row.energy_diff, -row.int_psi_diff,
                        -row.int_psi_star_diff, 0.0)
        deltas[eps] = worst
    vals = [deltas[e] for e in eps_list]
    decreasing = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    return SweepResult(rows=rows, deltas=deltas, deltas_decreasing=decreasing)
