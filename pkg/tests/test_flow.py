import numpy as np
import pytest

from wgfh import cell, flow
from wgfh import media as md


def _system_1d(b_src="2+sin(2*pi*y)", pi_src=None, eps=0.25, cells=128, bounds=(1, 3)):
    mob = md.MobilityTensor.from_expr(b_src, bounds=bounds)
    den = (md.StationaryDensity.constant(1.0) if pi_src is None
           else md.StationaryDensity.general(pi_src))
    return flow.FlowSystem.from_sampled(md.sample_medium(mob, den, eps, cells))


def _constant_system(b=1.0, cells=64, dim=1):
    mob = md.MobilityTensor.constant(b, dim=dim)
    den = md.StationaryDensity.constant(1.0, dim=dim)
    return flow.FlowSystem.from_sampled(md.sample_medium(mob, den, 0.25, cells))


class TestStep:
    def test_stationary_state_is_fixed_point(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        s0 = system.stationary_state()
        s1 = flow.step(s0, system, dt=0.01)
        assert s1.rho == pytest.approx(s0.rho, abs=1e-14)

    def test_single_mode_matches_discrete_symbol(self):
        # constant medium: cos(2 pi x) is an exact eigenvector of L_h with
        # eigenvalue 4 sin^2(pi h)/(b h^2); one implicit step divides the
        # mode by (1 + dt*lambda)
        b, cells, dt, delta = 2.0, 64, 0.01, 0.3
        system = _constant_system(b=b, cells=cells)
        x = system.grid.centers()
        f0 = 1 + delta * np.cos(2 * np.pi * x)
        s1 = flow.step(system.state_from_f(f0), system, dt)
        h = system.grid.h
        lam = 4 * np.sin(np.pi * h) ** 2 / (b * h * h)
        want = 1 + delta / (1 + dt * lam) * np.cos(2 * np.pi * x)
        assert s1.f == pytest.approx(want, abs=1e-12)

    def test_mass_conserved_per_step(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        for _ in range(5):
            new = flow.step(state, system, dt=0.001)
            assert abs(new.mass - state.mass) <= 1e-13 * state.mass
            state = new

    def test_2d_step_runs_and_conserves(self):
        mob = md.MobilityTensor.from_expr(
            [["2+sin(2*pi*y1)", "0"], ["0", "2+cos(2*pi*y2)"]], bounds=(1, 3), dim=2
        )
        den = md.StationaryDensity.constant(1.0, dim=2)
        system = flow.FlowSystem.from_sampled(md.sample_medium(mob, den, 0.5, 32))
        x1, x2 = system.grid.centers()
        state = system.state_from_rho(1 + 0.3 * np.cos(2 * np.pi * x1) * np.cos(2 * np.pi * x2),
                                      normalize=True)
        new = flow.step(state, system, dt=0.001)
        assert abs(new.mass - state.mass) <= 1e-12 * state.mass
        assert new.f.min() >= state.f.min() - 1e-11
        assert new.f.max() <= state.f.max() + 1e-11

    def test_full_tensor_rejected_in_2d(self):
        mob = md.MobilityTensor.from_expr(
            [["2", "0.3"], ["0.3", "2"]], bounds=(1.5, 2.5), dim=2
        )
        den = md.StationaryDensity.constant(1.0, dim=2)
        sampled = md.sample_medium(mob, den, 0.5, 32)
        with pytest.raises(flow.FlowError, match="diagonal"):
            flow.FlowSystem.from_sampled(sampled)


class TestEvolve:
    def test_zero_time_single_snapshot(self):
        system = _system_1d()
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        traj = flow.evolve(state, system, T=0.0, dt=0.001)
        assert len(traj.states) == 1

    def test_max_principle_range_containment(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        m0, M0 = state.f.min(), state.f.max()
        traj = flow.evolve(state, system, T=0.02, dt=0.001)
        for rec in traj.records:
            assert rec.f_min >= m0 - 1e-12
            assert rec.f_max <= M0 + 1e-12

    def test_l2_energy_identity_exact(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        traj = flow.evolve(state, system, T=0.02, dt=0.0005)
        assert abs(traj.l2_identity_residual()) < 1e-12

    def test_energy_inequality_gap_shrinks_with_dt(self):
        # 0.5||f_T||^2 + sum dt Dir(f_{k+1}) <= 0.5||f_0||^2, gap -> 0 with dt
        system = _system_1d()
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        gaps = []
        for dt in (0.002, 0.001, 0.0005):
            traj = flow.evolve(state, system, T=0.02, dt=dt)
            a0 = 0.5 * system.weighted_norm2(traj.states[0].f)
            at = 0.5 * system.weighted_norm2(traj.states[-1].f)
            gap = a0 - at - traj.sum_dirichlet
            assert gap >= -1e-13
            gaps.append(gap)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_weighted_norm_monotone(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        traj = flow.evolve(state, system, T=0.02, dt=0.001)
        norms = [r.norm2_pi for r in traj.records]
        assert all(b <= a + 1e-13 for a, b in zip(norms, norms[1:]))

    def test_self_adjointness_in_weighted_product(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        rng = np.random.default_rng(2)
        for _ in range(5):
            u = rng.normal(size=system.grid.cells)
            v = rng.normal(size=system.grid.cells)
            lu, lv = system.backward_operator(u), system.backward_operator(v)
            a, b = system.inner_pi(lu, v), system.inner_pi(u, lv)
            assert abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1.0)

    def test_two_grid_convergence_factor(self):
        # dt ~ h^2 keeps the first-order time error subordinate, so the
        # second-order space error dominates: factor >= 3 per h-halving
        mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        den = md.StationaryDensity.constant(1.0)
        T = 0.02
        sols = {}
        for cells in (128, 256, 512):
            system = flow.FlowSystem.from_sampled(md.sample_medium(mob, den, 0.25, cells))
            state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
            dt = T / int(round(T * cells * cells / 80.0))
            traj = flow.evolve(state, system, T=T, dt=dt)
            sols[cells] = (system.grid.centers(), traj.states[-1].f)
        errs = []
        for coarse, fine in ((128, 256), (256, 512)):
            xc, fc = sols[coarse]
            xf, ff = sols[fine]
            fine_at_coarse = np.interp(xc, xf, ff, period=1.0)
            errs.append(np.abs(fc - fine_at_coarse).max())
        assert errs[0] / errs[1] >= 3.0


class TestTimeDerivative:
    def test_stationary_trajectory_has_zero_quotients(self):
        system = _system_1d()
        traj = flow.evolve(system.stationary_state(), system, T=0.004, dt=0.001)
        rep = flow.time_derivative_diagnostics(traj)
        assert max(rep.norm2_pi) < 1e-20

    def test_quotient_norm_nonincreasing_and_identity(self):
        system = _system_1d(pi_src="1+0.25*sin(2*pi*y)")
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        traj = flow.evolve(state, system, T=0.02, dt=0.0005)
        rep = flow.time_derivative_diagnostics(traj)
        norms = rep.norm2_pi
        assert all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:]))
        assert abs(rep.identity_residual) < 1e-10

    def test_single_mode_decay_rate(self):
        # h ~ -lambda * amplitude decay, matched to O(dt) against the
        # continuum rate
        b, cells, delta = 1.0, 256, 0.1
        system = _constant_system(b=b, cells=cells)
        x = system.grid.centers()
        state = system.state_from_f(1 + delta * np.cos(2 * np.pi * x))
        dt = 1e-4
        traj = flow.evolve(state, system, T=50 * dt, dt=dt)
        rep = flow.time_derivative_diagnostics(traj)
        lam = 4 * np.pi**2 / b
        want = lam**2 * delta**2 / 2  # ||h_0||^2 for the continuum mode
        assert rep.norm2_pi[0] == pytest.approx(want, rel=0.02)

    def test_needs_three_snapshots(self):
        system = _system_1d()
        traj = flow.evolve(system.stationary_state(), system, T=0.001, dt=0.001)
        with pytest.raises(flow.FlowError, match="3 snapshots"):
            flow.time_derivative_diagnostics(traj)


class TestWellPrepared:
    def test_constant_weight_returns_rho0(self):
        system = _constant_system(cells=64)
        state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
        x = system.grid.centers()
        assert state.rho == pytest.approx(1 + 0.5 * np.cos(2 * np.pi * x), abs=1e-13)

    def test_weight_ratio_independent_of_eps(self):
        mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        den = md.StationaryDensity.general("1+0.25*sin(2*pi*y)")
        fs = {}
        for eps in (1 / 4, 1 / 8):
            system = flow.FlowSystem.from_sampled(md.sample_medium(mob, den, eps, 256))
            state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
            fs[eps] = state.f
        # same grid, same f values up to the mass normalizers
        ratio = fs[1 / 4] / fs[1 / 8]
        assert np.abs(ratio - ratio[0]).max() < 1e-12

    def test_free_energy_converges_to_limit(self):
        # the initial profile carries a kink so the energy gap decays at a
        # visible algebraic rate; analytic data converges below round-off
        # already at eps = 1/8 on resonant grids
        from wgfh.edi import free_energy

        mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        den = md.StationaryDensity.general("1+0.25*cos(2*pi*y)")
        medium = md.Medium(mob, den)
        eff = cell.effective_tensors(medium, ycells=256)
        rho0 = "1 + 0.5*(abs(2*x-1) - 0.5)"
        limit_sys = flow.FlowSystem.from_effective(eff, flow.Grid(1, 1024))
        limit_state = flow.well_prepared_initial(rho0, limit_sys)
        e_limit = free_energy(limit_state, limit_sys.pi_cells)
        gaps = []
        for eps in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
            system = flow.FlowSystem.from_sampled(md.sample_medium(mob, den, eps, 1024))
            state = flow.well_prepared_initial(rho0, system)
            gaps.append(abs(free_energy(state, system.pi_cells) - e_limit))
        assert gaps[0] > gaps[1] > gaps[2] > gaps[3]

    def test_nonpositive_initial_rejected(self):
        system = _constant_system()
        with pytest.raises(flow.FlowError, match="positive"):
            flow.well_prepared_initial("cos(2*pi*x)", system)


def test_observer_sees_every_step():
    system = _system_1d()
    state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
    seen = []
    flow.evolve(state, system, T=0.005, dt=0.001, snapshot_stride=5,
                observer=lambda k, t, f_old, f_new: seen.append((k, t)))
    assert [k for k, _ in seen] == [1, 2, 3, 4, 5]
    assert seen[-1][1] == pytest.approx(0.005)


def test_stride_must_divide_steps():
    system = _system_1d()
    state = flow.well_prepared_initial("1+0.5*cos(2*pi*x)", system)
    with pytest.raises(flow.FlowError, match="snapshot_stride"):
        flow.evolve(state, system, T=0.005, dt=0.001, snapshot_stride=3)
