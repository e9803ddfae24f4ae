import numpy as np
import pytest
from mediagen import random_smooth_medium_1d, random_smooth_medium_2d

from wgfh import cell
from wgfh import media as md
from wgfh.quadrature import periodic_average


def _medium_1d(b_src="2+sin(2*pi*y)", pi_src="1", b_bounds=(1, 3)):
    mob = md.MobilityTensor.from_expr(b_src, bounds=b_bounds)
    if pi_src == "1":
        den = md.StationaryDensity.constant(1.0)
    else:
        den = md.StationaryDensity.general(pi_src)
    return md.Medium(mob, den)


class TestSolveCell:
    def test_constant_coefficient_corrector_vanishes(self):
        m = md.Medium(md.MobilityTensor.constant(2.0), md.StationaryDensity.constant(1.0))
        sol = cell.solve_cell(m, ycells=32)
        assert np.abs(sol.w[0]).max() < 1e-13
        assert sol.mean_abs() < 1e-14

    def test_piecewise_1d_closed_form_gradient(self):
        # D = 1/B with B in {1, 3}: flux constant C = (int 1/D)^{-1} = 1/2,
        # so grad w = -1 + C/D slab by slab
        m = md.Medium(md.MobilityTensor.layered([1.0, 3.0]), md.StationaryDensity.constant(1.0))
        sol = cell.solve_cell(m, ycells=64)
        d = m.conductivity_cells(0.0, 64)
        want = -1.0 + 0.5 / d
        assert sol.grad[0] == pytest.approx(want, abs=1e-10)

    def test_2d_layered_reduces_to_1d(self):
        mob2 = md.MobilityTensor.layered([1.0, 3.0], dim=2)
        m2 = md.Medium(mob2, md.StationaryDensity.constant(1.0, dim=2))
        sol2 = cell.solve_cell(m2, ycells=32)
        mob1 = md.MobilityTensor.layered([1.0, 3.0])
        m1 = md.Medium(mob1, md.StationaryDensity.constant(1.0))
        sol1 = cell.solve_cell(m1, ycells=32)
        # direction 1 solves the 1-d slab problem, constant across y2
        spread = np.abs(sol2.w[0] - sol2.w[0][:, :1]).max()
        assert spread < 1e-10
        assert sol2.w[0][:, 0] == pytest.approx(sol1.w[0], abs=1e-10)
        # direction 2 sees constant coefficients along its axis
        assert np.abs(sol2.w[1]).max() < 1e-10

    def test_zero_mean_and_residual(self):
        rng = np.random.default_rng(3)
        m = random_smooth_medium_2d(rng)
        sol = cell.solve_cell(m, ycells=32)
        assert sol.mean_abs() < 1e-12
        assert max(sol.residuals) < 1e-11

    def test_ycells_floor_enforced(self):
        m = _medium_1d()
        with pytest.raises(cell.CellProblemError, match="32"):
            cell.solve_cell(m, ycells=16)


class TestEffectiveTensors:
    def test_constant_isotropic(self):
        b = 2.5
        m = md.Medium(md.MobilityTensor.constant(b), md.StationaryDensity.constant(1.0))
        eff = cell.effective_tensors(m, ycells=32)
        assert eff.D_bar[0, 0, 0] == pytest.approx(1 / b, rel=1e-14)
        assert abs(eff.G_bar[0, 0, 0]) < 1e-14
        assert eff.mobility_scalar() == pytest.approx(b, rel=1e-13)

    def test_sinusoid_matches_closed_form(self):
        m = _medium_1d()
        eff = cell.effective_tensors(m, ycells=256)
        oracle = cell.closed_form_mobility_1d(m)
        assert oracle == pytest.approx(2.0, abs=1e-12)
        assert eff.mobility_scalar() == pytest.approx(oracle, abs=1e-8)

    def test_equality_condition_pi_proportional_to_sqrt_b(self):
        # pi = sqrt(B) gives B_bar = (int sqrt(B))^2
        m = _medium_1d(pi_src="sqrt(2+sin(2*pi*y))")
        eff = cell.effective_tensors(m, ycells=256)
        root_mean = periodic_average(lambda y: np.sqrt(2 + np.sin(2 * np.pi * y)))
        assert eff.mobility_scalar() == pytest.approx(root_mean**2, abs=1e-8)

    def test_x_dependent_density(self):
        mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        den = md.StationaryDensity.oscillatory("1+0.5*x", "0.25*sin(2*pi*y)")
        m = md.Medium(mob, den)
        xs = np.array([0.25, 0.75])
        eff = cell.effective_tensors(m, slow_points=xs, ycells=128)
        for k, x in enumerate(xs):
            oracle = cell.closed_form_mobility_1d(m, x=x)
            assert eff.B_bar[k, 0, 0] == pytest.approx(oracle, abs=1e-7)

    def test_voigt_reuss_sandwich_1d(self):
        rng = np.random.default_rng(11)
        for _ in range(3):
            m = random_smooth_medium_1d(rng)
            eff = cell.effective_tensors(m, ycells=128)
            d = m.conductivity_cells(0.0, 128)
            flux = eff.flux_tensor()[0, 0]
            harmonic = 1.0 / np.mean(1.0 / d)
            arithmetic = np.mean(d)
            # 1-d: effective flux equals the harmonic mean of the samples
            assert flux == pytest.approx(harmonic, rel=1e-12)
            assert flux <= arithmetic + 1e-12

    def test_grid_refinement_converges(self):
        rng = np.random.default_rng(5)
        m = random_smooth_medium_2d(rng)
        e1 = cell.effective_tensors(m, ycells=128)
        e2 = cell.effective_tensors(m, ycells=256)
        assert np.abs(e1.flux_tensor() - e2.flux_tensor()).max() < 1e-6

    def test_validation_identity(self):
        rng = np.random.default_rng(19)
        m = random_smooth_medium_2d(rng)
        eff = cell.effective_tensors(m, ycells=32)
        eff.validate(mobility_bounds=m.mobility.bounds, density_bounds=(0.3, 1.7))


class TestUniformVariant:
    def test_constant_mobility_ignores_pi0(self):
        mob = md.MobilityTensor.constant(1.7)
        for pi0 in ("1", "3.3"):
            den = md.StationaryDensity.uniform(pi0, "0.25*sin(2*pi*y)")
            eff = cell.effective_tensors_uniform_case(md.Medium(mob, den), ycells=64)
            assert eff.mobility_scalar() == pytest.approx(1.7, rel=1e-13)

    def test_pi0_independence_is_bitwise(self):
        mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        effs = []
        for pi0 in ("1", "2.7"):
            den = md.StationaryDensity.uniform(pi0, "0.25*sin(2*pi*y)")
            effs.append(cell.effective_tensors_uniform_case(md.Medium(mob, den), ycells=64))
        assert np.array_equal(effs[0].B_bar, effs[1].B_bar)
        # pi_bar keeps the limiting stationary factor itself
        assert effs[1].pi_bar[0] == pytest.approx(2.7)

    def test_uniform_sinusoid_value(self):
        # with the oscillation gone from the limit density, the corrector
        # problem runs on B^{-1} and the 1-d closed form gives int B dy
        mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        den = md.StationaryDensity.uniform("1.5", "0.25*sin(2*pi*y)")
        m = md.Medium(mob, den)
        eff = cell.effective_tensors_uniform_case(m, ycells=256)
        oracle = cell.closed_form_mobility_1d(m)
        assert oracle == pytest.approx(2.0, abs=1e-12)
        assert eff.mobility_scalar() == pytest.approx(oracle, abs=1e-8)

    def test_requires_uniform_variant(self):
        m = _medium_1d()
        with pytest.raises(cell.CellProblemError, match="uniform"):
            cell.effective_tensors_uniform_case(m)


class TestVariational:
    def test_constant_full_matrix(self):
        # the variational weight is D = pi B^{-1}, so weight A means B = A^{-1}
        a = np.array([[2.0, 0.4], [0.4, 1.5]])
        m = md.Medium(md.MobilityTensor.constant(np.linalg.inv(a), dim=2),
                      md.StationaryDensity.constant(1.0, dim=2))
        for p in (np.array([1.0, 0.0]), np.array([0.3, -0.7])):
            val = cell.effective_tensor_variational(m, p=p, ycells=32)
            assert val == pytest.approx(float(p @ a @ p), rel=1e-12)

    def test_piecewise_harmonic_value(self):
        m = md.Medium(md.MobilityTensor.layered([1.0, 3.0]), md.StationaryDensity.constant(1.0))
        val = cell.effective_tensor_variational(m, p=1.0, ycells=64)
        assert val == pytest.approx(0.5, abs=1e-12)

    def test_agrees_with_tensor_route_on_random_media(self):
        rng = np.random.default_rng(23)
        for _ in range(2):
            m = random_smooth_medium_2d(rng)
            eff = cell.effective_tensors(m, ycells=32)
            flux = eff.flux_tensor()
            for _ in range(5):
                p = rng.normal(size=2)
                want = float(p @ flux @ p)
                got = cell.effective_tensor_variational(m, p=p, ycells=32)
                assert got == pytest.approx(want, abs=1e-10 * max(1.0, abs(want)))

    def test_zero_direction_rejected(self):
        m = _medium_1d()
        with pytest.raises(cell.CellProblemError, match="nonzero"):
            cell.effective_tensor_variational(m, p=0.0)


class TestLaminateOracle:
    def test_2d_laminate_closed_form(self):
        # isotropic conductance d(y1) laminated in y1: the effective tensor is
        # diag(harmonic mean, arithmetic mean) of d, the classic closed form
        m = md.Medium(md.MobilityTensor.layered([1.0, 3.0], dim=2),
                      md.StationaryDensity.constant(1.0, dim=2))
        eff = cell.effective_tensors(m, ycells=32)
        flux = eff.flux_tensor()
        d_vals = np.array([1.0, 1.0 / 3.0])  # d = 1/B per slab
        want_across = 1.0 / np.mean(1.0 / d_vals)
        want_along = np.mean(d_vals)
        assert flux[0, 0] == pytest.approx(want_across, abs=1e-11)
        assert flux[1, 1] == pytest.approx(want_along, abs=1e-11)
        assert abs(flux[0, 1]) < 1e-12
        # the variational route agrees with both closed-form directions
        for p, want in (([1.0, 0.0], want_across), ([0.0, 1.0], want_along)):
            got = cell.effective_tensor_variational(m, p=np.array(p), ycells=32)
            assert got == pytest.approx(want, abs=1e-11)
