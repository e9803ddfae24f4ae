import numpy as np
import pytest

from wgfh import cell, metrics
from wgfh import media as md
from wgfh.quadrature import periodic_average


def _sin_mobility():
    return md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))


class TestPointDistances:
    def test_constant_medium(self):
        mob = md.MobilityTensor.constant(4.0)
        assert metrics.d_eps_1d(mob, 0.25, 0.1, 0.6) == pytest.approx(2 * 0.5, rel=1e-12)

    def test_coincident_points(self):
        assert metrics.d_eps_1d(_sin_mobility(), 0.25, 0.3, 0.3) == 0.0

    def test_full_interval_matches_gh_coefficient(self):
        mob = _sin_mobility()
        val = metrics.d_eps_1d(mob, 1 / 16, 0.0, 1.0)
        assert val == pytest.approx(np.sqrt(metrics.d_gh_coefficient(mob)), abs=1e-6)

    def test_orientation_symmetry(self):
        mob = _sin_mobility()
        assert metrics.d_eps_1d(mob, 1 / 8, 0.2, 0.7) == pytest.approx(
            metrics.d_eps_1d(mob, 1 / 8, 0.7, 0.2), rel=1e-13
        )

    def test_torus_topology_takes_short_arc(self):
        mob = md.MobilityTensor.constant(1.0)
        assert metrics.d_eps_1d(mob, 0.5, 0.05, 0.95, topology="torus") == pytest.approx(
            0.1, rel=1e-10
        )

    def test_gh_coefficient_constant(self):
        assert metrics.d_gh_coefficient(md.MobilityTensor.constant(3.0)) == pytest.approx(3.0)

    def test_gh_coefficient_layered_hand_value(self):
        mob = md.MobilityTensor.layered([1.0, 4.0])
        assert metrics.d_gh_coefficient(mob) == pytest.approx(2.25, abs=1e-14)

    def test_d_eps_converges_to_gh_line(self):
        # the signed error oscillates with the phase of y/eps, so the
        # decreasing quantity is the sup over targets (exactly O(eps))
        mob = _sin_mobility()
        c_root = np.sqrt(metrics.d_gh_coefficient(mob))
        ys = np.linspace(0.41, 0.97, 15)
        errs = []
        for e in (1 / 4, 1 / 8, 1 / 16, 1 / 32):
            errs.append(max(abs(metrics.d_eps_1d(mob, e, 0.0, y) - c_root * y) for y in ys))
        assert errs[0] > errs[1] > errs[2] > errs[3]

    def test_d_bar_euclidean_for_identity(self):
        assert metrics.d_bar(np.eye(2), (0.0, 0.0), (0.3, 0.4)) == pytest.approx(0.5)

    def test_layered_strict_gap(self):
        mob = md.MobilityTensor.layered([1.0, 4.0])
        m = md.Medium(mob, md.StationaryDensity.constant(1.0))
        b_bar = cell.closed_form_mobility_1d(m)
        c_bar = metrics.d_gh_coefficient(mob)
        assert b_bar == pytest.approx(2.5, abs=1e-13)
        assert c_bar == pytest.approx(2.25, abs=1e-13)
        assert metrics.d_bar(b_bar, 0.0, 1.0) > np.sqrt(c_bar)


class TestGapReport:
    def test_equality_case(self):
        mob = _sin_mobility()
        den = md.StationaryDensity.general("sqrt(2+sin(2*pi*y))")
        rep = metrics.gap_report(md.Medium(mob, den))
        assert rep.equality
        assert abs(rep.gap) <= 1e-10

    def test_flat_density_strict_gap(self):
        rep = metrics.gap_report(md.Medium(_sin_mobility(), md.StationaryDensity.constant(1.0)))
        assert not rep.equality
        assert rep.gap > 0.01
        assert rep.c_bar <= rep.b_bar

    def test_constant_mobility_oscillatory_density_still_gaps(self):
        # B constant does not force equality: B_bar = B pibar int 1/pi > B
        mob = md.MobilityTensor.constant(2.0)
        den = md.StationaryDensity.general("1+0.5*sin(2*pi*y)")
        rep = metrics.gap_report(md.Medium(mob, den))
        pibar = periodic_average(lambda y: 1 + 0.5 * np.sin(2 * np.pi * y))
        inv_mean = periodic_average(lambda y: 1.0 / (1 + 0.5 * np.sin(2 * np.pi * y)))
        assert rep.c_bar == pytest.approx(2.0, abs=1e-12)
        assert rep.b_bar == pytest.approx(2.0 * pibar * inv_mean, abs=1e-10)
        assert rep.gap > 0
        assert not rep.equality

    def test_phi_tables_monotone(self):
        rep = metrics.gap_report(
            md.Medium(_sin_mobility(), md.StationaryDensity.constant(1.0)),
            eps_list=[1 / 4, 1 / 8],
        )
        for eps, cost in rep.phi_tables.items():
            x = np.linspace(0, 1, 257)
            vals = cost.phi(x)
            assert np.all(np.diff(vals) > 0)


class TestWasserstein:
    def _bump(self, n, center, width=0.08, floor=0.05):
        x = (np.arange(n) + 0.5) / n
        rho = floor + np.exp(-((x - center) ** 2) / (2 * width**2))
        return rho / (rho.sum() / n)

    def test_identical_densities(self):
        rho = self._bump(128, 0.4)
        assert metrics.wasserstein_1d(rho, rho, metrics.TransportCost.euclidean()) == 0.0

    def test_shift_is_translation_distance(self):
        # translation needs (near-)compact support away from the boundary:
        # floor mass does not translate, it redistributes through the ends
        n, shift_cells = 256, 32
        rho0 = self._bump(n, 0.35, width=0.05, floor=1e-9)
        rho1 = np.roll(rho0, shift_cells)
        w = metrics.wasserstein_1d(rho0, rho1, metrics.TransportCost.euclidean())
        assert w == pytest.approx(shift_cells / n, rel=1e-6)

    def test_constant_mobility_scales_euclidean(self):
        b = 3.0
        mob = md.MobilityTensor.constant(b)
        rho0 = self._bump(128, 0.3)
        rho1 = self._bump(128, 0.6)
        w_eps = metrics.wasserstein_1d(rho0, rho1, metrics.TransportCost.from_eps(mob, 1 / 8))
        w_euc = metrics.wasserstein_1d(rho0, rho1, metrics.TransportCost.euclidean())
        assert w_eps == pytest.approx(np.sqrt(b) * w_euc, rel=1e-12)

    def test_triangle_inequality_random_triples(self):
        rng = np.random.default_rng(21)
        mob = _sin_mobility()
        costs = [
            metrics.TransportCost.euclidean(),
            metrics.TransportCost.from_eps(mob, 1 / 8),
            metrics.TransportCost.gromov_hausdorff(mob),
            metrics.TransportCost.induced(2.0),
        ]
        for _ in range(12):
            rhos = []
            for _ in range(3):
                raw = rng.uniform(0.2, 2.0, size=64)
                rhos.append(raw / (raw.sum() / 64))
            for cost in costs:
                d01 = metrics.wasserstein_1d(rhos[0], rhos[1], cost)
                d12 = metrics.wasserstein_1d(rhos[1], rhos[2], cost)
                d02 = metrics.wasserstein_1d(rhos[0], rhos[2], cost)
                assert d02 <= d01 + d12 + 1e-9

    def test_unnormalized_rejected(self):
        rho = np.ones(32) * 2.0
        with pytest.raises(metrics.MetricError, match="normalized"):
            metrics.wasserstein_1d(rho, rho, metrics.TransportCost.euclidean())


class TestCheckerboard:
    def test_equal_weights_gridline_target(self):
        g = metrics.GeodesicGrid2D(eps=1 / 4, alpha=1.0, beta=1.0)
        # target on the bottom edge: straight run along the line
        assert metrics.checkerboard_geodesic(g, (0.75, 0.0)) == pytest.approx(0.75, rel=1e-12)

    def test_skeleton_limit_diagonal(self):
        g = metrics.GeodesicGrid2D(eps=1 / 16, alpha=0.25, beta=1.0)
        val = metrics.checkerboard_geodesic(g, (1.0, 1.0))
        want = metrics.finsler_limit(0.25, (0.0, 0.0), (1.0, 1.0))
        assert want == pytest.approx(1.0)
        assert val == pytest.approx(want, rel=0.05)
        # the averaged tensor cannot see the skeleton: strict comparison
        b_bar = 1.0 * np.eye(2)
        assert metrics.d_bar(b_bar, (0, 0), (1, 1)) > val

    def test_refinement_never_increases_distance(self):
        vals = []
        for spacing in (1 / 64, 1 / 128):
            g = metrics.GeodesicGrid2D(eps=1 / 8, alpha=0.25, beta=1.0, spacing=spacing)
            vals.append(metrics.checkerboard_geodesic(g, (0.625, 0.875)))
        assert vals[1] <= vals[0] + 1e-12

    def test_checkerboard_effective_tensor_is_interior_value(self):
        mob = md.MobilityTensor.checkerboard(alpha=0.25, beta=1.0)
        m = md.Medium(mob, md.StationaryDensity.constant(1.0, dim=2))
        eff = cell.effective_tensors(m, ycells=32)
        assert eff.B_bar[0] == pytest.approx(np.eye(2) * 1.0, abs=1e-12)

    def test_spacing_must_divide_eps(self):
        with pytest.raises(metrics.MetricError, match="spacing"):
            metrics.GeodesicGrid2D(eps=1 / 4, alpha=0.5, beta=1.0, spacing=1 / 6)

    def test_off_lattice_target_rejected(self):
        g = metrics.GeodesicGrid2D(eps=1 / 4, alpha=0.5, beta=1.0)
        with pytest.raises(metrics.MetricError, match="lattice"):
            metrics.checkerboard_geodesic(g, (0.31, 0.5))


def test_gap_report_uniform_variant_uses_limit_density():
    # vanishing-oscillation density: the limit is pi0, so a constant B gives
    # equality no matter the transient pi1
    mob = md.MobilityTensor.constant(2.0)
    den = md.StationaryDensity.uniform("1.3", "0.5*sin(2*pi*y)")
    rep = metrics.gap_report(md.Medium(mob, den))
    assert rep.equality
    assert abs(rep.gap) <= 1e-10
    # oscillatory B with the same limit density: strict gap
    den2 = md.StationaryDensity.uniform("1.3", "0.5*sin(2*pi*y)")
    mob2 = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
    rep2 = metrics.gap_report(md.Medium(mob2, den2))
    assert not rep2.equality
    assert rep2.gap > 0


def test_wasserstein_converges_to_minimum_path_cost():
    mob = _sin_mobility()
    x = (np.arange(256) + 0.5) / 256
    rho0 = 1e-6 + np.exp(-((x - 0.3) ** 2) / 0.005)
    rho1 = 1e-6 + np.exp(-((x - 0.65) ** 2) / 0.005)
    rho0 /= rho0.sum() / 256
    rho1 /= rho1.sum() / 256
    w_gh = metrics.wasserstein_1d(rho0, rho1, metrics.TransportCost.gromov_hausdorff(mob))
    errs = [abs(metrics.wasserstein_1d(rho0, rho1, metrics.TransportCost.from_eps(mob, e))
                - w_gh)
            for e in (1 / 4, 1 / 8, 1 / 16, 1 / 32)]
    assert errs[0] > errs[1] > errs[2] > errs[3]
