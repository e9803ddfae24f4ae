import numpy as np
import pytest

from wgfh import media as md
from wgfh.quadrature import periodic_average


def richardson_trapezoid(f, n=1024):
    """Independent oracle: trapezoid at n and 2n points plus Richardson step."""
    def trap(k):
        y = np.linspace(0.0, 1.0, k + 1)
        v = f(y)
        return (0.5 * (v[0] + v[-1]) + v[1:-1].sum()) / k

    t1, t2 = trap(n), trap(2 * n)
    return t2 + (t2 - t1) / 3.0


class TestSampling:
    def test_constant_medium_passes(self):
        b = md.MobilityTensor.constant(1.0)
        pi = md.StationaryDensity.constant(1.0)
        s = md.sample_medium(b, pi, eps=0.25, cells=64)
        assert np.all(s.B_cells == 1.0)
        assert np.all(s.pi_cells == 1.0)
        assert np.all(s.B_faces[0] == 1.0)
        assert s.cells_per_period == 16

    def test_resonance_rule_too_few_cells_per_period(self):
        b = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        pi = md.StationaryDensity.constant(1.0)
        with pytest.raises(md.MediumError, match="resonance|period"):
            md.sample_medium(b, pi, eps=1 / 8, cells=64)

    def test_resonance_rule_non_divisible(self):
        b = md.MobilityTensor.constant(1.0)
        pi = md.StationaryDensity.constant(1.0)
        with pytest.raises(md.MediumError, match="divisible"):
            md.sample_medium(b, pi, eps=1 / 3, cells=64)

    def test_eps_must_be_unit_fraction(self):
        b = md.MobilityTensor.constant(1.0)
        pi = md.StationaryDensity.constant(1.0)
        with pytest.raises(md.MediumError, match="reciprocal"):
            md.sample_medium(b, pi, eps=0.3, cells=64)

    def test_declared_bound_violation_detected(self):
        # layered values reach 4 but the declared ceiling is 3
        b = md.MobilityTensor.layered([1.0, 4.0], bounds=(1.0, 3.0))
        pi = md.StationaryDensity.constant(1.0)
        with pytest.raises(md.MediumError, match="bounds"):
            md.sample_medium(b, pi, eps=0.25, cells=64)

    def test_layered_faces_are_harmonic_means(self):
        b = md.MobilityTensor.layered([1.0, 3.0])
        pi = md.StationaryDensity.constant(1.0)
        s = md.sample_medium(b, pi, eps=1.0, cells=32)
        # the face sitting on the jump carries the harmonic mean 2ab/(a+b)
        jump_face = s.B_faces[0][15]
        assert jump_face == pytest.approx(2 * 1 * 3 / 4, rel=1e-14)
        interior_face = s.B_faces[0][3]
        assert interior_face == 1.0

    def test_smooth_faces_are_midpoint_values(self):
        b = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
        pi = md.StationaryDensity.constant(1.0)
        s = md.sample_medium(b, pi, eps=0.5, cells=32)
        faces = s.grid.faces()
        assert s.B_faces[0] == pytest.approx(2 + np.sin(2 * np.pi * faces / 0.5), abs=1e-14)

    def test_2d_diagonal_sampling(self):
        b = md.MobilityTensor.from_expr(
            [["2+sin(2*pi*y1)", "0"], ["0", "2+cos(2*pi*y2)"]], bounds=(1, 3), dim=2
        )
        pi = md.StationaryDensity.constant(1.0, dim=2)
        s = md.sample_medium(b, pi, eps=0.5, cells=32)
        assert s.B_cells.shape == (32, 32, 2, 2)
        assert s.B_faces[0].shape == (32, 32)
        assert b.is_diagonal

    def test_uniform_variant_needs_eps(self):
        pi = md.StationaryDensity.uniform("1", "0.5*sin(2*pi*y)")
        with pytest.raises(md.MediumError, match="eps"):
            pi.values((0.0,), (0.25,))
        assert pi.values((0.0,), (0.25,), eps=0.125) == pytest.approx(1.0625)

    def test_uniform_variant_converges_to_pi0(self):
        pi = md.StationaryDensity.uniform("1", "0.5*sin(2*pi*y)")
        y = np.linspace(0, 1, 33)
        sup = [np.abs(pi.values((0.0,), (y,), eps=e) - 1.0).max() for e in (0.25, 0.125, 0.0625)]
        assert sup[0] > sup[1] > sup[2]


class TestAveragePi:
    def test_constant(self):
        pi = md.StationaryDensity.constant(1.0)
        assert md.average_pi(pi) == pytest.approx(1.0, abs=1e-14)

    def test_mean_zero_oscillation(self):
        pi = md.StationaryDensity.general("1 + 0.5*sin(2*pi*y)")
        assert md.average_pi(pi) == pytest.approx(1.0, abs=1e-13)

    def test_offset_sinusoid_against_trapezoid_oracle(self):
        pi = md.StationaryDensity.general("2 + sin(2*pi*y)")
        oracle = richardson_trapezoid(lambda y: 2 + np.sin(2 * np.pi * y))
        assert md.average_pi(pi) == pytest.approx(oracle, abs=1e-10)
        assert md.average_pi(pi) == pytest.approx(2.0, abs=1e-10)

    def test_x_dependent_average(self):
        pi = md.StationaryDensity.oscillatory("1+0.5*x", "0.25*sin(2*pi*y)")
        assert md.average_pi(pi, x=0.5) == pytest.approx(1.25, abs=1e-12)

    def test_uniform_average_is_pi0(self):
        pi = md.StationaryDensity.uniform("1+0.5*x", "sin(2*pi*y)")
        assert md.average_pi(pi, x=0.5) == pytest.approx(1.25, abs=1e-15)

    def test_nonsquare_gibbs_form(self):
        pi = md.StationaryDensity.general("exp(-0.3*cos(2*pi*y))")
        oracle = richardson_trapezoid(lambda y: np.exp(-0.3 * np.cos(2 * np.pi * y)))
        assert md.average_pi(pi) == pytest.approx(oracle, abs=1e-11)


def _families():
    return {
        "sin1d": md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3)),
        "layered": md.MobilityTensor.layered([1.0, 4.0]),
        "const": md.MobilityTensor.constant(2.0),
    }


class TestInvariants:
    @pytest.mark.parametrize("name", ["sin1d", "layered", "const"])
    def test_matched_grids_share_period_pattern(self, name):
        # the per-period sample pattern is the same at eps and eps/2 when the
        # per-period resolution matches: B is a function of y alone
        b = _families()[name]
        pi = md.StationaryDensity.constant(1.0)
        s1 = md.sample_medium(b, pi, eps=1 / 4, cells=64)
        s2 = md.sample_medium(b, pi, eps=1 / 8, cells=128)
        k = s1.cells_per_period
        assert k == s2.cells_per_period
        p1 = s1.B_cells[:k]
        for start in range(0, 128, k):
            np.testing.assert_array_equal(s2.B_cells[start:start + k], p1)

    @pytest.mark.parametrize("name", ["sin1d", "layered", "const"])
    def test_declared_bounds_attained_within_one_percent(self, name):
        b = _families()[name]
        y = (np.arange(4096) + 0.5) / 4096
        vals = b.scalar_values(y)
        c1, c2 = b.bounds
        assert vals.min() <= c1 * 1.01
        assert vals.max() >= c2 * 0.99

    def test_checkerboard_samples_interior_only(self):
        b = md.MobilityTensor.checkerboard(alpha=0.25, beta=1.0)
        y = np.linspace(0.01, 0.99, 17)
        g1, g2 = np.meshgrid(y, y, indexing="ij")
        vals = b.tensor_values(g1, g2)
        assert np.all(vals[..., 0, 0] == 1.0)
        assert b.skeleton == 0.25

    def test_density_positivity_enforced(self):
        pi = md.StationaryDensity.general("sin(2*pi*y)")  # hits zero and below
        with pytest.raises(md.MediumError, match="positive"):
            pi.values((0.0,), (np.linspace(0, 1, 64),))

    def test_conductivity_cells_1d(self):
        m = md.Medium(
            md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3)),
            md.StationaryDensity.general("1+0.25*sin(2*pi*y)"),
        )
        d = m.conductivity_cells(x=0.0, ycells=32)
        c = (np.arange(32) + 0.5) / 32
        want = (1 + 0.25 * np.sin(2 * np.pi * c)) / (2 + np.sin(2 * np.pi * c))
        assert d == pytest.approx(want, rel=1e-14)

    def test_conductivity_cells_uniform_drops_pi0(self):
        m = md.Medium(
            md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3)),
            md.StationaryDensity.uniform("7.5", "0"),
        )
        d = m.conductivity_cells(x=0.0, ycells=16)
        c = (np.arange(16) + 0.5) / 16
        assert d == pytest.approx(1.0 / (2 + np.sin(2 * np.pi * c)), rel=1e-14)


def test_periodic_average_doubles_until_converged():
    val = periodic_average(lambda y: np.exp(np.sin(2 * np.pi * y)))
    oracle = richardson_trapezoid(lambda y: np.exp(np.sin(2 * np.pi * y)), n=4096)
    assert val == pytest.approx(oracle, abs=1e-12)
