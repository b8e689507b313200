import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circmode import (CircularSample, KdeModel, build_calibration, critical_concentration,
                      find_turning_points, sample_calibration)
from circmode._validation import TWO_PI
from circmode.calibration import (BumpSpec, LinkSpec, bump_eval, bump_width, link_eval)
from circmode.circular import default_grid_size

from conftest import draw, two_clusters


def count_grid_modes(values):
    # rounding noise over empty arcs is flattened first
    values = np.where(values > 1e-9 * values.max(), values, 0.0)
    d = np.diff(np.r_[values, values[0]])
    s = np.sign(d[d != 0])
    return int(np.sum((s > 0) & (np.roll(s, -1) < 0)))


class TestLink:
    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.1, 3.0), st.floats(0.05, 2.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0),
           st.booleans())
    def test_endpoints_and_monotone(self, a0, width, b0, b1, rising):
        a1 = a0 * 1.7 if rising else a0 * 0.4
        sign = 1.0 if rising else -1.0
        spec = LinkSpec(0.3, 0.3 + width, a0, a1, sign * b0, sign * b1)
        assert link_eval(spec, spec.u) == pytest.approx(a0, rel=1e-12)
        assert link_eval(spec, spec.v) == pytest.approx(a1, rel=1e-12)
        assert link_eval(spec, spec.u, 1) == pytest.approx(sign * b0, rel=1e-9, abs=1e-12)
        assert link_eval(spec, spec.v, 1) == pytest.approx(sign * b1, rel=1e-9, abs=1e-12)
        t = np.linspace(spec.u, spec.v, 201)
        slope = link_eval(spec, t, 1)
        assert np.all(sign * slope >= -1e-9 * (1 + np.abs(slope).max()))

    def test_derivative_matches_finite_difference(self):
        spec = LinkSpec(1.0, 1.6, 0.2, 0.5, 0.3, 0.1)
        t = np.linspace(1.05, 1.55, 9)
        fd = (link_eval(spec, t + 1e-6) - link_eval(spec, t - 1e-6)) / 2e-6
        assert np.allclose(link_eval(spec, t, 1), fd, atol=1e-6)

    def test_rejects_wrong_slope_sign(self):
        with pytest.raises(ValueError):
            LinkSpec(0.0, 1.0, 0.1, 0.5, -0.2, 0.1)
        with pytest.raises(ValueError):
            LinkSpec(1.0, 1.0, 0.1, 0.5, 0.0, 0.0)


class TestBump:
    @pytest.mark.parametrize("delta", [-1, 1])
    def test_centre_value_and_curvature(self, delta):
        spec = BumpSpec(center=2.0, height=0.4, curvature=1.3, eta=0.2, delta=delta)
        assert bump_eval(spec, 2.0) == pytest.approx(0.4)
        assert bump_eval(spec, 2.0, 1) == pytest.approx(0.0, abs=1e-15)
        assert bump_eval(spec, 2.0, 2) == pytest.approx(delta * 1.3)
        assert spec.curvature_ratio == pytest.approx(1.3 / 0.4**3)
        t = np.linspace(1.95, 2.05, 7)
        h = 1e-5
        fd = (bump_eval(spec, t + h) - 2 * bump_eval(spec, t) + bump_eval(spec, t - h)) / h**2
        assert np.allclose(bump_eval(spec, t, 2), fd, atol=1e-4)

    @pytest.mark.parametrize("delta,level", [(-1, 0.1), (1, 0.9)])
    def test_width_keeps_half_point_on_centre_side(self, delta, level):
        H, c = 0.5, 4.0
        eta = bump_width(H, c, level, delta, room=10.0)
        spec = BumpSpec(0.0, H, c, eta, delta)
        mid = 0.5 * (H + level)
        v = bump_eval(spec, eta / 2)
        assert (v >= mid - 1e-12) if delta < 0 else (v <= mid + 1e-12)
        assert bump_width(H, c, level, delta, room=eta / 3) == pytest.approx(eta / 3)


@pytest.fixture(scope="module")
def bimodal_density():
    s = two_clusters(150, seed=11, kappa=4.0)
    return s, build_calibration(s, 2, random_state=0)


class TestCalibrationDensity:
    def test_continuous_and_smooth_at_junctions(self, bimodal_density):
        _, g = bimodal_density
        eps = 1e-9
        for j in g.junctions:
            left, right = g.raw(j - eps), g.raw(j + eps)
            assert left == pytest.approx(right, abs=1e-6)
            dl, dr = g.raw(j - eps, 1), g.raw(j + eps, 1)
            assert dl == pytest.approx(dr, abs=1e-4 * (1 + abs(dl)))

    def test_turning_points_and_curvature_ratios(self, bimodal_density):
        s, g = bimodal_density
        assert g.k == 2 and g.n_skipped == 0
        base = KdeModel(s, g.base.nu)
        pts = find_turning_points(base, 2 * default_grid_size(base.n_terms))
        assert np.allclose(g.turning_points, pts.ordered()[0])
        target = (np.abs(KdeModel(s, g.nu_pi).deriv(g.turning_points, 2))
                  / base.pdf(g.turning_points) ** 3)
        assert np.allclose(g.curvature_ratios, target, rtol=1e-10)
        got = np.abs(g.raw(g.turning_points, 2)) / g.raw(g.turning_points) ** 3
        assert np.allclose(got, target, rtol=1e-8)

    def test_same_number_of_modes_as_null(self, bimodal_density):
        _, g = bimodal_density
        vals = g.grid(1 << 15)
        assert count_grid_modes(vals) == 2
        assert vals.min() >= 0

    def test_normalized(self, bimodal_density):
        _, g = bimodal_density
        vals = g.grid(1 << 16) / g.normalizer
        assert vals.mean() * TWO_PI == pytest.approx(1.0, abs=1e-6)
        assert g.cdf(TWO_PI - 1e-12) == pytest.approx(1.0, abs=1e-6)
        assert np.all(np.diff(g.cdf_values) >= 0)

    def test_draws_follow_cdf(self, bimodal_density):
        from scipy import stats

        _, g = bimodal_density
        x = sample_calibration(g, 20_000, np.random.default_rng(0))
        assert stats.kstest(x.angles, g.cdf).pvalue > 1e-3

    @pytest.mark.parametrize("model,k", [("M1", 1), ("M2", 1), ("M3", 1), ("M11", 1),
                                         ("M21", 2)])
    def test_reference_models_build(self, model, k):
        for seed in range(3):
            g = build_calibration(draw(model, 200, seed), k)
            assert g.k == k
            assert count_grid_modes(g.grid(1 << 14)) == k

    def test_bad_parameters(self):
        s = two_clusters(40, seed=1)
        with pytest.raises(ValueError):
            build_calibration(s, 1, varpi=0.3)
        with pytest.raises(ValueError):
            build_calibration(s, 1, sigma=0.6)

    def test_csv_export(self, bimodal_density, tmp_path):
        _, g = bimodal_density
        path = tmp_path / "g.csv"
        g.to_csv(path, points=64)
        lines = path.read_text().splitlines()
        assert lines[0] == "theta,g,segment" and len(lines) == 65


class TestDocumentedExamples:
    def test_mode_bump_decreases_away_from_centre(self):
        spec = BumpSpec(center=1.0, height=0.3, curvature=2.0, eta=0.3, delta=-1)
        right = bump_eval(spec, np.linspace(1.0, 1.0 + 0.3 * 0.99, 500))
        left = bump_eval(spec, np.linspace(1.0, 1.0 - 0.3 * 0.99, 500))
        assert np.all(np.diff(right) < 0) and np.all(np.diff(left) < 0)

    def test_equals_kde_outside_modified_regions(self, bimodal_density):
        s, g = bimodal_density
        theta = np.linspace(0, TWO_PI, 4001)
        plain = g.tags(theta) == "kde"
        assert plain.sum() > 1000
        assert np.allclose(g.raw(theta)[plain], g.base.pdf(theta[plain]), rtol=1e-13, atol=0)

    def test_ks_distance_of_many_draws(self, bimodal_density):
        from scipy import stats

        _, g = bimodal_density
        x = g.sample(100_000, np.random.default_rng(3))
        assert stats.kstest(x, g.cdf).statistic < 0.01

    def test_draws_deterministic(self, bimodal_density):
        _, g = bimodal_density
        a = sample_calibration(g, 50, np.random.default_rng(9)).angles
        assert np.array_equal(a, sample_calibration(g, 50, np.random.default_rng(9)).angles)

    def test_sharp_unimodal_draws_centre_on_mode(self):
        s = CircularSample(np.random.default_rng(4).vonmises(2.0, 25.0, 200))
        g = build_calibration(s, 1)
        x = g.sample(10_000, np.random.default_rng(5))
        centre = np.angle(np.mean(np.exp(1j * x)))
        mode = g.turning_points[np.array([nb.delta for nb in g.neighborhoods]) < 0][0]
        assert abs(np.angle(np.exp(1j * (centre - mode)))) < 0.1

    def test_normalizer_near_one(self):
        for seed in range(5):
            g = build_calibration(draw("M11", 200, seed), 2)
            assert 0.9 <= g.normalizer <= 1.1
