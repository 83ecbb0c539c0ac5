import math

import numpy as np
import pytest

from ghost_optics.errors import FitError, InsufficientDataError, InvalidArgumentError, ShapeError
from ghost_optics.models.biphoton import DetectorPlane, Pattern
from ghost_optics.models.estimators import NOT_SUFFICIENT_CAVEAT, Envelope
from ghost_optics.services.biphoton import (
    aperture_average,
    analytic_ghost_interference,
    ghost_image_pattern,
    klyshko_interference_pattern,
    magnification,
    momentum_spread_to_focal_blur,
    sample_counts,
    smear_pattern,
)
from ghost_optics.services.estimators import (
    FWHM_FACTOR,
    SmearedFringes,
    blur_for_fwhm_excess,
    divergence_to_single_uncertainty,
    envelope_feature_contrast,
    epr_report,
    fit_image,
    fit_interference,
    fringe_contrast,
    fwhm,
    interference_jacobian,
    interference_model,
    position_uncertainty_from_image,
    rect_gauss_fwhm,
    smeared_interference_model,
    visibility_to_sum_uncertainty,
)
from ghost_optics.services.optics import make_grid

from conftest import MM, PER_MM, WAVELENGTH

SCALE = WAVELENGTH * 0.510
M_PRESET = 1.42 / 0.79


def focal_pattern(x, rates):
    return Pattern(positions=x, rates=rates, label=DetectorPlane.FOCAL)


@pytest.fixture(scope="module")
def scan():
    return np.arange(-500, 501) * 10e-6


@pytest.fixture(scope="module")
def image_grid():
    return make_grid(2048, 4 * MM)


class TestInterferenceModel:
    """Fringe model and its analytic Jacobian"""

    @pytest.mark.parametrize("envelope", list(Envelope))
    def test_jacobian_matches_finite_differences(self, scan, envelope):
        width = 0.165 * MM if envelope == Envelope.SINC else 1.2 * MM
        params = np.array([1.3, 0.02 * MM, 0.7, width, 0.4 * MM])
        analytic = interference_jacobian(scan, params, SCALE, envelope)
        numeric = np.empty_like(analytic)
        for i in range(params.size):
            h = 1e-6 * max(abs(params[i]), 1e-4 * MM)
            up, down = params.copy(), params.copy()
            up[i] += h
            down[i] -= h
            numeric[:, i] = (
                interference_model(scan, up, SCALE, envelope) - interference_model(scan, down, SCALE, envelope)
            ) / (2 * h)
        for i in range(params.size):
            column = np.max(np.abs(numeric[:, i]))
            np.testing.assert_allclose(analytic[:, i], numeric[:, i], rtol=1e-5, atol=1e-5 * column)

    def test_peak_value(self):
        params = (2.0, 0.0, 0.5, 0.165 * MM, 0.4 * MM)
        assert interference_model(np.array([0.0]), params, SCALE)[0] == pytest.approx(1.5)

    def test_matches_ideal_rate_at_full_visibility(self, scan, geometry):
        params = (1.0, 0.0, 1.0, 0.165 * MM, 0.4 * MM)
        np.testing.assert_allclose(
            interference_model(scan, params, SCALE), analytic_ghost_interference(scan, geometry), atol=1e-12
        )


class TestSmearedFringes:
    """Blurred, aperture-averaged fringe template"""

    def test_matches_smeared_pattern(self, scan, geometry):
        blur = momentum_spread_to_focal_blur(2.5 * PER_MM, geometry)
        ideal = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        expected = aperture_average(smear_pattern(ideal, blur), 0.1 * MM).rates
        template = smeared_interference_model(scan, (1.0, 0.0, blur, 0.165 * MM, 0.4 * MM), SCALE, aperture=0.1 * MM)
        inner = np.abs(scan) <= 3.5 * MM
        np.testing.assert_allclose(template[inner], expected[inner], atol=1e-9)

    def test_zero_blur_is_the_bare_model(self, scan):
        params = (1.3, 0.02 * MM, 0.0, 0.165 * MM, 0.4 * MM)
        np.testing.assert_allclose(
            smeared_interference_model(scan, params, SCALE),
            interference_model(scan, (1.3, 0.02 * MM, 1.0, 0.165 * MM, 0.4 * MM), SCALE),
            atol=1e-12,
        )

    def test_jacobian_matches_finite_differences(self, scan):
        template = SmearedFringes(scan, SCALE, aperture=0.1 * MM, max_blur=0.5 * MM)
        params = np.array([1.3, 0.02 * MM, (0.12 * MM) ** 2, 0.165 * MM, 0.4 * MM])
        analytic = template.jacobian(params)
        for i in range(params.size):
            h = 1e-6 * abs(params[i])
            up, down = params.copy(), params.copy()
            up[i] += h
            down[i] -= h
            numeric = (template(up) - template(down)) / (2 * h)
            column = np.max(np.abs(numeric))
            np.testing.assert_allclose(analytic[:, i], numeric, rtol=1e-5, atol=1e-5 * column)

    def test_contrast_law(self):
        blur = 0.14 * MM
        kappa = 2 * math.pi * 0.4 * MM / SCALE
        assert fringe_contrast(blur ** 2, 0.4 * MM, SCALE) == pytest.approx(math.exp(-((kappa * blur) ** 2) / 2))
        assert fringe_contrast(0.0, 0.4 * MM, SCALE) == 1.0


class TestFitInterference:
    """Visibility fit"""

    def test_ideal_pattern_has_unit_visibility(self, scan, geometry):
        data = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        fit = fit_interference(data, geometry)
        assert fit.visibility_V == pytest.approx(1.0, abs=1e-5)
        assert fit.fitted_d == pytest.approx(0.4 * MM, rel=1e-3)
        assert fit.fitted_a == pytest.approx(0.165 * MM, rel=1e-3)
        assert fit.residual_rms < 1e-5
        assert fit.bootstrap_stderr is None
        assert fit.n_fringes == pytest.approx(10 * MM * 0.4 * MM / SCALE)

    def test_smeared_pattern(self, scan, geometry):
        blur = momentum_spread_to_focal_blur(2.5 * PER_MM, geometry)
        ideal = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        smeared = smear_pattern(ideal, blur)
        # keep clear of the reflected scan edges
        fit = fit_interference(smeared, geometry, window=4.4 * MM)
        assert fit.visibility_V == pytest.approx(math.exp(-0.5), rel=2e-3)
        assert fit.blur_sigma == pytest.approx(blur, rel=5e-3)
        assert fit.parameter_names[2] == "blur_variance"

    def test_detector_aperture_in_template(self, scan, geometry):
        blur = momentum_spread_to_focal_blur(2.5 * PER_MM, geometry)
        ideal = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        averaged = aperture_average(smear_pattern(ideal, blur), 0.1 * MM)
        corrected = fit_interference(averaged, geometry, window=3.5 * MM, aperture=0.1 * MM)
        plain = fit_interference(averaged, geometry, window=3.5 * MM)
        assert corrected.visibility_V == pytest.approx(math.exp(-0.5), rel=2e-3)
        assert plain.visibility_V < 0.99 * math.exp(-0.5)

    def test_negative_aperture(self, scan, geometry):
        data = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        with pytest.raises(InvalidArgumentError):
            fit_interference(data, geometry, aperture=-1e-6)

    def test_non_uniform_scan(self, scan, geometry):
        x = np.sort(np.append(scan, 5e-6))
        with pytest.raises(ShapeError):
            fit_interference(focal_pattern(x, analytic_ghost_interference(x, geometry)), geometry)

    def test_gaussian_envelope(self, scan, geometry):
        truth = (3.0, 0.05 * MM, 0.6, 1.2 * MM, 0.4 * MM)
        data = focal_pattern(scan, interference_model(scan, truth, SCALE, Envelope.GAUSSIAN))
        fit = fit_interference(data, geometry, envelope="gaussian")
        assert fit.envelope == Envelope.GAUSSIAN
        assert fit.visibility_V == pytest.approx(0.6, rel=1e-4)
        assert fit.fitted_a == pytest.approx(1.2 * MM, rel=1e-4)
        assert fit.envelope_center == pytest.approx(0.05 * MM, abs=1e-4 * MM)

    def test_pinned_geometry(self, scan, geometry):
        data = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        fit = fit_interference(data, geometry, free_geometry=False)
        assert fit.fitted_a == pytest.approx(0.165 * MM, rel=1e-9)
        assert fit.fitted_d == pytest.approx(0.4 * MM, rel=1e-9)

    def test_poisson_round_trip(self, reference_model, geometry, default_grid, fast_bootstrap):
        """Counts from sigma_sum = 2.5 1/mm give back sigma_sum within 10%"""
        pattern = klyshko_interference_pattern(reference_model, geometry, default_grid)
        counts = sample_counts(pattern, 1_000_000, seed=0)
        fit = fit_interference(counts, geometry, window=5 * MM)
        sigma = visibility_to_sum_uncertainty(fit.visibility_V, 0.4 * MM)
        assert 2.25 * PER_MM <= sigma <= 2.75 * PER_MM
        assert fit.bootstrap_stderr is not None and fit.bootstrap_stderr > 0
        assert fit.quoted_stderr >= fit.visibility_stderr

    def test_counts_fit_is_reproducible(self, reference_model, geometry, default_grid):
        pattern = klyshko_interference_pattern(reference_model, geometry, default_grid)
        counts = sample_counts(pattern, 100_000, seed=4)
        first = fit_interference(counts, geometry, window=5 * MM, bootstrap=5)
        second = fit_interference(counts, geometry, window=5 * MM, bootstrap=5)
        assert first.visibility_V == second.visibility_V
        assert first.bootstrap_stderr == second.bootstrap_stderr

    def test_too_few_fringes(self, scan, geometry):
        data = focal_pattern(scan, analytic_ghost_interference(scan, geometry))
        with pytest.raises(InsufficientDataError) as excinfo:
            fit_interference(data, geometry, window=1 * MM)
        assert excinfo.value.diagnostics["n_fringes"] < 5
        assert isinstance(excinfo.value, FitError)

    def test_empty_data(self, scan, geometry):
        with pytest.raises(InsufficientDataError):
            fit_interference(focal_pattern(scan, np.zeros_like(scan)), geometry)


class TestCountsCalibration:
    """Poisson fits across seeds: unbiased V with honest Fisher errors"""

    @pytest.fixture(scope="class")
    def seeded_fits(self, reference_model, geometry, default_grid):
        pattern = klyshko_interference_pattern(reference_model, geometry, default_grid)
        return [
            fit_interference(sample_counts(pattern, 100_000, seed=seed), geometry, window=5 * MM, bootstrap=0)
            for seed in range(8)
        ]

    def test_visibility_within_three_errors(self, seeded_fits):
        truth = math.exp(-0.5)
        for fit in seeded_fits:
            assert fit.bootstrap_stderr is None
            assert 0 < fit.visibility_stderr < 0.02
            assert abs(fit.visibility_V - truth) < 3 * fit.quoted_stderr

    def test_scatter_matches_reported_error(self, seeded_fits):
        values = np.array([fit.visibility_V for fit in seeded_fits])
        reported = np.mean([fit.visibility_stderr for fit in seeded_fits])
        assert 0.4 <= np.std(values, ddof=1) / reported <= 2.0


class TestVisibilityInversion:
    """sigma_sum from the fringe visibility"""

    @pytest.mark.parametrize(
        "visibility, expected",
        [(math.exp(-0.5), 2.5 * PER_MM), (math.exp(-2.0), 5.0 * PER_MM), (1.0, 0.0)],
    )
    def test_values(self, visibility, expected):
        assert visibility_to_sum_uncertainty(visibility, 0.4 * MM) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("visibility", [0.0, -0.1, 1.1])
    def test_out_of_range(self, visibility):
        with pytest.raises(InvalidArgumentError):
            visibility_to_sum_uncertainty(visibility, 0.4 * MM)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.5, 4.0, 5.0])
    def test_inverts_visibility_law(self, sigma):
        d = 0.4 * MM
        visibility = math.exp(-((d * sigma * PER_MM) ** 2) / 2)
        assert visibility_to_sum_uncertainty(visibility, d) == pytest.approx(sigma * PER_MM, rel=1e-10)

    def test_published_visibility(self):
        assert visibility_to_sum_uncertainty(0.607, 0.4 * MM) == pytest.approx(2.5 * PER_MM, rel=5e-3)


class TestWidths:
    """FWHM helpers"""

    def test_rectangle(self):
        x = np.arange(-1000, 1001) * 1e-6
        rect = focal_pattern(x, (np.abs(x) <= 0.3 * MM).astype(float))
        assert fwhm(rect) == pytest.approx(0.6 * MM, abs=2e-6)

    def test_gaussian(self):
        x = np.arange(-2000, 2001) * 1e-6
        sigma = 0.2 * MM
        assert fwhm(focal_pattern(x, np.exp(-0.5 * (x / sigma) ** 2))) == pytest.approx(FWHM_FACTOR * sigma, rel=1e-3)

    def test_peak_selector(self):
        x = np.arange(-2000, 2001) * 1e-6
        rates = np.exp(-0.5 * ((x - 1 * MM) / (0.1 * MM)) ** 2) + 0.5 * np.exp(-0.5 * ((x + 1 * MM) / (0.2 * MM)) ** 2)
        pattern = focal_pattern(x, rates)
        assert fwhm(pattern, (-2 * MM, 0.0)) == pytest.approx(FWHM_FACTOR * 0.2 * MM, rel=1e-3)
        assert fwhm(pattern, (0.0, 2 * MM)) == pytest.approx(FWHM_FACTOR * 0.1 * MM, rel=1e-3)

    def test_peak_outside_window(self):
        x = np.arange(-2000, 2001) * 1e-6
        pattern = focal_pattern(x, np.exp(-0.5 * (x / (0.5 * MM)) ** 2))
        with pytest.raises(ShapeError):
            fwhm(pattern, (0.0, 0.3 * MM))

    def test_rect_gauss_limits(self):
        width = 0.3 * MM
        assert rect_gauss_fwhm(width, 0.0) == width
        wide = 3 * MM
        assert rect_gauss_fwhm(width, wide) == pytest.approx(
            FWHM_FACTOR * math.sqrt(wide ** 2 + width ** 2 / 12), rel=1e-3
        )
        values = [rect_gauss_fwhm(width, s) for s in (0.01 * MM, 0.05 * MM, 0.1 * MM)]
        assert values == sorted(values) and values[0] > width

    def test_blur_inverts_excess(self):
        width = M_PRESET * 0.165 * MM
        blur = blur_for_fwhm_excess(0.11 * MM, width)
        assert rect_gauss_fwhm(width, blur) - width == pytest.approx(0.11 * MM, rel=1e-9)
        assert blur_for_fwhm_excess(0.0, width) == 0.0
        with pytest.raises(InvalidArgumentError):
            blur_for_fwhm_excess(-1e-6, width)


class TestFitImage:
    """Ghost-image blur fit"""

    def test_clean_image(self, reference_model, geometry, image_grid):
        pattern = ghost_image_pattern(reference_model, geometry, 0.05 * MM, image_grid)
        fit = fit_image(pattern, geometry)
        assert fit.blur_sigma == pytest.approx(0.05 * MM, rel=1e-3)
        assert fit.offset == pytest.approx(0.0, abs=1e-3 * MM)
        assert fit.magnification == pytest.approx(M_PRESET)
        assert fit.fwhm_ideal == pytest.approx(magnification(geometry) * 0.165 * MM)

    def test_sharp_image(self, reference_model, geometry, image_grid):
        fit = fit_image(ghost_image_pattern(reference_model, geometry, 0.0, image_grid), geometry)
        assert fit.blur_sigma < 2 * image_grid.spacing
        assert fit.fwhm_fitted[0] == pytest.approx(fit.fwhm_ideal, abs=2 * image_grid.spacing)
        assert position_uncertainty_from_image(fit) == pytest.approx(0.0, abs=2 * image_grid.spacing)

    def test_counts_round_trip(self, reference_model, geometry, image_grid, fast_bootstrap):
        """FWHM excess of 0.11 mm comes back within 0.09-0.13 mm"""
        width = magnification(geometry) * 0.165 * MM
        blur = blur_for_fwhm_excess(0.11 * MM, width)
        pattern = ghost_image_pattern(reference_model, geometry, blur, image_grid)
        counts = sample_counts(pattern, 1_000_000, seed=0)
        fit = fit_image(counts, geometry)
        excess = position_uncertainty_from_image(fit)
        assert 0.09 * MM <= excess <= 0.13 * MM
        assert fit.peak_distance == pytest.approx(0.72 * MM, abs=5e-3 * MM)
        assert fit.bootstrap_stderr is not None
        assert position_uncertainty_from_image(fit, object_plane=True) == pytest.approx(excess / fit.magnification)

    def test_uncertainty_grows_with_blur(self, reference_model, geometry, image_grid):
        excesses = []
        for blur in (0.02 * MM, 0.05 * MM, 0.08 * MM):
            fit = fit_image(ghost_image_pattern(reference_model, geometry, blur, image_grid), geometry)
            excesses.append(position_uncertainty_from_image(fit))
        assert excesses == sorted(excesses)
        assert excesses[0] > 0

    def test_single_peak(self, geometry, image_grid):
        x = image_grid.positions
        pattern = Pattern(positions=x, rates=np.exp(-0.5 * (x / (0.3 * MM)) ** 2), label=DetectorPlane.IMAGE)
        with pytest.raises(ShapeError):
            fit_image(pattern, geometry)

    def test_window_misses_a_peak(self, reference_model, geometry):
        half = make_grid(1024, 2 * MM, center=1 * MM)
        pattern = ghost_image_pattern(reference_model, geometry, 0.05 * MM, half)
        with pytest.raises(ShapeError):
            fit_image(pattern, geometry)


class TestEprReport:
    """EPR inequalities and the uncertainty product"""

    def test_published_values(self):
        report = epr_report(
            dk1=23 * PER_MM, dk2=23 * PER_MM, dk_sum=2.5 * PER_MM, dx1=0.165 * MM, dx2=0.165 * MM, dx_diff=0.11 * MM
        )
        assert report.epr_momentum_ok and report.epr_position_ok
        assert report.product == pytest.approx(0.275, rel=1e-9)
        assert report.product_below_one
        assert report.product_caveat == NOT_SUFFICIENT_CAVEAT
        assert report.classical_bounds is not None
        assert not report.classical_bounds.eq8_momentum_ok
        assert "classical quadrature bounds are violated" in report.notes

    def test_classical_values(self):
        report = epr_report(
            dk1=5 * PER_MM, dk2=5 * PER_MM, dk_sum=8 * PER_MM, dx1=0.1 * MM, dx2=0.1 * MM, dx_diff=0.15 * MM
        )
        assert not report.epr_momentum_ok and not report.epr_position_ok
        assert report.product == pytest.approx(1.2)
        assert report.product_caveat is None
        assert report.classical_bounds.eq8_momentum_ok and report.classical_bounds.eq8_position_ok
        assert report.notes == []

    def test_small_product_with_failed_inequality(self):
        report = epr_report(
            dk1=2 * PER_MM, dk2=2 * PER_MM, dk_sum=2.5 * PER_MM, dx1=0.165 * MM, dx2=0.165 * MM, dx_diff=0.11 * MM
        )
        assert not report.epr_momentum_ok
        assert report.product_caveat == NOT_SUFFICIENT_CAVEAT
        assert "product is below 1 while at least one EPR inequality fails" in report.notes

    def test_all_zero(self):
        report = epr_report(0, 0, 0, 0, 0, 0)
        assert not report.epr_momentum_ok and not report.epr_position_ok
        assert report.product == 0.0
        assert report.classical_bounds is None
        assert any("degenerate" in note for note in report.notes)

    @pytest.mark.parametrize("s", [1e-3, 1.0, 1e3])
    def test_unit_scale_invariance(self, s):
        base = epr_report(23 * PER_MM, 23 * PER_MM, 2.5 * PER_MM, 0.165 * MM, 0.165 * MM, 0.11 * MM)
        scaled = epr_report(23 * PER_MM * s, 23 * PER_MM * s, 2.5 * PER_MM * s, 0.165 * MM / s, 0.165 * MM / s, 0.11 * MM / s)
        assert scaled.product == pytest.approx(base.product, rel=1e-12)
        assert (scaled.epr_momentum_ok, scaled.epr_position_ok) == (base.epr_momentum_ok, base.epr_position_ok)

    def test_negative_input(self):
        with pytest.raises(InvalidArgumentError):
            epr_report(-1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    def test_quantities_carry_units(self):
        out = epr_report(23 * PER_MM, 23 * PER_MM, 2.5 * PER_MM, 0.165 * MM, 0.165 * MM, 0.11 * MM).as_quantities()
        assert out["dk_sum"] == {"value": 2.5 * PER_MM, "unit": "1/m"}
        assert out["dx_diff"]["unit"] == "m"
        assert "classical_bounds" in out


class TestDivergence:
    """Single-photon momentum spread from the divergence angle"""

    @pytest.mark.parametrize("theta, expected", [(2.6e-3, 23.3 * PER_MM), (1e-3, 8.95 * PER_MM)])
    def test_values(self, theta, expected):
        assert divergence_to_single_uncertainty(theta, WAVELENGTH) == pytest.approx(expected, rel=2e-3)

    @pytest.mark.parametrize("theta, wavelength", [(0.0, WAVELENGTH), (1e-3, 0.0), (-1e-3, WAVELENGTH)])
    def test_invalid(self, theta, wavelength):
        with pytest.raises(InvalidArgumentError):
            divergence_to_single_uncertainty(theta, wavelength)


class TestFeatureContrast:
    """Deviation from a smooth envelope"""

    def test_gaussian_is_featureless(self):
        x = np.arange(-2000, 2001) * 1e-6
        pattern = focal_pattern(x, np.exp(-0.5 * (x / (0.8 * MM)) ** 2))
        assert envelope_feature_contrast(pattern) < 1e-3

    def test_fringes_are_features(self):
        x = np.arange(-2000, 2001) * 1e-6
        rates = np.exp(-0.5 * (x / (0.8 * MM)) ** 2) * (1 + 0.5 * np.cos(2 * math.pi * x / (0.4 * MM)))
        assert envelope_feature_contrast(focal_pattern(x, rates), window=2 * MM) > 0.2

    def test_too_few_samples(self):
        with pytest.raises(ShapeError):
            envelope_feature_contrast(focal_pattern(np.arange(3.0), np.ones(3)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
