"""
Entangled-biphoton ghost interference and ghost imaging.

Coincidence patterns are computed in the advanced-wave picture: the point-like D1
is treated as a source whose wave travels back through the collection lens and the
double slit to the crystal, is reflected there as the conjugate of the backward-
propagated field, and then travels forward through the idler arm to D2. Finite
sum-momentum spread, pump divergence and a bucket D1 enter as Gaussian smears of
the focal plane; a finite scan aperture enters as a boxcar average.
"""

import logging
import math
from typing import Any, Optional, Union

import numpy as np
from scipy import ndimage
from scipy.special import erf

from ghost_optics.errors import ConfigurationError, InvalidArgumentError, ResolutionError
from ghost_optics.models.biphoton import (
    BiphotonModel,
    CountsHistogram,
    D1Mode,
    DetectorPlane,
    GeometryConfig,
    LensCheck,
    Pattern,
    SinglesDetector,
)
from ghost_optics.models.optics import ComplexField, TransverseGrid
from ghost_optics.services.optics import (
    double_slit_mask,
    focal_grid,
    focal_plane_coordinate,
    fourier_transform_lens,
    fresnel_propagate,
    plane_wave,
)
from ghost_optics.services.rng import SeededRNG

logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_FEATURE = 10
IMAGE_LENS_TOLERANCE = 0.02
# Gaussian kernels are truncated at this many standard deviations.
KERNEL_TRUNCATE = 8.0


def _sinc(u: np.ndarray) -> np.ndarray:
    # numpy's sinc is sin(pi x)/(pi x)
    return np.sinc(u / math.pi)


def analytic_ghost_interference(x2: Any, geom: GeometryConfig) -> Any:
    """Ideal coincidence rate sinc^2(pi a x / lambda f) cos^2(pi d x / lambda f), peak 1."""
    x = np.asarray(x2, dtype=np.float64)
    scale = math.pi / (geom.wavelength * geom.f_imaging)
    rate = _sinc(scale * geom.slit.slit_width_a * x) ** 2 * np.cos(scale * geom.slit.slit_separation_d * x) ** 2
    return float(rate) if rate.ndim == 0 else rate


def check_interference_resolution(grid: TransverseGrid, geom: GeometryConfig) -> None:
    """Raise unless the slit width and the focal-plane fringe period get >= 10 samples each."""
    slit_samples = geom.slit.slit_width_a / grid.spacing
    # fringe period lambda f / d over focal spacing lambda f / (n dx) = extent / d
    fringe_samples = grid.extent / geom.slit.slit_separation_d
    if slit_samples < MIN_SAMPLES_PER_FEATURE or fringe_samples < MIN_SAMPLES_PER_FEATURE:
        required = {
            "max_spacing_m": geom.slit.slit_width_a / MIN_SAMPLES_PER_FEATURE,
            "min_extent_m": geom.slit.slit_separation_d * MIN_SAMPLES_PER_FEATURE,
            "min_n": math.ceil(
                MIN_SAMPLES_PER_FEATURE ** 2 * geom.slit.slit_separation_d / geom.slit.slit_width_a
            ),
        }
        raise ResolutionError(
            f"grid under-resolves the experiment: {slit_samples:.1f} samples per slit width and "
            f"{fringe_samples:.1f} samples per focal fringe (need {MIN_SAMPLES_PER_FEATURE} each)",
            required=required,
        )


def momentum_spread_to_focal_blur(sigma_sum: float, geom: GeometryConfig) -> float:
    """Focal-plane blur sigma_x = f sigma lambda / 2pi produced by a wavevector spread."""
    if sigma_sum < 0:
        raise InvalidArgumentError("momentum spread must be non-negative")
    return focal_plane_coordinate(sigma_sum, geom.f_imaging, geom.wavelength)


def detector_visibility_factor(width: float, geom: GeometryConfig) -> float:
    """Fringe-contrast factor of a boxcar scan aperture of ``width`` in the focal plane."""
    kappa = 2.0 * math.pi * geom.slit.slit_separation_d / (geom.wavelength * geom.f_imaging)
    return float(_sinc(np.asarray(kappa * width / 2.0)))


def smear_pattern(p: Pattern, kernel_sigma: float) -> Pattern:
    """Convolve with a unit-area Gaussian of std ``kernel_sigma`` (meters); 0 is the identity."""
    if kernel_sigma < 0:
        raise InvalidArgumentError("kernel_sigma must be non-negative")
    if kernel_sigma == 0:
        return p
    if not p.is_uniform():
        raise InvalidArgumentError("smearing needs uniformly spaced positions")
    rates = ndimage.gaussian_filter1d(
        p.rates, kernel_sigma / p.spacing, mode="reflect", truncate=KERNEL_TRUNCATE
    )
    return Pattern(positions=p.positions, rates=np.clip(rates, 0.0, None), label=p.label)


def boxcar_kernel(width: float, spacing: float) -> np.ndarray:
    """Unit-sum sampled boxcar of ``width``; the fractional end samples are weighted."""
    half = width / (2.0 * spacing)
    whole = int(math.floor(half))
    kernel = np.ones(2 * whole + 1)
    frac = half - whole
    if frac > 0:
        kernel = np.concatenate(([frac], kernel, [frac]))
    return kernel / kernel.sum()


def aperture_average(p: Pattern, width: float) -> Pattern:
    """Average over a scan aperture of ``width`` meters (fractional end samples weighted)."""
    if width < 0:
        raise InvalidArgumentError("aperture width must be non-negative")
    if width == 0:
        return p
    if not p.is_uniform():
        raise InvalidArgumentError("aperture averaging needs uniformly spaced positions")
    rates = ndimage.convolve1d(p.rates, boxcar_kernel(width, p.spacing), mode="reflect")
    return Pattern(positions=p.positions, rates=np.clip(rates, 0.0, None), label=p.label)


def klyshko_focal_field(
    model: BiphotonModel,
    geom: GeometryConfig,
    grid: TransverseGrid,
    mask: Optional[np.ndarray] = None,
) -> ComplexField:
    """Advanced wave from a point-like D1 evaluated in the D2 focal plane."""
    check_interference_resolution(grid, geom)
    transmission = double_slit_mask(grid, geom.slit) if mask is None else np.asarray(mask, dtype=np.float64)
    if transmission.shape != (grid.n,):
        raise InvalidArgumentError("mask length does not match the grid")

    # point source at d1_offset behind the collection lens -> tilted plane wave at the slit
    tilt = -model.wavenumber * geom.d1_offset / geom.f_collection
    illumination = plane_wave(grid, model.wavelength, tilt)
    at_slit = illumination.with_values(illumination.values * transmission)

    # crystal reflection: conjugate of the backward-propagated wave
    at_crystal = fresnel_propagate(at_slit.conjugate(), geom.a1)
    at_lens = fresnel_propagate(at_crystal, geom.a2)
    return fourier_transform_lens(at_lens, geom.f_imaging)


def klyshko_interference_pattern(
    model: BiphotonModel,
    geom: GeometryConfig,
    grid: TransverseGrid,
    mask: Optional[np.ndarray] = None,
) -> Pattern:
    """Ghost interference-diffraction pattern in the D2 focal plane (peak = 1)."""
    focal = klyshko_focal_field(model, geom, grid, mask)
    pattern = Pattern(positions=focal.grid.positions, rates=focal.intensity, label=DetectorPlane.FOCAL)

    blur = momentum_spread_to_focal_blur(model.effective_sigma_sum, geom)
    if geom.d1_detector == D1Mode.BUCKET:
        # a bucket D1 sums over every signal direction
        blur = math.hypot(blur, momentum_spread_to_focal_blur(model.sigma_single, geom))
    logger.debug("klyshko pattern: n=%d focal spacing=%.3e m blur=%.3e m", grid.n, focal.grid.spacing, blur)

    pattern = smear_pattern(pattern, blur)
    pattern = aperture_average(pattern, geom.d2_width)
    return pattern.normalized()


def check_two_photon_lens_equation(geom: GeometryConfig, tol: float = 0.01) -> LensCheck:
    """Dimensionless residual |1/s_i + 1/s_o - 1/f| * f of the two-photon thin-lens equation."""
    s_o, s_i, f = geom.object_distance, geom.image_distance, geom.f_imaging
    residual = abs(1.0 / s_i + 1.0 / s_o - 1.0 / f) * f
    return LensCheck(residual=residual, satisfied=residual <= tol, tolerance=tol)


def magnification(geom: GeometryConfig) -> float:
    """Ghost-image magnification m = s_i / s_o."""
    return geom.image_distance / geom.object_distance


def _require_imaging(geom: GeometryConfig) -> None:
    check = check_two_photon_lens_equation(geom, IMAGE_LENS_TOLERANCE)
    if not check.satisfied:
        raise ConfigurationError(
            f"check_two_photon_lens_equation failed: residual {check.residual:.4f} exceeds "
            f"{IMAGE_LENS_TOLERANCE} (s_o={geom.object_distance} m, s_i={geom.image_distance} m, "
            f"f={geom.f_imaging} m)",
            check="check_two_photon_lens_equation",
        )


def ideal_ghost_image(x3: Any, geom: GeometryConfig) -> Any:
    """1 inside either magnified slit image, 0 elsewhere."""
    _require_imaging(geom)
    m = magnification(geom)
    width, separation = m * geom.slit.slit_width_a, m * geom.slit.slit_separation_d
    x = np.asarray(x3, dtype=np.float64)
    edge = width / 2 * (1 + 1e-9)
    inside = (np.abs(x - separation / 2) <= edge) | (np.abs(x + separation / 2) <= edge)
    rate = inside.astype(np.float64)
    return float(rate) if rate.ndim == 0 else rate


def blurred_slit_image(x: np.ndarray, width: float, separation: float, sigma: float, offset: float = 0.0) -> np.ndarray:
    """Two rectangles of ``width`` at +-separation/2 convolved with a unit-area Gaussian."""
    x = np.asarray(x, dtype=np.float64) - offset
    if sigma == 0:
        edge = width / 2 * (1 + 1e-9)
        return ((np.abs(x - separation / 2) <= edge) | (np.abs(x + separation / 2) <= edge)).astype(np.float64)
    scale = math.sqrt(2.0) * sigma
    total = np.zeros_like(x)
    for c in (-separation / 2, separation / 2):
        total += 0.5 * (erf((x - c + width / 2) / scale) - erf((x - c - width / 2) / scale))
    return total


def ghost_image_pattern(
    model: BiphotonModel,
    geom: GeometryConfig,
    blur_sigma_x: float,
    grid: TransverseGrid,
    include_source_correlation: bool = False,
) -> Pattern:
    """Ideal ghost image convolved with a Gaussian of std ``blur_sigma_x`` (peak = 1)."""
    if blur_sigma_x < 0:
        raise InvalidArgumentError("blur_sigma_x must be non-negative")
    _require_imaging(geom)
    m = magnification(geom)
    sigma = blur_sigma_x
    if include_source_correlation:
        sigma = math.hypot(sigma, m * model.uncertainties()["dx_diff"])
    rates = blurred_slit_image(grid.positions, m * geom.slit.slit_width_a, m * geom.slit.slit_separation_d, sigma)
    return Pattern(positions=grid.positions, rates=rates, label=DetectorPlane.IMAGE).normalized()


def _gaussian_rates(x: np.ndarray, sigma: float) -> np.ndarray:
    if math.isinf(sigma):
        return np.ones_like(x)
    return np.exp(-0.5 * (x / sigma) ** 2)


def singles_pattern(
    model: BiphotonModel,
    geom: GeometryConfig,
    which_detector: Union[SinglesDetector, str],
    grid: Optional[TransverseGrid] = None,
) -> Pattern:
    """
    Single-count rate of one detector, i.e. the joint rate integrated over the partner.

    D1 scans the collection-lens focal plane behind the double slit; D2 scans the
    imaging-lens focal plane; D3 scans the image plane (``grid`` is read as the
    image-plane scan grid). Without ``grid`` the configured default grid is used.
    """
    from ghost_optics.config.settings import setting

    which = SinglesDetector(which_detector)
    if grid is None:
        grid = TransverseGrid(
            n=setting.GHOST_OPTICS_GRID_N,
            spacing=setting.GHOST_OPTICS_GRID_EXTENT_MM * 1e-3 / setting.GHOST_OPTICS_GRID_N,
        )
    lam = model.wavelength

    if which == SinglesDetector.D1:
        at_slit = plane_wave(grid, lam)
        at_slit = at_slit.with_values(at_slit.values * double_slit_mask(grid, geom.slit))
        focal = fourier_transform_lens(at_slit, geom.f_collection)
        pattern = Pattern(positions=focal.grid.positions, rates=focal.intensity, label=DetectorPlane.COLLECTION)
        # every signal direction lands at its own focal position: first-order pattern smeared
        blur = focal_plane_coordinate(model.sigma_single, geom.f_collection, lam)
        return smear_pattern(pattern, blur).normalized()

    if which == SinglesDetector.D2:
        positions = focal_grid(grid, geom.f_imaging, lam).positions
        width = momentum_spread_to_focal_blur(model.sigma_single, geom)
        pattern = Pattern(positions=positions, rates=_gaussian_rates(positions, width), label=DetectorPlane.FOCAL)
        return aperture_average(pattern, geom.d2_width).normalized()

    # D3: image plane is conjugate to a plane a1 upstream of the crystal
    source = model.uncertainties()["dx2"]
    spread = math.hypot(source, geom.a1 * model.sigma_single / model.wavenumber)
    width = magnification(geom) * spread
    positions = grid.positions
    pattern = Pattern(positions=positions, rates=_gaussian_rates(positions, width), label=DetectorPlane.IMAGE)
    return aperture_average(pattern, geom.d3_width).normalized()


def sample_counts(p: Pattern, total_counts: int, seed: int) -> CountsHistogram:
    """Independent Poisson counts per position with expected total ``total_counts``."""
    if total_counts <= 0:
        raise InvalidArgumentError("total_counts must be positive")
    weight = float(p.rates.sum())
    if weight <= 0:
        raise InvalidArgumentError("pattern has no positive rate")
    means = p.rates / weight * total_counts
    rng = SeededRNG(seed)
    counts = np.zeros(means.shape, dtype=np.int64)
    for i, mean in enumerate(means):
        if mean > 0:
            counts[i] = rng.child(i).poisson(mean)
    logger.debug("sampled %d counts over %d bins (seed=%d)", int(counts.sum()), counts.size, seed)
    return CountsHistogram(positions=p.positions, counts=counts, seed=seed, label=p.label)
