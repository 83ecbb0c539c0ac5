"""
Estimators: visibility and image fits, FWHM extraction and the EPR report.

Both fits are bounded nonlinear least squares (scipy's trust-region reflective
solver) with a few deterministic starting points. Counts are fitted by reweighting
with the model's expected counts until the Poisson likelihood equations hold; their
error bars also come from a parametric Poisson bootstrap and the larger of the two
is the one quoted.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft, ndimage
from scipy.optimize import brentq, least_squares
from scipy.special import erf

from ghost_optics.config.settings import setting
from ghost_optics.errors import FitError, InsufficientDataError, InvalidArgumentError, ShapeError
from ghost_optics.models.biphoton import CountsHistogram, DetectorPlane, GeometryConfig, Pattern
from ghost_optics.models.classical import CorrelationStats
from ghost_optics.models.estimators import (
    NOT_SUFFICIENT_CAVEAT,
    Envelope,
    EprReport,
    ImageFit,
    InterferenceFit,
)
from ghost_optics.services.biphoton import KERNEL_TRUNCATE, blurred_slit_image, boxcar_kernel, magnification
from ghost_optics.services.classical import verify_classical_bounds
from ghost_optics.services.rng import SeededRNG

logger = logging.getLogger(__name__)

MIN_FRINGES = 5
FWHM_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))
_BOOTSTRAP_TAG = 7
_DENSE_SAMPLES = 8001

Data = Union[CountsHistogram, Pattern]


# ---------------------------------------------------------------------------
# interference model

def interference_model(
    x: np.ndarray,
    params: Sequence[float],
    scale: float,
    envelope: Envelope = Envelope.SINC,
) -> np.ndarray:
    """
    A * env(x - x0) * (1 + V cos(2 pi d (x - x0) / scale)) / 2 with scale = lambda * f.

    ``params`` is (A, x0, V, a, d); for the gaussian envelope ``a`` is the envelope std.
    """
    amplitude, center, visibility, width, separation = params
    t = np.asarray(x, dtype=np.float64) - center
    fringe = 0.5 * (1.0 + visibility * np.cos(2.0 * math.pi * separation * t / scale))
    if envelope == Envelope.GAUSSIAN:
        env = np.exp(-0.5 * (t / width) ** 2)
    else:
        env = np.sinc(width * t / scale) ** 2
    return amplitude * env * fringe


def _sinc_and_slope(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = np.sinc(u / math.pi)
    small = np.abs(u) < 1e-4
    safe = np.where(small, 1.0, u)
    slope = np.where(small, -u / 3.0, (np.cos(u) - s) / safe)
    return s, slope


def interference_jacobian(
    x: np.ndarray,
    params: Sequence[float],
    scale: float,
    envelope: Envelope = Envelope.SINC,
) -> np.ndarray:
    """Analytic derivatives of :func:`interference_model`, shape (len(x), 5)."""
    amplitude, center, visibility, width, separation = params
    t = np.asarray(x, dtype=np.float64) - center
    beta = 2.0 * math.pi * separation / scale
    v = beta * t
    cos_v, sin_v = np.cos(v), np.sin(v)
    fringe = 0.5 * (1.0 + visibility * cos_v)

    if envelope == Envelope.GAUSSIAN:
        env = np.exp(-0.5 * (t / width) ** 2)
        d_env_dt = -env * t / width ** 2
        d_env_dwidth = env * t ** 2 / width ** 3
    else:
        alpha = math.pi * width / scale
        s, slope = _sinc_and_slope(alpha * t)
        env = s ** 2
        d_env_dt = 2.0 * s * slope * alpha
        d_env_dwidth = 2.0 * s * slope * (math.pi * t / scale)

    d_fringe_dt = -0.5 * visibility * sin_v * beta
    jac = np.empty((t.size, 5))
    jac[:, 0] = env * fringe
    jac[:, 1] = -amplitude * (d_env_dt * fringe + env * d_fringe_dt)
    jac[:, 2] = amplitude * env * 0.5 * cos_v
    jac[:, 3] = amplitude * d_env_dwidth * fringe
    jac[:, 4] = -amplitude * env * 0.5 * visibility * sin_v * (2.0 * math.pi * t / scale)
    return jac


def fringe_contrast(blur_variance: float, d: float, scale: float) -> float:
    """Fringe contrast exp(-(2 pi d / scale)^2 var / 2) left by a Gaussian blur of variance ``var``."""
    kappa = 2.0 * math.pi * d / scale
    return math.exp(-0.5 * kappa ** 2 * blur_variance)


def _blur_variance_for(visibility: float, d: float, scale: float) -> float:
    kappa = 2.0 * math.pi * d / scale
    return -2.0 * math.log(min(max(visibility, 1e-6), 1.0)) / kappa ** 2


def _uniform_spacing(x: np.ndarray) -> float:
    steps = np.diff(x)
    if steps.size == 0 or steps[0] <= 0 or not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
        raise ShapeError("fringe data must be uniformly spaced")
    return float(steps[0])


class SmearedFringes:
    """
    Full-contrast fringes under a sinc^2 envelope, averaged over a boxcar scan aperture
    and convolved with a Gaussian blur, evaluated on a uniform scan ``x``.

    Parameters are (A, x0, var, a, d) with ``var`` the blur variance (m^2). The blur is
    applied as an exact Gaussian filter in Fourier space on a zero-padded copy of the scan
    wide enough for ``max_blur``; the padding is fixed so the template is smooth in every
    parameter.
    """

    def __init__(self, x: np.ndarray, scale: float, aperture: float = 0.0, max_blur: float = 0.0):
        x = np.asarray(x, dtype=np.float64)
        self.scale = scale
        self.spacing = _uniform_spacing(x)
        self.n = x.size
        self.pad = int(math.ceil((KERNEL_TRUNCATE * max_blur + aperture) / self.spacing)) + 2
        self.padded = x[0] + self.spacing * np.arange(-self.pad, self.n + self.pad)
        self.box = boxcar_kernel(aperture, self.spacing) if aperture > 0 else None
        nu = fft.rfftfreq(self.padded.size, self.spacing)
        # d/dvar of the Gaussian transfer function exp(-2 pi^2 nu^2 var)
        self._rate = -2.0 * math.pi ** 2 * nu ** 2

    def _filtered(self, columns: np.ndarray, variance: float, derivative: bool = False) -> np.ndarray:
        if self.box is not None:
            columns = ndimage.convolve1d(columns, self.box, axis=0, mode="constant")
        gain = np.exp(self._rate * variance)
        if derivative:
            gain = gain * self._rate
        out = fft.irfft(fft.rfft(columns, axis=0) * gain[:, None], n=self.padded.size, axis=0)
        return out[self.pad:self.pad + self.n]

    def _full(self, p: Sequence[float]) -> Tuple[float, ...]:
        amplitude, center, _, width, separation = p
        return amplitude, center, 1.0, width, separation

    def __call__(self, p: Sequence[float]) -> np.ndarray:
        base = interference_model(self.padded, self._full(p), self.scale)
        return self._filtered(base[:, None], p[2])[:, 0]

    def jacobian(self, p: Sequence[float]) -> np.ndarray:
        full = self._full(p)
        jac = self._filtered(interference_jacobian(self.padded, full, self.scale), p[2])
        base = interference_model(self.padded, full, self.scale)
        jac[:, 2] = self._filtered(base[:, None], p[2], derivative=True)[:, 0]
        return jac


def smeared_interference_model(
    x: np.ndarray,
    params: Sequence[float],
    scale: float,
    aperture: float = 0.0,
) -> np.ndarray:
    """:class:`SmearedFringes` for params (A, x0, blur, a, d) with ``blur`` a standard deviation."""
    amplitude, center, blur, width, separation = params
    template = SmearedFringes(x, scale, aperture, max_blur=blur)
    return template((amplitude, center, blur ** 2, width, separation))


# ---------------------------------------------------------------------------
# shared least-squares plumbing

# expected counts below this are floored when they become Poisson weights
_MIN_EXPECTED = 0.5
_REWEIGHT_ROUNDS = 12

Residuals = Callable[[np.ndarray, np.ndarray], Tuple[Callable, Union[Callable, str]]]


def _observations(data: Data) -> Tuple[np.ndarray, np.ndarray, bool]:
    if isinstance(data, CountsHistogram):
        return data.positions, data.counts.astype(np.float64), True
    return data.positions, data.rates, False


def _solve(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Union[Callable[[np.ndarray], np.ndarray], str],
    p0: np.ndarray,
    bounds: Tuple[np.ndarray, np.ndarray],
):
    return least_squares(
        fun,
        p0,
        jac=jac,
        bounds=bounds,
        method="trf",
        x_scale="jac",
        xtol=1e-8,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=setting.GHOST_OPTICS_FIT_MAX_NFEV,
    )


def _best_branch(fun, jac, starts: List[np.ndarray], bounds) -> Tuple[int, object]:
    branches = []
    for i, p0 in enumerate(starts):
        try:
            result = _solve(fun, jac, np.clip(p0, bounds[0], bounds[1]), bounds)
        except (ValueError, np.linalg.LinAlgError) as e:
            logger.debug("fit branch %d raised: %s", i, e)
            continue
        logger.debug("fit branch %d: cost=%.6e status=%d nfev=%d", i, result.cost, result.status, result.nfev)
        if result.status > 0 and np.all(np.isfinite(result.x)):
            branches.append((result.cost, i, result))
    if not branches:
        raise FitError(
            "least-squares did not converge on any starting point",
            diagnostics={"starts": len(starts), "max_nfev": setting.GHOST_OPTICS_FIT_MAX_NFEV},
        )
    # lowest cost, ties broken by branch index
    cost, index, result = min(branches, key=lambda b: (b[0], b[1]))
    return index, result


def _fit_observed(
    make_residual: Residuals,
    model: Callable[[np.ndarray], np.ndarray],
    y: np.ndarray,
    is_counts: bool,
    starts: List[np.ndarray],
    bounds,
) -> Tuple[int, object]:
    """
    Unit weights for patterns. Counts start from sqrt(max(y, 1)) weights and are then
    reweighted with the model's own expected counts until the parameters settle; the
    fixed point solves the Poisson likelihood equations, and J^T J at it is the Fisher
    information.
    """
    if not is_counts:
        return _best_branch(*make_residual(y, np.ones_like(y)), starts, bounds)
    index, result = _best_branch(*make_residual(y, np.sqrt(np.maximum(y, 1.0))), starts, bounds)
    for _ in range(_REWEIGHT_ROUNDS):
        errors = np.sqrt(np.maximum(model(result.x), _MIN_EXPECTED))
        _, update = _best_branch(*make_residual(y, errors), [result.x], bounds)
        settled = np.allclose(update.x, result.x, rtol=1e-7, atol=0.0)
        result = update
        if settled:
            break
    else:
        logger.debug("Poisson reweighting stopped after %d rounds", _REWEIGHT_ROUNDS)
    return index, result


def _covariance(result, n_obs: int, scale_by_chi2: bool) -> np.ndarray:
    jac = result.jac
    cov = np.linalg.pinv(jac.T @ jac)
    dof = n_obs - jac.shape[1]
    if scale_by_chi2 and dof > 0:
        cov = cov * (2.0 * result.cost / dof)
    return cov


def _bootstrap(
    refit: Callable[[np.ndarray], Optional[float]],
    expected: np.ndarray,
    seed: int,
    n_resamples: int,
) -> Optional[float]:
    """Std of a refitted quantity over Poisson resamples of the fitted curve."""
    if n_resamples < 2:
        return None
    rng = SeededRNG(seed).fork(_BOOTSTRAP_TAG)
    means = np.clip(expected, 0.0, None)

    def one(index: int) -> Optional[float]:
        counts = rng.child(index).poisson(means).astype(np.float64)
        try:
            return refit(counts)
        except FitError as e:
            logger.debug("bootstrap resample %d failed: %s", index, e)
            return None

    with ThreadPoolExecutor(max_workers=setting.worker_count()) as executor:
        values = [v for v in executor.map(one, range(n_resamples)) if v is not None]
    if len(values) < 2:
        logger.warning("bootstrap produced %d usable resamples", len(values))
        return None
    return float(np.std(values, ddof=1))


# ---------------------------------------------------------------------------
# interference fit

def _interference_starts(
    x: np.ndarray,
    y: np.ndarray,
    geom: GeometryConfig,
    envelope: Envelope,
    init: Optional[Dict[str, float]],
) -> List[np.ndarray]:
    """Starting points (A, x0, V, a, d); V is converted to a blur variance for the sinc envelope."""
    scale = geom.wavelength * geom.f_imaging
    weight = np.clip(y, 0.0, None)
    center = float(np.sum(x * weight) / np.sum(weight))
    if envelope == Envelope.GAUSSIAN:
        width = float(np.sqrt(np.sum(weight * (x - center) ** 2) / np.sum(weight)))
    else:
        width = geom.slit.slit_width_a
    base = {
        "amplitude": float(y.max()),
        "center": center,
        "V": 0.9,
        "a": width,
        "d": geom.slit.slit_separation_d,
    }
    base.update(init or {})
    period = scale / base["d"]

    n_starts = max(1, setting.GHOST_OPTICS_FIT_STARTS)
    starts = []
    for i in range(n_starts):
        # centre offsets 0, +period/8, -period/8, +period/4, ...
        offset = ((i + 1) // 2) * (-1) ** (i + 1) * period / 8.0
        visibility = base["V"] if i == 0 else 0.9 - 0.7 * i / max(n_starts - 1, 1)
        if envelope == Envelope.SINC:
            visibility = _blur_variance_for(visibility, base["d"], scale)
        starts.append(
            np.array([base["amplitude"], base["center"] + offset, visibility, base["a"], base["d"]], dtype=np.float64)
        )
    return starts


def fit_interference(
    data: Data,
    geom: GeometryConfig,
    init: Optional[Dict[str, float]] = None,
    envelope: Union[Envelope, str] = Envelope.SINC,
    window: Optional[float] = None,
    free_geometry: bool = True,
    bootstrap: Optional[int] = None,
    aperture: float = 0.0,
) -> InterferenceFit:
    """
    Fit the fringe visibility of a pattern or counts.

    The sinc envelope fits the Gaussian-blurred, aperture-averaged template of
    :class:`SmearedFringes` (blur variance free, ``aperture`` known) and reports
    V = exp(-(2 pi d sigma_x / lambda f)^2 / 2). The gaussian envelope fits
    A * exp(-t^2 / 2w^2) (1 + V cos(2 pi d t / lambda f)) / 2 with V free, for
    washed-out data.

    ``window`` keeps only positions within that distance of the pattern centroid;
    ``free_geometry=False`` pins a and d to the geometry. Counts are fitted by Poisson
    reweighting and get a parametric bootstrap of ``bootstrap`` resamples (settings default).
    """
    envelope = Envelope(envelope)
    if aperture < 0:
        raise InvalidArgumentError("aperture must be non-negative")
    x, y, is_counts = _observations(data)
    if not np.any(y > 0):
        raise InsufficientDataError("no positive counts in the data")
    if window is not None:
        weight = np.clip(y, 0.0, None)
        centroid = float(np.sum(x * weight) / np.sum(weight))
        keep = np.abs(x - centroid) <= window
        x, y = x[keep], y[keep]
        if not np.any(y > 0):
            raise InsufficientDataError("no positive counts inside the fit window")

    scale = geom.wavelength * geom.f_imaging
    n_fringes = float((x[-1] - x[0]) * geom.slit.slit_separation_d / scale) if x.size > 1 else 0.0
    if n_fringes < MIN_FRINGES:
        raise InsufficientDataError(
            f"scan window covers {n_fringes:.2f} fringes, need at least {MIN_FRINGES}",
            diagnostics={"n_fringes": n_fringes},
        )

    smeared = envelope == Envelope.SINC
    starts = _interference_starts(x, y, geom, envelope, init)
    max_blur = 0.5 * (x[-1] - x[0])
    lower = np.array([0.0, x[0], 0.0, 1e-3 * starts[0][3], 1e-3 * starts[0][4]])
    upper = np.array([np.inf, x[-1], max_blur ** 2 if smeared else 1.0, np.inf, np.inf])
    if not free_geometry:
        lower[3:] = starts[0][3:] * (1 - 1e-12)
        upper[3:] = starts[0][3:] * (1 + 1e-12)
    bounds = (lower, upper)

    if smeared:
        template = SmearedFringes(x, scale, aperture, max_blur)
        model, model_jac = template, template.jacobian
    else:
        def model(p: np.ndarray) -> np.ndarray:
            return interference_model(x, p, scale, envelope)

        def model_jac(p: np.ndarray) -> np.ndarray:
            return interference_jacobian(x, p, scale, envelope)

    def make_residual(values: np.ndarray, errors: np.ndarray):
        def fun(p: np.ndarray) -> np.ndarray:
            return (model(p) - values) / errors

        def jac(p: np.ndarray) -> np.ndarray:
            return model_jac(p) / errors[:, None]

        return fun, jac

    def visibility_of(p: np.ndarray) -> float:
        return fringe_contrast(p[2], p[4], scale) if smeared else float(p[2])

    index, result = _fit_observed(make_residual, model, y, is_counts, starts, bounds)
    params = result.x
    amplitude, center, third, width, separation = (float(v) for v in params)
    if envelope == Envelope.SINC and not width < separation:
        raise FitError(
            "fit converged to overlapping slits",
            diagnostics={"fitted_a": width, "fitted_d": separation, "cost": float(result.cost)},
        )

    fitted = model(params)
    peak = float(fitted.max()) if fitted.size else 1.0
    residual_rms = float(np.sqrt(np.mean((fitted - y) ** 2)) / peak) if peak > 0 else 0.0
    covariance = _covariance(result, x.size, scale_by_chi2=not is_counts)

    visibility = visibility_of(params)
    gradient = np.zeros(5)
    if smeared:
        kappa_sq = (2.0 * math.pi * separation / scale) ** 2
        gradient[2] = -0.5 * kappa_sq * visibility
        gradient[4] = -kappa_sq * third * visibility / separation
    else:
        gradient[2] = 1.0
    visibility_var = float(gradient @ covariance @ gradient)

    bootstrap_stderr = None
    if is_counts:
        n_boot = setting.GHOST_OPTICS_BOOTSTRAP if bootstrap is None else bootstrap

        def refit(counts: np.ndarray) -> Optional[float]:
            _, r = _fit_observed(make_residual, model, counts, True, [params], bounds)
            return visibility_of(r.x)

        bootstrap_stderr = _bootstrap(refit, fitted, data.seed, n_boot)

    logger.info(
        "interference fit: V=%.4f a=%.4e m d=%.4e m branch=%d nfev=%d",
        visibility, width, separation, index, result.nfev,
    )
    return InterferenceFit(
        visibility_V=min(max(visibility, 0.0), 1.0),
        blur_sigma=math.sqrt(third) if smeared else None,
        fitted_a=width,
        fitted_d=separation,
        envelope_center=center,
        amplitude=amplitude,
        residual_rms=residual_rms,
        covariance=covariance,
        parameter_names=("amplitude", "center", "blur_variance" if smeared else "V", "a", "d"),
        visibility_stderr=math.sqrt(max(visibility_var, 0.0)),
        bootstrap_stderr=bootstrap_stderr,
        envelope=envelope,
        n_fringes=n_fringes,
        nfev=int(result.nfev),
        start_index=index,
    )


def visibility_to_sum_uncertainty(visibility: float, d: float) -> float:
    """Invert V = exp(-(d sigma)^2 / 2) for the sum-momentum spread sigma (1/m)."""
    if not 0 < visibility <= 1:
        raise InvalidArgumentError(f"visibility must lie in (0, 1], got {visibility}")
    if not d > 0:
        raise InvalidArgumentError("slit separation must be positive")
    return math.sqrt(-2.0 * math.log(visibility)) / d


# ---------------------------------------------------------------------------
# widths

def fwhm(p: Pattern, peak_selector: Optional[Tuple[float, float]] = None) -> float:
    """
    Full width at half maximum of one peak, by linear interpolation.

    ``peak_selector`` is an optional (low, high) position window; the peak is the
    largest sample inside it and both half-max crossings must lie inside too.
    """
    x, r = p.positions, p.rates
    if peak_selector is not None:
        lo, hi = peak_selector
        keep = (x >= lo) & (x <= hi)
        x, r = x[keep], r[keep]
    if x.size < 3:
        raise ShapeError("peak window holds fewer than three samples")
    top = int(np.argmax(r))
    half = 0.5 * r[top]
    if half <= 0:
        raise ShapeError("peak has no positive maximum")

    def crossing(step: int) -> float:
        i = top
        while 0 <= i + step < x.size:
            j = i + step
            if r[j] < half:
                return float(x[i] + (half - r[i]) * (x[j] - x[i]) / (r[j] - r[i]))
            i = j
        raise ShapeError("no half-maximum crossing inside the peak window")

    return crossing(1) - crossing(-1)


def rect_gauss_fwhm(width: float, sigma: float) -> float:
    """FWHM of a rectangle of ``width`` convolved with a unit-area Gaussian of std ``sigma``."""
    if not width > 0 or sigma < 0:
        raise InvalidArgumentError("width must be positive and sigma non-negative")
    if sigma == 0:
        return width
    scale = math.sqrt(2.0) * sigma

    def profile(x: float) -> float:
        return 0.5 * (erf((x + width / 2) / scale) - erf((x - width / 2) / scale))

    half = 0.5 * profile(0.0)
    edge = brentq(lambda x: profile(x) - half, 0.0, width / 2 + 20.0 * sigma, xtol=1e-15)
    return 2.0 * edge


def blur_for_fwhm_excess(excess: float, width: float) -> float:
    """Gaussian blur std that widens a rectangle of ``width`` by ``excess`` at half maximum."""
    if excess < 0:
        raise InvalidArgumentError("FWHM excess must be non-negative")
    if excess == 0:
        return 0.0
    upper = (width + excess) / FWHM_FACTOR * 2.0
    return brentq(lambda s: rect_gauss_fwhm(width, s) - width - excess, 1e-15, upper, xtol=1e-15)


# ---------------------------------------------------------------------------
# image fit

def _count_peaks(x: np.ndarray, y: np.ndarray) -> int:
    above = y >= 0.5 * y.max()
    rises = np.count_nonzero(above[1:] & ~above[:-1])
    return int(rises + (1 if above[0] else 0))


def fit_image(
    data: Data,
    geom: GeometryConfig,
    blur_init: Optional[float] = None,
    bootstrap: Optional[int] = None,
) -> ImageFit:
    """Fit A * (double rectangle a', d' blurred by sigma)(x - x0) to a ghost image."""
    x, y, is_counts = _observations(data)
    m = magnification(geom)
    width, separation = m * geom.slit.slit_width_a, m * geom.slit.slit_separation_d
    if x[0] > -separation / 2 or x[-1] < separation / 2:
        raise ShapeError("scan window does not contain both image peaks")
    if not np.any(y > 0) or _count_peaks(x, y) < 2:
        raise ShapeError("image data does not show two separated peaks")

    weight = np.clip(y, 0.0, None)
    center = float(np.sum(x * weight) / np.sum(weight))
    guesses = [blur_init] if blur_init else [width / 4, width / 2, width]
    starts = [np.array([float(y.max()), max(g, 1e-3 * width), center]) for g in guesses]
    bounds = (np.array([0.0, 0.0, x[0]]), np.array([np.inf, np.inf, x[-1]]))

    def model(p: np.ndarray, at: np.ndarray = x) -> np.ndarray:
        return p[0] * blurred_slit_image(at, width, separation, p[1], p[2])

    def make_residual(values: np.ndarray, errors: np.ndarray):
        return (lambda p: (model(p) - values) / errors), "3-point"

    index, result = _fit_observed(make_residual, model, y, is_counts, starts, bounds)
    amplitude, blur, offset = (float(v) for v in result.x)
    fitted = model(result.x)
    peak = float(fitted.max())
    residual_rms = float(np.sqrt(np.mean((fitted - y) ** 2)) / peak) if peak > 0 else 0.0
    covariance = _covariance(result, x.size, scale_by_chi2=not is_counts)

    # per-peak FWHM of the fitted curve on a dense grid, split at the midpoint
    reach = separation / 2 + width + 10.0 * blur
    dense_x = np.linspace(offset - reach, offset + reach, _DENSE_SAMPLES)
    dense = Pattern(positions=dense_x, rates=model(result.x, dense_x), label=DetectorPlane.IMAGE)
    widths = (
        max(fwhm(dense, (offset - reach, offset)), width),
        max(fwhm(dense, (offset, offset + reach)), width),
    )

    bootstrap_stderr = None
    if is_counts:
        n_boot = setting.GHOST_OPTICS_BOOTSTRAP if bootstrap is None else bootstrap

        def refit(counts: np.ndarray) -> Optional[float]:
            _, r = _fit_observed(make_residual, model, counts, True, [result.x], bounds)
            return float(r.x[1])

        bootstrap_stderr = _bootstrap(refit, fitted, data.seed, n_boot)

    logger.info("image fit: blur=%.4e m offset=%.3e m branch=%d", blur, offset, index)
    return ImageFit(
        blur_sigma=blur,
        blur_stderr=float(math.sqrt(max(covariance[1, 1], 0.0))),
        amplitude=amplitude,
        offset=offset,
        peak_centers=(offset - separation / 2, offset + separation / 2),
        fwhm_fitted=widths,
        fwhm_ideal=width,
        magnification=m,
        residual_rms=residual_rms,
        bootstrap_stderr=bootstrap_stderr,
    )


def position_uncertainty_from_image(fit: ImageFit, object_plane: bool = False) -> float:
    """Mean per-peak FWHM excess over a'; divided by m when ``object_plane`` is set."""
    excess = float(np.mean(fit.fwhm_fitted)) - fit.fwhm_ideal
    return excess / fit.magnification if object_plane else excess


# ---------------------------------------------------------------------------
# report

def epr_report(dk1: float, dk2: float, dk_sum: float, dx1: float, dx2: float, dx_diff: float) -> EprReport:
    """Both EPR inequalities, the uncertainty product and the classical quadrature bounds."""
    values = (dk1, dk2, dk_sum, dx1, dx2, dx_diff)
    if any(v < 0 or not math.isfinite(v) for v in values):
        raise InvalidArgumentError("uncertainties must be finite and non-negative")

    momentum_ok = dk_sum < min(dk1, dk2)
    position_ok = dx_diff < min(dx1, dx2)
    product = dk_sum * dx_diff
    notes = []
    caveat = None
    if product < 1:
        caveat = NOT_SUFFICIENT_CAVEAT
        if not (momentum_ok and position_ok):
            notes.append("product is below 1 while at least one EPR inequality fails")

    bounds = None
    if all(v > 0 for v in values):
        stats = CorrelationStats(dk1=dk1, dk2=dk2, dk_sum=dk_sum, dx1=dx1, dx2=dx2, dx_diff=dx_diff)
        bounds = verify_classical_bounds(stats)
        if not (bounds.eq8_momentum_ok and bounds.eq8_position_ok):
            notes.append("classical quadrature bounds are violated")
    else:
        notes.append("degenerate inputs: classical bounds not evaluated")

    return EprReport(
        dk1=dk1,
        dk2=dk2,
        dk_sum=dk_sum,
        dx1=dx1,
        dx2=dx2,
        dx_diff=dx_diff,
        epr_momentum_ok=momentum_ok,
        epr_position_ok=position_ok,
        product=product,
        product_below_one=product < 1,
        product_caveat=caveat,
        classical_bounds=bounds,
        notes=notes,
    )


def divergence_to_single_uncertainty(delta_theta: float, wavelength: float) -> float:
    """Single-photon wavevector spread (2 pi / lambda) * delta_theta in 1/m."""
    if not delta_theta > 0:
        raise InvalidArgumentError("delta_theta must be positive")
    if not wavelength > 0:
        raise InvalidArgumentError("wavelength must be positive")
    return 2.0 * math.pi / wavelength * delta_theta


def envelope_feature_contrast(p: Pattern, window: Optional[float] = None) -> float:
    """Largest deviation of ``p`` from its fitted Gaussian envelope, relative to the envelope peak."""
    x, r = p.positions, p.rates
    if window is not None:
        keep = np.abs(x) <= window
        x, r = x[keep], r[keep]
    if x.size < 4 or not np.any(r > 0):
        raise ShapeError("not enough positive samples to fit an envelope")
    span = float(x[-1] - x[0])
    weight = np.clip(r, 0.0, None)
    center = float(np.sum(x * weight) / np.sum(weight))
    spread = max(float(np.sqrt(np.sum(weight * (x - center) ** 2) / np.sum(weight))), span / 10)
    step = float(np.min(np.diff(x)))

    def fun(q: np.ndarray) -> np.ndarray:
        return q[0] * np.exp(-0.5 * ((x - q[1]) / q[2]) ** 2) - r

    result = least_squares(
        fun,
        np.array([float(r.max()), center, spread]),
        bounds=([0.0, x[0], step], [np.inf, x[-1], 1e3 * span]),
        method="trf",
        x_scale="jac",
    )
    envelope = fun(result.x) + r
    return float(np.max(np.abs(r - envelope)) / envelope.max())
