"""Execute one experiment mode end to end and write its artifacts."""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ghost_optics import __version__
from ghost_optics.config.loader import ANGLE, BOOL, INT, INV_LENGTH, LENGTH, SCHEMA, config_hash
from ghost_optics.errors import (
    ConfigParseError,
    ConfigurationError,
    ConfigValidationError,
    FitError,
    GhostOpticsError,
    ResolutionError,
    ShapeError,
)
from ghost_optics.models.biphoton import SinglesDetector
from ghost_optics.models.estimators import Envelope
from ghost_optics.models.experiment import ExperimentConfig, ExperimentMode, RunResult, RunStatus
from ghost_optics.services.artifacts import read_json, write_json, write_pattern, write_table
from ghost_optics.services.biphoton import (
    check_two_photon_lens_equation,
    detector_visibility_factor,
    ghost_image_pattern,
    klyshko_interference_pattern,
    magnification,
    sample_counts,
    singles_pattern,
)
from ghost_optics.services.classical import (
    classical_coincidence_pattern,
    classical_stats,
    classical_sweep,
    verify_classical_bounds,
)
from ghost_optics.services.estimators import (
    blur_for_fwhm_excess,
    envelope_feature_contrast,
    epr_report,
    fit_image,
    fit_interference,
    position_uncertainty_from_image,
    rect_gauss_fwhm,
    visibility_to_sum_uncertainty,
)

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
# Singles are judged featureless inside this half-window.
SINGLES_WINDOW = 2e-3

_UNIT_OF_KIND = {LENGTH: "m", INV_LENGTH: "1/m", ANGLE: "rad", INT: "1"}
_EXTRA_UNITS = {"wavelength": "m", "sigma_single": "1/m", "k_spread": "1/m", "noise_factor": "1", "dwell": "1"}


def q(value: Optional[float], unit: str) -> Dict[str, Any]:
    """A reported number with its unit."""
    return {"value": value, "unit": unit}


def _with_units(section: str, values: Dict[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    kinds = SCHEMA.get(section, {})
    for key, value in values.items():
        if isinstance(value, dict):
            out[key] = _with_units(section, value)
            continue
        kind = kinds.get(key)
        unit = _UNIT_OF_KIND.get(kind) or _EXTRA_UNITS.get(key)
        if kind == BOOL or isinstance(value, (bool, str)) or value is None:
            out[key] = value
        else:
            out[key] = q(value, unit or "1")
    return out


def _result_value(path: str, key: str) -> Optional[float]:
    """fits.<key>.value of an earlier run's report.json."""
    try:
        document = read_json(path)
    except FileNotFoundError:
        raise ConfigValidationError(f"report input {path!r} does not exist") from None
    except (OSError, ValueError) as e:
        raise ConfigValidationError(f"report input {path!r} is not readable JSON: {e}") from None
    try:
        value = document["fits"][key]["value"]
    except (KeyError, TypeError):
        raise ConfigValidationError(f"report input {path!r} has no fits.{key} value") from None
    if value is not None and not isinstance(value, (int, float)):
        raise ConfigValidationError(f"report input {path!r} holds a non-numeric {key}")
    return value


def status_for(error: BaseException) -> RunStatus:
    """Map an exception to the run status (and so the exit code)."""
    if isinstance(error, (FitError, ShapeError)):
        return RunStatus.FIT_ERROR
    if isinstance(error, (ConfigurationError, ConfigParseError, ConfigValidationError, ResolutionError)):
        return RunStatus.CONFIG_ERROR
    return RunStatus.ERROR


class ExperimentRunner:
    """Runs the pipeline selected by ``config.mode`` and writes CSV/JSON artifacts to ``out_dir``."""

    def __init__(self, config: ExperimentConfig, out_dir: Union[str, Path], seed: Optional[int] = None):
        if seed is not None:
            config = config.model_copy(update={"counts": config.counts.model_copy(update={"seed": seed})})
        self.config = config
        self.out_dir = Path(out_dir)
        self.artifacts: List[str] = []

    @property
    def seed(self) -> int:
        return self.config.counts.seed

    def run(self) -> RunResult:
        handlers = {
            ExperimentMode.INTERFERENCE: self._run_interference,
            ExperimentMode.IMAGE: self._run_image,
            ExperimentMode.CLASSICAL: self._run_classical,
            ExperimentMode.REPORT: self._run_report,
            ExperimentMode.SWEEP: self._run_sweep,
        }
        logger.info("running %s (seed=%d) into %s", self.config.mode.value, self.seed, self.out_dir)
        try:
            fits, epr = handlers[self.config.mode]()
        except GhostOpticsError as e:
            status = status_for(e)
            logger.error("%s run failed: %s", self.config.mode.value, e)
            return RunResult(status=status, message=str(e), artifacts=self.artifacts)

        document = {
            "inputs": self._inputs(),
            "fits": fits,
            "epr_report": epr,
            "provenance": {"seed": self.seed, "version": __version__, "config_hash": config_hash(self.config)},
        }
        self._save(REPORT_FILE, lambda path: write_json(path, document))
        return RunResult(status=RunStatus.SUCCESS, artifacts=self.artifacts, report=document)

    # -- helpers ------------------------------------------------------------

    def _save(self, name: str, writer) -> Path:
        path = writer(self.out_dir / name)
        self.artifacts.append(str(path))
        logger.debug("wrote %s", path)
        return path

    def _inputs(self) -> Dict[str, Any]:
        cfg = self.config
        inputs: Dict[str, Any] = {
            "mode": cfg.mode.value,
            "geometry": _with_units("geometry", cfg.geometry.model_dump(mode="json")),
            "biphoton": _with_units("biphoton", cfg.biphoton.model_dump(mode="json")),
            "grid": _with_units("grid", cfg.grid.model_dump(mode="json")),
            "counts": _with_units("counts", cfg.counts.model_dump(mode="json")),
        }
        if cfg.classical is not None:
            inputs["classical"] = _with_units("classical", cfg.classical.model_dump(mode="json"))
        return inputs

    # -- modes --------------------------------------------------------------

    def _run_interference(self):
        cfg = self.config
        geom, model, spec = cfg.geometry, cfg.biphoton, cfg.interference
        grid = cfg.grid.slit_grid()

        pattern = klyshko_interference_pattern(model, geom, grid)
        counts = sample_counts(pattern, cfg.counts.total_counts, self.seed)
        self._save("pattern.csv", lambda path: write_pattern(path, pattern))
        self._save("counts.csv", lambda path: write_pattern(path, counts))

        singles = {}
        for detector in SinglesDetector:
            scan = cfg.grid.image_grid() if detector == SinglesDetector.D3 else grid
            p = singles_pattern(model, geom, detector, scan)
            self._save(f"singles_{detector.value.lower()}.csv", lambda path: write_pattern(path, p))
            singles[detector.value] = {"feature_contrast": q(envelope_feature_contrast(p, SINGLES_WINDOW), "1")}

        # the known D2 aperture is folded into the sinc fit template
        aperture = geom.d2_width if spec.correct_detector and spec.envelope == Envelope.SINC else 0.0
        fit = fit_interference(
            counts,
            geom,
            envelope=spec.envelope,
            window=spec.window,
            free_geometry=spec.free_geometry,
            aperture=aperture,
        )
        factor = detector_visibility_factor(aperture, geom) if aperture > 0 else 1.0
        corrected = fit.visibility_V
        d = fit.fitted_d
        dk_sum = visibility_to_sum_uncertainty(corrected, d) if corrected > 0 else math.inf
        dk_sum_stderr = fit.quoted_stderr / (d ** 2 * dk_sum * corrected) if 0 < dk_sum < math.inf else None

        fits = {
            "interference": {
                "visibility": q(fit.visibility_V * factor, "1"),
                "visibility_corrected": q(corrected, "1"),
                "detector_factor": q(factor, "1"),
                "visibility_stderr": q(fit.visibility_stderr, "1"),
                "bootstrap_stderr": q(fit.bootstrap_stderr, "1"),
                "quoted_stderr": q(fit.quoted_stderr, "1"),
                "blur_sigma": q(fit.blur_sigma, "m"),
                "fitted_a": q(fit.fitted_a, "m"),
                "fitted_d": q(fit.fitted_d, "m"),
                "envelope_center": q(fit.envelope_center, "m"),
                "residual_rms": q(fit.residual_rms, "1"),
                "n_fringes": q(fit.n_fringes, "1"),
                "envelope": fit.envelope.value,
            },
            "dk_sum": q(dk_sum, "1/m"),
            "dk_sum_stderr": q(dk_sum_stderr, "1/m"),
            "dk1": q(model.sigma_single, "1/m"),
            "epr_momentum_ok": dk_sum < model.sigma_single,
            "singles": singles,
        }
        logger.info("interference: V=%.4f (corrected %.4f) -> dk_sum=%.4g 1/m", fit.visibility_V * factor, corrected, dk_sum)
        return fits, None

    def _run_image(self):
        cfg = self.config
        geom, model, spec = cfg.geometry, cfg.biphoton, cfg.image
        m = magnification(geom)
        width = m * geom.slit.slit_width_a
        blur = spec.blur_sigma if spec.blur_sigma is not None else blur_for_fwhm_excess(spec.fwhm_excess, width)

        pattern = ghost_image_pattern(model, geom, blur, cfg.grid.image_grid(), spec.include_source_correlation)
        counts = sample_counts(pattern, cfg.counts.total_counts, self.seed)
        self._save("pattern.csv", lambda path: write_pattern(path, pattern))
        self._save("counts.csv", lambda path: write_pattern(path, counts))

        fit = fit_image(counts, geom)
        dx_diff = position_uncertainty_from_image(fit)
        error = max(fit.blur_stderr, fit.bootstrap_stderr or 0.0)
        h = max(1e-3 * fit.blur_sigma, 1e-9)
        slope = (rect_gauss_fwhm(width, fit.blur_sigma + h) - rect_gauss_fwhm(width, max(fit.blur_sigma - h, 0.0))) / (
            fit.blur_sigma + h - max(fit.blur_sigma - h, 0.0)
        )
        lens = check_two_photon_lens_equation(geom)

        fits = {
            "image": {
                "blur_sigma": q(fit.blur_sigma, "m"),
                "blur_stderr": q(fit.blur_stderr, "m"),
                "bootstrap_stderr": q(fit.bootstrap_stderr, "m"),
                "generating_blur": q(blur, "m"),
                "peak_centers": [q(c, "m") for c in fit.peak_centers],
                "peak_distance": q(fit.peak_distance, "m"),
                "fwhm_fitted": [q(w, "m") for w in fit.fwhm_fitted],
                "fwhm_ideal": q(fit.fwhm_ideal, "m"),
                "magnification": q(m, "1"),
                "lens_residual": q(lens.residual, "1"),
                "residual_rms": q(fit.residual_rms, "1"),
            },
            "dx_diff": q(dx_diff, "m"),
            "dx_diff_object_plane": q(dx_diff / m, "m"),
            "dx_diff_stderr": q(abs(slope) * error, "m"),
            "dx1": q(geom.slit.slit_width_a, "m"),
            "epr_position_ok": dx_diff < geom.slit.slit_width_a,
        }
        logger.info("image: blur=%.4g m -> dx_diff=%.4g m", fit.blur_sigma, dx_diff)
        return fits, None

    def _run_classical(self):
        cfg = self.config
        model, run = cfg.classical, cfg.classical_run
        stats = classical_stats(model, run.n_samples, self.seed)
        verdict = verify_classical_bounds(stats)
        pattern = classical_coincidence_pattern(model, cfg.geometry, run.pattern_samples, self.seed, cfg.grid.slit_grid())
        self._save("pattern.csv", lambda path: write_pattern(path, pattern))
        fit = fit_interference(
            pattern,
            cfg.geometry,
            envelope=cfg.interference.envelope,
            window=cfg.interference.window,
            free_geometry=cfg.interference.free_geometry,
        )

        momentum = {"dk1": stats.dk1, "dk2": stats.dk2, "dk_sum": stats.dk_sum}
        position = {"dx1": stats.dx1, "dx2": stats.dx2, "dx_diff": stats.dx_diff}
        fits = {
            "classical_stats": {
                **{k: q(v, "1/m") for k, v in momentum.items()},
                **{k: q(v, "m") for k, v in position.items()},
                "dk_local": [q(v, "1/m") for v in stats.momentum_parts],
                "dx_local": [q(v, "m") for v in stats.position_parts],
                "n_samples": q(stats.n_samples, "1"),
            },
            "classical_bounds": {
                **verdict.model_dump(exclude={"product", "margin"}),
                "product": q(verdict.product, "1"),
                "margin": q(verdict.margin, "1"),
            },
            "pattern_fit": {
                "visibility": q(fit.visibility_V, "1"),
                "visibility_stderr": q(fit.visibility_stderr, "1"),
                "envelope": fit.envelope.value,
                "residual_rms": q(fit.residual_rms, "1"),
            },
        }
        logger.info("classical: V=%.4f eq8=(%s, %s)", fit.visibility_V, verdict.eq8_momentum_ok, verdict.eq8_position_ok)
        return fits, None

    def _report_values(self) -> Dict[str, float]:
        cfg = self.config
        spec = cfg.report
        values: Dict[str, Optional[float]] = {
            "dk1": spec.dk1,
            "dk2": spec.dk2,
            "dk_sum": spec.dk_sum,
            "dx1": spec.dx1,
            "dx2": spec.dx2,
            "dx_diff": spec.dx_diff,
        }
        if spec.delta_theta is not None:
            single = 2.0 * math.pi / cfg.geometry.wavelength * spec.delta_theta
            values["dk1"] = values["dk1"] if values["dk1"] is not None else single
            values["dk2"] = values["dk2"] if values["dk2"] is not None else single
        if spec.interference_result:
            values["dk_sum"] = _result_value(spec.interference_result, "dk_sum")
        if spec.image_result:
            values["dx_diff"] = _result_value(spec.image_result, "dx_diff")

        defaults = {
            "dk1": cfg.biphoton.sigma_single,
            "dk2": cfg.biphoton.sigma_single,
            # single-photon position uncertainty is the slit width
            "dx1": cfg.geometry.slit.slit_width_a,
            "dx2": cfg.geometry.slit.slit_width_a,
        }
        for key, default in defaults.items():
            if values[key] is None:
                values[key] = default
        missing = [key for key, value in values.items() if value is None]
        if missing:
            raise ConfigValidationError(f"report needs values for {', '.join(missing)}")
        return values

    def _run_report(self):
        values = self._report_values()
        report = epr_report(**values)
        logger.info("report: product=%.4f momentum=%s position=%s", report.product, report.epr_momentum_ok, report.epr_position_ok)
        return {}, report.as_quantities()

    def _run_sweep(self):
        spec = self.config.sweep
        rows = classical_sweep(spec.n_models, spec.n_samples, self.seed)
        header = [
            "index", "k_distribution", "emission", "noise_floor_policy", "noise_factor",
            "k_spread_per_m", "source_width_m", "propagation_distance_m",
            "dk1_per_m", "dk2_per_m", "dk_sum_per_m", "dx1_m", "dx2_m", "dx_diff_m",
            "eq8_momentum_ok", "eq8_position_ok", "eq3_violated_as_expected", "product", "product_ok",
        ]
        table = [
            [
                r.index, r.model.k_distribution.value, r.model.emission.value, r.model.noise_floor_policy.value,
                r.model.noise_factor, r.model.k_spread, r.model.source_width_w, r.model.propagation_distance,
                r.stats.dk1, r.stats.dk2, r.stats.dk_sum, r.stats.dx1, r.stats.dx2, r.stats.dx_diff,
                r.verdict.eq8_momentum_ok, r.verdict.eq8_position_ok, r.verdict.eq3_violated_as_expected,
                r.verdict.product, r.product_ok,
            ]
            for r in rows
        ]
        self._save("sweep.csv", lambda path: write_table(path, header, table))
        fits = {
            "sweep": {
                "n_models": q(len(rows), "1"),
                "n_samples": q(spec.n_samples, "1"),
                "eq8_momentum_ok": q(sum(r.verdict.eq8_momentum_ok for r in rows), "1"),
                "eq8_position_ok": q(sum(r.verdict.eq8_position_ok for r in rows), "1"),
                "eq3_violated_as_expected": q(sum(r.verdict.eq3_violated_as_expected for r in rows), "1"),
                "product_ok": q(sum(r.product_ok for r in rows), "1"),
            }
        }
        return fits, None
