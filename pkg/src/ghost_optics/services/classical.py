"""
Classically correlated "rotating guns" source.

Each pair shares a nominal wavevector K (particle 1 gets +K, particle 2 gets -K) and
a nominal emission point; on top of that each particle carries its own independent
momentum noise sigma_n >= 1/(2w) and its own emission offset. The mixture is
incoherent: every pair is diffracted on its own and only intensities are averaged.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import fft

from ghost_optics.config.settings import setting
from ghost_optics.errors import InvalidArgumentError
from ghost_optics.models.biphoton import DetectorPlane, GeometryConfig, Pattern
from ghost_optics.models.classical import (
    ClassicalBoundsVerdict,
    ClassicalGunModel,
    CorrelationStats,
    Emission,
    KDistribution,
    NoiseFloorPolicy,
    PairSample,
    SweepRow,
)
from ghost_optics.models.optics import TransverseGrid
from ghost_optics.services.biphoton import aperture_average, check_interference_resolution
from ghost_optics.services.optics import double_slit_mask, focal_grid, focal_plane_coordinate
from ghost_optics.services.rng import SAMPLE_BLOCK, SeededRNG, block_slices

logger = logging.getLogger(__name__)

MIN_STATS_SAMPLES = 1000
# Pairs diffracted per FFT batch in the coincidence pattern.
PATTERN_BATCH = 256

_QUANTITIES = (
    "k1", "k2", "k_sum", "x1", "x2", "x_diff",
    "k1_local", "k2_local", "x1_local", "x2_local",
)


def _draw_block(model: ClassicalGunModel, rng: np.random.Generator, size: int) -> Dict[str, np.ndarray]:
    if model.k_distribution == KDistribution.GAUSSIAN:
        nominal_k = rng.normal(0.0, model.k_spread, size)
    else:
        half = math.sqrt(3.0) * model.k_spread
        nominal_k = rng.uniform(-half, half, size)
    noise = rng.normal(0.0, model.sigma_noise, (2, size))
    w = model.source_width_w
    if model.emission == Emission.SHARED:
        nominal_x = rng.normal(0.0, w, size)
    else:
        nominal_x = np.zeros(size)
    offsets = rng.normal(0.0, w, (2, size))

    k1 = nominal_k + noise[0]
    k2 = -nominal_k + noise[1]
    drift = model.propagation_distance / model.wavenumber
    return {
        "k1": k1,
        "k2": k2,
        "x1": nominal_x + offsets[0] + drift * k1,
        "x2": nominal_x + offsets[1] + drift * k2,
        "nominal_k": nominal_k,
        "nominal_x": nominal_x,
        # parts each particle acquires on its own
        "k1_local": noise[0],
        "k2_local": noise[1],
        "x1_local": offsets[0] + drift * noise[0],
        "x2_local": offsets[1] + drift * noise[1],
    }


def sample_pairs(model: ClassicalGunModel, n_samples: int, seed: int) -> Dict[str, np.ndarray]:
    """Draw ``n_samples`` pairs; block ``i`` always uses stream ``i`` of ``seed``."""
    if n_samples < 1:
        raise InvalidArgumentError("n_samples must be positive")
    rng = SeededRNG(seed)
    blocks = [_draw_block(model, rng.child(i), s.stop - s.start) for i, s in enumerate(block_slices(n_samples))]
    return {key: np.concatenate([b[key] for b in blocks]) for key in blocks[0]}


def sample_pair(model: ClassicalGunModel, seed: int) -> PairSample:
    """One pair from its own seeded stream."""
    draw = _draw_block(model, SeededRNG(seed).child(0), 1)
    return PairSample(
        k1=float(draw["k1"][0]),
        k2=float(draw["k2"][0]),
        x1=float(draw["x1"][0]),
        x2=float(draw["x2"][0]),
        nominal_k=float(draw["nominal_k"][0]),
        nominal_x=float(draw["nominal_x"][0]),
    )


def _block_moments(model: ClassicalGunModel, seed: int, index: int, size: int) -> Dict[str, Tuple[int, float, float]]:
    draw = _draw_block(model, SeededRNG(seed).child(index), size)
    values = dict(draw)
    values["k_sum"] = draw["k1"] + draw["k2"]
    values["x_diff"] = draw["x1"] - draw["x2"]
    moments = {}
    for name in _QUANTITIES:
        v = values[name]
        mean = float(v.mean())
        moments[name] = (v.size, mean, float(np.sum((v - mean) ** 2)))
    return moments


def _merge(a: Tuple[int, float, float], b: Tuple[int, float, float]) -> Tuple[int, float, float]:
    n_a, mean_a, m2_a = a
    n_b, mean_b, m2_b = b
    n = n_a + n_b
    delta = mean_b - mean_a
    return n, mean_a + delta * n_b / n, m2_a + m2_b + delta ** 2 * n_a * n_b / n


def classical_stats(model: ClassicalGunModel, n_samples: int, seed: int) -> CorrelationStats:
    """Sample standard deviations of the marginals, the sum/difference and the per-particle parts."""
    if n_samples < MIN_STATS_SAMPLES:
        raise InvalidArgumentError(f"classical_stats needs at least {MIN_STATS_SAMPLES} samples, got {n_samples}")

    slices = block_slices(n_samples, SAMPLE_BLOCK)
    with ThreadPoolExecutor(max_workers=setting.worker_count()) as executor:
        parts = list(
            executor.map(lambda item: _block_moments(model, seed, item[0], item[1].stop - item[1].start), enumerate(slices))
        )

    # merged in block order so the result does not depend on the thread count
    total = parts[0]
    for part in parts[1:]:
        total = {name: _merge(total[name], part[name]) for name in _QUANTITIES}
    std = {name: math.sqrt(m2 / (n - 1)) for name, (n, _, m2) in total.items()}

    logger.debug("classical stats over %d samples in %d blocks", n_samples, len(slices))
    return CorrelationStats(
        dk1=std["k1"],
        dk2=std["k2"],
        dk_sum=std["k_sum"],
        dx1=std["x1"],
        dx2=std["x2"],
        dx_diff=std["x_diff"],
        n_samples=n_samples,
        dk1_local=std["k1_local"],
        dk2_local=std["k2_local"],
        dx1_local=std["x1_local"],
        dx2_local=std["x2_local"],
    )


def verify_classical_bounds(stats: CorrelationStats) -> ClassicalBoundsVerdict:
    """Quadrature bounds on the per-particle parts, and the joint EPR test on the marginals."""
    values = (stats.dk1, stats.dk2, stats.dk_sum, stats.dx1, stats.dx2, stats.dx_diff)
    if any(v <= 0 for v in values + stats.momentum_parts + stats.position_parts):
        raise InvalidArgumentError("zero-variance statistics violate the per-particle noise floor")

    eps = stats.margin
    momentum_ok = stats.dk_sum > max(stats.momentum_parts) * (1.0 - eps)
    position_ok = stats.dx_diff > max(stats.position_parts) * (1.0 - eps)
    # the EPR test only counts as passed when it clears the sampling margin
    epr_momentum = stats.dk_sum < min(stats.dk1, stats.dk2) * (1.0 - eps)
    epr_position = stats.dx_diff < min(stats.dx1, stats.dx2) * (1.0 - eps)
    return ClassicalBoundsVerdict(
        eq8_momentum_ok=momentum_ok,
        eq8_position_ok=position_ok,
        eq3_violated_as_expected=not (epr_momentum and epr_position),
        epr_momentum_satisfied=epr_momentum,
        epr_position_satisfied=epr_position,
        product=stats.dk_sum * stats.dx_diff,
        margin=eps,
    )


def _focal_intensities(values: np.ndarray) -> np.ndarray:
    spectrum = fft.fftshift(fft.fft(fft.ifftshift(values, axes=-1), axis=-1), axes=-1)
    return np.abs(spectrum) ** 2


def _batch_pattern(
    model: ClassicalGunModel,
    grid: TransverseGrid,
    transmission: np.ndarray,
    focal_positions: np.ndarray,
    geom: GeometryConfig,
    k1: np.ndarray,
    k_sum: np.ndarray,
) -> np.ndarray:
    x = grid.positions
    envelope = transmission * np.exp(-(x ** 2) / (4.0 * model.source_width_w ** 2))
    # mirrored through the crystal fold: particle 1 travelling with -k1
    fields = envelope[None, :] * np.exp(-1j * k1[:, None] * x[None, :])
    intensities = _focal_intensities(fields)
    shifts = focal_plane_coordinate(k_sum, geom.f_imaging, model.wavelength)
    total = np.zeros(focal_positions.size)
    for row, shift in zip(intensities, np.atleast_1d(shifts)):
        total += np.interp(focal_positions - shift, focal_positions, row, left=0.0, right=0.0)
    return total


def classical_coincidence_pattern(
    model: ClassicalGunModel,
    geom: GeometryConfig,
    n_samples: int,
    seed: int,
    grid: TransverseGrid,
) -> Pattern:
    """
    Incoherent average of per-pair diffraction patterns in the D2 focal plane.

    Each pair's particle-1 wavepacket (aperture std ``w``, direction k1) is diffracted
    by the double slit, unfolded through the crystal and displaced by the pair's
    sum-momentum mismatch k1 + k2.
    """
    check_interference_resolution(grid, geom)
    transmission = double_slit_mask(grid, geom.slit)
    focal_positions = focal_grid(grid, geom.f_imaging, model.wavelength).positions
    pairs = sample_pairs(model, n_samples, seed)
    k1 = pairs["k1"]
    k_sum = pairs["k1"] + pairs["k2"]

    batches = block_slices(n_samples, PATTERN_BATCH)
    with ThreadPoolExecutor(max_workers=setting.worker_count()) as executor:
        partial = list(
            executor.map(
                lambda s: _batch_pattern(model, grid, transmission, focal_positions, geom, k1[s], k_sum[s]),
                batches,
            )
        )
    rates = np.zeros(focal_positions.size)
    for chunk in partial:
        rates += chunk

    logger.debug("classical coincidence pattern from %d pairs in %d batches", n_samples, len(batches))
    pattern = Pattern(positions=focal_positions, rates=rates, label=DetectorPlane.FOCAL)
    return aperture_average(pattern, geom.d2_width).normalized()


def random_gun_model(rng: np.random.Generator, index: int) -> ClassicalGunModel:
    """Random valid model for the property sweep; P(K) alternates gaussian/uniform."""
    scaled = bool(rng.integers(0, 2))
    return ClassicalGunModel(
        k_spread=float(rng.uniform(0.0, 50e3)),
        source_width_w=float(10 ** rng.uniform(-5.0, -3.0)),
        noise_floor_policy=NoiseFloorPolicy.SCALED if scaled else NoiseFloorPolicy.SATURATE,
        noise_factor=float(rng.uniform(1.0, 3.0)) if scaled else 1.0,
        k_distribution=KDistribution.GAUSSIAN if index % 2 == 0 else KDistribution.UNIFORM,
        emission=Emission.SHARED if rng.integers(0, 2) else Emission.INDEPENDENT,
        propagation_distance=float(rng.uniform(0.0, 1.0)),
    )


def classical_sweep(
    n_models: int,
    n_samples: int,
    seed: int,
    models: Optional[List[ClassicalGunModel]] = None,
) -> List[SweepRow]:
    """Draw ``n_models`` random gun models and check every classical bound on each."""
    if n_models < 1:
        raise InvalidArgumentError("n_models must be positive")
    if models is not None and len(models) != n_models:
        raise InvalidArgumentError(f"expected {n_models} models, got {len(models)}")
    draws = SeededRNG(seed).fork(1)
    stats_seeds = SeededRNG(seed).fork(2).child_seeds(n_models)
    rows = []
    for i in range(n_models):
        model = models[i] if models is not None else random_gun_model(draws.child(i), i)
        stats = classical_stats(model, n_samples, stats_seeds[i])
        verdict = verify_classical_bounds(stats)
        rows.append(
            SweepRow(
                index=i,
                model=model,
                stats=stats,
                verdict=verdict,
                product_ok=verdict.product >= 1.0 - 2.0 * verdict.margin,
            )
        )
        if not (verdict.eq8_momentum_ok and verdict.eq8_position_ok and verdict.eq3_violated_as_expected):
            logger.warning("classical bound not met for sweep model %d: %s", i, verdict)
    logger.info("classical sweep: %d models x %d samples", n_models, n_samples)
    return rows
