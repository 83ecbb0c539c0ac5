"""
Scalar 1D wave-optics primitives.

Free-space propagation uses the angular-spectrum (transfer-function) form of the
paraxial Fresnel kernel, H(q) = exp(-i q^2 z / (2k)); every operation returns a new
immutable ComplexField.
"""

import math
from typing import Any

import numpy as np
from scipy import fft

from ghost_optics.errors import InvalidArgumentError
from ghost_optics.models.optics import MIN_GRID_SAMPLES, ComplexField, DoubleSlitSpec, TransverseGrid

# Samples lying on a slit edge up to this fraction of a spacing count as open.
_EDGE_TOLERANCE = 1e-9


def make_grid(n: int, extent: float, center: float = 0.0) -> TransverseGrid:
    """Uniform grid of ``n`` samples spanning ``extent`` meters around ``center``."""
    if n < MIN_GRID_SAMPLES:
        raise InvalidArgumentError(f"grid needs at least {MIN_GRID_SAMPLES} samples, got {n}")
    if not extent > 0:
        raise InvalidArgumentError(f"grid extent must be positive, got {extent}")
    return TransverseGrid(n=n, spacing=extent / n, center=center)


def _open_where(x: np.ndarray, center: float, width: float, spacing: float) -> np.ndarray:
    return np.abs(x - center) <= width / 2 + _EDGE_TOLERANCE * spacing


def double_slit_mask(grid: TransverseGrid, spec: DoubleSlitSpec) -> np.ndarray:
    """0/1 transmission of the double slit; edge samples are open."""
    a, d = spec.slit_width_a, spec.slit_separation_d
    if grid.extent < d + a:
        raise InvalidArgumentError(
            f"grid extent {grid.extent:.6g} m cannot contain both slits (needs >= {d + a:.6g} m)"
        )
    x = grid.positions
    is_open = _open_where(x, d / 2, a, grid.spacing) | _open_where(x, -d / 2, a, grid.spacing)
    return is_open.astype(np.float64)


def single_slit_mask(grid: TransverseGrid, width: float, center: float = 0.0) -> np.ndarray:
    """0/1 transmission of one slit of ``width`` centered at ``center``."""
    if not width > 0:
        raise InvalidArgumentError(f"slit width must be positive, got {width}")
    x = grid.positions
    if abs(center) + width / 2 > grid.extent / 2:
        raise InvalidArgumentError("grid too small to contain the slit")
    return _open_where(x, center, width, grid.spacing).astype(np.float64)


def plane_wave(grid: TransverseGrid, wavelength: float, k_transverse: float = 0.0) -> ComplexField:
    """Unit-amplitude plane wave tilted by ``k_transverse`` (rad/m)."""
    values = np.exp(1j * k_transverse * grid.positions)
    return ComplexField(grid=grid, values=values, wavelength=wavelength)


def gaussian_beam(grid: TransverseGrid, wavelength: float, waist: float, center: float = 0.0) -> ComplexField:
    """Gaussian waist with intensity 1/e^2 radius ``waist``."""
    if not waist > 0:
        raise InvalidArgumentError(f"waist must be positive, got {waist}")
    values = np.exp(-((grid.positions - center) ** 2) / waist ** 2)
    return ComplexField(grid=grid, values=values, wavelength=wavelength)


def fresnel_propagate(field: ComplexField, distance_z: float) -> ComplexField:
    """Propagate ``field`` forward by ``distance_z`` meters; z = 0 returns the input."""
    if distance_z < 0:
        raise InvalidArgumentError(
            "negative propagation distance; propagate the conjugate field forward instead"
        )
    if distance_z == 0:
        return field
    q = field.grid.angular_frequencies
    transfer = np.exp(-1j * q ** 2 * distance_z / (2.0 * field.wavenumber))
    values = fft.ifft(fft.fft(field.values) * transfer)
    return field.with_values(values)


def thin_lens(field: ComplexField, focal_length_f: float) -> ComplexField:
    """Apply the paraxial thin-lens phase exp(-i k x^2 / (2f))."""
    if focal_length_f == 0:
        raise InvalidArgumentError("focal length must be non-zero")
    x = field.grid.positions
    phase = np.exp(-1j * field.wavenumber * x ** 2 / (2.0 * focal_length_f))
    return field.with_values(field.values * phase)


def focal_plane_coordinate(k_transverse: Any, f: float, wavelength: float) -> Any:
    """Back-focal-plane position reached by transverse wavevector ``k_transverse``."""
    x = f * np.asarray(k_transverse, dtype=np.float64) * wavelength / (2.0 * math.pi)
    return float(x) if x.ndim == 0 else x


def focal_plane_wavevector(x: Any, f: float, wavelength: float) -> Any:
    """Inverse of :func:`focal_plane_coordinate`."""
    k = 2.0 * math.pi * np.asarray(x, dtype=np.float64) / (f * wavelength)
    return float(k) if k.ndim == 0 else k


def focal_grid(grid: TransverseGrid, f: float, wavelength: float) -> TransverseGrid:
    """FFT-conjugate grid in the back focal plane of a lens of focal length ``f``."""
    return TransverseGrid(n=grid.n, spacing=wavelength * f / (grid.n * grid.spacing), center=0.0)


def fourier_transform_lens(field: ComplexField, f: float) -> ComplexField:
    """
    Field in the back focal plane of a thin lens, given the field just before it.

    U_F(u) = exp(i k u^2 / 2f) / sqrt(i lambda f) * FT[U](k u / f), evaluated on the
    FFT-conjugate grid so the transform is exact up to sampling. Power is conserved.
    """
    if not f > 0:
        raise InvalidArgumentError(f"focal length must be positive, got {f}")
    grid = field.grid
    out_grid = focal_grid(grid, f, field.wavelength)
    u = out_grid.positions
    q = focal_plane_wavevector(u, f, field.wavelength)
    spectrum = fft.fftshift(fft.fft(fft.ifftshift(field.values))) * grid.spacing
    spectrum = spectrum * np.exp(-1j * q * grid.center)
    prefactor = np.exp(1j * field.wavenumber * u ** 2 / (2.0 * f)) / np.sqrt(1j * field.wavelength * f)
    return ComplexField(grid=out_grid, values=prefactor * spectrum, wavelength=field.wavelength)
