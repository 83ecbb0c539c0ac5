from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MIN_GRID_SAMPLES = 16


class TransverseGrid(BaseModel):
    """Uniform 1D sampling of the transverse coordinate"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., description="Sample count", ge=MIN_GRID_SAMPLES)
    spacing: float = Field(..., description="Sample spacing (m)", gt=0)
    center: float = Field(0.0, description="Grid center (m)")

    @property
    def extent(self) -> float:
        return self.n * self.spacing

    @property
    def positions(self) -> np.ndarray:
        return self.center + (np.arange(self.n) - self.n // 2) * self.spacing

    @property
    def angular_frequencies(self) -> np.ndarray:
        """Transverse wavevectors q (rad/m) in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)


class ComplexField(BaseModel):
    """Sampled complex transverse amplitude at one wavelength"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: TransverseGrid
    values: np.ndarray = Field(..., description="Complex amplitude per sample")
    wavelength: float = Field(..., description="Wavelength (m)", gt=0)

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v: Any) -> np.ndarray:
        arr = np.asarray(v, dtype=np.complex128)
        if arr.ndim != 1:
            raise ValueError("Field values must be one-dimensional")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_length(self) -> "ComplexField":
        if self.values.shape[0] != self.grid.n:
            raise ValueError(f"Field has {self.values.shape[0]} samples, grid has {self.grid.n}")
        return self

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def power(self) -> float:
        return float(np.sum(self.intensity) * self.grid.spacing)

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(grid=self.grid, values=values, wavelength=self.wavelength)

    def conjugate(self) -> "ComplexField":
        return self.with_values(np.conj(self.values))


class DoubleSlitSpec(BaseModel):
    """Two identical slits symmetric about the optical axis"""
    model_config = ConfigDict(frozen=True)

    slit_width_a: float = Field(..., description="Slit width (m)", gt=0)
    slit_separation_d: float = Field(..., description="Center-to-center separation (m)", gt=0)

    @model_validator(mode="after")
    def validate_no_overlap(self) -> "DoubleSlitSpec":
        if not self.slit_width_a < self.slit_separation_d:
            raise ValueError(
                f"slit overlap: width a={self.slit_width_a} m must be smaller than "
                f"separation d={self.slit_separation_d} m"
            )
        return self
