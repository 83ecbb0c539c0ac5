import math
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ghost_optics.models.optics import DoubleSlitSpec

SPDC_WAVELENGTH = 702.2e-9


class D1Mode(str, Enum):
    """How the signal-arm detector package collects photons"""
    POINT = "point"
    BUCKET = "bucket"


class DetectorPlane(str, Enum):
    """Observation plane a pattern was computed or measured in"""
    FOCAL = "focal"
    IMAGE = "image"
    COLLECTION = "collection"


class SinglesDetector(str, Enum):
    """Detectors whose single-count rate can be simulated"""
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"


class BiphotonModel(BaseModel):
    """Gaussian-regularized transverse SPDC two-photon state"""
    model_config = ConfigDict(frozen=True)

    wavelength: float = Field(SPDC_WAVELENGTH, description="Degenerate signal/idler wavelength (m)", gt=0)
    sigma_sum: float = Field(..., description="Std of k_s + k_i (1/m)", ge=0)
    sigma_single: float = Field(..., description="Std of each photon's transverse wavevector (1/m)", gt=0)
    pump_plane_wave: bool = Field(True, description="Plane-wave pump assumption")
    pump_sigma: float = Field(0.0, description="Extra pump angular spread as a wavevector std (1/m)", ge=0)
    enforce_entangled: bool = Field(True, description="Require sigma_sum < sigma_single")

    @model_validator(mode="after")
    def validate_regime(self) -> "BiphotonModel":
        if self.enforce_entangled and not self.sigma_sum < self.sigma_single:
            raise ValueError(
                f"entangled regime requires sigma_sum ({self.sigma_sum}) < sigma_single ({self.sigma_single})"
            )
        if not self.sigma_sum < 2.0 * self.sigma_single:
            raise ValueError("sigma_sum must be below 2*sigma_single for a normalizable state")
        if self.pump_plane_wave and self.pump_sigma > 0:
            raise ValueError("pump_sigma > 0 contradicts pump_plane_wave = true")
        return self

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def sigma_diff(self) -> float:
        """Std of k_s - k_i fixed by the single-photon marginal width."""
        return math.sqrt(4.0 * self.sigma_single ** 2 - self.sigma_sum ** 2)

    @property
    def effective_sigma_sum(self) -> float:
        """Sum-momentum spread including the optional pump divergence."""
        return math.hypot(self.sigma_sum, self.pump_sigma)

    def joint_amplitude(self, k_signal: Any, k_idler: Any) -> np.ndarray:
        """Normalized joint momentum amplitude; requires sigma_sum > 0."""
        if self.sigma_sum == 0:
            raise ValueError("joint amplitude is a delta distribution when sigma_sum = 0")
        k_sum = np.asarray(k_signal) + np.asarray(k_idler)
        k_diff = np.asarray(k_signal) - np.asarray(k_idler)
        norm = 1.0 / math.sqrt(math.pi * self.sigma_sum * self.sigma_diff)
        return norm * np.exp(-k_sum ** 2 / (4 * self.sigma_sum ** 2) - k_diff ** 2 / (4 * self.sigma_diff ** 2))

    def uncertainties(self) -> dict:
        """Source-plane standard deviations of the Gaussian state."""
        inv_sum = math.inf if self.sigma_sum == 0 else 1.0 / self.sigma_sum
        return {
            "dk1": self.sigma_single,
            "dk2": self.sigma_single,
            "dk_sum": self.sigma_sum,
            "dx1": 0.5 * math.hypot(inv_sum, 1.0 / self.sigma_diff),
            "dx2": 0.5 * math.hypot(inv_sum, 1.0 / self.sigma_diff),
            "dx_diff": 1.0 / self.sigma_diff,
        }


class GeometryConfig(BaseModel):
    """Lengths of the optical train; distances measured along each arm"""
    model_config = ConfigDict(frozen=True)

    slit: DoubleSlitSpec
    a1: float = Field(..., description="Slit plane to crystal (m)", gt=0)
    a2: float = Field(..., description="Crystal to imaging lens (m)", gt=0)
    b: float = Field(..., description="Imaging lens to image plane (m)", gt=0)
    f_imaging: float = Field(..., description="Imaging lens focal length (m)", gt=0)
    f_collection: float = Field(..., description="D1 collection lens focal length (m)", gt=0)
    wavelength: float = Field(SPDC_WAVELENGTH, description="Filter center wavelength (m)", gt=0)
    d1_detector: D1Mode = Field(D1Mode.POINT, description="D1 collection mode")
    d1_offset: float = Field(0.0, description="Point-like D1 position in the collection focal plane (m)")
    d2_width: float = Field(0.0, description="D2 scan aperture width (m)", ge=0)
    d3_width: float = Field(0.0, description="D3 scan aperture width (m)", ge=0)

    @property
    def object_distance(self) -> float:
        return self.a1 + self.a2

    @property
    def image_distance(self) -> float:
        return self.b


def _strictly_increasing(arr: np.ndarray) -> bool:
    return arr.size < 2 or bool(np.all(np.diff(arr) > 0))


class Pattern(BaseModel):
    """Relative coincidence (or singles) rate versus detector position"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: np.ndarray = Field(..., description="Detector positions (m)")
    rates: np.ndarray = Field(..., description="Relative rates")
    label: DetectorPlane = Field(..., description="Observation plane")

    @field_validator("positions", "rates", mode="before")
    @classmethod
    def validate_array(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("Pattern arrays must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Pattern arrays must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_pattern(self) -> "Pattern":
        if self.positions.shape != self.rates.shape:
            raise ValueError("positions and rates must have equal length")
        if not _strictly_increasing(self.positions):
            raise ValueError("positions must be strictly increasing")
        if np.any(self.rates < 0):
            raise ValueError("rates must be non-negative")
        return self

    @property
    def spacing(self) -> float:
        return float(self.positions[1] - self.positions[0])

    def is_uniform(self, rtol: float = 1e-6) -> bool:
        steps = np.diff(self.positions)
        return bool(np.allclose(steps, steps[0], rtol=rtol, atol=0.0))

    def normalized(self) -> "Pattern":
        peak = float(self.rates.max()) if self.rates.size else 0.0
        if peak <= 0:
            return self
        return Pattern(positions=self.positions, rates=self.rates / peak, label=self.label)


class CountsHistogram(BaseModel):
    """Poisson-sampled counts at each scan position"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: np.ndarray = Field(..., description="Detector positions (m)")
    counts: np.ndarray = Field(..., description="Counts per position")
    dwell: float = Field(1.0, description="Dwell time per point (arbitrary units)", gt=0)
    seed: int = Field(..., description="Seed that generated the counts", ge=0)
    label: DetectorPlane = Field(DetectorPlane.FOCAL, description="Observation plane")

    @field_validator("positions", mode="before")
    @classmethod
    def validate_positions(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 1 or not _strictly_increasing(arr):
            raise ValueError("positions must be a strictly increasing 1D array")
        arr.setflags(write=False)
        return arr

    @field_validator("counts", mode="before")
    @classmethod
    def validate_counts(cls, v: Any) -> np.ndarray:
        raw = np.asarray(v)
        arr = raw.astype(np.int64)
        if np.any(arr < 0) or not np.array_equal(arr, raw):
            raise ValueError("counts must be non-negative integers")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_shapes(self) -> "CountsHistogram":
        if self.positions.shape != self.counts.shape:
            raise ValueError("positions and counts must have equal length")
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class LensCheck(BaseModel):
    """Outcome of the two-photon thin-lens test"""
    residual: float = Field(..., description="|1/s_i + 1/s_o - 1/f| * f")
    satisfied: bool
    tolerance: float
