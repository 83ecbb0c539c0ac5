from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ghost_optics.models.biphoton import BiphotonModel, GeometryConfig
from ghost_optics.models.classical import ClassicalGunModel
from ghost_optics.models.estimators import Envelope
from ghost_optics.models.optics import MIN_GRID_SAMPLES, TransverseGrid


class ExperimentMode(str, Enum):
    """Which pipeline a run executes"""
    INTERFERENCE = "interference"
    IMAGE = "image"
    CLASSICAL = "classical"
    REPORT = "report"
    SWEEP = "sweep"


class RunStatus(str, Enum):
    """Outcome of a run"""
    SUCCESS = "SUCCESS"
    FIT_ERROR = "FIT_ERROR"
    CONFIG_ERROR = "CONFIG_ERROR"
    ERROR = "ERROR"

    @property
    def exit_code(self) -> int:
        return {"SUCCESS": 0, "FIT_ERROR": 2, "CONFIG_ERROR": 3, "ERROR": 1}[self.value]


class GridSpec(BaseModel):
    """Slit-plane simulation grid and image-plane scan grid"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(4096, description="Slit-plane samples", ge=MIN_GRID_SAMPLES)
    extent: float = Field(20e-3, description="Slit-plane extent (m)", gt=0)
    image_n: int = Field(2048, description="Image-plane scan samples", ge=MIN_GRID_SAMPLES)
    image_extent: float = Field(4e-3, description="Image-plane scan extent (m)", gt=0)

    def slit_grid(self) -> TransverseGrid:
        return TransverseGrid(n=self.n, spacing=self.extent / self.n)

    def image_grid(self) -> TransverseGrid:
        return TransverseGrid(n=self.image_n, spacing=self.image_extent / self.image_n)


class CountsSpec(BaseModel):
    """Coincidence-counting emulation"""
    model_config = ConfigDict(frozen=True)

    total_counts: int = Field(1_000_000, description="Expected total counts per scan", gt=0)
    seed: int = Field(0, description="Master seed", ge=0)
    dwell: float = Field(1.0, description="Dwell time per point (arbitrary units)", gt=0)


class InterferenceSpec(BaseModel):
    """Interference fit options"""
    model_config = ConfigDict(frozen=True)

    window: float = Field(5e-3, description="Fit half-window around the pattern center (m)", gt=0)
    envelope: Envelope = Field(Envelope.SINC, description="Envelope of the fit model")
    free_geometry: bool = Field(True, description="Fit a and d instead of pinning them")
    correct_detector: bool = Field(True, description="Undo the D2 aperture contrast loss before inverting V")


class ImageSpec(BaseModel):
    """Ghost-image generation options; give either a blur or a target FWHM excess"""
    model_config = ConfigDict(frozen=True)

    blur_sigma: Optional[float] = Field(None, description="Image-plane blur std (m)", ge=0)
    fwhm_excess: Optional[float] = Field(0.11e-3, description="Per-peak FWHM excess to generate (m)", ge=0)
    include_source_correlation: bool = Field(False, description="Add the source position-correlation blur")

    @model_validator(mode="after")
    def validate_blur(self) -> "ImageSpec":
        if self.blur_sigma is None and self.fwhm_excess is None:
            raise ValueError("image section needs blur_sigma or fwhm_excess")
        return self


class ReportSpec(BaseModel):
    """Inline uncertainties and/or prior run reports feeding the EPR report"""
    model_config = ConfigDict(frozen=True)

    dk1: Optional[float] = Field(None, description="Signal wavevector spread (1/m)", ge=0)
    dk2: Optional[float] = Field(None, description="Idler wavevector spread (1/m)", ge=0)
    dk_sum: Optional[float] = Field(None, description="Sum-wavevector spread (1/m)", ge=0)
    dx1: Optional[float] = Field(None, description="Signal position spread (m)", ge=0)
    dx2: Optional[float] = Field(None, description="Idler position spread (m)", ge=0)
    dx_diff: Optional[float] = Field(None, description="Position-difference spread (m)", ge=0)
    delta_theta: Optional[float] = Field(None, description="Single-photon divergence (rad); sets dk1 = dk2", gt=0)
    interference_result: Optional[str] = Field(None, description="report.json of an interference run")
    image_result: Optional[str] = Field(None, description="report.json of an image run")


class SweepSpec(BaseModel):
    """Classical property sweep"""
    model_config = ConfigDict(frozen=True)

    n_models: int = Field(100, gt=0)
    n_samples: int = Field(10_000, ge=1000)


class ClassicalRunSpec(BaseModel):
    """Sample sizes of a classical run"""
    model_config = ConfigDict(frozen=True)

    n_samples: int = Field(10_000, description="Pairs for the correlation statistics", ge=1000)
    pattern_samples: int = Field(2000, description="Pairs averaged into the coincidence pattern", gt=0)


class ExperimentConfig(BaseModel):
    """Fully validated experiment file"""
    model_config = ConfigDict(frozen=True)

    mode: ExperimentMode
    geometry: GeometryConfig
    biphoton: BiphotonModel
    classical: Optional[ClassicalGunModel] = None
    classical_run: ClassicalRunSpec = ClassicalRunSpec()
    grid: GridSpec = GridSpec()
    counts: CountsSpec = CountsSpec()
    interference: InterferenceSpec = InterferenceSpec()
    image: ImageSpec = ImageSpec()
    report: ReportSpec = ReportSpec()
    sweep: SweepSpec = SweepSpec()

    @model_validator(mode="after")
    def validate_mode(self) -> "ExperimentConfig":
        if self.mode == ExperimentMode.CLASSICAL and self.classical is None:
            raise ValueError("classical mode requires a [classical] section")
        if abs(self.geometry.wavelength - self.biphoton.wavelength) > 1e-6 * self.geometry.wavelength:
            raise ValueError("geometry and biphoton wavelengths differ")
        if self.classical is not None and abs(self.classical.wavelength - self.geometry.wavelength) > 1e-6 * self.geometry.wavelength:
            raise ValueError("geometry and classical wavelengths differ")
        return self


class RunResult(BaseModel):
    """What a run produced"""
    status: RunStatus
    message: Optional[str] = None
    artifacts: List[str] = Field(default_factory=list)
    report: Dict[str, Any] = Field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return self.status.exit_code
