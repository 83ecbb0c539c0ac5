from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ghost_optics.models.classical import ClassicalBoundsVerdict

NOT_SUFFICIENT_CAVEAT = "product < 1 is a necessary but not sufficient condition for entanglement"

CONVENTION_NOTE = (
    "All uncertainties are standard deviations. The position-difference uncertainty is the "
    "FWHM excess of the fitted image peaks over the ideal magnified slits, measured in the "
    "image plane and compared directly with the slit width as the single-photon position "
    "uncertainty; the product mixes this image-plane width with the source-plane sum-momentum "
    "spread exactly as the published comparison does."
)


class Envelope(str, Enum):
    """Envelope multiplying the fringe term of the interference model"""
    SINC = "sinc"
    GAUSSIAN = "gaussian"


class InterferenceFit(BaseModel):
    """Visibility fit of a ghost interference pattern"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    visibility_V: float = Field(..., ge=0, le=1)
    blur_sigma: Optional[float] = Field(None, description="Focal-plane Gaussian blur std (m); sinc envelope only", ge=0)
    fitted_a: float = Field(..., description="Slit width (m); envelope std (m) for the gaussian envelope", gt=0)
    fitted_d: float = Field(..., description="Slit separation (m)", gt=0)
    envelope_center: float = Field(..., description="Pattern center (m)")
    amplitude: float = Field(..., ge=0)
    residual_rms: float = Field(..., description="RMS residual relative to the fitted peak", ge=0)
    covariance: np.ndarray = Field(..., description="Covariance of the fitted parameters, ordered as parameter_names")
    parameter_names: Tuple[str, ...] = ("amplitude", "center", "blur_variance", "a", "d")
    visibility_stderr: float = Field(..., ge=0)
    bootstrap_stderr: Optional[float] = Field(None, ge=0)
    envelope: Envelope = Envelope.SINC
    n_fringes: float = Field(..., ge=0)
    nfev: int = 0
    start_index: int = Field(0, description="Multi-start branch that won")

    @field_validator("covariance", mode="before")
    @classmethod
    def validate_covariance(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_geometry(self) -> "InterferenceFit":
        if self.envelope == Envelope.SINC and not self.fitted_a < self.fitted_d:
            raise ValueError("fitted slit width must stay below fitted separation")
        return self

    @property
    def quoted_stderr(self) -> float:
        """Larger of the covariance and bootstrap error bars (1 sigma)."""
        if self.bootstrap_stderr is None:
            return self.visibility_stderr
        return max(self.visibility_stderr, self.bootstrap_stderr)


class ImageFit(BaseModel):
    """Blur fit of a ghost image"""
    model_config = ConfigDict(frozen=True)

    blur_sigma: float = Field(..., description="Gaussian blur std (m)", ge=0)
    blur_stderr: float = Field(0.0, ge=0)
    amplitude: float = Field(..., ge=0)
    offset: float = Field(0.0, description="Common transverse offset of both peaks (m)")
    peak_centers: Tuple[float, float]
    fwhm_fitted: Tuple[float, float] = Field(..., description="Per-peak FWHM of the fitted curve (m)")
    fwhm_ideal: float = Field(..., description="Magnified slit width a' (m)", gt=0)
    magnification: float = Field(..., gt=0)
    residual_rms: float = Field(..., ge=0)
    bootstrap_stderr: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def validate_widths(self) -> "ImageFit":
        if min(self.fwhm_fitted) < self.fwhm_ideal:
            raise ValueError("fitted FWHM cannot be narrower than the ideal image")
        return self

    @property
    def peak_distance(self) -> float:
        return abs(self.peak_centers[1] - self.peak_centers[0])


class EprReport(BaseModel):
    """EPR inequalities, uncertainty product and classical bounds for one data set"""
    dk1: float = Field(..., ge=0)
    dk2: float = Field(..., ge=0)
    dk_sum: float = Field(..., ge=0)
    dx1: float = Field(..., ge=0)
    dx2: float = Field(..., ge=0)
    dx_diff: float = Field(..., ge=0)
    epr_momentum_ok: bool
    epr_position_ok: bool
    product: float = Field(..., ge=0)
    product_below_one: bool
    product_caveat: Optional[str] = None
    classical_bounds: Optional[ClassicalBoundsVerdict] = None
    convention_note: str = CONVENTION_NOTE
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_verdicts(self) -> "EprReport":
        if self.epr_momentum_ok != (self.dk_sum < min(self.dk1, self.dk2)):
            raise ValueError("epr_momentum_ok inconsistent with inputs")
        if self.epr_position_ok != (self.dx_diff < min(self.dx1, self.dx2)):
            raise ValueError("epr_position_ok inconsistent with inputs")
        return self

    @property
    def epr_satisfied(self) -> bool:
        return self.epr_momentum_ok and self.epr_position_ok

    def as_quantities(self) -> Dict[str, Any]:
        """Report values with SI unit strings, ready for JSON output."""
        def q(value: float, unit: str) -> Dict[str, Any]:
            return {"value": value, "unit": unit}

        out: Dict[str, Any] = {
            "dk1": q(self.dk1, "1/m"),
            "dk2": q(self.dk2, "1/m"),
            "dk_sum": q(self.dk_sum, "1/m"),
            "dx1": q(self.dx1, "m"),
            "dx2": q(self.dx2, "m"),
            "dx_diff": q(self.dx_diff, "m"),
            "product": q(self.product, "1"),
            "epr_momentum_ok": self.epr_momentum_ok,
            "epr_position_ok": self.epr_position_ok,
            "product_below_one": self.product_below_one,
            "product_caveat": self.product_caveat,
            "convention_note": self.convention_note,
            "notes": list(self.notes),
        }
        if self.classical_bounds is not None:
            out["classical_bounds"] = self.classical_bounds.model_dump()
        return out
