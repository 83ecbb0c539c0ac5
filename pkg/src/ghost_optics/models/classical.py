import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ghost_optics.models.biphoton import SPDC_WAVELENGTH


class KDistribution(str, Enum):
    """Distribution P(K) of the shared nominal transverse wavevector"""
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class Emission(str, Enum):
    """Where the two particles of a pair leave the source"""
    INDEPENDENT = "independent"
    SHARED = "shared"


class NoiseFloorPolicy(str, Enum):
    """How each particle's independent momentum noise is fixed"""
    SATURATE = "saturate"
    SCALED = "scaled"


class ClassicalGunModel(BaseModel):
    """Pair of rotating guns firing classically anti-correlated particles"""
    model_config = ConfigDict(frozen=True)

    k_spread: float = Field(..., description="Std of the shared nominal wavevector K (1/m)", ge=0)
    source_width_w: float = Field(..., description="Per-particle emission aperture std (m)", gt=0)
    noise_floor_policy: NoiseFloorPolicy = Field(NoiseFloorPolicy.SATURATE, description="Momentum noise rule")
    noise_factor: float = Field(1.0, description="sigma_n * 2w when policy is scaled", ge=1.0)
    k_distribution: KDistribution = Field(KDistribution.GAUSSIAN, description="Shape of P(K)")
    emission: Emission = Field(Emission.INDEPENDENT, description="Emission-point model")
    propagation_distance: float = Field(0.0, description="Plane where positions are reported (m)", ge=0)
    wavelength: float = Field(SPDC_WAVELENGTH, description="Particle wavelength (m)", gt=0)

    @model_validator(mode="after")
    def validate_policy(self) -> "ClassicalGunModel":
        if self.noise_floor_policy == NoiseFloorPolicy.SATURATE and self.noise_factor != 1.0:
            raise ValueError("noise_factor only applies to the scaled noise-floor policy")
        return self

    @property
    def sigma_noise(self) -> float:
        """Independent per-particle momentum noise; sigma_n * w >= 1/2 always."""
        return self.noise_factor / (2.0 * self.source_width_w)

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength


class PairSample(BaseModel):
    """One classically correlated pair"""
    k1: float
    k2: float
    x1: float
    x2: float
    nominal_k: float = Field(0.0, description="Shared nominal wavevector K of the pair (1/m)")
    nominal_x: float = Field(0.0, description="Shared nominal emission point of the pair (m)")


class CorrelationStats(BaseModel):
    """Standard deviations entering the EPR and classical inequalities"""
    model_config = ConfigDict(frozen=True)

    dk1: float = Field(..., ge=0)
    dk2: float = Field(..., ge=0)
    dk_sum: float = Field(..., ge=0)
    dx1: float = Field(..., ge=0)
    dx2: float = Field(..., ge=0)
    dx_diff: float = Field(..., ge=0)
    n_samples: Optional[int] = Field(None, description="Sample count; None for exact values")
    dk1_local: Optional[float] = Field(None, description="Particle-1 momentum spread about the pair's nominal value", ge=0)
    dk2_local: Optional[float] = Field(None, ge=0)
    dx1_local: Optional[float] = Field(None, description="Particle-1 position spread about the pair's nominal value", ge=0)
    dx2_local: Optional[float] = Field(None, ge=0)

    @property
    def momentum_parts(self) -> tuple:
        return (
            self.dk1 if self.dk1_local is None else self.dk1_local,
            self.dk2 if self.dk2_local is None else self.dk2_local,
        )

    @property
    def position_parts(self) -> tuple:
        return (
            self.dx1 if self.dx1_local is None else self.dx1_local,
            self.dx2 if self.dx2_local is None else self.dx2_local,
        )

    @property
    def margin(self) -> float:
        """5-sigma relative sampling margin; zero for exact values."""
        return 0.0 if not self.n_samples else 5.0 / math.sqrt(self.n_samples)


class ClassicalBoundsVerdict(BaseModel):
    """Classical quadrature bounds and the EPR test evaluated on one set of stats"""
    eq8_momentum_ok: bool = Field(..., description="dk_sum exceeds the larger per-particle spread")
    eq8_position_ok: bool = Field(..., description="dx_diff exceeds the larger per-particle spread")
    eq3_violated_as_expected: bool = Field(..., description="EPR inequalities are not jointly satisfied")
    epr_momentum_satisfied: bool
    epr_position_satisfied: bool
    product: float
    margin: float


class SweepRow(BaseModel):
    """One randomly drawn classical model with its statistics and verdict"""
    index: int = Field(..., ge=0)
    model: ClassicalGunModel
    stats: CorrelationStats
    verdict: ClassicalBoundsVerdict
    product_ok: bool = Field(..., description="dk_sum * dx_diff >= 1 within the sampling margin")
