"""
Experiment files: line-based ``key = value`` pairs grouped under ``[section]`` headers.

Every length, inverse length and angle must carry an explicit unit suffix
(``0.165 mm``, ``2.5 1/mm``, ``2.6 mrad``); values are stored in SI units.
Built-in presets live in ``ghost_optics/presets`` and are addressed by bare name.
"""

import hashlib
import logging
import re
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from pydantic import ValidationError

from ghost_optics.config.settings import setting
from ghost_optics.errors import ConfigParseError, ConfigValidationError, InvalidArgumentError
from ghost_optics.models.biphoton import SPDC_WAVELENGTH
from ghost_optics.models.experiment import ExperimentConfig, ExperimentMode
from ghost_optics.services.estimators import divergence_to_single_uncertainty

logger = logging.getLogger(__name__)

LENGTH = "length"
INV_LENGTH = "inverse length"
ANGLE = "angle"
INT = "int"
FLOAT = "float"
BOOL = "bool"
TEXT = "text"

UNITS = {
    LENGTH: {"nm": 1e-9, "um": 1e-6, "µm": 1e-6, "mm": 1e-3, "cm": 1e-2, "m": 1.0},
    INV_LENGTH: {
        "1/m": 1.0, "m^-1": 1.0,
        "1/cm": 1e2, "cm^-1": 1e2,
        "1/mm": 1e3, "mm^-1": 1e3,
        "1/um": 1e6, "um^-1": 1e6,
    },
    ANGLE: {"rad": 1.0, "mrad": 1e-3, "urad": 1e-6},
}

SCHEMA: Dict[str, Dict[str, str]] = {
    "experiment": {"mode": TEXT},
    "geometry": {
        "slit_width_a": LENGTH,
        "slit_separation_d": LENGTH,
        "a1": LENGTH,
        "a2": LENGTH,
        "b": LENGTH,
        "f_imaging": LENGTH,
        "f_collection": LENGTH,
        "wavelength": LENGTH,
        "d1_detector": TEXT,
        "d1_offset": LENGTH,
        "d2_width": LENGTH,
        "d3_width": LENGTH,
    },
    "biphoton": {
        "sigma_sum": INV_LENGTH,
        "sigma_single": INV_LENGTH,
        "delta_theta": ANGLE,
        "pump_sigma": INV_LENGTH,
        "pump_plane_wave": BOOL,
        "enforce_entangled": BOOL,
    },
    "classical": {
        "k_spread": INV_LENGTH,
        "delta_theta": ANGLE,
        "source_width_w": LENGTH,
        "noise_floor_policy": TEXT,
        "noise_factor": FLOAT,
        "k_distribution": TEXT,
        "emission": TEXT,
        "propagation_distance": LENGTH,
        "n_samples": INT,
        "pattern_samples": INT,
    },
    "grid": {"n": INT, "extent": LENGTH, "image_n": INT, "image_extent": LENGTH},
    "counts": {"total_counts": INT, "seed": INT, "dwell": FLOAT},
    "interference": {"window": LENGTH, "envelope": TEXT, "free_geometry": BOOL, "correct_detector": BOOL},
    "image": {"blur_sigma": LENGTH, "fwhm_excess": LENGTH, "include_source_correlation": BOOL},
    "report": {
        "dk1": INV_LENGTH,
        "dk2": INV_LENGTH,
        "dk_sum": INV_LENGTH,
        "dx1": LENGTH,
        "dx2": LENGTH,
        "dx_diff": LENGTH,
        "delta_theta": ANGLE,
        "interference_result": TEXT,
        "image_result": TEXT,
    },
    "sweep": {"n_models": INT, "n_samples": INT},
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_QUANTITY = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)?$")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

Parsed = Dict[str, Dict[str, Any]]
LineIndex = Dict[Tuple[str, str], int]


def parse_value(kind: str, raw: str, line: Optional[int] = None) -> Any:
    """Convert one raw value of the given kind; quantities are returned in SI units."""
    if kind in UNITS:
        match = _QUANTITY.match(raw)
        if not match:
            raise ConfigParseError(f"expected a number with a {kind} unit, got {raw!r}", line)
        number, unit = match.groups()
        if unit is None:
            raise ConfigParseError(f"missing {kind} unit in {raw!r} (use one of {', '.join(UNITS[kind])})", line)
        if unit not in UNITS[kind]:
            raise ConfigParseError(f"unknown {kind} unit {unit!r} (use one of {', '.join(UNITS[kind])})", line)
        return float(number) * UNITS[kind][unit]
    if kind == INT:
        try:
            value = float(raw.replace("_", ""))
        except ValueError:
            raise ConfigParseError(f"expected an integer, got {raw!r}", line) from None
        if not value.is_integer():
            raise ConfigParseError(f"expected an integer, got {raw!r}", line)
        return int(value)
    if kind == FLOAT:
        try:
            return float(raw)
        except ValueError:
            raise ConfigParseError(f"expected a number, got {raw!r}", line) from None
    if kind == BOOL:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigParseError(f"expected true or false, got {raw!r}", line)
    return raw


def parse_config_text(text: str) -> Tuple[Parsed, LineIndex]:
    """Parse experiment-file text into typed sections plus a (section, key) -> line index."""
    parsed: Parsed = {}
    lines: LineIndex = {}
    section: Optional[str] = None
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        header = _SECTION.match(line)
        if header:
            section = header.group(1).lower()
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section [{section}]", number)
            parsed.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {line!r}", number)
        if section is None:
            raise ConfigParseError("key outside of any [section]", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigParseError(f"unknown key {key!r} in [{section}]", number)
        if key in parsed[section]:
            raise ConfigParseError(f"duplicate key {key!r} in [{section}]", number)
        if not value:
            raise ConfigParseError(f"empty value for {key!r}", number)
        parsed[section][key] = parse_value(SCHEMA[section][key], value, number)
        lines[(section, key)] = number
    return parsed, lines


def _exclusive(section: Dict[str, Any], name: str, key: str, alternative: str, convert) -> None:
    if alternative in section:
        if key in section:
            raise ConfigValidationError(f"[{name}] sets both {key} and {alternative}")
        section[key] = convert(section.pop(alternative))


def build_config(
    parsed: Parsed,
    lines: Optional[LineIndex] = None,
    mode: Optional[Union[ExperimentMode, str]] = None,
) -> ExperimentConfig:
    """Validate parsed sections into an ExperimentConfig; ``mode`` overrides [experiment] mode."""
    lines = lines or {}
    sections = {name: dict(values) for name, values in parsed.items()}
    geometry = sections.get("geometry", {})
    wavelength = geometry.get("wavelength", SPDC_WAVELENGTH)

    def to_k(theta: float) -> float:
        try:
            return divergence_to_single_uncertainty(theta, wavelength)
        except InvalidArgumentError as e:
            raise ConfigValidationError(str(e)) from None

    biphoton = sections.get("biphoton", {})
    _exclusive(biphoton, "biphoton", "sigma_single", "delta_theta", to_k)
    biphoton["wavelength"] = wavelength

    slit = {key: geometry.pop(key) for key in ("slit_width_a", "slit_separation_d") if key in geometry}
    geometry["slit"] = slit

    data: Dict[str, Any] = {
        "mode": mode or sections.get("experiment", {}).get("mode", ExperimentMode.INTERFERENCE),
        "geometry": geometry,
        "biphoton": biphoton,
        "grid": {
            "n": setting.GHOST_OPTICS_GRID_N,
            "extent": setting.GHOST_OPTICS_GRID_EXTENT_MM * 1e-3,
            **sections.get("grid", {}),
        },
    }
    if "classical" in sections:
        classical = sections["classical"]
        _exclusive(classical, "classical", "k_spread", "delta_theta", to_k)
        data["classical_run"] = {
            key: classical.pop(key) for key in ("n_samples", "pattern_samples") if key in classical
        }
        classical["wavelength"] = wavelength
        data["classical"] = classical
    for name in ("counts", "interference", "image", "report", "sweep"):
        if name in sections:
            data[name] = sections[name]
    if "image" in sections and "blur_sigma" in sections["image"] and "fwhm_excess" not in sections["image"]:
        data["image"]["fwhm_excess"] = None

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(_describe(e, lines)) from None


def _describe(error: ValidationError, lines: LineIndex) -> str:
    messages = []
    for item in error.errors():
        loc = [str(part) for part in item["loc"]]
        where = ".".join(loc) or "config"
        section = "experiment" if loc and loc[0] == "mode" else (loc[0] if loc else "")
        if section == "classical_run":
            section = "classical"
        line = next((lines[(section, part)] for part in reversed(loc) if (section, part) in lines), None)
        prefix = f"line {line}: " if line is not None else ""
        messages.append(f"{prefix}{where}: {item['msg']}")
    return "; ".join(messages)


def resolve_config(source: Union[str, Path]) -> Tuple[str, str]:
    """Text and display name of a config file path or a built-in preset name."""
    path = Path(source)
    if path.is_file():
        return path.read_text(encoding="utf-8"), str(path)
    preset = resources.files("ghost_optics").joinpath("presets", f"{source}.cfg")
    if preset.is_file():
        return preset.read_text(encoding="utf-8"), f"preset:{source}"
    raise ConfigParseError(f"no config file or preset named {str(source)!r}")


def load_config(source: Union[str, Path], mode: Optional[Union[ExperimentMode, str]] = None) -> ExperimentConfig:
    """Parse and validate an experiment file or preset."""
    text, name = resolve_config(source)
    parsed, lines = parse_config_text(text)
    config = build_config(parsed, lines, mode)
    logger.info("loaded %s (mode=%s)", name, config.mode.value)
    return config


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form of a validated config."""
    return hashlib.sha256(config.model_dump_json().encode("utf-8")).hexdigest()
