"""
Scenario configuration for IRS Link Lab.

SystemConfig holds every parameter a run depends on. It is an immutable
pydantic model: sweeps derive new configs with with_updates(), and a JSON
file with unknown keys is rejected so typos never pass silently.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .geometry import Position, cartesian_from_spherical

logger = logging.getLogger("IRSLink.Config")

Spherical = Tuple[float, float, float]


def _is_even_square(value: int) -> bool:
    side = math.isqrt(value)
    return value > 0 and side * side == value and value % 2 == 0


class OptimizerParams(BaseModel):
    """Knobs of the IRS phase optimizer and the BS/IRS alternation."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    p: int = Field(default=20, description="l_p exponent of the modulus surrogate")
    kappa: float = Field(default=100.0, gt=0, description="Barrier scale")
    eps: float = Field(default=1e-4, gt=0, description="Relative halting threshold")
    n_iter_inner: int = Field(default=200, ge=1)
    n_iter_outer: int = Field(default=30, ge=1)
    line_search_grid: int = Field(default=64, ge=2, description="Grid points on [0, 1]")
    barrier_margin: float = Field(default=1e-3, gt=0, description="δ in the feasibility rescale")

    @field_validator("p")
    @classmethod
    def _even_p(cls, v: int) -> int:
        if v < 4 or v % 2:
            raise ValueError(f"p must be an even integer ≥ 4, got {v}")
        return v


class SystemConfig(BaseModel):
    """
    All scenario parameters of one simulated link.

    Placements are (range m, elevation °, azimuth °) as seen from the BS.
    Powers are in dBm and converted to milliwatts at use.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_bs: int = Field(default=16, description="BS antennas (even perfect square)")
    m_irs: int = Field(default=64, description="IRS elements (0 or even perfect square)")

    p_bs_dbm: float = 10.0
    p_q_dbm: float = 10.0
    noise_dbm: float = -60.0
    bs_noise_dbm: float = -60.0

    rician_b2u: float = Field(default=5.0, ge=0)
    rician_i2u: float = Field(default=5.0, ge=0)
    rician_b2i: float = Field(default=5.0, ge=0)
    chi_b2u: float = Field(default=2.5, gt=0)
    chi_i2u: float = Field(default=2.5, gt=0)
    chi_b2i: float = Field(default=2.5, gt=0)

    irs_spherical: Spherical = (42.0, 63.0, -16.0)
    user_spherical: Spherical = (41.0, 47.0, -16.0)
    carrier_hz: float = Field(default=2.45e9, gt=0)

    pilot_phase: float = 0.0
    phase_model: Literal["rayleigh_variance", "small_angle", "exact"] = "exact"
    estimate_source: Literal["pilot", "error_model"] = "error_model"
    direct_link: bool = True
    no_direct_sigma_est_sq: float = Field(default=1e3, gt=0)

    optimizer: OptimizerParams = Field(default_factory=OptimizerParams)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    trials: int = Field(default=10_000, ge=1)
    rate_trials: int = Field(default=20, ge=1, description="Trials averaged per rate-curve point")
    workers: int = Field(default=4, ge=1)

    @field_validator("n_bs")
    @classmethod
    def _check_n_bs(cls, v: int) -> int:
        if not _is_even_square(v):
            raise ValueError(f"n_bs must be an even perfect square, got {v}")
        return v

    @field_validator("m_irs")
    @classmethod
    def _check_m_irs(cls, v: int) -> int:
        if v != 0 and not _is_even_square(v):
            raise ValueError(f"m_irs must be 0 or an even perfect square, got {v}")
        return v

    @field_validator("p_bs_dbm", "p_q_dbm", "noise_dbm", "bs_noise_dbm", "pilot_phase")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v

    @field_validator("irs_spherical", "user_spherical")
    @classmethod
    def _check_placement(cls, v: Spherical) -> Spherical:
        if not all(math.isfinite(c) for c in v):
            raise ValueError("placement must be finite")
        if v[0] <= 0:
            raise ValueError(f"placement range must be positive, got {v[0]}")
        return v

    @model_validator(mode="after")
    def _check_scene(self) -> "SystemConfig":
        elevation = self.user_spherical[1]
        if not 0.0 <= elevation <= 180.0:
            raise ValueError(f"user elevation must lie in [0°, 180°] (user below the BS), got {elevation}")
        irs, user = self.irs_position(), self.user_position()
        if irs.distance_to(user) == 0.0:
            raise ValueError("IRS and user placements coincide")
        return self

    # -- derived quantities ------------------------------------------------

    @property
    def wavelength_m(self) -> float:
        return 299_792_458.0 / self.carrier_hz

    def irs_position(self) -> Position:
        d, el, az = self.irs_spherical
        return cartesian_from_spherical(d, math.radians(el), math.radians(az))

    def user_position(self) -> Position:
        d, el, az = self.user_spherical
        return cartesian_from_spherical(d, math.radians(el), math.radians(az))

    def with_updates(self, **changes: Any) -> "SystemConfig":
        """Re-validated copy with some fields replaced."""
        data = self.model_dump()
        if "optimizer" in changes and isinstance(changes["optimizer"], OptimizerParams):
            changes["optimizer"] = changes["optimizer"].model_dump()
        data.update(changes)
        return build_config(data)

    def config_hash(self) -> str:
        """Short SHA-256 of the canonical JSON dump."""
        content = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(content.encode()).hexdigest()[:16]

    @classmethod
    def preset(cls, name: str) -> "SystemConfig":
        """Named scenario presets (desk default plus figure variants)."""
        if name not in PRESETS:
            raise ConfigurationError(f"Unknown preset '{name}'. Available: {', '.join(sorted(PRESETS))}")
        return build_config(PRESETS[name])


PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {},
    "full-scale": {"m_irs": 256, "trials": 1_000_000},
    "ra-sweep": {"irs_spherical": (57.8, 63.0, -16.0)},
    "beam-pattern": {"n_bs": 36, "user_spherical": (41.0, 133.0, -16.0)},
    "rate": {"n_bs": 4, "chi_b2i": 2.3, "chi_i2u": 2.3, "chi_b2u": 2.8},
}


def build_config(data: Dict[str, Any]) -> SystemConfig:
    """Validate a mapping into a SystemConfig, raising ConfigurationError."""
    try:
        return SystemConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


def load_config(path: Union[str, Path]) -> SystemConfig:
    """
    Load a SystemConfig from a JSON document.

    Args:
        path: JSON file holding a subset of the SystemConfig fields

    Returns:
        Validated SystemConfig

    Raises:
        ConfigurationError: missing file, malformed JSON, unknown keys or bad values
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
        config = SystemConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration in {path}: {e}") from e
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}") from e
    logger.info(f"Loaded config {path} (hash {config.config_hash()})")
    return config
