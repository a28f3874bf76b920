"""
IRS Link Lab v1.0

Angle-domain simulator of an IRS-aided MISO downlink:
- URA geometry, effective angles and steering vectors
- Rician channel synthesis for the BS-user, IRS-user and BS-IRS links
- ML effective-angle estimation from one uplink pilot, with error propagation to the IRS
- Expected received power under angle error and joint BS/IRS beamforming
- Achievable rate, its approximation and upper bound
- Seeded Monte Carlo experiments with CSV/JSON result tables
"""

from .config import OptimizerParams, SystemConfig, load_config
from .errors import (
    BarrierDomainError,
    ConfigurationError,
    ContractViolation,
    DomainError,
    EstimationFailure,
    GeometryError,
    IRSLinkError,
    NumericalError,
)
from .geometry import EffectiveAnglePair, Position, SceneGeometry
from .channel import ChannelRealization, LinkParams, sample_channels
from .estimation import AngleEstimate, UplinkObservation, estimate_all
from .beamforming import DampedMatrices, PowerMatrix, assemble_T, bs_beam, compute_damped_matrices
from .optimizer import BeamformingSolution, joint_optimize, optimize_irs
from .rate import RateReport, achievable_rate, approx_rate, upper_bound_rate
from .repro import ResultTable, RunMetadata, __version__
from .experiments import SweepSpec, register_rate_curve
from .cli import cli_main

__all__ = [
    "OptimizerParams",
    "SystemConfig",
    "load_config",
    "IRSLinkError",
    "ConfigurationError",
    "GeometryError",
    "DomainError",
    "BarrierDomainError",
    "ContractViolation",
    "EstimationFailure",
    "NumericalError",
    "Position",
    "EffectiveAnglePair",
    "SceneGeometry",
    "LinkParams",
    "ChannelRealization",
    "sample_channels",
    "UplinkObservation",
    "AngleEstimate",
    "estimate_all",
    "DampedMatrices",
    "PowerMatrix",
    "compute_damped_matrices",
    "assemble_T",
    "bs_beam",
    "BeamformingSolution",
    "optimize_irs",
    "joint_optimize",
    "RateReport",
    "achievable_rate",
    "approx_rate",
    "upper_bound_rate",
    "ResultTable",
    "RunMetadata",
    "SweepSpec",
    "register_rate_curve",
    "cli_main",
]
