"""
Achievable rate, its closed-form approximation and the upper bound.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from .beamforming import (
    LinkPowerTerms,
    PowerMatrix,
    bs_beam,
    check_unit_modulus,
    compute_damped_matrices,
    expected_power_matrix,
    link_power_terms,
    received_power,
)
from .channel import dbm_to_linear, scene_from_config
from .config import SystemConfig
from .errors import ContractViolation, DomainError
from .estimation import AngleEstimate
from .geometry import SceneGeometry, steering_vector
from .optimizer import BeamformingSolution

logger = logging.getLogger("IRSLink.Rate")


@dataclass
class RateReport:
    """Rates in bits/s/Hz and the effective SNR of the exact rate."""
    rate_exact: float
    rate_approx: float
    rate_upper: float
    snr_effective: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def achievable_rate(T: Union[PowerMatrix, np.ndarray], p_bs_mw: float, noise_mw: float) -> float:
    """
    log2(1 + w̃ᴴTw̃/σ0²) with w̃ = √P_BS·t_max.

    Raises:
        DomainError: noise ≤ 0 or negative transmit power
        NumericalError: eigen-solve did not converge
    """
    if not noise_mw > 0:
        raise DomainError(f"Noise power must be positive, got {noise_mw}")
    if not p_bs_mw >= 0:
        raise DomainError(f"Transmit power must be non-negative, got {p_bs_mw}")
    if p_bs_mw == 0:
        return 0.0
    w = bs_beam(T, p_bs_mw)
    return math.log2(1.0 + max(received_power(T, w), 0.0) / noise_mw)


def omega(estimate: AngleEstimate, xi: np.ndarray, config: SystemConfig, scene: Optional[SceneGeometry] = None) -> float:
    """
    Ω, the effective gain of the approximation, written out element by element.

    Equals tr(T) for the same inputs.

    Raises:
        ContractViolation: ξ not unit modulus, or Ω has a non-negligible imaginary part
    """
    scene = scene or scene_from_config(config)
    n, m = config.n_bs, config.m_irs
    xi = np.asarray(xi, dtype=complex)
    check_unit_modulus(xi)
    terms = link_power_terms(config, scene)
    dm = compute_damped_matrices(estimate, n, m)

    b = steering_vector(scene.b2i_arrival, m)
    a = steering_vector(scene.b2i, n)
    xb = xi * b
    cascade = n * terms.beta_cascade * np.vdot(xb, dm.B @ xb)
    cross = 2.0 * terms.cross_weight * np.real(np.vdot(xb, dm.C @ np.conj(a)))
    total = cascade + cross + n * terms.beta_direct + n * terms.sigma_nlos_sq
    if abs(np.imag(total)) > 1e-9 * max(abs(total), 1e-300):
        raise ContractViolation(f"Ω has imaginary residue {np.imag(total):.3g}")
    return float(np.real(total))


def approx_rate(
    estimate: AngleEstimate,
    xi: np.ndarray,
    config: SystemConfig,
    scene: Optional[SceneGeometry] = None,
) -> float:
    """log2(1 + P_BS·Ω/σ0²), valid when the dominant eigenvalue carries the trace."""
    p_bs = dbm_to_linear(config.p_bs_dbm)
    return math.log2(1.0 + p_bs * omega(estimate, xi, config, scene) / dbm_to_linear(config.noise_dbm))


def uninformed_rate(
    estimate: AngleEstimate,
    xi: np.ndarray,
    config: SystemConfig,
    scene: Optional[SceneGeometry] = None,
) -> float:
    """
    Rate when the BS has no channel knowledge and cannot steer.

    Averaged over beam directions, w̃ᴴTw̃ is P_BS·tr(T)/N, so the rate is
    log2(1 + P_BS·Ω/(N·σ0²)).
    """
    p_bs = dbm_to_linear(config.p_bs_dbm)
    gain = omega(estimate, xi, config, scene) / config.n_bs
    return math.log2(1.0 + p_bs * max(gain, 0.0) / dbm_to_linear(config.noise_dbm))


def upper_bound_from_terms(terms: LinkPowerTerms, n_bs: int, m_irs: int, p_bs_mw: float, noise_mw: float) -> float:
    """log2(1 + P_BS·N(βM² + 2√(ββ_U)M + β_U + σ²_NLOS)/σ0²)."""
    gain = terms.beta_cascade * m_irs * m_irs + 2.0 * terms.cross_weight * m_irs + terms.beta_direct + terms.sigma_nlos_sq
    return math.log2(1.0 + p_bs_mw * n_bs * gain / noise_mw)


def upper_bound_rate(config: SystemConfig, scene: Optional[SceneGeometry] = None) -> float:
    """Upper bound on the achievable rate for the configured scene."""
    return upper_bound_from_terms(
        link_power_terms(config, scene),
        config.n_bs,
        config.m_irs,
        dbm_to_linear(config.p_bs_dbm),
        dbm_to_linear(config.noise_dbm),
    )


def rate_report(
    config: SystemConfig,
    estimate: AngleEstimate,
    solution: BeamformingSolution,
    scene: Optional[SceneGeometry] = None,
) -> RateReport:
    """All three rates for an optimized solution."""
    scene = scene or scene_from_config(config)
    pm = expected_power_matrix(config, estimate, solution.xi, scene)
    p_bs = dbm_to_linear(config.p_bs_dbm)
    noise = dbm_to_linear(config.noise_dbm)
    exact = achievable_rate(pm, p_bs, noise)
    report = RateReport(
        rate_exact=exact,
        rate_approx=approx_rate(estimate, solution.xi, config, scene),
        rate_upper=upper_bound_rate(config, scene),
        snr_effective=2.0 ** exact - 1.0,
    )
    if report.rate_exact > report.rate_upper + 1e-9:
        logger.warning(f"Exact rate {report.rate_exact:.6f} exceeds the upper bound {report.rate_upper:.6f}")
    return report
