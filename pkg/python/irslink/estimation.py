"""
Angle estimation from the uplink pilot.

The user sends one pilot; the BS reads the phase of every antenna, pairs
antenna n with antenna N - n + 1, and inverts the linear phase model with
the ML estimator. The estimated user position then gives the IRS-user
angles, and the B2U error variance is carried over through first-order
propagation coefficients.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, special

from .channel import complex_gaussian, dbm_to_linear, link_params, scene_from_config
from .config import SystemConfig
from .errors import DomainError, EstimationFailure, GeometryError
from .geometry import (
    EffectiveAnglePair,
    Position,
    SceneGeometry,
    max_pair_phase_span,
    pair_indices,
    steering_vector,
    ura_grid,
)

logger = logging.getLogger("IRSLink.Estimation")

# Multiplier of (1/v)(1 + (v+1)/rx_snr) in the closed-form phase-noise models.
PHASE_MODELS: Dict[str, float] = {
    "rayleigh_variance": (4.0 - math.pi) / 8.0,
    "small_angle": 0.5,
}
EXACT_PHASE_MODEL = "exact"


@dataclass
class UplinkObservation:
    """Received pilot phases arg(r_n), wrapped to (-π, π]."""
    phases: np.ndarray
    snr_rx: float
    rician_k: float


@dataclass
class AngleEstimate:
    """Everything the beamformer needs to know about the user side."""
    b2u: EffectiveAnglePair
    i2u: EffectiveAnglePair
    user_pos_est: Position
    d_i2u_est: float
    sigma_est_sq: float
    phi: Tuple[float, float, float]
    theta_z_i2u: float = 0.0
    ratio_ra: float = 0.0
    sigma_e_sq: float = 0.0
    source: str = "pilot"

    def propagation_matrix(self) -> np.ndarray:
        """Φ mapping the B2U error onto the I2U error."""
        p1, p2, p3 = self.phi
        return np.array([[p1, p2], [p2, p3]])

    def with_sigma(self, sigma_est_sq: float) -> "AngleEstimate":
        return AngleEstimate(
            b2u=self.b2u, i2u=self.i2u, user_pos_est=self.user_pos_est,
            d_i2u_est=self.d_i2u_est, sigma_est_sq=sigma_est_sq, phi=self.phi,
            theta_z_i2u=self.theta_z_i2u, ratio_ra=self.ratio_ra,
            sigma_e_sq=self.sigma_e_sq, source=self.source,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "b2u": self.b2u.to_dict(),
            "i2u": self.i2u.to_dict(),
            "user_pos_est": self.user_pos_est.to_dict(),
            "d_i2u_est": self.d_i2u_est,
            "sigma_est_sq": self.sigma_est_sq,
            "phi": list(self.phi),
            "ratio_ra": self.ratio_ra,
            "source": self.source,
        }


def wrap_phase(x):
    """Map to the principal branch (-π, π]."""
    wrapped = np.mod(np.asarray(x, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    wrapped = np.where(wrapped == -math.pi, math.pi, wrapped)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def _rician_phase_pdf(phi: float, gamma: float) -> float:
    """Density of arg(1 + z), z ~ CN(0, 1/γ), on (-π, π]."""
    c = math.cos(phi)
    coherent = math.sqrt(gamma / (4.0 * math.pi)) * c * math.exp(-gamma * math.sin(phi) ** 2)
    return math.exp(-gamma) / (2.0 * math.pi) + coherent * (1.0 + special.erf(math.sqrt(gamma) * c))


@lru_cache(maxsize=256)
def rician_phase_variance(gamma: float) -> float:
    """
    Variance of the phase of a Rician phasor with specular-to-diffuse ratio γ.

    Integrates φ²·p(φ) over (-π, π]; 0 for γ = inf, π²/3 for γ = 0.
    """
    if gamma < 0:
        raise DomainError(f"Specular-to-diffuse ratio must be non-negative, got {gamma}")
    if math.isinf(gamma):
        return 0.0
    if gamma == 0.0:
        return math.pi ** 2 / 3.0
    # Mass concentrates within a few 1/√γ of zero.
    width = 12.0 / math.sqrt(gamma)
    breaks = [width] if width < math.pi else None
    value, _ = integrate.quad(lambda p: p * p * _rician_phase_pdf(p, gamma), 0.0, math.pi, points=breaks, limit=200)
    return 2.0 * value


def phase_uncertainty_variance(rician_k: float, rx_snr: float, model: str = "rayleigh_variance") -> float:
    """
    Variance σ_e² of the per-antenna phase error.

    The published model is (4-π)/(8v) + (4-π)(v+1)/(8·v·rx_snr). The
    "small_angle" model replaces (4-π)/8 by 1/2, the first-order variance
    of arg(1 + z) for circular z. The "exact" model integrates the Rician
    phase density, with diffuse-to-specular ratio 1/v + (v+1)/(v·rx_snr),
    and is what the pilot simulator produces at any SNR.

    Args:
        rician_k: B2U Rician factor v > 0 (inf for pure LOS)
        rx_snr: Linear receive SNR α·P_q/σ²_BS > 0 (inf when noiseless)
        model: 'rayleigh_variance', 'small_angle' or 'exact'
    """
    if not rician_k > 0 or not rx_snr > 0:
        raise DomainError(f"Rician factor and SNR must be positive, got v={rician_k}, snr={rx_snr}")
    if model != EXACT_PHASE_MODEL and model not in PHASE_MODELS:
        raise DomainError(f"Unknown phase model '{model}'")
    if math.isinf(rician_k):
        return 0.0
    diffuse = 1.0 / rician_k + (rician_k + 1.0) / (rician_k * rx_snr)
    if model == EXACT_PHASE_MODEL:
        return rician_phase_variance(1.0 / diffuse)
    return PHASE_MODELS[model] * diffuse


def estimation_error_variance(sigma_e_sq: float, n_bs: int) -> float:
    """σ_est² = 6σ_pd²/(N(N-1)) with σ_pd² = 2σ_e²."""
    return 12.0 * sigma_e_sq / (n_bs * (n_bs - 1))


def pilot_snr(config: SystemConfig, scene: Optional[SceneGeometry] = None) -> float:
    """Linear receive SNR α_B2U·P_q/σ²_BS of the uplink pilot."""
    alpha = link_params(config, scene)["b2u"].gain
    return alpha * dbm_to_linear(config.p_q_dbm) / dbm_to_linear(config.bs_noise_dbm)


def pilot_power_for_snr(config: SystemConfig, rx_snr_db: float, scene: Optional[SceneGeometry] = None) -> float:
    """Pilot power in dBm that yields rx_snr_db at the BS."""
    alpha = link_params(config, scene)["b2u"].gain
    return rx_snr_db + config.bs_noise_dbm - 10.0 * math.log10(alpha)


def model_sigma_est_sq(config: SystemConfig, scene: Optional[SceneGeometry] = None) -> float:
    """σ_est² predicted for the configured pilot, Rician factor and phase model."""
    sigma_e_sq = phase_uncertainty_variance(config.rician_b2u, pilot_snr(config, scene), config.phase_model)
    return estimation_error_variance(sigma_e_sq, config.n_bs)


def received_pilot_phases(
    angles: EffectiveAnglePair,
    n_bs: int,
    los_weight: float,
    nlos_weight: float,
    pilot_mw: float,
    noise_mw: float,
    rng: np.random.Generator,
    pilot_phase: float = 0.0,
    trials: Optional[int] = None,
) -> np.ndarray:
    """
    arg(r_n) of r = conj(h_b2u)·q + noise with the exact complex model.

    With trials set, returns a (trials, N) array of independent draws.
    """
    shape = n_bs if trials is None else (trials, n_bs)
    q = math.sqrt(pilot_mw) * complex(math.cos(pilot_phase), math.sin(pilot_phase))
    los = np.conj(steering_vector(angles, n_bs))
    h = los_weight * los + nlos_weight * complex_gaussian(rng, shape)
    r = h * q + math.sqrt(noise_mw) * complex_gaussian(rng, shape)
    return wrap_phase(np.angle(r))


def simulate_uplink_phases(
    config: SystemConfig,
    true_b2u: EffectiveAnglePair,
    rng: np.random.Generator,
    scene: Optional[SceneGeometry] = None,
) -> UplinkObservation:
    """
    Draw the received pilot at every BS antenna and keep its phase.

    Phase of r_n decomposes as θ_q - i_n·θx - j_n·θy + e_n.
    """
    link = link_params(config, scene)["b2u"]
    phases = received_pilot_phases(
        true_b2u,
        config.n_bs,
        link.los_weight,
        link.nlos_weight,
        dbm_to_linear(config.p_q_dbm),
        dbm_to_linear(config.bs_noise_dbm),
        rng,
        config.pilot_phase,
    )
    return UplinkObservation(phases=phases, snr_rx=pilot_snr(config, scene), rician_k=config.rician_b2u)


def pair_phase_differences(obs: UplinkObservation) -> np.ndarray:
    """wrap(phase_n - phase_{N-n+1}) for n = 1..N/2."""
    n_idx, m_idx = pair_indices(len(obs.phases))
    return wrap_phase(obs.phases[n_idx] - obs.phases[m_idx])


def ml_estimate_b2u(diffs: np.ndarray, n_bs: int) -> EffectiveAnglePair:
    """
    ML effective angles from the N/2 pair differences.

    θ̂x = -6·Σ(i_n - i_m)·Δ / (N(N-1)), likewise θ̂y with the j indices.
    """
    diffs = np.asarray(diffs, dtype=float)
    i_idx, j_idx = ura_grid(n_bs)
    n_idx, m_idx = pair_indices(n_bs)
    if diffs.shape != n_idx.shape:
        raise DomainError(f"Expected {len(n_idx)} pair differences, got {diffs.shape}")
    scale = -6.0 / (n_bs * (n_bs - 1))
    theta_x = scale * float(np.dot(i_idx[n_idx] - i_idx[m_idx], diffs))
    theta_y = scale * float(np.dot(j_idx[n_idx] - j_idx[m_idx], diffs))
    return EffectiveAnglePair(theta_x, theta_y)


def localize_user(b2u_est: EffectiveAnglePair, d_b2u: float) -> Position:
    """
    User position from the B2U angles and the known range.

    Raises:
        EstimationFailure: the angle pair lies outside the disk of radius π
    """
    radial = math.pi ** 2 - b2u_est.radius_sq()
    if radial < 0.0:
        if radial > -1e-12:
            radial = 0.0
        else:
            raise EstimationFailure(
                f"Estimated angles ({b2u_est.theta_x:.4f}, {b2u_est.theta_y:.4f}) leave the physical disk"
            )
    return Position(
        -d_b2u * b2u_est.theta_x / math.pi,
        -d_b2u * b2u_est.theta_y / math.pi,
        -d_b2u * math.sqrt(radial) / math.pi,
    )


def irs_user_angles(user_pos_est: Position, irs_pos: Position) -> Tuple[EffectiveAnglePair, float]:
    """Effective angles from the IRS to the estimated user, and that distance."""
    d = irs_pos.distance_to(user_pos_est)
    if d == 0.0:
        raise GeometryError("Estimated user coincides with the IRS")
    return (
        EffectiveAnglePair(
            (irs_pos.x - user_pos_est.x) * math.pi / d,
            (irs_pos.y - user_pos_est.y) * math.pi / d,
        ),
        d,
    )


def error_propagation_coeffs(
    i2u_est: EffectiveAnglePair,
    theta_z_i2u: float,
    ratio_ra: float,
) -> Tuple[float, float, float]:
    """
    First-order coefficients (φ1, φ2, φ3) mapping B2U angle error to I2U error.
    """
    tx, ty, tz = i2u_est.theta_x, i2u_est.theta_y, theta_z_i2u
    pi2, pi3 = math.pi ** 2, math.pi ** 3
    phi1 = ratio_ra * (1.0 - tx * tx / pi2 + tx * tx * tz / pi3)
    phi2 = ratio_ra * (-tx * ty / pi2 + tx * ty * tz / pi3)
    phi3 = ratio_ra * (1.0 - ty * ty / pi2 + ty * ty * tz / pi3)
    return phi1, phi2, phi3


def bundle_estimate(
    b2u_est: EffectiveAnglePair,
    scene: SceneGeometry,
    sigma_est_sq: float,
    sigma_e_sq: float = 0.0,
    source: str = "pilot",
) -> AngleEstimate:
    """Localize, transfer to the IRS and attach the error statistics."""
    user_est = localize_user(b2u_est, scene.d_b2u)
    i2u_est, d_i2u = irs_user_angles(user_est, scene.irs)
    theta_z = (scene.irs.z - user_est.z) * math.pi / d_i2u
    ratio_ra = scene.d_b2u / d_i2u
    return AngleEstimate(
        b2u=b2u_est,
        i2u=i2u_est,
        user_pos_est=user_est,
        d_i2u_est=d_i2u,
        sigma_est_sq=sigma_est_sq,
        phi=error_propagation_coeffs(i2u_est, theta_z, ratio_ra),
        theta_z_i2u=theta_z,
        ratio_ra=ratio_ra,
        sigma_e_sq=sigma_e_sq,
        source=source,
    )


def check_wrap_regime(config: SystemConfig, scene: Optional[SceneGeometry] = None) -> bool:
    """Warn when noiseless pair differences already exceed π; returns True if safe."""
    scene = scene or scene_from_config(config)
    span = max_pair_phase_span(scene.b2u, config.n_bs)
    if span >= math.pi:
        logger.warning(
            f"Pair phase span {span:.3f} rad ≥ π for N={config.n_bs}: "
            f"pilot differences wrap and the ML estimate is biased at this user direction"
        )
        return False
    return True


def estimate_all(
    config: SystemConfig,
    rng: np.random.Generator,
    scene: Optional[SceneGeometry] = None,
) -> AngleEstimate:
    """
    Full pilot pipeline: phases, pair differences, ML angles, localization,
    IRS-user angles and error propagation.

    Raises:
        EstimationFailure: the ML angles left the physical disk
    """
    scene = scene or scene_from_config(config)
    obs = simulate_uplink_phases(config, scene.b2u, rng, scene)
    b2u_est = ml_estimate_b2u(pair_phase_differences(obs), config.n_bs)
    sigma_e_sq = phase_uncertainty_variance(config.rician_b2u, obs.snr_rx, config.phase_model)
    return bundle_estimate(
        b2u_est,
        scene,
        estimation_error_variance(sigma_e_sq, config.n_bs),
        sigma_e_sq,
        source="pilot",
    )


def perfect_estimate(
    config: SystemConfig,
    sigma_est_sq: Optional[float] = None,
    scene: Optional[SceneGeometry] = None,
) -> AngleEstimate:
    """Estimate sitting exactly at the true angles, with the model σ_est² unless given."""
    scene = scene or scene_from_config(config)
    sigma = model_sigma_est_sq(config, scene) if sigma_est_sq is None else sigma_est_sq
    return bundle_estimate(scene.b2u, scene, sigma, source="perfect")


def error_model_estimate(
    config: SystemConfig,
    rng: np.random.Generator,
    scene: Optional[SceneGeometry] = None,
    max_attempts: int = 100,
) -> AngleEstimate:
    """
    Estimate drawn from the Gaussian error model: true B2U angles plus
    N(0, σ_est²) per axis, then the usual localization and transfer.
    """
    scene = scene or scene_from_config(config)
    sigma_e_sq = phase_uncertainty_variance(config.rician_b2u, pilot_snr(config, scene), config.phase_model)
    sigma_est_sq = estimation_error_variance(sigma_e_sq, config.n_bs)
    for _ in range(max_attempts):
        err = rng.normal(0.0, math.sqrt(sigma_est_sq), 2)
        candidate = scene.b2u.shifted(float(err[0]), float(err[1]))
        if candidate.is_physical():
            return bundle_estimate(candidate, scene, sigma_est_sq, sigma_e_sq, source="error_model")
    raise EstimationFailure(f"No physical angle draw in {max_attempts} attempts (σ_est²={sigma_est_sq:.3g})")


def draw_estimate(
    config: SystemConfig,
    rng: np.random.Generator,
    scene: Optional[SceneGeometry] = None,
) -> AngleEstimate:
    """Estimate from the configured source ('pilot' or 'error_model')."""
    if config.estimate_source == "pilot":
        return estimate_all(config, rng, scene)
    return error_model_estimate(config, rng, scene)
