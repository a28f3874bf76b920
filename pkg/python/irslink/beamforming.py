"""
Expected received power under angle-estimation error, and the BS beam.

T is built so that E{|gᵀw|²} = wᴴTw when the true user-side angles deviate
from the estimates by a Gaussian error of variance σ_est² per axis. The
Monte Carlo oracle draws exactly that process and is used to check T.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .channel import cascade_los, complex_gaussian, link_params, los_fraction, nlos_fraction, scene_from_config
from .config import SystemConfig
from .errors import ContractViolation, NumericalError
from .estimation import AngleEstimate, perfect_estimate
from .geometry import SceneGeometry, steering_matrix, steering_vector, ura_grid

logger = logging.getLogger("IRSLink.Beamforming")

UNIT_MODULUS_TOL = 1e-9


@dataclass
class DampedMatrices:
    """Correlation matrices of the steering vectors averaged over the angle error."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class LinkPowerTerms:
    """β_B2I2U, β_B2U and σ²_NLOS of the configured scene."""
    beta_cascade: float
    beta_direct: float
    sigma_nlos_sq: float

    @property
    def betas(self) -> Tuple[float, float]:
        return self.beta_cascade, self.beta_direct

    @property
    def cross_weight(self) -> float:
        return math.sqrt(self.beta_cascade * self.beta_direct)


@dataclass
class PowerMatrix:
    """Hermitian T with the link statistics it was assembled from."""
    T: np.ndarray
    betas: Tuple[float, float]
    sigma_nlos_sq: float

    def power(self, w: np.ndarray) -> float:
        """wᴴTw."""
        return received_power(self.T, w)

    def trace(self) -> float:
        return float(np.real(np.trace(self.T)))


def link_power_terms(config: SystemConfig, scene: Optional[SceneGeometry] = None) -> LinkPowerTerms:
    """
    Large-scale terms of the expected power.

    With direct_link disabled the BS-user path carries neither LOS nor NLOS power.
    """
    links = link_params(config, scene)
    b2i, i2u, b2u = links["b2i"], links["i2u"], links["b2u"]
    cascade_gain = b2i.gain * i2u.gain
    beta_cascade = cascade_gain * los_fraction(b2i.rician_k) * los_fraction(i2u.rician_k)
    cascade_nlos = config.m_irs * cascade_gain * (
        nlos_fraction(b2i.rician_k) + los_fraction(b2i.rician_k) * nlos_fraction(i2u.rician_k)
    )
    if config.direct_link:
        beta_direct = b2u.gain * los_fraction(b2u.rician_k)
        direct_nlos = b2u.gain * nlos_fraction(b2u.rician_k)
    else:
        beta_direct = direct_nlos = 0.0
    return LinkPowerTerms(beta_cascade, beta_direct, cascade_nlos + direct_nlos)


def _index_differences(size: int) -> Tuple[np.ndarray, np.ndarray]:
    i_idx, j_idx = ura_grid(size)
    return i_idx[None, :] - i_idx[:, None], j_idx[None, :] - j_idx[:, None]


def compute_damped_matrices(estimate: AngleEstimate, n_bs: int, m_irs: int) -> DampedMatrices:
    """
    Build A (N×N), B (M×M) and C (M×N) at the estimated angles.

    Entry (m, n) of each is conj(x_m)·y_n of the relevant steering vectors
    times exp(-½σ_est²·q_mn), where q_mn is the variance of the phase
    difference between the two elements under the error model.
    """
    sigma = estimate.sigma_est_sq
    p1, p2, p3 = estimate.phi

    a_hat = steering_vector(estimate.b2u, n_bs)
    b_hat = steering_vector(estimate.i2u, m_irs)

    di, dj = _index_differences(n_bs)
    A = np.outer(np.conj(a_hat), a_hat) * np.exp(-0.5 * sigma * (di ** 2 + dj ** 2))

    di, dj = _index_differences(m_irs)
    qx = di * p1 + dj * p2
    qy = di * p2 + dj * p3
    B = np.outer(np.conj(b_hat), b_hat) * np.exp(-0.5 * sigma * (qx ** 2 + qy ** 2))

    i_m, j_m = ura_grid(m_irs)
    i_n, j_n = ura_grid(n_bs)
    cx = i_n[None, :] - (i_m * p1 + j_m * p2)[:, None]
    cy = j_n[None, :] - (i_m * p2 + j_m * p3)[:, None]
    C = np.outer(np.conj(b_hat), a_hat) * np.exp(-0.5 * sigma * (cx ** 2 + cy ** 2))

    return DampedMatrices(A=A, B=B, C=C)


def check_unit_modulus(xi: np.ndarray, tol: float = UNIT_MODULUS_TOL) -> None:
    if xi.size and np.max(np.abs(np.abs(xi) - 1.0)) > tol:
        raise ContractViolation(
            f"IRS phase vector must be unit modulus (max deviation {np.max(np.abs(np.abs(xi) - 1.0)):.3g})"
        )


def assemble_T(
    dm: DampedMatrices,
    xi: np.ndarray,
    h_bar: np.ndarray,
    terms: LinkPowerTerms,
) -> PowerMatrix:
    """
    T = β(ΘH̄)ᴴB(ΘH̄) + √(ββ_U)((ΘH̄)ᴴC + Cᴴ(ΘH̄)) + β_U·A + σ²_NLOS·I.

    Args:
        dm: Damped matrices at the estimated angles
        xi: IRS phase vector, unit modulus
        h_bar: Cascade LOS matrix b·aᵀ at the true B2I angles (M×N)
        terms: Large-scale terms

    Raises:
        ContractViolation: xi is not unit modulus
    """
    xi = np.asarray(xi, dtype=complex)
    check_unit_modulus(xi)
    n_bs = dm.A.shape[0]
    theta_h = xi[:, None] * h_bar
    T = (
        terms.beta_cascade * (theta_h.conj().T @ dm.B @ theta_h)
        + terms.cross_weight * (theta_h.conj().T @ dm.C + dm.C.conj().T @ theta_h)
        + terms.beta_direct * dm.A
        + terms.sigma_nlos_sq * np.eye(n_bs)
    )
    T = 0.5 * (T + T.conj().T)
    return PowerMatrix(T=T, betas=terms.betas, sigma_nlos_sq=terms.sigma_nlos_sq)


def expected_power_matrix(
    config: SystemConfig,
    estimate: AngleEstimate,
    xi: np.ndarray,
    scene: Optional[SceneGeometry] = None,
) -> PowerMatrix:
    """assemble_T for a config, with H̄ and the β terms taken from its scene."""
    scene = scene or scene_from_config(config)
    dm = compute_damped_matrices(estimate, config.n_bs, config.m_irs)
    return assemble_T(dm, xi, cascade_los(scene, config.n_bs, config.m_irs), link_power_terms(config, scene))


def received_power(T: Union[PowerMatrix, np.ndarray], w: np.ndarray) -> float:
    T = T.T if isinstance(T, PowerMatrix) else T
    return float(np.real(np.vdot(w, T @ w)))


def _oracle_chunk_size(n_bs: int, m_irs: int) -> int:
    return max(1, min(4096, (1 << 21) // max(1, n_bs * max(m_irs, 1))))


def monte_carlo_received_power(
    config: SystemConfig,
    w: np.ndarray,
    xi: np.ndarray,
    trials: int,
    rng: np.random.Generator,
    estimate: Optional[AngleEstimate] = None,
    scene: Optional[SceneGeometry] = None,
) -> float:
    """
    Brute-force E{|gᵀw|²} over fresh channels and fresh angle errors.

    Each trial draws ε ~ N(0, σ_est²·I₂), sets the true user angles to
    θ̂_B2U + ε and θ̂_I2U + Φε, and draws all three Rician channels around
    those angles. The BS-IRS LOS uses the true infrastructure geometry.

    Args:
        config: Scenario parameters
        w: BS beam
        xi: IRS phase vector
        trials: Number of draws (≥ 1)
        rng: Generator for all draws
        estimate: Estimate that T was built from (perfect_estimate when omitted)
        scene: Precomputed geometry

    Returns:
        Sample mean of the received power in mW
    """
    if trials < 1:
        raise ContractViolation(f"trials must be ≥ 1, got {trials}")
    scene = scene or scene_from_config(config)
    estimate = estimate or perfect_estimate(config, scene=scene)
    w = np.asarray(w, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    if not np.any(w):
        return 0.0

    n, m = config.n_bs, config.m_irs
    links = link_params(config, scene)
    b2u, i2u, b2i = links["b2u"], links["i2u"], links["b2i"]
    direct = 1.0 if config.direct_link else 0.0

    b_arrival = steering_vector(scene.b2i_arrival, m)
    a_w = complex(steering_vector(scene.b2i, n) @ w)
    los_cascade_w = b2i.los_weight * b_arrival * a_w
    phi = estimate.propagation_matrix()
    sigma = math.sqrt(estimate.sigma_est_sq)
    b2u_hat, i2u_hat = estimate.b2u.as_array(), estimate.i2u.as_array()

    total = 0.0
    chunk = _oracle_chunk_size(n, m)
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        eps = rng.normal(0.0, sigma, (k, 2)) if sigma > 0 else np.zeros((k, 2))
        a_true = steering_matrix(b2u_hat + eps, n)
        h_b2u = b2u.los_weight * a_true + b2u.nlos_weight * complex_gaussian(rng, (k, n))
        g = direct * (h_b2u @ w)
        if m:
            b_true = steering_matrix(i2u_hat + eps @ phi.T, m)
            h_i2u = i2u.los_weight * b_true + i2u.nlos_weight * complex_gaussian(rng, (k, m))
            hw = los_cascade_w[None, :] + b2i.nlos_weight * (complex_gaussian(rng, (k, m, n)) @ w)
            g = g + np.sum(h_i2u * xi[None, :] * hw, axis=1)
        total += float(np.sum(np.abs(g) ** 2))
        done += k
    logger.debug(f"Oracle power over {trials} trials (chunk {chunk})")
    return total / trials


def _gershgorin_shift(T: np.ndarray) -> float:
    abs_t = np.abs(T)
    radii = abs_t.sum(axis=1) - np.diag(abs_t)
    lower = float(np.min(np.real(np.diag(T)) - radii))
    return max(0.0, -lower) + 1e-12 * abs(float(np.real(np.trace(T))))


def _start_vector(size: int) -> np.ndarray:
    k = np.arange(size)
    x = np.ones(size, dtype=complex) + 1e-3 * np.exp(1j * (0.7 * k + 0.3 * k ** 2)) * (k + 1) / size
    return x / np.linalg.norm(x)


def _rayleigh(T: np.ndarray, x: np.ndarray) -> float:
    return float(np.real(np.vdot(x, T @ x)))


def dominant_eigenpair(
    T: Union[PowerMatrix, np.ndarray],
    tol: float = 1e-10,
    max_iter: int = 5000,
) -> Tuple[float, np.ndarray]:
    """
    Largest eigenvalue and unit eigenvector of a Hermitian matrix.

    Power iteration runs on T + sI with s from the Gershgorin bound so the
    wanted eigenvalue is also the largest in magnitude. A few Rayleigh
    quotient iteration steps then polish the pair. The eigenvector phase is
    fixed so that its largest-magnitude entry is real and positive.

    Raises:
        NumericalError: the Rayleigh quotient did not settle within max_iter
    """
    T = T.T if isinstance(T, PowerMatrix) else np.asarray(T, dtype=complex)
    size = T.shape[0]
    x = _start_vector(size)
    shift = _gershgorin_shift(T)
    shifted = T + shift * np.eye(size)

    rho = _rayleigh(shifted, x)
    converged = False
    for _ in range(max_iter):
        y = shifted @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            converged = True
            break
        x = y / y_norm
        rho_new = _rayleigh(shifted, x)
        if abs(rho_new - rho) <= tol * max(abs(rho_new), 1e-300):
            rho = rho_new
            converged = True
            break
        rho = rho_new
    if not converged:
        raise NumericalError(
            f"Power iteration did not converge in {max_iter} iterations", last_rayleigh=rho - shift
        )

    value = _rayleigh(T, x)
    scale = max(np.linalg.norm(T), 1e-300)
    for _ in range(3):
        if np.linalg.norm(T @ x - value * x) <= 1e-14 * scale:
            break
        try:
            y = np.linalg.solve(T - value * np.eye(size), x)
        except np.linalg.LinAlgError:
            break
        y_norm = np.linalg.norm(y)
        if not np.isfinite(y_norm) or y_norm == 0.0:
            break
        candidate = y / y_norm
        candidate_value = _rayleigh(T, candidate)
        if candidate_value < value:
            break
        x, value = candidate, candidate_value

    anchor = x[int(np.argmax(np.abs(x)))]
    if abs(anchor) > 0:
        x = x * (abs(anchor) / anchor)
    return value, x


def bs_beam(T: Union[PowerMatrix, np.ndarray], p_bs_mw: float) -> np.ndarray:
    """w = √P_BS·t_max, the power-constrained maximizer of wᴴTw."""
    _, t_max = dominant_eigenpair(T)
    return math.sqrt(p_bs_mw) * t_max
