"""
Rician channel synthesis for the BS-user, IRS-user and BS-IRS links.

Linear power is milliwatts throughout; dBm only appears in SystemConfig.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .config import SystemConfig
from .errors import ConfigurationError
from .geometry import SceneGeometry, steering_vector

logger = logging.getLogger("IRSLink.Channel")


def path_loss(distance: float, exponent: float) -> float:
    """Large-scale gain α = distance^(-exponent)."""
    if not distance > 0:
        raise ConfigurationError(f"Distance must be positive, got {distance}")
    return distance ** (-exponent)


def dbm_to_linear(p_dbm: float) -> float:
    """dBm to milliwatts."""
    return 10.0 ** (p_dbm / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def los_fraction(rician_k: float) -> float:
    """v/(v+1), equal to 1 for a pure-LOS link (v = inf)."""
    return 1.0 if math.isinf(rician_k) else rician_k / (rician_k + 1.0)


def nlos_fraction(rician_k: float) -> float:
    """1/(v+1), equal to 0 for a pure-LOS link (v = inf)."""
    return 0.0 if math.isinf(rician_k) else 1.0 / (rician_k + 1.0)


@dataclass(frozen=True)
class LinkParams:
    """Statistics of one Rician link."""
    rician_k: float
    path_loss_exp: float
    distance: float

    def __post_init__(self):
        if self.rician_k < 0:
            raise ConfigurationError(f"Rician factor must be ≥ 0, got {self.rician_k}")
        if not self.distance > 0:
            raise ConfigurationError(f"Link distance must be positive, got {self.distance}")

    @property
    def gain(self) -> float:
        return path_loss(self.distance, self.path_loss_exp)

    @property
    def los_weight(self) -> float:
        return math.sqrt(self.gain * los_fraction(self.rician_k))

    @property
    def nlos_weight(self) -> float:
        return math.sqrt(self.gain * nlos_fraction(self.rician_k))


@dataclass
class ChannelRealization:
    """
    One draw of the three channels.

    Each channel equals los_weight·LOS + nlos_weight·NLOS of its link.
    """
    H_b2i: np.ndarray
    h_i2u: np.ndarray
    h_b2u: np.ndarray
    los_H_b2i: np.ndarray
    los_h_i2u: np.ndarray
    los_h_b2u: np.ndarray
    nlos_H_b2i: np.ndarray
    nlos_h_i2u: np.ndarray
    nlos_h_b2u: np.ndarray
    alphas: Dict[str, float]

    def effective_channel(self, xi: np.ndarray) -> np.ndarray:
        """gᵀ = h_b2uᵀ + h_i2uᵀ·diag(ξ)·H_b2i."""
        return self.h_b2u + (self.h_i2u * xi) @ self.H_b2i


def scene_from_config(config: SystemConfig) -> SceneGeometry:
    return SceneGeometry.from_positions(config.irs_position(), config.user_position())


def link_params(config: SystemConfig, scene: Optional[SceneGeometry] = None) -> Dict[str, LinkParams]:
    """LinkParams of the 'b2u', 'i2u' and 'b2i' links."""
    scene = scene or scene_from_config(config)
    return {
        "b2u": LinkParams(config.rician_b2u, config.chi_b2u, scene.d_b2u),
        "i2u": LinkParams(config.rician_i2u, config.chi_i2u, scene.d_i2u),
        "b2i": LinkParams(config.rician_b2i, config.chi_b2i, scene.d_b2i),
    }


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) entries from two independent real normals scaled by 1/√2."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def cascade_los(scene: SceneGeometry, n_bs: int, m_irs: int) -> np.ndarray:
    """Rank-one BS-IRS LOS matrix b(arrival)·aᵀ(departure), M×N."""
    return np.outer(steering_vector(scene.b2i_arrival, m_irs), steering_vector(scene.b2i, n_bs))


def sample_channels(
    config: SystemConfig,
    rng: np.random.Generator,
    scene: Optional[SceneGeometry] = None,
) -> ChannelRealization:
    """
    Draw one realization of H_B2I, h_I2U and h_B2U.

    LOS parts use steering vectors at the true geometric angles; NLOS
    entries are i.i.d. CN(0, 1).

    Args:
        config: Scenario parameters
        rng: Generator owned by the caller's thread
        scene: Precomputed geometry (derived from config when omitted)

    Returns:
        ChannelRealization with the components it was mixed from
    """
    scene = scene or scene_from_config(config)
    links = link_params(config, scene)
    n, m = config.n_bs, config.m_irs

    los_b2u = steering_vector(scene.b2u, n)
    los_i2u = steering_vector(scene.i2u, m)
    los_b2i = cascade_los(scene, n, m)

    nlos_b2u = complex_gaussian(rng, n)
    nlos_i2u = complex_gaussian(rng, m)
    nlos_b2i = complex_gaussian(rng, (m, n))

    def mix(link: LinkParams, los: np.ndarray, nlos: np.ndarray) -> np.ndarray:
        return link.los_weight * los + link.nlos_weight * nlos

    realization = ChannelRealization(
        H_b2i=mix(links["b2i"], los_b2i, nlos_b2i),
        h_i2u=mix(links["i2u"], los_i2u, nlos_i2u),
        h_b2u=mix(links["b2u"], los_b2u, nlos_b2u),
        los_H_b2i=los_b2i,
        los_h_i2u=los_i2u,
        los_h_b2u=los_b2u,
        nlos_H_b2i=nlos_b2i,
        nlos_h_i2u=nlos_i2u,
        nlos_h_b2u=nlos_b2u,
        alphas={name: link.gain for name, link in links.items()},
    )
    logger.debug(f"Sampled channels N={n}, M={m}")
    return realization
