"""
Geometry vocabulary for IRS Link Lab.

Coordinates are Cartesian meters with the BS at the origin. Both arrays are
axis-aligned uniform rectangular arrays (URA) with half-wavelength spacing,
so an effective angle is simply -π times a direction cosine.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from .errors import ConfigurationError, GeometryError

logger = logging.getLogger("IRSLink.Geometry")


@dataclass(frozen=True)
class Position:
    """Point in meters, BS at (0, 0, 0)."""
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise GeometryError(f"Non-finite position: ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Position") -> float:
        return float(np.linalg.norm(other.as_array() - self.as_array()))

    def to_dict(self) -> Dict[str, float]:
        return {"x": self.x, "y": self.y, "z": self.z}


ORIGIN = Position(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class EffectiveAnglePair:
    """
    Phase differences between adjacent elements along x and y.

    A physical direction exists only inside the disk theta_x² + theta_y² ≤ π².
    """
    theta_x: float
    theta_y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_x, self.theta_y], dtype=float)

    def radius_sq(self) -> float:
        return self.theta_x ** 2 + self.theta_y ** 2

    def is_physical(self, tol: float = 1e-12) -> bool:
        return self.radius_sq() <= math.pi ** 2 + tol

    def shifted(self, dx: float, dy: float) -> "EffectiveAnglePair":
        return EffectiveAnglePair(self.theta_x + dx, self.theta_y + dy)

    def to_dict(self) -> Dict[str, float]:
        return {"theta_x": self.theta_x, "theta_y": self.theta_y}


def array_side(size: int, allow_empty: bool = False) -> int:
    """Return √size, raising ConfigurationError unless size is a perfect square."""
    if size < 0 or (size == 0 and not allow_empty):
        raise ConfigurationError(f"Array size must be positive, got {size}")
    side = math.isqrt(size)
    if side * side != size:
        raise ConfigurationError(f"Array size {size} is not a perfect square")
    return side


def ura_index(n: int, size: int) -> Tuple[int, int]:
    """
    Map a 1-based element index to URA grid coordinates.

    Args:
        n: Element index, 1 ≤ n ≤ size
        size: Number of elements (perfect square)

    Returns:
        (i, j) with i = (n-1) mod √size and j = (n-1) // √size
    """
    side = array_side(size)
    if not 1 <= n <= size:
        raise ConfigurationError(f"Element index {n} outside 1..{size}")
    return (n - 1) % side, (n - 1) // side


@lru_cache(maxsize=64)
def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    side = array_side(size, allow_empty=True)
    k = np.arange(size)
    if side == 0:
        return k, k
    i_idx, j_idx = k % side, k // side
    i_idx.setflags(write=False)
    j_idx.setflags(write=False)
    return i_idx, j_idx


def ura_grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized ura_index over all elements (0-based arrays of i and j)."""
    return _grid(size)


def pair_indices(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    0-based indices of the N/2 antenna pairs (n, m_n = N - n + 1).
    """
    array_side(size)
    if size % 2:
        raise ConfigurationError(f"Pairing needs an even array size, got {size}")
    first = np.arange(size // 2)
    return first, size - 1 - first


def pairing_sums(size: int) -> Tuple[int, int]:
    """Σ(i_n - i_m)² and Σ(j_n - j_m)² over the antenna pairs."""
    i_idx, j_idx = ura_grid(size)
    n_idx, m_idx = pair_indices(size)
    di = i_idx[n_idx] - i_idx[m_idx]
    dj = j_idx[n_idx] - j_idx[m_idx]
    return int(np.sum(di * di)), int(np.sum(dj * dj))


def steering_vector(angles: EffectiveAnglePair, size: int) -> np.ndarray:
    """
    URA steering vector with element n equal to exp(j(i_n·θx + j_n·θy)).

    size may be 0 for an absent IRS, which yields an empty vector.
    """
    i_idx, j_idx = ura_grid(size)
    return np.exp(1j * (i_idx * angles.theta_x + j_idx * angles.theta_y))


def steering_matrix(theta: np.ndarray, size: int) -> np.ndarray:
    """Steering vectors for a batch of angle pairs, theta shape (K, 2) -> (K, size)."""
    i_idx, j_idx = ura_grid(size)
    theta = np.asarray(theta, dtype=float)
    return np.exp(1j * (np.outer(theta[:, 0], i_idx) + np.outer(theta[:, 1], j_idx)))


def cartesian_from_spherical(d: float, elevation: float, azimuth: float) -> Position:
    """
    Position at range d with elevation/azimuth in radians.

    x = d·cosθ·cosφ, y = d·cosθ·sinφ, z = -d·sinθ (positive elevation points down).
    """
    if not d > 0:
        raise ConfigurationError(f"Range must be positive, got {d}")
    return Position(
        d * math.cos(elevation) * math.cos(azimuth),
        d * math.cos(elevation) * math.sin(azimuth),
        -d * math.sin(elevation),
    )


def spherical_from_cartesian(pos: Position) -> Tuple[float, float, float]:
    """Inverse of cartesian_from_spherical with elevation in [-π/2, π/2]."""
    d = math.sqrt(pos.x ** 2 + pos.y ** 2 + pos.z ** 2)
    if d == 0:
        raise GeometryError("Origin has no direction")
    elevation = math.asin(max(-1.0, min(1.0, -pos.z / d)))
    azimuth = math.atan2(pos.y, pos.x)
    return d, elevation, azimuth


def direction_angles(elevation: np.ndarray, azimuth: np.ndarray) -> np.ndarray:
    """Effective angles of look directions (radians arrays), shape (..., 2)."""
    cos_el = np.cos(elevation)
    return np.stack(
        [-math.pi * cos_el * np.cos(azimuth), -math.pi * cos_el * np.sin(azimuth)],
        axis=-1,
    )


def effective_angles(src: Position, dst: Position, arrival: bool = False) -> EffectiveAnglePair:
    """
    Effective angles of the link src -> dst.

    Departure angles at src are -π·(dst - src)/‖dst - src‖ (x and y parts).
    Arrival angles at dst take the reversed direction with a positive sign,
    +π·(src - dst)/‖src - dst‖, which yields the same numbers.
    """
    delta = dst.as_array() - src.as_array()
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise GeometryError("Coincident positions have no effective angles")
    if arrival:
        unit = -delta / dist
        return EffectiveAnglePair(math.pi * unit[0], math.pi * unit[1])
    unit = delta / dist
    return EffectiveAnglePair(-math.pi * unit[0], -math.pi * unit[1])


def max_pair_phase_span(angles: EffectiveAnglePair, size: int) -> float:
    """Largest noiseless |phase_n - phase_m| over the antenna pairs."""
    side = array_side(size)
    return (side - 1) * (abs(angles.theta_x) + abs(angles.theta_y))


@dataclass(frozen=True)
class SceneGeometry:
    """BS, IRS and user placement with all derived distances and angles."""
    bs: Position
    irs: Position
    user: Position
    d_b2u: float
    d_b2i: float
    d_i2u: float
    b2u: EffectiveAnglePair
    b2i: EffectiveAnglePair
    b2i_arrival: EffectiveAnglePair
    i2u: EffectiveAnglePair

    @classmethod
    def from_positions(cls, irs: Position, user: Position, bs: Position = ORIGIN) -> "SceneGeometry":
        for a, b, label in ((bs, irs, "BS/IRS"), (bs, user, "BS/user"), (irs, user, "IRS/user")):
            if a.distance_to(b) == 0.0:
                raise GeometryError(f"{label} positions coincide")
        return cls(
            bs=bs,
            irs=irs,
            user=user,
            d_b2u=bs.distance_to(user),
            d_b2i=bs.distance_to(irs),
            d_i2u=irs.distance_to(user),
            b2u=effective_angles(bs, user),
            b2i=effective_angles(bs, irs),
            b2i_arrival=effective_angles(bs, irs, arrival=True),
            i2u=effective_angles(irs, user),
        )

    @property
    def ratio_ra(self) -> float:
        return self.d_b2u / self.d_i2u
