"""
Experiment harness.

Each run_* function takes a base SystemConfig, derives one config per sweep
point through with_updates(), runs seeded trials and returns a ResultTable.
Random streams are keyed by (experiment id, sweep point), so rerunning with
the same config and seed reproduces the table exactly. Rate curves key by
experiment id alone, so every point reuses the same trials.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .beamforming import expected_power_matrix
from .channel import dbm_to_linear, scene_from_config
from .config import SystemConfig
from .errors import ConfigurationError
from .estimation import (
    AngleEstimate,
    check_wrap_regime,
    draw_estimate,
    estimate_all,
    model_sigma_est_sq,
    perfect_estimate,
    pilot_power_for_snr,
)
from .geometry import ORIGIN, Position, direction_angles, spherical_from_cartesian, steering_matrix
from .montecarlo import run_trials, trial_rng
from .optimizer import BeamformingSolution, joint_optimize
from .rate import achievable_rate, approx_rate, uninformed_rate, upper_bound_rate
from .repro import ResultTable, RunMetadata

logger = logging.getLogger("IRSLink.Experiments")

SWEEP_VARIABLES = ("rx_snr_db", "n_bs", "m_irs", "p_bs_dbm", "ratio_Ra", "rician_b2u")

# Stream keys keep experiments from sharing random numbers under one seed.
EXPERIMENT_KEYS = {
    "mse-b2u": 1,
    "mse-i2u": 2,
    "converge": 3,
    "beam-pattern": 4,
    "rate-curves": 5,
    "validate": 6,
}

ProgressCallback = Callable[[int, int], None]
RateCurve = Callable[[SystemConfig, AngleEstimate, BeamformingSolution], float]

RATE_CURVES: Dict[str, RateCurve] = {}


def register_rate_curve(name: str):
    """Register an extra rate curve; it becomes a column of run_rate_curves."""
    def decorator(func: RateCurve) -> RateCurve:
        if name in RATE_CURVES:
            raise ConfigurationError(f"Rate curve '{name}' is already registered")
        RATE_CURVES[name] = func
        return func
    return decorator


@dataclass(frozen=True)
class SweepSpec:
    """One swept variable, its values and an optional per-point trial count."""
    variable: str
    values: Tuple[float, ...]
    trials: Optional[int] = None

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigurationError(
                f"Unknown sweep variable '{self.variable}'. Choose from: {', '.join(SWEEP_VARIABLES)}"
            )
        if not self.values:
            raise ConfigurationError("Sweep needs at least one value")
        if self.trials is not None and self.trials < 1:
            raise ConfigurationError(f"trials must be ≥ 1, got {self.trials}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def trials_for(self, config: SystemConfig) -> int:
        return self.trials or config.trials


def _check_variable(sweep: SweepSpec, allowed: Sequence[str], experiment: str) -> None:
    if sweep.variable not in allowed:
        raise ConfigurationError(f"{experiment} sweeps one of {', '.join(allowed)}, not '{sweep.variable}'")


def _as_int(variable: str, value: float) -> int:
    if value != int(value):
        raise ConfigurationError(f"{variable} must be an integer, got {value}")
    return int(value)


def apply_sweep(config: SystemConfig, variable: str, value: float) -> SystemConfig:
    """
    Config for one sweep point.

    rx_snr_db sets the pilot power that yields that receive SNR. ratio_Ra
    moves the IRS along the ray from the user through the configured IRS to
    distance d_B2U/Ra from the user.
    """
    if variable == "rx_snr_db":
        return config.with_updates(p_q_dbm=pilot_power_for_snr(config, value))
    if variable in ("n_bs", "m_irs"):
        return config.with_updates(**{variable: _as_int(variable, value)})
    if variable in ("p_bs_dbm", "rician_b2u"):
        return config.with_updates(**{variable: value})
    if variable == "ratio_Ra":
        if not value > 0:
            raise ConfigurationError(f"ratio_Ra must be positive, got {value}")
        user, irs = config.user_position(), config.irs_position()
        ray = irs.as_array() - user.as_array()
        target = user.as_array() + ray / np.linalg.norm(ray) * (user.distance_to(ORIGIN) / value)
        d, el, az = spherical_from_cartesian(Position(*(float(c) for c in target)))
        return config.with_updates(irs_spherical=(d, math.degrees(el), math.degrees(az)))
    raise ConfigurationError(f"Unknown sweep variable '{variable}'")


def _point_configs(config: SystemConfig, sweep: SweepSpec) -> List[SystemConfig]:
    return [apply_sweep(config, sweep.variable, v) for v in sweep.values]


def _angle_error_stats(errors: np.ndarray) -> Dict[str, float]:
    if errors.size == 0:
        return {"mse_x": math.nan, "mse_y": math.nan, "bias_x": math.nan, "bias_y": math.nan}
    return {
        "mse_x": float(np.mean(errors[:, 0] ** 2)),
        "mse_y": float(np.mean(errors[:, 1] ** 2)),
        "bias_x": float(np.mean(errors[:, 0])),
        "bias_y": float(np.mean(errors[:, 1])),
    }


def run_mse_b2u(
    config: SystemConfig,
    sweep: SweepSpec,
    progress_callback: Optional[ProgressCallback] = None,
) -> ResultTable:
    """
    Empirical MSE of the ML BS-user angles against the analytic σ_est².

    Args:
        config: Base scenario
        sweep: rx_snr_db, n_bs or rician_b2u values
        progress_callback: Optional callback(point, total)

    Returns:
        ResultTable with columns <variable>, mse_x, mse_y, bias_x, bias_y,
        analytic_sigma_est_sq, valid_trials, excluded
    """
    _check_variable(sweep, ("rx_snr_db", "n_bs", "rician_b2u"), "mse-b2u")
    configs = _point_configs(config, sweep)
    metadata = RunMetadata.for_run("mse-b2u", config, variable=sweep.variable, values=list(sweep.values))
    rows = []
    for idx, (value, cfg) in enumerate(zip(sweep.values, configs)):
        logger.info(f"Step {idx + 1}/{len(configs)}: {sweep.variable}={value:g}")
        scene = scene_from_config(cfg)
        if not check_wrap_regime(cfg, scene):
            metadata.add_warning(f"{sweep.variable}={value:g}: pair phase differences wrap")
        truth = scene.b2u.as_array()

        def trial(rng: np.random.Generator, k: int) -> np.ndarray:
            return estimate_all(cfg, rng, scene).b2u.as_array() - truth

        batch = run_trials(trial, sweep.trials_for(cfg), cfg.seed, (EXPERIMENT_KEYS["mse-b2u"], idx), cfg.workers)
        rows.append({
            sweep.variable: value,
            **_angle_error_stats(batch.stack().reshape(-1, 2)),
            "analytic_sigma_est_sq": model_sigma_est_sq(cfg, scene),
            "valid_trials": len(batch.valid),
            "excluded": batch.excluded,
        })
        if progress_callback:
            progress_callback(idx + 1, len(configs))
    return ResultTable(pd.DataFrame(rows), metadata)


def run_mse_i2u(
    config: SystemConfig,
    sweep: SweepSpec,
    progress_callback: Optional[ProgressCallback] = None,
) -> ResultTable:
    """
    Empirical MSE of the IRS-user angles against the linearized prediction.

    predicted_x = (φ1² + φ2²)σ_est² and predicted_y = (φ2² + φ3²)σ_est², with
    φ evaluated at the true geometry.
    """
    _check_variable(sweep, ("rx_snr_db", "ratio_Ra", "n_bs", "rician_b2u"), "mse-i2u")
    configs = _point_configs(config, sweep)
    metadata = RunMetadata.for_run("mse-i2u", config, variable=sweep.variable, values=list(sweep.values))
    rows = []
    for idx, (value, cfg) in enumerate(zip(sweep.values, configs)):
        logger.info(f"Step {idx + 1}/{len(configs)}: {sweep.variable}={value:g}")
        scene = scene_from_config(cfg)
        if not check_wrap_regime(cfg, scene):
            metadata.add_warning(f"{sweep.variable}={value:g}: pair phase differences wrap")
        truth = scene.i2u.as_array()
        reference = perfect_estimate(cfg, scene=scene)
        p1, p2, p3 = reference.phi

        def trial(rng: np.random.Generator, k: int) -> np.ndarray:
            return estimate_all(cfg, rng, scene).i2u.as_array() - truth

        batch = run_trials(trial, sweep.trials_for(cfg), cfg.seed, (EXPERIMENT_KEYS["mse-i2u"], idx), cfg.workers)
        stats = _angle_error_stats(batch.stack().reshape(-1, 2))
        row = {
            sweep.variable: value,
            "mse_x": stats["mse_x"],
            "mse_y": stats["mse_y"],
            "predicted_x": (p1 ** 2 + p2 ** 2) * reference.sigma_est_sq,
            "predicted_y": (p2 ** 2 + p3 ** 2) * reference.sigma_est_sq,
        }
        if sweep.variable != "ratio_Ra":
            row["ratio_Ra"] = scene.ratio_ra
        row.update({"valid_trials": len(batch.valid), "excluded": batch.excluded})
        rows.append(row)
        if progress_callback:
            progress_callback(idx + 1, len(configs))
    return ResultTable(pd.DataFrame(rows), metadata)


def run_convergence(
    config: SystemConfig,
    m_values: Sequence[int] = (16, 64, 144),
    progress_callback: Optional[ProgressCallback] = None,
) -> ResultTable:
    """
    Received SNR along the joint optimization for several IRS sizes.

    One column snr_m<M> per size; shorter traces are forward-filled so the
    table stays rectangular.
    """
    configs = [config.with_updates(m_irs=int(m)) for m in m_values]
    metadata = RunMetadata.for_run("converge", config, m_values=[int(m) for m in m_values])
    noise = dbm_to_linear(config.noise_dbm)
    columns: Dict[str, List[float]] = {}
    for idx, cfg in enumerate(configs):
        logger.info(f"Step {idx + 1}/{len(configs)}: M={cfg.m_irs}")
        scene = scene_from_config(cfg)
        estimate = draw_estimate(cfg, trial_rng(cfg.seed, EXPERIMENT_KEYS["converge"]), scene)
        solution = joint_optimize(cfg, estimate, scene)
        columns[f"snr_m{cfg.m_irs}"] = solution.snr_trace(noise)
        if not solution.converged:
            metadata.add_warning(f"M={cfg.m_irs}: stopped at the outer iteration cap")
        if progress_callback:
            progress_callback(idx + 1, len(configs))

    length = max(len(trace) for trace in columns.values())
    data = pd.DataFrame({"iteration": np.arange(length)})
    for name, trace in columns.items():
        data[name] = pd.Series(trace, dtype=float).reindex(range(length)).ffill().to_numpy()
    return ResultTable(data, metadata)


def beam_pattern(w: np.ndarray, elevation_rad: np.ndarray, azimuth_rad: np.ndarray) -> np.ndarray:
    """|a(θ̄(elevation, azimuth))ᵀw|² for flat arrays of look directions."""
    angles = direction_angles(np.asarray(elevation_rad, dtype=float), np.asarray(azimuth_rad, dtype=float))
    return np.abs(steering_matrix(angles.reshape(-1, 2), len(w)) @ w) ** 2


def run_beam_pattern(
    config: SystemConfig,
    grid: Tuple[int, int] = (91, 91),
) -> ResultTable:
    """
    BS radiation pattern of the optimized beam.

    Elevation spans 0°..180° and azimuth -90°..90°, which covers the lower
    half-space seen from the BS.
    """
    n_el, n_az = grid
    if n_el < 2 or n_az < 2:
        raise ConfigurationError(f"Beam-pattern grid needs at least 2 points per axis, got {grid}")
    metadata = RunMetadata.for_run("beam-pattern", config, grid=[n_el, n_az])
    scene = scene_from_config(config)

    logger.info("Step 1/2: Joint optimization")
    estimate = draw_estimate(config, trial_rng(config.seed, EXPERIMENT_KEYS["beam-pattern"]), scene)
    solution = joint_optimize(config, estimate, scene)

    logger.info(f"Step 2/2: Evaluating {n_el}x{n_az} pattern grid")
    el_deg, az_deg = np.meshgrid(np.linspace(0.0, 180.0, n_el), np.linspace(-90.0, 90.0, n_az), indexing="ij")
    pattern = beam_pattern(solution.w, np.radians(el_deg.ravel()), np.radians(az_deg.ravel()))
    data = pd.DataFrame({
        "elevation_deg": el_deg.ravel(),
        "azimuth_deg": az_deg.ravel(),
        "pattern": pattern,
        "pattern_db": 10.0 * np.log10(np.maximum(pattern, 1e-300)),
    })
    metadata.parameters.update({
        "user_spherical": list(config.user_spherical),
        "irs_spherical": list(config.irs_spherical),
    })
    return ResultTable(data, metadata)


def _optimized_rate(cfg: SystemConfig, estimate: AngleEstimate) -> Tuple[float, BeamformingSolution]:
    scene = scene_from_config(cfg)
    solution = joint_optimize(cfg, estimate, scene)
    pm = expected_power_matrix(cfg, estimate, solution.xi, scene)
    return achievable_rate(pm, dbm_to_linear(cfg.p_bs_dbm), dbm_to_linear(cfg.noise_dbm)), solution


def run_rate_curves(
    config: SystemConfig,
    sweep: SweepSpec,
    progress_callback: Optional[ProgressCallback] = None,
) -> ResultTable:
    """
    Achievable rate against transmit power or IRS size.

    Every rate column is a mean over sweep.trials (default
    config.rate_trials) seeded trials. All points share one trial stream,
    so trial k sees the same angle estimate at every point.

    Columns: with_irs (IRS plus direct link), without_irs (M = 0, same
    estimate), no_direct (BS-user link blocked: the BS has no usable angle,
    σ_est² = no_direct_sigma_est_sq, leaves the IRS unsteered and cannot
    beamform), approx, upper, one column per registered rate curve,
    valid_trials and excluded.
    """
    _check_variable(sweep, ("p_bs_dbm", "m_irs"), "rate-curves")
    configs = _point_configs(config, sweep)
    metadata = RunMetadata.for_run("rate-curves", config, variable=sweep.variable, values=list(sweep.values))
    columns = ("with_irs", "without_irs", "no_direct", "approx", *RATE_CURVES)
    key = (EXPERIMENT_KEYS["rate-curves"],)
    rows = []
    for idx, (value, cfg) in enumerate(zip(sweep.values, configs)):
        logger.info(f"Step {idx + 1}/{len(configs)}: {sweep.variable}={value:g}")
        scene = scene_from_config(cfg)
        cfg_bare = cfg.with_updates(m_irs=0)
        cfg_blocked = cfg.with_updates(direct_link=False)

        def trial(rng: np.random.Generator, k: int) -> List[float]:
            estimate = draw_estimate(cfg, rng, scene)
            with_irs, solution = _optimized_rate(cfg, estimate)
            without_irs, _ = _optimized_rate(cfg_bare, estimate)
            blind = estimate.with_sigma(cfg.no_direct_sigma_est_sq)
            out = [
                with_irs,
                without_irs,
                uninformed_rate(blind, np.ones(cfg.m_irs, dtype=complex), cfg_blocked),
                approx_rate(estimate, solution.xi, cfg, scene),
            ]
            out.extend(float(curve(cfg, estimate, solution)) for curve in RATE_CURVES.values())
            return out

        batch = run_trials(trial, sweep.trials or cfg.rate_trials, cfg.seed, key, cfg.workers)
        rates = batch.stack()
        means = rates.mean(axis=0) if rates.size else np.full(len(columns), math.nan)
        row = {sweep.variable: value, **dict(zip(columns, (float(v) for v in means)))}
        row["upper"] = upper_bound_rate(cfg, scene)
        row["valid_trials"] = len(batch.valid)
        row["excluded"] = batch.excluded
        if row["with_irs"] > row["upper"] + 1e-9:
            metadata.add_warning(f"{sweep.variable}={value:g}: exact rate above the upper bound")
        rows.append(row)
        if progress_callback:
            progress_callback(idx + 1, len(configs))
    return ResultTable(pd.DataFrame(rows), metadata)
