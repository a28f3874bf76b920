"""
Self-checks of the numerical core.

Each check compares an implementation against an independent oracle
(closed form, finite differences, dense eigensolver or brute-force Monte
Carlo) on small instances and reports the observed error next to its
tolerance.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd

from .beamforming import (
    LinkPowerTerms,
    bs_beam,
    compute_damped_matrices,
    expected_power_matrix,
    monte_carlo_received_power,
)
from .channel import cascade_los, dbm_to_linear, link_params, scene_from_config
from .config import SystemConfig
from .estimation import (
    ml_estimate_b2u,
    model_sigma_est_sq,
    perfect_estimate,
    pilot_power_for_snr,
    received_pilot_phases,
    wrap_phase,
)
from .experiments import EXPERIMENT_KEYS
from .geometry import EffectiveAnglePair, pair_indices, pairing_sums, steering_vector, ura_grid
from .montecarlo import trial_rng
from .optimizer import irs_barrier_objective, irs_gradient, joint_optimize, p_norm, project_tangent
from .rate import achievable_rate, omega, upper_bound_rate
from .repro import ResultTable, RunMetadata

logger = logging.getLogger("IRSLink.Validation")


@dataclass
class CheckResult:
    check: str
    passed: bool
    value: float
    tolerance: float


def validation_config(config: SystemConfig) -> SystemConfig:
    """Small instance used by the optimizer and oracle checks."""
    return config.with_updates(
        n_bs=4,
        m_irs=16,
        optimizer={**config.optimizer.model_dump(), "n_iter_inner": 30, "n_iter_outer": 6},
    )


def _check_pairing(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    worst = 0
    for n in (4, 16, 36, 64):
        sx, sy = pairing_sums(n)
        worst = max(worst, abs(sx - n * (n - 1) // 6), abs(sy - n * (n - 1) // 6))
    return float(worst), 0.0


def _check_steering(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(20):
        angles = EffectiveAnglePair(*rng.uniform(-math.pi, math.pi, 2))
        worst = max(worst, float(np.max(np.abs(np.abs(steering_vector(angles, 64)) - 1.0))))
    return worst, 1e-12


def _check_ml_inversion(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    truth = EffectiveAnglePair(0.2, -0.3)
    n = 16
    i_idx, j_idx = ura_grid(n)
    n_idx, m_idx = pair_indices(n)
    diffs = wrap_phase(-(i_idx[n_idx] - i_idx[m_idx]) * truth.theta_x - (j_idx[n_idx] - j_idx[m_idx]) * truth.theta_y)
    est = ml_estimate_b2u(diffs, n)
    return float(np.max(np.abs(est.as_array() - truth.as_array()))), 1e-12


def _check_ml_variance(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg = config.with_updates(
        n_bs=16,
        user_spherical=(40.0, 90.0, 0.0),
        rician_b2u=5.0,
        phase_model="exact",
        estimate_source="pilot",
    )
    scene = scene_from_config(cfg)
    cfg = cfg.with_updates(p_q_dbm=pilot_power_for_snr(cfg, 20.0, scene))
    link = link_params(cfg, scene)["b2u"]
    phases = received_pilot_phases(
        scene.b2u,
        cfg.n_bs,
        link.los_weight,
        link.nlos_weight,
        dbm_to_linear(cfg.p_q_dbm),
        dbm_to_linear(cfg.bs_noise_dbm),
        rng,
        trials=4000,
    )
    n_idx, m_idx = pair_indices(cfg.n_bs)
    diffs = wrap_phase(phases[:, n_idx] - phases[:, m_idx])
    truth = scene.b2u.as_array()
    errors = np.array([ml_estimate_b2u(row, cfg.n_bs).as_array() - truth for row in diffs])
    sigma = model_sigma_est_sq(cfg, scene)
    return abs(float(np.mean(errors ** 2)) - sigma) / sigma, 0.10


def _small_problem(config: SystemConfig, sigma_est_sq: float = 0.01):
    cfg = validation_config(config)
    scene = scene_from_config(cfg)
    estimate = perfect_estimate(cfg, sigma_est_sq=sigma_est_sq, scene=scene)
    dm = compute_damped_matrices(estimate, cfg.n_bs, cfg.m_irs)
    h_bar = cascade_los(scene, cfg.n_bs, cfg.m_irs)
    return cfg, scene, estimate, dm, h_bar


def _check_gradient(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg, _, _, dm, h_bar = _small_problem(config)
    terms = LinkPowerTerms(1.0, 0.5, 0.2)
    params = cfg.optimizer
    h = 1e-6
    worst = 0.0
    for _ in range(20):
        w = rng.standard_normal(cfg.n_bs) + 1j * rng.standard_normal(cfg.n_bs)
        w /= np.linalg.norm(w)
        xi = rng.standard_normal(cfg.m_irs) + 1j * rng.standard_normal(cfg.m_irs)
        xi *= 0.5 / p_norm(xi, params.p)
        analytic = irs_gradient(xi, w, dm, h_bar, terms, params)
        numeric = np.zeros(cfg.m_irs, dtype=complex)
        for k in range(cfg.m_irs):
            for unit in (1.0, 1j):
                step = np.zeros(cfg.m_irs, dtype=complex)
                step[k] = h * unit
                diff = irs_barrier_objective(xi + step, w, dm, h_bar, terms, params) - irs_barrier_objective(
                    xi - step, w, dm, h_bar, terms, params
                )
                numeric[k] += unit * diff / (2.0 * h)
        worst = max(worst, float(np.max(np.abs(numeric - analytic)) / np.max(np.abs(analytic))))
    return worst, 1e-6


def _check_projection(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(20):
        g = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        xi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        g_p = project_tangent(g, xi)
        worst = max(worst, abs(np.vdot(xi, g_p)) / (np.linalg.norm(g) * np.linalg.norm(xi)))
    return worst, 1e-12


def _check_eigen(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(50):
        size = int(rng.integers(2, 9))
        X = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
        T = 0.5 * (X + X.conj().T)
        w = bs_beam(T, 1.0)
        reference = float(np.linalg.eigvalsh(T)[-1])
        value = float(np.real(np.vdot(w, T @ w)))
        worst = max(worst, abs(value - reference) / max(abs(reference), 1e-300))
    return worst, 1e-8


def _check_damped(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg, _, estimate, dm, _ = _small_problem(config)
    errors = [
        abs(abs(dm.A[0, 1]) - math.exp(-0.005)),
        float(np.max(np.abs(np.diag(dm.A) - 1.0))),
        float(np.max(np.abs(np.diag(dm.B) - 1.0))),
        float(np.max(np.abs(dm.A - dm.A.conj().T))),
        float(np.max(np.abs(dm.B - dm.B.conj().T))),
        max(0.0, float(np.max(np.abs(dm.C))) - 1.0),
    ]
    return max(errors), 1e-12


def _check_psd(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg, scene, estimate, _, _ = _small_problem(config)
    xi = np.exp(1j * rng.uniform(-math.pi, math.pi, cfg.m_irs))
    T = expected_power_matrix(cfg, estimate, xi, scene).T
    eig = np.linalg.eigvalsh(T)
    asym = float(np.max(np.abs(T - T.conj().T)))
    return max(asym, max(0.0, -eig[0]) / eig[-1]), 1e-10


def _check_oracle_deterministic(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg = validation_config(config).with_updates(rician_b2u=math.inf, rician_i2u=math.inf, rician_b2i=math.inf)
    scene = scene_from_config(cfg)
    estimate = perfect_estimate(cfg, sigma_est_sq=0.0, scene=scene)
    xi = np.exp(1j * rng.uniform(-math.pi, math.pi, cfg.m_irs))
    pm = expected_power_matrix(cfg, estimate, xi, scene)
    w = bs_beam(pm, dbm_to_linear(cfg.p_bs_dbm))
    oracle = monte_carlo_received_power(cfg, w, xi, 4, rng, estimate, scene)
    return abs(oracle - pm.power(w)) / pm.power(w), 1e-6


def _check_oracle_statistical(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg = validation_config(config).with_updates(rician_i2u=1e4)
    scene = scene_from_config(cfg)
    estimate = perfect_estimate(cfg, sigma_est_sq=0.01, scene=scene)
    xi = np.ones(cfg.m_irs, dtype=complex)
    pm = expected_power_matrix(cfg, estimate, xi, scene)
    w = bs_beam(pm, dbm_to_linear(cfg.p_bs_dbm))
    oracle = monte_carlo_received_power(cfg, w, xi, 10_000, rng, estimate, scene)
    return abs(oracle - pm.power(w)) / pm.power(w), 0.06


@lru_cache(maxsize=4)
def _solve_small(config: SystemConfig):
    cfg = validation_config(config)
    scene = scene_from_config(cfg)
    estimate = perfect_estimate(cfg, scene=scene)
    return cfg, scene, estimate, joint_optimize(cfg, estimate, scene)


def _check_monotone(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    *_, solution = _solve_small(config)
    trace = np.asarray(solution.objective_trace)
    drops = (trace[:-1] - trace[1:]) / np.abs(trace[:-1])
    return max(0.0, float(np.max(drops))) if drops.size else 0.0, 1e-9


def _check_feasibility(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg, _, _, solution = _solve_small(config)
    p_bs = dbm_to_linear(cfg.p_bs_dbm)
    modulus = float(np.max(np.abs(np.abs(solution.xi) - 1.0)))
    power = abs(float(np.real(np.vdot(solution.w, solution.w))) - p_bs) / p_bs
    return max(modulus, power), 1e-10


def _check_rate_dominance(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg, scene, estimate, solution = _solve_small(config)
    pm = expected_power_matrix(cfg, estimate, solution.xi, scene)
    exact = achievable_rate(pm, dbm_to_linear(cfg.p_bs_dbm), dbm_to_linear(cfg.noise_dbm))
    return max(0.0, exact - upper_bound_rate(cfg, scene)), 1e-9


def _check_trace_identity(rng: np.random.Generator, config: SystemConfig) -> Tuple[float, float]:
    cfg, scene, estimate, _, _ = _small_problem(config)
    xi = np.exp(1j * rng.uniform(-math.pi, math.pi, cfg.m_irs))
    trace = expected_power_matrix(cfg, estimate, xi, scene).trace()
    return abs(omega(estimate, xi, cfg, scene) - trace) / abs(trace), 1e-8


CHECKS: List[Tuple[str, Callable[[np.random.Generator, SystemConfig], Tuple[float, float]]]] = [
    ("pairing_identity", _check_pairing),
    ("steering_modulus", _check_steering),
    ("ml_noiseless_inversion", _check_ml_inversion),
    ("ml_variance_law", _check_ml_variance),
    ("gradient_finite_difference", _check_gradient),
    ("tangent_projection", _check_projection),
    ("eigen_oracle", _check_eigen),
    ("damped_matrix_structure", _check_damped),
    ("power_matrix_hermitian_psd", _check_psd),
    ("power_oracle_deterministic", _check_oracle_deterministic),
    ("power_oracle_statistical", _check_oracle_statistical),
    ("monotone_ascent", _check_monotone),
    ("feasibility", _check_feasibility),
    ("rate_dominance", _check_rate_dominance),
    ("trace_identity", _check_trace_identity),
]


def run_validation(config: SystemConfig) -> Tuple[ResultTable, List[CheckResult]]:
    """
    Run every check with streams derived from config.seed.

    Returns:
        (ResultTable with columns check, passed, value, tolerance; the CheckResults)
    """
    results = []
    for idx, (name, check) in enumerate(CHECKS):
        rng = trial_rng(config.seed, EXPERIMENT_KEYS["validate"], idx)
        value, tolerance = check(rng, config)
        passed = bool(value <= tolerance)
        results.append(CheckResult(name, passed, float(value), tolerance))
        logger.debug(f"{name}: value={value:.3g} tolerance={tolerance:.3g}")
    data = pd.DataFrame([r.__dict__ for r in results], columns=["check", "passed", "value", "tolerance"])
    metadata = RunMetadata.for_run("validate", config)
    failed = [r.check for r in results if not r.passed]
    if failed:
        logger.warning(f"Validation failed: {', '.join(failed)}")
    return ResultTable(data, metadata), results
