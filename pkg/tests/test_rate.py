"""
Unit tests for the achievable rate, its approximation and the upper bound.
"""

import math

import numpy as np
import pytest

from python.irslink.beamforming import LinkPowerTerms, expected_power_matrix, link_power_terms
from python.irslink.channel import dbm_to_linear, scene_from_config
from python.irslink.config import SystemConfig
from python.irslink.errors import ContractViolation, DomainError
from python.irslink.estimation import perfect_estimate
from python.irslink.geometry import steering_vector
from python.irslink.optimizer import joint_optimize
from python.irslink.rate import (
    achievable_rate,
    approx_rate,
    omega,
    rate_report,
    uninformed_rate,
    upper_bound_from_terms,
    upper_bound_rate,
)

CAPPED = {"n_iter_inner": 50, "n_iter_outer": 6}


class TestAchievableRate:
    """Test log2(1 + λ_max·P_BS/σ0²)."""

    def test_diagonal_example(self):
        """Test T = diag(2, 1) at unit power and noise."""
        assert achievable_rate(np.diag([2.0, 1.0]), 1.0, 1.0) == pytest.approx(math.log2(3.0))

    def test_zero_power(self):
        """Test P_BS = 0 gives rate 0."""
        assert achievable_rate(np.eye(4), 0.0, 1.0) == 0.0

    def test_eigenvalue_equal_to_noise(self):
        """Test λ_max = σ0² gives one bit."""
        assert achievable_rate(np.diag([0.5, 0.2]), 1.0, 0.5) == pytest.approx(1.0)

    def test_nonpositive_noise(self):
        """Test σ0² ≤ 0 is rejected."""
        with pytest.raises(DomainError):
            achievable_rate(np.eye(2), 1.0, 0.0)

    def test_negative_power(self):
        """Test a negative transmit power is rejected."""
        with pytest.raises(DomainError, match="non-negative"):
            achievable_rate(np.eye(2), -1.0, 1.0)

    def test_monotone_in_bs_antennas(self):
        """Test the optimized rate grows from N = 4 to N = 16."""
        rates = []
        for n in (4, 16):
            cfg = SystemConfig.preset("rate").with_updates(n_bs=n, m_irs=16, optimizer=CAPPED)
            est = perfect_estimate(cfg)
            solution = joint_optimize(cfg, est)
            rates.append(rate_report(cfg, est, solution).rate_exact)
        assert rates[1] > rates[0]


class TestUpperBound:
    """Test the closed-form upper bound."""

    def test_unit_example(self):
        """Test N = M = 1 with unit β terms and σ²_NLOS = 0."""
        assert upper_bound_from_terms(LinkPowerTerms(1.0, 1.0, 0.0), 1, 1, 1.0, 1.0) == pytest.approx(math.log2(5.0))

    def test_no_irs(self):
        """Test M = 0 reduces to the direct link."""
        cfg = SystemConfig(m_irs=0)
        terms = link_power_terms(cfg)
        expected = math.log2(
            1.0 + dbm_to_linear(cfg.p_bs_dbm) * cfg.n_bs * (terms.beta_direct + terms.sigma_nlos_sq) / dbm_to_linear(cfg.noise_dbm)
        )
        assert upper_bound_rate(cfg) == pytest.approx(expected)

    def test_quadratic_irs_gain(self):
        """Test doubling M roughly quadruples the cascade contribution."""
        terms = LinkPowerTerms(1.0, 0.0, 0.0)
        small = 2.0 ** upper_bound_from_terms(terms, 4, 16, 1.0, 1.0) - 1.0
        large = 2.0 ** upper_bound_from_terms(terms, 4, 32, 1.0, 1.0) - 1.0
        assert large / small == pytest.approx(4.0)


class TestApproximation:
    """Test Ω and the approximate rate."""

    def test_trace_identity(self):
        """Test Ω equals tr(T) for random phases."""
        cfg = SystemConfig(n_bs=4, m_irs=16)
        est = perfect_estimate(cfg, sigma_est_sq=0.02)
        xi = np.exp(1j * np.random.default_rng(3).uniform(-math.pi, math.pi, 16))
        trace = expected_power_matrix(cfg, est, xi).trace()
        assert omega(est, xi, cfg) == pytest.approx(trace, rel=1e-8)

    def test_aligned_cascade(self):
        """Test exact angles and aligned phases give Ω = Nβ M² + Nσ²_NLOS without a direct link."""
        cfg = SystemConfig(n_bs=4, m_irs=16, direct_link=False)
        scene = scene_from_config(cfg)
        est = perfect_estimate(cfg, sigma_est_sq=0.0, scene=scene)
        b_hat = steering_vector(est.i2u, 16)
        b = steering_vector(scene.b2i_arrival, 16)
        xi = np.conj(b_hat * b)
        terms = link_power_terms(cfg, scene)
        expected = 4 * terms.beta_cascade * 16 ** 2 + 4 * terms.sigma_nlos_sq
        assert omega(est, xi, cfg, scene) == pytest.approx(expected, rel=1e-10)

    def test_no_irs(self):
        """Test M = 0 gives log2(1 + P_BS·N(β_U + σ²_NLOS)/σ0²)."""
        cfg = SystemConfig(m_irs=0)
        est = perfect_estimate(cfg)
        assert approx_rate(est, np.ones(0), cfg) == pytest.approx(upper_bound_rate(cfg))

    def test_rejects_non_unit_modulus(self):
        """Test relaxed phases are refused."""
        cfg = SystemConfig(n_bs=4, m_irs=16)
        with pytest.raises(ContractViolation):
            omega(perfect_estimate(cfg), 0.9 * np.ones(16), cfg)

    def test_close_to_exact_in_coherent_regime(self):
        """Test the approximation error is small for strong LOS links."""
        cfg = SystemConfig.preset("rate").with_updates(
            m_irs=16, rician_b2u=100.0, rician_i2u=100.0, rician_b2i=100.0, optimizer=CAPPED
        )
        est = perfect_estimate(cfg)
        report = rate_report(cfg, est, joint_optimize(cfg, est))
        assert abs(report.rate_exact - report.rate_approx) / report.rate_exact < 0.15


class TestUninformedRate:
    """Test the rate of a BS that cannot steer."""

    def test_trace_over_antennas(self):
        """Test the gain is tr(T)/N and stays below the eigen-beam rate."""
        cfg = SystemConfig(n_bs=4, m_irs=16)
        est = perfect_estimate(cfg, sigma_est_sq=0.02)
        xi = np.ones(16, dtype=complex)
        pm = expected_power_matrix(cfg, est, xi)
        p_bs, noise = dbm_to_linear(cfg.p_bs_dbm), dbm_to_linear(cfg.noise_dbm)
        expected = math.log2(1.0 + p_bs * pm.trace() / (4 * noise))
        assert uninformed_rate(est, xi, cfg) == pytest.approx(expected, rel=1e-8)
        assert uninformed_rate(est, xi, cfg) <= achievable_rate(pm, p_bs, noise) + 1e-12

    def test_blind_without_direct_link(self):
        """Test a useless estimate without the direct link leaves a gain of about βM + σ²_NLOS."""
        cfg = SystemConfig(n_bs=4, m_irs=16, direct_link=False)
        scene = scene_from_config(cfg)
        est = perfect_estimate(cfg, sigma_est_sq=1e6, scene=scene)
        terms = link_power_terms(cfg, scene)
        gain = terms.beta_cascade * 16 + terms.sigma_nlos_sq
        p_bs, noise = dbm_to_linear(cfg.p_bs_dbm), dbm_to_linear(cfg.noise_dbm)
        rate = uninformed_rate(est, np.ones(16), cfg, scene)
        assert rate == pytest.approx(math.log2(1.0 + p_bs * gain / noise), rel=1e-2)


class TestRateReport:
    """Test the ordering of the three rates."""

    def test_dominance(self):
        """Test exact ≤ approx ≤ upper across sizes and powers."""
        for n_bs, m_irs, p_bs in ((4, 16, 0.0), (4, 64, 10.0), (16, 16, 20.0), (4, 0, 10.0)):
            cfg = SystemConfig.preset("rate").with_updates(n_bs=n_bs, m_irs=m_irs, p_bs_dbm=p_bs, optimizer=CAPPED)
            est = perfect_estimate(cfg)
            report = rate_report(cfg, est, joint_optimize(cfg, est))
            assert report.rate_exact <= report.rate_approx + 1e-9
            assert report.rate_approx <= report.rate_upper + 1e-9
            assert report.snr_effective == pytest.approx(2.0 ** report.rate_exact - 1.0)

    def test_to_dict(self):
        """Test the report serializes its four fields."""
        cfg = SystemConfig(n_bs=4, m_irs=0)
        est = perfect_estimate(cfg)
        report = rate_report(cfg, est, joint_optimize(cfg, est))
        assert set(report.to_dict()) == {"rate_exact", "rate_approx", "rate_upper", "snr_effective"}
