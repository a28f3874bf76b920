"""
Unit tests for pilot-based angle estimation and error propagation.
"""

import logging
import math

import numpy as np
import pytest

from python.irslink.config import SystemConfig
from python.irslink.channel import scene_from_config
from python.irslink.errors import DomainError, EstimationFailure
from python.irslink.estimation import (
    AngleEstimate,
    UplinkObservation,
    check_wrap_regime,
    draw_estimate,
    error_model_estimate,
    error_propagation_coeffs,
    estimate_all,
    estimation_error_variance,
    irs_user_angles,
    localize_user,
    ml_estimate_b2u,
    model_sigma_est_sq,
    pair_phase_differences,
    perfect_estimate,
    phase_uncertainty_variance,
    pilot_power_for_snr,
    pilot_snr,
    rician_phase_variance,
    wrap_phase,
)
from python.irslink.geometry import EffectiveAnglePair, Position, ura_grid


def _noiseless_phases(angles: EffectiveAnglePair, n_bs: int, offset: float = 0.0) -> np.ndarray:
    i_idx, j_idx = ura_grid(n_bs)
    return wrap_phase(offset - i_idx * angles.theta_x - j_idx * angles.theta_y)


def _boresight_config(rx_snr_db: float = 30.0, **changes) -> SystemConfig:
    """User straight below the BS, v = 50 and 30 dB pilot SNR unless overridden."""
    fields = {"user_spherical": (40.0, 90.0, 0.0), "rician_b2u": 50.0, "estimate_source": "pilot", **changes}
    cfg = SystemConfig(**fields)
    return cfg.with_updates(p_q_dbm=pilot_power_for_snr(cfg, rx_snr_db))


class TestPhaseStatistics:
    """Test the phase-noise and estimation-error variance laws."""

    def test_rayleigh_variance_examples(self):
        """Test the published (4-π)/8 model."""
        assert phase_uncertainty_variance(5.0, math.inf) == pytest.approx(0.021460, abs=1e-6)
        assert phase_uncertainty_variance(5.0, 1.0) == pytest.approx(0.047212, abs=1e-6)

    def test_small_angle_model(self):
        """Test the 1/2 multiplier."""
        assert phase_uncertainty_variance(5.0, math.inf, "small_angle") == pytest.approx(0.1)

    def test_exact_model_limits(self):
        """Test the integrated phase variance at its limits."""
        assert rician_phase_variance(0.0) == pytest.approx(math.pi ** 2 / 3.0)
        assert rician_phase_variance(math.inf) == 0.0
        assert phase_uncertainty_variance(1e4, math.inf, "exact") == pytest.approx(0.5e-4, rel=1e-3)
        values = [rician_phase_variance(g) for g in (0.5, 2.0, 8.0, 32.0)]
        assert values == sorted(values, reverse=True)

    def test_exact_model_matches_sampled_phases(self):
        """Test the integral against sampled arg(1 + z)."""
        rng = np.random.default_rng(17)
        gamma = 2.0
        z = (rng.standard_normal(400_000) + 1j * rng.standard_normal(400_000)) * math.sqrt(0.5 / gamma)
        assert rician_phase_variance(gamma) == pytest.approx(np.var(np.angle(1.0 + z)), rel=0.01)

    def test_exact_model_exceeds_closed_forms(self):
        """Test the closed forms sit below the exact variance at v = 5, 20 dB."""
        exact = phase_uncertainty_variance(5.0, 100.0, "exact")
        assert exact > phase_uncertainty_variance(5.0, 100.0, "small_angle")
        assert exact > phase_uncertainty_variance(5.0, 100.0, "rayleigh_variance")

    def test_pure_los_is_noiseless(self):
        """Test v = inf gives zero phase error."""
        assert phase_uncertainty_variance(math.inf, 10.0) == 0.0

    def test_invalid_arguments(self):
        """Test v ≤ 0, SNR ≤ 0 and unknown models."""
        with pytest.raises(DomainError):
            phase_uncertainty_variance(0.0, 10.0)
        with pytest.raises(DomainError):
            phase_uncertainty_variance(5.0, -1.0)
        with pytest.raises(DomainError, match="Unknown phase model"):
            phase_uncertainty_variance(5.0, 10.0, "gaussian")

    def test_estimation_error_variance(self):
        """Test σ_est² = 12σ_e²/(N(N-1))."""
        assert estimation_error_variance(0.021460, 16) == pytest.approx(1.073e-3, rel=1e-3)

    def test_variance_scales_with_array_size(self):
        """Test the N(N-1) law between N = 16 and N = 64."""
        ratio = estimation_error_variance(0.1, 64) / estimation_error_variance(0.1, 16)
        assert ratio == pytest.approx(240.0 / 4032.0)

    def test_pilot_power_hits_target_snr(self):
        """Test pilot_power_for_snr inverts pilot_snr."""
        cfg = SystemConfig()
        cfg = cfg.with_updates(p_q_dbm=pilot_power_for_snr(cfg, 17.0))
        assert 10.0 * math.log10(pilot_snr(cfg)) == pytest.approx(17.0)


class TestPairDifferences:
    """Test pairwise phase differences."""

    def test_noiseless_differences(self):
        """Test differences on a linear phase front."""
        phases = _noiseless_phases(EffectiveAnglePair(0.1, 0.0), 16)
        diffs = pair_phase_differences(UplinkObservation(phases, snr_rx=1.0, rician_k=1.0))
        assert len(diffs) == 8
        assert diffs[0] == pytest.approx(0.3)

    def test_wrapping(self):
        """Test a difference of 2π - 0.1 wraps to -0.1."""
        phases = np.zeros(4)
        phases[0] = math.pi - 0.05
        phases[3] = -math.pi + 0.05
        diffs = pair_phase_differences(UplinkObservation(phases, snr_rx=1.0, rician_k=1.0))
        assert diffs[0] == pytest.approx(-0.1)

    def test_common_offset_cancels(self):
        """Test the pilot phase drops out of the differences."""
        angles = EffectiveAnglePair(0.15, -0.05)
        a = _noiseless_phases(angles, 16)
        b = _noiseless_phases(angles, 16, offset=1.3)
        np.testing.assert_allclose(
            pair_phase_differences(UplinkObservation(a, 1.0, 1.0)),
            pair_phase_differences(UplinkObservation(b, 1.0, 1.0)),
            atol=1e-12,
        )


class TestMLEstimator:
    """Test the closed-form ML angle estimator."""

    def test_noiseless_inversion(self):
        """Test exact recovery on noiseless differences."""
        truth = EffectiveAnglePair(0.2, -0.3)
        phases = _noiseless_phases(truth, 16)
        est = ml_estimate_b2u(pair_phase_differences(UplinkObservation(phases, 1.0, 1.0)), 16)
        assert est.as_array() == pytest.approx(truth.as_array(), abs=1e-12)

    def test_zero_differences(self):
        """Test all-zero differences give boresight."""
        est = ml_estimate_b2u(np.zeros(8), 16)
        assert est.as_array() == pytest.approx([0.0, 0.0])

    def test_linearity(self):
        """Test the estimator is linear in the differences."""
        rng = np.random.default_rng(0)
        d1, d2 = rng.normal(size=8), rng.normal(size=8)
        combined = ml_estimate_b2u(2.0 * d1 - d2, 16).as_array()
        separate = 2.0 * ml_estimate_b2u(d1, 16).as_array() - ml_estimate_b2u(d2, 16).as_array()
        assert combined == pytest.approx(separate)

    def test_wrong_length(self):
        """Test the number of differences must be N/2."""
        with pytest.raises(DomainError):
            ml_estimate_b2u(np.zeros(7), 16)

    def test_pilot_phase_cancels(self):
        """Test the pilot phase does not change the estimate."""
        cfg = _boresight_config()
        a = estimate_all(cfg, np.random.default_rng(5))
        b = estimate_all(cfg.with_updates(pilot_phase=1.3), np.random.default_rng(5))
        assert a.b2u.as_array() == pytest.approx(b.b2u.as_array(), abs=1e-12)

    def test_noise_free_pipeline(self):
        """Test the full pipeline on a pure-LOS link with negligible noise."""
        cfg = SystemConfig(
            user_spherical=(40.0, 80.0, 10.0),
            rician_b2u=math.inf,
            bs_noise_dbm=-300.0,
            estimate_source="pilot",
        )
        scene = scene_from_config(cfg)
        assert check_wrap_regime(cfg, scene)
        est = estimate_all(cfg, np.random.default_rng(1), scene)
        assert est.b2u.as_array() == pytest.approx(scene.b2u.as_array(), abs=1e-9)
        assert est.i2u.as_array() == pytest.approx(scene.i2u.as_array(), abs=1e-8)

    def test_variance_law(self):
        """Test the empirical MSE matches σ_est² at N = 16, v = 5, 20 dB."""
        cfg = _boresight_config(rician_b2u=5.0, rx_snr_db=20.0)
        scene = scene_from_config(cfg)
        rng = np.random.default_rng(2024)
        errors = np.array([estimate_all(cfg, rng, scene).b2u.as_array() - scene.b2u.as_array() for _ in range(20000)])
        sigma = model_sigma_est_sq(cfg, scene)
        for axis in range(2):
            assert np.mean(errors[:, axis] ** 2) == pytest.approx(sigma, rel=0.10)
            assert abs(np.mean(errors[:, axis])) < 3.0 * math.sqrt(sigma / len(errors))

    def test_published_model_underestimates(self):
        """Test the (4-π)/8 model predicts a smaller MSE than the simulator gives."""
        cfg = _boresight_config(rician_b2u=5.0, rx_snr_db=20.0)
        scene = scene_from_config(cfg)
        rng = np.random.default_rng(7)
        errors = np.array([estimate_all(cfg, rng, scene).b2u.as_array() - scene.b2u.as_array() for _ in range(2000)])
        published = model_sigma_est_sq(cfg.with_updates(phase_model="rayleigh_variance"), scene)
        assert float(np.mean(errors ** 2)) > 2.0 * published

    def test_larger_array_lowers_mse(self):
        """Test the MSE ratio between N = 64 and N = 16."""
        mse = {}
        for n in (16, 64):
            cfg = _boresight_config(n_bs=n)
            scene = scene_from_config(cfg)
            rng = np.random.default_rng(n)
            errors = np.array([estimate_all(cfg, rng, scene).b2u.as_array() - scene.b2u.as_array() for _ in range(5000)])
            mse[n] = float(np.mean(errors ** 2))
        assert 0.04 <= mse[64] / mse[16] <= 0.09

    def test_wrap_regime_warning(self, caplog):
        """Test the default user direction is flagged as wrapping at N = 16."""
        with caplog.at_level(logging.WARNING, logger="IRSLink.Estimation"):
            assert not check_wrap_regime(SystemConfig())
        assert "wrap" in caplog.text


class TestLocalization:
    """Test user localization and the IRS-user transfer."""

    def test_boresight_and_horizon(self):
        """Test documented localization examples."""
        assert localize_user(EffectiveAnglePair(0.0, 0.0), 10.0).as_array() == pytest.approx([0.0, 0.0, -10.0])
        assert localize_user(EffectiveAnglePair(math.pi, 0.0), 10.0).as_array() == pytest.approx(
            [-10.0, 0.0, 0.0], abs=1e-12
        )

    def test_round_trip(self):
        """Test the true angles localize the true user."""
        scene = scene_from_config(SystemConfig())
        user = localize_user(scene.b2u, scene.d_b2u)
        assert user.as_array() == pytest.approx(scene.user.as_array(), abs=1e-9)

    def test_outside_disk(self):
        """Test angles outside the physical disk."""
        with pytest.raises(EstimationFailure):
            localize_user(EffectiveAnglePair(3.0, 1.0), 10.0)

    def test_irs_user_angles_example(self):
        """Test the IRS at (2, 0, 0) seeing a user at (1, 0, -1)."""
        angles, d = irs_user_angles(Position(1.0, 0.0, -1.0), Position(2.0, 0.0, 0.0))
        assert d == pytest.approx(math.sqrt(2.0))
        assert angles.theta_x == pytest.approx(math.pi / math.sqrt(2.0))
        assert angles.theta_y == pytest.approx(0.0)

    def test_i2u_angles_match_geometry(self):
        """Test the transferred angles equal the IRS-user effective angles."""
        scene = scene_from_config(SystemConfig())
        est = perfect_estimate(SystemConfig(), scene=scene)
        assert est.i2u.as_array() == pytest.approx(scene.i2u.as_array(), abs=1e-9)
        assert est.ratio_ra == pytest.approx(scene.ratio_ra)


class TestErrorPropagation:
    """Test the first-order B2U to I2U error coefficients."""

    def test_boresight_coefficients(self):
        """Test zero I2U angles give φ = (Ra, 0, Ra)."""
        assert error_propagation_coeffs(EffectiveAnglePair(0.0, 0.0), 0.0, 1.5) == pytest.approx((1.5, 0.0, 1.5))

    def test_tilted_coefficients(self):
        """Test θ_x = π/2 gives φ = (1.5, 0, 2) at Ra = 2."""
        phi = error_propagation_coeffs(EffectiveAnglePair(math.pi / 2.0, 0.0), 0.0, 2.0)
        assert phi == pytest.approx((1.5, 0.0, 2.0))

    def test_prediction_matches_monte_carlo(self):
        """Test the I2U MSE against (φ1² + φ2²)σ_est² for a horizontal IRS-user link."""
        cfg = _boresight_config(irs_spherical=(40.0 * math.sqrt(2.0), 45.0, 45.0))
        scene = scene_from_config(cfg)
        assert scene.ratio_ra == pytest.approx(1.0)
        reference = perfect_estimate(cfg, scene=scene)
        p1, p2, p3 = reference.phi
        assert (p1, p2, p3) == pytest.approx((0.5, -0.5, 0.5), abs=1e-6)

        rng = np.random.default_rng(7)
        errors = np.array([estimate_all(cfg, rng, scene).i2u.as_array() - scene.i2u.as_array() for _ in range(20000)])
        predicted_x = (p1 ** 2 + p2 ** 2) * reference.sigma_est_sq
        assert predicted_x == pytest.approx(0.5 * reference.sigma_est_sq)
        assert np.mean(errors[:, 0] ** 2) == pytest.approx(predicted_x, rel=0.15)


class TestEstimateSources:
    """Test the error-model and perfect estimates."""

    def test_error_model_deterministic(self):
        """Test equal seeds give equal draws."""
        cfg = SystemConfig()
        a = error_model_estimate(cfg, np.random.default_rng(3))
        b = error_model_estimate(cfg, np.random.default_rng(3))
        assert a.b2u == b.b2u
        assert a.source == "error_model"
        assert a.b2u.is_physical()

    def test_error_model_sigma(self):
        """Test the attached σ_est² follows the configured model."""
        cfg = SystemConfig()
        assert error_model_estimate(cfg, np.random.default_rng(0)).sigma_est_sq == pytest.approx(model_sigma_est_sq(cfg))

    def test_draw_estimate_dispatch(self):
        """Test the estimate source switch."""
        cfg = _boresight_config()
        assert draw_estimate(cfg, np.random.default_rng(0)).source == "pilot"
        assert draw_estimate(cfg.with_updates(estimate_source="error_model"), np.random.default_rng(0)).source == "error_model"

    def test_perfect_estimate_override(self):
        """Test σ_est² can be forced."""
        est = perfect_estimate(SystemConfig(), sigma_est_sq=0.0)
        assert isinstance(est, AngleEstimate)
        assert est.sigma_est_sq == 0.0
        assert est.with_sigma(0.3).sigma_est_sq == 0.3
        assert est.with_sigma(0.3).b2u == est.b2u
