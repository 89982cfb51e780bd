import numpy as np
import pytest

from thermoep.estimators import (
    EstimationError,
    EstimatorMethod,
    QuadratureSpec,
    grad_classical_ep,
    grad_contrast_mc,
    grad_covariance_mc,
    grad_path_integral,
    grad_supervised_mc,
)
from thermoep.models import QuadraticEnergyModel, random_spin_glass
from thermoep.oracle import (
    exact_grad_J_contrast,
    exact_grad_J_covariance,
    exact_loss_energy_covariance,
)
from thermoep.sampler import ChainConfig, Kernel


class TestQuadratureSpec:
    def test_trapezoid_two_nodes(self):
        q = QuadratureSpec.trapezoid(2)
        np.testing.assert_allclose(q.nodes, [0.0, 1.0])
        np.testing.assert_allclose(q.weights, [0.5, 0.5])

    def test_trapezoid_interior_weights_uniform(self):
        q = QuadratureSpec.trapezoid(5)
        np.testing.assert_allclose(q.weights, [0.125, 0.25, 0.25, 0.25, 0.125])
        assert q.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_gauss_legendre_integrates_cubics_exactly(self):
        q = QuadratureSpec.gauss_legendre(2)
        value = float(np.sum(q.weights * q.nodes**3))
        assert value == pytest.approx(0.25, abs=1e-14)
        assert np.all((q.nodes > 0) & (q.nodes < 1))

    def test_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(nodes=np.array([0.5, 0.5]), weights=np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            QuadratureSpec(nodes=np.array([0.0, 1.5]), weights=np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            QuadratureSpec(nodes=np.array([0.0, 1.0]), weights=np.array([0.9, 0.2]))
        with pytest.raises(ValueError):
            QuadratureSpec(nodes=np.array([0.0, 1.0]), weights=np.array([1.2, -0.2]))
        with pytest.raises(ValueError):
            QuadratureSpec.trapezoid(1)


class TestContrastEstimator:
    def test_within_errors_of_enumeration(self, small_glass, gibbs_config):
        model, theta = small_glass
        exact = exact_grad_J_contrast(model, theta, 1.0)
        est = grad_contrast_mc(model, theta, 1.0, gibbs_config)
        z = np.abs(est.grad.values - exact) / est.std_err
        assert np.max(z) < 4.0
        assert est.method is EstimatorMethod.EXPECTATION_CONTRAST

    def test_gaussian_model_matches_closed_form(self):
        model = QuadraticEnergyModel(3, loss_vector=[1.0, -0.5, 2.0])
        theta = np.array([1.5])
        cfg = ChainConfig(
            n_steps=2500, n_chains=16, burn_in=500, step_size=0.3,
            kernel=Kernel.LANGEVIN_ADJUSTED, seed=5,
        )
        est = grad_contrast_mc(model, theta, 1.0, cfg)
        exact = model.grad_contrast_exact(theta)
        z = np.abs(est.grad.values - exact) / est.std_err
        assert np.max(z) < 4.0

    def test_estimate_carries_model_layout(self, small_glass, gibbs_config):
        model, theta = small_glass
        est = grad_contrast_mc(model, theta, 1.0, gibbs_config)
        assert est.grad.segment("fields").shape == (4,)
        assert est.grad.segment("couplings").shape == (6,)
        assert est.std_err.shape == (model.param_dim,)

    def test_deterministic_given_seed(self, small_glass, gibbs_config):
        model, theta = small_glass
        e1 = grad_contrast_mc(model, theta, 1.0, gibbs_config)
        e2 = grad_contrast_mc(model, theta, 1.0, gibbs_config)
        assert e1.grad.values.tobytes() == e2.grad.values.tobytes()

    def test_stderr_shrinks_with_chain_count(self, small_glass, gibbs_config):
        model, theta = small_glass
        from dataclasses import replace

        few = grad_contrast_mc(model, theta, 1.0, replace(gibbs_config, n_chains=8))
        many = grad_contrast_mc(model, theta, 1.0, replace(gibbs_config, n_chains=32))
        ratio = few.std_err.mean() / many.std_err.mean()
        assert 1.3 < ratio < 3.2  # expect ~2 for a 4x chain count


class TestClassicalEP:
    def test_beta_one_is_bitwise_contrast(self, small_glass, gibbs_config):
        model, theta = small_glass
        contrast = grad_contrast_mc(model, theta, 1.0, gibbs_config)
        ep = grad_classical_ep(model, theta, 1.0, 1.0, gibbs_config)
        assert ep.grad.values.tobytes() == contrast.grad.values.tobytes()
        assert ep.method is EstimatorMethod.CLASSICAL_EP

    def test_rejects_zero_nudge(self, small_glass, gibbs_config):
        model, theta = small_glass
        with pytest.raises(EstimationError):
            grad_classical_ep(model, theta, 1.0, 0.0, gibbs_config)

    def test_small_beta_scales_up_noise(self, small_glass, gibbs_config):
        model, theta = small_glass
        big = grad_classical_ep(model, theta, 1.0, 1.0, gibbs_config)
        tiny = grad_classical_ep(model, theta, 1.0, 0.01, gibbs_config)
        assert tiny.std_err.mean() > 20 * big.std_err.mean()


class TestCovarianceEstimator:
    def test_within_errors_of_matched_quadrature_oracle(self, small_glass, gibbs_config):
        model, theta = small_glass
        quad = QuadratureSpec.trapezoid(5)
        ref = exact_grad_J_covariance(model, theta, 1.0, quad)
        est = grad_covariance_mc(model, theta, 1.0, quad, gibbs_config)
        z = np.abs(est.grad.values - ref) / est.std_err
        assert np.max(z) < 4.0
        assert est.method is EstimatorMethod.INTEGRATED_COVARIANCE

    def test_requires_two_kept_samples_per_chain(self, small_glass):
        model, theta = small_glass
        cfg = ChainConfig(
            n_steps=4, n_chains=4, burn_in=3, kernel=Kernel.GIBBS_SWEEP, seed=0
        )
        with pytest.raises(EstimationError):
            grad_covariance_mc(model, theta, 1.0, QuadratureSpec.trapezoid(3), cfg)

    def test_requires_two_chains(self, small_glass):
        model, theta = small_glass
        cfg = ChainConfig(
            n_steps=50, n_chains=1, burn_in=10, kernel=Kernel.GIBBS_SWEEP, seed=0
        )
        with pytest.raises(EstimationError):
            grad_covariance_mc(model, theta, 1.0, QuadratureSpec.trapezoid(3), cfg)

    def test_node_metadata_records_grid(self, small_glass, gibbs_config):
        model, theta = small_glass
        quad = QuadratureSpec.trapezoid(3)
        est = grad_covariance_mc(model, theta, 1.0, quad, gibbs_config)
        betas = [node["beta"] for node in est.meta["nodes"]]
        np.testing.assert_allclose(betas, [0.0, 0.5, 1.0])


class TestPathIntegral:
    def test_equals_trapezoid_quadrature(self, small_glass, gibbs_config):
        model, theta = small_glass
        pi = grad_path_integral(model, theta, 1.0, 3, gibbs_config)
        quad = grad_covariance_mc(
            model, theta, 1.0, QuadratureSpec.trapezoid(3), gibbs_config
        )
        assert pi.grad.values.tobytes() == quad.grad.values.tobytes()
        assert pi.method is EstimatorMethod.PATH_INTEGRAL


class TestSupervisedEstimator:
    def test_matches_free_phase_covariance_oracle(self, small_glass, gibbs_config):
        model, theta = small_glass
        exact = -exact_loss_energy_covariance(model, theta, 0.0, 1.0) / 1.0
        est = grad_supervised_mc(model, theta, 1.0, gibbs_config)
        z = np.abs(est.grad.values - exact) / est.std_err
        assert np.max(z) < 4.0
        assert est.method is EstimatorMethod.SUPERVISED_COVARIANCE
