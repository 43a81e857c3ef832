import numpy as np
import pytest

from mtl_relu_lab.cpwl import connect_the_dots, evaluate
from mtl_relu_lab.dataset import MultiTaskDataset
from mtl_relu_lab.kernel import (
    KernelError,
    NeuronKernel,
    SobolevKernel,
    gram_matrix,
    kernel_eval,
    kernel_interpolate,
    kernel_ridge,
    model_from_json,
    model_to_json,
    reproducing_property_check,
    ridge_dual_coefficients,
)


def random_neuron_kernel(rng, k=5, d=2):
    return NeuronKernel(
        rng.standard_normal((k, d)), rng.standard_normal(k), rng.uniform(0.5, 2.0, k)
    )


class TestSobolevEval:
    def test_anchor_value_one(self):
        spec = SobolevKernel(0.7)
        assert kernel_eval(spec, 0.7, 0.7) == pytest.approx(1.0)

    def test_formula_example(self):
        assert kernel_eval(SobolevKernel(0.0), 2.0, 3.0) == pytest.approx(3.0)

    def test_equals_min_form_right_of_anchor(self):
        spec = SobolevKernel(-1.0)
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.uniform(-1.0, 4.0, 2)
            assert kernel_eval(spec, a, b) == pytest.approx(1.0 + min(a, b) - (-1.0))

    def test_gram_symmetric_psd(self):
        rng = np.random.default_rng(1)
        xs = np.sort(rng.uniform(-2, 2, 12))
        spec = SobolevKernel(float(xs[0]))
        g = gram_matrix(spec, xs)
        assert np.allclose(g, g.T, atol=1e-14)
        eig = np.linalg.eigvalsh(g)
        assert eig.min() >= -1e-10 * np.trace(g)


class TestNeuronKernelEval:
    def test_single_feature_product(self):
        spec = NeuronKernel([[1.0]], [0.0], [1.0])
        assert kernel_eval(spec, [1.0], [2.0]) == pytest.approx(2.0)

    def test_gram_psd(self):
        rng = np.random.default_rng(2)
        spec = random_neuron_kernel(rng, k=6, d=3)
        xs = rng.standard_normal((10, 3))
        g = gram_matrix(spec, xs)
        assert np.allclose(g, g.T, atol=1e-13)
        assert np.linalg.eigvalsh(g).min() >= -1e-10 * max(np.trace(g), 1.0)

    def test_q_must_be_positive(self):
        with pytest.raises(KernelError):
            NeuronKernel([[1.0]], [0.0], [0.0])


class TestInterpolation:
    def test_single_point(self):
        spec = SobolevKernel(0.3)
        model = kernel_interpolate(spec, [0.3], [2.5])
        assert model.alpha[0] == pytest.approx(2.5)
        assert model.predict(np.array([0.3]))[0] == pytest.approx(2.5)

    def test_hat_matches_straight_lines(self):
        data = MultiTaskDataset([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        model = kernel_interpolate(SobolevKernel.for_data(data), data.x, data.labels[:, 0])
        assert model.predict(np.array([0.5]))[0] == pytest.approx(0.5, abs=1e-12)
        assert model.predict(np.array([1.5]))[0] == pytest.approx(0.5, abs=1e-12)

    def test_symmetric_data_symmetric_interpolant(self):
        x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        y = np.array([1.0, 0.0, 2.0, 0.0, 1.0])  # even profile
        model = kernel_interpolate(SobolevKernel(float(x[0])), x, y)
        grid = np.linspace(-2, 2, 41)
        vals = model.predict(grid)
        assert np.allclose(vals, vals[::-1], atol=1e-10)

    def test_matches_connect_the_dots_on_support(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            n = rng.integers(3, 10)
            x = np.sort(rng.uniform(-3, 3, n))
            while np.any(np.diff(x) < 1e-6):
                x = np.sort(rng.uniform(-3, 3, n))
            y = rng.standard_normal(n)
            data = MultiTaskDataset(x, y)
            model = kernel_interpolate(SobolevKernel.for_data(data), data.x, data.labels[:, 0])
            ref = connect_the_dots(data)
            grid = np.linspace(x[0], x[-1], 500)
            scale = max(1.0, np.abs(y).max())
            assert np.abs(model.predict(grid) - evaluate(ref, grid)[:, 0]).max() <= 1e-8 * scale


class TestRidge:
    def test_lambda_zero_reduces_to_interpolation(self):
        rng = np.random.default_rng(4)
        xs = np.sort(rng.uniform(0, 1, 6))
        y = rng.standard_normal(6)
        a = kernel_interpolate(SobolevKernel(float(xs[0])), xs, y)
        b = kernel_ridge(SobolevKernel(float(xs[0])), xs, y, 0.0)
        assert np.allclose(a.alpha, b.alpha, atol=1e-12)

    def test_large_lambda_shrinks_predictions(self):
        rng = np.random.default_rng(5)
        xs = np.sort(rng.uniform(0, 1, 6))
        y = rng.standard_normal(6)
        spec = SobolevKernel(float(xs[0]))
        big = kernel_ridge(spec, xs, y, 1e8)
        assert np.abs(big.predict(xs)).max() < 1e-5

    def test_negative_lambda_rejected(self):
        with pytest.raises(KernelError):
            kernel_ridge(SobolevKernel(0.0), [0.0, 1.0], [0.0, 1.0], -0.1)

    def test_dual_matches_primal_normal_equations(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n, k = rng.integers(4, 10), rng.integers(2, 8)
            phi = np.maximum(rng.standard_normal((n, k)), 0.0)
            q = rng.uniform(0.2, 3.0, k)
            y = rng.standard_normal(n)
            lam = rng.uniform(0.01, 2.0)
            _, v = ridge_dual_coefficients(phi, q, y, lam)
            v_primal = np.linalg.solve(phi.T @ phi + lam * np.diag(q), phi.T @ y)
            denom = max(np.linalg.norm(v_primal), 1e-12)
            assert np.linalg.norm(v - v_primal) / denom <= 1e-8

    def test_neuron_ridge_prediction_consistent_with_features(self):
        rng = np.random.default_rng(7)
        spec = random_neuron_kernel(rng, k=6, d=2)
        xs = rng.standard_normal((8, 2))
        y = rng.standard_normal(8)
        model = kernel_ridge(spec, xs, y, 0.1)
        v = model.output_weights()
        phi = spec.features(xs)
        assert np.allclose(model.predict(xs), phi @ v, atol=1e-10)


class TestReproducingProperty:
    def test_residual_tiny_random_sweep(self):
        rng = np.random.default_rng(8)
        spec = random_neuron_kernel(rng, k=7, d=3)
        worst = 0.0
        for _ in range(1000):
            v = rng.standard_normal(7)
            x = rng.standard_normal(3)
            fx = float(v @ spec.features(x.reshape(1, -1))[0])
            resid = reproducing_property_check(spec, v, x)
            assert resid <= 1e-10 * (1.0 + abs(fx))
            worst = max(worst, resid)
        assert worst <= 1e-9

    def test_zero_function(self):
        rng = np.random.default_rng(9)
        spec = random_neuron_kernel(rng)
        assert reproducing_property_check(spec, np.zeros(5), rng.standard_normal(2)) == 0.0


class TestSingularHandling:
    def test_duplicate_centers_survive_via_jitter(self):
        # a PSD-singular Gram is rescued by the diagonal jitter ladder
        spec = SobolevKernel(0.0)
        model = kernel_interpolate(spec, [0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
        assert np.all(np.isfinite(model.alpha))
        assert model.predict(np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-4)

    def test_indefinite_matrix_error_mentions_condition(self):
        from mtl_relu_lab.kernel import _solve_spd

        with pytest.raises(KernelError, match="cond"):
            _solve_spd(np.diag([1.0, -1.0]), np.ones(2))


class TestModelJson:
    def test_sobolev_round_trip(self):
        model = kernel_interpolate(SobolevKernel(0.0), [0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        back = model_from_json(model_to_json(model))
        assert isinstance(back.spec, SobolevKernel)
        assert np.array_equal(back.alpha, model.alpha)
        assert np.array_equal(back.centers, model.centers)

    def test_neuron_round_trip(self):
        rng = np.random.default_rng(10)
        spec = random_neuron_kernel(rng, k=4, d=2)
        xs = rng.standard_normal((5, 2))
        model = kernel_ridge(spec, xs, rng.standard_normal(5), 0.2)
        back = model_from_json(model_to_json(model))
        assert isinstance(back.spec, NeuronKernel)
        assert np.array_equal(back.spec.q_diag, spec.q_diag)
        grid = rng.standard_normal((6, 2))
        assert np.allclose(back.predict(grid), model.predict(grid), atol=0.0)
