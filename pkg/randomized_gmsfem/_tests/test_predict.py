import itertools
import math

import numpy
import pytest
from numpy.polynomial import hermite_e
from sklearn.gaussian_process import GaussianProcessRegressor

from ..errors import FitError
from ..predict import (
    HermiteBasis,
    UnderdeterminedFitWarning,
    fit_gpc,
    fit_gpr,
    hermite_eval,
    median_length_scale,
    predict_gpc,
    predict_gpr,
)


def test_hermite_values():
    basis = HermiteBasis(1, 3)
    numpy.testing.assert_allclose(
        hermite_eval(basis, 2.0), [1.0, 2.0, 3.0 / math.sqrt(2), 2.0 / math.sqrt(6)]
    )


def test_multi_index_order():
    basis = HermiteBasis(2, 2)
    assert basis.multi_indices == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert len(basis) == basis.size == 6
    assert HermiteBasis(4, 2).size == len(HermiteBasis(4, 2)) == 15
    with pytest.raises(ValueError):
        basis.evaluate([0.1, 0.2, 0.3])


@pytest.mark.parametrize("dimension, degree", [(1, 6), (2, 4), (3, 2)])
def test_orthonormality(dimension, degree):
    points, weights = hermite_e.hermegauss(64)
    weights = weights / math.sqrt(2 * math.pi)
    grid = numpy.array(list(itertools.product(points, repeat=dimension)))
    w = numpy.prod(numpy.array(list(itertools.product(weights, repeat=dimension))), axis=1)
    basis = HermiteBasis(dimension, degree)
    values = basis.evaluate(grid)
    gram = values.T @ (w[:, None] * values)
    numpy.testing.assert_allclose(gram, numpy.eye(len(basis)), atol=1e-12)


@pytest.mark.parametrize("dimension, degree", [(1, 3), (2, 2), (4, 2)])
def test_polynomial_targets_are_recovered(dimension, degree):
    rng = numpy.random.default_rng(dimension)
    basis = HermiteBasis(dimension, degree)
    samples = rng.standard_normal((3 * len(basis), dimension))
    truth = rng.standard_normal((len(basis), 2))
    targets = {(0, 0): basis.evaluate(samples) @ truth, (1, 0): basis.evaluate(samples)[:, 1]}
    predictor = fit_gpc(samples, targets, degree)
    assert predictor.residuals[(0, 0)].max() <= 1e-9
    numpy.testing.assert_allclose(predictor.coefficients[(0, 0)], truth, atol=1e-9)
    point = rng.standard_normal(dimension)
    predicted = predict_gpc(predictor, point)
    numpy.testing.assert_allclose(predicted[(0, 0)], basis.evaluate(point) @ truth, atol=1e-9)
    numpy.testing.assert_allclose(predicted[(1, 0)], [basis.evaluate(point)[1]], atol=1e-9)


def test_exact_fit_with_as_many_samples_as_terms():
    basis = HermiteBasis(1, 3)
    samples = [[-1.0], [0.2], [0.7], [1.9]]
    y = numpy.array([s[0] ** 3 - s[0] for s in samples])
    predictor = fit_gpc(samples, {"y": y}, 3)
    assert predictor.residuals["y"].max() <= 1e-9
    numpy.testing.assert_allclose(predictor.predict(0.5)["y"], [0.125 - 0.5], atol=1e-9)
    assert predictor.basis.multi_indices == basis.multi_indices


def test_rank_deficient_design():
    samples = [[0.5], [0.5], [0.5], [0.5], [0.5]]
    with pytest.raises(FitError) as info:
        fit_gpc(samples, {"y": numpy.ones(5)}, 2)
    assert len(info.value.deficient) == 2
    assert set(info.value.deficient) <= {(0,), (1,), (2,)}


def test_underdetermined_fit_warns():
    with pytest.warns(UnderdeterminedFitWarning):
        predictor = fit_gpc([[0.1], [0.9]], {"y": numpy.array([1.0, 2.0])}, 3)
    numpy.testing.assert_allclose(predictor.predict(0.1)["y"], [1.0], atol=1e-9)


def test_constant_targets():
    rng = numpy.random.default_rng(0)
    samples = numpy.abs(rng.standard_normal((20, 2)))
    targets = {(3, 1): numpy.full((20, 4), 2.5)}
    gpc = fit_gpc(samples, targets, 3)
    gpr = fit_gpr(samples, targets)
    for mu in ([0.1, 0.2], [2.0, 0.5], [3.0, 3.0]):
        numpy.testing.assert_allclose(gpc.predict(mu)[(3, 1)], 2.5, atol=1e-8)
    for mu in ([0.1, 0.2], [2.0, 0.5], [40.0, 40.0]):
        numpy.testing.assert_allclose(gpr.predict(mu)[(3, 1)], 2.5, atol=1e-12)


def test_target_shape_checks():
    with pytest.raises(ValueError):
        fit_gpc([[0.1], [0.2], [0.3]], {"y": numpy.ones(4)}, 1)


def test_median_length_scale():
    assert median_length_scale(numpy.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0)
    assert median_length_scale(numpy.array([[1.0], [1.0]])) == 1.0


def test_gpr_interpolates_training_data():
    samples = numpy.linspace(0.1, 2.9, 6)[:, None]
    y = numpy.sin(samples[:, 0])
    predictor = fit_gpr(samples, {"y": y})
    for mu, expected in zip(samples, y):
        means, variances = predict_gpr(predictor, mu)
        assert means["y"][0] == pytest.approx(expected, abs=1e-5)
        assert variances["y"][0] <= 1e-6


def test_gpr_smooth_target():
    rng = numpy.random.default_rng(3)
    samples = rng.uniform(0, 3, size=(30, 1))
    predictor = fit_gpr(samples, {"y": numpy.sin(samples[:, 0])})
    grid = numpy.linspace(0.05, 2.95, 200)
    errors = [abs(predictor.predict([m])["y"][0] - math.sin(m)) for m in grid]
    assert max(errors) <= 1e-2


def test_gpr_matches_naive_kernel_regression():
    rng = numpy.random.default_rng(7)
    X = rng.uniform(0, 2, size=(8, 2))
    y = numpy.column_stack([numpy.exp(-X[:, 0]) * X[:, 1], X[:, 0] ** 2])
    predictor = fit_gpr(X, {"k": y})
    ell = predictor.length_scale

    def kernel(a, b):
        return numpy.exp(-numpy.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2) / (2 * ell ** 2))

    mean = y.mean(axis=0)
    weights = numpy.linalg.solve(kernel(X, X) + predictor.jitter * numpy.eye(8), y - mean)
    for point in ([0.3, 1.1], [1.7, 0.2], [5.0, 5.0]):
        k = kernel(numpy.array([point]), X)[0]
        numpy.testing.assert_allclose(predictor.predict(point)["k"], mean + k @ weights, atol=1e-8)


def test_gpr_reverts_to_prior_far_from_data():
    samples = numpy.linspace(0.1, 1.0, 5)[:, None]
    y = numpy.array([1.0, 3.0, 2.0, 5.0, 4.0])
    means, variances = predict_gpr(fit_gpr(samples, {"y": y}), [100.0])
    assert means["y"][0] == pytest.approx(y.mean())
    assert variances["y"][0] == pytest.approx(y.var())


def test_gpr_constant_target_has_no_variance():
    samples = numpy.linspace(0.1, 1.0, 5)[:, None]
    targets = {"flat": numpy.full((5, 2), 3.0), "y": samples[:, 0] ** 2}
    means, variances = predict_gpr(fit_gpr(samples, targets), [100.0])
    numpy.testing.assert_allclose(means["flat"], [3.0, 3.0])
    numpy.testing.assert_array_equal(variances["flat"], [0.0, 0.0])
    assert variances["y"][0] == pytest.approx((samples[:, 0] ** 2).var())


def test_gpr_uses_fixed_kernel_regressor():
    samples = numpy.linspace(0.1, 1.0, 5)[:, None]
    predictor = fit_gpr(samples, {"y": samples[:, 0]}, length_scale=0.4)
    assert isinstance(predictor.regressor, GaussianProcessRegressor)
    assert predictor.regressor.optimizer is None
    assert predictor.regressor.alpha == predictor.jitter
    assert predictor.regressor.kernel_.k2.length_scale == 0.4


def test_gpr_needs_two_samples():
    with pytest.raises(FitError):
        fit_gpr([[0.5]], {"y": numpy.ones(1)})


def test_gpr_shares_one_factorization_across_keys():
    samples = numpy.linspace(0.1, 1.0, 5)[:, None]
    predictor = fit_gpr(samples, {(0, 0): numpy.ones((5, 2)), (0, 1): samples[:, 0]})
    assert predictor.keys == ((0, 0), (0, 1))
    assert predictor.predict([0.5])[(0, 0)].shape == (2,)
    assert predictor.predict([0.5])[(0, 1)].shape == (1,)
