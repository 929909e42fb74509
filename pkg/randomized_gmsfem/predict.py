"""
Regression of reduced eigenvector coordinates on the parameter.

Both predictors map mu to one reduced vector per key, where a key is any
hashable label; the offline stage uses (neighborhood, mode) pairs. Every
target array has shape ``(n_s, N)``: one row per training sample.
"""
import itertools
import logging
import math
import warnings

import numpy
import scipy.linalg
import scipy.spatial.distance
import scipy.special
from numpy.polynomial import hermite_e
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, ConstantKernel

from .coefficient import as_parameter
from .errors import FitError

logger = logging.getLogger(name="randomized_gmsfem.predict")

GPC = "gpc"
GPR = "gpr"
RANK_TOLERANCE = 1e-10
GPR_JITTER = 1e-8
GPR_MAX_JITTER = 1e-4


class UnderdeterminedFitWarning(UserWarning):
    "Fewer training samples than polynomial terms."


def _as_samples(samples):
    array = numpy.array([as_parameter(mu) for mu in samples])
    if array.ndim != 2:
        raise ValueError("training parameters must share one dimension")
    return array


def _stack_targets(targets, n_samples):
    keys = list(targets)
    arrays = []
    for key in keys:
        array = numpy.asarray(targets[key], dtype=float)
        if array.ndim == 1:
            array = array[:, None]
        if array.shape[0] != n_samples:
            raise ValueError(
                f"targets for {key!r} have {array.shape[0]} rows for {n_samples} samples"
            )
        arrays.append(array)
    widths = [a.shape[1] for a in arrays]
    return keys, widths, numpy.hstack(arrays) if arrays else numpy.zeros((n_samples, 0))


def _split(keys, widths, row):
    out = {}
    start = 0
    for key, width in zip(keys, widths):
        out[key] = row[start:start + width]
        start += width
    return out


class HermiteBasis:
    """
    Products of orthonormal probabilists' Hermite polynomials.

    eta_alpha(mu) = prod_m He_{alpha_m}(mu_m) / sqrt(alpha_m!) for every
    multi-index of total degree at most ``degree``. Multi-indices are graded:
    by total degree, then lexicographically descending, so (1, 0) precedes
    (0, 1).

    Parameters
    ----------
    dimension : int
        M
    degree : int
        p
    """

    def __init__(self, dimension, degree):
        if dimension < 1 or degree < 0:
            raise ValueError(f"need dimension >= 1 and degree >= 0, got {dimension}, {degree}")
        self.dimension = int(dimension)
        self.degree = int(degree)
        indices = []
        for total in range(self.degree + 1):
            level = [
                alpha
                for alpha in itertools.product(range(total + 1), repeat=self.dimension)
                if sum(alpha) == total
            ]
            indices.extend(sorted(level, reverse=True))
        self.multi_indices = tuple(indices)
        self._norms = numpy.sqrt(
            [float(math.factorial(n)) for n in range(self.degree + 1)]
        )

    def __len__(self):
        return len(self.multi_indices)

    @property
    def size(self):
        "C(M + p, p)"
        return int(scipy.special.comb(self.dimension + self.degree, self.degree, exact=True))

    def evaluate(self, mu):
        """
        Values of every eta_alpha.

        Parameters
        ----------
        mu : array_like
            Shape (M,) or (n, M).

        Returns
        -------
        values : numpy.ndarray
            Shape (P,) or (n, P).
        """
        mu = numpy.asarray(mu, dtype=float)
        single = mu.ndim <= 1
        mu = numpy.atleast_2d(mu.reshape(1, -1) if single else mu)
        if mu.shape[1] != self.dimension:
            raise ValueError(f"expected parameters of length {self.dimension}, got {mu.shape[1]}")
        # (n, M, p + 1) table of normalized univariate values
        table = hermite_e.hermevander(mu, self.degree) / self._norms
        values = numpy.ones((mu.shape[0], len(self.multi_indices)))
        for column, alpha in enumerate(self.multi_indices):
            for m, order in enumerate(alpha):
                if order:
                    values[:, column] *= table[:, m, order]
        return values[0] if single else values

    def __repr__(self):
        return f"{self.__class__.__name__}(dimension={self.dimension}, degree={self.degree})"


def hermite_eval(basis, mu):
    "eta_alpha(mu) for every multi-index of the basis, in basis order."
    return basis.evaluate(as_parameter(mu))


class GpcPredictor:
    """
    Least-squares polynomial chaos expansions, one per key.

    Attributes
    ----------
    basis : HermiteBasis
    coefficients : Dict[key, numpy.ndarray]
        Shape (P, N): one expansion per reduced coordinate.
    residuals : Dict[key, numpy.ndarray]
        ||G c - y||_2 per reduced coordinate on the training set.
    """

    kind = GPC

    def __init__(self, basis, coefficients, residuals):
        self.basis = basis
        self.coefficients = dict(coefficients)
        self.residuals = dict(residuals)

    @property
    def keys(self):
        return tuple(self.coefficients)

    def predict(self, mu):
        "Dict of reduced vectors sum_alpha c_alpha eta_alpha(mu)."
        eta = hermite_eval(self.basis, mu)
        return {key: eta @ c for key, c in self.coefficients.items()}

    def __repr__(self):
        return f"{self.__class__.__name__}({self.basis!r}, keys={len(self.coefficients)})"


def fit_gpc(samples, targets, degree):
    """
    Fit Hermite expansions to reduced coordinates by discrete least squares.

    The design matrix G_{j alpha} = eta_alpha(mu_j) is shared by every target
    and solved once by column-pivoted QR.

    Parameters
    ----------
    samples : Sequence
        Training parameters mu_1, ..., mu_{n_s}.
    targets : Mapping[key, array_like]
        Each of shape (n_s, N) or (n_s,).
    degree : int
        Total degree p.

    Returns
    -------
    predictor : GpcPredictor

    Raises
    ------
    FitError
        If G is rank deficient while n_s >= P. The error names the
        multi-indices that could not be resolved.
    """
    X = _as_samples(samples)
    basis = HermiteBasis(X.shape[1], degree)
    keys, widths, Y = _stack_targets(targets, X.shape[0])
    G = basis.evaluate(X)
    n_s, P = G.shape
    if n_s < P:
        warnings.warn(
            f"{n_s} training samples for {P} polynomial terms; using the minimum-norm solution",
            UnderdeterminedFitWarning,
        )
        C = scipy.linalg.lstsq(G, Y)[0]
    else:
        Qm, R, pivots = scipy.linalg.qr(G, mode="economic", pivoting=True)
        diagonal = numpy.abs(numpy.diag(R))
        rank = int(numpy.count_nonzero(diagonal > RANK_TOLERANCE * diagonal[0]))
        if rank < P:
            deficient = [basis.multi_indices[p] for p in pivots[rank:]]
            raise FitError(
                f"gPC design matrix has rank {rank} < {P}; unresolved terms {deficient}",
                deficient=deficient,
            )
        C = numpy.empty((P, Y.shape[1]))
        C[pivots] = scipy.linalg.solve_triangular(R, Qm.T @ Y)
    residuals = numpy.linalg.norm(G @ C - Y, axis=0)
    logger.info(
        "gPC fit: %d samples, %d terms, %d targets, max residual %.3e",
        n_s,
        P,
        Y.shape[1],
        residuals.max() if residuals.size else 0.0,
    )
    coefficients = _split(keys, widths, C.T)
    return GpcPredictor(
        basis,
        {key: c.T for key, c in coefficients.items()},
        _split(keys, widths, residuals),
    )


def predict_gpc(predictor, mu):
    "Reduced vectors for every key at mu."
    return predictor.predict(mu)


def median_length_scale(X):
    "Median pairwise Euclidean distance of the rows of X (1.0 if all coincide)."
    distances = scipy.spatial.distance.pdist(X)
    scale = float(numpy.median(distances)) if distances.size else 0.0
    return scale if scale > 0 else 1.0


class GprPredictor:
    """
    Gaussian process posterior means with a squared-exponential kernel.

    One :class:`sklearn.gaussian_process.GaussianProcessRegressor` is
    conditioned on all targets at once, so the correlation matrix
    R = k(mu_i, mu_j) + jitter I is factored a single time. The kernel is
    fixed (no hyperparameter optimization) and ``normalize_y`` gives every
    target column its own constant mean m and signal variance s^2; the
    posterior mean m + k(mu)' R^-1 (y - m) does not depend on s^2.

    Parameters
    ----------
    inputs : array_like
        Training parameters, shape (n_s, M).
    targets : Mapping[key, array_like]
        Each of shape (n_s, N) or (n_s,).
    length_scale, jitter : float

    Raises
    ------
    numpy.linalg.LinAlgError
        If R is not positive definite.
    """

    kind = GPR

    def __init__(self, inputs, targets, length_scale, jitter):
        self.inputs = _as_samples(inputs)
        self.length_scale = float(length_scale)
        self.jitter = float(jitter)
        keys, widths, Y = _stack_targets(targets, len(self.inputs))
        self._keys, self._widths = tuple(keys), widths
        self.targets = {key: block.T for key, block in _split(keys, widths, Y.T).items()}
        # Constant columns have zero posterior variance; sklearn rescales them by 1.
        self._spread = Y.std(axis=0) > 0
        self.regressor = GaussianProcessRegressor(
            kernel=self.kernel, alpha=self.jitter, optimizer=None, normalize_y=True
        ).fit(self.inputs, Y)

    @property
    def kernel(self):
        return ConstantKernel(1.0, constant_value_bounds="fixed") * RBF(
            self.length_scale, length_scale_bounds="fixed"
        )

    @property
    def keys(self):
        return self._keys

    def predict(self, mu):
        "Dict of posterior mean vectors at mu."
        return self.predict_with_variance(mu)[0]

    def predict_with_variance(self, mu):
        "Posterior means and posterior variances per key at mu."
        x = as_parameter(mu)[None, :]
        mean, std = self.regressor.predict(x, return_std=True)
        mean = numpy.reshape(mean, -1)
        variance = numpy.reshape(std, -1) ** 2 * self._spread
        return _split(self._keys, self._widths, mean), _split(self._keys, self._widths, variance)

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(length_scale={self.length_scale:.4g}, "
            f"jitter={self.jitter:.1e}, keys={len(self._keys)})"
        )


def fit_gpr(samples, targets, *, length_scale=None):
    """
    Condition a squared-exponential Gaussian process on the training targets.

    Parameters
    ----------
    samples : Sequence
        At least two training parameters.
    targets : Mapping[key, array_like]
        Each of shape (n_s, N) or (n_s,).
    length_scale : float, optional
        Default: :func:`median_length_scale` of the samples.

    Returns
    -------
    predictor : GprPredictor

    Raises
    ------
    FitError
        If the correlation matrix cannot be factored with a jitter up to 1e-4.
    """
    X = _as_samples(samples)
    if len(X) < 2:
        raise FitError(f"GPR needs at least 2 training samples, got {len(X)}")
    if length_scale is None:
        length_scale = median_length_scale(X)
    jitter = GPR_JITTER
    while True:
        try:
            predictor = GprPredictor(X, targets, length_scale, jitter)
            break
        except numpy.linalg.LinAlgError as err:
            if jitter * 10 > GPR_MAX_JITTER * (1 + 1e-9):
                raise FitError(
                    f"GPR correlation matrix not positive definite with jitter {jitter:.0e}"
                ) from err
            jitter *= 10
            logger.warning("raising GPR jitter to %.0e", jitter)
    logger.info(
        "GPR fit: %d samples, %d targets, length scale %.4g, jitter %.0e",
        len(X),
        len(predictor.keys),
        length_scale,
        jitter,
    )
    return predictor


def predict_gpr(predictor, mu):
    """
    Posterior means and variances at mu.

    Returns
    -------
    means, variances : Dict[key, numpy.ndarray]
    """
    return predictor.predict_with_variance(mu)
