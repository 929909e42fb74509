"""
Affine parametric permeability fields.

A coefficient is a list of terms ``(Theta_q, kappa_q)`` realizing

    kappa(x; mu) = sum_q Theta_q(mu) kappa_q(x)

where each ``kappa_q`` is a strictly positive cell raster and each
``Theta_q`` is a named scalar function of one component of ``mu``.
"""
import collections
import dataclasses
import logging
import math

import numpy

from .errors import ConfigurationError, InadmissibleParameter, SamplingError

logger = logging.getLogger(name="randomized_gmsfem.coefficient")

ThetaFunction = collections.namedtuple("ThetaFunction", ["evaluate", "domain"])

# ``domain`` selects the admissible branch used when sampling. For
# mu_plus_mu_sq both mu > 0 and mu < -1 give Theta > 0; the branch through
# the online test points (mu > 0) is the one retained.
THETA_FUNCTIONS = {
    "mu_plus_mu_sq": ThetaFunction(lambda m: m + m * m, lambda m: m > 0),
    "identity": ThetaFunction(lambda m: m, lambda m: m > 0),
    "exp": ThetaFunction(math.exp, lambda m: True),
    "constant": ThetaFunction(lambda m: 1.0, lambda m: True),
}

TRAINING = "training"
ONLINE = "online"


@dataclasses.dataclass(frozen=True)
class ThetaDescriptor:
    """
    Names the scalar function Theta_q and the component of mu it reads.

    Parameters
    ----------
    theta_id : str
        Key of :data:`THETA_FUNCTIONS`.
    component : int
        Index into the parameter vector.
    """

    theta_id: str = "mu_plus_mu_sq"
    component: int = 0

    def __post_init__(self):
        if self.theta_id not in THETA_FUNCTIONS:
            raise ConfigurationError(
                f"unknown theta_id {self.theta_id!r}; "
                f"expected one of {sorted(THETA_FUNCTIONS)}"
            )
        if self.component < 0:
            raise ConfigurationError(f"component must be >= 0, got {self.component}")


@dataclasses.dataclass(frozen=True)
class ParameterSample:
    """
    A parameter vector and where it came from.

    Parameters
    ----------
    mu : Tuple[float]
    provenance : str
        ``"training"`` or ``"online"``.
    """

    mu: tuple
    provenance: str = ONLINE

    @property
    def array(self):
        return numpy.asarray(self.mu, dtype=float)


def as_parameter(mu):
    "Coerce a scalar, sequence, or ParameterSample to a 1-D float array."
    if isinstance(mu, ParameterSample):
        return mu.array
    return numpy.atleast_1d(numpy.asarray(mu, dtype=float))


class AffineCoefficient:
    """
    kappa(x; mu) = sum_q Theta_q(mu) kappa_q(x) on the cells of a mesh.

    Parameters
    ----------
    terms : List[Tuple[ThetaDescriptor, numpy.ndarray]]
        Each raster has shape ``(ny, nx)`` and strictly positive entries.
    dimension : int, optional
        Parameter dimension M. Defaults to one more than the largest component
        referenced by a descriptor.

    Examples
    --------
    >>> coeff = AffineCoefficient([(ThetaDescriptor(), analytic_periodic_field(mesh))])
    >>> kappa = eval_kappa(coeff, 0.6)
    """

    __slots__ = ("_descriptors", "_rasters", "_dimension")

    def __init__(self, terms, *, dimension=None):
        terms = list(terms)
        if not terms:
            raise ConfigurationError("a coefficient needs at least one term")
        descriptors, rasters = [], []
        shape = None
        for descriptor, raster in terms:
            raster = numpy.array(raster, dtype=float)
            raster.setflags(write=False)
            if raster.ndim != 2:
                raise ConfigurationError(f"rasters must be 2-D, got shape {raster.shape}")
            if shape is not None and raster.shape != shape:
                raise ConfigurationError(
                    f"raster shapes differ: {shape} and {raster.shape}"
                )
            if not numpy.all(numpy.isfinite(raster)) or raster.min() <= 0:
                raise ConfigurationError("rasters must be finite and strictly positive")
            shape = raster.shape
            descriptors.append(descriptor)
            rasters.append(raster)
        needed = 1 + max(d.component for d in descriptors)
        if dimension is None:
            dimension = needed
        elif dimension < needed:
            raise ConfigurationError(
                f"dimension {dimension} too small for component {needed - 1}"
            )
        self._descriptors = tuple(descriptors)
        self._rasters = tuple(rasters)
        self._dimension = int(dimension)

    @property
    def Q(self):
        "Number of affine terms."
        return len(self._rasters)

    @property
    def M(self):
        "Parameter dimension."
        return self._dimension

    @property
    def descriptors(self):
        return self._descriptors

    @property
    def rasters(self):
        "Read-only tuple of the kappa_q rasters."
        return self._rasters

    @property
    def shape(self):
        return self._rasters[0].shape

    def check_mesh(self, mesh):
        if self.shape != mesh.cell_shape:
            raise ConfigurationError(
                f"raster shape {self.shape} does not match mesh cells {mesh.cell_shape}"
            )

    def _component(self, q, mu):
        mu = as_parameter(mu)
        if len(mu) != self._dimension:
            raise InadmissibleParameter(
                f"expected a parameter of length {self._dimension}, got {len(mu)}"
            )
        return float(mu[self._descriptors[q].component])

    def theta(self, q, mu):
        "Theta_q(mu); see :func:`theta_eval`."
        value = THETA_FUNCTIONS[self._descriptors[q].theta_id].evaluate(
            self._component(q, mu)
        )
        if not value > 0:
            raise InadmissibleParameter(
                f"Theta_{q}({list(as_parameter(mu))}) = {value} is not positive"
            )
        return value

    def thetas(self, mu):
        "Array of all Theta_q(mu)."
        return numpy.array([self.theta(q, mu) for q in range(self.Q)])

    def is_admissible(self, mu):
        "True if every Theta_q(mu) > 0 on the retained branch."
        for q, descriptor in enumerate(self._descriptors):
            function = THETA_FUNCTIONS[descriptor.theta_id]
            m = self._component(q, mu)
            if not (function.domain(m) and function.evaluate(m) > 0):
                return False
        return True

    def evaluate(self, mu):
        "Cellwise kappa(x; mu); see :func:`eval_kappa`."
        thetas = self.thetas(mu)
        return sum(theta * raster for theta, raster in zip(thetas, self._rasters))

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(Q={self.Q}, M={self.M}, shape={self.shape}, "
            f"descriptors={list(self._descriptors)!r})"
        )


def theta_eval(coeff, q, mu):
    """
    Evaluate Theta_q(mu).

    Parameters
    ----------
    coeff : AffineCoefficient
    q : int
    mu : float | Sequence[float] | ParameterSample

    Returns
    -------
    theta : float

    Raises
    ------
    InadmissibleParameter
        If the value is not strictly positive.

    Examples
    --------
    With the default ``mu_plus_mu_sq`` function, ``theta_eval(coeff, 0, 0.6)``
    is ``0.96``.
    """
    if not 0 <= q < coeff.Q:
        raise IndexError(f"term {q} out of range [0, {coeff.Q})")
    return coeff.theta(q, mu)


def eval_kappa(coeff, mu):
    """
    Evaluate the cellwise permeability raster at mu.

    Returns
    -------
    raster : numpy.ndarray
        Shape ``(ny, nx)``, strictly positive.
    """
    return coeff.evaluate(mu)


def analytic_periodic_field(mesh):
    """
    The smooth oscillating field x^2 y + (3 + 2.8 sin(15 pi (x - y)))^-1.

    Sampled at fine cell centers.
    """
    X, Y = mesh.cell_centers()
    return X ** 2 * Y + 1.0 / (3.0 + 2.8 * numpy.sin(15.0 * numpy.pi * (X - Y)))


def synth_contrast_field(mesh, seed, tau, *, channels=6, inclusions=16):
    """
    A synthetic high-contrast field: background 1, channels and inclusions tau.

    Channels are straight, one or two fine cells thick, and cross the whole
    domain either horizontally or vertically. Inclusions are small rectangles.
    Placement is drawn from ``numpy.random.default_rng(seed)``.

    Parameters
    ----------
    mesh : StructuredMesh
    seed : int
    tau : float
        Contrast; ``tau == 1`` yields a constant field.
    channels : int, optional
    inclusions : int, optional

    Returns
    -------
    raster : numpy.ndarray
        Values in {1, tau}. For tau > 1 at least one cell has value tau, so
        ``raster.max() / raster.min() == tau``.
    """
    if tau < 1:
        raise ConfigurationError(f"contrast tau must be >= 1, got {tau}")
    if channels + inclusions == 0:
        raise ConfigurationError("a contrast field needs at least one channel or inclusion")
    ny, nx = mesh.cell_shape
    raster = numpy.ones((ny, nx))
    if tau == 1:
        return raster
    rng = numpy.random.default_rng(seed)
    for _ in range(channels):
        width = int(rng.integers(1, 3))
        if rng.random() < 0.5:
            row = int(rng.integers(ny // 10, ny - ny // 10 - width + 1))
            start = int(rng.integers(0, nx // 5 + 1))
            raster[row:row + width, start:] = tau
        else:
            col = int(rng.integers(nx // 10, nx - nx // 10 - width + 1))
            start = int(rng.integers(0, ny // 5 + 1))
            raster[start:, col:col + width] = tau
    for _ in range(inclusions):
        w = int(rng.integers(2, max(3, nx // 12)))
        hgt = int(rng.integers(2, max(3, ny // 12)))
        x0 = int(rng.integers(0, nx - w + 1))
        y0 = int(rng.integers(0, ny - hgt + 1))
        raster[y0:y0 + hgt, x0:x0 + w] = tau
    return raster


def sample_training_set(dimension, n_s, seed, *, coefficient=None, max_draws=None):
    """
    Draw admissible standard-normal parameter vectors.

    Each vector is drawn component-wise i.i.d. N(0, 1) and rejected until all
    Theta_q(mu) > 0 on the retained branch.

    Parameters
    ----------
    dimension : int
        Parameter dimension M.
    n_s : int
        Number of accepted samples.
    seed : int | numpy.random.Generator
    coefficient : AffineCoefficient, optional
        Supplies the admissibility rule. Without one, every component is
        subject to the ``mu_plus_mu_sq`` rule.
    max_draws : int, optional
        Bound on the number of candidate vectors. Default ``1000 * n_s``.

    Returns
    -------
    samples : List[ParameterSample]

    Raises
    ------
    SamplingError
        If fewer than n_s vectors are accepted within max_draws.
    """
    if n_s < 1:
        raise ConfigurationError(f"n_s must be >= 1, got {n_s}")
    if coefficient is not None and coefficient.M != dimension:
        raise ConfigurationError(
            f"dimension {dimension} does not match the coefficient's M={coefficient.M}"
        )
    if coefficient is None:
        rule = THETA_FUNCTIONS["mu_plus_mu_sq"]

        def admissible(mu):
            return all(rule.domain(m) and rule.evaluate(m) > 0 for m in mu)

    else:
        admissible = coefficient.is_admissible
    rng = seed if isinstance(seed, numpy.random.Generator) else numpy.random.default_rng(seed)
    max_draws = 1000 * n_s if max_draws is None else max_draws
    samples = []
    draws = 0
    while len(samples) < n_s:
        if draws >= max_draws:
            raise SamplingError(
                f"accepted only {len(samples)} of {n_s} samples in {max_draws} draws"
            )
        mu = rng.standard_normal(dimension)
        draws += 1
        if admissible(mu):
            samples.append(ParameterSample(tuple(float(m) for m in mu), TRAINING))
    logger.debug("accepted %d of %d parameter draws", n_s, draws)
    return samples


def read_raster(path):
    """
    Read a text raster: a header line ``"nx ny"`` then ny rows of nx values.

    Row 0 is the bottom row of cells.

    Returns
    -------
    raster : numpy.ndarray
        Shape ``(ny, nx)``, float64.
    """
    with open(path) as file:
        header = file.readline().split()
        try:
            nx, ny = (int(v) for v in header)
        except ValueError as err:
            raise ConfigurationError(f"bad raster header in {path}: {header!r}") from err
        values = numpy.loadtxt(file, dtype=numpy.float64, ndmin=2)
    if values.shape != (ny, nx):
        raise ConfigurationError(
            f"raster {path} declares {nx}x{ny} but holds shape {values.shape[::-1]}"
        )
    return values


def write_raster(path, raster):
    "Write a raster in the format read by :func:`read_raster`, bit-exactly."
    raster = numpy.atleast_2d(numpy.asarray(raster, dtype=numpy.float64))
    ny, nx = raster.shape
    with open(path, "w") as file:
        file.write(f"{nx} {ny}\n")
        numpy.savetxt(file, raster, fmt="%.17g")
