"""
Experiment configuration.

A configuration is a JSON object. ``problem`` selects a preset whose values
fill in every key the object leaves out:

``periodic``
    The smooth oscillating field times mu + mu^2 on a 100x100 / 5x5 grid,
    with the smooth source and boundary data (``source`` and ``boundary``
    equal to ``"smooth"``).
``case1``, ``case2``, ``case3``
    One, two, or four synthetic high-contrast fields (tau = 1e4), each scaled
    by its own parameter component, with the same source and boundary data.
``custom``
    No preset; ``coefficient`` must be given.
"""
import dataclasses
import json
import math
import numbers
import typing

import numpy

from ..coefficient import (
    THETA_FUNCTIONS,
    AffineCoefficient,
    ThetaDescriptor,
    analytic_periodic_field,
    read_raster,
    synth_contrast_field,
)
from ..errors import ConfigurationError
from ..grid import build_mesh

PERIODIC = "periodic"
SMOOTH = "smooth"
PROBLEMS = (PERIODIC, "case1", "case2", "case3", "custom")
BUILTIN_FIELDS = ("periodic", "contrast", "constant")
PREDICTORS = ("gpc", "gpr", "both")


def smooth_source(x, y):
    "pi^2 (2 + y) sin(pi x) sin(pi y) + 2 pi^2 x cos(pi x) cos(pi y)"
    pi = numpy.pi
    sines = numpy.sin(pi * x) * numpy.sin(pi * y)
    cosines = numpy.cos(pi * x) * numpy.cos(pi * y)
    return pi ** 2 * (2 + y) * sines + 2 * pi ** 2 * x * cosines


def smooth_boundary(x, y):
    "sin(pi x) sin(pi y) + y + 0.1"
    return numpy.sin(numpy.pi * x) * numpy.sin(numpy.pi * y) + y + 0.1


def _contrast_terms(count):
    return [
        {"theta_id": "mu_plus_mu_sq", "component": q, "builtin_field": "contrast", "seed": q + 1}
        for q in range(count)
    ]


PRESETS = {
    PERIODIC: {
        "coefficient": [{"theta_id": "mu_plus_mu_sq", "component": 0, "builtin_field": "periodic"}],
        "mu_online": [[0.6]],
    },
    "case1": {"coefficient": _contrast_terms(1), "mu_online": [[0.6]]},
    "case2": {"coefficient": _contrast_terms(2), "mu_online": [[0.6, 0.6]]},
    "case3": {"coefficient": _contrast_terms(4), "mu_online": [[0.6, 0.6, 0.6, 0.6]]},
    "custom": {},
}


@dataclasses.dataclass(frozen=True)
class CoefficientTerm:
    """
    One affine term: Theta_q and the raster kappa_q it multiplies.

    Exactly one of ``raster_path`` and ``builtin_field`` is set. ``seed``,
    ``tau``, ``channels`` and ``inclusions`` apply to the ``contrast`` field,
    ``value`` to ``constant``.
    """

    theta_id: str = "mu_plus_mu_sq"
    component: int = 0
    raster_path: typing.Optional[str] = None
    builtin_field: typing.Optional[str] = None
    seed: int = 0
    tau: float = 1e4
    channels: int = 6
    inclusions: int = 16
    value: float = 1.0

    def __post_init__(self):
        if (self.raster_path is None) == (self.builtin_field is None):
            raise ConfigurationError(
                "a coefficient term needs exactly one of raster_path and builtin_field"
            )
        if self.builtin_field is not None and self.builtin_field not in BUILTIN_FIELDS:
            raise ConfigurationError(
                f"unknown builtin_field {self.builtin_field!r}; expected one of {BUILTIN_FIELDS}"
            )
        if self.theta_id not in THETA_FUNCTIONS:
            raise ConfigurationError(f"unknown theta_id {self.theta_id!r}")
        for name in ("channels", "inclusions"):
            count = getattr(self, name)
            if not (_is_int(count) and count >= 0):
                raise ConfigurationError(f"{name} must be an integer >= 0, got {count!r}")
        if self.channels + self.inclusions == 0:
            raise ConfigurationError("a contrast field needs at least one channel or inclusion")

    def raster(self, mesh):
        if self.raster_path is not None:
            return read_raster(self.raster_path)
        if self.builtin_field == "periodic":
            return analytic_periodic_field(mesh)
        if self.builtin_field == "contrast":
            return synth_contrast_field(
                mesh, self.seed, self.tau, channels=self.channels, inclusions=self.inclusions
            )
        return numpy.full(mesh.cell_shape, float(self.value))


def _check(condition, message):
    if not condition:
        raise ConfigurationError(message)


def _is_int(value):
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool) and math.isfinite(value)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything needed to reproduce an offline and online run.

    Build instances with :meth:`from_dict` or :func:`load_config`, which
    validate every field and apply the preset named by ``problem``.
    """

    problem: str = PERIODIC
    nx: int = 100
    ny: int = 100
    Nx: int = 5
    Ny: int = 5
    coefficient: typing.Tuple[CoefficientTerm, ...] = ()
    source: typing.Union[str, float] = SMOOTH
    boundary: typing.Union[str, float] = SMOOTH
    n_samples: int = 50
    seed: int = 0
    degree: int = 3
    pod_tolerance: float = 1e-6
    pod_grouping: str = "mode"
    coordinates: str = "pod"
    n_basis: int = 5
    predictor: str = "both"
    mu_online: typing.Tuple[typing.Tuple[float, ...], ...] = ()
    reference_mu: typing.Optional[typing.Tuple[float, ...]] = None
    output_dir: str = "gmsfem-output"
    workers: int = 1
    timing_repetitions: int = 10

    @classmethod
    def from_dict(cls, mapping):
        """
        Validate a plain mapping (as parsed from JSON) and build a config.

        Raises
        ------
        ConfigurationError
            On unknown keys, wrong types, or out-of-range values.
        """
        if not isinstance(mapping, dict):
            raise ConfigurationError(f"a config must be a JSON object, not {type(mapping).__name__}")
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        _check(not unknown, f"unknown config keys: {unknown}")
        problem = mapping.get("problem", PERIODIC)
        _check(problem in PROBLEMS, f"unknown problem {problem!r}; expected one of {PROBLEMS}")
        values = dict(PRESETS[problem], **mapping)

        for name in ("nx", "ny", "Nx", "Ny", "n_samples", "n_basis", "workers", "timing_repetitions"):
            if name in values:
                _check(_is_int(values[name]) and values[name] >= 1, f"{name} must be an integer >= 1")
        for name in ("seed", "degree"):
            if name in values:
                _check(_is_int(values[name]) and values[name] >= 0, f"{name} must be an integer >= 0")
        if "pod_tolerance" in values:
            tolerance = values["pod_tolerance"]
            _check(
                _is_number(tolerance) and 0 <= tolerance < 1, "pod_tolerance must lie in [0, 1)"
            )
            values["pod_tolerance"] = float(tolerance)
        for name, choices in [
            ("pod_grouping", ("mode", "neighborhood")),
            ("coordinates", ("pod", "snapshot")),
            ("predictor", PREDICTORS),
        ]:
            if name in values:
                _check(values[name] in choices, f"{name} must be one of {choices}")
        for name in ("source", "boundary"):
            if name in values:
                value = values[name]
                _check(
                    value == SMOOTH or _is_number(value),
                    f"{name} must be {SMOOTH!r} or a number",
                )
        if "output_dir" in values:
            _check(isinstance(values["output_dir"], str), "output_dir must be a string")

        terms = values.get("coefficient", ())
        _check(
            isinstance(terms, (list, tuple)) and len(terms) > 0,
            "coefficient must be a non-empty list of terms",
        )
        term_fields = {field.name for field in dataclasses.fields(CoefficientTerm)}
        parsed = []
        for term in terms:
            if isinstance(term, CoefficientTerm):
                parsed.append(term)
                continue
            _check(isinstance(term, dict), "coefficient terms must be objects")
            extra = sorted(set(term) - term_fields)
            _check(not extra, f"unknown coefficient term keys: {extra}")
            _check(
                _is_int(term.get("component", 0)) and term.get("component", 0) >= 0,
                "component must be an integer >= 0",
            )
            parsed.append(CoefficientTerm(**term))
        values["coefficient"] = tuple(parsed)
        dimension = 1 + max(term.component for term in parsed)

        values["mu_online"] = tuple(
            _parameter(mu, dimension, "mu_online") for mu in values.get("mu_online", ())
        )
        if values.get("reference_mu") is not None:
            values["reference_mu"] = _parameter(values["reference_mu"], dimension, "reference_mu")

        config = cls(**values)
        build_mesh(config.nx, config.ny, config.Nx, config.Ny)
        return config

    @property
    def dimension(self):
        "Parameter dimension M."
        return 1 + max(term.component for term in self.coefficient)

    def to_dict(self):
        "A JSON-serializable copy that :meth:`from_dict` maps back to this config."
        values = dataclasses.asdict(self)
        values["coefficient"] = [dataclasses.asdict(term) for term in self.coefficient]
        values["mu_online"] = [list(mu) for mu in self.mu_online]
        if self.reference_mu is not None:
            values["reference_mu"] = list(self.reference_mu)
        return values

    def replace(self, **changes):
        "A validated copy with some fields changed."
        return type(self).from_dict(dict(self.to_dict(), **changes))

    def build_mesh(self):
        return build_mesh(self.nx, self.ny, self.Nx, self.Ny)

    def build_coefficient(self, mesh):
        coefficient = AffineCoefficient(
            [
                (ThetaDescriptor(term.theta_id, term.component), term.raster(mesh))
                for term in self.coefficient
            ],
            dimension=self.dimension,
        )
        coefficient.check_mesh(mesh)
        return coefficient

    def source_function(self):
        if self.source == SMOOTH:
            return smooth_source
        value = float(self.source)
        return lambda x, y: numpy.full(numpy.broadcast(x, y).shape, value)

    def boundary_data(self):
        "Callable p(x, y) or a constant, as accepted by dirichlet_lift."
        return smooth_boundary if self.boundary == SMOOTH else float(self.boundary)


def _parameter(mu, dimension, name):
    if _is_number(mu):
        mu = [mu]
    _check(
        isinstance(mu, (list, tuple)) and all(_is_number(m) for m in mu),
        f"{name} entries must be lists of numbers",
    )
    _check(len(mu) == dimension, f"{name} entries must have length {dimension}, got {len(mu)}")
    return tuple(float(m) for m in mu)


def load_config(path, **overrides):
    """
    Read a JSON config file.

    Parameters
    ----------
    path : str | Path
    **overrides
        Values taking precedence over the file, e.g. ``seed`` or ``workers``
        from the command line. ``None`` values are ignored.

    Returns
    -------
    config : ExperimentConfig
    """
    try:
        with open(path) as file:
            mapping = json.load(file)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config {path} is not valid JSON: {err}") from err
    if isinstance(mapping, dict):
        mapping.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.from_dict(mapping)
