"""
Offline and online drivers and the experiments built on them.
"""
import concurrent.futures
import dataclasses
import logging
import os
import time

import numpy

from ..artifacts import (
    load_manifest,
    load_neighborhood,
    load_predictor,
    load_reduced,
    save_manifest,
    save_neighborhood,
    save_predictor,
    save_reduced,
)
from ..coefficient import ParameterSample, as_parameter, sample_training_set
from ..errors import ConfigurationError, GmsfemError, InadmissibleParameter
from ..fem import (
    FineOperators,
    assemble_load,
    dirichlet_lift,
    energy_norm,
    solve_fine,
    weighted_l2_norm,
)
from ..msbasis import (
    PartitionOfUnity,
    SnapshotSpace,
    build_pou,
    build_snapshots,
    detect_branch_swaps,
    local_spectral,
    neighborhood_operators,
    project_operators,
    spectral_gap,
)
from ..online import build_online_space, gmsfem_reference_solve, solve_online
from ..predict import GPC, GPR, fit_gpc, fit_gpr
from ..rom import pod_neighborhood, reduce_operators
from ..utils import instrument
from ..utils.event import EmitterGroup, Event
from .config import ExperimentConfig

logger = logging.getLogger(name="randomized_gmsfem.harness.runner")

FEM = "fem"
GMSFEM = "gmsfem"


def method_name(kind):
    "Report label of a predictor-based solve, e.g. ``gpc-gmsfem``."
    return f"{kind}-{GMSFEM}"


@dataclasses.dataclass
class ArtifactBundle:
    """
    Everything the offline stage produces.

    ``operators`` and ``load`` are the fine-grid operators used to build the
    bundle. They are not persisted; a loaded bundle has them as None until a
    comparison against the fine solve needs them.
    """

    config: ExperimentConfig
    mesh: object
    coefficient: object
    samples: list
    reference_mu: numpy.ndarray
    snapshots: list
    pou: PartitionOfUnity
    eigendata: list
    reduced: object
    predictors: dict
    diagnostics: dict
    operators: object = None
    load: object = None

    @property
    def n_modes(self):
        return min(item.n_modes for items in self.eigendata for item in items)

    def fine_operators(self):
        "Fine operators and load vector, assembled on first use."
        if self.operators is None:
            self.operators = FineOperators.assemble(self.mesh, self.coefficient)
        if self.load is None:
            self.load = assemble_load(self.mesh, self.config.source_function())
        return self.operators, self.load


def _reraise(err, where):
    "Re-raise a package error with the failing location in its message."
    try:
        new = type(err)(f"{err} ({where})")
    except TypeError:
        raise err
    raise new from err


class OfflineBuilder:
    """
    Runs the offline stage and reports progress through events.

    Events
    ------
    started(num_neighborhoods, num_samples)
    neighborhood_completed(index, eigenvalues)
    sample_completed(neighborhood, sample)
    completed(bundle)

    Examples
    --------
    >>> builder = OfflineBuilder(config)
    >>> builder.events.neighborhood_completed.connect(lambda event: print(event.index))
    >>> bundle = builder.build()
    """

    def __init__(self, config):
        self.config = config
        self.events = EmitterGroup(
            source=self,
            started=Event,
            neighborhood_completed=Event,
            sample_completed=Event,
            completed=Event,
        )

    def _neighborhood(self, mesh, coefficient, reference_mu, samples, nb):
        try:
            operators = neighborhood_operators(mesh, coefficient, nb)
            snapshots = build_snapshots(mesh, coefficient, reference_mu, nb, operators=operators)
            stiffness = project_operators(snapshots, operators.stiffness)
            mass = project_operators(snapshots, operators.mass)
        except GmsfemError as err:
            _reraise(err, f"neighborhood {nb.index}")
        eigendata = []
        for j, sample in enumerate(samples):
            try:
                eigendata.append(
                    local_spectral(
                        snapshots,
                        stiffness,
                        mass,
                        coefficient.thetas(sample.mu),
                        self.config.n_basis,
                        mu=sample.mu,
                        projected=True,
                    )
                )
            except GmsfemError as err:
                _reraise(err, f"neighborhood {nb.index}, sample {j}")
        return snapshots, mass, eigendata

    def build(self):
        """
        Execute the offline stage.

        Returns
        -------
        bundle : ArtifactBundle
        """
        config = self.config
        mesh = config.build_mesh()
        coefficient = config.build_coefficient(mesh)
        samples = sample_training_set(
            config.dimension, config.n_samples, config.seed, coefficient=coefficient
        )
        if config.reference_mu is None:
            reference_mu = numpy.median([s.array for s in samples], axis=0)
        else:
            reference_mu = as_parameter(config.reference_mu)
        if not coefficient.is_admissible(reference_mu):
            raise InadmissibleParameter(f"reference parameter {list(reference_mu)} is inadmissible")
        logger.info(
            "offline stage: %s, %d samples, l=%d, reference mu %s",
            mesh,
            len(samples),
            config.n_basis,
            list(reference_mu),
        )
        self.events.started(num_neighborhoods=mesh.num_coarse_nodes, num_samples=len(samples))

        operators = FineOperators.assemble(mesh, coefficient)
        load = assemble_load(mesh, config.source_function())
        lift = dirichlet_lift(mesh, config.boundary_data())
        pou = build_pou(mesh, coefficient, reference_mu)

        snapshots, eigendata, pod, swaps = [], [], [], {}
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as executor:
            results = executor.map(
                lambda nb: self._neighborhood(mesh, coefficient, reference_mu, samples, nb),
                mesh.neighborhoods(),
            )
            for nb, (space, mass, items) in zip(mesh.neighborhoods(), results):
                for j in range(len(items)):
                    self.events.sample_completed(neighborhood=nb.index, sample=j)
                bases = pod_neighborhood(items, config.pod_tolerance, grouping=config.pod_grouping)
                flags = detect_branch_swaps(items, mass, coefficient)
                if flags:
                    swaps[nb.index] = flags
                    logger.warning(
                        "neighborhood %d: %d suspected eigenvector branch swaps", nb.index, len(flags)
                    )
                logger.debug(
                    "neighborhood %d: L=%d, POD sizes %s",
                    nb.index,
                    space.size,
                    [basis.size for basis in bases],
                )
                self.events.neighborhood_completed(
                    index=nb.index, eigenvalues=numpy.array([item.eigenvalues for item in items])
                )
                snapshots.append(space)
                eigendata.append(items)
                pod.append(bases)

        gap = spectral_gap(item for items in eigendata for item in items)
        tails = [basis.tail for bases in pod for basis in bases]
        logger.info(
            "spectral gap %.6g; POD sizes %d..%d, max tail %.3e",
            gap,
            min(b.size for bases in pod for b in bases),
            max(b.size for bases in pod for b in bases),
            max(tails),
        )

        targets = {}
        for i, (items, bases) in enumerate(zip(eigendata, pod)):
            for k in range(config.n_basis):
                basis = next(b for b in bases if k in b.modes)
                targets[(i, k)] = numpy.array([basis.project(item.vectors[:, k]) for item in items])
        predictors = {}
        kinds = [GPC, GPR] if config.predictor == "both" else [config.predictor]
        for kind in kinds:
            try:
                if kind == GPC:
                    predictors[kind] = fit_gpc(samples, targets, config.degree)
                else:
                    predictors[kind] = fit_gpr(samples, targets)
            except GmsfemError as err:
                _reraise(err, f"{kind} predictor")

        reduced = reduce_operators(
            mesh,
            operators.stiffness,
            load,
            snapshots,
            pou,
            pod,
            lift,
            coordinates=config.coordinates,
        )
        diagnostics = {
            "spectral_gap": gap,
            "pod_sizes": [[b.size for b in bases] for bases in pod],
            "pod_tail": max(tails),
            "branch_swaps": {str(i): [list(f) for f in flags] for i, flags in swaps.items()},
        }
        if GPC in predictors:
            diagnostics["gpc_residual"] = float(
                max(r.max() for r in predictors[GPC].residuals.values())
            )
        bundle = ArtifactBundle(
            config,
            mesh,
            coefficient,
            samples,
            reference_mu,
            snapshots,
            pou,
            eigendata,
            reduced,
            predictors,
            diagnostics,
            operators,
            load,
        )
        self.events.completed(bundle=bundle)
        return bundle


def run_offline(config, directory=None):
    """
    Run the offline stage and, if ``directory`` is given, persist it there.

    Returns
    -------
    bundle : ArtifactBundle
    """
    bundle = OfflineBuilder(config).build()
    if directory is not None:
        save_bundle(bundle, directory)
    return bundle


def save_bundle(bundle, directory):
    "Write all artifacts of a bundle into ``directory``."
    os.makedirs(directory, exist_ok=True)
    for space, items in zip(bundle.snapshots, bundle.eigendata):
        save_neighborhood(directory, space, bundle.pou[space.neighborhood.index], items)
    save_reduced(directory, bundle.reduced)
    for kind, predictor in bundle.predictors.items():
        save_predictor(directory, predictor, seed=bundle.config.seed)
    save_manifest(
        directory,
        {
            "config": bundle.config.to_dict(),
            "samples": [list(sample.mu) for sample in bundle.samples],
            "reference_mu": [float(m) for m in bundle.reference_mu],
            "seed": bundle.config.seed,
            "predictors": sorted(bundle.predictors),
            "diagnostics": bundle.diagnostics,
        },
    )
    logger.info("offline artifacts written to %s", directory)


def load_bundle(directory):
    """
    Load a bundle written by :func:`save_bundle`.

    The mesh and coefficient rasters are rebuilt from the stored config; no
    fine-grid operator is assembled.
    """
    manifest = load_manifest(directory)
    config = ExperimentConfig.from_dict(manifest["config"])
    mesh = config.build_mesh()
    coefficient = config.build_coefficient(mesh)
    reference_mu = numpy.asarray(manifest["reference_mu"], dtype=float)
    snapshots, chis, eigendata = [], [], []
    for nb in mesh.neighborhoods():
        arrays, items = load_neighborhood(directory, nb.index)
        snapshots.append(SnapshotSpace(nb, arrays["snapshots"], arrays["snapshot_mu"]))
        chis.append(arrays["chi"])
        eigendata.append(items)
    return ArtifactBundle(
        config,
        mesh,
        coefficient,
        [ParameterSample(tuple(mu), "training") for mu in manifest["samples"]],
        reference_mu,
        snapshots,
        PartitionOfUnity(mesh, reference_mu, chis),
        eigendata,
        load_reduced(directory),
        {kind: load_predictor(directory, kind) for kind in manifest["predictors"]},
        manifest["diagnostics"],
    )


@dataclasses.dataclass
class ErrorReport:
    """
    Rows of relative errors and timings, one per (mu*, method).

    Attributes
    ----------
    rows : List[dict]
        Keys ``mu``, ``method``, ``l2_rel``, ``energy_rel`` (None without a
        fine reference), ``t_predict_s``, ``t_assemble_s``, ``t_solve_s``.
    solutions : Dict[Tuple[int, str], numpy.ndarray]
        Fine-node fields keyed by (mu index, method).
    diagnostics : dict
        Spectral gap, POD tail 1 - I(N_h), gPC residuals, basis count.
    config : ExperimentConfig
    """

    rows: list
    solutions: dict
    diagnostics: dict
    config: ExperimentConfig

    def row(self, method, mu_index=0):
        "The row of ``method`` for the mu_index-th parameter."
        return [r for r in self.rows if r["method"] == method][mu_index]


def _relative_errors(mesh, coefficient, mu, reference, values, operators):
    "Relative weighted L2 and energy errors of values against the fine reference."
    difference = values - reference
    norms = [weighted_l2_norm, energy_norm]
    return tuple(
        norm(mesh, coefficient, mu, difference, operators=operators)
        / norm(mesh, coefficient, mu, reference, operators=operators)
        for norm in norms
    )


def _row(mu, method, errors, timings):
    l2, energy = errors if errors is not None else (None, None)
    return {
        "mu": [float(m) for m in mu],
        "method": method,
        "l2_rel": l2,
        "energy_rel": energy,
        "t_predict_s": timings.get("predict", 0.0),
        "t_assemble_s": timings.get("assemble", 0.0),
        "t_solve_s": timings.get("solve", 0.0),
    }


def _kinds(bundle, predictor):
    if predictor is None or predictor == "both":
        return sorted(bundle.predictors)
    if predictor not in bundle.predictors:
        raise ConfigurationError(
            f"no {predictor} predictor in the artifacts; available: {sorted(bundle.predictors)}"
        )
    return [predictor]


def _check_mu(bundle, mu):
    mu = as_parameter(mu)
    if not bundle.coefficient.is_admissible(mu):
        raise InadmissibleParameter(f"online parameter {list(mu)} is inadmissible")
    return mu


def run_online(bundle, mus, *, compare=False, predictor=None, n_modes=None):
    """
    Predictor-based online solves at each mu*.

    Parameters
    ----------
    bundle : ArtifactBundle
    mus : Sequence
        Parameters mu*.
    compare : bool, optional
        Also solve on the fine grid and with the recomputed GMsFEM basis, and
        fill in relative errors against the fine solve.
    predictor : {"gpc", "gpr", "both"}, optional
        Default: every predictor in the bundle.
    n_modes : int, optional
        Basis functions per neighborhood, at most the offline count.

    Returns
    -------
    report : ErrorReport
    """
    n_modes = bundle.n_modes if n_modes is None else n_modes
    kinds = _kinds(bundle, predictor)
    rows, solutions = [], {}
    if compare:
        operators, load = bundle.fine_operators()
    for index, mu in enumerate(mus):
        mu = _check_mu(bundle, mu)
        logger.info("online stage at mu=%s", list(mu))
        reference = None
        if compare:
            fine = solve_fine(
                bundle.mesh,
                bundle.coefficient,
                mu,
                bundle.config.source_function(),
                bundle.config.boundary_data(),
                operators=operators,
                load=load,
            )
            reference = fine.values
            rows.append(
                _row(
                    mu,
                    FEM,
                    (0.0, 0.0),
                    {"assemble": fine.info["t_assemble_s"], "solve": fine.info["t_solve_s"]},
                )
            )
            solutions[(index, FEM)] = fine.values
            gmsfem = gmsfem_reference_solve(
                bundle.mesh,
                bundle.coefficient,
                mu,
                n_modes,
                bundle.config.source_function(),
                bundle.config.boundary_data(),
                operators=operators,
                load=load,
            )
            errors = _relative_errors(
                bundle.mesh, bundle.coefficient, mu, reference, gmsfem.values, operators
            )
            rows.append(_row(mu, GMSFEM, errors, gmsfem.timings))
            solutions[(index, GMSFEM)] = gmsfem.values
        for kind in kinds:
            space = build_online_space(bundle.predictors[kind], bundle.reduced, mu, n_modes=n_modes)
            solution = solve_online(bundle.reduced, space, bundle.coefficient, mu)
            errors = None
            if compare:
                errors = _relative_errors(
                    bundle.mesh, bundle.coefficient, mu, reference, solution.values, operators
                )
            rows.append(_row(mu, method_name(kind), errors, solution.timings))
            solutions[(index, method_name(kind))] = solution.values
    diagnostics = {
        "spectral_gap": bundle.diagnostics.get("spectral_gap"),
        "pod_tail": bundle.diagnostics.get("pod_tail"),
        "gpc_residual": bundle.diagnostics.get("gpc_residual"),
        "n_modes": n_modes,
    }
    return ErrorReport(rows, solutions, diagnostics, bundle.config)


def run_reference(config, mus, *, n_modes=None):
    """
    Fine and GMsFEM solves at each mu* without any offline artifacts.

    Returns
    -------
    report : ErrorReport
    """
    mesh = config.build_mesh()
    coefficient = config.build_coefficient(mesh)
    operators = FineOperators.assemble(mesh, coefficient)
    load = assemble_load(mesh, config.source_function())
    n_modes = config.n_basis if n_modes is None else n_modes
    rows, solutions = [], {}
    for index, mu in enumerate(mus):
        mu = as_parameter(mu)
        if not coefficient.is_admissible(mu):
            raise InadmissibleParameter(f"parameter {list(mu)} is inadmissible")
        fine = solve_fine(
            mesh,
            coefficient,
            mu,
            config.source_function(),
            config.boundary_data(),
            operators=operators,
            load=load,
        )
        gmsfem = gmsfem_reference_solve(
            mesh,
            coefficient,
            mu,
            n_modes,
            config.source_function(),
            config.boundary_data(),
            operators=operators,
            load=load,
        )
        rows.append(
            _row(
                mu,
                FEM,
                (0.0, 0.0),
                {"assemble": fine.info["t_assemble_s"], "solve": fine.info["t_solve_s"]},
            )
        )
        errors = _relative_errors(mesh, coefficient, mu, fine.values, gmsfem.values, operators)
        rows.append(_row(mu, GMSFEM, errors, gmsfem.timings))
        solutions[(index, FEM)] = fine.values
        solutions[(index, GMSFEM)] = gmsfem.values
    return ErrorReport(rows, solutions, {"n_modes": n_modes}, config)


def sweep_basis(bundle, mu, n_max=None, *, predictor=GPC, reference=False):
    """
    Errors of the online solve for l = 1 .. n_max basis functions per node.

    Parameters
    ----------
    bundle : ArtifactBundle
    mu : float | Sequence[float]
    n_max : int, optional
        Default: the offline basis count.
    predictor : str, optional
    reference : bool, optional
        Also record the errors of the recomputed GMsFEM basis.

    Returns
    -------
    rows : List[dict]
        Keys ``l``, ``dof`` (l times the number of coarse nodes), ``l2_rel``,
        ``energy_rel``, and with ``reference`` also ``gmsfem_l2_rel`` and
        ``gmsfem_energy_rel``.
    """
    n_max = bundle.n_modes if n_max is None else n_max
    if not 1 <= n_max <= bundle.n_modes:
        raise ConfigurationError(
            f"lmax must lie in [1, {bundle.n_modes}], the offline basis count; got {n_max}"
        )
    [kind] = _kinds(bundle, predictor)
    mu = _check_mu(bundle, mu)
    operators, load = bundle.fine_operators()
    f, p = bundle.config.source_function(), bundle.config.boundary_data()
    fine = solve_fine(bundle.mesh, bundle.coefficient, mu, f, p, operators=operators, load=load)
    space = build_online_space(bundle.predictors[kind], bundle.reduced, mu, n_modes=n_max)
    rows = []
    for n in range(1, n_max + 1):
        solution = solve_online(bundle.reduced, space.truncate(n), bundle.coefficient, mu)
        l2, energy = _relative_errors(
            bundle.mesh, bundle.coefficient, mu, fine.values, solution.values, operators
        )
        row = {"l": n, "dof": n * bundle.mesh.num_coarse_nodes, "l2_rel": l2, "energy_rel": energy}
        if reference:
            gmsfem = gmsfem_reference_solve(
                bundle.mesh, bundle.coefficient, mu, n, f, p, operators=operators, load=load
            )
            row["gmsfem_l2_rel"], row["gmsfem_energy_rel"] = _relative_errors(
                bundle.mesh, bundle.coefficient, mu, fine.values, gmsfem.values, operators
            )
        logger.info("sweep l=%d: L2 %.4e, energy %.4e", n, l2, energy)
        rows.append(row)
    return rows


def compare_timing(bundle, mus, n_modes_list, repetitions=None, *, predictor=GPC):
    """
    Mean wall-clock time of the predictor online stage against a full GMsFEM
    recomputation.

    One warm-up run of each is discarded; the mean is taken over
    ``repetitions`` monotonic-clock measurements per (mu*, l).

    Returns
    -------
    rows : List[dict]
        Keys ``l``, ``online_s``, ``gmsfem_s``, ``ratio`` (GMsFEM over online),
        and ``online_eigensolves``, which must be 0.
    """
    repetitions = bundle.config.timing_repetitions if repetitions is None else repetitions
    if repetitions < 1:
        raise ConfigurationError(f"repetitions must be >= 1, got {repetitions}")
    [kind] = _kinds(bundle, predictor)
    operators, load = bundle.fine_operators()
    f, p = bundle.config.source_function(), bundle.config.boundary_data()
    mus = [_check_mu(bundle, mu) for mu in mus]

    def online(mu, n):
        space = build_online_space(bundle.predictors[kind], bundle.reduced, mu, n_modes=n)
        return solve_online(bundle.reduced, space, bundle.coefficient, mu)

    def gmsfem(mu, n):
        return gmsfem_reference_solve(
            bundle.mesh, bundle.coefficient, mu, n, f, p, operators=operators, load=load
        )

    def mean_time(function, n):
        total = 0.0
        for mu in mus:
            function(mu, n)
            for _ in range(repetitions):
                t0 = time.monotonic()
                function(mu, n)
                total += time.monotonic() - t0
        return total / (repetitions * len(mus))

    rows = []
    for n in n_modes_list:
        with instrument.counting() as delta:
            online_s = mean_time(online, n)
        gmsfem_s = mean_time(gmsfem, n)
        rows.append(
            {
                "l": n,
                "online_s": online_s,
                "gmsfem_s": gmsfem_s,
                "ratio": gmsfem_s / online_s if online_s > 0 else float("inf"),
                "online_eigensolves": delta[instrument.EIGENSOLVE],
            }
        )
        logger.info("timing l=%d: online %.4gs, GMsFEM %.4gs", n, online_s, gmsfem_s)
    return rows


def predictor_variability(config, seeds, mu, *, n_modes=None):
    """
    Rerun the offline stage for several training seeds and tabulate the gPC
    online errors at mu, next to the seed-independent GMsFEM error.

    Returns
    -------
    rows : List[dict]
        Keys ``seed``, ``l2_rel``, ``energy_rel``, ``gmsfem_l2_rel``,
        ``gmsfem_energy_rel``.
    summary : dict
        Mean and standard deviation of the gPC errors over seeds.
    """
    if not seeds:
        raise ConfigurationError("need at least one seed")
    config = config.replace(predictor=GPC)
    rows = []
    reference = None
    for seed in seeds:
        bundle = run_offline(config.replace(seed=int(seed)))
        report = run_online(bundle, [mu], compare=reference is None, n_modes=n_modes)
        if reference is None:
            reference = report.row(GMSFEM)
            fine = report.solutions[(0, FEM)]
            gpc_row = report.row(method_name(GPC))
            errors = (gpc_row["l2_rel"], gpc_row["energy_rel"])
        else:
            operators, _ = bundle.fine_operators()
            errors = _relative_errors(
                bundle.mesh,
                bundle.coefficient,
                as_parameter(mu),
                fine,
                report.solutions[(0, method_name(GPC))],
                operators,
            )
        rows.append(
            {
                "seed": int(seed),
                "l2_rel": errors[0],
                "energy_rel": errors[1],
                "gmsfem_l2_rel": reference["l2_rel"],
                "gmsfem_energy_rel": reference["energy_rel"],
            }
        )
    l2 = numpy.array([row["l2_rel"] for row in rows])
    energy = numpy.array([row["energy_rel"] for row in rows])
    summary = {
        "l2_mean": float(l2.mean()),
        "l2_std": float(l2.std()),
        "energy_mean": float(energy.mean()),
        "energy_std": float(energy.std()),
    }
    return rows, summary
