"""
The online stage: predicted basis coefficients, a small Galerkin solve, and
reconstruction on the fine grid. Also the full GMsFEM recomputation used as
the comparison baseline.
"""
import dataclasses
import logging
import time

import numpy
import scipy.linalg
import scipy.sparse

from .coefficient import as_parameter
from .errors import ArtifactError, DegenerateBasisError
from .fem import FineOperators, assemble_load, dirichlet_lift
from .msbasis import (
    build_pou,
    build_snapshots,
    local_spectral,
    neighborhood_operators,
    offline_basis,
)
from .rom import SNAPSHOT

logger = logging.getLogger(name="randomized_gmsfem.online")

CHOLESKY_JITTER = 1e-12
DEPENDENCE_TOLERANCE = 1e-10


@dataclasses.dataclass
class OnlineSpace:
    """
    Predicted coefficient matrices C_on^i, one per neighborhood.

    Attributes
    ----------
    mu : numpy.ndarray
    columns : List[numpy.ndarray]
        C_on^i, shape (n_i, l_i), in the coordinates of the reduced operators.
    layout : Tuple[Tuple[int, int]]
        (i, k) of every global column, neighborhood-major.
    elapsed : float
        Seconds spent evaluating predictors.
    """

    mu: numpy.ndarray
    columns: list
    layout: tuple
    elapsed: float = 0.0

    @property
    def num_columns(self):
        "N_v = sum_i l_i"
        return len(self.layout)

    def truncate(self, n_modes):
        "The space spanned by the first n_modes columns of each neighborhood."
        if any(C.shape[1] < n_modes for C in self.columns):
            raise ValueError(f"cannot truncate to {n_modes} modes per neighborhood")
        return OnlineSpace(
            self.mu,
            [C[:, :n_modes] for C in self.columns],
            tuple((i, k) for i, k in self.layout if k < n_modes),
            self.elapsed,
        )


def build_online_space(predictor, reduced, mu, *, n_modes=None):
    """
    Fill C_on from predictor evaluations at mu; no eigenproblem is solved.

    Parameters
    ----------
    predictor : GpcPredictor | GprPredictor
        Keys are (neighborhood, mode) pairs.
    reduced : ReducedOperators
    mu : float | Sequence[float]
    n_modes : int, optional
        Basis functions per neighborhood. Default: all predicted modes.

    Raises
    ------
    ArtifactError
        If predictor outputs do not match the reduced operators.
    """
    mu = as_parameter(mu)
    t0 = time.monotonic()
    predicted = predictor.predict(mu)
    counts = [0] * reduced.num_neighborhoods
    for i, k in predicted:
        if not 0 <= i < reduced.num_neighborhoods:
            raise ArtifactError(f"predictor neighborhood {i} not in the reduced operators")
        counts[i] = max(counts[i], k + 1)
    if n_modes is not None:
        if any(c < n_modes for c in counts):
            raise ArtifactError(f"predictors hold fewer than {n_modes} modes per neighborhood")
        counts = [n_modes] * len(counts)
    columns, layout = [], []
    for i, (count, size) in enumerate(zip(counts, reduced.sizes)):
        pod_columns = sum(basis.size for basis in reduced.pod[i])
        C = numpy.zeros((pod_columns, count))
        for k in range(count):
            try:
                basis, offset = reduced.pod_group(i, k)
                xi = predicted[(i, k)]
            except KeyError as err:
                raise ArtifactError(f"no prediction for neighborhood {i} mode {k}") from err
            if len(xi) != basis.size:
                raise ArtifactError(
                    f"prediction for ({i}, {k}) has {len(xi)} entries, POD basis has {basis.size}"
                )
            C[offset:offset + basis.size, k] = xi
            layout.append((i, k))
        if reduced.coordinates == SNAPSHOT:
            C = reduced.pod_vectors(i) @ C
        if C.shape[0] != size:
            raise ArtifactError(
                f"online columns of neighborhood {i} have {C.shape[0]} rows, expected {size}"
            )
        columns.append(C)
    return OnlineSpace(mu, columns, tuple(layout), time.monotonic() - t0)


@dataclasses.dataclass
class CoarseSolution:
    """
    Attributes
    ----------
    coefficients : numpy.ndarray
        Coefficients over the online basis.
    values : numpy.ndarray
        Fine-node field, Dirichlet lift included.
    mu : numpy.ndarray
    timings : dict
        Wall-clock seconds for ``predict``, ``assemble`` and ``solve``.
    method : str
    """

    coefficients: numpy.ndarray
    values: numpy.ndarray
    mu: numpy.ndarray
    timings: dict
    method: str = "online"


def _dependent_columns(matrix):
    scale = numpy.sqrt(numpy.abs(numpy.diag(matrix)))
    scale[scale == 0] = 1.0
    normalized = matrix / numpy.outer(scale, scale)
    values, vectors = scipy.linalg.eigh(normalized)
    small = values <= DEPENDENCE_TOLERANCE * max(values[-1], 1.0)
    if not numpy.any(small):
        small[0] = True
    weights = numpy.abs(vectors[:, small]).max(axis=1)
    return sorted(int(c) for c in numpy.flatnonzero(weights > 0.1))


def galerkin_solve(matrix, rhs, *, layout=None):
    """
    Solve a symmetric positive definite coarse system by dense Cholesky.

    A diagonal jitter of 1e-12 trace is applied if the first factorization fails.

    Raises
    ------
    DegenerateBasisError
        If the jittered system is still not positive definite. The error lists
        the near-dependent columns, as (i, k) pairs when ``layout`` is given.
    """
    if matrix.shape[0] == 0:
        return numpy.zeros(0)
    try:
        factor = scipy.linalg.cho_factor(matrix, lower=True)
    except numpy.linalg.LinAlgError:
        jitter = CHOLESKY_JITTER * numpy.trace(matrix)
        logger.warning("coarse system not positive definite; adding jitter %.3e", jitter)
        try:
            factor = scipy.linalg.cho_factor(matrix + jitter * numpy.eye(len(matrix)), lower=True)
        except numpy.linalg.LinAlgError as err:
            columns = _dependent_columns(matrix)
            if layout is not None:
                columns = [layout[c] for c in columns]
            raise DegenerateBasisError(
                f"coarse system is singular; near-dependent columns {columns}",
                columns=columns,
            ) from err
    return scipy.linalg.cho_solve(factor, rhs)


def solve_online(reduced, space, coeff, mu):
    """
    Assemble sum_q Theta_q C' A^_q C from cached blocks and solve.

    Parameters
    ----------
    reduced : ReducedOperators
    space : OnlineSpace
    coeff : AffineCoefficient
        Supplies Theta_q only; nothing is assembled on the fine grid.
    mu : float | Sequence[float]

    Returns
    -------
    solution : CoarseSolution
    """
    mu = as_parameter(mu)
    t0 = time.monotonic()
    thetas = coeff.thetas(mu)
    counts = [C.shape[1] for C in space.columns]
    offsets = numpy.concatenate([[0], numpy.cumsum(counts)])
    matrix = numpy.zeros((offsets[-1], offsets[-1]))
    for (i, j), block in reduced.blocks.items():
        combined = numpy.tensordot(thetas, block, axes=1)
        matrix[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = (
            space.columns[i].T @ combined @ space.columns[j]
        )
    rhs = numpy.concatenate(
        [
            C.T @ (F - thetas @ G)
            for C, F, G in zip(space.columns, reduced.load, reduced.lift_coupling)
        ]
    )
    t1 = time.monotonic()
    coefficients = galerkin_solve(matrix, rhs, layout=space.layout)
    values = reduced.lift.copy()
    for i, (nodes, R) in enumerate(zip(reduced.nodes, reduced.reconstruction)):
        values[nodes] += R @ (space.columns[i] @ coefficients[offsets[i]:offsets[i + 1]])
    t2 = time.monotonic()
    timings = {"predict": space.elapsed, "assemble": t1 - t0, "solve": t2 - t1}
    logger.debug("online solve at mu=%s with %d columns: %s", list(mu), len(rhs), timings)
    return CoarseSolution(coefficients, values, mu, timings)


def online_basis(reduced, space):
    "The online basis vectors R~ C_on over all fine nodes, shape (num_nodes, N_v)."
    columns = []
    for nodes, R, C in zip(reduced.nodes, reduced.reconstruction, space.columns):
        block = numpy.zeros((reduced.num_nodes, C.shape[1]))
        block[nodes] = R @ C
        columns.append(block)
    return numpy.hstack(columns)


def gmsfem_basis(mesh, coeff, mu, n_modes, *, pou=None):
    """
    Multiscale basis recomputed from scratch at mu.

    Returns
    -------
    basis : scipy.sparse.csc_matrix
        Shape (num_nodes, num_coarse_nodes * n_modes), neighborhood-major.
    eigendata : List[LocalEigenData]
    """
    mu = as_parameter(mu)
    if pou is None:
        pou = build_pou(mesh, coeff, mu)
    blocks, eigendata = [], []
    for nb in mesh.neighborhoods():
        operators = neighborhood_operators(mesh, coeff, nb)
        snapshots = build_snapshots(mesh, coeff, mu, nb, operators=operators)
        data = local_spectral(
            snapshots, operators.stiffness, operators.mass, coeff.thetas(mu), n_modes, mu=mu
        )
        eigendata.append(data)
        blocks.append(scipy.sparse.csc_matrix(offline_basis(pou, snapshots, data)))
    return scipy.sparse.hstack(blocks, format="csc"), eigendata


def gmsfem_reference_solve(mesh, coeff, mu, n_modes, f, p, *, operators=None, load=None):
    """
    GMsFEM without predictors: snapshots, partition of unity and local
    eigenproblems are all recomputed at mu, then a Galerkin solve follows.

    Parameters
    ----------
    mesh : StructuredMesh
    coeff : AffineCoefficient
    mu : float | Sequence[float]
    n_modes : int
        l, basis functions per neighborhood.
    f : Callable
    p : Callable | float
    operators : FineOperators, optional
    load : numpy.ndarray, optional

    Returns
    -------
    solution : CoarseSolution
        Timings: ``predict`` is basis construction, ``assemble`` the Galerkin
        projection, ``solve`` the coarse solve and reconstruction.
    """
    mu = as_parameter(mu)
    if operators is None:
        operators = FineOperators.assemble(mesh, coeff)
    if load is None:
        load = assemble_load(mesh, f)
    lift = dirichlet_lift(mesh, p)
    t0 = time.monotonic()
    basis, eigendata = gmsfem_basis(mesh, coeff, mu, n_modes)
    t1 = time.monotonic()
    A = operators.stiffness_at(mu)
    matrix = (basis.T @ (A @ basis)).toarray()
    matrix = 0.5 * (matrix + matrix.T)
    rhs = basis.T @ (load - A @ lift)
    t2 = time.monotonic()
    layout = tuple((i, k) for i in range(mesh.num_coarse_nodes) for k in range(n_modes))
    coefficients = galerkin_solve(matrix, rhs, layout=layout)
    values = lift + basis @ coefficients
    t3 = time.monotonic()
    timings = {"predict": t1 - t0, "assemble": t2 - t1, "solve": t3 - t2}
    logger.debug("GMsFEM reference at mu=%s, l=%d: %s", list(mu), n_modes, timings)
    return CoarseSolution(coefficients, values, mu, timings, method="gmsfem")
