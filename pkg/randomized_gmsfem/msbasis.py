"""
Local multiscale machinery of the offline stage.

For every coarse neighborhood this module builds the harmonic-extension
snapshot space, solves the local generalized eigenvalue problem in it, and
multiplies the resulting eigenfunctions by the multiscale partition of unity.
All local arrays are indexed like ``CoarseNeighborhood.nodes``.
"""
import dataclasses
import logging

import numpy
import scipy.linalg
import scipy.sparse.linalg

from .coefficient import as_parameter
from .errors import ConfigurationError, NumericalError, NumericalRankError
from .fem import assemble_cellwise, element_mass, element_stiffness
from .utils import instrument

logger = logging.getLogger(name="randomized_gmsfem.msbasis")

CHOLESKY_JITTER = 1e-12
BRANCH_SWAP_OVERLAP = 0.5
# Eigenvalues closer than this (relative) span one eigenspace.
CLUSTER_RTOL = 1e-6
CLUSTER_MARGIN = 4
SIGN_TIE_RTOL = 1e-8
CANONICAL_SEED = 20240229


@dataclasses.dataclass
class LocalOperators:
    """
    Per-term operators restricted to one neighborhood.

    Integrals run over the cells of the neighborhood only, so rows of boundary
    nodes differ from the corresponding rows of the global matrices.

    Attributes
    ----------
    stiffness : List[scipy.sparse.csr_matrix]
        int_{omega_i} kappa_q grad(phi_a) . grad(phi_b)
    mass : List[scipy.sparse.csr_matrix]
        int_{omega_i} kappa_q H^-2 phi_a phi_b
    """

    neighborhood: object
    stiffness: list
    mass: list


def neighborhood_operators(mesh, coeff, nb):
    "Assemble :class:`LocalOperators` of every affine term on neighborhood nb."
    Ke = element_stiffness(mesh.h, mesh.hy)
    Me = element_mass(mesh.h, mesh.hy)
    cells = nb.box.cells
    stiffness = [assemble_cellwise(r[cells], Ke) for r in coeff.rasters]
    mass = [assemble_cellwise(r[cells] / mesh.H ** 2, Me) for r in coeff.rasters]
    return LocalOperators(nb, stiffness, mass)


def _combine(thetas, matrices):
    total = thetas[0] * matrices[0]
    for theta, matrix in zip(thetas[1:], matrices[1:]):
        total = total + theta * matrix
    return total


def _harmonic_extension(K, boundary, interior, data):
    """
    Columns equal to ``data`` on ``boundary`` and K-harmonic on ``interior``.
    """
    values = numpy.zeros((K.shape[0], data.shape[1]))
    values[boundary] = data
    if len(interior):
        K = K.tocsr()
        K_II = K[interior][:, interior].tocsc()
        K_IB = K[interior][:, boundary]
        try:
            lu = scipy.sparse.linalg.splu(K_II)
        except RuntimeError as err:
            raise NumericalError(f"local Dirichlet problem is singular: {err}") from err
        values[interior] = lu.solve(-(K_IB @ data))
    instrument.increment(instrument.LOCAL_SOLVE)
    return values


@dataclasses.dataclass
class SnapshotSpace:
    """
    Harmonic extensions of discrete delta functions on a neighborhood boundary.

    Attributes
    ----------
    neighborhood : CoarseNeighborhood
    basis : numpy.ndarray
        R_snap restricted to the neighborhood nodes, shape (n_local, L_i).
        Column j is 1 at ``neighborhood.boundary[j]``, 0 at the other boundary
        nodes, and discretely kappa-harmonic inside.
    mu : numpy.ndarray
        Parameter at which kappa was evaluated.
    """

    neighborhood: object
    basis: numpy.ndarray
    mu: numpy.ndarray

    @property
    def size(self):
        "L_i"
        return self.basis.shape[1]


def build_snapshots(mesh, coeff, mu, nb, *, operators=None):
    """
    Build the snapshot space of neighborhood nb at parameter mu.

    Parameters
    ----------
    mesh : StructuredMesh
    coeff : AffineCoefficient
    mu : float | Sequence[float]
    nb : CoarseNeighborhood
    operators : LocalOperators, optional
        Reused if given.

    Returns
    -------
    snapshots : SnapshotSpace
    """
    mu = as_parameter(mu)
    if operators is None:
        operators = neighborhood_operators(mesh, coeff, nb)
    K = _combine(coeff.thetas(mu), operators.stiffness)
    L = nb.num_snapshots
    basis = _harmonic_extension(K, nb.local_boundary, nb.local_interior, numpy.eye(L))
    return SnapshotSpace(nb, basis, mu)


class PartitionOfUnity:
    """
    Multiscale hat functions chi_i from kappa-harmonic coarse-cell problems.

    Parameters
    ----------
    mesh : StructuredMesh
    mu : numpy.ndarray
        Reference parameter of the cell problems.
    functions : List[numpy.ndarray]
        chi_i restricted to the nodes of neighborhood i.
    """

    __slots__ = ("mesh", "mu", "_functions")

    def __init__(self, mesh, mu, functions):
        self.mesh = mesh
        self.mu = mu
        self._functions = tuple(functions)

    def __getitem__(self, i):
        "chi_i on the nodes of neighborhood i."
        return self._functions[i]

    def __len__(self):
        return len(self._functions)

    def to_fine(self, i):
        "chi_i as a vector over all fine nodes."
        values = numpy.zeros(self.mesh.num_nodes)
        values[self.mesh.neighborhood(i).nodes] = self._functions[i]
        return values

    def total(self):
        "sum_i chi_i over all fine nodes."
        values = numpy.zeros(self.mesh.num_nodes)
        for i, chi in enumerate(self._functions):
            values[self.mesh.neighborhood(i).nodes] += chi
        return values


def build_pou(mesh, coeff, mu_ref):
    """
    Solve the four cell problems of every coarse cell and glue them into chi_i.

    On each coarse cell K, chi_i solves -div(kappa grad chi) = 0 with boundary
    data equal to the bilinear hat of coarse node i (1 at x_i, 0 at the other
    corners, linear on the edges).

    Parameters
    ----------
    mesh : StructuredMesh
    coeff : AffineCoefficient
    mu_ref : float | Sequence[float]
        Reference parameter.

    Returns
    -------
    pou : PartitionOfUnity
    """
    mu_ref = as_parameter(mu_ref)
    thetas = coeff.thetas(mu_ref)
    Ke = element_stiffness(mesh.h, mesh.hy)
    functions = [numpy.zeros(len(nb.nodes)) for nb in mesh.neighborhoods()]
    xy = mesh.node_coordinates()
    for cy in range(mesh.Ny):
        for cx in range(mesh.Nx):
            box = mesh.coarse_cell_box(cx, cy)
            K = _combine(thetas, [assemble_cellwise(r[box.cells], Ke) for r in coeff.rasters])
            nodes = box.nodes()
            perimeter = box.perimeter()
            interior = numpy.setdiff1d(numpy.arange(len(nodes)), perimeter)
            corners = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)]
            x, y = xy[nodes[perimeter], 0], xy[nodes[perimeter], 1]
            data = numpy.column_stack(
                [
                    numpy.clip(1 - numpy.abs(x - I * mesh.H) / mesh.H, 0, 1)
                    * numpy.clip(1 - numpy.abs(y - J * mesh.Hy) / mesh.Hy, 0, 1)
                    for I, J in corners
                ]
            )
            values = _harmonic_extension(K, perimeter, interior, data)
            for column, (I, J) in enumerate(corners):
                i = J * (mesh.Nx + 1) + I
                nb = mesh.neighborhood(i)
                functions[i][_local_positions(mesh, nb, nodes)] = values[:, column]
    return PartitionOfUnity(mesh, mu_ref, functions)


def _local_positions(mesh, nb, nodes):
    "Positions of global ``nodes`` inside ``nb.nodes`` (all must be members)."
    ix, iy = nodes % (mesh.nx + 1), nodes // (mesh.nx + 1)
    width = nb.box.ix1 - nb.box.ix0 + 1
    return (iy - nb.box.iy0) * width + (ix - nb.box.ix0)


def _on_domain_boundary(mesh, nb):
    ix, iy = nb.nodes % (mesh.nx + 1), nb.nodes // (mesh.nx + 1)
    return (ix == 0) | (ix == mesh.nx) | (iy == 0) | (iy == mesh.ny)


def weighted_snapshots(pou, snapshots):
    """
    D_chi R_snap: snapshot columns multiplied nodewise by chi_i.

    Rows at nodes on the domain boundary are zero, so every column is a
    conforming H^1_0 function.
    """
    nb = snapshots.neighborhood
    weighted = pou[nb.index][:, None] * snapshots.basis
    weighted[_on_domain_boundary(pou.mesh, nb)] = 0.0
    return weighted


@dataclasses.dataclass
class LocalEigenData:
    """
    Smallest eigenpairs of the snapshot-space pencil of one neighborhood.

    Attributes
    ----------
    neighborhood : int
    mu : numpy.ndarray
    eigenvalues : numpy.ndarray
        Ascending, length ``n_modes + 1``; the last one is lambda_{l_i + 1}.
    vectors : numpy.ndarray
        Shape (L_i, n_modes), s-orthonormal and sign-aligned.
    jitter : float
        Diagonal shift applied to S^off (0 when none was needed).
    """

    neighborhood: int
    mu: numpy.ndarray
    eigenvalues: numpy.ndarray
    vectors: numpy.ndarray
    jitter: float = 0.0

    @property
    def n_modes(self):
        return self.vectors.shape[1]

    @property
    def gap(self):
        "lambda_{l_i + 1}"
        return float(self.eigenvalues[self.n_modes])


def align_signs(vectors):
    """
    Flip columns so their largest-magnitude entry is positive.

    Entries within a relative 1e-8 of the largest magnitude count as ties, and
    ties go to the lowest index, so mirrored entries of a symmetric vector do
    not trade places under rounding. The operation is idempotent.
    """
    vectors = numpy.array(vectors, dtype=float)
    if vectors.ndim == 1:
        return align_signs(vectors[:, None])[:, 0]
    magnitude = numpy.abs(vectors)
    near_max = magnitude >= (1 - SIGN_TIE_RTOL) * magnitude.max(axis=0)
    rows = numpy.argmax(near_max, axis=0)
    signs = numpy.sign(vectors[rows, numpy.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigenvalue_clusters(eigenvalues):
    """
    Split ascending eigenvalues into runs of numerically equal values.

    Neighbors a <= b share a run when b - a <= 1e-6 max(|a|, |b|) plus a floor
    of 1e-14 times the largest magnitude.

    Returns
    -------
    clusters : List[numpy.ndarray]
        Index arrays, in order.
    """
    eigenvalues = numpy.asarray(eigenvalues, dtype=float)
    if len(eigenvalues) == 0:
        return []
    magnitude = numpy.abs(eigenvalues)
    floor = 1e-14 * magnitude.max()
    pair_scale = numpy.maximum(magnitude[:-1], magnitude[1:])
    breaks = numpy.flatnonzero(numpy.diff(eigenvalues) > CLUSTER_RTOL * pair_scale + floor) + 1
    return numpy.split(numpy.arange(len(eigenvalues)), breaks)


def canonical_basis(y):
    """
    An orthonormal basis of span(y) that does not depend on the choice of y.

    Fixed generic vectors are projected onto the span and orthonormalized in
    order, with positive diagonal in the triangular factor. Any orthonormal
    y with the same span gives the same result.
    """
    directions = numpy.random.default_rng(CANONICAL_SEED).standard_normal(y.shape)
    q, r = scipy.linalg.qr(y @ (y.T @ directions), mode="economic")
    signs = numpy.sign(numpy.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _closed_eigh(standard, n_modes):
    """
    Smallest eigenpairs of ``standard`` through index n_modes, extended until
    no eigenvalue cluster reaching index n_modes is cut off.
    """
    size = standard.shape[0]
    top = min(size - 1, n_modes + CLUSTER_MARGIN)
    while True:
        eigenvalues, y = scipy.linalg.eigh(standard, subset_by_index=[0, top])
        clusters = eigenvalue_clusters(eigenvalues)
        if top == size - 1 or clusters[-1][0] > n_modes:
            return eigenvalues, y, clusters
        top = min(size - 1, 2 * top + 1)


def solve_pencil(a, s, n_modes):
    """
    The n_modes + 1 smallest eigenpairs of the dense pencil a x = lambda s x.

    S is factored by Cholesky, the pencil is reduced to a standard symmetric
    problem, and eigenvectors are mapped back so that X' s X = I. Inside a
    cluster of repeated eigenvalues the vectors are replaced by
    :func:`canonical_basis`, so they depend on the eigenspace only and a
    rescaled pencil returns the same directions.

    Returns
    -------
    eigenvalues : numpy.ndarray
        Length n_modes + 1, ascending.
    vectors : numpy.ndarray
        Shape (len(a), n_modes + 1), sign-aligned.
    jitter : float

    Raises
    ------
    NumericalRankError
        If s is not positive definite even after a jitter of 1e-12 trace(s).
    """
    a = numpy.asarray(a, dtype=float)
    s = numpy.asarray(s, dtype=float)
    size = a.shape[0]
    if not 0 <= n_modes < size:
        raise ValueError(f"need n_modes + 1 <= {size}, got n_modes={n_modes}")
    jitter = 0.0
    try:
        chol = scipy.linalg.cholesky(s, lower=True)
    except numpy.linalg.LinAlgError:
        jitter = CHOLESKY_JITTER * numpy.trace(s)
        logger.warning("mass pencil not positive definite; adding jitter %.3e", jitter)
        try:
            chol = scipy.linalg.cholesky(s + jitter * numpy.eye(size), lower=True)
        except numpy.linalg.LinAlgError as err:
            raise NumericalRankError(
                "snapshot mass matrix is numerically rank deficient"
            ) from err
    half = scipy.linalg.solve_triangular(chol, a, lower=True)
    standard = scipy.linalg.solve_triangular(chol, half.T, lower=True)
    standard = 0.5 * (standard + standard.T)
    eigenvalues, y, clusters = _closed_eigh(standard, n_modes)
    for cluster in clusters:
        if len(cluster) > 1 and cluster[0] <= n_modes:
            y[:, cluster] = canonical_basis(y[:, cluster])
    vectors = scipy.linalg.solve_triangular(chol.T, y[:, : n_modes + 1], lower=False)
    instrument.increment(instrument.EIGENSOLVE)
    return eigenvalues[: n_modes + 1], align_signs(vectors), jitter


def project_operators(snapshots, operators):
    "R_snap' K_q R_snap for each local operator K_q, as dense arrays."
    R = snapshots.basis
    return [R.T @ (K @ R) for K in operators]


def local_spectral(snapshots, stiffness, mass, thetas, n_modes, *, mu=None, projected=False):
    """
    Solve the local spectral problem A^off Psi = lambda S^off Psi.

    Parameters
    ----------
    snapshots : SnapshotSpace
    stiffness, mass : List
        Per-term local operators (see :func:`neighborhood_operators`), or, with
        ``projected=True``, per-term matrices already in snapshot coordinates
        (see :func:`project_operators`).
    thetas : Sequence[float]
        Theta_q(mu).
    n_modes : int
        l_i, the number of retained eigenpairs.
    mu : numpy.ndarray, optional
        Recorded on the result.
    projected : bool, optional

    Returns
    -------
    eigendata : LocalEigenData
    """
    if not projected:
        stiffness = project_operators(snapshots, stiffness)
        mass = project_operators(snapshots, mass)
    a = _combine(thetas, stiffness)
    s = _combine(thetas, mass)
    if n_modes + 1 > snapshots.size:
        raise ConfigurationError(
            f"neighborhood {snapshots.neighborhood.index} has {snapshots.size} snapshots; "
            f"cannot retain {n_modes} modes plus a gap eigenvalue"
        )
    eigenvalues, vectors, jitter = solve_pencil(a, s, n_modes)
    return LocalEigenData(
        snapshots.neighborhood.index,
        snapshots.mu if mu is None else as_parameter(mu),
        eigenvalues,
        vectors[:, :n_modes],
        jitter,
    )


def offline_basis(pou, snapshots, eigendata):
    """
    Multiscale basis functions chi_i * phi_k over all fine nodes.

    Returns
    -------
    basis : numpy.ndarray
        Shape (num_nodes, n_modes); zero outside the neighborhood and on the
        domain boundary.
    """
    nb = snapshots.neighborhood
    local = weighted_snapshots(pou, snapshots) @ eigendata.vectors
    basis = numpy.zeros((pou.mesh.num_nodes, eigendata.n_modes))
    basis[nb.nodes] = local
    return basis


def spectral_gap(eigendata, n_modes=None):
    """
    Lambda_* = min over neighborhoods and samples of lambda_{l_i + 1}.

    Parameters
    ----------
    eigendata : Iterable[LocalEigenData]
    n_modes : int, optional
        Evaluate the gap for a smaller l than was computed.
    """
    gaps = []
    for item in eigendata:
        index = item.n_modes if n_modes is None else n_modes
        if index > item.n_modes:
            raise ValueError(f"eigendata holds only {item.n_modes} modes, not {index}")
        gaps.append(float(item.eigenvalues[index]))
    if not gaps:
        raise ValueError("no eigendata given")
    return min(gaps)


def detect_branch_swaps(eigendata, mass, coeff):
    """
    Flag eigenvectors that no longer resemble those of the first sample.

    Parameters
    ----------
    eigendata : Sequence[LocalEigenData]
        One neighborhood, several training samples.
    mass : List[numpy.ndarray]
        Per-term mass matrices in snapshot coordinates.
    coeff : AffineCoefficient

    Returns
    -------
    flags : List[Tuple[int, int, float]]
        (sample index, mode index, normalized s-overlap) for every overlap
        below 0.5. Flags are reported only, not corrected.
    """
    flags = []
    first = eigendata[0].vectors
    for j, item in enumerate(eigendata[1:], start=1):
        s = _combine(coeff.thetas(item.mu), mass)
        for k in range(min(item.n_modes, first.shape[1])):
            a, b = item.vectors[:, k], first[:, k]
            overlap = abs(a @ s @ b) / numpy.sqrt((a @ s @ a) * (b @ s @ b))
            if overlap < BRANCH_SWAP_OVERLAP:
                flags.append((j, k, float(overlap)))
    return flags
