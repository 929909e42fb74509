"""
POD compression of local eigenvectors and the reduced online operators.
"""
import dataclasses
import logging

import numpy
import scipy.linalg

from .errors import NumericalError
from .grid import coarse_neighbor_pairs
from .msbasis import weighted_snapshots

logger = logging.getLogger(name="randomized_gmsfem.rom")

ORTHONORMALITY_TOLERANCE = 1e-10
MODE = "mode"
NEIGHBORHOOD = "neighborhood"
POD = "pod"
SNAPSHOT = "snapshot"


@dataclasses.dataclass
class PodBasis:
    """
    Orthonormal POD vectors of one group of eigenvector snapshots.

    Attributes
    ----------
    neighborhood : int
    modes : Tuple[int]
        Eigenvector indices k whose samples formed the snapshot matrix.
    vectors : numpy.ndarray
        V, shape (L_i, N_h).
    singular_values : numpy.ndarray
        The r nonzero singular values, descending.
    tolerance : float
        epsilon of the energy criterion.
    """

    neighborhood: int
    modes: tuple
    vectors: numpy.ndarray
    singular_values: numpy.ndarray
    tolerance: float

    @property
    def size(self):
        "N_h"
        return self.vectors.shape[1]

    @property
    def rank(self):
        return len(self.singular_values)

    @property
    def energy(self):
        "I(N_h), the retained energy fraction."
        squares = self.singular_values ** 2
        return float(squares[: self.size].sum() / squares.sum())

    @property
    def tail(self):
        "1 - I(N_h)"
        squares = self.singular_values ** 2
        return float(squares[self.size:].sum() / squares.sum())

    def project(self, psi):
        return self.vectors.T @ psi

    def lift(self, xi):
        return self.vectors @ xi


def project(pod, psi):
    "Reduced coordinates V' psi."
    return pod.project(psi)


def lift(pod, xi):
    "Snapshot coordinates V xi."
    return pod.lift(xi)


def assemble_snapshot_matrix(eigendata, modes=None):
    """
    Stack eigenvectors of one neighborhood over training samples.

    Parameters
    ----------
    eigendata : Sequence[LocalEigenData]
        One entry per training sample.
    modes : Iterable[int], optional
        Eigenvector indices to include. Default: all retained ones.

    Returns
    -------
    S_n : numpy.ndarray
        Shape (L_i, len(modes) * n_s); columns ordered sample-major, then k.
    """
    eigendata = list(eigendata)
    if not eigendata:
        raise ValueError("no eigendata given")
    lengths = {item.vectors.shape[0] for item in eigendata}
    if len(lengths) != 1:
        raise ValueError(f"eigendata disagree on the snapshot count: {sorted(lengths)}")
    neighborhoods = {item.neighborhood for item in eigendata}
    if len(neighborhoods) != 1:
        raise ValueError(f"eigendata mix neighborhoods {sorted(neighborhoods)}")
    if modes is None:
        modes = range(min(item.n_modes for item in eigendata))
    modes = list(modes)
    for item in eigendata:
        if modes and max(modes) >= item.n_modes:
            raise ValueError(
                f"mode {max(modes)} requested but only {item.n_modes} are stored"
            )
    return numpy.column_stack([item.vectors[:, k] for item in eigendata for k in modes])


def pod_reduce(snapshots, tolerance, *, neighborhood=-1, modes=()):
    """
    POD by the method of snapshots.

    The correlation matrix C = S' S is eigendecomposed, left vectors are formed
    as S delta_j / sigma_j, and the smallest N_h with I(N_h) >= 1 - tolerance is
    kept. The vectors are re-orthonormalized by QR if rounding spoiled V'V = I.

    Parameters
    ----------
    snapshots : numpy.ndarray
        S_n, shape (n_h, n_v).
    tolerance : float
        epsilon in [0, 1).
    neighborhood : int, optional
    modes : Tuple[int], optional
        Recorded on the result.

    Returns
    -------
    pod : PodBasis
    """
    if not 0 <= tolerance < 1:
        raise ValueError(f"POD tolerance must lie in [0, 1), got {tolerance}")
    S = numpy.asarray(snapshots, dtype=float)
    if not numpy.any(S):
        raise NumericalError(f"all-zero snapshot matrix (neighborhood {neighborhood})")
    correlation = S.T @ S
    eigenvalues, delta = scipy.linalg.eigh(correlation)
    eigenvalues, delta = eigenvalues[::-1], delta[:, ::-1]
    cutoff = eigenvalues[0] * max(S.shape) * numpy.finfo(float).eps
    rank = int(numpy.count_nonzero(eigenvalues > cutoff))
    eigenvalues = eigenvalues[:rank]
    sigma = numpy.sqrt(eigenvalues)
    # tails[n] = sum_{j > n} sigma_j^2 / sum_j sigma_j^2 for N_h = n + 1
    tails = numpy.append(numpy.cumsum(eigenvalues[::-1])[::-1][1:], 0.0) / eigenvalues.sum()
    size = int(numpy.flatnonzero(tails <= tolerance)[0]) + 1
    V = S @ delta[:, :size] / sigma[:size]
    if numpy.abs(V.T @ V - numpy.eye(size)).max() > ORTHONORMALITY_TOLERANCE:
        Q, R = scipy.linalg.qr(V, mode="economic")
        V = Q * numpy.sign(numpy.diag(R))
    logger.debug(
        "POD of neighborhood %d modes %s: N_h=%d of r=%d, tail %.3e",
        neighborhood,
        list(modes),
        size,
        rank,
        tails[size - 1],
    )
    return PodBasis(neighborhood, tuple(modes), V, sigma, float(tolerance))


def pod_neighborhood(eigendata, tolerance, *, grouping=MODE):
    """
    POD bases of one neighborhood.

    With ``grouping="mode"`` each eigenvector index k gets its own basis; with
    ``grouping="neighborhood"`` a single basis spans all k.

    Returns
    -------
    bases : List[PodBasis]
    """
    n_modes = min(item.n_modes for item in eigendata)
    index = eigendata[0].neighborhood
    if grouping == MODE:
        groups = [(k,) for k in range(n_modes)]
    elif grouping == NEIGHBORHOOD:
        groups = [tuple(range(n_modes))]
    else:
        raise ValueError(f"unknown POD grouping {grouping!r}")
    return [
        pod_reduce(
            assemble_snapshot_matrix(eigendata, modes), tolerance, neighborhood=index, modes=modes
        )
        for modes in groups
    ]


@dataclasses.dataclass
class ReducedOperators:
    """
    Offline reduced operators in the coordinates of R~ = D_chi R_snap V.

    Attributes
    ----------
    num_nodes : int
        Fine node count.
    coordinates : str
        ``"pod"`` (R~ includes V) or ``"snapshot"`` (R~ = D_chi R_snap).
    nodes : List[numpy.ndarray]
        Global fine nodes of each neighborhood.
    reconstruction : List[numpy.ndarray]
        R~_i restricted to those nodes, shape (n_local_i, n_i).
    blocks : Dict[Tuple[int, int], numpy.ndarray]
        For overlapping neighborhoods, R~_i' A_q R~_j stacked over q, shape
        (Q, n_i, n_j). Block (j, i) is the transpose of block (i, j).
    load : List[numpy.ndarray]
        R~_i' F.
    lift_coupling : List[numpy.ndarray]
        R~_i' A_q g stacked over q, shape (Q, n_i).
    lift : numpy.ndarray
        The Dirichlet lift g over all fine nodes.
    pod : List[List[PodBasis]]
        POD bases of each neighborhood in column order.
    """

    num_nodes: int
    coordinates: str
    nodes: list
    reconstruction: list
    blocks: dict
    load: list
    lift_coupling: list
    lift: numpy.ndarray
    pod: list

    @property
    def Q(self):
        return self.lift_coupling[0].shape[0]

    @property
    def num_neighborhoods(self):
        return len(self.nodes)

    @property
    def sizes(self):
        "Column count n_i of each R~_i."
        return tuple(R.shape[1] for R in self.reconstruction)

    def pod_vectors(self, i):
        "V_i, the POD bases of neighborhood i side by side."
        return numpy.hstack([basis.vectors for basis in self.pod[i]])

    def pod_group(self, i, k):
        """
        Return (basis, offset) of the POD basis holding eigenvector k of
        neighborhood i, with ``offset`` its first column inside V_i.
        """
        offset = 0
        for basis in self.pod[i]:
            if k in basis.modes:
                return basis, offset
            offset += basis.size
        raise KeyError(f"neighborhood {i} has no POD basis for mode {k}")

    def matrix(self, thetas):
        "sum_q Theta_q R~' A_q R~ as a dense array over all columns."
        offsets = numpy.concatenate([[0], numpy.cumsum(self.sizes)])
        total = numpy.zeros((offsets[-1], offsets[-1]))
        for (i, j), block in self.blocks.items():
            total[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = numpy.tensordot(
                thetas, block, axes=1
            )
        return total

    def rhs(self, thetas):
        "F^ - sum_q Theta_q G^_q over all columns."
        return numpy.concatenate(
            [F - thetas @ G for F, G in zip(self.load, self.lift_coupling)]
        )

    def to_fine(self, coefficients):
        "Fine-node field sum_i R~_i c_i, without the lift."
        values = numpy.zeros(self.num_nodes)
        start = 0
        for nodes, R in zip(self.nodes, self.reconstruction):
            values[nodes] += R @ coefficients[start:start + R.shape[1]]
            start += R.shape[1]
        return values


def reduce_operators(mesh, stiffness, load, snapshots, pou, pod, lift, *, coordinates=POD):
    """
    Precompute the Q block sets of R~' A_q R~ and the reduced load vectors.

    Parameters
    ----------
    mesh : StructuredMesh
    stiffness : List[scipy.sparse.spmatrix]
        Fine A_q.
    load : numpy.ndarray
        Fine load vector F.
    snapshots : List[SnapshotSpace]
        One per neighborhood, in coarse node order.
    pou : PartitionOfUnity
    pod : List[List[PodBasis]]
        One list per neighborhood.
    lift : numpy.ndarray
        Fine Dirichlet lift g.
    coordinates : {"pod", "snapshot"}

    Returns
    -------
    reduced : ReducedOperators
    """
    if coordinates not in (POD, SNAPSHOT):
        raise ValueError(f"unknown reduced coordinates {coordinates!r}")
    if len(snapshots) != mesh.num_coarse_nodes or len(pod) != mesh.num_coarse_nodes:
        raise ValueError(
            f"expected artifacts for {mesh.num_coarse_nodes} neighborhoods, got "
            f"{len(snapshots)} snapshot spaces and {len(pod)} POD sets"
        )
    nodes, reconstruction = [], []
    for space, bases in zip(snapshots, pod):
        weighted = weighted_snapshots(pou, space)
        if coordinates == POD:
            weighted = weighted @ numpy.hstack([basis.vectors for basis in bases])
        nodes.append(space.neighborhood.nodes)
        reconstruction.append(weighted)
    stiffness = [A.tocsr() for A in stiffness]
    blocks = {}
    for i, j in coarse_neighbor_pairs(mesh):
        if j < i:
            continue
        block = numpy.stack(
            [
                reconstruction[i].T @ (A[nodes[i]][:, nodes[j]] @ reconstruction[j])
                for A in stiffness
            ]
        )
        blocks[(i, j)] = block
        if i != j:
            blocks[(j, i)] = block.transpose(0, 2, 1)
        else:
            blocks[(i, i)] = 0.5 * (block + block.transpose(0, 2, 1))
    coupled = [A @ lift for A in stiffness]
    reduced_load = [R.T @ load[n] for n, R in zip(nodes, reconstruction)]
    lift_coupling = [
        numpy.stack([R.T @ Ag[n] for Ag in coupled]) for n, R in zip(nodes, reconstruction)
    ]
    logger.info(
        "reduced operators in %s coordinates: %d columns, %d blocks",
        coordinates,
        sum(R.shape[1] for R in reconstruction),
        len(blocks),
    )
    return ReducedOperators(
        mesh.num_nodes,
        coordinates,
        nodes,
        reconstruction,
        dict(sorted(blocks.items())),
        reduced_load,
        lift_coupling,
        numpy.asarray(lift, dtype=float),
        [list(bases) for bases in pod],
    )
