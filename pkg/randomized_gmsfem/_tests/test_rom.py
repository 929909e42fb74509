import dataclasses

import numpy
import pytest

from ..errors import NumericalError
from ..msbasis import LocalEigenData
from ..rom import (
    NEIGHBORHOOD,
    assemble_snapshot_matrix,
    lift,
    pod_neighborhood,
    pod_reduce,
    project,
)


def _low_rank(seed, rows=30, columns=12, rank=8):
    rng = numpy.random.default_rng(seed)
    left = rng.standard_normal((rows, rank))
    right = rng.standard_normal((rank, columns))
    return left @ numpy.diag(2.0 ** -numpy.arange(rank)) @ right


@pytest.mark.parametrize("seed", range(20))
def test_pod_matches_svd(seed):
    S = _low_rank(seed)
    pod = pod_reduce(S, 0.0)
    U, sigma, _ = numpy.linalg.svd(S, full_matrices=False)
    assert pod.rank == 8 and pod.size == 8
    numpy.testing.assert_allclose(pod.singular_values, sigma[:8], rtol=1e-8)
    signs = numpy.sign(numpy.sum(pod.vectors * U[:, :8], axis=0))
    numpy.testing.assert_allclose(pod.vectors, U[:, :8] * signs, atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("tolerance", [1e-1, 1e-3, 1e-6])
def test_pod_size_is_minimal(seed, tolerance):
    S = _low_rank(seed)
    pod = pod_reduce(S, tolerance)
    squares = numpy.linalg.svd(S, compute_uv=False) ** 2
    tails = 1 - numpy.cumsum(squares) / squares.sum()
    assert tails[pod.size - 1] <= tolerance
    if pod.size > 1:
        assert tails[pod.size - 2] > tolerance
    assert pod.tail == pytest.approx(max(tails[pod.size - 1], 0.0), abs=1e-12)
    assert pod.energy + pod.tail == pytest.approx(1.0)


@pytest.mark.parametrize("tolerance", [0.0, 1e-2, 1e-4])
def test_pod_reconstruction_bound(tolerance):
    S = _low_rank(5)
    pod = pod_reduce(S, tolerance)
    numpy.testing.assert_allclose(pod.vectors.T @ pod.vectors, numpy.eye(pod.size), atol=1e-10)
    residual = S - lift(pod, project(pod, S))
    assert numpy.sum(residual ** 2) <= (tolerance + 1e-12) * numpy.sum(S ** 2)
    if tolerance == 0.0:
        numpy.testing.assert_allclose(residual, 0.0, atol=1e-8 * numpy.abs(S).max())


def test_pod_of_rank_one_snapshots():
    column = numpy.arange(1.0, 6.0)
    S = numpy.column_stack([column * c for c in (0.5, 2.0, 3.0)])
    pod = pod_reduce(S, 1e-6)
    assert pod.size == 1
    numpy.testing.assert_allclose(numpy.abs(pod.vectors[:, 0]), column / numpy.linalg.norm(column))


def test_pod_errors():
    with pytest.raises(NumericalError):
        pod_reduce(numpy.zeros((4, 3)), 1e-6)
    with pytest.raises(ValueError):
        pod_reduce(numpy.ones((4, 3)), 1.0)
    with pytest.raises(ValueError):
        pod_reduce(numpy.ones((4, 3)), -0.1)


def _eigendata(n_samples=3, size=6, n_modes=2, neighborhood=0):
    rng = numpy.random.default_rng(1)
    return [
        LocalEigenData(
            neighborhood,
            numpy.array([0.5 + j]),
            numpy.arange(n_modes + 1.0),
            rng.standard_normal((size, n_modes)),
        )
        for j in range(n_samples)
    ]


def test_snapshot_matrix_ordering():
    data = _eigendata()
    S = assemble_snapshot_matrix(data)
    assert S.shape == (6, 6)
    numpy.testing.assert_array_equal(S[:, 0], data[0].vectors[:, 0])
    numpy.testing.assert_array_equal(S[:, 1], data[0].vectors[:, 1])
    numpy.testing.assert_array_equal(S[:, 2], data[1].vectors[:, 0])
    only = assemble_snapshot_matrix(data, modes=[1])
    numpy.testing.assert_array_equal(only, numpy.column_stack([d.vectors[:, 1] for d in data]))


def test_snapshot_matrix_rejects_mixtures():
    data = _eigendata()
    with pytest.raises(ValueError):
        assemble_snapshot_matrix(data + _eigendata(neighborhood=1))
    with pytest.raises(ValueError):
        assemble_snapshot_matrix(data + _eigendata(size=7))
    with pytest.raises(ValueError):
        assemble_snapshot_matrix(data, modes=[2])
    with pytest.raises(ValueError):
        assemble_snapshot_matrix([])


def test_pod_grouping():
    data = _eigendata()
    per_mode = pod_neighborhood(data, 0.0)
    assert [basis.modes for basis in per_mode] == [(0,), (1,)]
    assert [basis.size for basis in per_mode] == [3, 3]
    pooled = pod_neighborhood(data, 0.0, grouping=NEIGHBORHOOD)
    assert [basis.modes for basis in pooled] == [(0, 1)]
    assert pooled[0].size == 6
    with pytest.raises(ValueError):
        pod_neighborhood(data, 0.0, grouping="sample")


def _global_reconstruction(reduced):
    blocks = []
    for nodes, R in zip(reduced.nodes, reduced.reconstruction):
        block = numpy.zeros((reduced.num_nodes, R.shape[1]))
        block[nodes] = R
        blocks.append(block)
    return numpy.hstack(blocks)


def test_reduced_matrix_equals_direct_assembly(small_bundle):
    reduced = small_bundle.reduced
    operators, load = small_bundle.fine_operators()
    R = _global_reconstruction(reduced)
    for mu in (0.3, 0.6, 1.7):
        thetas = small_bundle.coefficient.thetas(mu)
        direct = R.T @ (operators.stiffness_at(mu) @ R)
        scale = numpy.abs(direct).max()
        numpy.testing.assert_allclose(reduced.matrix(thetas), direct, atol=1e-10 * scale)
        expected = R.T @ (load - operators.stiffness_at(mu) @ reduced.lift)
        numpy.testing.assert_allclose(
            reduced.rhs(thetas), expected, atol=1e-10 * numpy.abs(expected).max()
        )


def test_reduced_blocks_are_symmetric(small_bundle):
    reduced = small_bundle.reduced
    for (i, j), block in reduced.blocks.items():
        numpy.testing.assert_array_equal(block, reduced.blocks[(j, i)].transpose(0, 2, 1))
    matrix = reduced.matrix(small_bundle.coefficient.thetas(0.6))
    numpy.testing.assert_array_equal(matrix, matrix.T)


def test_reconstruction_is_conforming(small_bundle):
    reduced = small_bundle.reduced
    R = _global_reconstruction(reduced)
    assert not R[small_bundle.mesh.boundary_nodes()].any()
    coefficients = numpy.random.default_rng(0).standard_normal(R.shape[1])
    numpy.testing.assert_allclose(reduced.to_fine(coefficients), R @ coefficients, atol=1e-12)


def test_single_term_pod_has_one_vector_per_mode(small_bundle):
    "With one affine term every sample's eigenvector is a rescaling of the others."
    for bases in small_bundle.reduced.pod:
        assert [basis.size for basis in bases] == [1] * small_bundle.n_modes
    assert small_bundle.reduced.sizes == (small_bundle.n_modes,) * 9


def test_pod_group_lookup(small_bundle):
    reduced = small_bundle.reduced
    basis, offset = reduced.pod_group(4, 2)
    assert basis.modes == (2,) and offset == 2
    assert reduced.pod_vectors(4).shape[1] == 3
    with pytest.raises(KeyError):
        reduced.pod_group(4, 7)
    shrunk = dataclasses.replace(reduced, pod=[bases[:1] for bases in reduced.pod])
    with pytest.raises(KeyError):
        shrunk.pod_group(0, 1)
