import numpy
import pytest
import scipy.linalg

from ..coefficient import AffineCoefficient, ThetaDescriptor
from ..errors import ConfigurationError, NumericalRankError
from ..msbasis import (
    align_signs,
    build_pou,
    build_snapshots,
    canonical_basis,
    detect_branch_swaps,
    eigenvalue_clusters,
    local_spectral,
    neighborhood_operators,
    offline_basis,
    project_operators,
    solve_pencil,
    spectral_gap,
    weighted_snapshots,
)
from ..utils import instrument


def _random_pencil(rng, size):
    X = rng.standard_normal((size, size))
    Y = rng.standard_normal((size, size))
    return X @ X.T + 0.1 * numpy.eye(size), Y @ Y.T + size * numpy.eye(size)


def _brute_force(a, s):
    "Eigenpairs of inv(s) a, rescaled to unit s-norm and sorted."
    values, vectors = numpy.linalg.eig(numpy.linalg.solve(s, a))
    order = numpy.argsort(values.real)
    values, vectors = values.real[order], vectors.real[:, order]
    norms = numpy.sqrt(numpy.einsum("ij,ik,kj->j", vectors, s, vectors))
    return values, vectors / norms


def test_partition_of_unity(small_mesh, periodic_coefficient):
    pou = build_pou(small_mesh, periodic_coefficient, 0.6)
    assert len(pou) == small_mesh.num_coarse_nodes
    numpy.testing.assert_allclose(pou.total(), 1.0, atol=1e-12)
    domain_boundary = small_mesh.boundary_nodes()
    for i in range(small_mesh.num_coarse_nodes):
        nb = small_mesh.neighborhood(i)
        chi = pou.to_fine(i)
        assert chi[small_mesh.coarse_node_fine_index(i)] == pytest.approx(1.0)
        # chi_i vanishes on the part of its boundary inside the domain.
        inner = numpy.setdiff1d(nb.boundary, domain_boundary)
        numpy.testing.assert_allclose(chi[inner], 0.0, atol=1e-14)
        assert chi.min() >= -1e-12 and chi.max() <= 1 + 1e-12


def test_snapshot_boundary_traces(small_mesh, periodic_coefficient):
    nb = small_mesh.neighborhood(4)
    snapshots = build_snapshots(small_mesh, periodic_coefficient, 0.6, nb)
    assert snapshots.size == nb.num_snapshots == 80
    numpy.testing.assert_array_equal(snapshots.basis[nb.local_boundary], numpy.eye(80))
    # The constant function is kappa-harmonic, so the columns sum to one.
    numpy.testing.assert_allclose(snapshots.basis.sum(axis=1), 1.0, atol=1e-12)


def test_snapshots_are_harmonic(small_mesh, periodic_coefficient):
    nb = small_mesh.neighborhood(1)
    operators = neighborhood_operators(small_mesh, periodic_coefficient, nb)
    snapshots = build_snapshots(small_mesh, periodic_coefficient, 0.6, nb, operators=operators)
    K = operators.stiffness[0]
    residual = (K @ snapshots.basis)[nb.local_interior]
    assert numpy.abs(residual).max() < 1e-10 * abs(K).max()


def test_local_solves_are_counted(small_mesh, periodic_coefficient):
    with instrument.counting() as delta:
        build_snapshots(small_mesh, periodic_coefficient, 0.6, small_mesh.neighborhood(0))
    assert delta[instrument.LOCAL_SOLVE] == 1
    assert delta[instrument.EIGENSOLVE] == 0


@pytest.mark.parametrize("seed", range(50))
def test_pencil_matches_brute_force(seed):
    rng = numpy.random.default_rng(seed)
    size = int(rng.integers(8, 41))
    a, s = _random_pencil(rng, size)
    n_modes = min(4, size - 1)
    values, vectors, jitter = solve_pencil(a, s, n_modes)
    assert jitter == 0.0
    expected, expected_vectors = _brute_force(a, s)
    numpy.testing.assert_allclose(values, expected[: n_modes + 1], rtol=1e-9, atol=1e-9)
    residual = a @ vectors - s @ vectors * values
    assert numpy.abs(residual).max() <= 1e-9 * max(1.0, numpy.abs(a).max())
    numpy.testing.assert_allclose(vectors.T @ s @ vectors, numpy.eye(n_modes + 1), atol=1e-9)
    numpy.testing.assert_allclose(
        vectors, align_signs(expected_vectors[:, : n_modes + 1]), atol=1e-6
    )


def test_pencil_rejects_singular_mass():
    a = numpy.eye(4)
    with pytest.raises(NumericalRankError):
        solve_pencil(a, numpy.zeros((4, 4)), 1)


def test_pencil_with_jitter():
    a = numpy.diag([1.0, 2.0, 3.0])
    s = numpy.diag([1.0, 1.0, 0.0])
    values, vectors, jitter = solve_pencil(a, s, 1)
    assert jitter == pytest.approx(2e-12)
    numpy.testing.assert_allclose(values, [1.0, 2.0])


def test_sign_alignment():
    vectors = numpy.array([[-1.0, 0.2], [1.0, -0.9], [0.5, 0.1]])
    aligned = align_signs(vectors)
    numpy.testing.assert_array_equal(aligned[:, 0], [1.0, -1.0, -0.5])
    numpy.testing.assert_array_equal(aligned[:, 1], [-0.2, 0.9, -0.1])
    numpy.testing.assert_array_equal(align_signs(aligned), aligned)
    numpy.testing.assert_array_equal(align_signs(numpy.array([0.0, -2.0])), [0.0, 2.0])


@pytest.fixture
def spectral(small_mesh, periodic_coefficient):
    nb = small_mesh.neighborhood(4)
    operators = neighborhood_operators(small_mesh, periodic_coefficient, nb)
    snapshots = build_snapshots(small_mesh, periodic_coefficient, 0.6, nb, operators=operators)
    return snapshots, operators


def test_constant_zero_mode(spectral, periodic_coefficient):
    snapshots, operators = spectral
    data = local_spectral(
        snapshots, operators.stiffness, operators.mass, periodic_coefficient.thetas(0.6), 4
    )
    assert data.n_modes == 4 and len(data.eigenvalues) == 5
    assert abs(data.eigenvalues[0]) <= 1e-10 * max(1.0, data.eigenvalues[-1])
    first = data.vectors[:, 0]
    numpy.testing.assert_allclose(first, first.mean(), rtol=1e-8)
    assert first.mean() > 0
    assert numpy.all(numpy.diff(data.eigenvalues) >= 0)
    assert data.gap == data.eigenvalues[4]


def test_projected_and_local_operators_agree(spectral, periodic_coefficient):
    snapshots, operators = spectral
    thetas = periodic_coefficient.thetas(1.3)
    direct = local_spectral(snapshots, operators.stiffness, operators.mass, thetas, 3)
    projected = local_spectral(
        snapshots,
        project_operators(snapshots, operators.stiffness),
        project_operators(snapshots, operators.mass),
        thetas,
        3,
        projected=True,
    )
    numpy.testing.assert_allclose(projected.eigenvalues, direct.eigenvalues, rtol=1e-10, atol=1e-12)
    numpy.testing.assert_allclose(projected.vectors, direct.vectors, atol=1e-8)


def test_single_term_scaling(spectral):
    "With one term, Theta scales both sides of the pencil and cancels."
    snapshots, operators = spectral
    small = local_spectral(snapshots, operators.stiffness, operators.mass, [2.0], 3)
    large = local_spectral(snapshots, operators.stiffness, operators.mass, [5.0], 3)
    numpy.testing.assert_allclose(small.eigenvalues[1:], large.eigenvalues[1:], rtol=1e-8)
    numpy.testing.assert_allclose(
        small.vectors[:, 1:] * numpy.sqrt(2.0), large.vectors[:, 1:] * numpy.sqrt(5.0), atol=1e-6
    )


def test_too_many_modes(small_mesh, periodic_coefficient):
    nb = small_mesh.neighborhood(0)
    operators = neighborhood_operators(small_mesh, periodic_coefficient, nb)
    snapshots = build_snapshots(small_mesh, periodic_coefficient, 0.6, nb, operators=operators)
    with pytest.raises(ConfigurationError):
        local_spectral(snapshots, operators.stiffness, operators.mass, [0.96], snapshots.size)


def test_gap_is_monotone(spectral, periodic_coefficient):
    snapshots, operators = spectral
    data = [
        local_spectral(
            snapshots, operators.stiffness, operators.mass, periodic_coefficient.thetas(mu), 5, mu=mu
        )
        for mu in (0.2, 0.6, 1.5)
    ]
    gaps = [spectral_gap(data, n) for n in range(1, 6)]
    assert gaps == sorted(gaps)
    assert spectral_gap(data) == gaps[-1]
    with pytest.raises(ValueError):
        spectral_gap(data, 6)


def test_branch_swaps(spectral, periodic_coefficient):
    snapshots, operators = spectral
    mass = project_operators(snapshots, operators.mass)
    stiffness = project_operators(snapshots, operators.stiffness)
    data = [
        local_spectral(
            snapshots, stiffness, mass, periodic_coefficient.thetas(mu), 3, mu=[mu], projected=True
        )
        for mu in (0.5, 0.7)
    ]
    assert detect_branch_swaps(data, mass, periodic_coefficient) == []
    data[1].vectors[:, [1, 2]] = data[1].vectors[:, [2, 1]]
    flags = detect_branch_swaps(data, mass, periodic_coefficient)
    assert [(j, k) for j, k, _ in flags] == [(1, 1), (1, 2)]


def test_offline_basis_is_conforming(small_mesh, periodic_coefficient):
    pou = build_pou(small_mesh, periodic_coefficient, 0.6)
    nb = small_mesh.neighborhood(1)
    operators = neighborhood_operators(small_mesh, periodic_coefficient, nb)
    snapshots = build_snapshots(small_mesh, periodic_coefficient, 0.6, nb, operators=operators)
    data = local_spectral(snapshots, operators.stiffness, operators.mass, [0.96], 3)
    basis = offline_basis(pou, snapshots, data)
    assert basis.shape == (small_mesh.num_nodes, 3)
    assert not basis[small_mesh.boundary_nodes()].any()
    outside = numpy.setdiff1d(numpy.arange(small_mesh.num_nodes), nb.nodes)
    assert not basis[outside].any()
    weighted = weighted_snapshots(pou, snapshots)
    numpy.testing.assert_allclose(basis[nb.nodes], weighted @ data.vectors)


def test_s_orthonormal_eigenvectors(spectral, periodic_coefficient):
    snapshots, operators = spectral
    thetas = periodic_coefficient.thetas(0.6)
    data = local_spectral(snapshots, operators.stiffness, operators.mass, thetas, 4)
    mass = sum(t * m for t, m in zip(thetas, project_operators(snapshots, operators.mass)))
    numpy.testing.assert_allclose(data.vectors.T @ mass @ data.vectors, numpy.eye(4), atol=1e-9)
    eigenvalues = scipy.linalg.eigh(
        sum(t * a for t, a in zip(thetas, project_operators(snapshots, operators.stiffness))),
        mass,
        eigvals_only=True,
    )
    numpy.testing.assert_allclose(data.eigenvalues[1:], eigenvalues[1:5], rtol=1e-8)


@pytest.fixture
def constant_coefficient(small_mesh):
    return AffineCoefficient([(ThetaDescriptor(), numpy.ones(small_mesh.cell_shape))])


def test_constant_pou_is_bilinear_hat(small_mesh, constant_coefficient):
    pou = build_pou(small_mesh, constant_coefficient, 0.6)
    xy = small_mesh.node_coordinates()
    for i in range(small_mesh.num_coarse_nodes):
        x0, y0 = xy[small_mesh.coarse_node_fine_index(i)]
        hat = numpy.clip(1 - numpy.abs(xy[:, 0] - x0) / small_mesh.H, 0, 1) * numpy.clip(
            1 - numpy.abs(xy[:, 1] - y0) / small_mesh.Hy, 0, 1
        )
        numpy.testing.assert_allclose(pou.to_fine(i), hat, atol=1e-12)


def test_single_term_pou_ignores_reference(small_mesh, periodic_coefficient):
    low = build_pou(small_mesh, periodic_coefficient, 0.3)
    high = build_pou(small_mesh, periodic_coefficient, 1.7)
    for i in range(len(low)):
        numpy.testing.assert_allclose(low[i], high[i], atol=1e-12)


@pytest.mark.parametrize("index", [0, 1, 4])
def test_constant_snapshots_obey_maximum_principle(small_mesh, constant_coefficient, index):
    snapshots = build_snapshots(small_mesh, constant_coefficient, 0.6, small_mesh.neighborhood(index))
    assert snapshots.basis.min() >= -1e-12
    assert snapshots.basis.max() <= 1 + 1e-12


def test_eigenvalue_clusters():
    clusters = eigenvalue_clusters([0.0, 1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0, 3.0])
    assert [list(c) for c in clusters] == [[0], [1, 2], [3], [4, 5, 6]]
    assert eigenvalue_clusters([]) == []


def test_canonical_basis_ignores_rotation():
    rng = numpy.random.default_rng(7)
    y, _ = numpy.linalg.qr(rng.standard_normal((12, 3)))
    rotation, _ = numpy.linalg.qr(rng.standard_normal((3, 3)))
    canonical = canonical_basis(y)
    numpy.testing.assert_allclose(canonical_basis(y @ rotation), canonical, atol=1e-12)
    numpy.testing.assert_allclose(canonical.T @ canonical, numpy.eye(3), atol=1e-12)
    # Same span as y.
    numpy.testing.assert_allclose(y @ (y.T @ canonical), canonical, atol=1e-12)


def test_sign_ties_go_to_lowest_index():
    vector = numpy.array([-0.3, 1.0, -(1.0 + 1e-12)])
    numpy.testing.assert_array_equal(align_signs(vector), vector)
    numpy.testing.assert_array_equal(align_signs(-vector), vector)


def test_repeated_eigenvalues_are_stable(small_mesh, constant_coefficient):
    "A symmetric neighborhood has repeated eigenvalues; the eigenvectors still scale with Theta."
    nb = small_mesh.neighborhood(0)
    operators = neighborhood_operators(small_mesh, constant_coefficient, nb)
    snapshots = build_snapshots(small_mesh, constant_coefficient, 0.6, nb, operators=operators)
    stiffness = project_operators(snapshots, operators.stiffness)
    mass = project_operators(snapshots, operators.mass)
    thetas = (0.3, 2.0, 7.5)
    data = [local_spectral(snapshots, stiffness, mass, [t], 5, projected=True) for t in thetas]
    assert any(len(c) > 1 for c in eigenvalue_clusters(data[0].eigenvalues))
    reference = data[0].vectors * numpy.sqrt(thetas[0])
    for theta, item in zip(thetas[1:], data[1:]):
        numpy.testing.assert_allclose(item.eigenvalues, data[0].eigenvalues, rtol=1e-9, atol=1e-9)
        numpy.testing.assert_allclose(item.vectors * numpy.sqrt(theta), reference, atol=1e-8)
    assert detect_branch_swaps(data, mass, constant_coefficient) == []
