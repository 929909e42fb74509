"""
Conforming bilinear (Q1) finite elements on the structured fine grid.

Element node order is counter-clockwise from the lower-left corner:
(0, 0), (1, 0), (1, 1), (0, 1). The permeability is constant on each fine
cell, so element integrals of stiffness and mass are exact.
"""
import dataclasses
import logging
import time

import numpy
import scipy.sparse
import scipy.sparse.linalg

from .coefficient import as_parameter
from .errors import SolverError
from .utils import instrument

logger = logging.getLogger(name="randomized_gmsfem.fem")

# Below this many unknowns the fine system is factored directly.
DIRECT_SOLVE_LIMIT = 20000
CG_RTOL = 1e-10

_CORNERS = numpy.array([(0, 0), (1, 0), (1, 1), (0, 1)])


def _tensor_element(ax, ay):
    "4x4 element matrix sum_ab ax[a_x, b_x] * ay[a_y, b_y] in corner order."
    ix, iy = _CORNERS[:, 0], _CORNERS[:, 1]
    return ax[numpy.ix_(ix, ix)] * ay[numpy.ix_(iy, iy)]


def _stiffness_1d(h):
    return numpy.array([[1.0, -1.0], [-1.0, 1.0]]) / h


def _mass_1d(h):
    return numpy.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0


def element_stiffness(hx, hy):
    "Q1 element stiffness of a hx by hy rectangle with unit coefficient."
    return _tensor_element(_stiffness_1d(hx), _mass_1d(hy)) + _tensor_element(
        _mass_1d(hx), _stiffness_1d(hy)
    )


def element_mass(hx, hy):
    "Q1 element mass of a hx by hy rectangle with unit weight."
    return _tensor_element(_mass_1d(hx), _mass_1d(hy))


def _cell_connectivity(ncx, ncy):
    "Node indices (ncx*ncy, 4) of each cell of a ncx by ncy box, row-major."
    cx, cy = numpy.meshgrid(numpy.arange(ncx), numpy.arange(ncy))
    n0 = (cy * (ncx + 1) + cx).ravel()
    return numpy.column_stack([n0, n0 + 1, n0 + ncx + 2, n0 + ncx + 1])


def assemble_cellwise(weights, element):
    """
    Assemble sum_cells weights[cell] * element over a box of cells.

    Parameters
    ----------
    weights : numpy.ndarray
        Cell raster of shape (ncy, ncx).
    element : numpy.ndarray
        4x4 element matrix.

    Returns
    -------
    matrix : scipy.sparse.csr_matrix
        Over the (ncy + 1) * (ncx + 1) nodes of the box, row-major.
    """
    ncy, ncx = weights.shape
    conn = _cell_connectivity(ncx, ncy)
    rows = numpy.repeat(conn, 4, axis=1).ravel()
    cols = numpy.tile(conn, (1, 4)).ravel()
    data = (weights.ravel()[:, None] * element.ravel()[None, :]).ravel()
    n = (ncx + 1) * (ncy + 1)
    return scipy.sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def _check_raster(mesh, raster):
    raster = numpy.asarray(raster, dtype=float)
    if raster.shape != mesh.cell_shape:
        raise ValueError(
            f"raster shape {raster.shape} does not match mesh cells {mesh.cell_shape}"
        )
    return raster


def assemble_stiffness_component(mesh, raster):
    """
    Stiffness matrix int kappa_q grad(phi_i) . grad(phi_j) over the fine grid.

    Parameters
    ----------
    mesh : StructuredMesh
    raster : numpy.ndarray
        Cellwise kappa_q, shape (ny, nx).

    Returns
    -------
    matrix : scipy.sparse.csr_matrix
    """
    raster = _check_raster(mesh, raster)
    instrument.increment(instrument.FINE_ASSEMBLY)
    return assemble_cellwise(raster, element_stiffness(mesh.h, mesh.hy))


def assemble_weighted_mass_component(mesh, raster, H=None):
    """
    Mass matrix with cellwise weight kappa_q * H^-2.

    Parameters
    ----------
    mesh : StructuredMesh
    raster : numpy.ndarray
    H : float, optional
        Coarse mesh size. Defaults to ``mesh.H``; pass ``1.0`` for the plain
        kappa-weighted mass used by the L2 norm.
    """
    raster = _check_raster(mesh, raster)
    H = mesh.H if H is None else H
    instrument.increment(instrument.FINE_ASSEMBLY)
    return assemble_cellwise(raster / H ** 2, element_mass(mesh.h, mesh.hy))


# 2-point Gauss rule on [-1, 1].
_GAUSS2 = numpy.array([-1.0, 1.0]) / numpy.sqrt(3.0)


def _shape_values(xi, eta):
    "Q1 shape functions on [-1, 1]^2, corner order, shape (4, len(xi))."
    return 0.25 * numpy.array(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)]
    )


def assemble_load(mesh, f):
    """
    Load vector (f, phi_i) by 2x2 Gauss quadrature per fine cell.

    Parameters
    ----------
    mesh : StructuredMesh
    f : Callable
        Vectorized ``f(x, y) -> values``.

    Returns
    -------
    load : numpy.ndarray
        Length ``mesh.num_nodes``.
    """
    xi, eta = numpy.meshgrid(_GAUSS2, _GAUSS2)
    xi, eta = xi.ravel(), eta.ravel()
    shapes = _shape_values(xi, eta)  # (4, 4 points)
    X, Y = mesh.cell_centers()
    px = X.ravel()[:, None] + 0.5 * mesh.h * xi[None, :]
    py = Y.ravel()[:, None] + 0.5 * mesh.hy * eta[None, :]
    values = numpy.broadcast_to(numpy.asarray(f(px, py), dtype=float), px.shape)
    local = values @ shapes.T * (0.25 * mesh.h * mesh.hy)  # (cells, 4)
    conn = _cell_connectivity(mesh.nx, mesh.ny)
    load = numpy.zeros(mesh.num_nodes)
    numpy.add.at(load, conn.ravel(), local.ravel())
    return load


def dirichlet_lift(mesh, p):
    """
    Nodal interpolation of the boundary data on the domain boundary, 0 inside.

    Parameters
    ----------
    mesh : StructuredMesh
    p : Callable | float
        ``p(x, y)`` or a constant.
    """
    lift = numpy.zeros(mesh.num_nodes)
    boundary = mesh.boundary_nodes()
    if callable(p):
        xy = mesh.node_coordinates()[boundary]
        lift[boundary] = p(xy[:, 0], xy[:, 1])
    else:
        lift[boundary] = float(p)
    return lift


@dataclasses.dataclass
class FineOperators:
    """
    Parameter-independent fine-grid operators of an affine coefficient.

    Attributes
    ----------
    stiffness : List[scipy.sparse.csr_matrix]
        A_q for each term.
    mass : List[scipy.sparse.csr_matrix]
        kappa_q-weighted mass (no H^-2), used for the weighted L2 norm.
    """

    mesh: object
    coefficient: object
    stiffness: list
    mass: list

    @classmethod
    def assemble(cls, mesh, coefficient):
        coefficient.check_mesh(mesh)
        stiffness = [assemble_stiffness_component(mesh, r) for r in coefficient.rasters]
        mass = [assemble_weighted_mass_component(mesh, r, H=1.0) for r in coefficient.rasters]
        return cls(mesh, coefficient, stiffness, mass)

    def stiffness_at(self, mu):
        "A(mu) = sum_q Theta_q(mu) A_q."
        return _combine(self.coefficient.thetas(mu), self.stiffness)

    def mass_at(self, mu):
        "M_kappa(mu) = sum_q Theta_q(mu) M_q."
        return _combine(self.coefficient.thetas(mu), self.mass)


def _combine(thetas, matrices):
    total = thetas[0] * matrices[0]
    for theta, matrix in zip(thetas[1:], matrices[1:]):
        total = total + theta * matrix
    return total.tocsr()


@dataclasses.dataclass
class FineSolution:
    """
    Nodal values of a fine-grid solution.

    Attributes
    ----------
    values : numpy.ndarray
    mu : numpy.ndarray
    info : dict
        ``method`` ("direct" or "cg"), ``iterations``, ``residual``, and the
        wall-clock ``t_assemble_s`` / ``t_solve_s``.
    """

    values: numpy.ndarray
    mu: numpy.ndarray
    info: dict


def solve_dirichlet(matrix, load, lift, free):
    """
    Solve matrix u = load on the free nodes with u = lift elsewhere.

    Uses a sparse LU factorization below :data:`DIRECT_SOLVE_LIMIT` unknowns
    and Jacobi-preconditioned conjugate gradients above it.

    Returns
    -------
    values : numpy.ndarray
    info : dict

    Raises
    ------
    SolverError
        If conjugate gradients stops before reaching the tolerance.
    """
    matrix = matrix.tocsr()
    rhs = (load - matrix @ lift)[free]
    A = matrix[free][:, free].tocsc()
    values = lift.copy()
    if A.shape[0] == 0:
        return values, {"method": "direct", "iterations": 0, "residual": 0.0}
    if A.shape[0] <= DIRECT_SOLVE_LIMIT:
        x = scipy.sparse.linalg.splu(A).solve(rhs)
        info = {"method": "direct", "iterations": 0}
    else:
        inverse_diagonal = 1.0 / A.diagonal()
        preconditioner = scipy.sparse.linalg.LinearOperator(
            A.shape, matvec=lambda v: inverse_diagonal * v
        )
        maxiter = 20 * A.shape[0]
        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        x, status = scipy.sparse.linalg.cg(
            A, rhs, rtol=CG_RTOL, atol=0.0, maxiter=maxiter, M=preconditioner, callback=count
        )
        info = {"method": "cg", "iterations": iterations}
        if status != 0:
            residual = numpy.linalg.norm(rhs - A @ x) / max(numpy.linalg.norm(rhs), 1e-300)
            raise SolverError(
                f"conjugate gradients did not converge in {maxiter} iterations "
                f"(relative residual {residual:.3e})",
                residual=residual,
            )
    norm = numpy.linalg.norm(rhs)
    info["residual"] = float(numpy.linalg.norm(rhs - A @ x) / norm) if norm else 0.0
    values[free] = x
    return values, info


def solve_fine(mesh, coeff, mu, f, p, *, operators=None, load=None):
    """
    Fine-scale reference solution of -div(kappa(x; mu) grad u) = f, u = p.

    Parameters
    ----------
    mesh : StructuredMesh
    coeff : AffineCoefficient
    mu : float | Sequence[float]
    f : Callable
        Source ``f(x, y)``.
    p : Callable | float
        Dirichlet data.
    operators : FineOperators, optional
        Reused if given; otherwise assembled.
    load : numpy.ndarray, optional
        Precomputed load vector for f.

    Returns
    -------
    solution : FineSolution
    """
    mu = as_parameter(mu)
    t0 = time.monotonic()
    if operators is None:
        operators = FineOperators.assemble(mesh, coeff)
    A = operators.stiffness_at(mu)
    if load is None:
        load = assemble_load(mesh, f)
    lift = dirichlet_lift(mesh, p)
    free = numpy.setdiff1d(numpy.arange(mesh.num_nodes), mesh.boundary_nodes())
    t1 = time.monotonic()
    values, info = solve_dirichlet(A, load, lift, free)
    t2 = time.monotonic()
    info.update(t_assemble_s=t1 - t0, t_solve_s=t2 - t1)
    logger.debug("fine solve at mu=%s: %s", list(mu), info)
    return FineSolution(values, mu, info)


def energy_norm(mesh, coeff, mu, v, *, operators=None):
    "sqrt(v' A(mu) v), the energy norm of a nodal field."
    if operators is None:
        operators = FineOperators.assemble(mesh, coeff)
    v = numpy.asarray(v, dtype=float)
    return float(numpy.sqrt(max(v @ (operators.stiffness_at(mu) @ v), 0.0)))


def weighted_l2_norm(mesh, coeff, mu, v, *, operators=None):
    "sqrt(v' M_kappa(mu) v), the kappa-weighted L2 norm of a nodal field."
    if operators is None:
        operators = FineOperators.assemble(mesh, coeff)
    v = numpy.asarray(v, dtype=float)
    return float(numpy.sqrt(max(v @ (operators.mass_at(mu) @ v), 0.0)))


# 3-point Gauss rule on [-1, 1].
_GAUSS3_POINTS = numpy.array([-numpy.sqrt(0.6), 0.0, numpy.sqrt(0.6)])
_GAUSS3_WEIGHTS = numpy.array([5.0, 8.0, 5.0]) / 9.0


def weighted_l2_error(mesh, kappa, v, exact):
    """
    sqrt(int kappa |v_h - exact|^2) for a nodal Q1 field v_h.

    Integrated by 3x3 Gauss quadrature per cell, so the interpolation error of
    v_h between nodes is accounted for.

    Parameters
    ----------
    mesh : StructuredMesh
    kappa : numpy.ndarray
        Cell raster.
    v : numpy.ndarray
        Nodal values.
    exact : Callable
        ``exact(x, y) -> values``.
    """
    xi, eta = numpy.meshgrid(_GAUSS3_POINTS, _GAUSS3_POINTS)
    wx, wy = numpy.meshgrid(_GAUSS3_WEIGHTS, _GAUSS3_WEIGHTS)
    xi, eta, w = xi.ravel(), eta.ravel(), (wx * wy).ravel()
    shapes = _shape_values(xi, eta)
    conn = _cell_connectivity(mesh.nx, mesh.ny)
    vh = numpy.asarray(v, dtype=float)[conn] @ shapes  # (cells, points)
    X, Y = mesh.cell_centers()
    px = X.ravel()[:, None] + 0.5 * mesh.h * xi[None, :]
    py = Y.ravel()[:, None] + 0.5 * mesh.hy * eta[None, :]
    squared = (vh - exact(px, py)) ** 2 @ w * (0.25 * mesh.h * mesh.hy)
    return float(numpy.sqrt(numpy.sum(numpy.asarray(kappa, dtype=float).ravel() * squared)))
