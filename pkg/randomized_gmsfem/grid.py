"""
Nested structured meshes on the unit square.

Fine nodes are numbered row-major, ``node = iy * (nx + 1) + ix``, and fine
cells likewise, ``cell = cy * nx + cx``. Cell rasters are arrays of shape
``(ny, nx)`` whose row 0 is the bottom row of cells. Coarse nodes follow the
same row-major convention on the coarse grid.
"""
import numpy

from .errors import ConfigurationError


class Box:
    """
    A rectangle of fine cells ``[ix0, ix1) x [iy0, iy1)`` and its nodes.

    Parameters
    ----------
    mesh : StructuredMesh
    ix0, ix1, iy0, iy1 : int
        Fine cell index bounds (half-open); the node range is closed.
    """

    __slots__ = ("_mesh", "ix0", "ix1", "iy0", "iy1")

    def __init__(self, mesh, ix0, ix1, iy0, iy1):
        self._mesh = mesh
        self.ix0, self.ix1, self.iy0, self.iy1 = ix0, ix1, iy0, iy1

    @property
    def shape(self):
        "Cell counts as (rows, columns), matching raster slicing."
        return (self.iy1 - self.iy0, self.ix1 - self.ix0)

    @property
    def cells(self):
        "Slices selecting this box from a cell raster."
        return (slice(self.iy0, self.iy1), slice(self.ix0, self.ix1))

    def nodes(self):
        "Global fine node indices of the closed box, row-major."
        ix = numpy.arange(self.ix0, self.ix1 + 1)
        iy = numpy.arange(self.iy0, self.iy1 + 1)
        return (iy[:, None] * (self._mesh.nx + 1) + ix[None, :]).ravel()

    def perimeter(self):
        """
        Local positions (into :meth:`nodes`) of the box perimeter.

        The walk is counter-clockwise starting at the lower-left corner, each
        corner visited once.
        """
        width = self.ix1 - self.ix0 + 1
        height = self.iy1 - self.iy0 + 1
        bottom = [(0, i) for i in range(width - 1)]
        right = [(j, width - 1) for j in range(height - 1)]
        top = [(height - 1, i) for i in range(width - 1, 0, -1)]
        left = [(j, 0) for j in range(height - 1, 0, -1)]
        return numpy.array([j * width + i for j, i in bottom + right + top + left])

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(ix={self.ix0}..{self.ix1}, "
            f"iy={self.iy0}..{self.iy1})"
        )


class CoarseNeighborhood:
    """
    The union of coarse cells sharing coarse node ``index``.

    Parameters
    ----------
    mesh : StructuredMesh
    index : int
        Coarse node index.

    Attributes
    ----------
    index : int
    coarse_node : Tuple[int, int]
        Coarse node position (I, J).
    cells : Tuple[Tuple[int, int]]
        Member coarse cells (cx, cy), row-major.
    box : Box
        Fine-cell rectangle covered by the neighborhood.
    nodes : numpy.ndarray
        Global fine nodes of the closed neighborhood, row-major over the box.
    boundary : numpy.ndarray
        Global fine nodes of the neighborhood boundary, counter-clockwise from
        the lower-left corner. ``len(boundary)`` is the snapshot count L_i.
    interior : numpy.ndarray
        The remaining global nodes, row-major.
    local_boundary, local_interior : numpy.ndarray
        Positions of ``boundary`` and ``interior`` inside ``nodes``.
    """

    __slots__ = (
        "index",
        "coarse_node",
        "cells",
        "box",
        "nodes",
        "boundary",
        "interior",
        "local_boundary",
        "local_interior",
    )

    def __init__(self, mesh, index):
        if not 0 <= index < mesh.num_coarse_nodes:
            raise IndexError(
                f"coarse node {index} out of range [0, {mesh.num_coarse_nodes})"
            )
        I, J = index % (mesh.Nx + 1), index // (mesh.Nx + 1)
        self.index = index
        self.coarse_node = (I, J)
        cx = [c for c in (I - 1, I) if 0 <= c < mesh.Nx]
        cy = [c for c in (J - 1, J) if 0 <= c < mesh.Ny]
        self.cells = tuple((x, y) for y in cy for x in cx)
        rx, ry = mesh.refinement
        self.box = Box(mesh, cx[0] * rx, (cx[-1] + 1) * rx, cy[0] * ry, (cy[-1] + 1) * ry)
        self.nodes = self.box.nodes()
        self.local_boundary = self.box.perimeter()
        mask = numpy.ones(len(self.nodes), dtype=bool)
        mask[self.local_boundary] = False
        self.local_interior = numpy.flatnonzero(mask)
        self.boundary = self.nodes[self.local_boundary]
        self.interior = self.nodes[self.local_interior]

    @property
    def num_snapshots(self):
        "L_i, the number of boundary fine nodes."
        return len(self.boundary)

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(index={self.index}, "
            f"coarse_node={self.coarse_node}, cells={len(self.cells)})"
        )


class StructuredMesh:
    """
    A fine rectangular grid nested in a coarse one on [0, 1]^2.

    Use :func:`build_mesh`, which validates its arguments, rather than
    instantiating this directly.

    Parameters
    ----------
    nx, ny : int
        Fine cell counts per axis.
    Nx, Ny : int
        Coarse cell counts per axis.
    """

    __slots__ = ("_nx", "_ny", "_Nx", "_Ny", "_neighborhoods", "__weakref__")

    def __init__(self, nx, ny, Nx, Ny):
        self._nx, self._ny, self._Nx, self._Ny = nx, ny, Nx, Ny
        self._neighborhoods = {}

    nx = property(lambda self: self._nx)
    ny = property(lambda self: self._ny)
    Nx = property(lambda self: self._Nx)
    Ny = property(lambda self: self._Ny)

    @property
    def h(self):
        "Fine mesh size along x."
        return 1.0 / self._nx

    @property
    def hy(self):
        "Fine mesh size along y."
        return 1.0 / self._ny

    @property
    def H(self):
        "Coarse mesh size along x."
        return 1.0 / self._Nx

    @property
    def Hy(self):
        "Coarse mesh size along y."
        return 1.0 / self._Ny

    @property
    def refinement(self):
        "Fine cells per coarse cell along each axis."
        return (self._nx // self._Nx, self._ny // self._Ny)

    @property
    def num_nodes(self):
        return (self._nx + 1) * (self._ny + 1)

    @property
    def num_cells(self):
        return self._nx * self._ny

    @property
    def num_coarse_nodes(self):
        return (self._Nx + 1) * (self._Ny + 1)

    @property
    def cell_shape(self):
        "Shape of a cell raster, (ny, nx)."
        return (self._ny, self._nx)

    def full_box(self):
        return Box(self, 0, self._nx, 0, self._ny)

    def node_coordinates(self):
        "Array of shape (num_nodes, 2) with fine node (x, y) positions."
        x = numpy.arange(self._nx + 1) * self.h
        y = numpy.arange(self._ny + 1) * self.hy
        X, Y = numpy.meshgrid(x, y)
        return numpy.column_stack([X.ravel(), Y.ravel()])

    def cell_centers(self):
        "Arrays (X, Y) of shape (ny, nx) with fine cell center positions."
        x = (numpy.arange(self._nx) + 0.5) * self.h
        y = (numpy.arange(self._ny) + 0.5) * self.hy
        return numpy.meshgrid(x, y)

    def boundary_nodes(self):
        "Sorted global indices of fine nodes on the boundary of the domain."
        ix = numpy.arange(self._nx + 1)
        iy = numpy.arange(self._ny + 1)
        IX, IY = numpy.meshgrid(ix, iy)
        on_boundary = (IX == 0) | (IX == self._nx) | (IY == 0) | (IY == self._ny)
        return numpy.flatnonzero(on_boundary.ravel())

    def coarse_node_fine_index(self, i):
        "Global fine node index coinciding with coarse node i."
        rx, ry = self.refinement
        I, J = i % (self._Nx + 1), i // (self._Nx + 1)
        return J * ry * (self._nx + 1) + I * rx

    def coarse_cell_box(self, cx, cy):
        rx, ry = self.refinement
        return Box(self, cx * rx, (cx + 1) * rx, cy * ry, (cy + 1) * ry)

    def neighborhood(self, i):
        "Return the (cached) CoarseNeighborhood of coarse node i."
        try:
            return self._neighborhoods[i]
        except KeyError:
            nb = self._neighborhoods[i] = CoarseNeighborhood(self, i)
            return nb

    def neighborhoods(self):
        "All coarse neighborhoods, in coarse node order."
        return tuple(self.neighborhood(i) for i in range(self.num_coarse_nodes))

    def __eq__(self, other):
        if not isinstance(other, StructuredMesh):
            return NotImplemented
        return (self._nx, self._ny, self._Nx, self._Ny) == (
            other._nx,
            other._ny,
            other._Nx,
            other._Ny,
        )

    def __hash__(self):
        return hash((self._nx, self._ny, self._Nx, self._Ny))

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(nx={self._nx}, ny={self._ny}, "
            f"Nx={self._Nx}, Ny={self._Ny})"
        )


def build_mesh(nx, ny, Nx, Ny):
    """
    Build a fine grid nested in a coarse grid on the unit square.

    Parameters
    ----------
    nx, ny : int
        Fine cell counts.
    Nx, Ny : int
        Coarse cell counts; must divide nx and ny.

    Returns
    -------
    mesh : StructuredMesh

    Raises
    ------
    ConfigurationError
        If a count is not a positive integer or the fine grid does not refine
        the coarse grid.

    Examples
    --------
    >>> mesh = build_mesh(100, 100, 5, 5)
    >>> mesh.H, mesh.h, mesh.num_coarse_nodes
    (0.2, 0.01, 36)
    """
    for name, value in [("nx", nx), ("ny", ny), ("Nx", Nx), ("Ny", Ny)]:
        if isinstance(value, bool) or int(value) != value or value < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
    nx, ny, Nx, Ny = int(nx), int(ny), int(Nx), int(Ny)
    if nx % Nx or ny % Ny:
        raise ConfigurationError(
            f"fine grid {nx}x{ny} does not refine coarse grid {Nx}x{Ny}"
        )
    return StructuredMesh(nx, ny, Nx, Ny)


def neighborhood(mesh, i):
    """
    The coarse neighborhood of coarse node i.

    Parameters
    ----------
    mesh : StructuredMesh
    i : int

    Returns
    -------
    neighborhood : CoarseNeighborhood

    Raises
    ------
    IndexError
        If i is not a coarse node index.
    """
    return mesh.neighborhood(i)


def coarse_neighbor_pairs(mesh):
    """
    Ordered pairs (i, j) of coarse nodes whose neighborhoods overlap.

    Two neighborhoods overlap exactly when their coarse nodes are at most one
    coarse cell apart along each axis. Pairs include (i, i) and both
    orientations of every off-diagonal pair.
    """
    pairs = []
    for i in range(mesh.num_coarse_nodes):
        I, J = i % (mesh.Nx + 1), i // (mesh.Nx + 1)
        for dJ in (-1, 0, 1):
            for dI in (-1, 0, 1):
                I2, J2 = I + dI, J + dJ
                if 0 <= I2 <= mesh.Nx and 0 <= J2 <= mesh.Ny:
                    pairs.append((i, J2 * (mesh.Nx + 1) + I2))
    return pairs
