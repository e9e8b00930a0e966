"""Uniform box meshes and P1/Q1 finite-element operators.

Fields live on nodes. Mass is lumped, so the L2 inner product is a weighted
dot product and the assembled step matrix is an M-matrix in 1D. Dirichlet
nodes carry ``u = 0`` and are removed from the linear systems by
condensation, which keeps them symmetric.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DegeneracyError

_FIELD_ROLES = ("u", "v", "S", "p", "residual")


@dataclass(frozen=True)
class Grid:
    """Tensor-product mesh of ``[0, L_x]`` (times ``[0, L_y]``).

    Attributes
    ----------
    extent : tuple of float
        Domain length per axis.
    shape : tuple of int
        Nodes per axis.
    coords : ndarray, shape (n_nodes, dim)
        Node coordinates, x varying fastest.
    boundary : ndarray of bool
        Dirichlet marks.
    elements : ndarray of int
        Connectivity; two nodes per 1D element, four (counter-clockwise) in 2D.
    """

    extent: tuple
    shape: tuple
    coords: np.ndarray
    boundary: np.ndarray
    elements: np.ndarray

    @property
    def dim(self):
        return len(self.shape)

    @property
    def h(self):
        return tuple(L / (n - 1) for L, n in zip(self.extent, self.shape))

    @property
    def n_nodes(self):
        return int(self.coords.shape[0])

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_nodes(self):
        return np.flatnonzero(self.boundary)

    @property
    def x(self):
        return self.coords[:, 0]

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def to_csv(self, path):
        """Write the node table ``node_index,x[,y],boundary``."""
        names = ["x", "y"][: self.dim]
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(["node_index", *names, "boundary"]) + "\n")
            for i in range(self.n_nodes):
                xs = ",".join(repr(float(c)) for c in self.coords[i])
                fh.write(f"{i},{xs},{int(self.boundary[i])}\n")


def build_grid(extent, nodes):
    """Uniform mesh with every outer node marked Dirichlet.

    Parameters
    ----------
    extent : float or sequence of float
        Length per axis; a scalar gives a 1D mesh.
    nodes : int or sequence of int
        Node count per axis, at least 3.

    Examples
    --------
    >>> build_grid(1.0, 5).h
    (0.25,)
    """
    ext = tuple(float(e) for e in np.atleast_1d(extent))
    shp = tuple(int(n) for n in np.atleast_1d(nodes))
    if len(ext) != len(shp) or len(ext) not in (1, 2):
        raise ConfigError("grid must be 1D or 2D with one extent and node count per axis")
    if any(not e > 0 for e in ext):
        raise ConfigError("domain extent must be positive")
    if any(n < 3 for n in shp):
        raise ConfigError("need at least 3 nodes per axis")

    if len(shp) == 1:
        n = shp[0]
        coords = np.linspace(0.0, ext[0], n)[:, None]
        boundary = np.zeros(n, dtype=bool)
        boundary[[0, -1]] = True
        elements = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    else:
        nx, ny = shp
        xs = np.linspace(0.0, ext[0], nx)
        ys = np.linspace(0.0, ext[1], ny)
        X, Y = np.meshgrid(xs, ys)  # rows are y, so x varies fastest when flattened
        coords = np.column_stack([X.ravel(), Y.ravel()])
        ix = np.tile(np.arange(nx), ny)
        iy = np.repeat(np.arange(ny), nx)
        boundary = (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)
        i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
        n0 = (i + nx * j).ravel()
        elements = np.column_stack([n0, n0 + 1, n0 + 1 + nx, n0 + nx])
    return Grid(ext, shp, coords, boundary, elements)


# ---------------------------------------------------------------------------
# Element data
# ---------------------------------------------------------------------------


def _element_stiffness(grid):
    """Reference stiffness of one element for unit diffusivity."""
    if grid.dim == 1:
        (h,) = grid.h
        return np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    hx, hy = grid.h
    kx = np.array([[2, -2, -1, 1], [-2, 2, 1, -1], [-1, 1, 2, -2], [1, -1, -2, 2]], dtype=float)
    ky = np.array([[2, 1, -1, -2], [1, 2, -2, -1], [-1, -2, 2, 1], [-2, -1, 1, 2]], dtype=float)
    return hy / (6 * hx) * kx + hx / (6 * hy) * ky


def _element_gradient_integrals(grid):
    """``int_e d(phi_a)/dx_k`` for each local node ``a`` and axis ``k``."""
    if grid.dim == 1:
        return np.array([[-1.0], [1.0]])
    hx, hy = grid.h
    sx = np.array([-1.0, 1.0, 1.0, -1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    return np.column_stack([sx * hy / 2, sy * hx / 2])


def lumped_mass(grid):
    """Diagonal of the lumped mass matrix (node control volumes)."""
    w = np.zeros(grid.n_nodes)
    nloc = grid.elements.shape[1]
    np.add.at(w, grid.elements.ravel(), grid.cell_volume / nloc)
    return w


def stiffness(grid, D=None):
    """Full (unconstrained) stiffness matrix with element-averaged ``D``.

    Parameters
    ----------
    D : array_like or None
        Nodal diffusivity; ``None`` means ``D = 1``.

    Returns
    -------
    scipy.sparse.csr_matrix
    """
    ke = _element_stiffness(grid)
    el = grid.elements
    if D is None:
        De = np.ones(el.shape[0])
    else:
        De = np.asarray(D, dtype=float)[el].mean(axis=1)
    nloc = el.shape[1]
    rows = np.repeat(el, nloc, axis=1).ravel()
    cols = np.tile(el, (1, nloc)).ravel()
    vals = (De[:, None, None] * ke[None]).reshape(el.shape[0], -1).ravel()
    K = sp.coo_matrix((vals, (rows, cols)), shape=(grid.n_nodes, grid.n_nodes))
    return K.tocsr()


def flux_load(grid, F):
    """Load vector ``int F . grad(phi_i)`` with element-averaged nodal ``F``.

    ``F`` has shape ``(n_nodes,)`` in 1D or ``(n_nodes, dim)``.
    """
    F = np.asarray(F, dtype=float).reshape(grid.n_nodes, grid.dim)
    el = grid.elements
    Fe = F[el].mean(axis=1)  # (n_el, dim)
    gi = _element_gradient_integrals(grid)  # (nloc, dim)
    contrib = Fe @ gi.T  # (n_el, nloc)
    out = np.zeros(grid.n_nodes)
    np.add.at(out, el.ravel(), contrib.ravel())
    return out


# ---------------------------------------------------------------------------
# Condensed step system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseOperator:
    """Symmetric operator on the interior nodes.

    ``matrix`` is always set; ``banded`` holds the ``(3, n)`` upper-form
    tridiagonal storage in 1D so the direct solver can skip conversion.
    ``lumped`` marks a purely diagonal operator.
    """

    matrix: sp.csr_matrix
    banded: np.ndarray = None
    lumped: bool = False

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self):
        return self.matrix.toarray()


def _tridiagonal_bands(A):
    n = A.shape[0]
    ab = np.zeros((3, n))
    ab[1] = A.diagonal()
    if n > 1:
        ab[0, 1:] = A.diagonal(1)
        ab[2, :-1] = A.diagonal(-1)
    return ab


def assemble_step_system(grid, D, F, dt, mass=None):
    """Matrix ``M + dt K(D)`` and flux load, both condensed to interior nodes.

    Parameters
    ----------
    grid : Grid
    D : array_like
        Nodal diffusivity, positive everywhere.
    F : array_like or None
        Nodal flux vector field; ``None`` for no flux.
    dt : float
    mass : ndarray, optional
        Precomputed lumped mass.

    Returns
    -------
    op : SparseOperator
    load : ndarray
        ``int F . grad(phi_i)`` on the interior nodes (unscaled by ``dt``).
    """
    D = np.asarray(D, dtype=float)
    if D.shape != (grid.n_nodes,):
        raise ValueError(f"diffusivity has shape {D.shape}, expected ({grid.n_nodes},)")
    bad = ~(D > 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DegeneracyError(
            f"diffusivity {D[i]!r} at node {i} is not positive; "
            "enable the delta/mu regularisations"
        )
    if not dt > 0:
        raise ValueError("dt must be positive")
    m = lumped_mass(grid) if mass is None else mass
    inner = grid.interior
    A = (sp.diags(m) + dt * stiffness(grid, D)).tocsr()[inner][:, inner].tocsr()
    banded = _tridiagonal_bands(A) if grid.dim == 1 else None
    load = np.zeros(inner.size) if F is None else flux_load(grid, F)[inner]
    return SparseOperator(A, banded), load


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def l2_inner(a, b, grid, mass=None):
    """Lumped-mass approximation of ``(a, b)_{L2}``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[0] != grid.n_nodes:
        raise ValueError(f"field lengths {a.shape} and {b.shape} do not match the grid ({grid.n_nodes})")
    m = lumped_mass(grid) if mass is None else mass
    return float(np.dot(m, a * b))


def l2_norm_sq(a, grid, mass=None):
    return l2_inner(a, a, grid, mass)


def grad_norm_sq(a, grid, K=None):
    """``||grad a||^2`` of the piecewise-linear interpolant."""
    K = stiffness(grid) if K is None else K
    a = np.asarray(a, dtype=float)
    return float(a @ (K @ a))


def check_field(values, grid, role="u"):
    """Validate a nodal field; returns it as a float array."""
    if role not in _FIELD_ROLES:
        raise ValueError(f"unknown field role {role!r}")
    arr = np.asarray(values, dtype=float)
    if arr.shape != (grid.n_nodes,):
        raise ValueError(f"{role} field has shape {arr.shape}, expected ({grid.n_nodes},)")
    return arr
