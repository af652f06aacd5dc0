"""Grid-sampled fields, finite differences, Poisson solves and the solenoidal split.

Nodes sit on the ``(n + 1) x (n + 1)`` lattice covering the bounding square
of the outer disk.  A node is *interior* when it lies more than half a
spacing inside the mask circle (by default the boundary of ``M``); nodes
within half a spacing of the circle form the *band*; the rest are exterior.
Scalar unknowns live on interior nodes, with zeros imposed on the band and
beyond.

Covector fields are staggered: ``f1`` is sampled at the midpoints of
x-edges ``(x_i + h/2, y_j)`` and ``f2`` at the midpoints of y-edges
``(x_i, y_j + h/2)``, each interpolated bilinearly on its own lattice.
An edge carries an unknown when at least one of its end nodes is interior.
The gradient is the forward difference along each edge and the divergence
is its negative transpose, so their product is exactly the five-point
Laplacian.  The solenoidal split is then orthogonal and idempotent, with no
odd/even decoupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._linalg import cg
from .geometry import Domain

EXTERIOR, BAND, INTERIOR = 0, 1, 2

__all__ = [
    "Grid",
    "ScalarField",
    "CovectorField",
    "Pair",
    "divergence",
    "gradient",
    "poisson_dirichlet",
    "solenoidal_decompose",
    "SolenoidalProjector",
    "random_smooth_covector",
    "random_smooth_scalar",
    "write_field_csv",
    "read_field_csv",
]


def _bilinear(u, n0, n1):
    """Bilinear stencil on a lattice with ``n0 x n1`` nodes at integer coordinates ``u``.

    Stencil nodes outside the lattice get flat index -1.
    """
    i0 = np.floor(u).astype(np.int64)
    s = u - i0
    ix, iy = i0[:, 0], i0[:, 1]
    sx, sy = s[:, 0], s[:, 1]
    I = np.stack([ix, ix + 1, ix, ix + 1], axis=1)
    J = np.stack([iy, iy, iy + 1, iy + 1], axis=1)
    w = np.stack([(1 - sx) * (1 - sy), sx * (1 - sy), (1 - sx) * sy, sx * sy], axis=1)
    ok = (I >= 0) & (I < n0) & (J >= 0) & (J < n1)
    idx = np.where(ok, I * n1 + J, -1)
    return idx, np.where(ok, w, 0.0)


@dataclass(frozen=True)
class Grid:
    n: int
    domain: Domain = Domain()
    mask_radius: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 cells per side")

    @property
    def spacing(self):
        return 2.0 * self.domain.radius_M1 / self.n

    @property
    def origin(self):
        return self.domain.c - self.domain.radius_M1

    @property
    def cell_area(self):
        return self.spacing**2

    @property
    def shape(self):
        return (self.n + 1, self.n + 1)

    def edge_shape(self, axis):
        return (self.n, self.n + 1) if axis == 0 else (self.n + 1, self.n)

    @cached_property
    def coords(self):
        xs = self.origin[0] + self.spacing * np.arange(self.n + 1)
        ys = self.origin[1] + self.spacing * np.arange(self.n + 1)
        return xs, ys

    @cached_property
    def points(self):
        """Node coordinates, shape ``(n+1, n+1, 2)``, indexed ``[i, j]``."""
        xs, ys = self.coords
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def edge_points(self, axis):
        """Midpoints of x-edges (``axis=0``) or y-edges (``axis=1``)."""
        p = self.points
        return 0.5 * (p[:-1] + p[1:]) if axis == 0 else 0.5 * (p[:, :-1] + p[:, 1:])

    @cached_property
    def mask(self):
        R = self.domain.radius_M if self.mask_radius is None else self.mask_radius
        r = np.linalg.norm(self.points - self.domain.c, axis=-1)
        m = np.full(self.shape, EXTERIOR, dtype=np.int8)
        m[r < R + 0.5 * self.spacing] = BAND
        m[r < R - 0.5 * self.spacing] = INTERIOR
        return m

    @cached_property
    def dof_index(self):
        idx = np.full(self.shape, -1, dtype=np.int64)
        inner = self.mask == INTERIOR
        idx[inner] = np.arange(int(inner.sum()))
        return idx

    @cached_property
    def dof_nodes(self):
        """Flat node indices of the interior nodes, in row-major order."""
        return np.flatnonzero(self.mask.ravel() == INTERIOR)

    @property
    def n_dof(self):
        return self.dof_nodes.size

    @property
    def dof_points(self):
        return self.points.reshape(-1, 2)[self.dof_nodes]

    @cached_property
    def _edge_dofs(self):
        inner = self.mask == INTERIOR
        out = []
        for axis, on in ((0, inner[:-1] | inner[1:]), (1, inner[:, :-1] | inner[:, 1:])):
            idx = np.full(on.shape, -1, dtype=np.int64)
            idx[on] = np.arange(int(on.sum()))
            out.append((idx, np.flatnonzero(on.ravel())))
        return out

    def edge_dof_index(self, axis):
        return self._edge_dofs[axis][0]

    def edge_dof_flat(self, axis):
        """Flat edge indices carrying unknowns, row-major."""
        return self._edge_dofs[axis][1]

    @property
    def n_edge_dofs(self):
        return self._edge_dofs[0][1].size, self._edge_dofs[1][1].size

    @property
    def n_f(self):
        """Number of covector unknowns (both components)."""
        return sum(self.n_edge_dofs)

    @property
    def n_pair(self):
        return self.n_f + self.n_dof

    def edge_dof_points(self, axis):
        return self.edge_points(axis).reshape(-1, 2)[self.edge_dof_flat(axis)]

    # ---- interpolation stencils --------------------------------------------

    def stencil(self, x):
        """Bilinear node stencil for points ``x`` of shape ``(k, 2)``.

        Returns flat node indices and weights, both of shape ``(k, 4)``;
        stencil nodes off the lattice have index -1 and weight 0.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _bilinear((x - self.origin) / self.spacing, self.n + 1, self.n + 1)

    def edge_stencil(self, x, axis):
        """Bilinear stencil on the lattice of x-edge or y-edge midpoints."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        shift = np.array([0.5, 0.0]) if axis == 0 else np.array([0.0, 0.5])
        return _bilinear((x - self.origin) / self.spacing - shift, *self.edge_shape(axis))

    def dof_stencil(self, x):
        """Node stencil restricted to interior nodes; other entries get index -1, weight 0."""
        idx, w = self.stencil(x)
        d = np.where(idx >= 0, self.dof_index.ravel()[np.maximum(idx, 0)], -1)
        return d, np.where(d >= 0, w, 0.0)

    def edge_dof_stencil(self, x, axis):
        idx, w = self.edge_stencil(x, axis)
        d = np.where(idx >= 0, self.edge_dof_index(axis).ravel()[np.maximum(idx, 0)], -1)
        return d, np.where(d >= 0, w, 0.0)

    # ---- discrete operators on the unknowns ---------------------------------

    @cached_property
    def grad_matrix(self):
        """Forward-difference gradient ``G`` from node unknowns to edge unknowns."""
        h = self.spacing
        di = self.dof_index
        blocks = []
        for axis in (0, 1):
            eidx = self.edge_dof_index(axis)
            a = di[:-1] if axis == 0 else di[:, :-1]
            b = di[1:] if axis == 0 else di[:, 1:]
            on = eidx >= 0
            rows, cols, vals = [], [], []
            for node, sgn in ((a, -1.0), (b, 1.0)):
                sel = on & (node >= 0)
                rows.append(eidx[sel])
                cols.append(node[sel])
                vals.append(np.full(int(sel.sum()), sgn / h))
            blocks.append(
                sp.csr_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(self.n_edge_dofs[axis], self.n_dof),
                )
            )
        return sp.vstack(blocks).tocsr()

    @cached_property
    def div_matrix(self):
        """Divergence ``D = -G^T``, a centered difference at each interior node."""
        return (-self.grad_matrix.T).tocsr()

    @cached_property
    def laplacian5(self):
        """Five-point Laplacian with zero Dirichlet data outside the interior nodes (equals ``D G``)."""
        return (self.div_matrix @ self.grad_matrix).tocsr()

    @cached_property
    def average_matrix(self):
        """Node unknowns to edge unknowns by averaging the two end nodes."""
        return abs(self.grad_matrix) * (0.5 * self.spacing)

    def inner(self, a, b):
        return self.cell_area * float(np.dot(a, b))

    def norm(self, a):
        return float(np.sqrt(self.cell_area * np.dot(a, a)))


def _edge_region(grid, axis, region):
    if region is None:
        return np.ones(grid.edge_shape(axis), dtype=bool)
    if region == "interior":
        return grid.edge_dof_index(axis) >= 0
    if region == "valid":
        ok = grid.mask != EXTERIOR
        return (ok[:-1] & ok[1:]) if axis == 0 else (ok[:, :-1] & ok[:, 1:])
    raise ValueError(f"unknown region {region!r}")


def _node_region(grid, region):
    if region is None:
        return np.ones(grid.shape, dtype=bool)
    if region == "interior":
        return grid.mask == INTERIOR
    if region == "valid":
        return grid.mask != EXTERIOR
    raise ValueError(f"unknown region {region!r}")


@dataclass
class ScalarField:
    values: np.ndarray
    grid: Grid

    @classmethod
    def from_function(cls, grid, fn, region="interior"):
        vals = np.asarray(fn(grid.points.reshape(-1, 2)), dtype=float).reshape(grid.shape)
        return cls(np.where(_node_region(grid, region), vals, 0.0), grid)

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.shape), grid)

    @classmethod
    def from_dofs(cls, grid, d):
        v = np.zeros((grid.n + 1) ** 2)
        v[grid.dof_nodes] = d
        return cls(v.reshape(grid.shape), grid)

    def dofs(self):
        return self.values.ravel()[self.grid.dof_nodes].copy()

    def __call__(self, x):
        """Bilinear interpolation of all node values."""
        idx, w = self.grid.stencil(x)
        return np.sum(self.values.ravel()[np.maximum(idx, 0)] * w, axis=1)

    def norm(self):
        return self.grid.norm(self.dofs())


@dataclass
class CovectorField:
    """Staggered covector field: ``e1`` on x-edges, ``e2`` on y-edges."""

    e1: np.ndarray
    e2: np.ndarray
    grid: Grid

    @classmethod
    def from_function(cls, grid, fn, region="interior"):
        comps = []
        for axis in (0, 1):
            pts = grid.edge_points(axis)
            vals = np.asarray(fn(pts.reshape(-1, 2)), dtype=float)[:, axis].reshape(pts.shape[:2])
            comps.append(np.where(_edge_region(grid, axis, region), vals, 0.0))
        return cls(comps[0], comps[1], grid)

    @classmethod
    def from_nodal(cls, grid, values, region="interior"):
        """Average node values ``(n+1, n+1, 2)`` onto the edges."""
        v = np.asarray(values, dtype=float)
        e1 = 0.5 * (v[:-1, :, 0] + v[1:, :, 0])
        e2 = 0.5 * (v[:, :-1, 1] + v[:, 1:, 1])
        return cls(np.where(_edge_region(grid, 0, region), e1, 0.0), np.where(_edge_region(grid, 1, region), e2, 0.0), grid)

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.edge_shape(0)), np.zeros(grid.edge_shape(1)), grid)

    @classmethod
    def from_dofs(cls, grid, d):
        d = np.asarray(d, dtype=float)
        m1, m2 = grid.n_edge_dofs
        if d.shape != (m1 + m2,):
            raise ValueError(f"covector vector must have length {m1 + m2}, got {d.shape}")
        comps = []
        for axis, part in ((0, d[:m1]), (1, d[m1:])):
            e = np.zeros(int(np.prod(grid.edge_shape(axis))))
            e[grid.edge_dof_flat(axis)] = part
            comps.append(e.reshape(grid.edge_shape(axis)))
        return cls(comps[0], comps[1], grid)

    def dofs(self):
        g = self.grid
        return np.concatenate([self.e1.ravel()[g.edge_dof_flat(0)], self.e2.ravel()[g.edge_dof_flat(1)]])

    @property
    def values(self):
        """Node values ``(n+1, n+1, 2)``, averaging the two adjacent edges."""
        v = np.zeros(self.grid.shape + (2,))
        v[:-1, :, 0] += 0.5 * self.e1
        v[1:, :, 0] += 0.5 * self.e1
        v[:, :-1, 1] += 0.5 * self.e2
        v[:, 1:, 1] += 0.5 * self.e2
        return v

    def __call__(self, x):
        out = []
        for axis, e in ((0, self.e1), (1, self.e2)):
            idx, w = self.grid.edge_stencil(x, axis)
            out.append(np.sum(e.ravel()[np.maximum(idx, 0)] * w, axis=1))
        return np.column_stack(out)

    def norm(self):
        return self.grid.norm(self.dofs())


@dataclass
class Pair:
    """A covector field together with a scalar field, ``[f, phi]``."""

    f: CovectorField
    phi: ScalarField

    def __post_init__(self):
        if self.f.grid != self.phi.grid:
            raise ValueError("pair components must share one grid")

    @property
    def grid(self):
        return self.f.grid

    @classmethod
    def from_vector(cls, grid, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (grid.n_pair,):
            raise ValueError(f"pair vector must have length {grid.n_pair}, got {vec.shape}")
        k = grid.n_f
        return cls(CovectorField.from_dofs(grid, vec[:k]), ScalarField.from_dofs(grid, vec[k:]))

    def to_vector(self):
        return np.concatenate([self.f.dofs(), self.phi.dofs()])

    def norm(self):
        return self.grid.norm(self.to_vector())


# ---- finite differences on full arrays ------------------------------------------


def divergence(f):
    """``d1 f1 + d2 f2`` at interior and band nodes (Euclidean reference metric).

    Each term is the centered difference of the two edge values around the
    node; edges off the lattice count as zero.
    """
    g = f.grid
    h = g.spacing
    d = np.zeros(g.shape)
    d[:-1, :] += f.e1
    d[1:, :] -= f.e1
    d[:, :-1] += f.e2
    d[:, 1:] -= f.e2
    return ScalarField(np.where(g.mask != EXTERIOR, d / h, 0.0), g)


def gradient(phi):
    """Covector ``d phi``: the difference of node values along every edge."""
    g = phi.grid
    u = phi.values
    return CovectorField((u[1:] - u[:-1]) / g.spacing, (u[:, 1:] - u[:, :-1]) / g.spacing, g)


def poisson_dirichlet(rhs, dom=None, tol=1e-10, max_iter=None, solver="cg"):
    """Solve ``Laplace(phi) = rhs`` on the interior nodes with zero boundary values.

    Five-point Laplacian.  ``solver="cg"`` runs conjugate gradients to relative
    residual ``tol`` and raises :class:`NoConvergence` past ``max_iter``;
    ``"direct"`` uses a sparse factorization.
    """
    g = rhs.grid
    if dom is not None and dom != g.domain:
        raise ValueError("rhs grid was built for a different domain")
    L = g.laplacian5
    b = rhs.dofs()
    if solver == "direct":
        x = spla.spsolve((-L).tocsc(), -b)
    elif solver == "cg":
        x, _ = cg(lambda u: -(L @ u), -b, tol=tol, max_iter=max_iter or 20 * g.n_dof)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return ScalarField.from_dofs(g, x)


class SolenoidalProjector:
    """Orthogonal projector onto ``{f : D f = 0}`` for covector unknowns.

    Factorizes the (definite) five-point Laplacian once.
    """

    def __init__(self, grid):
        self.grid = grid
        self._G = grid.grad_matrix
        self._D = grid.div_matrix
        self._lu = spla.splu((-grid.laplacian5).tocsc())

    def potential(self, fvec):
        return self._lu.solve(-(self._D @ fvec))

    def split(self, fvec):
        phi = self.potential(fvec)
        return fvec - self._G @ phi, phi

    def project(self, fvec):
        return self.split(fvec)[0]

    def project_pair(self, pvec):
        k = self.grid.n_f
        out = np.array(pvec, dtype=float)
        out[:k] = self.project(out[:k])
        return out


def solenoidal_decompose(f, dom=None, tol=1e-10, solver="cg"):
    """Split ``f = f_s + d phi`` with ``D f_s = 0`` and ``phi = 0`` off the interior.

    ``phi`` solves the Dirichlet problem ``Laplace(phi) = div f``; since the
    Laplacian equals ``D G`` the split is orthogonal in the grid inner product.
    """
    g = f.grid
    if dom is not None and dom != g.domain:
        raise ValueError("field grid was built for a different domain")
    fvec = f.dofs()
    rhs = ScalarField.from_dofs(g, g.div_matrix @ fvec)
    phi = poisson_dirichlet(rhs, tol=tol, solver=solver)
    fs = fvec - g.grad_matrix @ phi.dofs()
    return CovectorField.from_dofs(g, fs), phi


# ---- random smooth fields ------------------------------------------------------


def _lowpass_noise(grid, rng, n_comp, cutoff):
    """White noise filtered by ``exp(-(|k| / cutoff)^2)`` with ``k`` in radians per unit length."""
    m = grid.n + 1
    noise = rng.standard_normal((n_comp, m, m))
    k = 2.0 * np.pi * np.fft.fftfreq(m, d=grid.spacing)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    filt = np.exp(-(KX**2 + KY**2) / cutoff**2)
    return np.real(np.fft.ifft2(np.fft.fft2(noise, axes=(1, 2)) * filt, axes=(1, 2)))


def _taper(grid, pts, power=2):
    R = grid.domain.radius_M
    r2 = np.sum((pts - grid.domain.c) ** 2, axis=-1)
    return np.clip(1.0 - r2 / R**2, 0.0, None) ** power


def random_smooth_covector(grid, seed=0, cutoff=6.0):
    """Seeded low-pass covector field, tapered to vanish on the boundary of ``M``.

    Spectrum: Gaussian in wavenumber with scale ``cutoff``; the taper is
    ``(1 - |x|^2/R^2)^2``.  Normalized to unit maximum magnitude.
    """
    rng = np.random.default_rng(seed)
    u = _lowpass_noise(grid, rng, 2, cutoff)
    e1 = 0.5 * (u[0, :-1] + u[0, 1:]) * _taper(grid, grid.edge_points(0))
    e2 = 0.5 * (u[1, :, :-1] + u[1, :, 1:]) * _taper(grid, grid.edge_points(1))
    scale = max(np.max(np.abs(e1)), np.max(np.abs(e2)))
    f = CovectorField(e1 / scale, e2 / scale, grid)
    return CovectorField.from_dofs(grid, f.dofs())


def random_smooth_scalar(grid, seed=0, cutoff=6.0):
    rng = np.random.default_rng(seed)
    u = _lowpass_noise(grid, rng, 1, cutoff)[0] * _taper(grid, grid.points)
    u /= np.max(np.abs(u))
    return ScalarField(np.where(grid.mask == INTERIOR, u, 0.0), grid)


# ---- CSV ------------------------------------------------------------------------


def write_field_csv(field, path):
    """Write a field in row-major node order with header ``i,j,x,y,...``.

    For covectors, the row of node ``(i, j)`` holds ``f1`` on the edge to
    ``(i+1, j)`` and ``f2`` on the edge to ``(i, j+1)``; missing edges on the
    last row and column are written as zero.
    """
    g = field.grid
    m = g.n + 1
    I, J = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    P = g.points.reshape(-1, 2)
    if isinstance(field, CovectorField):
        v = np.zeros(g.shape + (2,))
        v[:-1, :, 0] = field.e1
        v[:, :-1, 1] = field.e2
        header, vals = "i,j,x,y,f1,f2", v.reshape(-1, 2)
    else:
        header, vals = "i,j,x,y,phi", field.values.reshape(-1, 1)
    lines = [header]
    for a, b, p, row in zip(I.ravel(), J.ravel(), P, vals):
        lines.append(",".join([str(a), str(b)] + [repr(float(z)) for z in (*p, *row)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path, domain=None):
    """Read a field written by :func:`write_field_csv`.

    The grid size is taken from the indices; the coordinates must match the
    grid built on ``domain``.
    """
    domain = domain or Domain()
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = int(data[:, 0].max())
    g = Grid(n, domain)
    m = n + 1
    if data.shape[0] != m * m:
        raise ValueError(f"expected {m * m} rows, found {data.shape[0]}")
    order = np.lexsort((data[:, 1], data[:, 0]))
    data = data[order]
    if not np.allclose(data[:, 2:4], g.points.reshape(-1, 2), atol=1e-9):
        raise ValueError("node coordinates do not match the grid for this domain")
    if header[4:] == ["f1", "f2"]:
        v = data[:, 4:6].reshape(m, m, 2)
        return CovectorField(v[:-1, :, 0].copy(), v[:, :-1, 1].copy(), g)
    if header[4:] == ["phi"]:
        return ScalarField(data[:, 4].reshape(m, m), g)
    raise ValueError(f"unrecognized field header {','.join(header)}")
