"""Lagrange P2/P3 reference elements, simplex quadrature, and FE spaces.

Reference bases are built from the monomial basis through the inverted node
Vandermonde matrix, so values, gradients, and Hessians are all evaluated from
one coefficient table.  Quadrature rules are collapsed (Duffy) Gauss-Jacobi
tensor rules: positive weights, points strictly inside the simplex, arbitrary
requested exactness up to the supported caps.  Global spaces identify shared
degrees of freedom geometrically (node hashing with a tolerance-bucket grid).
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "QuadratureRule",
    "ReferenceElement",
    "FeSpace",
    "FeFunction",
    "cell_quadrature",
    "face_quadrature",
    "eval_fe",
    "interpolate",
]

_MAX_EXACTNESS = {2: 10, 3: 8}


class QuadratureRule(NamedTuple):
    """Quadrature on a reference simplex: positive weights, stated exactness."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int


def _gauss01(m):
    x, w = roots_legendre(m)
    return (x + 1.0) / 2.0, w / 2.0


def _jacobi01(m, alpha):
    """Nodes/weights for int_0^1 (1-x)^alpha f(x) dx."""
    x, w = roots_jacobi(m, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _simplex_rule(sdim, exactness):
    m = (exactness + 2) // 2  # Gauss: 2m-1 >= exactness
    if sdim == 1:
        x, w = _gauss01(m)
        return x[:, None], w
    if sdim == 2:
        # Duffy map (a,b) -> (a, b(1-a)); the (1-a) Jacobian is the Jacobi weight
        a, wa = _jacobi01(m, 1)
        b, wb = _gauss01(m)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.column_stack([A.ravel(), (B * (1 - A)).ravel()])
        w = np.outer(wa, wb).ravel()
        return pts, w
    if sdim == 3:
        # (a,b,c) -> (a, b(1-a), c(1-a)(1-b)); Jacobian (1-a)^2 (1-b)
        a, wa = _jacobi01(m, 2)
        b, wb = _jacobi01(m, 1)
        c, wc = _gauss01(m)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x = A.ravel()
        y = (B * (1 - A)).ravel()
        z = (C * (1 - A) * (1 - B)).ravel()
        pts = np.column_stack([x, y, z])
        w = (wa[:, None, None] * wb[None, :, None] * wc[None, None, :]).ravel()
        return pts, w
    raise ValueError(f"unsupported simplex dimension {sdim}")


def cell_quadrature(dim, exactness):
    """Rule on the reference simplex of dimension ``dim`` (2 or 3)."""
    _check_exactness(dim, exactness)
    pts, w = _simplex_rule(dim, exactness)
    return QuadratureRule(pts, w, int(exactness))


def face_quadrature(dim, exactness):
    """Rule on the reference face simplex (dimension ``dim`` - 1)."""
    _check_exactness(dim, exactness)
    pts, w = _simplex_rule(dim - 1, exactness)
    return QuadratureRule(pts, w, int(exactness))


def _check_exactness(dim, exactness):
    if dim not in _MAX_EXACTNESS:
        raise ValueError("dim must be 2 or 3")
    if not 1 <= exactness <= _MAX_EXACTNESS[dim]:
        raise ValueError(
            f"exactness {exactness} unsupported in {dim}D "
            f"(1..{_MAX_EXACTNESS[dim]})"
        )


class ReferenceElement:
    """Lagrange element of degree ``k`` on the reference simplex.

    Nodes are the principal lattice points with coordinates i/k.  The basis is
    monomials times the inverted node Vandermonde, which gives the Kronecker
    property by construction and exact analytic derivatives.
    """

    def __init__(self, dim, degree):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if degree not in (2, 3):
            raise ValueError("degree must be 2 or 3")
        self.dim = dim
        self.degree = degree
        multis = sorted(
            m
            for m in itertools.product(range(degree + 1), repeat=dim)
            if sum(m) <= degree
        )
        self.node_coords = np.array(multis, dtype=float) / degree
        self.exponents = np.array(multis, dtype=np.int64)
        self.node_count = len(multis)
        vander = self._monomials(self.node_coords)
        self.coeffs = np.linalg.inv(vander).T  # coeffs[b] = basis b in monomials

    def _monomials(self, pts):
        vals = np.ones((len(pts), self.node_count))
        for j, exp in enumerate(self.exponents):
            for i, e in enumerate(exp):
                if e:
                    vals[:, j] *= pts[:, i] ** e
        return vals

    def tabulate(self, pts):
        """Basis values/gradients/Hessians at reference points.

        Returns arrays of shape (N, nb), (N, nb, dim), (N, nb, dim, dim).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        N, d, nb = len(pts), self.dim, self.node_count
        # per-axis power tables up to the element degree
        pows = [
            np.vander(pts[:, i], self.degree + 1, increasing=True) for i in range(d)
        ]
        mono = np.ones((N, nb))
        dmono = np.zeros((N, nb, d))
        hmono = np.zeros((N, nb, d, d))
        for j, exp in enumerate(self.exponents):
            base = np.ones(N)
            for i, e in enumerate(exp):
                base = base * pows[i][:, e]
            mono[:, j] = base
            for a in range(d):
                ea = exp[a]
                if ea == 0:
                    continue
                term = np.full(N, float(ea))
                for i, e in enumerate(exp):
                    term = term * pows[i][:, e - 1 if i == a else e]
                dmono[:, j, a] = term
                # diagonal second derivative
                if ea >= 2:
                    term = np.full(N, float(ea * (ea - 1)))
                    for i, e in enumerate(exp):
                        term = term * pows[i][:, e - 2 if i == a else e]
                    hmono[:, j, a, a] = term
                # mixed second derivatives
                for b in range(a + 1, d):
                    eb = exp[b]
                    if eb == 0:
                        continue
                    term = np.full(N, float(ea * eb))
                    for i, e in enumerate(exp):
                        ei = e
                        if i == a:
                            ei -= 1
                        if i == b:
                            ei -= 1
                        term = term * pows[i][:, ei]
                    hmono[:, j, a, b] = term
                    hmono[:, j, b, a] = term
        C = self.coeffs
        val = mono @ C.T
        grad = np.einsum("njd,bj->nbd", dmono, C)
        hess = np.einsum("njab,cj->ncab", hmono, C)
        return val, grad, hess

    def evaluate(self, point):
        """(values, gradients, Hessians) of all basis functions at one point."""
        val, grad, hess = self.tabulate(np.asarray(point)[None, :])
        return val[0], grad[0], hess[0]


def _local_nodes_on_face(ref):
    """For each local face, the local node indices lying on it."""
    out = []
    lam0 = 1.0 - ref.node_coords.sum(axis=1)
    bary = np.column_stack([lam0, ref.node_coords])
    for lf in range(ref.dim + 1):
        out.append(np.flatnonzero(np.abs(bary[:, lf]) < 1e-12))
    return out


class _NodeIndex:
    """Geometric node identification: quantized buckets plus a neighbor scan
    so that coordinates straddling a bucket edge still match."""

    def __init__(self, dim, tol):
        self.tol = tol
        self.inv = 1.0 / tol
        self.buckets = {}
        self.coords = []
        self.offsets = list(itertools.product((-1, 0, 1), repeat=dim))

    def index_of(self, x):
        key = tuple(int(math.floor(c * self.inv + 0.5)) for c in x)
        hit = self.buckets.get(key)
        if hit is not None:
            return hit
        for off in self.offsets:
            nb = tuple(k + o for k, o in zip(key, off))
            hit = self.buckets.get(nb)
            if hit is not None and max(
                abs(a - b) for a, b in zip(self.coords[hit], x)
            ) <= 4 * self.tol:
                return hit
        idx = len(self.coords)
        self.coords.append(tuple(x))
        self.buckets[key] = idx
        return idx


class FeSpace:
    """Continuous Lagrange space of degree ``k`` on a simplicial mesh.

    Carries the global dof table (coordinates, cell-to-dof map, boundary dof
    set) and the per-cell affine geometry used to push reference derivatives
    to physical space.  Immutable after construction.
    """

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = int(degree)
        self.ref = ReferenceElement(mesh.dim, self.degree)

        d = mesh.dim
        pts = mesh.vertices[mesh.cells]  # (M, d+1, d)
        self.cell_origin = np.ascontiguousarray(pts[:, 0, :])
        # jacobian columns are the edge vectors
        self.jac = np.ascontiguousarray(np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2))
        self.jac_inv = np.linalg.inv(self.jac)
        self.jac_det = np.abs(np.linalg.det(self.jac))

        # physical node coordinates per cell: x = v0 + J @ ref_node
        phys = self.cell_origin[:, None, :] + np.einsum(
            "cij,nj->cni", self.jac, self.ref.node_coords
        )
        index = _NodeIndex(d, 1e-10 * mesh.h)
        M, nb = mesh.num_cells, self.ref.node_count
        cell_dofs = np.empty((M, nb), dtype=np.int64)
        for c in range(M):
            row = phys[c]
            for a in range(nb):
                cell_dofs[c, a] = index.index_of(row[a])
        self.cell_dofs = cell_dofs
        self.dof_coords = np.array(index.coords)
        self.ndofs = len(self.dof_coords)

        nodes_on_face = _local_nodes_on_face(self.ref)
        bdofs = set()
        for bf_cell, bf_local in zip(mesh.bface_cells, mesh.bface_locals):
            bdofs.update(cell_dofs[bf_cell, nodes_on_face[bf_local]].tolist())
        self.boundary_dofs = np.array(sorted(bdofs), dtype=np.int64)
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.boundary_dofs] = False
        self.interior_dofs = np.flatnonzero(mask)
        self._cache = {}

    @property
    def dim(self):
        return self.mesh.dim

    def default_cell_exactness(self):
        k, d = self.degree, self.mesh.dim
        return max(2 * k, d * (k - 2) + k) + 2

    def default_face_exactness(self):
        return 2 * (self.degree - 1) + 2

    def reference_coords(self, cells, points):
        """Pull physical points back to reference coordinates of given cells."""
        rel = points - self.cell_origin[cells]
        return np.einsum("cij,cj->ci", self.jac_inv[cells], rel)

    def function(self, coeffs=None):
        return FeFunction(self, coeffs)


class FeFunction:
    """Finite element function: a coefficient per global dof of its space."""

    def __init__(self, space, coeffs=None):
        self.space = space
        if coeffs is None:
            coeffs = np.zeros(space.ndofs)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndofs,):
            raise ValueError("coefficient vector length does not match space")
        self.coeffs = coeffs

    def copy(self):
        return FeFunction(self.space, self.coeffs.copy())

    def evaluate(self, points):
        """Point values anywhere in the domain (locates the containing cells)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.space.mesh.locate(pts)
        ref = self.space.reference_coords(cells, pts)
        val, _, _ = self.space.ref.tabulate(ref)
        return np.einsum("nb,nb->n", val, self.coeffs[self.space.cell_dofs[cells]])


def eval_fe(f, cell, ref_point):
    """Value, physical gradient, and physical Hessian of ``f`` on one cell.

    The affine map gives gradient = J^{-T} grad_ref and
    hessian = J^{-T} H_ref J^{-1} (no curvature term on affine cells).
    """
    space = f.space
    if not 0 <= cell < space.mesh.num_cells:
        raise IndexError(f"cell index {cell} out of range")
    val, grad, hess = space.ref.tabulate(np.asarray(ref_point, dtype=float)[None, :])
    dofs = space.cell_dofs[cell]
    coef = f.coeffs[dofs]
    jinv = space.jac_inv[cell]
    value = float(val[0] @ coef)
    g_ref = grad[0].T @ coef  # (d,)
    h_ref = np.einsum("bij,b->ij", hess[0], coef)
    gradient = jinv.T @ g_ref
    hessian = jinv.T @ h_ref @ jinv
    return value, gradient, hessian


def interpolate(space, g):
    """Nodal interpolant: coefficient at each dof = g(dof coordinate)."""
    vals = g(space.dof_coords)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(space.ndofs, float(vals))
    return FeFunction(space, vals)
