"""Continuous Lagrange spaces on structured Kuhn meshes.

On a Kuhn mesh every degree-``d`` Lagrange node sits on the refined lattice
with ``d * n + 1`` points per axis, so global DOFs are numbered by their
lattice position (x fastest).  Vector fields are stored component-major:
``[u_x (N), u_y (N), u_z (N)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .element import ReferenceElement, reference_element
from .mesh import KUHN_OFFSETS, Mesh


@dataclass(frozen=True)
class FunctionSpace:
    mesh: Mesh
    degree: int
    element: ReferenceElement = field(repr=False)
    cell_dofs: np.ndarray = field(repr=False)       # (ntets, nb) global scalar DOFs
    node_coords: np.ndarray = field(repr=False)     # (N, 3)
    boundary_dofs: np.ndarray = field(repr=False)
    interior_dofs: np.ndarray = field(repr=False)
    jacobians: np.ndarray = field(repr=False)       # (ntets, 3, 3), columns are edges
    inv_jacobians: np.ndarray = field(repr=False)
    det_jacobians: np.ndarray = field(repr=False)

    @property
    def num_dofs(self) -> int:
        """Scalar DOF count."""
        return len(self.node_coords)

    @property
    def lattice_shape(self):
        return tuple(self.degree * n + 1 for n in self.mesh.domain.n)

    def vector_boundary_dofs(self) -> np.ndarray:
        n = self.num_dofs
        return np.concatenate([self.boundary_dofs + c * n for c in range(3)])

    def vector_interior_dofs(self) -> np.ndarray:
        n = self.num_dofs
        return np.concatenate([self.interior_dofs + c * n for c in range(3)])

    def reference_coords(self, tet_ids, points) -> np.ndarray:
        v0 = self.mesh.vertices[self.mesh.tets[tet_ids, 0]]
        return np.einsum("pij,pj->pi", self.inv_jacobians[tet_ids], points - v0)

    def map_to_physical(self, xi) -> np.ndarray:
        """Physical coordinates (ntets, nq, 3) of reference points in every tet."""
        v0 = self.mesh.vertices[self.mesh.tets[:, 0]]
        return v0[:, None, :] + np.einsum("tij,qj->tqi", self.jacobians, xi)


def build_space(mesh: Mesh, degree: int) -> FunctionSpace:
    element = reference_element(degree)  # validates degree
    d = degree
    n = np.array(mesh.domain.n)
    shape = d * n + 1

    # lattice coordinate of every local node: d * cell + sum_i a_i * corner_i
    offsets = KUHN_OFFSETS[mesh.tet_types]                       # (nt, 4, 3)
    local = np.einsum("ki,tij->tkj", element.multi_indices, offsets)
    lattice = d * mesh.tet_cells[:, None, :] + local
    cell_dofs = lattice[..., 0] + shape[0] * (lattice[..., 1] + shape[1] * lattice[..., 2])

    kk, jj, ii = np.meshgrid(*(np.arange(s) for s in shape[::-1]), indexing="ij")
    lat = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    spacing = mesh.domain.spacing / d
    coords = np.array(mesh.domain.lo) + lat * spacing
    on_bnd = np.any((lat == 0) | (lat == shape - 1), axis=1)

    verts = mesh.vertices[mesh.tets]
    jac = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
    return FunctionSpace(
        mesh=mesh,
        degree=degree,
        element=element,
        cell_dofs=cell_dofs,
        node_coords=coords,
        boundary_dofs=np.flatnonzero(on_bnd),
        interior_dofs=np.flatnonzero(~on_bnd),
        jacobians=jac,
        inv_jacobians=np.linalg.inv(jac),
        det_jacobians=np.linalg.det(jac),
    )


def split_components(space: FunctionSpace, coeffs) -> np.ndarray:
    """View a flat vector field as (N, 3)."""
    coeffs = np.asarray(coeffs)
    return coeffs.reshape(3, space.num_dofs).T


def join_components(values) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values).T).ravel()


def interpolate(space: FunctionSpace, f) -> np.ndarray:
    """Nodal interpolant of ``f``.

    ``f`` maps an (m, 3) array of points to (m,) for scalar fields or (m, 3)
    for vector fields; vector results are returned component-major.
    """
    values = np.asarray(f(space.node_coords), dtype=float)
    if values.ndim == 0:
        values = np.full(space.num_dofs, float(values))
    if values.ndim == 1:
        return values.copy()
    return join_components(values)


def _is_vector(space, coeffs):
    size = np.shape(coeffs)[0]
    if size == space.num_dofs:
        return False
    if size == 3 * space.num_dofs:
        return True
    raise ValueError(f"coefficient length {size} does not match space with {space.num_dofs} DOFs")


def evaluate_field(space: FunctionSpace, coeffs, points):
    """Values of a discrete field at physical points.

    Returns (m,) for scalar fields and (m, 3) for vector fields; a single
    point gives a scalar or a 3-vector.
    """
    single = np.ndim(points) == 1
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tet_ids, _ = space.mesh.locate(pts)
    xi = space.reference_coords(tet_ids, pts)
    phi, _ = space.element.tabulate(xi)
    dofs = space.cell_dofs[tet_ids]
    if _is_vector(space, coeffs):
        comps = split_components(space, coeffs)
        out = np.einsum("pk,pkc->pc", phi, comps[dofs])
    else:
        out = np.einsum("pk,pk->p", phi, np.asarray(coeffs)[dofs])
    return out[0] if single else out


def evaluate_gradient(space: FunctionSpace, coeffs, points):
    """Jacobian of a vector field, (m, 3, 3) with entry [i, j] = d u_i / d x_j.

    Scalar fields give (m, 3).  On a shared face the value from the tet
    picked by the point locator is returned.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tet_ids, _ = space.mesh.locate(pts)
    xi = space.reference_coords(tet_ids, pts)
    _, dphi = space.element.tabulate(xi)
    # physical gradient: d phi / d x_a = sum_k Jinv[k, a] d phi / d xi_k
    gphys = np.einsum("pkr,pra->pka", dphi, space.inv_jacobians[tet_ids])
    dofs = space.cell_dofs[tet_ids]
    if _is_vector(space, coeffs):
        comps = split_components(space, coeffs)[dofs]     # (m, nb, 3)
        return np.einsum("pkc,pka->pca", comps, gphys)
    return np.einsum("pk,pka->pa", np.asarray(coeffs)[dofs], gphys)
