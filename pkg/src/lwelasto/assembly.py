"""Mass, stiffness and load assembly for the vector Lagrange space.

The stiffness operator represents the bilinear form

    A(u, v) = (lam + mu) * int grad(u) : grad(v) + mu * int div(u) div(v)

on component-major vector fields.  Its scalar building blocks are the
matrices ``G[a][b]_ij = int d_a(phi_i) d_b(phi_j)``: the Laplacian block is
``G00 + G11 + G22`` and the divergence coupling between components ``b``
(rows) and ``a`` (columns) is ``G[b][a]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .space import FunctionSpace


@dataclass(frozen=True)
class MaterialParams:
    nu: float        # density
    lam: float
    mu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("density nu must be positive")
        if not self.mu > 0:
            raise ValueError("shear modulus mu must be positive")

    @classmethod
    def from_engineering(cls, E: float, alpha: float, nu: float) -> "MaterialParams":
        """Lamé parameters from elastic modulus ``E`` and Poisson ratio ``alpha``."""
        if alpha == 0.5 or alpha == -1.0:
            raise ValueError(f"Poisson ratio {alpha} makes the Lamé conversion singular")
        lam = alpha * E / ((1.0 + alpha) * (1.0 - 2.0 * alpha))
        mu = E / (2.0 * (1.0 + alpha))
        return cls(nu=nu, lam=lam, mu=mu)

    @property
    def coercive(self) -> bool:
        """True when lam + mu > 0, the hypothesis under which A is an inner product."""
        return self.lam + self.mu > 0


def _unique_shapes(space: FunctionSpace):
    # structured meshes have only a handful of distinct affine maps
    key = np.round(space.jacobians.reshape(len(space.jacobians), 9), 14)
    shapes, inverse = np.unique(key, axis=0, return_inverse=True)
    return shapes.reshape(-1, 3, 3), inverse.ravel()


def reference_mass(element, rule=None) -> np.ndarray:
    rule = rule or element.quadrature()
    phi, _ = element.tabulate(rule.points)
    return np.einsum("q,qi,qj->ij", rule.weights, phi, phi)


def reference_gradient_products(element, rule=None) -> np.ndarray:
    """S[r, s, i, j] = int d_r(phi_i) d_s(phi_j) over the reference tet."""
    rule = rule or element.quadrature()
    _, dphi = element.tabulate(rule.points)
    return np.einsum("q,qir,qjs->rsij", rule.weights, dphi, dphi)


def _inverse_and_det(jacobian):
    """Adjugate inverse and determinant of a 3x3 matrix in extended precision."""
    (a, b, c), (d, e, f), (g, h, i) = np.asarray(jacobian, dtype=np.longdouble)
    adj = np.array([[e * i - f * h, c * h - b * i, b * f - c * e],
                    [f * g - d * i, a * i - c * g, c * d - a * f],
                    [d * h - e * g, b * g - a * h, a * e - b * d]], dtype=np.longdouble)
    det = a * adj[0, 0] + b * adj[1, 0] + c * adj[2, 0]
    return adj / det, det


def element_mass(element, jacobian) -> np.ndarray:
    from .element import exact_reference_integrals
    mass, _ = exact_reference_integrals(element.degree)
    _, det = _inverse_and_det(jacobian)
    return (abs(det) * mass.astype(np.longdouble)).astype(float)


def _gradient_blocks_ld(element, jacobian):
    from .element import exact_reference_integrals
    _, S = exact_reference_integrals(element.degree)
    inv, det = _inverse_and_det(jacobian)
    return abs(det) * np.einsum("ra,sb,rsij->abij", inv, inv, S.astype(np.longdouble))


def element_gradient_blocks(element, jacobian) -> np.ndarray:
    """G[a, b, i, j] = int_T d_a(phi_i) d_b(phi_j) for one affine tet."""
    return _gradient_blocks_ld(element, jacobian).astype(float)


def element_stiffness(element, jacobian, params: MaterialParams) -> np.ndarray:
    """Local vector stiffness (3 nb x 3 nb), component-major like the global one."""
    G = _gradient_blocks_ld(element, jacobian)
    nb = G.shape[-1]
    lap = G[0, 0] + G[1, 1] + G[2, 2]
    out = np.zeros((3 * nb, 3 * nb), dtype=np.longdouble)
    for b in range(3):
        for a in range(3):
            blk = params.mu * G[b, a]
            if a == b:
                blk = blk + (params.lam + params.mu) * lap
            out[b * nb:(b + 1) * nb, a * nb:(a + 1) * nb] = blk
    return out.astype(float)


def _scatter(space: FunctionSpace, element_mats, inverse) -> sp.csr_matrix:
    dofs = space.cell_dofs
    nb = dofs.shape[1]
    rows = np.repeat(dofs, nb, axis=1).ravel()
    cols = np.tile(dofs, (1, nb)).ravel()
    data = element_mats[inverse].ravel()
    n = space.num_dofs
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def assemble_scalar_mass(space: FunctionSpace) -> sp.csr_matrix:
    shapes, inverse = _unique_shapes(space)
    mats = np.array([element_mass(space.element, J) for J in shapes])
    return _scatter(space, mats, inverse)


def assemble_gradient_blocks(space: FunctionSpace) -> dict:
    """Scalar matrices ``G[(a, b)]`` for all 9 derivative pairs."""
    shapes, inverse = _unique_shapes(space)
    mats = np.array([element_gradient_blocks(space.element, J) for J in shapes])
    blocks = {}
    for a in range(3):
        for b in range(a, 3):
            blocks[a, b] = _scatter(space, np.ascontiguousarray(mats[:, a, b]), inverse)
            if a != b:
                blocks[b, a] = blocks[a, b].T.tocsr()
    return blocks


def assemble_mass(space: FunctionSpace, scalar_mass=None) -> sp.csr_matrix:
    """Block-diagonal vector mass matrix."""
    M = assemble_scalar_mass(space) if scalar_mass is None else scalar_mass
    return sp.block_diag([M, M, M], format="csr")


def stiffness_from_blocks(blocks: dict, params: MaterialParams) -> sp.csr_matrix:
    lap = blocks[0, 0] + blocks[1, 1] + blocks[2, 2]
    c_grad = params.lam + params.mu
    rows = []
    for b in range(3):
        row = []
        for a in range(3):
            blk = params.mu * blocks[b, a]
            if a == b:
                blk = blk + c_grad * lap
            row.append(blk)
        rows.append(row)
    return sp.bmat(rows, format="csr")


def assemble_stiffness(space: FunctionSpace, params: MaterialParams, blocks=None) -> sp.csr_matrix:
    if not params.coercive:
        warnings.warn(
            f"lam + mu = {params.lam + params.mu:g} <= 0: the stiffness form is not coercive",
            stacklevel=2,
        )
    blocks = assemble_gradient_blocks(space) if blocks is None else blocks
    return stiffness_from_blocks(blocks, params)


def _scatter_vector(space, local):
    """Sum per-tet local vectors (nt, nb) or (nt, nb, 3) into a global vector."""
    n = space.num_dofs
    dofs = space.cell_dofs.ravel()
    if local.ndim == 2:
        return np.bincount(dofs, weights=local.ravel(), minlength=n)
    return np.concatenate(
        [np.bincount(dofs, weights=local[..., c].ravel(), minlength=n) for c in range(3)]
    )


def assemble_load(space: FunctionSpace, g_eval, order=None) -> np.ndarray:
    """Load vector ``b_i = int g . phi_i`` by volume quadrature.

    ``g_eval`` maps (m, 3) points to (m, 3) vectors (or (m,) for a scalar
    load).  Discontinuous integrands are sampled pointwise.
    """
    rule = space.element.quadrature() if order is None else _rule(order)
    phi, _ = space.element.tabulate(rule.points)
    pts = space.map_to_physical(rule.points)                 # (nt, nq, 3)
    nt, nq, _ = pts.shape
    g = np.asarray(g_eval(pts.reshape(-1, 3)), dtype=float)
    wdet = np.abs(space.det_jacobians)[:, None] * rule.weights[None, :]
    if g.ndim == 1:
        g = g.reshape(nt, nq)
        local = np.einsum("tq,tq,qi->ti", wdet, g, phi)
    else:
        g = g.reshape(nt, nq, 3)
        local = np.einsum("tq,tqc,qi->tic", wdet, g, phi)
    return _scatter_vector(space, local)


def _rule(order):
    from .element import tet_quadrature
    return tet_quadrature(order)


def ball_quadrature(center, radius, n_radial=8, n_polar=8, n_azimuth=16):
    """Product rule on the ball: Gauss in r (weight r^2), Gauss in cos(theta),
    uniform in phi.  Returns ``(points, weights)``; weights sum to the ball volume."""
    x, wr = roots_jacobi(n_radial, 0.0, 2.0)
    t = (x + 1.0) / 2.0
    wr = wr / 8.0 * radius ** 3
    r = radius * t
    c, wc = roots_legendre(n_polar)
    phi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    wp = np.full(n_azimuth, 2.0 * np.pi / n_azimuth)
    R, C, P = np.meshgrid(r, c, phi, indexing="ij")
    W = wr[:, None, None] * wc[None, :, None] * wp[None, None, :]
    s = np.sqrt(1.0 - C ** 2)
    pts = np.column_stack([(R * s * np.cos(P)).ravel(), (R * s * np.sin(P)).ravel(), C.ravel() * R.ravel()])
    return pts + np.asarray(center, dtype=float), W.ravel()


def assemble_ball_load(space: FunctionSpace, profile, center, radius, resolution=12) -> np.ndarray:
    """Load ``b_i = int_B profile(x) phi_i dx (1, 1, 1)`` integrated over the ball itself.

    The quadrature points live in the ball rather than in the tets, so the
    result does not depend on whether mesh quadrature points happen to fall
    inside a small ball.  The ball must lie in the closed domain.
    """
    pts, w = ball_quadrature(center, radius, resolution, resolution, 2 * resolution)
    tet_ids, _ = space.mesh.locate(pts)
    xi = space.reference_coords(tet_ids, pts)
    phi, _ = space.element.tabulate(xi)
    vals = np.asarray(profile(pts), dtype=float) * w
    scalar = np.bincount(
        space.cell_dofs[tet_ids].ravel(), weights=(phi * vals[:, None]).ravel(), minlength=space.num_dofs
    )
    return np.concatenate([scalar, scalar, scalar])


@dataclass
class ReducedSystem:
    """Operator and right-hand side restricted to the unconstrained DOFs."""
    op: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    size: int

    def expand(self, x_free) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.free] = x_free
        return out


def apply_dirichlet(op, rhs, boundary_dofs) -> ReducedSystem:
    """Eliminate homogeneous Dirichlet rows and columns."""
    n = op.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[np.asarray(boundary_dofs, dtype=np.int64)] = False
    free = np.flatnonzero(mask)
    op = sp.csr_matrix(op)
    return ReducedSystem(op=op[free][:, free].tocsr(), rhs=np.asarray(rhs)[free], free=free, size=n)


@dataclass
class Operators:
    """Everything the time loop needs, assembled once for a space."""
    space: FunctionSpace
    params: MaterialParams
    scalar_mass: sp.csr_matrix = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)
    mass_interior: sp.csr_matrix = field(repr=False)       # scalar, interior DOFs
    stiffness_interior: sp.csr_matrix = field(repr=False)  # vector, interior DOFs

    @property
    def mass(self) -> sp.csr_matrix:
        return assemble_mass(self.space, self.scalar_mass)


def lumped(mass: sp.csr_matrix) -> sp.csr_matrix:
    """Diagonal mass by HRZ scaling (diagonal rescaled to keep total mass)."""
    d = mass.diagonal()
    return sp.diags(d * (mass.sum() / d.sum()), format="csr")


def build_operators(space: FunctionSpace, params: MaterialParams, lump_mass=False) -> Operators:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        K = assemble_stiffness(space, params)
    M = assemble_scalar_mass(space)
    if lump_mass:
        M = lumped(M)
    interior = space.interior_dofs
    vint = space.vector_interior_dofs()
    return Operators(
        space=space,
        params=params,
        scalar_mass=M,
        stiffness=K,
        mass_interior=M[interior][:, interior].tocsr(),
        stiffness_interior=K[vint][:, vint].tocsr(),
    )
