"""Stress recovered from displacement at volume quadrature points.

``kappa = kappa0 + lam * div(w) I + 2 mu * sym(grad w)``.  The recovered
field lies in the image of the displacement space, so it is evaluated
directly from basis gradients without a separate solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import MaterialParams, assemble_scalar_mass
from .solver import SolverConfig, cg_solve
from .space import FunctionSpace, split_components

# storage order of the six independent components
COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
COMPONENT_NAMES = ("k11", "k22", "k33", "k12", "k13", "k23")


def component_index(i: int, j: int) -> int:
    """Position of kappa_ij (0-based i, j) in the six-component storage."""
    key = (min(i, j), max(i, j))
    return COMPONENTS.index(key)


@dataclass
class QuadratureData:
    """Per-tet quadrature points, weights and physical basis gradients."""
    space: FunctionSpace
    weights: np.ndarray = field(repr=False)     # (nt, nq) including |det J|
    phi: np.ndarray = field(repr=False)         # (nq, nb)
    dphi_ref: np.ndarray = field(repr=False)    # (nq, nb, 3)
    points: np.ndarray = field(repr=False)      # reference points (nq, 3)

    @classmethod
    def for_space(cls, space: FunctionSpace, order=None):
        from .element import tet_quadrature
        rule = space.element.quadrature() if order is None else tet_quadrature(order)
        phi, dphi = space.element.tabulate(rule.points)
        w = np.abs(space.det_jacobians)[:, None] * rule.weights[None, :]
        return cls(space=space, weights=w, phi=phi, dphi_ref=dphi, points=rule.points)

    def physical_points(self) -> np.ndarray:
        return self.space.map_to_physical(self.points)

    def displacement_gradient(self, coeffs) -> np.ndarray:
        """(nt, nq, 3, 3) Jacobian of a vector field, [i, j] = d w_i / d x_j."""
        comps = split_components(self.space, coeffs)[self.space.cell_dofs]   # (nt, nb, 3)
        ref = np.einsum("tkc,qkr->tqcr", comps, self.dphi_ref)
        return np.einsum("tqcr,tra->tqca", ref, self.space.inv_jacobians)


@dataclass
class StressField:
    values: np.ndarray          # (nt, nq, 6) in COMPONENTS order
    weights: np.ndarray = field(repr=False)   # (nt, nq)
    kappa0: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def component(self, i: int, j: int) -> np.ndarray:
        return self.values[..., component_index(i, j)]

    def tensor(self) -> np.ndarray:
        """Full symmetric (nt, nq, 3, 3) array."""
        out = np.empty(self.values.shape[:-1] + (3, 3))
        for c, (i, j) in enumerate(COMPONENTS):
            out[..., i, j] = self.values[..., c]
            out[..., j, i] = self.values[..., c]
        return out


def stress_from_gradient(grad, params: MaterialParams, kappa0) -> np.ndarray:
    """Six stress components from displacement gradients (..., 3, 3)."""
    kappa0 = np.asarray(kappa0, dtype=float)
    div = np.trace(grad, axis1=-2, axis2=-1)
    out = np.empty(grad.shape[:-2] + (6,))
    for c, (i, j) in enumerate(COMPONENTS):
        val = params.mu * (grad[..., i, j] + grad[..., j, i]) + kappa0[i, j]
        if i == j:
            val = val + params.lam * div
        out[..., c] = val
    return out


def recover_stress(space: FunctionSpace, w_coeffs, kappa0, params: MaterialParams, quad=None) -> StressField:
    quad = QuadratureData.for_space(space) if quad is None else quad
    grad = quad.displacement_gradient(w_coeffs)
    return StressField(
        values=stress_from_gradient(grad, params, kappa0),
        weights=quad.weights,
        kappa0=np.asarray(kappa0, dtype=float),
    )


def stress_norm(field: StressField) -> float:
    """Full 3x3 L2 norm; off-diagonal components count twice."""
    mult = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    return float(np.sqrt(np.sum(field.weights[..., None] * field.values ** 2 * mult)))


def stress_component_norm(field: StressField, i: int, j: int) -> float:
    """L2 norm of kappa_ij; ``i`` and ``j`` are 1-based."""
    if not (1 <= i <= 3 and 1 <= j <= 3):
        raise ValueError("stress indices must be in 1..3")
    vals = field.component(i - 1, j - 1)
    return float(np.sqrt(np.sum(field.weights * vals ** 2)))


def component_norms(field: StressField) -> np.ndarray:
    """L2 norms of the six stored components, COMPONENTS order."""
    return np.sqrt(np.einsum("tq,tqc->c", field.weights, field.values ** 2))


def project_stress(space: FunctionSpace, field: StressField, quad=None, scalar_mass=None) -> np.ndarray:
    """L2 projection of each component onto the continuous scalar space, (N, 6).

    Used for point-data output only.
    """
    quad = QuadratureData.for_space(space) if quad is None else quad
    M = assemble_scalar_mass(space) if scalar_mass is None else scalar_mass
    local = np.einsum("tq,tqc,qi->tic", quad.weights, field.values, quad.phi)
    dofs = space.cell_dofs.ravel()
    rhs = np.column_stack(
        [np.bincount(dofs, weights=local[..., c].ravel(), minlength=space.num_dofs) for c in range(6)]
    )
    x, _ = cg_solve(sp.csr_matrix(M), rhs, SolverConfig(rtol=1e-12, atol=1e-14))
    return x


def boundary_mismatch(space: FunctionSpace, w_coeffs, kappa0, params: MaterialParams) -> float:
    """Max deviation of the recovered stress from kappa0 over boundary vertices.

    The boundary condition kappa = kappa0 is not imposed; this measures by
    how much the recovered field departs from it.
    """
    from .space import evaluate_gradient
    pts = space.mesh.vertices[space.mesh.boundary_vertex_flags]
    if len(pts) == 0:
        return 0.0
    grad = evaluate_gradient(space, w_coeffs, pts)
    vals = stress_from_gradient(grad, params, kappa0)
    ref = np.array([kappa0[i][j] for i, j in COMPONENTS])
    return float(np.max(np.abs(vals - ref)))


def stress_gram_matrix(space: FunctionSpace, params: MaterialParams, blocks=None) -> sp.csr_matrix:
    """Matrix ``S`` with ``e^T S e = ||lam div(e) I + 2 mu sym(grad e)||_*^2``.

    Expanding the square gives ``(3 lam^2 + 4 lam mu) (div e)^2 + 4 mu^2 sym(grad e) : sym(grad e)``
    with ``sym : sym = (grad : grad + grad : grad^T) / 2``; every term is a
    combination of the gradient blocks, so stress error norms of
    displacement differences cost one sparse product.
    """
    from .assembly import assemble_gradient_blocks
    G = assemble_gradient_blocks(space) if blocks is None else blocks
    lam, mu = params.lam, params.mu
    c_div = 3 * lam * lam + 4 * lam * mu
    c_sym = 2 * mu * mu
    lap = G[0, 0] + G[1, 1] + G[2, 2]
    rows = []
    for b in range(3):
        row = []
        for a in range(3):
            # (div e)^2 couples e_b, e_a through G[b, a]; grad:grad^T through G[a, b]
            blk = c_div * G[b, a] + c_sym * G[a, b]
            if a == b:
                blk = blk + c_sym * lap
            row.append(blk)
        rows.append(row)
    return sp.bmat(rows, format="csr")
