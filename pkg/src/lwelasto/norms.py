"""Norms of discrete fields, differences across resolutions, and order estimates."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import MaterialParams, assemble_scalar_mass, assemble_stiffness
from .space import FunctionSpace, split_components


def l2_vector_norm(space: FunctionSpace, coeffs, mass=None) -> float:
    """sqrt(u^T M u) with the vector mass matrix (or scalar mass for scalar fields)."""
    u = np.asarray(coeffs, dtype=float)
    if mass is None:
        mass = assemble_scalar_mass(space)
    if u.shape[0] == mass.shape[0]:
        q = float(u @ (mass @ u))
    else:
        cols = split_components(space, u)
        q = float(np.sum(cols * (mass @ cols)))
    return math.sqrt(max(q, 0.0))


def a_norm(space: FunctionSpace, coeffs, params: MaterialParams, stiffness=None) -> float:
    """sqrt(A(u, u)).

    When lam + mu < 0 the form can be negative; the signed square root is
    returned and a warning issued.
    """
    u = np.asarray(coeffs, dtype=float)
    if stiffness is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            stiffness = assemble_stiffness(space, params)
    q = float(u @ (stiffness @ u))
    if q < 0:
        warnings.warn(f"A(u, u) = {q:g} < 0 (lam + mu = {params.lam + params.mu:g})", stacklevel=2)
        return -math.sqrt(-q)
    return math.sqrt(q)


def max_in_time(series) -> float:
    values = np.asarray(list(series), dtype=float)
    if values.size == 0:
        raise ValueError("max_in_time of an empty series")
    return float(values.max())


def convergence_order(e_coarse: float, e_fine: float, refinement_factor: float = 3.0):
    """log(e_coarse / e_fine) / log(factor); None when either error is not positive."""
    if not (e_coarse > 0 and e_fine > 0):
        return None
    return math.log(e_coarse / e_fine) / math.log(refinement_factor)


def least_squares_order(resolutions, errors):
    """Slope of log(error) against log(resolution) over all positive pairs."""
    r = np.asarray(resolutions, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = (r > 0) & (e > 0)
    if ok.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(r[ok]), np.log(e[ok]), 1)
    return float(slope)


# --- cross-resolution comparison -------------------------------------------------------

def _same_domain(a: FunctionSpace, b: FunctionSpace) -> bool:
    da, db = a.mesh.domain, b.mesh.domain
    return np.allclose(da.lo, db.lo, rtol=0, atol=1e-12) and np.allclose(da.hi, db.hi, rtol=0, atol=1e-12)


def is_nested(fine: FunctionSpace, coarse: FunctionSpace) -> bool:
    """True when every coarse field is exactly representable in ``fine``."""
    if not _same_domain(fine, coarse) or fine.degree < coarse.degree:
        return False
    return all(nf % nc == 0 for nf, nc in zip(fine.mesh.domain.n, coarse.mesh.domain.n))


def prolongation(fine: FunctionSpace, coarse: FunctionSpace) -> sp.csr_matrix:
    """Scalar matrix evaluating coarse fields at the fine nodes.

    For nested spaces this is the exact embedding of the coarse space.
    """
    pts = fine.node_coords
    tet_ids, _ = coarse.mesh.locate(pts)
    xi = coarse.reference_coords(tet_ids, pts)
    phi, _ = coarse.element.tabulate(xi)
    rows = np.repeat(np.arange(len(pts)), phi.shape[1])
    cols = coarse.cell_dofs[tet_ids].ravel()
    P = sp.coo_matrix((phi.ravel(), (rows, cols)), shape=(fine.num_dofs, coarse.num_dofs)).tocsr()
    P.data[np.abs(P.data) < 1e-15] = 0.0
    P.eliminate_zeros()
    return P


def prolong(P: sp.csr_matrix, coeffs) -> np.ndarray:
    """Apply a scalar prolongation to a component-major vector field."""
    n_c = P.shape[1]
    u = np.asarray(coeffs, dtype=float)
    if u.shape[0] == n_c:
        return P @ u
    cols = u.reshape(3, n_c).T
    return np.ascontiguousarray((P @ cols).T).ravel()


def _fields_at_quadrature(host: FunctionSpace, u_host, other: FunctionSpace, u_other, order):
    from .element import tet_quadrature
    rule = host.element.quadrature() if order is None else tet_quadrature(order)
    phi, _ = host.element.tabulate(rule.points)
    pts = host.map_to_physical(rule.points).reshape(-1, 3)
    w = (np.abs(host.det_jacobians)[:, None] * rule.weights[None, :]).ravel()
    from .space import evaluate_field
    vec = np.shape(u_host)[0] == 3 * host.num_dofs
    if vec:
        vals_h = np.einsum("qk,tkc->tqc", phi, split_components(host, u_host)[host.cell_dofs]).reshape(-1, 3)
    else:
        vals_h = np.einsum("qk,tk->tq", phi, np.asarray(u_host)[host.cell_dofs]).ravel()
    vals_o = evaluate_field(other, u_other, pts)
    return vals_h, vals_o, w


def field_difference_norm(space_fine: FunctionSpace, coeffs_fine, space_coarse: FunctionSpace,
                          coeffs_coarse, order=None) -> float:
    """L2 norm of the difference of two fields on the same box.

    Integrated with the volume rule of the finer space (the one with more
    tets, then higher degree), evaluating the other field at its quadrature
    points; the result is symmetric in the two arguments.
    """
    if not _same_domain(space_fine, space_coarse):
        raise ValueError("fields live on different domains")
    if space_fine is space_coarse:
        d = np.asarray(coeffs_fine, dtype=float) - np.asarray(coeffs_coarse, dtype=float)
        return l2_vector_norm(space_fine, d)
    key_f = (space_fine.mesh.num_tets, space_fine.degree)
    key_c = (space_coarse.mesh.num_tets, space_coarse.degree)
    if key_c > key_f:
        space_fine, coeffs_fine, space_coarse, coeffs_coarse = space_coarse, coeffs_coarse, space_fine, coeffs_fine
    vf, vc, w = _fields_at_quadrature(space_fine, coeffs_fine, space_coarse, coeffs_coarse, order)
    diff2 = (vf - vc) ** 2
    if diff2.ndim == 2:
        diff2 = diff2.sum(axis=1)
    return float(math.sqrt(np.sum(w * diff2)))


@dataclass
class ErrorSeries:
    """Errors of a resolution sweep against a reference run."""
    parameter: str                   # "h" or "k"
    resolutions: list                # strictly decreasing by the refinement factor
    displacement_errors: list
    stress_errors: list
    cpu_seconds: list = field(default_factory=list)
    stress_cpu_seconds: list = field(default_factory=list)
    reference: str = ""
    norm: str = "max_n ||.||_0 (displacement), max_n ||.||_* (stress)"
    refinement_factor: float = 3.0

    def __post_init__(self):
        r = list(self.resolutions)
        for a, b in zip(r, r[1:]):
            if not b < a:
                raise ValueError("resolutions must be strictly decreasing")
        if any(e < 0 for e in list(self.displacement_errors) + list(self.stress_errors)):
            raise ValueError("errors must be nonnegative")

    def orders(self, which="displacement"):
        errs = self.displacement_errors if which == "displacement" else self.stress_errors
        out = [None]
        for (r0, e0), (r1, e1) in zip(zip(self.resolutions, errs), zip(self.resolutions[1:], errs[1:])):
            out.append(convergence_order(e0, e1, r0 / r1))
        return out

    def fitted_order(self, which="displacement"):
        errs = self.displacement_errors if which == "displacement" else self.stress_errors
        return least_squares_order(self.resolutions, errs)
