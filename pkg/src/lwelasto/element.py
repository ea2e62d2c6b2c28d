"""Lagrange elements and quadrature on the reference tetrahedron.

The reference tetrahedron has vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1);
barycentric coordinates are ``l0 = 1 - x - y - z``, ``l1 = x``, ``l2 = y``,
``l3 = z``.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

REFERENCE_VOLUME = 1.0 / 6.0
MAX_DEGREE = 4


def barycentric(xi):
    xi = np.atleast_2d(xi)
    return np.column_stack([1.0 - xi.sum(axis=1), xi])


def lattice_multi_indices(degree: int) -> np.ndarray:
    """Barycentric multi-indices (a0, a1, a2, a3) with sum ``degree``.

    Ordered lexicographically in (a3, a2, a1) so that the vertex nodes come
    out in a predictable place; the order only has to be fixed, not special.
    """
    out = []
    for a3 in range(degree + 1):
        for a2 in range(degree + 1 - a3):
            for a1 in range(degree + 1 - a3 - a2):
                out.append((degree - a1 - a2 - a3, a1, a2, a3))
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray    # reference coordinates, (nq, 3)
    weights: np.ndarray   # (nq,), sum to 1/6
    order: int

    @property
    def barycentric(self) -> np.ndarray:
        return barycentric(self.points)

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi_01(m: int, alpha: float):
    # nodes/weights on [0, 1] for the weight (1 - t)^alpha
    x, w = roots_jacobi(m, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def tet_quadrature(order: int) -> QuadratureRule:
    """Collapsed-coordinate Gauss-Jacobi rule exact for total degree ``order``.

    All weights are positive.  Uses ``m = ceil((order + 1) / 2)`` points per
    collapsed direction.
    """
    if order < 0:
        raise ValueError("quadrature order must be nonnegative")
    m = max(1, math.ceil((order + 1) / 2))
    t1, w1 = _gauss_jacobi_01(m, 2.0)
    t2, w2 = _gauss_jacobi_01(m, 1.0)
    t3, w3 = _gauss_jacobi_01(m, 0.0)
    a, b, c = np.meshgrid(t1, t2, t3, indexing="ij")
    wa, wb, wc = np.meshgrid(w1, w2, w3, indexing="ij")
    x = a
    y = b * (1.0 - a)
    z = c * (1.0 - a) * (1.0 - b)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    wts = (wa * wb * wc).ravel()
    return QuadratureRule(points=pts, weights=wts, order=order)


def _lattice_poly(lam, a, degree):
    """Value and derivative of prod_{j<a} (degree*lam - j) / (j + 1)."""
    val = np.ones_like(lam)
    der = np.zeros_like(lam)
    for j in range(a):
        factor = (degree * lam - j) / (j + 1)
        der = der * factor + val * (degree / (j + 1))
        val = val * factor
    return val, der


class ReferenceElement:
    """Equispaced Lagrange element of degree 1..4 on the reference tetrahedron."""

    def __init__(self, degree: int):
        if not 1 <= degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {degree}")
        self.degree = degree
        self.multi_indices = lattice_multi_indices(degree)
        self.nodes = self.multi_indices[:, 1:] / degree
        self.num_basis = len(self.multi_indices)

    def __repr__(self):
        return f"ReferenceElement(degree={self.degree})"

    def tabulate(self, xi):
        """Basis values (np, nb) and reference gradients (np, nb, 3) at ``xi``."""
        lam = barycentric(np.asarray(xi, dtype=float))
        npts, nb = len(lam), self.num_basis
        d = self.degree
        # per-barycentric factor tables for every exponent 0..d
        vals = np.empty((d + 1, npts, 4))
        ders = np.empty((d + 1, npts, 4))
        for a in range(d + 1):
            vals[a], ders[a] = _lattice_poly(lam, a, d)
        phi = np.ones((npts, nb))
        dphi_dlam = np.zeros((npts, nb, 4))
        for i in range(4):
            fi = vals[self.multi_indices[:, i], :, i].T
            phi *= fi
        for i in range(4):
            partial = np.ones((npts, nb))
            for j in range(4):
                table = ders if j == i else vals
                partial *= table[self.multi_indices[:, j], :, j].T
            dphi_dlam[:, :, i] = partial
        grad = dphi_dlam[:, :, 1:] - dphi_dlam[:, :, :1]
        return phi, grad

    def quadrature(self, extra: int = 0) -> QuadratureRule:
        """Volume rule exact for products of two basis functions (order 2d)."""
        return tet_quadrature(2 * self.degree + extra)


@lru_cache(maxsize=None)
def reference_element(degree: int) -> ReferenceElement:
    return ReferenceElement(degree)


def monomial_integral(a: int, b: int, c: int) -> float:
    """Exact integral of x^a y^b z^c over the reference tetrahedron."""
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def _monomial_exponents(max_degree: int):
    return [(a, b, c) for t in range(max_degree + 1) for c in range(t + 1) for b in range(t + 1 - c)
            for a in [t - b - c]]


def _rational_inverse(A):
    """Exact inverse of a square matrix of Fractions (Gauss-Jordan)."""
    n = len(A)
    M = [list(A[i]) + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        M[col] = [v / p for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [row[n:] for row in M]


@lru_cache(maxsize=None)
def exact_reference_integrals(degree: int):
    """Reference mass ``int phi_i phi_j`` and gradient products
    ``S[r, s, i, j] = int d_r phi_i d_s phi_j``, correctly rounded.

    The basis is expanded in monomials and products are integrated in exact
    integer arithmetic, so small entries produced by cancellation carry no
    quadrature round-off.
    """
    el = reference_element(degree)
    monos = _monomial_exponents(degree)
    V = [[Fraction(int(i) ** a * int(j) ** b * int(k) ** c, degree ** (a + b + c)) for (a, b, c) in monos]
         for (_, i, j, k) in el.multi_indices]
    C = _rational_inverse(V)                        # C[m][basis]
    lcd = 1
    for row in C:
        for v in row:
            lcd = lcd * v.denominator // math.gcd(lcd, v.denominator)
    Ci = np.array([[int(v * lcd) for v in row] for row in C], dtype=object)
    top = math.factorial(2 * degree + 3)

    def q_matrix(rows, cols):
        return np.array(
            [[math.factorial(a + d) * math.factorial(b + e) * math.factorial(c + f) * top
              // math.factorial(a + b + c + d + e + f + 3) for (d, e, f) in cols] for (a, b, c) in rows],
            dtype=object,
        )

    def to_float(num):
        den = lcd * lcd * top
        return np.array([[float(Fraction(int(v), den)) for v in row] for row in num])

    mass = to_float(Ci.T.dot(q_matrix(monos, monos)).dot(Ci))
    lower = _monomial_exponents(degree - 1)
    index = {m: n for n, m in enumerate(lower)}
    D = []
    for r in range(3):
        Dr = np.zeros((len(lower), Ci.shape[1]), dtype=object)
        Dr[:] = 0
        for n, m in enumerate(monos):
            if m[r]:
                low = list(m)
                low[r] -= 1
                Dr[index[tuple(low)]] += m[r] * Ci[n]
        D.append(Dr)
    Q = q_matrix(lower, lower)
    S = np.empty((3, 3) + mass.shape)
    for r in range(3):
        for s in range(r, 3):
            S[r, s] = to_float(D[r].T.dot(Q).dot(D[s]))
            S[s, r] = S[r, s].T
    return mass, S
