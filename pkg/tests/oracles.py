"""Independent reference computations used by several test modules.

The local-matrix oracle works in exact rational arithmetic: each Lagrange
basis function is expanded in monomials by inverting the nodal Vandermonde
matrix, and products are integrated with the closed form
int x^a y^b z^c = a! b! c! / (a + b + c + 3)! over the reference tet.
"""
from fractions import Fraction
from functools import lru_cache
from math import factorial, lcm

import numpy as np


def _monomials(max_deg):
    return [(a, b, c) for t in range(max_deg + 1) for c in range(t + 1) for b in range(t + 1 - c)
            for a in [t - b - c]]


def _exact_integral(a, b, c):
    return Fraction(factorial(a) * factorial(b) * factorial(c), factorial(a + b + c + 3))


def _solve_exact(A, B):
    """Gauss-Jordan elimination over the rationals; A is square, B has columns."""
    n = len(A)
    M = [list(A[i]) + list(B[i]) for i in range(n)]
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
def reference_coefficients(degree, multi_indices):
    """Monomial coefficients C[m][i] of the nodal basis at the given lattice nodes."""
    monos = _monomials(degree)
    nodes = [tuple(Fraction(int(a), degree) for a in mi[1:]) for mi in multi_indices]
    V = [[x ** a * y ** b * z ** c for (a, b, c) in monos] for (x, y, z) in nodes]
    n = len(nodes)
    ident = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    return monos, _solve_exact(V, ident)


def _derivative(monos, coeffs, r):
    """Coefficients of d/dx_r of each basis function, on the same monomial list."""
    index = {m: k for k, m in enumerate(monos)}
    n = len(coeffs[0])
    out = [[Fraction(0)] * n for _ in monos]
    for k, m in enumerate(monos):
        if m[r] == 0:
            continue
        lower = list(m)
        lower[r] -= 1
        target = index[tuple(lower)]
        for i in range(n):
            out[target][i] += m[r] * coeffs[k][i]
    return out


def _integer_form(values):
    """Write rational ``values`` as (integer object array, common denominator)."""
    arr = np.array(values, dtype=object)
    den = lcm(*(Fraction(v).denominator for v in arr.flat))
    return np.vectorize(lambda v: int(Fraction(v) * den), otypes=[object])(arr), den


def _gram(monos, A, B):
    """sum_{m,n} A[m][i] B[n][j] int x^(m+n), as (integer array, denominator)."""
    nm = len(monos)
    Q = [[_exact_integral(*(p + q for p, q in zip(monos[a], monos[b]))) for b in range(nm)] for a in range(nm)]
    Ai, da = _integer_form(A)
    Bi, db = _integer_form(B)
    Qi, dq = _integer_form(Q)
    return Ai.T.dot(Qi).dot(Bi), da * db * dq


def _as_fractions(integers, den):
    return np.vectorize(lambda v: Fraction(v, den), otypes=[object])(integers)


@lru_cache(maxsize=None)
def exact_reference_matrices(degree, multi_indices):
    """Exact reference mass (nb x nb) and gradient products S[r][s] (nb x nb),
    each as (integer array, denominator)."""
    monos, C = reference_coefficients(degree, multi_indices)
    mass = _gram(monos, C, C)
    D = [_derivative(monos, C, r) for r in range(3)]
    S = [[_gram(monos, D[r], D[s]) for s in range(3)] for r in range(3)]
    return mass, S


def _inv3(J):
    (a, b, c), (d, e, f), (g, h, i) = J
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    adj = [[e * i - f * h, c * h - b * i, b * f - c * e],
           [f * g - d * i, a * i - c * g, c * d - a * f],
           [d * h - e * g, b * g - a * h, a * e - b * d]]
    return [[v / det for v in row] for row in adj], det


def exact_element_matrices(degree, multi_indices, vertices, lam, mu):
    """Exact local mass and vector stiffness on the tet with rational ``vertices``.

    The stiffness is that of A(u, v) = (lam + mu) grad u : grad v + mu div u div v,
    component-major.  Returns numpy object arrays of Fractions.
    """
    v0 = vertices[0]
    J = [[vertices[c + 1][r] - v0[r] for c in range(3)] for r in range(3)]
    _, det = _inv3(J)
    vol = abs(det)
    # inverse Jacobian = adj / det; scale the adjugate to integers
    adj, dadj = _integer_form([[v * det for v in row] for row in _inv3(J)[0]])
    (mass_i, dmass), S = exact_reference_matrices(degree, multi_indices)
    dS = lcm(*(d for row in S for _, d in row))
    S_i = [[Si * (dS // d) for Si, d in row] for row in S]
    den = dadj * dadj * det * det * dS
    G = [[None] * 3 for _ in range(3)]
    for a in range(3):
        for b in range(3):
            acc = sum(adj[r][a] * adj[s][b] * S_i[r][s] for r in range(3) for s in range(3))
            G[a][b] = _as_fractions(acc, 1) * (vol / den)
    lap = G[0][0] + G[1][1] + G[2][2]
    nb = mass_i.shape[0]
    K = np.zeros((3 * nb, 3 * nb), dtype=object)
    for b in range(3):
        for a in range(3):
            blk = mu * G[b][a]
            if a == b:
                blk = blk + (lam + mu) * lap
            K[b * nb:(b + 1) * nb, a * nb:(a + 1) * nb] = blk
    return _as_fractions(mass_i, dmass) * vol, K, G


def compare_entries(approx, exact, rtol=1e-12):
    """Largest entrywise relative error; exactly-zero oracle entries are measured
    against the largest oracle magnitude."""
    ex = np.array(exact, dtype=float)
    ap = np.asarray(approx, dtype=float)
    scale = np.abs(ex).max()
    nz = np.array(exact != 0) if isinstance(exact, np.ndarray) else ex != 0
    rel = np.zeros_like(ex)
    rel[nz] = np.abs(ap[nz] - ex[nz]) / np.abs(ex[nz])
    rel[~nz] = np.abs(ap[~nz]) / scale
    return float(rel.max())


# a deliberately skewed tet with rational vertices
SKEW_TET = (
    (Fraction(1, 3), Fraction(-1, 2), Fraction(0)),
    (Fraction(3, 2), Fraction(-1, 4), Fraction(1, 5)),
    (Fraction(1, 2), Fraction(1), Fraction(-1, 3)),
    (Fraction(0), Fraction(1, 7), Fraction(5, 4)),
)


def erf_antiderivative(t, g_c, t_0=0.0):
    """Closed-form integral of (1 - a^2) exp(-a^2), a = pi g_c (t - t_0), from t_0 to t."""
    from scipy.special import erf
    c = np.pi * g_c
    tau = np.asarray(t, dtype=float) - t_0
    return np.sqrt(np.pi) / (4 * c) * erf(c * tau) + 0.5 * tau * np.exp(-(c * tau) ** 2)
