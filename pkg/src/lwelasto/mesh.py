"""Structured tetrahedral meshes of axis-aligned boxes.

Every hexahedral cell is split into six tetrahedra by the Kuhn (Freudenthal)
subdivision: the tetrahedron for a permutation ``s`` of the axes contains the
points whose local cell coordinates satisfy ``u[s0] >= u[s1] >= u[s2]``.
All cells share the same orientation, so the split is conforming and every
tetrahedron has the cell diagonal as an edge.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# Axis orderings for the six Kuhn tetrahedra, in a fixed order.
KUHN_PERMUTATIONS = tuple(itertools.permutations(range(3)))

BOUNDARY_ATOL = 1e-14


def _kuhn_offsets():
    """Corner offsets (4 x 3 integer) of each Kuhn tetrahedron, positively oriented."""
    offsets = []
    for perm in KUHN_PERMUTATIONS:
        corner = np.zeros(3, dtype=np.int64)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] = 1
            path.append(corner.copy())
        path = np.array(path)
        edges = path[1:] - path[0]
        if np.linalg.det(edges) < 0:
            path[[2, 3]] = path[[3, 2]]
        offsets.append(path)
    return np.array(offsets)


KUHN_OFFSETS = _kuhn_offsets()


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        n = tuple(int(v) for v in self.n)
        if len(lo) != 3 or len(hi) != 3 or len(n) != 3:
            raise ValueError("BoxDomain needs three coordinates and three cell counts")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        if any(v < 1 for v in n):
            raise ValueError(f"cell counts must be positive, got {n}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.n)

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.hi) - np.array(self.lo)))

    @classmethod
    def from_spacing(cls, lo, hi, spacing: float) -> "BoxDomain":
        """Box with per-axis cell counts ``round((hi - lo) / spacing)``."""
        extent = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
        n = np.rint(extent / spacing).astype(int)
        return cls(tuple(lo), tuple(hi), tuple(int(max(v, 1)) for v in n))

    def contains(self, points, tol=1e-12) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= np.array(self.lo) - tol) & (p <= np.array(self.hi) + tol), axis=1)


@dataclass(frozen=True)
class Mesh:
    domain: BoxDomain
    vertices: np.ndarray
    tets: np.ndarray
    boundary_vertex_flags: np.ndarray
    h: float
    # Cell index (i, j, k) and Kuhn type of every tet; tets are ordered cell by
    # cell (x fastest), six per cell.
    tet_cells: np.ndarray = field(repr=False)
    tet_types: np.ndarray = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_tets(self) -> int:
        return len(self.tets)

    def tet_volumes(self) -> np.ndarray:
        """Signed volumes under the stored vertex ordering."""
        v = self.vertices[self.tets]
        edges = v[:, 1:] - v[:, :1]
        return np.linalg.det(edges) / 6.0

    def locate(self, points):
        """Containing tet and local cell coordinates for each point.

        Returns ``(tet_index, local)`` where ``local`` are the coordinates of
        the point within its hexahedral cell, scaled to [0, 1]^3.  Raises
        ``ValueError`` for points outside the closed box.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        dom = self.domain
        if not np.all(dom.contains(p)):
            bad = p[~dom.contains(p)][0]
            raise ValueError(f"point {bad} lies outside the domain {dom.lo}..{dom.hi}")
        n = np.array(dom.n)
        scaled = (p - np.array(dom.lo)) / dom.spacing
        cell = np.clip(np.floor(scaled).astype(np.int64), 0, n - 1)
        local = np.clip(scaled - cell, 0.0, 1.0)
        # descending order of local coordinates picks the Kuhn tet; stable sort
        # keeps ties deterministic (tie points lie on a shared face)
        order = np.argsort(-local, axis=1, kind="stable")
        perm_index = {perm: i for i, perm in enumerate(KUHN_PERMUTATIONS)}
        lookup = np.zeros((3, 3, 3), dtype=np.int64)
        for perm, i in perm_index.items():
            lookup[perm] = i
        ttype = lookup[order[:, 0], order[:, 1], order[:, 2]]
        cell_id = cell[:, 0] + n[0] * (cell[:, 1] + n[1] * cell[:, 2])
        return cell_id * 6 + ttype, local


def build_box_mesh(domain: BoxDomain) -> Mesh:
    """Kuhn-subdivided structured tetrahedral mesh of ``domain``."""
    n1, n2, n3 = domain.n
    lo = np.array(domain.lo)
    hi = np.array(domain.hi)
    axes = [np.linspace(lo[a], hi[a], domain.n[a] + 1) for a in range(3)]
    # lexicographic, x fastest
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    kk, jj, ii = np.meshgrid(np.arange(n3), np.arange(n2), np.arange(n1), indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    corners = cells[:, None, None, :] + KUHN_OFFSETS[None, :, :, :]
    ids = corners[..., 0] + (n1 + 1) * (corners[..., 1] + (n2 + 1) * corners[..., 2])
    tets = ids.reshape(-1, 4)

    flags = np.zeros(len(vertices), dtype=bool)
    for a in range(3):
        flags |= np.abs(vertices[:, a] - lo[a]) <= BOUNDARY_ATOL
        flags |= np.abs(vertices[:, a] - hi[a]) <= BOUNDARY_ATOL

    # every Kuhn tet has the cell diagonal as its longest edge
    h = float(np.sqrt(np.sum(domain.spacing ** 2)))

    return Mesh(
        domain=domain,
        vertices=vertices,
        tets=tets,
        boundary_vertex_flags=flags,
        h=h,
        tet_cells=np.repeat(cells, 6, axis=0),
        tet_types=np.tile(np.arange(6), len(cells)),
    )


def mesh_statistics(mesh: Mesh) -> dict:
    v = mesh.vertices[mesh.tets]
    diff = v[:, :, None, :] - v[:, None, :, :]
    diam = np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))
    return {
        "num_vertices": mesh.num_vertices,
        "num_tets": mesh.num_tets,
        "h": float(diam.max()),
        "min_volume": float(mesh.tet_volumes().min()),
    }
