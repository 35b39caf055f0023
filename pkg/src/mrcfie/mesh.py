"""Oriented triangle surface meshes, connectivity and nested refinement.

Every mesh carries a nesting record describing how it was obtained from a
sequence of coarser meshes by splitting triangles.  All levels share the
vertex array of the finest mesh: refinement only appends vertices, so a
vertex index means the same point on every level where it is used.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

MIN_AREA = 1e-14
DEFAULT_MAX_TRIANGLES = 200_000


class MeshError(ValueError):
    """Raised for invalid, non-manifold or non-orientable surfaces."""


@dataclass(frozen=True)
class Sphere:
    """Analytic surface used to re-project vertices created by refinement."""

    center: tuple[float, float, float]
    radius: float

    def project(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        d = points - c
        return c + self.radius * d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Nesting:
    """Refinement record, level 0 coarsest.

    Attributes
    ----------
    levels : tuple of (F_l, 3) int arrays
        Triangles of each level; the last entry is the simulation mesh.
    parents : tuple of int arrays
        ``parents[l][t]`` is the level-``l`` triangle containing level
        ``l+1`` triangle ``t``.
    midpoints : tuple of (M, 3) int arrays
        Rows ``(a, b, m)`` with ``a < b``: edge ``(a, b)`` of level ``l`` was
        split at new vertex ``m`` when building level ``l+1``.
    green : tuple of bool arrays
        Per level, triangles created by bisection closure.
    """

    levels: tuple
    parents: tuple = ()
    midpoints: tuple = ()
    green: tuple = ()

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @classmethod
    def single(cls, triangles: np.ndarray) -> "Nesting":
        return cls(levels=(np.asarray(triangles),), parents=(), midpoints=(),
                   green=(np.zeros(len(triangles), dtype=bool),))

    def children_counts(self, level: int) -> np.ndarray:
        """Number of level ``level+1`` children of each level ``level`` triangle."""
        return np.bincount(self.parents[level], minlength=len(self.levels[level]))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle surface with counterclockwise triangles w.r.t. the outward normal."""

    vertices: np.ndarray
    triangles: np.ndarray
    nesting: Nesting | None = None
    labels: np.ndarray | None = None
    surface: Sphere | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (F, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.nesting is None:
            object.__setattr__(self, "nesting", Nesting.single(t))
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        bad = np.flatnonzero(self.areas <= MIN_AREA)
        if bad.size:
            raise MeshError(f"{bad.size} degenerate triangle(s), first is {bad[0]}")

    @property
    def n_vertices(self) -> int:
        """Number of vertices referenced by at least one triangle."""
        return int(np.unique(self.triangles).size)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) array of triangle vertex coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        d = np.stack([np.linalg.norm(c[:, k] - c[:, (k + 1) % 3], axis=1) for k in range(3)], axis=1)
        return d.max(axis=1)

    def signed_flux_of_position(self) -> float:
        """Integral of n.r over the surface (three times the enclosed volume)."""
        return float(np.sum(np.einsum("ij,ij->i", self.normals, self.centroids) * self.areas))

    def level_mesh(self, level: int) -> "TriMesh":
        """Mesh of a coarser nesting level, sharing this mesh's vertex array."""
        nest = self.nesting
        if level < 0:
            level += len(nest.levels)
        sub = Nesting(levels=nest.levels[: level + 1], parents=nest.parents[:level],
                      midpoints=nest.midpoints[:level], green=nest.green[: level + 1])
        return TriMesh(self.vertices, nest.levels[level], nesting=sub, surface=self.surface)


@dataclass(frozen=True, eq=False)
class EdgeConnectivity:
    """Edge tables of a mesh.

    Edge ``e`` is stored as the vertex pair traversed by its first triangle
    ``edge_tris[e, 0]`` (the lower index).  Interior edges are numbered first
    and are the RWG degrees of freedom; ``T+`` of RWG ``n`` is
    ``edge_tris[n, 0]`` and ``T-`` is ``edge_tris[n, 1]``.
    """

    n_vertices: int
    n_triangles: int
    edges: np.ndarray          # (E, 2)
    edge_tris: np.ndarray      # (E, 2), -1 in column 1 for boundary edges
    tri_edges: np.ndarray      # (F, 3) edge of local edge k = (v_k, v_{k+1})
    tri_edge_sign: np.ndarray  # (F, 3) +1 if the triangle is the edge's first triangle
    n_interior: int
    lengths: np.ndarray        # (E,)
    free_vertex: np.ndarray    # (E, 2) vertex opposite the edge in each triangle, -1 if none
    free_local: np.ndarray     # (E, 2) local index of that vertex
    vertex_edges: sparse.csr_matrix  # (Vtot, E) incidence, +1 at edge start, -1 at end

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_boundary(self) -> int:
        return self.n_edges - self.n_interior

    @property
    def closed(self) -> bool:
        return self.n_boundary == 0

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    @property
    def genus(self) -> int | None:
        if not self.closed:
            return None
        chi = self.euler_characteristic
        if chi % 2:
            raise MeshError(f"odd Euler characteristic {chi} for a closed surface")
        return (2 - chi) // 2

    # RWG view -----------------------------------------------------------
    @property
    def n_rwg(self) -> int:
        return self.n_interior

    @property
    def rwg_edges(self) -> np.ndarray:
        return self.edges[: self.n_interior]

    @property
    def rwg_lengths(self) -> np.ndarray:
        return self.lengths[: self.n_interior]

    @property
    def tplus(self) -> np.ndarray:
        return self.edge_tris[: self.n_interior, 0]

    @property
    def tminus(self) -> np.ndarray:
        return self.edge_tris[: self.n_interior, 1]

    def boundary_vertices(self) -> np.ndarray:
        b = self.edges[self.n_interior:]
        return np.unique(b)


def _edge_keys(triangles: np.ndarray) -> np.ndarray:
    """(F, 3, 2) vertex pairs of local edges k = (v_k, v_{k+1})."""
    t = triangles
    return np.stack([t, np.roll(t, -1, axis=1)], axis=2)


def build_connectivity(mesh: TriMesh) -> EdgeConnectivity:
    """Edge tables with RWG orientation; validates manifoldness and orientation."""
    tri = mesh.triangles
    nf = len(tri)
    he = _edge_keys(tri).reshape(-1, 2)
    key = np.sort(he, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        e = uniq[np.argmax(counts > 2)]
        raise MeshError(f"non-manifold edge {tuple(e)} shared by {counts.max()} triangles")

    # first / second half-edge of every unique edge, ordered by triangle index
    order = np.argsort(inv, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    first = order[starts]
    second = np.where(counts == 2, order[np.minimum(starts + 1, len(order) - 1)], -1)
    interior = counts == 2
    if np.any(interior):
        a = he[first[interior]]
        b = he[second[interior]]
        if np.any(a[:, 0] != b[:, 1]):
            raise MeshError("inconsistent triangle orientation across an interior edge")

    # interior edges first, each group in sorted-key order
    perm = np.concatenate([np.flatnonzero(interior), np.flatnonzero(~interior)])
    rank = np.empty_like(perm)
    rank[perm] = np.arange(len(perm))
    n_int = int(interior.sum())

    first, second = first[perm], second[perm]
    edges = he[first]
    t0 = first // 3
    t1 = np.where(second >= 0, second // 3, -1)
    edge_tris = np.stack([t0, t1], axis=1)

    tri_edges = rank[inv].reshape(nf, 3)
    he_index = np.arange(3 * nf).reshape(nf, 3)
    tri_edge_sign = np.where(first[tri_edges] == he_index, 1, -1)

    # vertex opposite local edge k is v_{k+2}
    loc0 = (first % 3 + 2) % 3
    free_local = np.stack([loc0, np.where(second >= 0, (second % 3 + 2) % 3, -1)], axis=1)
    free_vertex = np.stack([tri[t0, loc0],
                            np.where(second >= 0, tri[np.maximum(t1, 0), free_local[:, 1]], -1)],
                           axis=1)
    lengths = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    ne = len(edges)
    nv_tot = len(mesh.vertices)
    vertex_edges = sparse.csr_matrix(
        (np.concatenate([np.ones(ne), -np.ones(ne)]),
         (np.concatenate([edges[:, 0], edges[:, 1]]), np.concatenate([np.arange(ne)] * 2))),
        shape=(nv_tot, ne))
    return EdgeConnectivity(
        n_vertices=mesh.n_vertices, n_triangles=nf, edges=edges, edge_tris=edge_tris,
        tri_edges=tri_edges, tri_edge_sign=tri_edge_sign, n_interior=n_int, lengths=lengths,
        free_vertex=free_vertex, free_local=free_local, vertex_edges=vertex_edges)


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_min: float
    area_max: float
    area_min: float
    closed: bool
    genus: int | None

    @property
    def h_ratio(self) -> float:
        return self.h_max / self.h_min

    @property
    def area_ratio(self) -> float:
        return self.area_max / self.area_min


def mesh_stats(mesh: TriMesh, conn: EdgeConnectivity | None = None) -> MeshStats:
    conn = conn or build_connectivity(mesh)
    return MeshStats(h_max=float(conn.lengths.max()), h_min=float(conn.lengths.min()),
                     area_max=float(mesh.areas.max()), area_min=float(mesh.areas.min()),
                     closed=conn.closed, genus=conn.genus)


# ---------------------------------------------------------------------------
# orientation repair
# ---------------------------------------------------------------------------

def orient(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Make triangle orientation consistent and, for closed parts, outward.

    Breadth-first flood fill over edge-adjacent triangles; each connected
    component is flipped as a whole if its enclosed signed volume is negative.
    """
    tri = np.array(triangles, dtype=np.int64, copy=True)
    nf = len(tri)
    he = _edge_keys(tri).reshape(-1, 2)
    key = np.sort(he, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        e = uniq[np.argmax(counts > 2)]
        raise MeshError(f"non-manifold edge {tuple(e)} shared by {counts.max()} triangles")
    owners: list[list[int]] = [[] for _ in range(len(uniq))]
    for h, e in enumerate(inv):
        owners[e].append(h)

    flip = np.zeros(nf, dtype=bool)
    seen = np.zeros(nf, dtype=bool)
    component = np.full(nf, -1)
    n_comp = 0
    for seed in range(nf):
        if seen[seed]:
            continue
        seen[seed] = True
        component[seed] = n_comp
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            for k in range(3):
                h = 3 * t + k
                for g in owners[inv[h]]:
                    s = g // 3
                    if s == t:
                        continue
                    # same traversal direction means opposite orientation
                    same = he[h, 0] == he[g, 0]
                    want = flip[t] ^ same
                    if not seen[s]:
                        seen[s] = True
                        flip[s] = want
                        component[s] = n_comp
                        queue.append(s)
                    elif flip[s] != want:
                        raise MeshError("non-orientable surface")
        n_comp += 1
    tri[flip] = tri[flip][:, ::-1]

    c = vertices[tri]
    cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    vol = np.einsum("ij,ij->i", cross, c.mean(axis=1))
    for comp in range(n_comp):
        sel = component == comp
        if vol[sel].sum() < 0:
            tri[sel] = tri[sel][:, ::-1]
    return tri


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def _refine_once(mesh: TriMesh, marked: np.ndarray, project: Callable | None,
                 bisect: bool = False) -> TriMesh:
    tri = mesh.triangles
    nf = len(tri)
    ek = np.sort(_edge_keys(tri), axis=2).reshape(-1, 2)
    uniq, inv = np.unique(ek, axis=0, return_inverse=True)
    tri_e = inv.ravel().reshape(nf, 3)

    split = np.zeros(len(uniq), dtype=bool)
    if bisect:
        # greedy matching: each triangle receives at most one split edge,
        # longest first, so the bisection needs no four-way closure
        c = mesh.corners
        lengths = np.linalg.norm(np.roll(c, -1, axis=1) - c, axis=2)
        flat = inv.ravel()
        first = np.zeros(len(flat), dtype=bool)
        first[np.unique(flat, return_index=True)[1]] = True
        owners = np.full((len(uniq), 2), -1)
        owners[flat[first], 0] = np.flatnonzero(first) // 3
        owners[flat[~first], 1] = np.flatnonzero(~first) // 3
        used = np.zeros(nf, dtype=bool)
        for t in np.flatnonzero(marked):
            if used[t]:
                continue
            for k in np.argsort(-lengths[t]):
                e = tri_e[t, k]
                other = owners[e, 1] if owners[e, 0] == t else owners[e, 0]
                if other < 0 or not used[other]:
                    split[e] = True
                    used[t] = True
                    if other >= 0:
                        used[other] = True
                    break
        red = np.zeros(nf, dtype=bool)
    else:
        red = marked.copy()
    while True:
        split[tri_e[red].ravel()] = True
        count = split[tri_e].sum(axis=1)
        grow = ~red & (count >= 2)
        if not grow.any():
            break
        red |= grow

    split_ids = np.flatnonzero(split)
    nv = len(mesh.vertices)
    mid_index = np.full(len(uniq), -1)
    mid_index[split_ids] = nv + np.arange(split_ids.size)
    a, b = uniq[split_ids, 0], uniq[split_ids, 1]
    new_pts = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
    if project is not None and len(new_pts):
        new_pts = project(new_pts)
    vertices = np.vstack([mesh.vertices, new_pts])

    children, parents, green = [], [], []
    for t in range(nf):
        v0, v1, v2 = tri[t]
        m = mid_index[tri_e[t]]  # midpoint of local edge k = (v_k, v_{k+1})
        if red[t]:
            m01, m12, m20 = m
            children += [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
            parents += [t] * 4
            green += [False] * 4
        elif count[t] == 1:
            k = int(np.flatnonzero(m >= 0)[0])
            va, vb, vc = tri[t, k], tri[t, (k + 1) % 3], tri[t, (k + 2) % 3]
            children += [(va, m[k], vc), (m[k], vb, vc)]
            parents += [t, t]
            # requested bisections stay refinable, closure ones do not
            green += [not (bisect and marked[t])] * 2
        else:
            children.append((v0, v1, v2))
            parents.append(t)
            green.append(bool(mesh.nesting.green[-1][t]))
    new_tri = np.array(children, dtype=np.int64)
    nest = mesh.nesting
    midrows = np.stack([a, b, mid_index[split_ids]], axis=1) if split_ids.size else np.zeros((0, 3), np.int64)
    nesting = Nesting(levels=nest.levels + (new_tri,), parents=nest.parents + (np.array(parents),),
                      midpoints=nest.midpoints + (midrows,),
                      green=nest.green + (np.array(green, dtype=bool),))
    labels = None if mesh.labels is None else mesh.labels[np.array(parents)]
    return TriMesh(vertices, new_tri, nesting=nesting, labels=labels, surface=mesh.surface)


def refine_region(mesh: TriMesh, region: Callable[[np.ndarray], np.ndarray] | None,
                  levels: int = 1, project: Callable | None = None) -> TriMesh:
    """Split triangles whose centroid satisfies ``region`` four ways, ``levels`` times.

    Hanging nodes are closed by bisecting neighbours with a single split edge
    (triangles with two or more split edges are split four ways as well).
    Bisection triangles are never selected by ``region`` again.  ``region``
    receives an (F, 3) array of centroids and returns a boolean mask; ``None``
    selects everything.  New vertices are re-projected onto ``mesh.surface``
    unless ``project`` is given.
    """
    if project is None and mesh.surface is not None:
        project = mesh.surface.project
    for _ in range(levels):
        if region is None:
            marked = np.ones(mesh.n_triangles, dtype=bool)
        else:
            marked = np.asarray(region(mesh.centroids), dtype=bool)
        marked &= ~mesh.nesting.green[-1]
        if not marked.any():
            break
        mesh = _refine_once(mesh, marked, project)
    return mesh


def bisect_region(mesh: TriMesh, region: Callable[[np.ndarray], np.ndarray] | None,
                  project: Callable | None = None) -> TriMesh:
    """Bisect the longest edge of every selected triangle once.

    Conformity is restored as in ``refine_region``; the halves of selected
    triangles remain eligible for later refinement.  A bisection halves the
    area and the shortest edge together, so combined with four-way splits it
    sets the area ratio independently of the edge ratio.
    """
    if project is None and mesh.surface is not None:
        project = mesh.surface.project
    marked = np.ones(mesh.n_triangles, dtype=bool) if region is None else \
        np.asarray(region(mesh.centroids), dtype=bool)
    marked &= ~mesh.nesting.green[-1]
    if not marked.any():
        return mesh
    return _refine_once(mesh, marked, project, bisect=True)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

_CUBE_FACES = [  # (axis, side, u-axis, v-axis) with u x v = outward normal
    (0, 1, 1, 2), (0, 0, 2, 1), (1, 1, 2, 0), (1, 0, 0, 2), (2, 1, 0, 1), (2, 0, 1, 0)]


def structured_cube(size: float, divisions: int) -> TriMesh:
    """Cube ``[0, size]^3`` with ``divisions`` squares per edge, two triangles each."""
    n = int(divisions)
    index: dict[tuple[int, int, int], int] = {}
    pts: list[tuple[int, int, int]] = []
    tris = []

    def vid(p):
        if p not in index:
            index[p] = len(pts)
            pts.append(p)
        return index[p]

    for axis, side, ua, va in _CUBE_FACES:
        for i in range(n):
            for j in range(n):
                corner = []
                for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = [0, 0, 0]
                    p[axis] = side * n
                    p[ua] = i + di
                    p[va] = j + dj
                    corner.append(vid(tuple(p)))
                tris.append((corner[0], corner[1], corner[2]))
                tris.append((corner[0], corner[2], corner[3]))
    verts = np.array(pts, dtype=float) * (size / n)
    return TriMesh(verts, np.array(tris, dtype=np.int64))


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1 + 5 ** 0.5) / 2
    v = np.array([(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
                  (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
                  (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)], dtype=float)
    f = np.array([(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
                  (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
                  (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
                  (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def geodesic_sphere(radius: float, frequency: int = 1, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Icosahedron with every face split into ``frequency**2`` flat triangles, projected."""
    m = int(frequency)
    iv, ifc = _icosahedron()
    index: dict[tuple, int] = {}
    pts = []

    def vid(weights: dict[int, int]):
        key = tuple(sorted((k, w) for k, w in weights.items() if w))
        if key not in index:
            index[key] = len(pts)
            pts.append(sum(iv[k] * w for k, w in key) / m)
        return index[key]

    tris = []
    for a, b, c in ifc:
        grid = {}
        for i in range(m + 1):
            for j in range(m + 1 - i):
                grid[i, j] = vid({a: m - i - j, b: i, c: j})
        for i in range(m):
            for j in range(m - i):
                tris.append((grid[i, j], grid[i + 1, j], grid[i, j + 1]))
                if i + j < m - 1:
                    tris.append((grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]))
    surface = Sphere(tuple(float(x) for x in center), float(radius))
    verts = surface.project(np.array(pts) + np.asarray(center, dtype=float))
    return TriMesh(verts, np.array(tris, dtype=np.int64), surface=surface)


def icosphere(radius: float, subdivisions: int, frequency: int = 1, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Geodesic sphere refined ``subdivisions`` times by projected midpoint splits."""
    return refine_region(geodesic_sphere(radius, frequency, center), None, subdivisions)


def _dyadic_split(n: int) -> tuple[int, int]:
    j = 0
    while n % 2 == 0 and n > 1:
        n //= 2
        j += 1
    return n, j


def generate_primitive(shape: str, size: float, target_h: float,
                       max_triangles: int = DEFAULT_MAX_TRIANGLES) -> TriMesh:
    """Closed outward-oriented cube (edge ``size``) or sphere (radius ``size``).

    The cube uses ``round(size / target_h)`` divisions per edge, built as an
    odd base grid refined dyadically so that the nesting record covers every
    power-of-two factor.  The sphere picks the icosahedral frequency whose
    average edge is closest to ``target_h`` and builds its dyadic part by
    recursive subdivision.
    """
    if target_h <= 0 or target_h > size * (1 + 1e-12):
        raise ValueError("target_h must satisfy 0 < target_h <= size")
    if shape == "cube":
        n = max(1, int(round(size / target_h)))
        if 12 * n * n > max_triangles:
            raise MemoryError(f"cube with {12 * n * n} triangles exceeds cap {max_triangles}")
        base, levels = _dyadic_split(n)
        return refine_region(structured_cube(size, base), None, levels)
    if shape == "sphere":
        # mean projected edge of a frequency-m geodesic sphere ~ 1.10 * a / m
        edge = 1.0515 * size * 1.10
        m = max(1, int(round(edge / target_h)))
        if 20 * m * m > max_triangles:
            raise MemoryError(f"sphere with {20 * m * m} triangles exceeds cap {max_triangles}")
        base, levels = _dyadic_split(m)
        return icosphere(size, levels, frequency=base)
    raise ValueError(f"unknown primitive {shape!r}")


def voxel_surface(occupancy: np.ndarray, size: float = 1.0) -> TriMesh:
    """Boundary surface of a set of unit voxels, two triangles per exposed face.

    Handy for closed meshes of prescribed genus: a 3x3 ring is a torus, a 5x3
    slab with two holes is a genus-2 surface.
    """
    occ = np.asarray(occupancy, dtype=bool)
    if occ.ndim == 2:
        occ = occ[:, :, None]
    pad = np.pad(occ, 1)
    index: dict[tuple[int, int, int], int] = {}
    pts = []

    def vid(p):
        if p not in index:
            index[p] = len(pts)
            pts.append(p)
        return index[p]

    tris = []
    for cell in zip(*np.nonzero(occ)):
        c = np.array(cell) + 1
        for axis, side, ua, va in _CUBE_FACES:
            nb = c.copy()
            nb[axis] += 1 if side else -1
            if pad[tuple(nb)]:
                continue
            corner = []
            for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = list(c - 1)
                p[axis] += side
                p[ua] += di
                p[va] += dj
                corner.append(vid(tuple(int(x) for x in p)))
            tris.append((corner[0], corner[1], corner[2]))
            tris.append((corner[0], corner[2], corner[3]))
    return TriMesh(np.array(pts, dtype=float) * size, np.array(tris, dtype=np.int64))


def torus_grid(major: float, minor: float, n_major: int, n_minor: int) -> TriMesh:
    """Parametric torus around the z axis."""
    u = 2 * np.pi * np.arange(n_major) / n_major
    v = 2 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([(major + minor * np.cos(vv)) * np.cos(uu),
                    (major + minor * np.cos(vv)) * np.sin(uu),
                    minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    idx = np.arange(n_major * n_minor).reshape(n_major, n_minor)
    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b = idx[i, j], idx[(i + 1) % n_major, j]
            c, d = idx[(i + 1) % n_major, (j + 1) % n_minor], idx[i, (j + 1) % n_minor]
            tris += [(a, b, c), (a, c, d)]
    return TriMesh(pts, orient(pts, np.array(tris)))


def cap_region(center_direction: Sequence[float], angle: float,
               origin: Sequence[float] = (0.0, 0.0, 0.0)) -> Callable[[np.ndarray], np.ndarray]:
    """Predicate selecting points within ``angle`` radians of a direction seen from ``origin``."""
    d = np.asarray(center_direction, dtype=float)
    d = d / np.linalg.norm(d)
    o = np.asarray(origin, dtype=float)

    def inside(points: np.ndarray) -> np.ndarray:
        p = points - o
        cosang = p @ d / np.linalg.norm(p, axis=1)
        return cosang >= np.cos(angle)

    return inside
