"""Multiresolution quasi-Helmholtz basis on nested triangle meshes.

The change of basis ``Q`` maps coefficients of a hierarchical basis onto
fine-level RWG coefficients.  Its columns are grouped as

* ``loop`` at the stop level: point loops of the stop-level mesh plus
  global (handle and hole) loops,
* ``ns`` at the stop level: stop-level RWGs complementing the loops,
* for every finer level ``l``: loops at the vertices introduced at ``l``
  (``loop``, lifted to zero mean by default) and RWGs on edges interior
  to a level ``l-1`` triangle (``ns``),

every vector carried to the finest mesh by flux-conserving prolongation.
With ``loops="point"`` the loop part is instead all fine-level point loops.

The rescaled operator is ``D Q^T A Q D`` with ``D_ii = |(Q^T A Q)_ii|^-1/2``.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import onenormest, splu, LinearOperator

from .mesh import EdgeConnectivity, TriMesh, build_connectivity
from .operators import BasisTag, DenseOperator

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8
COND_LIMIT = 1e12


class LoopKind(str, Enum):
    HIERARCHICAL = "hierarchical"
    POINT = "point"


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------

def interior_vertices(conn: EdgeConnectivity, triangles: np.ndarray) -> np.ndarray:
    used = np.unique(triangles)
    return np.setdiff1d(used, conn.boundary_vertices(), assume_unique=True)


def point_loops(mesh: TriMesh, conn: EdgeConnectivity, vertices=None) -> sparse.csc_matrix:
    """Discrete curls of vertex hat functions as RWG coefficients.

    Column ``c`` is the loop around ``vertices[c]`` (all interior vertices
    by default): flux one across each edge incident to the vertex, giving
    coefficients ``+-1/l``.  Boundary vertices are rejected.
    """
    tri = mesh.triangles
    if vertices is None:
        vertices = interior_vertices(conn, tri)
    vertices = np.asarray(vertices, dtype=np.int64)
    if np.intersect1d(vertices, conn.boundary_vertices()).size:
        raise ValueError("point loops are only defined at interior vertices")
    col_of = np.full(len(mesh.vertices), -1)
    col_of[vertices] = np.arange(vertices.size)
    # in triangle (v, a, b) the loop current leaves through edge (b, v), local edge i+2
    t, i = np.nonzero(col_of[tri] >= 0)
    k = (i + 2) % 3
    e = conn.tri_edges[t, k]
    vals = conn.tri_edge_sign[t, k] / conn.lengths[e]
    return sparse.csc_matrix((vals, (e, col_of[tri[t, i]])), shape=(conn.n_interior, vertices.size))


def _components(conn: EdgeConnectivity) -> tuple[int, np.ndarray]:
    inner = conn.edge_tris[: conn.n_interior]
    f = conn.n_triangles
    adj = sparse.coo_matrix((np.ones(len(inner)), (inner[:, 0], inner[:, 1])), shape=(f, f))
    return connected_components(adj, directed=False)


def _dual_tree(conn: EdgeConnectivity, allowed: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """BFS forest of the dual graph through interior edges with ``allowed``.

    Returns per-face parent face, parent edge (``-1`` at roots) and depth.
    """
    f = conn.n_triangles
    parent = np.full(f, -1)
    via = np.full(f, -1)
    depth = np.full(f, -1)
    nbrs = [[] for _ in range(f)]
    for e in np.flatnonzero(allowed[: conn.n_interior]):
        a, b = conn.edge_tris[e]
        nbrs[a].append((b, e))
        nbrs[b].append((a, e))
    for root in range(f):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y, e in nbrs[x]:
                if depth[y] < 0:
                    depth[y] = depth[x] + 1
                    parent[y] = x
                    via[y] = e
                    queue.append(y)
    return parent, via, depth


def _primal_tree(conn: EdgeConnectivity) -> np.ndarray:
    """Edges of a BFS spanning forest of the vertex graph."""
    g = conn.vertex_edges.tocsr()
    ev = conn.edges
    nv = g.shape[0]
    adj = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(ev):
        adj[a].append((b, e))
        adj[b].append((a, e))
    seen = np.zeros(nv, dtype=bool)
    in_tree = np.zeros(len(ev), dtype=bool)
    for root in np.unique(ev):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y, e in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    in_tree[e] = True
                    queue.append(y)
    return in_tree


def _crossing(conn: EdgeConnectivity, e: int, src: int) -> float:
    """Coefficient for unit flux across RWG ``e`` leaving face ``src``."""
    sign = 1.0 if conn.edge_tris[e, 0] == src else -1.0
    return sign / conn.lengths[e]


def global_loops(mesh: TriMesh, conn: EdgeConnectivity | None = None) -> sparse.csc_matrix:
    """Divergence-free RWG vectors outside the span of point loops.

    Closed components contribute ``2g`` dual cycles from a tree-cotree
    decomposition; components with boundary contribute a null-space basis
    (hole loops), computed densely for that component only.
    """
    conn = conn or build_connectivity(mesh)
    n = conn.n_interior
    ncomp, comp = _components(conn)
    cols = []
    in_tree = _primal_tree(conn)
    parent, via, depth = _dual_tree(conn, ~in_tree)
    closed_comp = np.ones(ncomp, dtype=bool)
    closed_comp[comp[conn.edge_tris[n:, 0]]] = False
    cotree = np.zeros(conn.n_edges, dtype=bool)
    cotree[via[via >= 0]] = True
    for e in range(n):
        if in_tree[e] or cotree[e] or not closed_comp[comp[conn.edge_tris[e, 0]]]:
            continue
        a, b = conn.edge_tris[e]
        # cycle: a -> (edge e) -> b -> tree path back to a
        vec = {e: _crossing(conn, e, a)}
        up_b, up_a = [], []
        x, y = b, a
        while depth[x] > depth[y]:
            up_b.append(x)
            x = parent[x]
        while depth[y] > depth[x]:
            up_a.append(y)
            y = parent[y]
        while x != y:
            up_b.append(x)
            up_a.append(y)
            x, y = parent[x], parent[y]
        for f in up_b:          # b climbs toward the common ancestor
            vec[via[f]] = vec.get(via[f], 0.0) + _crossing(conn, via[f], f)
        for f in up_a:          # then descends toward a
            vec[via[f]] = vec.get(via[f], 0.0) + _crossing(conn, via[f], parent[f])
        cols.append(vec)
    out = [sparse.csc_matrix((list(v.values()), (list(v.keys()), [0] * len(v))), shape=(n, 1))
           for v in cols]

    # open components with holes or handles
    for c in np.flatnonzero(~closed_comp):
        faces = np.flatnonzero(comp == c)
        edges = np.flatnonzero(comp[conn.edge_tris[:n, 0]] == c)
        tri = mesh.triangles[faces]
        vint = interior_vertices(conn, tri)
        extra = edges.size - faces.size - vint.size
        if extra <= 0:
            continue
        sub = _component_constraints(mesh, conn, faces, edges, vint)
        basis = sla.null_space(sub.toarray())
        if basis.shape[1] != extra:
            logger.warning("component %d: expected %d hole loops, found %d", c, extra, basis.shape[1])
        full = sparse.csc_matrix((basis.ravel(), (np.repeat(edges, basis.shape[1]),
                                                   np.tile(np.arange(basis.shape[1]), edges.size))),
                                 shape=(n, basis.shape[1]))
        out.append(full)
    if not out:
        return sparse.csc_matrix((n, 0))
    return sparse.hstack(out, format="csc")


def _component_constraints(mesh, conn, faces, edges, vint):
    """Stack divergence rows and point-loop rows restricted to one component."""
    n = conn.n_interior
    tp, tm = conn.edge_tris[:n, 0], conn.edge_tris[:n, 1]
    rows = np.concatenate([tp, tm])
    cols = np.concatenate([np.arange(n)] * 2)
    vals = np.concatenate([np.ones(n), -np.ones(n)])
    div = sparse.csr_matrix((vals, (rows, cols)), shape=(conn.n_triangles, n))[faces][:, edges]
    loops = point_loops(mesh, conn, vint)[edges].T
    return sparse.vstack([div, loops]).tocsr()


# ---------------------------------------------------------------------------
# nested meshes and prolongation
# ---------------------------------------------------------------------------

def _edge_lookup(conn: EdgeConnectivity) -> dict:
    e = conn.edges
    return {(min(a, b), max(a, b)): i for i, (a, b) in enumerate(e.tolist())}


def prolongation(coarse: TriMesh, cconn: EdgeConnectivity, fine: TriMesh, fconn: EdgeConnectivity,
                 parents: np.ndarray, midpoints: np.ndarray) -> sparse.csr_matrix:
    """(N_fine, N_coarse) map of RWG coefficients preserving fluxes.

    Coarse fluxes are split over sub-segments by length fraction, each child
    receives charge in proportion to its share of the parent, and fluxes on
    edges inside a parent follow from charge conservation.
    """
    mid = {(int(a), int(b)): int(m) for a, b, m in midpoints}
    flook = _edge_lookup(fconn)
    ctri = coarse.triangles
    order = np.argsort(parents, kind="stable")
    bounds = np.searchsorted(parents[order], np.arange(len(ctri) + 1))
    fl = fconn.lengths
    rows, cols, vals = [], [], []
    for t in range(len(ctri)):
        kids = order[bounds[t]: bounds[t + 1]]
        kid_pos = {int(c): j for j, c in enumerate(kids)}
        # sub-segments of each parent edge with length fraction
        segs = []
        seg_edges = set()
        for k in range(3):
            a, b = int(ctri[t, k]), int(ctri[t, (k + 1) % 3])
            key = (min(a, b), max(a, b))
            if key in mid:
                m = mid[key]
                parts = [(a, m, 0.5), (m, b, 0.5)]
            else:
                parts = [(a, b, 1.0)]
            seg = [(flook[(min(u, v), max(u, v))], frac) for u, v, frac in parts]
            segs.append(seg)
            seg_edges.update(e for e, _ in seg)
        inner = sorted({int(e) for c in kids for e in fconn.tri_edges[c]} - seg_edges)
        # conservation per child: m_ci x_i + boundary outflux = share of the total
        mat = np.zeros((len(kids), len(inner)))
        for j, e in enumerate(inner):
            tp, tm = fconn.edge_tris[e]
            mat[kid_pos[int(tp)], j] += 1.0
            mat[kid_pos[int(tm)], j] -= 1.0
        share = np.full(len(kids), 1.0 / len(kids))
        local = []
        for k in range(3):
            bnd = np.zeros(len(kids))
            for e, frac in segs[k]:
                tp, tm = fconn.edge_tris[e]
                inside = tp if int(tp) in kid_pos else tm
                bnd[kid_pos[int(inside)]] += frac
            x = np.linalg.lstsq(mat, share - bnd, rcond=None)[0] if inner else np.zeros(0)
            local.append(x)
        # contributions to each coarse RWG touching this triangle
        for k in range(3):
            ce = int(cconn.tri_edges[t, k])
            if ce >= cconn.n_interior:
                continue
            flux = cconn.lengths[ce] * cconn.tri_edge_sign[t, k]   # outflux for unit coefficient
            for j, e in enumerate(inner):
                if e < fconn.n_interior and local[k][j] != 0.0:
                    rows.append(e)
                    cols.append(ce)
                    vals.append(flux * local[k][j] / fl[e])
            if cconn.tri_edge_sign[t, k] > 0:   # shared sub-segments once, from T+
                for e, frac in segs[k]:
                    tp = fconn.edge_tris[e, 0]
                    orient = 1.0 if int(tp) in kid_pos else -1.0
                    rows.append(e)
                    cols.append(ce)
                    vals.append(orient * cconn.lengths[ce] * frac / fl[e])
    p = sparse.csr_matrix((vals, (rows, cols)), shape=(fconn.n_interior, cconn.n_interior))
    p.eliminate_zeros()
    return p


@dataclass
class Hierarchy:
    """Nesting levels of a mesh with connectivity and prolongations."""

    mesh: TriMesh
    levels: list
    conns: list
    prolong: list           # prolong[l]: level l -> l+1

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @cached_property
    def _to_fine(self) -> dict:
        return {}

    def to_fine(self, level: int) -> sparse.csr_matrix:
        if level not in self._to_fine:
            p = sparse.identity(self.conns[-1].n_interior, format="csr")
            for l in range(self.depth - 1, level - 1, -1):
                p = p @ self.prolong[l]
            self._to_fine[level] = p.tocsr()
        return self._to_fine[level]

    def max_diameter(self, level: int) -> float:
        return float(self.levels[level].diameters.max())

    def stop_level(self, wavelength: float, fraction: float = 1 / 8) -> int:
        """Coarsest level whose largest cell is at most ``fraction`` wavelengths."""
        for l in range(self.depth + 1):
            if self.max_diameter(l) <= fraction * wavelength:
                return l
        return self.depth

    def new_vertices(self, level: int) -> np.ndarray:
        now = np.unique(self.levels[level].triangles)
        if level == 0:
            return now
        return np.setdiff1d(now, np.unique(self.levels[level - 1].triangles), assume_unique=True)

    def inner_edges(self, level: int) -> np.ndarray:
        """Level RWGs whose two triangles share a parent on the previous level."""
        c = self.conns[level]
        par = self.mesh.nesting.parents[level - 1]
        tp, tm = c.tplus, c.tminus
        return np.flatnonzero(par[tp] == par[tm])


def build_hierarchy(mesh: TriMesh) -> Hierarchy:
    nest = mesh.nesting
    levels = [mesh.level_mesh(l) for l in range(nest.depth)] + [mesh]
    conns = [build_connectivity(m) for m in levels]
    prolong = [prolongation(levels[l], conns[l], levels[l + 1], conns[l + 1],
                            nest.parents[l], nest.midpoints[l]) for l in range(nest.depth)]
    return Hierarchy(mesh, levels, conns, prolong)


# ---------------------------------------------------------------------------
# multiresolution basis
# ---------------------------------------------------------------------------

@dataclass
class BasisGroup:
    kind: str               # "loop" or "ns"
    level: int
    columns: sparse.csc_matrix

    @property
    def size(self) -> int:
        return self.columns.shape[1]


@dataclass
class MrBasis:
    q: sparse.csc_matrix
    groups: list = field(default_factory=list)
    stop_level: int = 0
    loops: LoopKind = LoopKind.HIERARCHICAL
    completed: int = 0      # unit vectors added by rank completion
    lifted: bool = False

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @cached_property
    def kind(self) -> np.ndarray:
        return np.concatenate([[g.kind] * g.size for g in self.groups]) if self.groups else np.zeros(0, str)

    @cached_property
    def level(self) -> np.ndarray:
        return np.concatenate([[g.level] * g.size for g in self.groups]).astype(int)

    def group_sizes(self) -> list[tuple[str, int, int]]:
        return [(g.kind, g.level, g.size) for g in self.groups]


def _stop_groups(h: Hierarchy, stop: int) -> tuple[sparse.csc_matrix, sparse.csc_matrix]:
    """Loop and complementary RWG columns at the stop level (stop-level coordinates)."""
    mesh, conn = h.levels[stop], h.conns[stop]
    ncomp, comp = _components(conn)
    closed = np.ones(ncomp, dtype=bool)
    closed[comp[conn.edge_tris[conn.n_interior:, 0]]] = False
    verts = interior_vertices(conn, mesh.triangles)
    # drop one vertex per closed component, where the loops sum to zero
    vcomp = np.full(len(mesh.vertices), -1)
    vcomp[mesh.triangles.ravel()] = np.repeat(comp, 3)
    drop = [verts[vcomp[verts] == c][-1] for c in np.flatnonzero(closed) if np.any(vcomp[verts] == c)]
    verts = np.setdiff1d(verts, drop)
    loops = sparse.hstack([point_loops(mesh, conn, verts), global_loops(mesh, conn)], format="csc")
    # RWGs on a dual spanning forest complement the loops
    _, via, _ = _dual_tree(conn, np.ones(conn.n_edges, dtype=bool))
    tree = np.sort(via[via >= 0])
    ns = sparse.identity(conn.n_interior, format="csc")[:, tree]
    return loops, ns


def _hat_integrals(mesh: TriMesh) -> np.ndarray:
    out = np.zeros(len(mesh.vertices))
    np.add.at(out, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return out


def _level_loops(h: Hierarchy, level: int, lift: bool) -> sparse.csc_matrix:
    """Loops at the vertices new at ``level``, in level coordinates.

    With ``lift`` each new-vertex hat ``phi_m`` (``m`` splitting coarse edge
    ``(a, b)``) is replaced by ``phi_m - mu (phi_a + phi_b)`` with ``mu``
    making the integral vanish, so the loop is the curl of a zero-mean
    function.  Coarse hats on boundary vertices are left out.
    """
    mesh_l, conn_l = h.levels[level], h.conns[level]
    verts = np.setdiff1d(h.new_vertices(level), conn_l.boundary_vertices())
    loops = point_loops(mesh_l, conn_l, verts)
    if not lift or verts.size == 0:
        return loops
    cmesh, cconn = h.levels[level - 1], h.conns[level - 1]
    cverts = interior_vertices(cconn, cmesh.triangles)
    mid = h.mesh.nesting.midpoints[level - 1]
    split = np.full(len(h.mesh.vertices), -1)
    split[mid[:, 2]] = np.arange(len(mid))
    ends = mid[split[verts], :2]                        # (n, 2) coarse endpoints
    cpos = np.full(len(h.mesh.vertices), -1)
    cpos[cverts] = np.arange(len(cverts))
    ok = cpos[ends] >= 0
    hat_c = _hat_integrals(cmesh)[ends] * ok
    denom = hat_c.sum(axis=1)
    mu = np.where(denom > 0, _hat_integrals(mesh_l)[verts] / np.where(denom > 0, denom, 1.0), 0.0)
    col = np.repeat(np.arange(len(verts)), 2).reshape(-1, 2)
    mix = sparse.csc_matrix((-np.broadcast_to(mu[:, None], ends.shape)[ok], (cpos[ends][ok], col[ok])),
                            shape=(len(cverts), len(verts)))
    coarse = h.prolong[level - 1] @ point_loops(cmesh, cconn, cverts)
    return (loops + coarse @ mix).tocsc()


def _well_posed(q: sparse.csc_matrix) -> bool:
    if q.shape[0] != q.shape[1]:
        return False
    try:
        lu = splu(q.tocsc())
    except RuntimeError:
        return False
    n = q.shape[0]
    inv = LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"))
    cond = onenormest(inv) * sparse.linalg.norm(q, 1)
    return bool(np.isfinite(cond) and cond < COND_LIMIT)


def _greedy(groups: list[BasisGroup], n: int, tol: float = RANK_TOL) -> tuple[list[BasisGroup], int]:
    """Group-wise block Gram-Schmidt keeping independent columns, then unit fill."""
    basis = np.zeros((n, 0))
    kept = []
    for g in groups:
        v = g.columns.toarray()
        scale = np.linalg.norm(v, axis=0)
        v = v / np.where(scale > 0, scale, 1.0)
        r = v - basis @ (basis.T @ v)
        r = r - basis @ (basis.T @ r)
        if r.shape[1] == 0:
            continue
        qr, rr, piv = sla.qr(r, mode="economic", pivoting=True)
        diag = np.abs(np.diag(rr))
        rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 1.0)))
        if rank:
            keep = np.sort(piv[:rank])
            kept.append(BasisGroup(g.kind, g.level, g.columns[:, keep]))
            basis = np.hstack([basis, qr[:, :rank]])
    missing = n - basis.shape[1]
    if missing > 0:
        r = np.eye(n) - basis @ basis.T
        _, _, piv = sla.qr(r, mode="economic", pivoting=True)
        fill = np.sort(piv[:missing])
        kept.append(BasisGroup("ns", -1, sparse.identity(n, format="csc")[:, fill]))
    return kept, max(missing, 0)


def build_mr_basis(mesh: TriMesh, stop_level: int | None = None, wavelength: float | None = None,
                   loops: LoopKind | str = LoopKind.HIERARCHICAL,
                   hierarchy: Hierarchy | None = None, lift: bool = True) -> MrBasis:
    """Assemble ``Q`` for a nested mesh.

    ``stop_level`` defaults to the coarsest level whose cells are at most a
    wavelength over eight (the finest level without a wavelength).
    ``lift`` gives hierarchical loops a vanishing mean (see
    ``_level_loops``); without it they are plain point loops of each level.
    """
    loops = LoopKind(loops)
    h = hierarchy or build_hierarchy(mesh)
    if stop_level is None:
        stop_level = h.depth if wavelength is None else h.stop_level(wavelength)
    if not 0 <= stop_level <= h.depth:
        raise ValueError(f"stop level {stop_level} outside 0..{h.depth}")
    n = h.conns[-1].n_interior
    loop_stop, ns_stop = _stop_groups(h, stop_level)
    up = h.to_fine(stop_level)
    groups = []
    if loops is LoopKind.HIERARCHICAL:
        groups.append(BasisGroup("loop", stop_level, (up @ loop_stop).tocsc()))
        for l in range(stop_level + 1, h.depth + 1):
            groups.append(BasisGroup("loop", l, (h.to_fine(l) @ _level_loops(h, l, lift)).tocsc()))
    else:
        fine_loops, _ = _stop_groups(h, h.depth)
        groups.append(BasisGroup("loop", h.depth, fine_loops))
    groups.append(BasisGroup("ns", stop_level, (up @ ns_stop).tocsc()))
    for l in range(stop_level + 1, h.depth + 1):
        cols = sparse.identity(h.conns[l].n_interior, format="csc")[:, h.inner_edges(l)]
        groups.append(BasisGroup("ns", l, (h.to_fine(l) @ cols).tocsc()))
    groups = [g for g in groups if g.size]
    q = sparse.hstack([g.columns for g in groups], format="csc")
    completed = 0
    if not _well_posed(q):
        logger.info("combinatorial selection gave %d of %d columns; running Gram-Schmidt",
                    q.shape[1], n)
        groups, completed = _greedy(groups, n)
        q = sparse.hstack([g.columns for g in groups], format="csc")
    q.eliminate_zeros()
    return MrBasis(q=q, groups=groups, stop_level=stop_level, loops=loops, completed=completed,
                   lifted=lift and loops is LoopKind.HIERARCHICAL)


# ---------------------------------------------------------------------------
# change of basis
# ---------------------------------------------------------------------------

def mr_scaling(a: np.ndarray, q: sparse.spmatrix) -> np.ndarray:
    """Diagonal of ``D``: ``|(Q^T A Q)_ii|^-1/2``, one where that diagonal vanishes."""
    aq = (q.T @ np.asarray(a).T).T            # A Q without densifying Q
    diag = np.asarray(q.multiply(aq).sum(axis=0)).ravel()
    mag = np.abs(diag)
    return np.where(mag > 0, 1.0 / np.sqrt(np.where(mag > 0, mag, 1.0)), 1.0)


def apply_mr(op: DenseOperator, basis: MrBasis, scale: bool = True,
             d: np.ndarray | None = None) -> tuple[DenseOperator, np.ndarray]:
    """Return ``D Q^T A Q D`` and the diagonal of ``D``."""
    q = basis.q
    a = op.entries
    aq = (q.T @ a.T).T
    qaq = np.asarray(q.T @ aq)
    if d is None:
        if scale:
            mag = np.abs(np.diag(qaq))
            d = np.where(mag > 0, 1.0 / np.sqrt(np.where(mag > 0, mag, 1.0)), 1.0)
        else:
            d = np.ones(q.shape[1])
    out = d[:, None] * qaq * d[None, :]
    return DenseOperator(out, op.role, BasisTag.MR), d


def to_mr_rhs(b: np.ndarray, basis: MrBasis, d: np.ndarray) -> np.ndarray:
    return d * (basis.q.T @ b)


def from_mr(y: np.ndarray, basis: MrBasis, d: np.ndarray) -> np.ndarray:
    return basis.q @ (d * y)


def export_q(basis: MrBasis, directory: str | Path, d: np.ndarray | None = None) -> Path:
    """Write ``Q`` as ``row col value`` triplets plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    coo = basis.q.tocoo()
    trip = directory / "Q.txt"
    with trip.open("w") as fh:
        for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            fh.write(f"{r} {c} {v!r}\n")
    manifest = {
        "shape": list(basis.q.shape),
        "nnz": int(coo.nnz),
        "stop_level": basis.stop_level,
        "loops": basis.loops.value,
        "completed": basis.completed,
        "groups": [{"kind": k, "level": l, "size": s} for k, l, s in basis.group_sizes()],
    }
    if d is not None:
        manifest["D"] = [float(x) for x in np.asarray(d).real]
    (directory / "Q.json").write_text(json.dumps(manifest, indent=2))
    return trip


def load_q(directory: str | Path) -> tuple[sparse.csc_matrix, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "Q.json").read_text())
    data = np.loadtxt(directory / "Q.txt", ndmin=2)
    shape = tuple(manifest["shape"])
    if data.size == 0:
        return sparse.csc_matrix(shape), manifest
    q = sparse.csc_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)
    return q, manifest
