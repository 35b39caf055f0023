"""Galerkin RWG operators for PEC scattering: EFIE, MFIE, Gram, CFIE.

Time convention ``exp(j w t)``; Green's function ``exp(-jkR) / (4 pi R)``.
With ``Lambda_m`` the RWG functions the discrete systems read::

    Z j = e,   e_m = <Lambda_m, E_inc>
    B j = h,   h_m = <Lambda_m, n x H_inc>
    Z_mn = j w mu <Lambda_m, g Lambda_n> + 1/(j w eps) <div Lambda_m, g div Lambda_n>
    B = G/2 + K,  K_mn = <Lambda_m, n x int grad' g x Lambda_n>

and the CFIE is ``(1/eta) Z + alpha B``.  Matrices are dense.

Integration over triangle pairs is split into a far pass (plain product
quadrature) and a near pass where the static 1/R part of the kernel is
integrated in closed form over the source triangle.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.constants import epsilon_0, mu_0
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy import sparse

from ._kernels import far_pass
from .mesh import EdgeConnectivity, TriMesh, build_connectivity
from .potentials import static_potentials
from .quadrature import rule_points, triangle_rule

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


DEFAULT_MAX_UNKNOWNS = 20_000
_EMPTY = np.zeros((0, 0), dtype=complex)


def _es(*args):
    return np.einsum(*args, optimize=True)


class Role(str, Enum):
    EFIE_Z = "EFIE_Z"
    MFIE_B = "MFIE_B"
    CFIE_C = "CFIE_C"
    GRAM_G = "GRAM_G"


class BasisTag(str, Enum):
    RWG = "RWG"
    MR = "MR"


@dataclass(frozen=True)
class Medium:
    """Homogeneous background; ``omega`` in rad/s."""

    omega: float
    eps: float = epsilon_0
    mu: float = mu_0

    def __post_init__(self):
        if not (self.omega > 0 and self.eps > 0 and self.mu > 0):
            raise ValueError("omega, eps and mu must be positive")

    @classmethod
    def free_space(cls, frequency: float) -> "Medium":
        return cls(omega=2 * np.pi * frequency)

    @property
    def frequency(self) -> float:
        return self.omega / (2 * np.pi)

    @property
    def k(self) -> float:
        return self.omega * np.sqrt(self.eps * self.mu)

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.mu / self.eps))

    @property
    def wavelength(self) -> float:
        return 2 * np.pi / self.k


@dataclass(frozen=True)
class Excitation:
    """Linearly polarized plane wave ``E = amplitude * pol * exp(-jk dir.r)``."""

    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    polarization: tuple[float, float, float] = (1.0, 0.0, 0.0)
    amplitude: complex = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        p = np.asarray(self.polarization, dtype=float)
        if abs(np.linalg.norm(d) - 1) > 1e-12 or abs(np.linalg.norm(p) - 1) > 1e-12:
            raise ValueError("direction and polarization must be unit vectors")
        if abs(d @ p) > 1e-12:
            raise ValueError("polarization must be orthogonal to the propagation direction")

    def fields(self, points: np.ndarray, medium: Medium) -> tuple[np.ndarray, np.ndarray]:
        d = np.asarray(self.direction, dtype=float)
        p = np.asarray(self.polarization, dtype=float)
        phase = np.exp(-1j * medium.k * (points @ d))
        e = self.amplitude * phase[..., None] * p
        h = self.amplitude * phase[..., None] * np.cross(d, p) / medium.eta
        return e, h


@dataclass(frozen=True)
class CfieConfig:
    """Combination weight and per-DOF EFIE-only mask (True = EFIE only)."""

    alpha: float = 0.5
    mask: np.ndarray | None = None

    def efie_only(self, n: int) -> np.ndarray:
        if self.mask is None:
            return np.zeros(n, dtype=bool)
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != (n,):
            raise ValueError(f"mask length {m.size} does not match {n} unknowns")
        return m


@dataclass(frozen=True)
class QuadratureConfig:
    """Triangle rules used by the assembly (see :mod:`mrcfie.quadrature`)."""

    far: str = "3"
    near_test: str = "gauss4"
    near_source: str = "7"
    rhs: str = "gauss5"
    far_field: str = "7"
    near_factor: float = 2.0
    chunk_elements: int = 1_500_000

    def __post_init__(self):
        for name in (self.far, self.near_test, self.near_source):
            bary, _ = triangle_rule(name)
            if len(bary) < 3:
                raise ValueError(f"quadrature rule {name!r} below the 3-point minimum")

    @classmethod
    def from_file(cls, path: str | Path) -> "QuadratureConfig":
        data = _read_config(path)
        data = data.get("quadrature", data)
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


def _read_config(path: str | Path) -> dict:
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(path.read_text())
    return json.loads(path.read_text())


@dataclass
class DenseOperator:
    entries: np.ndarray
    role: Role
    basis: BasisTag = BasisTag.RWG
    parts: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.entries.shape

    def __matmul__(self, x):
        return self.entries @ x


def save_operator(op: DenseOperator, path: str | Path) -> None:
    """Write an operator as ``.npz`` (little-endian complex128 entries plus tags)."""
    np.savez(path, entries=np.asarray(op.entries, dtype="<c16"),
             role=np.array(Role(op.role).value), basis=np.array(BasisTag(op.basis).value),
             shape=np.array(op.entries.shape, dtype="<i8"))


def load_operator(path: str | Path) -> DenseOperator:
    with np.load(path, allow_pickle=False) as data:
        entries = data["entries"].astype(np.complex128)
        if tuple(data["shape"]) != entries.shape:
            raise ValueError("corrupt operator file: shape mismatch")
        return DenseOperator(entries, Role(str(data["role"])), BasisTag(str(data["basis"])))


def green(r, r_src, k: float) -> complex:
    """Scalar Green's function ``exp(-jkR) / (4 pi R)``."""
    rr = np.linalg.norm(np.asarray(r, dtype=float) - np.asarray(r_src, dtype=float), axis=-1)
    if np.any(rr == 0):
        raise ValueError("Green's function is singular at coincident points")
    return np.exp(-1j * k * rr) / (FOUR_PI * rr)


# ---------------------------------------------------------------------------
# RWG space
# ---------------------------------------------------------------------------

class RwgSpace:
    """RWG functions of a mesh, written per triangle as ``c_ti (r - p_ti)``.

    ``tri_rwg[t, i]`` is the RWG attached to the edge opposite local vertex
    ``i`` of triangle ``t`` (``-1`` on boundary edges) and ``tri_coef[t, i]``
    is ``+-l / (2 A_t)``, positive on ``T+``.
    """

    def __init__(self, mesh: TriMesh, conn: EdgeConnectivity | None = None):
        self.mesh = mesh
        self.conn = conn or build_connectivity(mesh)
        c = self.conn
        k = (np.arange(3) + 1) % 3
        edge = c.tri_edges[:, k]
        sign = c.tri_edge_sign[:, k]
        interior = edge < c.n_interior
        self.tri_rwg = np.where(interior, edge, -1)
        self.tri_coef = np.where(interior, sign * c.lengths[edge] / (2 * mesh.areas[:, None]), 0.0)
        self.tri_div = 2.0 * self.tri_coef

    @property
    def n(self) -> int:
        return self.conn.n_interior

    @cached_property
    def div_matrix(self) -> sparse.csr_matrix:
        """(F, N) divergence of each RWG on each triangle."""
        rows, cols = np.nonzero(self.tri_rwg >= 0)
        return sparse.csr_matrix((self.tri_div[rows, cols], (rows, self.tri_rwg[rows, cols])),
                                 shape=(self.mesh.n_triangles, self.n))

    @cached_property
    def halves(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per RWG and side (+, -): flat slot ``3t + i`` and coefficient."""
        t, i = np.nonzero(self.tri_rwg >= 0)
        n = self.tri_rwg[t, i]
        coef = self.tri_coef[t, i]
        slot = np.zeros((self.n, 2), dtype=np.int64)
        cc = np.zeros((self.n, 2))
        side = (coef < 0).astype(int)
        slot[n, side] = 3 * t + i
        cc[n, side] = coef
        return slot, cc, side

    def open_dofs(self) -> np.ndarray:
        """RWGs lying on connected components that have boundary edges."""
        c = self.conn
        f = self.mesh.n_triangles
        inner = c.edge_tris[: c.n_interior]
        adj = sparse.coo_matrix((np.ones(len(inner)), (inner[:, 0], inner[:, 1])), shape=(f, f))
        _, comp = connected_components(adj, directed=False)
        open_comp = np.zeros(comp.max() + 1, dtype=bool)
        open_comp[comp[c.edge_tris[c.n_interior:, 0]]] = True
        return open_comp[comp[c.tplus]]

    def current_on_triangles(self, coeffs: np.ndarray) -> np.ndarray:
        """(F, 3) local weights ``a_ti = c_ti * I_n`` of ``sum_i a_ti (r - p_ti)``."""
        coeffs = np.asarray(coeffs)
        return np.where(self.tri_rwg >= 0, self.tri_coef * coeffs[np.maximum(self.tri_rwg, 0)], 0.0)

    def evaluate(self, coeffs: np.ndarray, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Surface current at ``points`` lying on triangles ``tri``."""
        a = self.current_on_triangles(coeffs)[tri]
        p = self.mesh.corners[tri]
        return np.einsum("...i,...id->...d", a, points[..., None, :] - p)


# ---------------------------------------------------------------------------
# kernel helpers
# ---------------------------------------------------------------------------

def _smooth_green(k: float, r: np.ndarray) -> np.ndarray:
    """(exp(-jkR) - 1) / (4 pi R) with its limit at R = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.expm1(-1j * k * r) / (FOUR_PI * r)
    return np.where(r > 0, val, -1j * k / FOUR_PI)


def _smooth_grad_factor(k: float, r: np.ndarray) -> np.ndarray:
    """((1 + jkR) exp(-jkR) - 1) / (4 pi R^3), zero where R = 0.

    Multiplied by (r - r') this is the smooth part of grad' g.
    """
    x = 1j * k * r
    small = np.abs(x) < 0.1
    # (1+x)e^{-x} - 1 = sum_{m>=2} (-1)^m (1-m) x^m / m!
    series = x * x * (-0.5 + x * (1 / 3 + x * (-1 / 8 + x * (1 / 30 + x * (-1 / 144)))))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = (1 + x) * np.exp(-x) - 1
        val = np.where(small, series, direct) / (FOUR_PI * r ** 3)
    return np.where(r > 0, val, 0.0)


def _near_pairs(mesh: TriMesh, factor: float) -> tuple[np.ndarray, np.ndarray]:
    cen = mesh.centroids
    diam = mesh.diameters
    tree = cKDTree(cen)
    hits = tree.query_ball_point(cen, factor * diam)
    t = np.repeat(np.arange(len(cen)), [len(h) for h in hits])
    s = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits])
    pairs = np.unique(np.concatenate([np.stack([t, s], 1), np.stack([s, t], 1)]), axis=0)
    return pairs[:, 0], pairs[:, 1]


@dataclass
class _Accumulator:
    """Scatters per-triangle-pair local blocks into RWG matrices."""

    space: RwgSpace
    want_z: bool
    want_k: bool

    def __post_init__(self):
        n = self.space.n
        self.za = np.zeros((n, n), dtype=complex) if self.want_z else None
        self.zphi = np.zeros((n, n), dtype=complex) if self.want_z else None
        self.k = np.zeros((n, n), dtype=complex) if self.want_k else None

    def add_pairs(self, t, s, mv, pmat, kl):
        sp = self.space
        rt, rs = sp.tri_rwg[t], sp.tri_rwg[s]
        ct, cs = sp.tri_coef[t], sp.tri_coef[s]
        rows = np.broadcast_to(rt[:, :, None], rt.shape + (3,))
        cols = np.broadcast_to(rs[:, None, :], rt.shape + (3,))
        ok = (rows >= 0) & (cols >= 0)
        if self.want_z:
            np.add.at(self.za, (rows[ok], cols[ok]), (ct[:, :, None] * cs[:, None, :] * mv)[ok])
            dt, ds = sp.tri_div[t], sp.tri_div[s]
            np.add.at(self.zphi, (rows[ok], cols[ok]),
                      (dt[:, :, None] * ds[:, None, :] * pmat[:, None, None])[ok])
        if self.want_k:
            np.add.at(self.k, (rows[ok], cols[ok]), (ct[:, :, None] * cs[:, None, :] * kl)[ok])


def _efie_parts(wt, rt, s0, s1):
    """Test-side sums for aligned (test, source) pairs.

    ``wt`` (M, Q) weights, ``rt`` (M, Q, 3) points, ``s0`` (M, Q) and
    ``s1`` (M, Q, 3) the source integrals of g and g r'.
    """
    return {"pmat": _es("mq,mq->m", wt, s0),
            "a1": _es("mq,mqd,mqd->m", wt, rt, s1),
            "b1": _es("mq,mqd,mq->md", wt, rt, s0),
            "c1": _es("mq,mqd->md", wt, s1)}


def _local_blocks(parts, pt, ps, want_z, want_k):
    """3x3 local blocks ``(mv, pmat, kl)`` for aligned pairs.

    ``pt`` and ``ps`` are the (M, 3, 3) test and source corners.
    """
    mv = kl = pmat = None
    if want_z:
        pmat = parts["pmat"]
        mv = (parts["a1"][:, None, None]
              - _es("mjd,md->mj", ps, parts["b1"])[:, None, :]
              - _es("mid,md->mi", pt, parts["c1"])[:, :, None]
              + _es("mid,mjd->mij", pt, ps) * pmat[:, None, None])
    if want_k:
        kl = parts["k1"][:, :, None] - _es("mid,mjd->mij", parts["kx"], ps)
    return mv, pmat, kl


def _assemble(space: RwgSpace, medium: Medium, quad: QuadratureConfig,
              want_z: bool, want_k: bool) -> _Accumulator:
    mesh = space.mesh
    nf = mesh.n_triangles
    if space.n > DEFAULT_MAX_UNKNOWNS:
        raise MemoryError(f"{space.n} unknowns exceed the dense cap {DEFAULT_MAX_UNKNOWNS}")
    k = medium.k
    corners = mesh.corners
    normals = mesh.normals
    acc = _Accumulator(space, want_z, want_k)

    near_t, near_s = _near_pairs(mesh, quad.near_factor)
    near = sparse.csr_matrix((np.ones(len(near_t)), (near_t, near_s)), shape=(nf, nf))
    near.sort_indices()

    # far pass: plain product rule, compiled loop
    rt, wt = rule_points(corners, quad.far)
    far_pass(rt, wt, rt, wt, corners, normals, space.tri_rwg, space.tri_coef,
             near.indptr.astype(np.int64), near.indices.astype(np.int64), k, want_z, want_k,
             acc.za if want_z else _EMPTY, acc.zphi if want_z else _EMPTY, acc.k if want_k else _EMPTY)

    # near pass: closed-form static part plus quadrature of the smooth remainder
    rq, wq = rule_points(corners, quad.near_test)
    rp, wp = rule_points(corners, quad.near_source)
    batch = max(1, int(quad.chunk_elements // (wq.shape[1] * max(wp.shape[1], 12))))
    for start in range(0, len(near_t), batch):
        t = near_t[start:start + batch]
        s = near_s[start:start + batch]
        rt, wt = rq[t], wq[t]                         # (M, Q, 3)
        src, wsrc = rp[s], wp[s]                      # (M, P, 3)
        diff = rt[:, :, None, :] - src[:, None, :, :]
        r = np.sqrt(_es("...d,...d->...", diff, diff))
        cs = corners[s][:, None]                      # (M, 1, 3, 3)
        one, vec, grad = static_potentials(rt, cs, need_grad=want_k)
        s0 = s1 = i_f = i_fr = None
        if want_z:
            gs = _smooth_green(k, r)
            ns = normals[s][:, None, :]
            d = _es("mqd,mqd->mq", rt - corners[s][:, None, 0, :], ns)
            rho = rt - d[..., None] * ns
            s0 = _es("mqp,mp->mq", gs, wsrc) + one / FOUR_PI
            s1 = (_es("mqp,mp,mpd->mqd", gs, wsrc, src)
                  + (vec + rho * one[..., None]) / FOUR_PI)
        parts = _efie_parts(wt, rt, s0, s1) if want_z else {}
        if want_k:
            fs = _smooth_grad_factor(k, r)
            i_f = _es("mqp,mp->mq", fs, wsrc)
            i_fr = _es("mqp,mp,mpd->mqd", fs, wsrc, src)
            # static part: int grad'(1/4piR) = -grad/(4pi) =: g0, and
            # int grad'(1/4piR) x r' = g0 x r since (r - r') x (r - r') = 0
            g0 = -grad / FOUR_PI
            gv = rt * i_f[..., None] - i_fr + g0
            gx = np.cross(rt, i_fr) + np.cross(g0, rt)
            parts.update(_k_parts_from_g(rt, wt, corners[t], normals[t], gv, gx))
        mv, pmat, kl = _local_blocks(parts, corners[t], corners[s], want_z, want_k)
        acc.add_pairs(t, s, mv, pmat, kl)
    return acc


def _k_parts_from_g(rt, wt, pt, nt, gv, gx):
    """MFIE test contractions given grad' g integrals ``gv`` and ``gv x r`` type ``gx``."""
    m = np.cross(rt[..., :, None, :] - pt[..., None, :, :], nt[..., None, None, :])  # (M,Q,3,3)
    k1 = _es("mq,mqid,mqd->mi", wt, m, gx)
    kx = _es("mq,mqid->mid", wt, np.cross(m, gv[:, :, None, :]))
    return {"k1": k1, "kx": kx}


def _gram_local(space: RwgSpace) -> np.ndarray:
    corners = space.mesh.corners
    pts, w = rule_points(corners, "7")
    a = pts[:, :, None, :] - corners[:, None, :, :]          # (F, P, 3, 3)
    return _es("fp,fpid,fpjd->fij", w, a, a)


def assemble_gram(space: RwgSpace) -> DenseOperator:
    """``G_mn = int Lambda_m . Lambda_n`` (exact, degree-2 integrand)."""
    n = space.n
    loc = _gram_local(space)
    rows = np.broadcast_to(space.tri_rwg[:, :, None], loc.shape)
    cols = np.broadcast_to(space.tri_rwg[:, None, :], loc.shape)
    vals = space.tri_coef[:, :, None] * space.tri_coef[:, None, :] * loc
    ok = (rows >= 0) & (cols >= 0)
    g = np.zeros((n, n))
    np.add.at(g, (rows[ok], cols[ok]), vals[ok])
    return DenseOperator(g, Role.GRAM_G)


def _efie_from(acc: _Accumulator, medium: Medium) -> DenseOperator:
    # near pairs use different test and source rules; averaging the two
    # orderings restores the exact symmetry of the Galerkin form
    vector = 0.5j * medium.omega * medium.mu * (acc.za + acc.za.T)
    scalar = 0.5 * (acc.zphi + acc.zphi.T) / (1j * medium.omega * medium.eps)
    z = vector + scalar
    return DenseOperator(z, Role.EFIE_Z, parts={"vector": vector, "scalar": scalar})


def _check_mfie_rows(space: RwgSpace, efie_only: np.ndarray | None):
    open_dofs = space.open_dofs()
    if not open_dofs.any():
        return
    if efie_only is None or np.any(open_dofs & ~efie_only):
        raise ValueError("MFIE requested on open-surface unknowns; mask them as EFIE-only")


def _mfie_from(acc: _Accumulator, gram: DenseOperator) -> DenseOperator:
    b = 0.5 * gram.entries + acc.k
    return DenseOperator(b, Role.MFIE_B, parts={"K": acc.k})


def assemble_efie(space: RwgSpace, medium: Medium, quad: QuadratureConfig | None = None) -> DenseOperator:
    acc = _assemble(space, medium, quad or QuadratureConfig(), True, False)
    return _efie_from(acc, medium)


def assemble_mfie(space: RwgSpace, medium: Medium, quad: QuadratureConfig | None = None,
                  efie_only: np.ndarray | None = None) -> DenseOperator:
    _check_mfie_rows(space, efie_only)
    acc = _assemble(space, medium, quad or QuadratureConfig(), False, True)
    return _mfie_from(acc, assemble_gram(space))


def assemble_all(space: RwgSpace, medium: Medium, quad: QuadratureConfig | None = None,
                 efie_only: np.ndarray | None = None) -> dict[str, DenseOperator]:
    """EFIE, MFIE and Gram from a single pass over triangle pairs."""
    _check_mfie_rows(space, efie_only)
    acc = _assemble(space, medium, quad or QuadratureConfig(), True, True)
    gram = assemble_gram(space)
    return {"Z": _efie_from(acc, medium), "B": _mfie_from(acc, gram), "G": gram}


def cfie_combine(z: DenseOperator, b: DenseOperator, medium: Medium,
                 cfg: CfieConfig | None = None) -> DenseOperator:
    """``(1/eta) Z + alpha B`` row-wise; EFIE-only rows keep ``Z/eta``."""
    cfg = cfg or CfieConfig()
    if z.shape != b.shape:
        raise ValueError(f"size mismatch {z.shape} vs {b.shape}")
    if z.basis != b.basis:
        raise ValueError("operators must share a basis")
    efie_only = cfg.efie_only(z.shape[0])
    c = z.entries / medium.eta + cfg.alpha * np.where(efie_only[:, None], 0.0, b.entries)
    return DenseOperator(c, Role.CFIE_C, z.basis)


def plane_wave_rhs(space: RwgSpace, medium: Medium, exc: Excitation, formulation: str = "EFIE",
                   cfg: CfieConfig | None = None, quad: QuadratureConfig | None = None) -> np.ndarray:
    """Tested incident field: ``<Lambda, E>``, ``<Lambda, n x H>`` or their CFIE mix."""
    quad = quad or QuadratureConfig()
    corners = space.mesh.corners
    pts, w = rule_points(corners, quad.rhs)
    e, h = exc.fields(pts, medium)
    a = pts[:, :, None, :] - corners[:, None, :, :]          # (F, P, 3, 3)
    form = formulation.upper()

    def tested(field_vals):
        loc = _es("fp,fpid,fpd->fi", w, a, field_vals)
        ok = space.tri_rwg >= 0
        out = np.zeros(space.n, dtype=complex)
        np.add.at(out, space.tri_rwg[ok], (space.tri_coef * loc)[ok])
        return out

    if form == "EFIE":
        return tested(e)
    nxh = np.cross(space.mesh.normals[:, None, :], h)
    if form == "MFIE":
        return tested(nxh)
    if form == "CFIE":
        cfg = cfg or CfieConfig()
        efie_only = cfg.efie_only(space.n)
        return tested(e) / medium.eta + cfg.alpha * np.where(efie_only, 0.0, tested(nxh))
    raise ValueError(f"unknown formulation {formulation!r}")


def far_field(space: RwgSpace, coeffs: np.ndarray, medium: Medium, directions: np.ndarray,
              quad: QuadratureConfig | None = None) -> np.ndarray:
    """Radiation vector ``j w mu / (4 pi) (I - rr) . int J exp(jk r.r')``; ``E = -that e^{-jkr}/r``."""
    quad = quad or QuadratureConfig()
    corners = space.mesh.corners
    pts, w = rule_points(corners, quad.far_field)
    a = space.current_on_triangles(coeffs)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    jw = _es("fi,fpid->fpd", a, pts[:, :, None, :] - corners[:, None, :, :]) * w[..., None]
    phase = np.exp(1j * medium.k * _es("ad,fpd->afp", dirs, pts))
    nvec = _es("afp,fpd->ad", phase, jw)
    nperp = nvec - dirs * _es("ad,ad->a", dirs, nvec)[:, None]
    return 1j * medium.omega * medium.mu / FOUR_PI * nperp


def far_field_rcs(space: RwgSpace, coeffs: np.ndarray, medium: Medium, directions: np.ndarray,
                  exc: Excitation | None = None, quad: QuadratureConfig | None = None):
    """Bistatic RCS ``4 pi |E_far|^2 r^2 / |E_inc|^2`` in m^2 and dBsm."""
    amp = abs((exc or Excitation()).amplitude)
    ef = far_field(space, coeffs, medium, directions, quad)
    sigma = FOUR_PI * np.sum(np.abs(ef) ** 2, axis=1) / amp ** 2
    with np.errstate(divide="ignore"):
        dbsm = 10 * np.log10(sigma)
    return sigma, dbsm


def plane_directions(theta: np.ndarray, phi: float = 0.0) -> np.ndarray:
    """Unit vectors at polar angles ``theta`` (radians) in the plane ``phi``."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
