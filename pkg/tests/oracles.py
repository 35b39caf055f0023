"""Independent reference integrals used by the tests.

Nothing here calls the package's assembly code.  The EFIE oracle handles
the singular kernel in polar coordinates about each in-plane test point:
the radial integrals of ``exp(-jks)`` are closed form and the angular
integral is smooth once parametrized by angle, so plain Gauss-Legendre
converges fast.  The outer (test) integral uses a tensor Gauss rule graded
towards every edge, where the inner potential has log-type derivatives.
"""

from __future__ import annotations

import numpy as np

MU0 = 4e-7 * np.pi * 1.00000000055
C0 = 299792458.0
EPS0 = 1.0 / (MU0 * C0 ** 2)


def _radial(k, rho):
    """int_0^rho e^{-jks} ds / 4pi and int_0^rho s e^{-jks} ds / 4pi."""
    if k == 0:
        return rho / (4 * np.pi), rho ** 2 / (8 * np.pi)
    e = np.exp(-1j * k * rho)
    f0 = (1 - e) / (1j * k)
    f1 = e * (-rho / (1j * k) + 1 / k ** 2) - 1 / k ** 2
    return f0 / (4 * np.pi), f1 / (4 * np.pi)


def polar_inner(p, corners, normal, k, ps, nphi=60):
    """``int_T g dA'`` and ``int_T g (r' - ps) dA'`` for points ``p`` in the plane of ``T``."""
    x, w = np.polynomial.legendre.leggauss(nphi)
    s0 = np.zeros(len(p), complex)
    s1 = np.zeros((len(p), 3), complex)
    for i in range(3):
        a, b = corners[i], corners[(i + 1) % 3]
        t = (b - a) / np.linalg.norm(b - a)
        h = np.cross(a - p, t) @ normal
        ha = np.abs(h)
        foot = a - ((a - p) @ t)[:, None] * t
        ta, tb = (a - foot) @ t, (b - foot) @ t
        with np.errstate(divide="ignore", invalid="ignore"):
            pa, pb = np.arctan2(ta, ha), np.arctan2(tb, ha)
            phi = 0.5 * (pa + pb)[:, None] + 0.5 * (pb - pa)[:, None] * x
            wphi = 0.5 * (pb - pa)[:, None] * w
            rho = ha[:, None] / np.cos(phi)
            q = foot[:, None, :] + (ha[:, None] * np.tan(phi))[..., None] * t
            e = (q - p[:, None, :]) / rho[..., None]
        f0, f1 = _radial(k, rho)
        sg = np.where(ha > 1e-14, np.sign(h), 0.0)[:, None]
        f0 = np.where(sg != 0, f0, 0)
        f1 = np.where(sg != 0, f1, 0)
        e = np.nan_to_num(e)
        s0 += np.sum(sg * wphi * f0, axis=1)
        s1 += np.sum((sg * wphi)[..., None] * (f0[..., None] * (p[:, None, :] - ps) + f1[..., None] * e),
                     axis=1)
    return s0, s1


def graded_rule(n, p=3):
    """Gauss-Legendre on [0, 1] pulled towards both ends by a degree-``p`` sigmoid."""
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1)
    w = 0.5 * w
    den = t ** p + (1 - t) ** p
    return t ** p / den, w * p * t ** (p - 1) * (1 - t) ** (p - 1) / den ** 2


def triangle_points(corners, n):
    """Graded collapsed tensor rule on a triangle: points (M, 3), weights (M,)."""
    a, b, c = corners
    u, wu = graded_rule(n)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    w1, w2 = np.meshgrid(wu, wu, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    pts = a + uu[:, None] * ((b - a) + vv[:, None] * (c - b))
    return pts, (w1 * w2).ravel() * uu * area2


def planar_rwg_self(vertices, tris, free, omega, n=40, nphi=60):
    """``Z[0, 0]`` of the single RWG of a flat two-triangle patch.

    ``tris[0]`` is T+ and ``free[i]`` the vertex of ``tris[i]`` opposite the
    shared edge of length ``l``.
    """
    v = np.asarray(vertices, float)
    k = omega * np.sqrt(EPS0 * MU0)
    edge = set(tris[0]) & set(tris[1])
    i, j = sorted(edge)
    length = np.linalg.norm(v[i] - v[j])
    cs = []
    for s, t in enumerate(tris):
        c = v[list(t)]
        area = 0.5 * np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0]))
        cs.append((1 if s == 0 else -1) * length / (2 * area))
    normal = np.cross(v[tris[0][1]] - v[tris[0][0]], v[tris[0][2]] - v[tris[0][0]])
    normal /= np.linalg.norm(normal)
    vec = 0j
    sca = 0j
    for t in range(2):
        r, w = triangle_points(v[list(tris[t])], n)
        for s in range(2):
            s0, s1 = polar_inner(r, v[list(tris[s])], normal, k, v[free[s]], nphi)
            vec += cs[t] * cs[s] * np.sum(w * np.einsum("md,md->m", r - v[free[t]], s1))
            sca += 4 * cs[t] * cs[s] * np.sum(w * s0)
    return 1j * omega * MU0 * vec + sca / (1j * omega * EPS0)


def gauss_product(corners, n):
    """Collapsed n x n Gauss-Legendre rule built from numpy only."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    a, b, c = corners
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    pts = a + u.ravel()[:, None] * ((b - a) + v.ravel()[:, None] * (c - b))
    return pts, (wu * wv * u).ravel() * area2
