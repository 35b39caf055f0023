"""Compiled far-interaction loop for the RWG operators."""

from __future__ import annotations

import numpy as np
from numba import njit

_INV4PI = 1.0 / (4.0 * np.pi)


@njit(cache=True, error_model="numpy")
def far_pass(rq, wq, rp, wp, corners, normals, tri_rwg, tri_coef, near_ptr, near_idx,
             k, want_z, want_k, za, zphi, kk):
    """Accumulate all far triangle pairs (CSR ``near`` pattern skipped).

    ``rq, wq`` are test points and weights per triangle, ``rp, wp`` the
    source ones.  Results are added into ``za`` (vector potential part),
    ``zphi`` (scalar part, divergence weights included) and ``kk`` (MFIE K).
    """
    nf = rq.shape[0]
    nq = rq.shape[1]
    npt = rp.shape[1]
    s0 = np.zeros(nq, dtype=np.complex128)
    s1 = np.zeros((nq, 3), dtype=np.complex128)
    i_f = np.zeros(nq, dtype=np.complex128)
    i_fr = np.zeros((nq, 3), dtype=np.complex128)
    mvec = np.zeros((nq, 3, 3))
    b1 = np.zeros(3, dtype=np.complex128)
    c1 = np.zeros(3, dtype=np.complex128)
    k1 = np.zeros(3, dtype=np.complex128)
    kx = np.zeros((3, 3), dtype=np.complex128)
    for t in range(nf):
        nx, ny, nz = normals[t, 0], normals[t, 1], normals[t, 2]
        for q in range(nq):
            for i in range(3):
                ax = rq[t, q, 0] - corners[t, i, 0]
                ay = rq[t, q, 1] - corners[t, i, 1]
                az = rq[t, q, 2] - corners[t, i, 2]
                mvec[q, i, 0] = ay * nz - az * ny
                mvec[q, i, 1] = az * nx - ax * nz
                mvec[q, i, 2] = ax * ny - ay * nx
        lo = near_ptr[t]
        hi = near_ptr[t + 1]
        ptr = lo
        for s in range(nf):
            while ptr < hi and near_idx[ptr] < s:
                ptr += 1
            if ptr < hi and near_idx[ptr] == s:
                continue
            for q in range(nq):
                s0[q] = 0.0
                i_f[q] = 0.0
                for d in range(3):
                    s1[q, d] = 0.0
                    i_fr[q, d] = 0.0
                for p in range(npt):
                    dx = rq[t, q, 0] - rp[s, p, 0]
                    dy = rq[t, q, 1] - rp[s, p, 1]
                    dz = rq[t, q, 2] - rp[s, p, 2]
                    r = np.sqrt(dx * dx + dy * dy + dz * dz)
                    g = np.exp(-1j * k * r) * (_INV4PI / r) * wp[s, p]
                    if want_z:
                        s0[q] += g
                        for d in range(3):
                            s1[q, d] += g * rp[s, p, d]
                    if want_k:
                        f = g * (1.0 + 1j * k * r) / (r * r)
                        i_f[q] += f
                        for d in range(3):
                            i_fr[q, d] += f * rp[s, p, d]
            if want_z:
                # mv[i, j] = a1 - p_sj.b1 - p_ti.c1 + (p_ti.p_sj) pval
                pval = 0.0j
                a1 = 0.0j
                b1[:] = 0.0
                c1[:] = 0.0
                for q in range(nq):
                    w = wq[t, q]
                    pval += w * s0[q]
                    for d in range(3):
                        a1 += w * rq[t, q, d] * s1[q, d]
                        b1[d] += w * rq[t, q, d] * s0[q]
                        c1[d] += w * s1[q, d]
                for i in range(3):
                    m = tri_rwg[t, i]
                    if m < 0:
                        continue
                    pc = corners[t, i, 0] * c1[0] + corners[t, i, 1] * c1[1] + corners[t, i, 2] * c1[2]
                    for j in range(3):
                        n = tri_rwg[s, j]
                        if n < 0:
                            continue
                        pb = corners[s, j, 0] * b1[0] + corners[s, j, 1] * b1[1] + corners[s, j, 2] * b1[2]
                        pp = (corners[t, i, 0] * corners[s, j, 0] + corners[t, i, 1] * corners[s, j, 1]
                              + corners[t, i, 2] * corners[s, j, 2])
                        c = tri_coef[t, i] * tri_coef[s, j]
                        za[m, n] += c * (a1 - pb - pc + pp * pval)
                        zphi[m, n] += 4.0 * c * pval
            if want_k:
                # kl[i, j] = k1_i - p_sj.kx_i, k1_i = sum w m_i.(r x i_fr), kx_i = sum w m_i x gv
                k1[:] = 0.0
                kx[:, :] = 0.0
                for q in range(nq):
                    w = wq[t, q]
                    rx, ry, rz = rq[t, q, 0], rq[t, q, 1], rq[t, q, 2]
                    gvx = rx * i_f[q] - i_fr[q, 0]
                    gvy = ry * i_f[q] - i_fr[q, 1]
                    gvz = rz * i_f[q] - i_fr[q, 2]
                    gxx = ry * i_fr[q, 2] - rz * i_fr[q, 1]
                    gxy = rz * i_fr[q, 0] - rx * i_fr[q, 2]
                    gxz = rx * i_fr[q, 1] - ry * i_fr[q, 0]
                    for i in range(3):
                        mx, my, mz = mvec[q, i, 0], mvec[q, i, 1], mvec[q, i, 2]
                        k1[i] += w * (mx * gxx + my * gxy + mz * gxz)
                        kx[i, 0] += w * (my * gvz - mz * gvy)
                        kx[i, 1] += w * (mz * gvx - mx * gvz)
                        kx[i, 2] += w * (mx * gvy - my * gvx)
                for i in range(3):
                    m = tri_rwg[t, i]
                    if m < 0:
                        continue
                    for j in range(3):
                        n = tri_rwg[s, j]
                        if n < 0:
                            continue
                        val = k1[i] - (corners[s, j, 0] * kx[i, 0] + corners[s, j, 1] * kx[i, 1]
                                       + corners[s, j, 2] * kx[i, 2])
                        kk[m, n] += tri_coef[t, i] * tri_coef[s, j] * val
