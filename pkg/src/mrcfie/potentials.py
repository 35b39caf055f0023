"""Closed-form static integrals of 1/R over flat triangles.

For an observation point r and a triangle T with unit normal n, with
rho the projection of r on the plane of T and d = n.(r - rho):

    one  = int_T 1/R dA'
    rho_ = int_T (r' - rho)/R dA'
    grad = int_T grad_r (1/R) dA'

The edge-sum formulas follow Wilton et al. (1984) and Graglia (1993).
"""

from __future__ import annotations

import numpy as np


def _edge_log(rp, rm, lp, lm):
    # ln((R+ + l+)/(R- + l-)), using the conjugate form behind the edge
    # to avoid cancellation when both l are negative
    fwd = (lp + lm) >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(fwd, rp + lp, rm - lm)
        b = np.where(fwd, rm + lm, rp - lp)
        return np.log(a / b)


def static_potentials(obs: np.ndarray, corners: np.ndarray, need_grad: bool = True):
    """Evaluate the static triangle integrals for paired points and triangles.

    Parameters
    ----------
    obs : (..., 3) array
        Observation points.
    corners : (..., 3, 3) array
        Triangle vertices, broadcastable against ``obs``.
    need_grad : bool
        Skip the gradient when False (returned as None).  For points in
        the plane of the triangle the gradient is the principal value: its
        normal component is zero.

    Returns
    -------
    one : (...,) array
    rho : (..., 3) array
    grad : (..., 3) array or None
    """
    obs = np.asarray(obs, dtype=float)
    v = np.asarray(corners, dtype=float)
    e1 = v[..., 1, :] - v[..., 0, :]
    e2 = v[..., 2, :] - v[..., 0, :]
    nrm = np.cross(e1, e2)
    nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
    d = np.einsum("...k,...k->...", obs - v[..., 0, :], nrm)
    # in-plane points: drop round-off in d so the gradient is the principal value
    scale = np.linalg.norm(e1, axis=-1) + np.linalg.norm(e2, axis=-1)
    d = np.where(np.abs(d) <= 1e-12 * scale, 0.0, d)
    rho = obs - d[..., None] * nrm
    ad = np.abs(d)

    one = 0.0
    vec = 0.0
    beta_sum = 0.0
    grad_plane = 0.0
    for i in range(3):
        a = v[..., i, :]
        b = v[..., (i + 1) % 3, :]
        edge = b - a
        lhat = edge / np.linalg.norm(edge, axis=-1, keepdims=True)
        u = np.cross(lhat, nrm)
        lp = np.einsum("...k,...k->...", b - rho, lhat)
        lm = np.einsum("...k,...k->...", a - rho, lhat)
        t0 = np.einsum("...k,...k->...", a - rho, u)
        r0sq = t0 * t0 + d * d
        rp = np.linalg.norm(obs - b, axis=-1)
        rm = np.linalg.norm(obs - a, axis=-1)
        f = _edge_log(rp, rm, lp, lm)
        degenerate = r0sq <= 1e-30 * (lp * lp + lm * lm)
        f_safe = np.where(degenerate, 0.0, f)
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = (np.arctan(t0 * lp / (r0sq + ad * rp)) - np.arctan(t0 * lm / (r0sq + ad * rm)))
        beta = np.where(degenerate, 0.0, beta)
        one = one + t0 * f_safe - ad * beta
        vec = vec + 0.5 * u * (r0sq * f_safe + lp * rp - lm * rm)[..., None]
        beta_sum = beta_sum + beta
        if need_grad:
            grad_plane = grad_plane + u * f[..., None]
    grad = None
    if need_grad:
        grad = -grad_plane - nrm * (np.sign(d) * beta_sum)[..., None]
    return one, vec, grad
