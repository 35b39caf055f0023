"""Triangle quadrature rules in barycentric form.

Rules are named ``"1"``, ``"3"``, ``"7"`` (Strang-Fix/Radon, exact to degree
1, 2 and 5) or ``"gaussN"`` for the collapsed N x N Gauss-Legendre product
rule, exact to degree ``2N - 2`` (the collapse Jacobian costs one degree).
Weights sum to one; multiply by the triangle area.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W1, _W2 = 0.132394152788506, 0.125939180544827


@lru_cache(maxsize=None)
def triangle_rule(name: str | int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(bary, weights)`` with shapes ``(P, 3)`` and ``(P,)``."""
    name = str(name)
    if name == "1":
        bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
        w = np.array([1.0])
    elif name == "3":
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        w = np.full(3, 1 / 3)
    elif name == "7":
        bary = np.array([
            [1 / 3, 1 / 3, 1 / 3],
            [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
            [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
        w = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])
    elif name.startswith("gauss"):
        n = int(name[5:])
        if n < 1:
            raise ValueError(f"bad rule {name!r}")
        x, wx = np.polynomial.legendre.leggauss(n)
        x = 0.5 * (x + 1)
        wx = 0.5 * wx
        # Duffy collapse of the unit square onto the reference triangle
        u, v = np.meshgrid(x, x, indexing="ij")
        wu, wv = np.meshgrid(wx, wx, indexing="ij")
        s = u.ravel()
        t = (v * (1 - u)).ravel()
        w = (wu * wv * (1 - u)).ravel() * 2.0
        bary = np.stack([1 - s - t, s, t], axis=1)
    else:
        raise ValueError(f"unknown triangle rule {name!r}")
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def rule_points(corners: np.ndarray, name: str | int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points ``(..., P, 3)`` and area-scaled weights ``(..., P)``.

    ``corners`` has shape ``(..., 3, 3)``.
    """
    bary, w = triangle_rule(name)
    pts = np.einsum("pk,...kd->...pd", bary, corners)
    e1 = corners[..., 1, :] - corners[..., 0, :]
    e2 = corners[..., 2, :] - corners[..., 0, :]
    area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=-1)
    return pts, area[..., None] * w


def rule_degree(name: str | int) -> int:
    name = str(name)
    if name.startswith("gauss"):
        return 2 * int(name[5:]) - 2
    return {"1": 1, "3": 2, "7": 5}[name]
