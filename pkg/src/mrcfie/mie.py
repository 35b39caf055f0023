"""Series solution for plane-wave scattering by a PEC sphere."""

from __future__ import annotations

import numpy as np
from scipy.special import spherical_jn, spherical_yn

MAX_KA = 50.0


def mie_coefficients(ka: float, n_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """PEC coefficients ``a_n = psi_n'/xi_n'`` and ``b_n = psi_n/xi_n``, n = 1..n_max."""
    if ka <= 0:
        raise ValueError("ka must be positive")
    if n_max is None:
        n_max = int(np.ceil(ka + 4 * ka ** (1 / 3) + 10))
    n = np.arange(1, n_max + 1)
    j, dj = spherical_jn(n, ka), spherical_jn(n, ka, derivative=True)
    y, dy = spherical_yn(n, ka), spherical_yn(n, ka, derivative=True)
    psi = ka * j
    dpsi = j + ka * dj
    xi = ka * (j + 1j * y)
    dxi = (j + 1j * y) + ka * (dj + 1j * dy)
    return dpsi / dxi, psi / xi


def _angular(n_max: int, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = np.cos(theta)
    pi = np.zeros((n_max + 1, theta.size))
    tau = np.zeros_like(pi)
    pi[1] = 1.0
    tau[1] = mu
    for n in range(2, n_max + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


def mie_rcs(radius: float, k: float, theta: np.ndarray, plane: str = "E",
            n_max: int | None = None) -> np.ndarray:
    """Bistatic RCS in m^2 at scattering angles ``theta`` (0 = forward).

    ``plane="E"`` is the plane containing the incident polarization,
    ``plane="H"`` the orthogonal one.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    a, b = mie_coefficients(k * radius, n_max)
    nn = np.arange(1, a.size + 1)
    pi, tau = _angular(a.size, theta)
    c = ((2 * nn + 1) / (nn * (nn + 1)))[:, None]
    if plane.upper() == "E":
        s = np.sum(c * (a[:, None] * tau + b[:, None] * pi), axis=0)
    elif plane.upper() == "H":
        s = np.sum(c * (a[:, None] * pi + b[:, None] * tau), axis=0)
    else:
        raise ValueError(f"plane must be 'E' or 'H', got {plane!r}")
    return 4 * np.pi * np.abs(s) ** 2 / k ** 2


def mie_rcs_oracle(radius: float, medium, angles: np.ndarray, plane: str = "E") -> np.ndarray:
    """Bistatic RCS of a PEC sphere in ``medium`` (anything with a ``k``).

    Only ``0 < ka <= 50`` is accepted; beyond that the default truncation
    is not trusted.
    """
    ka = medium.k * radius
    if not 0 < ka <= MAX_KA:
        raise ValueError(f"ka = {ka:.3g} outside (0, {MAX_KA}]")
    return mie_rcs(radius, medium.k, angles, plane)
