r"""Fractional Sobolev norms on circles and spheres.

Boundary data on :math:`\partial B_r` are stored as coefficients against the
unnormalised surface harmonics, :math:`\sum_n c_n e^{in\theta}` in 2D and
:math:`\sum_{n,m} c_n^m Y_n^m` in 3D (orthonormal on the unit sphere,
Condon-Shortley phase).  The norm weights are

.. math::
    \|u\|^2_{H^s(\partial B_r)} = \sum_n (1 + n^2/r^2)^s |c_n \sqrt{2\pi r}|^2

in 2D and :math:`\sum (1 + n(n+1)/r^2)^s |c_n^m r|^2` in 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special as sp


class SobolevError(ValueError):
    """Malformed density or insufficient samples."""


@dataclass(frozen=True)
class ModalDensity:
    """Boundary data on a circle (``dimension=2``) or sphere (``dimension=3``).

    ``coefficients`` maps ``n`` (any integer) to :math:`c_n` in 2D, and
    ``(n, m)`` with ``|m| <= n`` to :math:`c_n^m` in 3D.
    """

    dimension: int
    radius: float
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise SobolevError(f"dimension must be 2 or 3, got {self.dimension}")
        if not self.radius > 0:
            raise SobolevError("radius must be positive")
        for key in self.coefficients:
            if self.dimension == 2:
                if not isinstance(key, (int, np.integer)):
                    raise SobolevError(f"2D coefficient keys are integers, got {key!r}")
            else:
                n, m = key
                if n < 0 or abs(m) > n:
                    raise SobolevError(f"invalid spherical-harmonic index {key!r}")

    @property
    def n_max(self) -> int:
        if not self.coefficients:
            return 0
        if self.dimension == 2:
            return max(abs(int(n)) for n in self.coefficients)
        return max(int(n) for n, _ in self.coefficients)

    def degree(self, key) -> int:
        return abs(int(key)) if self.dimension == 2 else int(key[0])

    def eigenvalue(self, degree: int) -> float:
        """Laplace-Beltrami eigenvalue on the unit sphere/circle."""
        return float(degree * degree if self.dimension == 2 else degree * (degree + 1))

    def normalizer(self) -> float:
        return math.sqrt(2 * math.pi * self.radius) if self.dimension == 2 else self.radius

    def scaled(self, factor) -> "ModalDensity":
        return replace(self, coefficients={k: factor * v for k, v in self.coefficients.items()})

    def evaluate(self, angles) -> np.ndarray:
        """Reconstruct the density at ``angles`` (θ in 2D; rows of (θ, φ) in 3D)."""
        angles = np.asarray(angles, dtype=float)
        if self.dimension == 2:
            out = np.zeros(angles.shape, dtype=complex)
            for n, c in sorted(self.coefficients.items()):
                out += c * np.exp(1j * n * angles)
            return out
        theta, phi = angles[..., 0], angles[..., 1]
        out = np.zeros(theta.shape, dtype=complex)
        for (n, m), c in sorted(self.coefficients.items()):
            out += c * sp.sph_harm_y(n, m, theta, phi)
        return out


def hs_norm(d: ModalDensity, s: float) -> float:
    """:math:`H^s(\\partial B_r)` norm of a modal density (0 for an empty one)."""
    norm = d.normalizer()
    total = 0.0
    for key, c in sorted(d.coefficients.items()):
        weight = (1.0 + d.eigenvalue(d.degree(key)) / d.radius**2) ** s
        total += weight * abs(c * norm) ** 2
    return math.sqrt(total)


def rescale_density(d: ModalDensity, new_radius: float) -> ModalDensity:
    """Same angular function, measured on the sphere of radius ``new_radius``."""
    if not new_radius > 0:
        raise SobolevError("radius must be positive")
    return replace(d, radius=float(new_radius))


def sphere_grid(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre (in cos θ) × uniform azimuth grid exact to degree ``2 n_max``.

    Returns
    -------
    angles : ndarray, shape (M, 2)
        Rows of (θ, φ).
    weights : ndarray, shape (M,)
        Quadrature weights summing to 4π.
    """
    x, w = np.polynomial.legendre.leggauss(n_max + 1)
    n_phi = 2 * n_max + 1
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    theta = np.arccos(x)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    ww = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return np.column_stack([tt.ravel(), pp.ravel()]), ww


def _grid_weights(angles: np.ndarray, n_max: int) -> np.ndarray:
    ref_angles, ref_weights = sphere_grid(n_max)
    if angles.shape != ref_angles.shape:
        raise SobolevError(
            f"3D samples must lie on the {len(ref_angles)}-point grid from sphere_grid({n_max})"
        )
    order = np.lexsort((angles[:, 1], angles[:, 0]))
    ref_order = np.lexsort((ref_angles[:, 1], ref_angles[:, 0]))
    if not np.allclose(angles[order], ref_angles[ref_order], atol=1e-12):
        raise SobolevError("3D samples do not match the Gauss-Legendre x uniform grid")
    weights = np.empty(len(angles))
    weights[order] = ref_weights[ref_order]
    return weights


def modal_project(angles, values, dimension: int, radius: float, n_max: int) -> ModalDensity:
    """Coefficients of the trigonometric / spherical-harmonic interpolant.

    Parameters
    ----------
    angles : array_like
        2D: uniformly spaced θ values (at least ``2 n_max + 1`` of them).
        3D: rows (θ, φ) of the grid returned by :func:`sphere_grid`.
    values : array_like
        Complex samples at ``angles``.
    dimension, radius, n_max
        Target density metadata and truncation order.
    """
    angles = np.asarray(angles, dtype=float)
    values = np.asarray(values, dtype=complex)
    if n_max < 0:
        raise SobolevError("n_max must be nonnegative")
    if dimension == 2:
        m = angles.size
        if m < 2 * n_max + 1:
            raise SobolevError(f"need at least {2 * n_max + 1} samples, got {m}")
        step = 2 * np.pi / m
        rel = np.mod(angles - angles[0], 2 * np.pi)
        if not np.allclose(np.sort(rel), step * np.arange(m), atol=1e-10):
            raise SobolevError("2D samples must be uniformly spaced over the circle")
        coeffs = {}
        for n in range(-n_max, n_max + 1):
            coeffs[n] = complex(np.sum(values * np.exp(-1j * n * angles)) / m)
        return ModalDensity(2, float(radius), coeffs)
    if dimension == 3:
        angles = angles.reshape(-1, 2)
        weights = _grid_weights(angles, n_max)
        theta, phi = angles[:, 0], angles[:, 1]
        coeffs = {}
        for n in range(n_max + 1):
            for m in range(-n, n + 1):
                ylm = sp.sph_harm_y(n, m, theta, phi)
                coeffs[(n, m)] = complex(np.sum(weights * values * np.conj(ylm)))
        return ModalDensity(3, float(radius), coeffs)
    raise SobolevError(f"dimension must be 2 or 3, got {dimension}")


def default_probe(dimension: int, radius: float) -> ModalDensity:
    """Broadband probe: :math:`1/(1+\\lambda_n)` on every mode up to degree 8 (2D) / 6 (3D)."""
    if dimension == 2:
        return ModalDensity(2, radius, {n: 1.0 / (1 + n * n) + 0j for n in range(-8, 9)})
    coeffs = {(n, m): 1.0 / (1 + n * (n + 1)) + 0j for n in range(7) for m in range(-n, n + 1)}
    return ModalDensity(3, radius, coeffs)


def single_mode(dimension: int, radius: float, n: int, m: int = 0, value: complex = 1.0) -> ModalDensity:
    key = n if dimension == 2 else (n, m)
    return ModalDensity(dimension, radius, {key: complex(value)})
