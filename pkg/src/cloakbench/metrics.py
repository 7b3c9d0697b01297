"""Measured quantities of the cloaking construction and log-log rate fitting.

All norms are taken in the surface eigenbasis (see :mod:`cloakbench.sobolev`),
so every quantity reduces to a weighted sum of per-mode coefficients produced
by :mod:`cloakbench.solver`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import solver as sv
from .material import CloakConfig, DerivedParams
from .sobolev import ModalDensity, hs_norm, rescale_density


class MetricsError(ValueError):
    """Invalid input to a metric or to the rate fit."""


@dataclass(frozen=True)
class SweepSample:
    """One point of a parameter sweep."""

    parameter: float
    value: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise MetricsError(f"norm must be nonnegative, got {self.value}")


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log10 parameter, log10 value)``."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple = ()

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def fit_rate(samples) -> RateFit:
    """Fit ``log10(value) = slope * log10(parameter) + intercept``.

    Raises
    ------
    MetricsError
        Fewer than three samples, or a non-positive parameter/value.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise MetricsError(f"need at least 3 samples, got {len(samples)}")
    x = np.array([s.parameter for s in samples], dtype=float)
    y = np.array([s.value for s in samples], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise MetricsError("rate fit needs finite, strictly positive parameters and values")
    lx, ly = np.log10(x), np.log10(y)
    res = stats.linregress(lx, ly)
    r2 = min(1.0, max(0.0, float(res.rvalue) ** 2))
    return RateFit(float(res.slope), float(res.intercept), r2, tuple(zip(lx.tolist(), ly.tolist())))


def log_grid(lo: float, hi: float, count: int) -> list[float]:
    """``count`` log-spaced values from ``lo`` to ``hi`` inclusive."""
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count)]


# ---------------------------------------------------------------------------
# Cloak measurements


def _per_mode(psi: ModalDensity, table: dict, attr) -> ModalDensity:
    coeffs = {}
    for key in sorted(psi.coefficients):
        entry = table[psi.degree(key)]
        coeffs[key] = psi.coefficients[key] * attr(entry)
    return ModalDensity(psi.dimension, psi.radius, coeffs)


def _transfers(c: CloakConfig, psi: ModalDensity, medium: DerivedParams | None) -> dict:
    degrees = sorted({psi.degree(k) for k in psi.coefficients})
    return {n: sv.cloak_mode_transfer(c, n, medium) for n in degrees}


def trace_gap_density(c: CloakConfig, psi: ModalDensity, medium: DerivedParams | None = None) -> ModalDensity:
    """Coefficients of ``(u_rho - u_0)`` on ``dB_R``: ``psi_n d0_n h~_n``."""
    sv._check_density(psi, c.dimension, c.R)
    return _per_mode(psi, _transfers(c, psi, medium), lambda t: t.ntd_gap)


def trace_gap(c: CloakConfig, psi: ModalDensity, medium: DerivedParams | None = None) -> float:
    """``||u_rho - u_0||_{H^{1/2}(dB_R)}``."""
    return hs_norm(trace_gap_density(c, psi, medium), 0.5)


def _opnorm_term(c: CloakConfig, n: int, medium) -> float:
    tr = sv.cloak_mode_transfer(c, n, medium)
    lam = sv.eigenvalue(c.dimension, n)
    return math.sqrt(1.0 + lam / c.R**2) * abs(tr.ntd_gap)


def _adaptive_sup(term, start: int, cap: int = sv.N_MAX_CAP, rel: float = 1e-14) -> tuple[float, int]:
    """Running sup of ``term(n)`` until three consecutive terms are negligible."""
    best = 0.0
    quiet = 0
    n = 0
    while True:
        value = term(n)
        best = max(best, value)
        quiet = quiet + 1 if value <= rel * best else 0
        if n >= start and quiet >= 3:
            return best, n
        n += 1
        if n > cap:
            raise sv.TruncationError(f"mode sup not converged by n = {cap}")


def ntd_diff_opnorm(c: CloakConfig, medium: DerivedParams | None = None, *,
                    certify: bool = True) -> float:
    """Operator norm of ``Lambda_rho - Lambda_0`` from ``H^{-1/2}`` to ``H^{1/2}``.

    Both maps are diagonal, so the norm is ``sup_n (1 + lambda_n/R^2)^{1/2} |d_n - d0_n|``.
    The sup is truncated adaptively and (optionally) certified by re-evaluating
    with twice as many modes.
    """
    cache: dict[int, float] = {}

    def term(n):
        if n not in cache:
            cache[n] = _opnorm_term(c, n, medium)
        return cache[n]

    start = math.ceil(c.omega * c.R) + 20
    best, n_used = _adaptive_sup(term, start)
    if certify:
        doubled = max(term(n) for n in range(2 * n_used + 1))
        if best == 0.0:
            if doubled != 0.0:
                raise sv.TruncationError("sup changed under doubling")
        elif abs(doubled - best) > 1e-10 * best:
            raise sv.TruncationError(f"sup changed by {abs(doubled - best) / best:.2e} under doubling")
    return best


def conormal_density(c: CloakConfig, psi: ModalDensity, medium: DerivedParams | None = None) -> ModalDensity:
    """``du_R/dnu`` on the outer side of ``dB_rho``, pulled back to ``dB_1``."""
    sv._check_density(psi, c.dimension, c.R)
    d = _per_mode(psi, _transfers(c, psi, medium), lambda t: c.omega * t.conormal)
    return rescale_density(d, 1.0)


def conormal_norm(c: CloakConfig, psi: ModalDensity, s: float = -0.5,
                  medium: DerivedParams | None = None) -> float:
    """``|| du_R/dnu (rho .) ||_{H^s(dB_1)}`` (default ``s = -1/2``)."""
    return hs_norm(conormal_density(c, psi, medium), s)


def solution_conormal_norm(sol: sv.LayeredSolution, s: float = -0.5) -> float:
    """Same measurement taken from a solved field on its inner radius ``rho``."""
    d = sol.flux_density(sol.rho)
    return hs_norm(rescale_density(d, 1.0), s)


def sound_hard_gap(c: CloakConfig, psi: ModalDensity, medium: DerivedParams | None = None) -> float:
    """``||u_sh - u_rho||_{H^{1/2}(dB_R)}`` with both problems in the virtual domain."""
    sv._check_density(psi, c.dimension, c.R)
    cloak = _transfers(c, psi, medium)
    coeffs = {}
    for key in sorted(psi.coefficients):
        n = psi.degree(key)
        hard = sv.sound_hard_transfer(c.omega, c.R, c.rho, n, c.dimension)
        coeffs[key] = psi.coefficients[key] * (hard["ntd_gap"] - cloak[n].ntd_gap)
    return hs_norm(ModalDensity(c.dimension, c.R, coeffs), 0.5)


# ---------------------------------------------------------------------------
# Small inclusion


def _shell_l2(sol: sv.LayeredSolution, r0: float, r2: float, panels: int = 64, order: int = 8) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(r0, r2, panels + 1)
    angular = 2 * math.pi if sol.dimension == 2 else 1.0
    total = 0.0
    for key in sorted(sol.modes):
        acc = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            for x, w in zip(nodes, weights):
                r = lo + half * (x + 1)
                u, _ = sol.mode_radial(key, r)
                acc += w * half * abs(u) ** 2 * r ** (sol.dimension - 1)
        total += angular * acc
    return math.sqrt(total)


def inclusion_gap_norms(p: sv.InclusionProblem) -> tuple[float, float, float]:
    """``(||W||_{H^{1/2}(dB_r0)}, ||W||_{H^{1/2}(dB_r2)}, ||W||_{L^2(B_r2 \\ B_r0)})``.

    The volume norm uses 64 Gauss-Legendre panels in the radius.
    """
    sol = sv.small_inclusion_field(p)
    return (
        hs_norm(sol.trace(p.r0), 0.5),
        hs_norm(sol.trace(p.r2), 0.5),
        _shell_l2(sol, p.r0, p.r2),
    )


def inclusion_ratio(p: sv.InclusionProblem) -> float:
    """``||W||_{H^{1/2}(dB_r0)} / ||phi(tau .)||_{H^{-3/2}(dB_1)}``."""
    denom = hs_norm(rescale_density(p.phi, 1.0), -1.5)
    if denom == 0:
        raise MetricsError("inclusion data phi vanishes")
    sol = sv.small_inclusion_field(p)
    return hs_norm(sol.trace(p.r0), 0.5) / denom


# ---------------------------------------------------------------------------
# Energy identity


@dataclass(frozen=True)
class EnergyBalance:
    """Absorbed power in the lining against the boundary flux."""

    absorbed: float
    boundary: float

    @property
    def residual(self) -> float:
        scale = max(abs(self.absorbed), abs(self.boundary))
        return abs(self.absorbed - self.boundary) / scale if scale else 0.0


def energy_identity(sol: sv.LayeredSolution, epsrel: float = 1e-12) -> EnergyBalance:
    """``beta omega^2 int_lining |u|^2`` versus ``-Im int_{dB_R} psi conj(u)``.

    The volume integral is done per mode with adaptive Gauss-Kronrod on
    ``[rho/2, rho]``; modes are orthogonal on the sphere.
    """
    if sol.kind != "cloak":
        raise MetricsError("energy identity applies to cloak solutions")
    dim = sol.dimension
    beta = sol.medium.q_l.imag
    lo, hi = sol.rho / 2, sol.rho
    angular = 2 * math.pi if dim == 2 else 1.0
    surface = 2 * math.pi * sol.outer_radius if dim == 2 else sol.outer_radius**2
    # the lining field varies on the scale 1/|omega_l|; split the interval accordingly
    pieces = max(1, min(200, math.ceil(abs(sol.medium.omega_l) * (hi - lo) / 4)))
    edges = np.linspace(lo, hi, pieces + 1)
    volume = 0.0
    flux = 0j
    for key in sorted(sol.modes):
        rec = sol.modes[key]

        def f(r, key=key):
            return abs(sol.mode_radial(key, r)[0]) ** 2 * r ** (dim - 1)

        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=epsrel, limit=200)
            volume += angular * val
        u_R = sol.mode_radial(key, sol.outer_radius)[0]
        flux += surface * rec.psi * np.conj(u_R)
    return EnergyBalance(beta * sol.omega**2 * volume, -float(np.imag(flux)))
