r"""Per-mode solution of the radial boundary-value problems.

Every problem here is separable in the surface eigenbasis, so each degree
``n`` reduces to a handful of scalar equations.  Four problems are covered:

* the virtual cloak (content core, FSH lining, free exterior) with Neumann data
  on ``dB_R``;
* the free ball (no inclusion);
* the sound-hard annulus ``rho < |x| < R``;
* the exterior radiating problem for a small inclusion ``B_tau``.

The closed-form ladder

.. math::
    \Upsilon_n \to \mathcal{H}_n \to \Gamma_n \to d_n

is assembled from logarithmic derivatives and the log cross ratio
:math:`\log(J_n/H^{(1)}_n)`, never from raw Bessel values at complex
arguments, because :math:`|\Im(\omega_l \rho)|` grows like
:math:`\rho^{-\delta/2}`.  Two independent oracles cross-check it: a dense
5x5 solve of the transmission system and a shooting integration of the
radial ODE.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy import special as sp

from . import specfun as sf
from .material import CloakConfig, DerivedParams
from .sobolev import ModalDensity


class SolverError(ArithmeticError):
    """Base class for solver failures."""


class NearResonanceError(SolverError):
    """The per-mode system is numerically singular (omega near an eigenvalue)."""


class EigenvalueProximityError(NearResonanceError):
    """J'_n(omega R) vanishes: -omega^2 is (close to) a Neumann eigenvalue."""


class TruncationError(SolverError):
    """Adaptive mode truncation did not converge below the hard cap."""


class OracleUnreliableError(SolverError):
    """Dense oracle solve is too ill-conditioned to be trusted."""


class OracleFailure(SolverError):
    """Radial ODE integration failed."""


RESONANCE_TOL = 1e-14
ORACLE_COND_LIMIT = 1e12
N_MAX_CAP = 2000


def family_of(dimension: int) -> str:
    return "cylindrical" if dimension == 2 else "spherical"


def eigenvalue(dimension: int, n: int) -> float:
    return float(n * n if dimension == 2 else n * (n + 1))


def _exp(x: complex) -> complex:
    """exp that saturates instead of raising."""
    if x.real > 709.0:
        return complex(math.inf, 0.0)
    if x.real < -745.0:
        return 0j
    return cmath.exp(x)


def _expm1(x: complex) -> complex:
    """Complex exp(x) - 1 without cancellation for small ``|x|``."""
    if abs(x) < 0.5:
        # exp(a+ib) - 1 = expm1(a) cos b - 2 sin^2(b/2) + i e^a sin b
        a, b = x.real, x.imag
        return complex(math.expm1(a) * math.cos(b) - 2 * math.sin(b / 2) ** 2, math.exp(a) * math.sin(b))
    return _exp(x) - 1.0


def _raw_j(n, z, fam):
    q = sf.bessel_j(n, z, fam)
    return q.value, q.derivative


def _raw_h(n, z, fam):
    q = sf.hankel1(n, z, fam)
    return q.value, q.derivative


# ---------------------------------------------------------------------------
# Mode transfer


@dataclass(frozen=True)
class ModeTransfer:
    """Per-degree coefficient ladder.

    Attributes
    ----------
    upsilon : complex
        d_n / c_n at the inner interface (saturates to inf in extreme regimes).
    hcal : complex
        Lining log-derivative aggregate at ``|x| = rho``.
    gamma : complex
        Exterior reflection ratio b_n / a_n.
    ntd, ntd_free : complex
        NtD diagonal entries of the cloak and of the free ball.
    ntd_gap : complex
        ``ntd - ntd_free`` computed without cancellation.
    trace_gap : complex
        Relative gap factor (h~_n in 2D, g~_n in 3D); ``ntd_gap = ntd_free * trace_gap``.
    conormal : complex
        l_n per unit Neumann datum: ``a_n J'_n(omega rho) + b_n H'_n(omega rho)``.
    """

    n: int
    dimension: int
    upsilon: complex
    hcal: complex
    gamma: complex
    ntd: complex
    ntd_free: complex
    ntd_gap: complex
    trace_gap: complex
    conormal: complex
    a_per_psi: complex
    u_rho_per_psi: complex
    inner_branch: str = "regular"
    # internals used for back-substitution
    m_ratio: complex = 0j
    one_minus_m: complex = 1 + 0j
    s_ratio: complex = 0j
    k_ratio: complex = 0j


@dataclass(frozen=True)
class _Exterior:
    gamma: complex
    k_ratio: complex | None
    ntd: complex
    ntd_free: complex
    ntd_gap: complex
    trace_gap: complex
    a_per_psi: complex
    u_rho_per_psi: complex
    conormal: complex


def _exterior_assembly(n: int, dimension: int, omega: float, rho: float, R: float,
                       k_ratio: complex | None, gamma_raw: complex | None = None) -> _Exterior:
    """Close the exterior annulus given ``b_n/a_n = -X(omega rho) * k_ratio``.

    ``X = J/H``.  When ``k_ratio`` is None the raw ``gamma_raw`` is used with
    plain function values (only needed on the real axis near a Bessel zero).
    """
    fam = family_of(dimension)
    x_rho, x_R = omega * rho, omega * R
    try:
        if k_ratio is None:
            raise sf.PoleProximityError("raw path requested")
        lj_rho = sf.log_deriv_j(n, x_rho, fam)
        lh_rho = sf.hankel1_log_deriv(n, x_rho, fam)
        lj_R = sf.log_deriv_j(n, x_R, fam)
        lh_R = sf.hankel1_log_deriv(n, x_R, fam)
    except sf.PoleProximityError:
        return _exterior_raw(n, dimension, omega, rho, R, k_ratio, gamma_raw)
    log_x_rho = sf.log_cross_ratio_jh(n, x_rho, fam)
    log_x_R = sf.log_cross_ratio_jh(n, x_R, fam)
    gamma = -k_ratio * _exp(log_x_rho)
    t = -k_ratio * _exp(log_x_rho - log_x_R)  # Gamma H(omega R) / J(omega R)
    ratio_R = lh_R / lj_R
    tq = t * ratio_R  # Gamma H'(omega R) / J'(omega R)
    denom = 1.0 + tq
    if abs(denom) < RESONANCE_TOL * max(1.0, abs(tq)):
        raise NearResonanceError(f"mode {n}: NtD denominator vanishes")
    ntd_free = 1.0 / (omega * lj_R)
    trace_gap = (t - tq) / denom
    ntd_gap = ntd_free * trace_gap
    ntd = ntd_free + ntd_gap
    # J'(omega R) may underflow for high degree; stay in logarithms
    a_per_psi = _exp(-sf.log_j(n, x_R, fam) - cmath.log(omega * lj_R * denom))
    j_rho_over_j_R = _exp(sf.log_j(n, x_rho, fam) - sf.log_j(n, x_R, fam))
    u_rho_per_psi = ntd_free * j_rho_over_j_R * (1.0 - k_ratio) / denom
    conormal = ntd_free * j_rho_over_j_R * (lj_rho - k_ratio * lh_rho) / denom
    return _Exterior(gamma, k_ratio, ntd, ntd_free, ntd_gap, trace_gap, a_per_psi, u_rho_per_psi, conormal)


def _exterior_raw(n, dimension, omega, rho, R, k_ratio, gamma_raw) -> _Exterior:
    fam = family_of(dimension)
    j_rho, jp_rho = _raw_j(n, omega * rho, fam)
    h_rho, hp_rho = _raw_h(n, omega * rho, fam)
    j_R, jp_R = _raw_j(n, omega * R, fam)
    h_R, hp_R = _raw_h(n, omega * R, fam)
    if gamma_raw is None:
        gamma_raw = -k_ratio * j_rho / h_rho
    denom = omega * (jp_R + gamma_raw * hp_R)
    if abs(denom) < RESONANCE_TOL * omega * max(abs(jp_R), abs(gamma_raw * hp_R)):
        raise NearResonanceError(f"mode {n}: NtD denominator vanishes")
    if abs(jp_R) < RESONANCE_TOL * max(abs(j_R), 1e-300):
        raise EigenvalueProximityError(f"J'_{n}(omega R) vanishes")
    ntd = (j_R + gamma_raw * h_R) / denom
    ntd_free = j_R / (omega * jp_R)
    ntd_gap = (gamma_raw * (h_R * jp_R - j_R * hp_R)) / (jp_R * denom)
    trace_gap = ntd_gap / ntd_free if ntd_free != 0 else complex(math.nan, math.nan)
    a_per_psi = 1.0 / denom
    u_rho = a_per_psi * (j_rho + gamma_raw * h_rho)
    conormal = a_per_psi * (jp_rho + gamma_raw * hp_rho)
    return _Exterior(gamma_raw, None, ntd, ntd_free, ntd_gap, trace_gap, a_per_psi, u_rho, conormal)


def _lining_ladder(n: int, dimension: int, rho: float, medium: DerivedParams):
    """Upsilon_n, H_n(rho) and the ratios needed to rebuild the lining field."""
    fam = family_of(dimension)
    z_a = medium.omega_a * rho / 2
    z1 = medium.omega_l * rho / 2
    z2 = medium.omega_l * rho
    A = medium.A
    lj1 = sf.log_deriv_j(n, z1, fam)
    lh1 = sf.hankel1_log_deriv(n, z1, fam)
    try:
        la = sf.log_deriv_j(n, z_a, fam)
        m_ratio = (lj1 - A * la) / (lh1 - A * la)
        # |A| is huge, so M is close to 1: keep 1 - M free of cancellation
        one_minus_m = (lh1 - lj1) / (lh1 - A * la)
        branch = "regular"
    except sf.PoleProximityError:
        # J_n(omega_a rho/2) = 0: the inner field has a node on the interface
        m_ratio = 1.0 + 0j
        one_minus_m = 0j
        branch = "zero"
    log_x1 = sf.log_cross_ratio_jh(n, z1, fam)
    log_x2 = sf.log_cross_ratio_jh(n, z2, fam)
    upsilon = -m_ratio * _exp(log_x1)
    s_ratio = -m_ratio * _exp(log_x1 - log_x2)  # Upsilon H(z2)/J(z2)
    try:
        lj2 = sf.log_deriv_j(n, z2, fam)
        lh2 = sf.hankel1_log_deriv(n, z2, fam)
        hcal = (lj2 + s_ratio * lh2) / (1.0 + s_ratio)
    except sf.PoleProximityError:
        j2, jp2 = _raw_j(n, z2, fam)
        h2, hp2 = _raw_h(n, z2, fam)
        hcal = (jp2 + upsilon * hp2) / (j2 + upsilon * h2)
    return upsilon, hcal, m_ratio, one_minus_m, s_ratio, branch


def cloak_mode_transfer(c: CloakConfig, n: int, medium: DerivedParams | None = None) -> ModeTransfer:
    """Closed-form coefficient ladder for degree ``n`` of the virtual cloak.

    ``medium`` overrides the virtual constants (e.g.
    :meth:`DerivedParams.background` for the no-cloak check).

    Raises
    ------
    NearResonanceError
        The NtD denominator is below 1e-14 of its terms.
    """
    n = abs(int(n))
    medium = c.derived() if medium is None else medium
    upsilon, hcal, m_ratio, one_minus_m, s_ratio, branch = _lining_ladder(n, c.dimension, c.rho, medium)
    fam = family_of(c.dimension)
    x_rho = c.omega * c.rho
    kh = medium.kappa * hcal
    try:
        lj_rho = sf.log_deriv_j(n, x_rho, fam)
        lh_rho = sf.hankel1_log_deriv(n, x_rho, fam)
        k_ratio = (kh - lj_rho) / (kh - lh_rho)
        ext = _exterior_assembly(n, c.dimension, c.omega, c.rho, c.R, k_ratio)
    except sf.PoleProximityError:
        j, jp = _raw_j(n, x_rho, fam)
        h, hp = _raw_h(n, x_rho, fam)
        gamma_raw = -(kh * j - jp) / (kh * h - hp)
        ext = _exterior_raw(n, c.dimension, c.omega, c.rho, c.R, None, gamma_raw)
        k_ratio = None
    return ModeTransfer(
        n=n,
        dimension=c.dimension,
        upsilon=upsilon,
        hcal=hcal,
        gamma=ext.gamma,
        ntd=ext.ntd,
        ntd_free=ext.ntd_free,
        ntd_gap=ext.ntd_gap,
        trace_gap=ext.trace_gap,
        conormal=ext.conormal,
        a_per_psi=ext.a_per_psi,
        u_rho_per_psi=ext.u_rho_per_psi,
        inner_branch=branch,
        m_ratio=m_ratio,
        one_minus_m=one_minus_m,
        s_ratio=s_ratio,
        k_ratio=k_ratio if k_ratio is not None else complex(math.nan, math.nan),
    )


# ---------------------------------------------------------------------------
# Layered solutions


@dataclass(frozen=True)
class ModeRecord:
    """Coefficients of one surface mode.

    ``coeffs`` holds the expansion coefficients named as in the region-wise
    expansions: ``e`` (core), ``c``/``d`` (lining), ``a``/``b`` (exterior).
    Normalised boundary values ``u_rho`` and ``u_half`` rebuild the fields
    without large intermediate numbers.
    """

    key: object
    degree: int
    psi: complex
    coeffs: dict
    u_rho: complex = 0j
    u_half: complex = 0j


@dataclass(frozen=True)
class LayeredSolution:
    """Region-wise modal expansion of one solved problem.

    ``kind`` is one of ``"cloak"``, ``"free"``, ``"sound_hard"``, ``"inclusion"``.
    ``radii`` lists the interface radii (inner to outer) and the outer
    boundary; ``inner_radius`` is where the domain starts (0 for a ball).
    """

    kind: str
    dimension: int
    omega: float
    outer_radius: float
    inner_radius: float
    rho: float
    medium: DerivedParams | None
    density: ModalDensity
    modes: dict = field(default_factory=dict)
    transfers: dict = field(default_factory=dict)
    config: CloakConfig | None = None

    @property
    def n_max(self) -> int:
        return max((rec.degree for rec in self.modes.values()), default=0)

    @property
    def regions(self) -> dict:
        if self.kind == "cloak":
            return {"core": (0.0, self.rho / 2), "lossy": (self.rho / 2, self.rho),
                    "exterior": (self.rho, self.outer_radius)}
        return {"exterior" if self.kind != "free" else "ball": (self.inner_radius, self.outer_radius)}

    # -- per-mode radial profiles: (value, sigma * d/dr value) -------------

    def mode_radial(self, key, r: float, region: str | None = None) -> tuple[complex, complex]:
        """Radial value and ``sigma du/dr`` of one mode.

        ``region`` forces which expansion is used (useful exactly on an
        interface, where both sides must agree).
        """
        rec = self.modes[key]
        return _radial_value(self, rec, r, region)

    def trace(self, r: float) -> ModalDensity:
        """Angular coefficients of the field on the sphere of radius ``r``."""
        coeffs = {key: self.mode_radial(key, r)[0] for key in sorted(self.modes)}
        return ModalDensity(self.dimension, float(r), coeffs)

    def flux_density(self, r: float) -> ModalDensity:
        """Angular coefficients of sigma du/dr at radius ``r`` (outer side at interfaces)."""
        coeffs = {key: self.mode_radial(key, r)[1] for key in sorted(self.modes)}
        return ModalDensity(self.dimension, float(r), coeffs)


def _region_of(sol: LayeredSolution, r: float) -> str:
    if r < sol.inner_radius - 1e-15 or r > sol.outer_radius * (1 + 1e-14):
        raise sf.DomainError(f"radius {r} outside the solution domain")
    if sol.kind == "cloak":
        if r <= sol.rho / 2:
            return "core"
        if r <= sol.rho:
            return "lossy"
    return "exterior"


def _radial_value(sol: LayeredSolution, rec: ModeRecord, r: float,
                  region: str | None = None) -> tuple[complex, complex]:
    n = rec.degree
    fam = family_of(sol.dimension)
    natural = _region_of(sol, r)
    region = natural if region is None else region
    omega = sol.omega
    if sol.kind == "free":
        if r == 0:
            q = sf.bessel_j(n, 0.0, fam)
            return rec.coeffs["a"] * q.value, rec.coeffs["a"] * omega * q.derivative
        q = sf.bessel_j(n, omega * r, fam)
        return rec.coeffs["a"] * q.value, rec.coeffs["a"] * omega * q.derivative
    if sol.kind == "inclusion":
        tr = sol.transfers[n]
        ratio = _exp(sf.log_h(n, omega * r, fam) - sf.log_h(n, omega * tr["tau"], fam))
        base = rec.psi / (omega * tr["lh_tau"]) * ratio
        return base, base * omega * sf.hankel1_log_deriv(n, omega * r, fam)
    if region == "exterior":
        k = sol.transfers[n].k_ratio if sol.kind == "cloak" else sol.transfers[n]["k_ratio"]
        a = rec.coeffs["a"]
        x = omega * r
        if cmath.isfinite(k):
            try:
                lj = sf.log_deriv_j(n, x, fam)
                lh = sf.hankel1_log_deriv(n, x, fam)
                jv = sf.bessel_j(n, x, fam).value
                w = k * _exp(sf.log_cross_ratio_jh(n, omega * sol.rho, fam) - sf.log_cross_ratio_jh(n, x, fam))
                return a * jv * (1 - w), a * omega * jv * (lj - w * lh)
            except sf.PoleProximityError:
                pass
        b = rec.coeffs["b"]
        j, jp = _raw_j(n, x, fam)
        h, hp = _raw_h(n, x, fam)
        return a * j + b * h, omega * (a * jp + b * hp)
    med = sol.medium
    tr = sol.transfers[n]
    if region == "lossy":
        w = med.omega_l * r
        z2 = med.omega_l * sol.rho
        scale = _exp(sf.log_j(n, w, fam) - sf.log_j(n, z2, fam)) / (1.0 + tr.s_ratio)
        gap = sf.log_cross_ratio_jh(n, med.omega_l * sol.rho / 2, fam) - sf.log_cross_ratio_jh(n, w, fam)
        mix = tr.m_ratio * _exp(gap)
        # 1 - M e^gap, written so that it stays accurate next to r = rho/2
        if gap.real < 700:
            one_minus_mix = tr.one_minus_m - tr.m_ratio * _expm1(gap)
        else:
            one_minus_mix = 1.0 - mix
        value = rec.u_rho * scale * one_minus_mix
        deriv = rec.u_rho * scale * med.omega_l * (sf.log_deriv_j(n, w, fam) - mix * sf.hankel1_log_deriv(n, w, fam))
        return value, med.sigma_l * deriv
    # core
    x = med.omega_a * r
    if tr.inner_branch == "regular":
        za = med.omega_a * sol.rho / 2
        scale = _exp(sf.log_j(n, x, fam) - sf.log_j(n, za, fam))
        value = rec.u_half * scale
        if r == 0:
            q = sf.bessel_j(n, 0.0, fam)
            qa = sf.bessel_j(n, za, fam)
            return rec.u_half * q.value / qa.value, med.sigma_a * med.omega_a * rec.u_half * q.derivative / qa.value
        return value, med.sigma_a * med.omega_a * value * sf.log_deriv_j(n, x, fam)
    q = sf.bessel_j(n, x, fam)
    e = rec.coeffs["e"]
    return e * q.value, med.sigma_a * med.omega_a * e * q.derivative


def _keys_by_degree(density: ModalDensity):
    groups: dict[int, list] = {}
    for key in sorted(density.coefficients):
        groups.setdefault(density.degree(key), []).append(key)
    return groups


def _check_density(psi: ModalDensity, dimension: int, radius: float):
    if psi.dimension != dimension:
        raise sf.InvalidInputError(f"density is {psi.dimension}D, problem is {dimension}D")
    if not math.isclose(psi.radius, radius, rel_tol=1e-12):
        raise sf.InvalidInputError(f"density lives on radius {psi.radius}, expected {radius}")


def solve_cloak(c: CloakConfig, psi: ModalDensity, medium: DerivedParams | None = None) -> LayeredSolution:
    """Solve the virtual cloak problem for Neumann data ``psi`` on ``dB_R``.

    Coefficients are obtained per mode from the closed-form ladder and
    back-substituted outward-in.  The truncation order is the support of
    ``psi``: radial media do not couple modes.
    """
    _check_density(psi, c.dimension, c.R)
    medium = c.derived() if medium is None else medium
    fam = family_of(c.dimension)
    transfers = {}
    modes = {}
    for degree, keys in _keys_by_degree(psi).items():
        tr = cloak_mode_transfer(c, degree, medium)
        transfers[degree] = tr
        for key in keys:
            value = psi.coefficients[key]
            modes[key] = _cloak_record(c, medium, tr, key, degree, value, fam)
    return LayeredSolution("cloak", c.dimension, c.omega, c.R, 0.0, c.rho, medium, psi, modes, transfers, c)


def _cloak_record(c, medium, tr: ModeTransfer, key, n, psi_n, fam) -> ModeRecord:
    a = psi_n * tr.a_per_psi
    b = tr.gamma * a
    u_rho = psi_n * tr.u_rho_per_psi
    z1 = medium.omega_l * c.rho / 2
    z2 = medium.omega_l * c.rho
    za = medium.omega_a * c.rho / 2
    half_ratio = _exp(sf.log_j(n, z1, fam) - sf.log_j(n, z2, fam))
    u_half = u_rho * half_ratio * tr.one_minus_m / (1.0 + tr.s_ratio)
    c_coef = u_rho / (_exp(sf.log_j(n, z2, fam)) * (1.0 + tr.s_ratio))
    d_coef = tr.upsilon * c_coef if c_coef != 0 else 0j
    if tr.inner_branch == "regular":
        e = u_half / sf.bessel_j(n, za, fam).value
    else:
        lining_flux = medium.kappa * c_coef * _exp(sf.log_j(n, z1, fam)) * (
            sf.log_deriv_j(n, z1, fam) - tr.m_ratio * sf.hankel1_log_deriv(n, z1, fam))
        e = lining_flux / (medium.core_impedance * sf.bessel_j(n, za, fam).derivative)
    coeffs = {"e": e, "c": c_coef, "d": d_coef, "a": a, "b": b}
    return ModeRecord(key, n, psi_n, coeffs, u_rho, u_half)


def solve_free(omega: float, R: float, psi: ModalDensity, dimension: int) -> LayeredSolution:
    """Free ball: ``u_0 = sum psi_n J_n(omega r) / (omega J'_n(omega R))``."""
    _check_density(psi, dimension, R)
    fam = family_of(dimension)
    modes, transfers = {}, {}
    for degree, keys in _keys_by_degree(psi).items():
        q = sf.bessel_j(degree, omega * R, fam)
        if abs(q.derivative) < RESONANCE_TOL * max(abs(q.value), 1e-300):
            raise EigenvalueProximityError(f"J'_{degree}(omega R) vanishes")
        transfers[degree] = {"ntd": q.value / (omega * q.derivative)}
        for key in keys:
            value = psi.coefficients[key]
            modes[key] = ModeRecord(key, degree, value, {"a": value / (omega * q.derivative)})
    return LayeredSolution("free", dimension, omega, R, 0.0, 0.0, None, psi, modes, transfers)


def sound_hard_transfer(omega: float, R: float, rho: float, n: int, dimension: int) -> dict:
    """Per-degree data of the annulus with a sound-hard inner wall."""
    fam = family_of(dimension)
    try:
        k_ratio = sf.log_deriv_j(n, omega * rho, fam) / sf.hankel1_log_deriv(n, omega * rho, fam)
        ext = _exterior_assembly(n, dimension, omega, rho, R, k_ratio)
    except sf.PoleProximityError:
        _, jp = _raw_j(n, omega * rho, fam)
        _, hp = _raw_h(n, omega * rho, fam)
        ext = _exterior_raw(n, dimension, omega, rho, R, None, -jp / hp)
        k_ratio = complex(math.nan, math.nan)
    return {"k_ratio": k_ratio, "gamma": ext.gamma, "ntd": ext.ntd, "ntd_free": ext.ntd_free,
            "ntd_gap": ext.ntd_gap, "a_per_psi": ext.a_per_psi, "conormal": ext.conormal}


def solve_sound_hard_annulus(omega: float, R: float, rho: float, psi: ModalDensity,
                             dimension: int) -> LayeredSolution:
    """Annulus ``rho < |x| < R`` with zero normal derivative on the inner wall."""
    _check_density(psi, dimension, R)
    modes, transfers = {}, {}
    for degree, keys in _keys_by_degree(psi).items():
        tr = sound_hard_transfer(omega, R, rho, degree, dimension)
        transfers[degree] = tr
        for key in keys:
            value = psi.coefficients[key]
            a = value * tr["a_per_psi"]
            modes[key] = ModeRecord(key, degree, value, {"a": a, "b": tr["gamma"] * a})
    return LayeredSolution("sound_hard", dimension, omega, R, rho, rho, None, psi, modes, transfers)


@dataclass(frozen=True)
class InclusionProblem:
    """Exterior radiating problem around ``B_tau`` with Neumann data ``phi``."""

    omega: float
    tau: float
    phi: ModalDensity
    r0: float = 1.0
    r2: float = 3.0

    def __post_init__(self):
        if not 0 < self.tau < self.r0 / 4:
            raise sf.InvalidInputError(f"need 0 < tau < r0/4, got tau={self.tau}, r0={self.r0}")
        if not self.r0 < self.r2:
            raise sf.InvalidInputError("need r0 < r2")
        _check_density(self.phi, self.phi.dimension, self.tau)


def small_inclusion_field(p: InclusionProblem) -> LayeredSolution:
    """``W = sum a_n H_n(omega |x|) Y_n`` with ``a_n = phi_n / (omega H'_n(omega tau))``."""
    dim = p.phi.dimension
    fam = family_of(dim)
    modes, transfers = {}, {}
    for degree, keys in _keys_by_degree(p.phi).items():
        lh_tau = sf.hankel1_log_deriv(degree, p.omega * p.tau, fam)
        transfers[degree] = {"tau": p.tau, "lh_tau": lh_tau}
        log_hp = sf.log_h(degree, p.omega * p.tau, fam) + cmath.log(lh_tau)
        for key in keys:
            value = p.phi.coefficients[key]
            a = value / p.omega * _exp(-log_hp) if value != 0 else 0j
            modes[key] = ModeRecord(key, degree, value, {"a": a})
    outer = max(p.r2, p.r0)
    return LayeredSolution("inclusion", dim, p.omega, outer, p.tau, p.tau, None, p.phi, modes, transfers)


# ---------------------------------------------------------------------------
# Field evaluation


def _angles(point):
    point = np.asarray(point, dtype=float)
    r = float(np.linalg.norm(point))
    if point.size == 2:
        return r, (math.atan2(point[1], point[0]),)
    if point.size == 3:
        theta = math.acos(max(-1.0, min(1.0, point[2] / r))) if r > 0 else 0.0
        phi = math.atan2(point[1], point[0])
        return r, (theta, phi)
    raise sf.InvalidInputError("points must have 2 or 3 components")


def _harmonic(dimension, key, angles) -> complex:
    if dimension == 2:
        return cmath.exp(1j * key * angles[0])
    n, m = key
    return complex(sp.sph_harm_y(n, m, angles[0], angles[1]))


def field_eval(sol: LayeredSolution, point) -> complex:
    """Evaluate the solution at a Cartesian point, choosing the region by radius.

    Modes are summed in ascending key order so results are reproducible.
    """
    r, angles = _angles(point)
    if len(angles) + 1 != sol.dimension:
        raise sf.InvalidInputError(f"{sol.dimension}D solution needs {sol.dimension} coordinates")
    _region_of(sol, r)
    total = 0j
    for key in sorted(sol.modes):
        value, _ = _radial_value(sol, sol.modes[key], r)
        total += value * _harmonic(sol.dimension, key, angles)
    return total


# ---------------------------------------------------------------------------
# Oracles


def _dense_system(c: CloakConfig, n: int, psi_n: complex, medium: DerivedParams):
    fam = family_of(c.dimension)
    z_a = medium.omega_a * c.rho / 2
    z1 = medium.omega_l * c.rho / 2
    z2 = medium.omega_l * c.rho
    x_rho, x_R = c.omega * c.rho, c.omega * c.R
    ja, jpa = _raw_j(n, z_a, fam)
    j1, jp1 = _raw_j(n, z1, fam)
    h1, hp1 = _raw_h(n, z1, fam)
    j2, jp2 = _raw_j(n, z2, fam)
    h2, hp2 = _raw_h(n, z2, fam)
    jr, jpr = _raw_j(n, x_rho, fam)
    hr, hpr = _raw_h(n, x_rho, fam)
    _, jpR = _raw_j(n, x_R, fam)
    _, hpR = _raw_h(n, x_R, fam)
    kap, imp = medium.kappa, medium.core_impedance
    # unknowns: e, c, d, a, b
    mat = np.array([
        [ja, -j1, -h1, 0, 0],
        [imp * jpa, -kap * jp1, -kap * hp1, 0, 0],
        [0, j2, h2, -jr, -hr],
        [0, kap * jp2, kap * hp2, -jpr, -hpr],
        [0, 0, 0, c.omega * jpR, c.omega * hpR],
    ], dtype=complex)
    rhs = np.array([0, 0, 0, 0, psi_n], dtype=complex)
    return mat, rhs


def direct_mode_solve(c: CloakConfig, n: int, psi_n: complex = 1.0,
                      medium: DerivedParams | None = None) -> dict:
    """Dense 5x5 solve of the transmission system for one mode (oracle path).

    Rows and columns are equilibrated before LU with partial pivoting; the
    1-norm condition number of the equilibrated matrix decides trust.

    Returns
    -------
    dict
        Coefficients ``e, c, d, a, b`` plus ``residual`` (max relative row
        residual) and ``cond``.
    """
    medium = c.derived() if medium is None else medium
    n = abs(int(n))
    try:
        mat, rhs = _dense_system(c, n, complex(psi_n), medium)
    except (sf.AccuracyLossError, OverflowError) as exc:
        raise OracleUnreliableError(f"mode {n}: {exc}") from exc
    if not np.all(np.isfinite(mat)):
        raise OracleUnreliableError(f"mode {n}: system entries overflow")
    col = 1.0 / np.max(np.abs(mat), axis=0)
    scaled = mat * col
    row = 1.0 / np.max(np.abs(scaled), axis=1)
    scaled = scaled * row[:, None]
    cond = abs(np.linalg.cond(scaled, 1))
    if not cond <= ORACLE_COND_LIMIT:
        raise OracleUnreliableError(f"mode {n}: condition estimate {cond:.3e}")
    y = np.linalg.solve(scaled, rhs * row)
    x = y * col
    resid = mat @ x - rhs
    scale = np.abs(mat) @ np.abs(x) + np.abs(rhs)
    rel = float(np.max(np.abs(resid) / np.where(scale > 0, scale, 1.0)))
    e, cc, d, a, b = (complex(v) for v in x)
    return {"e": e, "c": cc, "d": d, "a": a, "b": b, "residual": rel, "cond": float(abs(cond))}


def _regular_start(n: int, dimension: int, k2: complex, r0: float) -> tuple[complex, complex]:
    """u and u' at r0 of the regular radial solution, scaled by r0**-n."""
    value = 1.0 + 0j
    deriv = n / r0 + 0j
    term = 1.0 + 0j
    for k in range(1, 200):
        denom = 4 * k * (n + k) if dimension == 2 else 2 * k * (2 * n + 2 * k + 1)
        term *= -k2 * r0 * r0 / denom
        value += term
        deriv += term * (n + 2 * k) / r0
        if abs(term) < 1e-18 * abs(value):
            break
    return value, deriv


def radial_ode_oracle(c: CloakConfig | None, n: int, psi_n: complex = 1.0, *,
                      medium: DerivedParams | None = None, kind: str = "cloak",
                      omega: float | None = None, R: float | None = None,
                      rho: float | None = None, dimension: int | None = None,
                      rtol: float = 1e-12) -> complex:
    """Boundary value u(R) from direct integration of the radial ODE.

    Integrates ``(sigma r^{N-1} u')' + (omega^2 q - sigma lambda_n / r^2) r^{N-1} u = 0``
    in the flux form ``y = (u, sigma r^{N-1} u')``, which is continuous across
    interfaces, and rescales by the Neumann datum at ``R``.

    ``kind`` selects ``"cloak"`` (uses ``c`` and ``medium``), ``"free"`` or
    ``"sound_hard"`` (uses ``omega``, ``R``, ``rho``, ``dimension`` or ``c``).
    """
    if c is not None:
        omega = c.omega if omega is None else omega
        R = c.R if R is None else R
        rho = c.rho if rho is None else rho
        dimension = c.dimension if dimension is None else dimension
    lam = eigenvalue(dimension, n)
    dim = dimension

    if kind == "cloak":
        medium = c.derived() if medium is None else medium
        layers = [(rho / 2, rho, medium.sigma_l, medium.q_l), (rho, R, 1.0, 1.0)]
        start, first = rho / 8, (rho / 8, rho / 2, medium.sigma_a, medium.q_a)
        layers.insert(0, first)
        k2 = omega**2 * medium.q_a / medium.sigma_a
        u0, du0 = _regular_start(n, dim, k2, start)
        y = np.array([u0, medium.sigma_a * start ** (dim - 1) * du0], dtype=complex)
    elif kind == "free":
        start = R / 16
        layers = [(start, R, 1.0, 1.0)]
        u0, du0 = _regular_start(n, dim, omega**2 + 0j, start)
        y = np.array([u0, start ** (dim - 1) * du0], dtype=complex)
    elif kind == "sound_hard":
        layers = [(rho, R, 1.0, 1.0)]
        y = np.array([1.0, 0.0], dtype=complex)
    else:
        raise ValueError(f"unknown kind {kind!r}")

    for r_in, r_out, sigma, q in layers:
        def rhs(r, yy, sigma=sigma, q=q):
            w = r ** (dim - 1)
            return [yy[1] / (sigma * w), -(omega**2 * q - sigma * lam / r**2) * w * yy[0]]

        y = y / np.max(np.abs(y))
        sol = integrate.solve_ivp(rhs, (r_in, r_out), y, method="DOP853", rtol=rtol, atol=1e-14 * rtol)
        if not sol.success:
            raise OracleFailure(f"mode {n}: {sol.message}")
        y = sol.y[:, -1]
    u_R, p_R = y
    return complex(psi_n * R ** (dim - 1) * u_R / p_R)
