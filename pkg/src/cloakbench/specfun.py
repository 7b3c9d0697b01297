r"""Complex-argument Bessel and Hankel functions for the modal ladder.

Cylindrical :math:`J_n, H^{(1)}_n` and spherical :math:`j_n, h^{(1)}_n` of
integer order, with derivatives, logarithmic derivatives and the cross ratio
:math:`J_n/H^{(1)}_n`.  Plain values come from the AMOS routines wrapped by
:mod:`scipy.special`; everything the layered solver consumes at large complex
arguments goes through the log-domain helpers (:func:`log_j`, :func:`log_h`,
:func:`log_cross_ratio_jh`) and the ratio helpers, which never form a raw
function value that could overflow.

Exponential scaling follows the AMOS convention:

.. math::
    J^{s}_\nu(z) = e^{-|\Im z|} J_\nu(z), \qquad
    H^{(1),s}_\nu(z) = e^{-iz} H^{(1)}_\nu(z).

Spherical functions are reduced to half-integer cylindrical order,
:math:`j_n(z) = \sqrt{\pi/2z}\,J_{n+1/2}(z)`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special as sp

Family = Literal["cylindrical", "spherical"]
Scaling = Literal["plain", "scaled"]

EPS = np.finfo(float).eps
POLE_THRESHOLD = 1e-13

# |z| beyond which the large-argument Hankel expansion replaces AMOS, provided
# the order is small enough for the expansion to converge quickly.
_ASYMPTOTIC_MIN_ABS_Z = 3.0e4
_CF_MAX_ITER = 100_000


class SpecfunError(ArithmeticError):
    """Base class for special-function failures."""


class InvalidInputError(SpecfunError, ValueError):
    """Non-finite argument or malformed query."""


class DomainError(SpecfunError, ValueError):
    """Argument outside the function's domain (e.g. Hankel at the origin)."""


class PoleProximityError(SpecfunError):
    """The argument sits on (or numerically at) a zero of the denominator."""

    def __init__(self, message: str, ratio: complex | None = None):
        super().__init__(message)
        self.ratio = ratio


class AccuracyLossError(SpecfunError):
    """Requested precision is unattainable; ``estimate`` is the relative error bound."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class BesselQuery:
    """Validated request for one function value.

    Negative cylindrical orders are folded to ``n >= 0``; ``sign`` carries the
    reflection factor :math:`(-1)^n`.
    """

    family: Family
    n: int
    z: complex
    scaling: Scaling = "plain"
    sign: int = 1

    @classmethod
    def make(cls, n: int, z, family: Family = "cylindrical", scaling: Scaling = "plain"):
        if family not in ("cylindrical", "spherical"):
            raise InvalidInputError(f"unknown family {family!r}")
        if scaling not in ("plain", "scaled"):
            raise InvalidInputError(f"unknown scaling {scaling!r}")
        if int(n) != n:
            raise InvalidInputError("order must be an integer")
        n = int(n)
        z = complex(z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise InvalidInputError(f"non-finite argument {z!r}")
        sign = 1
        if n < 0:
            if family == "spherical":
                raise InvalidInputError("spherical order must be nonnegative")
            n = -n
            sign = -1 if n % 2 else 1
        return cls(family, n, z, scaling, sign)

    @property
    def nu(self) -> float:
        return self.n + 0.5 if self.family == "spherical" else float(self.n)


@dataclass(frozen=True)
class BesselQuad:
    """Function value and its derivative with respect to the argument."""

    value: complex
    derivative: complex


# ---------------------------------------------------------------------------
# AMOS access

def _amos(func, nu: float, z: complex, strict: bool) -> complex:
    if strict:
        with sp.errstate(loss="raise", no_result="raise"):
            try:
                return complex(func(nu, z))
            except sp.SpecialFunctionError as exc:
                raise AccuracyLossError(
                    f"{func.__name__}({nu}, {z}) lost precision", max(abs(z), nu) * EPS
                ) from exc
    with sp.errstate(all="ignore"):
        return complex(func(nu, z))


def _checked(value: complex, what: str) -> complex:
    if not cmath.isfinite(value):
        raise AccuracyLossError(f"{what} is not representable in double precision", math.inf)
    return value


def _jve(nu, z, strict=False):
    return _amos(sp.jve, nu, z, strict)


def _h1e(nu, z, strict=False):
    return _amos(sp.hankel1e, nu, z, strict)


def _use_asymptotic(nu: float, z: complex) -> bool:
    az = abs(z)
    return az >= _ASYMPTOTIC_MIN_ABS_Z and az >= 4.0 * nu * nu


# ---------------------------------------------------------------------------
# Large-argument Hankel expansion (scaled forms)

def _hankel_series(nu: float, z: complex) -> tuple[complex, complex]:
    """Return the asymptotic sums P(+i) and P(-i) for H1 and H2."""
    mu = 4.0 * nu * nu
    term = 1.0 + 0j
    plus = minus = term
    for k in range(1, 80):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        plus += term * (1j) ** k
        minus += term * (-1j) ** k
        if abs(term) < 1e-18 * max(abs(plus), abs(minus)):
            break
    return plus, minus


def _asym_scaled(nu: float, z: complex) -> tuple[complex, complex]:
    """Scaled Hankel pair (H1 e^{-iz}, H2 e^{iz}) from the large-|z| expansion."""
    pre = cmath.sqrt(2.0 / (math.pi * z))
    phase = nu * math.pi / 2 + math.pi / 4
    plus, minus = _hankel_series(nu, z)
    return pre * cmath.exp(-1j * phase) * plus, pre * cmath.exp(1j * phase) * minus


def _asym_log_j(nu: float, z: complex) -> complex:
    h1, h2 = _asym_scaled(nu, z)
    if z.imag >= 0:
        core = h2 + cmath.exp(2j * z) * h1
        return cmath.log(core / 2) - 1j * z
    core = h1 + cmath.exp(-2j * z) * h2
    return cmath.log(core / 2) + 1j * z


def _asym_log_h(nu: float, z: complex) -> complex:
    h1, _ = _asym_scaled(nu, z)
    return cmath.log(h1) + 1j * z


def _asym_lj(nu: float, z: complex) -> complex:
    h1a, h2a = _asym_scaled(nu, z)
    h1b, h2b = _asym_scaled(nu + 1, z)
    if z.imag >= 0:
        w = cmath.exp(2j * z)
        ja, jb = h2a + w * h1a, h2b + w * h1b
    else:
        w = cmath.exp(-2j * z)
        ja, jb = h1a + w * h2a, h1b + w * h2b
    return nu / z - jb / ja


def _asym_lh(nu: float, z: complex) -> complex:
    ha, _ = _asym_scaled(nu, z)
    hb, _ = _asym_scaled(nu + 1, z)
    return nu / z - hb / ha


# ---------------------------------------------------------------------------
# Cylindrical kernels of real order nu >= 0

def _lentz_j_ratio(nu: float, z: complex) -> complex:
    """J_{nu+1}(z)/J_nu(z) from its continued fraction (modified Lentz)."""
    tiny = 1e-300
    # r = 1/(b1 - 1/(b2 - 1/(b3 - ...))),  b_k = 2(nu+k)/z
    f = tiny
    c = f
    d = 0j
    for k in range(1, _CF_MAX_ITER):
        b = 2.0 * (nu + k) / z
        a = 1.0 if k == 1 else -1.0
        d = b + a * d
        if d == 0:
            d = tiny
        c = b + a / c
        if c == 0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < EPS:
            return f
    raise AccuracyLossError(f"continued fraction for J_{nu}({z}) did not converge", 1.0)


def _lj(nu: float, z: complex) -> complex:
    """J'_nu(z)/J_nu(z) without forming J_nu."""
    if z == 0:
        if nu == 0:
            return 0j
        raise PoleProximityError("J'/J has a pole at the origin for nu > 0")
    if _use_asymptotic(nu, z):
        ratio = _asym_lj(nu, z)
    elif abs(z) <= 60.0 or abs(z) < nu + 30.0:
        ratio = nu / z - _lentz_j_ratio(nu, z)
    else:
        ja = _jve(nu, z)
        jb = _jve(nu + 1, z)
        if ja == 0:
            raise PoleProximityError(f"J_{nu}({z}) vanishes", None)
        ratio = nu / z - jb / ja
    if not cmath.isfinite(ratio) or abs(ratio) * POLE_THRESHOLD > 1.0:
        raise PoleProximityError(f"|J_{nu}/J'_{nu}| below {POLE_THRESHOLD} at z={z}", ratio)
    return ratio


def _h_ratio_forward(nu: float, z: complex) -> tuple[complex, float]:
    """H_{nu+1}/H_nu by forward recurrence, plus log|H_nu/H_nu0| accumulated."""
    nu0 = nu - math.floor(nu)
    h0 = _h1e(nu0, z)
    h1 = _h1e(nu0 + 1, z)
    r = h1 / h0
    k = nu0 + 1
    logacc = 0j
    while k <= nu:
        logacc += cmath.log(r)
        r = 2.0 * k / z - 1.0 / r
        k += 1
    return r, logacc


def _lh(nu: float, z: complex) -> complex:
    """H'_nu(z)/H_nu(z); forward recurrence is stable for the dominant H."""
    if z == 0:
        raise DomainError("Hankel functions are singular at the origin")
    if _use_asymptotic(nu, z):
        return _asym_lh(nu, z)
    # Direct scaled ratio whenever both values are representable.  The forward
    # recurrence is kept for the overflow regime (nu >> |z|), where H_nu is
    # the dominant, growing solution; in the lower half-plane H_nu first
    # decreases with nu and the recurrence would shed digits.
    ha = _h1e(nu, z)
    hb = _h1e(nu + 1, z)
    if ha != 0 and cmath.isfinite(ha) and cmath.isfinite(hb) and abs(hb) < 1e280:
        return nu / z - hb / ha
    r, _ = _h_ratio_forward(nu, z)
    return nu / z - r


def _log_j_series(nu: float, z: complex) -> complex:
    q = -z * z / 4.0
    term = 1.0 + 0j
    total = term
    for k in range(1, 500):
        term *= q / (k * (nu + k))
        total += term
        if abs(term) < EPS * abs(total):
            break
    return nu * cmath.log(z / 2) - math.lgamma(nu + 1) + cmath.log(total)


def _log_j(nu: float, z: complex) -> complex:
    if z == 0:
        return 0j if nu == 0 else complex(-math.inf, 0)
    if _use_asymptotic(nu, z):
        return _asym_log_j(nu, z)
    js = _jve(nu, z)
    if js != 0 and cmath.isfinite(js) and abs(js) > 1e-280:
        return cmath.log(js) + abs(z.imag)
    return _log_j_series(nu, z)


def _log_h(nu: float, z: complex) -> complex:
    if z == 0:
        raise DomainError("Hankel functions are singular at the origin")
    if _use_asymptotic(nu, z):
        return _asym_log_h(nu, z)
    hs = _h1e(nu, z)
    if hs != 0 and cmath.isfinite(hs) and abs(hs) < 1e280:
        return cmath.log(hs) + 1j * z
    nu0 = nu - math.floor(nu)
    _, logacc = _h_ratio_forward(nu, z)
    return cmath.log(_h1e(nu0, z)) + 1j * z + logacc


# ---------------------------------------------------------------------------
# Public surface

def _spherical_prefactor(z: complex) -> complex:
    return cmath.sqrt(math.pi / (2.0 * z))


def _cyl_quad(func, n: int, z: complex, strict: bool) -> BesselQuad:
    value = func(n, z, strict)
    if n == 0:
        deriv = -func(1, z, strict)
    else:
        deriv = 0.5 * (func(n - 1, z, strict) - func(n + 1, z, strict))
    return BesselQuad(value, deriv)


def _sph_value(func, n: int, z: complex, strict: bool) -> complex:
    return _spherical_prefactor(z) * func(n + 0.5, z, strict)


def _sph_quad(func, n: int, z: complex, strict: bool) -> BesselQuad:
    value = _sph_value(func, n, z, strict)
    upper = _sph_value(func, n + 1, z, strict)
    if n == 0:
        return BesselQuad(value, -upper)
    lower = _sph_value(func, n - 1, z, strict)
    return BesselQuad(value, (n * lower - (n + 1) * upper) / (2 * n + 1))


def _apply_sign(quad: BesselQuad, sign: int) -> BesselQuad:
    if sign == 1:
        return quad
    return BesselQuad(-quad.value, -quad.derivative)


def bessel_j(n: int, z, family: Family = "cylindrical", scaling: Scaling = "plain") -> BesselQuad:
    """Bessel function of the first kind and its derivative.

    Parameters
    ----------
    n : int
        Order; negative cylindrical orders use :math:`J_{-n} = (-1)^n J_n`.
    z : complex
        Argument.
    family : {"cylindrical", "spherical"}
    scaling : {"plain", "scaled"}
        ``"scaled"`` multiplies both outputs by :math:`e^{-|\\Im z|}`.

    Returns
    -------
    BesselQuad

    Raises
    ------
    InvalidInputError
        Non-finite argument or negative spherical order.
    AccuracyLossError
        AMOS reports loss of significance (very large ``|z|`` or order).
    """
    q = BesselQuery.make(n, z, family, scaling)
    z = q.z
    if z == 0:
        if q.family == "cylindrical":
            quad = BesselQuad(1.0 + 0j if q.n == 0 else 0j, 0.5 + 0j if q.n == 1 else 0j)
        else:
            quad = BesselQuad(1.0 + 0j if q.n == 0 else 0j, 1 / 3 + 0j if q.n == 1 else 0j)
        return _apply_sign(quad, q.sign)
    if q.family == "cylindrical":
        quad = _cyl_quad(_jve, q.n, z, True)
    else:
        quad = _sph_quad(_jve, q.n, z, True)
    if q.scaling == "plain":
        if abs(z.imag) > 709.0:
            raise AccuracyLossError(f"J_{q.n}({z}) overflows double precision", math.inf)
        f = math.exp(abs(z.imag))
        quad = BesselQuad(quad.value * f, quad.derivative * f)
    _checked(quad.value, f"J_{q.n}({z})")
    _checked(quad.derivative, f"J'_{q.n}({z})")
    return _apply_sign(quad, q.sign)


def hankel1(n: int, z, family: Family = "cylindrical", scaling: Scaling = "plain") -> BesselQuad:
    """Hankel function of the first kind and its derivative.

    ``scaling="scaled"`` multiplies by :math:`e^{-iz}`, which removes the
    oscillation and the exponential decay in the upper half-plane.
    """
    q = BesselQuery.make(n, z, family, scaling)
    if q.z == 0:
        raise DomainError("Hankel functions are singular at the origin")
    if q.family == "cylindrical":
        quad = _cyl_quad(_h1e, q.n, q.z, True)
    else:
        quad = _sph_quad(_h1e, q.n, q.z, True)
    if q.scaling == "plain":
        if -q.z.imag > 709.0:
            raise AccuracyLossError(f"H_{q.n}({q.z}) overflows double precision", math.inf)
        f = cmath.exp(1j * q.z)
        quad = BesselQuad(quad.value * f, quad.derivative * f)
    _checked(quad.value, f"H_{q.n}({q.z})")
    _checked(quad.derivative, f"H'_{q.n}({q.z})")
    return _apply_sign(quad, q.sign)


def log_deriv_j(n: int, z, family: Family = "cylindrical") -> complex:
    """:math:`J_n'(z)/J_n(z)` (or :math:`j_n'/j_n`) without forming either factor.

    Uses the continued fraction for :math:`J_{\\nu+1}/J_\\nu` at small and
    moderate ``|z|``, a ratio of scaled AMOS values at larger ``|z|`` and the
    Hankel expansion at very large ``|z|``.

    Raises
    ------
    PoleProximityError
        ``|J_n| < 1e-13 |J_n'|``; the caller must switch to a formula that
        does not divide by :math:`J_n`.
    """
    q = BesselQuery.make(n, z, family)
    if q.family == "spherical":
        if q.z == 0:
            if q.n == 0:
                return 0j
            raise PoleProximityError("j'/j has a pole at the origin for n > 0")
        return _lj(q.nu, q.z) - 0.5 / q.z
    return _lj(q.nu, q.z)


def hankel1_log_deriv(n: int, z, family: Family = "cylindrical") -> complex:
    """:math:`H_n^{(1)\\prime}(z)/H_n^{(1)}(z)` via stable forward recurrence."""
    q = BesselQuery.make(n, z, family)
    if q.z == 0:
        raise DomainError("Hankel functions are singular at the origin")
    ratio = _lh(q.nu, q.z)
    if q.family == "spherical":
        ratio -= 0.5 / q.z
    return ratio


def log_j(n: int, z, family: Family = "cylindrical") -> complex:
    """Complex logarithm of :math:`J_n(z)` (or :math:`j_n(z)`), any branch.

    Only differences of these logarithms are meaningful downstream, so the
    imaginary part is not normalised.
    """
    q = BesselQuery.make(n, z, family)
    if q.family == "spherical":
        if q.z == 0:
            return 0j if q.n == 0 else complex(-math.inf, 0)
        out = cmath.log(_spherical_prefactor(q.z)) + _log_j(q.nu, q.z)
    else:
        out = _log_j(q.nu, q.z)
    if q.sign == -1:
        out += 1j * math.pi
    return out


def log_h(n: int, z, family: Family = "cylindrical") -> complex:
    """Complex logarithm of :math:`H^{(1)}_n(z)` (or :math:`h^{(1)}_n(z)`)."""
    q = BesselQuery.make(n, z, family)
    if q.z == 0:
        raise DomainError("Hankel functions are singular at the origin")
    out = _log_h(q.nu, q.z)
    if q.family == "spherical":
        out += cmath.log(_spherical_prefactor(q.z))
    if q.sign == -1:
        out += 1j * math.pi
    return out


def log_cross_ratio_jh(n: int, z, family: Family = "cylindrical") -> complex:
    """Complex logarithm of :math:`J_n(z)/H^{(1)}_n(z)`.

    The spherical prefactors cancel, so this is the half-integer cylindrical
    ratio in the spherical case.
    """
    q = BesselQuery.make(n, z, family)
    if q.z == 0:
        raise DomainError("cross ratio undefined at the origin")
    return _log_j(q.nu, q.z) - _log_h(q.nu, q.z)


def cross_ratio_jh(n: int, z, family: Family = "cylindrical") -> complex:
    """:math:`J_n(z)/H^{(1)}_n(z)` with matched scalings.

    Finite whenever the true ratio is representable; saturates to 0 or
    overflows only when the ratio itself does.
    """
    log_ratio = log_cross_ratio_jh(n, z, family)
    if log_ratio.real < -745.0:
        return 0j
    return cmath.exp(log_ratio)
