import cmath
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cloakbench import specfun as sf


def _series_j0(x, terms=40):
    # sum_k (-1)^k (x/2)^{2k} / (k!)^2, accumulated with fsum
    return math.fsum((-1) ** k * (x / 2) ** (2 * k) / math.factorial(k) ** 2 for k in range(terms))


def _mp_j(n, z, dps=40):
    with mp.workdps(dps):
        return complex(mp.besselj(n, z))


def _mp_h(n, z, dps=60):
    with mp.workdps(dps):
        return complex(mp.besselj(n, z) + 1j * mp.bessely(n, z))


def _wrap(phase):
    return (phase + math.pi) % (2 * math.pi) - math.pi


# --- spot values -----------------------------------------------------------


def test_j0_at_origin():
    q = sf.bessel_j(0, 0.0)
    assert q.value == 1
    assert q.derivative == 0


def test_spherical_j0_closed_form():
    q = sf.bessel_j(0, 2.0, "spherical")
    assert_allclose(q.value, math.sin(2) / 2, rtol=1e-14)
    assert_allclose(q.value.real, 0.4546487134, rtol=1e-10)


def test_j0_matches_power_series():
    # frozen from a 40-term fsum power series
    assert_allclose(_series_j0(2.0), 0.22389077914123567, rtol=1e-15)
    assert_allclose(sf.bessel_j(0, 2.0).value, 0.22389077914123567, rtol=1e-14)


def test_spherical_h0_closed_form():
    for z in (0.3, 2.0 + 1.0j, 7.5 - 0.25j):
        expected = -1j * cmath.exp(1j * z) / z
        assert_allclose(sf.hankel1(0, z, "spherical").value, expected, rtol=1e-13)


def test_h0_small_argument_logarithm():
    z = 1e-4
    euler = 0.5772156649015329
    approx = 1 + (2j / math.pi) * (math.log(z / 2) + euler)
    assert abs(sf.hankel1(0, z).value - approx) < 1e-6


def test_h3_against_frozen_oracle():
    q = sf.hankel1(3, 1.5 - 0.5j)
    assert_allclose(q.value, 1.187805798823477 - 1.3185995089534872j, rtol=1e-13)
    assert_allclose(q.derivative, -2.356528731886422 + 0.7278781677941798j, rtol=1e-13)


def test_spherical_values_against_frozen_oracle():
    q = sf.bessel_j(3, 2 + 1.5j, "spherical")
    assert_allclose(q.value, -0.0028710354774979384 + 0.136321424791458j, rtol=1e-13)
    assert_allclose(q.derivative, 0.12091718090163445 + 0.10426544070569649j, rtol=1e-13)
    h = sf.hankel1(2, 2 + 1.5j, "spherical")
    assert_allclose(h.value, -0.16524839233303454 - 0.0938133284294086j, rtol=1e-13)
    assert_allclose(h.derivative, 0.23055568259162512 - 0.14313282554566684j, rtol=1e-13)


def test_log_deriv_j_spot_values():
    assert sf.log_deriv_j(0, 0.0) == 0
    assert abs(sf.log_deriv_j(0, 1e-8)) < 1e-8
    assert_allclose(sf.log_deriv_j(1, 1 + 1j), 0.27305039057411973 - 0.7679343871371253j, rtol=1e-13)
    assert_allclose(sf.log_deriv_j(10, 0.1), 100.0, rtol=1e-3)


def test_hankel_log_deriv_spot_values():
    assert_allclose(sf.hankel1_log_deriv(1, 1e-5), -1e5, rtol=1e-6)
    assert_allclose(sf.hankel1_log_deriv(0, 5 + 2j), -0.0830890161902294 + 1.0369208067312694j, rtol=1e-13)
    for z in (1e3, 1e4 + 50j, 5e4):
        assert abs(sf.hankel1_log_deriv(4, z) - 1j) < 1e-2


def test_cross_ratio_spot_values():
    assert_allclose(sf.cross_ratio_jh(2, 1 + 3j), 44.72078077749935 - 46.672996833698754j, rtol=1e-13)
    small = sf.cross_ratio_jh(5, 0.01)
    assert_allclose(small, 1.1347646774792931e-52 + 1.0652533395766911e-26j, rtol=1e-12)
    z = 0.01
    # J_n ~ (z/2)^n / n!,  Y_n ~ -(n-1)! (2/z)^n / pi
    lead = 1j * math.pi * (z / 2) ** 10 / (math.factorial(5) * math.factorial(4))
    assert_allclose(small.imag, lead.imag, rtol=1e-4)
    for x in (200.0, 2000.0):
        r = sf.cross_ratio_jh(0, x)
        assert abs(r) <= 1 + 1e-2
        w = x - math.pi / 4  # J ~ cos(w) sqrt(2/(pi x)), H ~ e^{iw} sqrt(2/(pi x))
        assert_allclose(r, (cmath.exp(1j * w) + cmath.exp(-1j * w)) / (2 * cmath.exp(1j * w)), atol=5e-3)


def test_cross_ratio_tiny_but_nonzero():
    # true ratio ~ 1e-257, must not flush to zero
    r = sf.cross_ratio_jh(50, 0.1)
    assert r != 0
    lead = math.pi * 0.05**100 / (math.factorial(50) * math.factorial(49))
    assert_allclose(abs(r), lead, rtol=1e-2)


def test_log_domain_at_large_imaginary_argument():
    z = 300 + 400j  # raw J, H overflow/underflow pairs would cancel here
    assert_allclose(sf.log_j(7, z).real, 395.9347435193142, rtol=1e-13)
    assert_allclose(sf.log_h(7, z).real, -403.2941088111075, rtol=1e-13)
    assert abs(_wrap(sf.log_h(7, z).imag - (-1.241941638054258))) < 1e-10
    assert_allclose(sf.log_deriv_j(7, z), -0.0005062197182207803 - 0.9992272349099869j, rtol=1e-12)
    assert_allclose(sf.hankel1_log_deriv(7, z), -0.0006934152363773711 + 1.0008273721188248j, rtol=1e-12)


def test_high_order_small_argument():
    z = 0.5 + 0.2j
    assert_allclose(sf.hankel1_log_deriv(200, z), -344.8263299244533 + 137.9315369975852j, rtol=1e-11)
    assert_allclose(sf.log_h(200, z).real, 1119.2060754712707, rtol=1e-12)
    assert_allclose(sf.log_j(200, z).real, -1125.6491200986018, rtol=1e-12)


# --- errors ----------------------------------------------------------------


def test_invalid_inputs():
    with pytest.raises(sf.InvalidInputError):
        sf.bessel_j(1, complex(math.nan, 0))
    with pytest.raises(sf.InvalidInputError):
        sf.bessel_j(-1, 1.0, "spherical")
    with pytest.raises(sf.InvalidInputError):
        sf.bessel_j(1, 1.0, "elliptic")


def test_hankel_at_origin_is_domain_error():
    with pytest.raises(sf.DomainError):
        sf.hankel1(0, 0)
    with pytest.raises(sf.DomainError):
        sf.hankel1_log_deriv(2, 0j)


def test_pole_proximity_at_bessel_zero():
    zero = 2.404825557695773
    with pytest.raises(sf.PoleProximityError):
        sf.log_deriv_j(0, zero)
    # slightly away from the zero the ratio is finite and large
    assert abs(sf.log_deriv_j(0, zero + 1e-6)) > 1e5


def test_accuracy_loss_reported():
    with pytest.raises(sf.AccuracyLossError) as info:
        sf.hankel1(200, 0.5 + 0.2j)
    assert info.value.estimate > 0


def test_negative_order_reflection():
    for n in (1, 2, 5):
        for z in (0.7, 3 + 1j):
            sign = (-1) ** n
            assert_allclose(sf.bessel_j(-n, z).value, sign * sf.bessel_j(n, z).value, rtol=1e-15)
            assert_allclose(sf.hankel1(-n, z).derivative, sign * sf.hankel1(n, z).derivative, rtol=1e-15)


# --- identities over grids -------------------------------------------------


@pytest.mark.parametrize("n", [0, 1, 2, 5, 10, 20, 35, 50])
def test_wronskian_real_axis(n):
    for t in np.linspace(0.1, 50, 41):
        if n > 3 * t + 20:
            continue  # Y_n overflows the double range
        j = sf.bessel_j(n, t)
        h = sf.hankel1(n, t)
        y, yp = (h.value - j.value) / 1j, (h.derivative - j.derivative) / 1j
        w = j.value * yp - j.derivative * y
        assert abs(w - 2 / (math.pi * t)) <= 1e-10 * 2 / (math.pi * t)


COMPLEX_GRID = [0.3 + 0.1j, 1 + 1j, 2.5 - 0.7j, 6 + 3j, 12 + 0.5j, 20 + 8j, 40 - 2j]


@pytest.mark.parametrize("n", [0, 1, 3, 8, 15])
def test_spherical_wronskian(n):
    for z in COMPLEX_GRID:
        j = sf.bessel_j(n, z, "spherical")
        h = sf.hankel1(n, z, "spherical")
        w = j.value * h.derivative - j.derivative * h.value
        assert_allclose(w, 1j / z**2, rtol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 7, 20])
def test_recurrences(n):
    for z in COMPLEX_GRID:
        lhs = sf.bessel_j(n - 1, z).value + sf.bessel_j(n + 1, z).value
        assert_allclose(lhs, 2 * n / z * sf.bessel_j(n, z).value, rtol=1e-10, atol=1e-300)
        lhs = sf.bessel_j(n - 1, z, "spherical").value + sf.bessel_j(n + 1, z, "spherical").value
        assert_allclose(lhs, (2 * n + 1) / z * sf.bessel_j(n, z, "spherical").value, rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("family", ["cylindrical", "spherical"])
def test_scaled_plain_consistency(family):
    for n in (0, 2, 9):
        for z in COMPLEX_GRID + [30 + 100j]:
            j_plain, j_scaled = sf.bessel_j(n, z, family), sf.bessel_j(n, z, family, "scaled")
            f = math.exp(-abs(z.imag))
            assert_allclose(j_scaled.value, j_plain.value * f, rtol=1e-12)
            assert_allclose(j_scaled.derivative, j_plain.derivative * f, rtol=1e-12)
            h_plain, h_scaled = sf.hankel1(n, z, family), sf.hankel1(n, z, family, "scaled")
            g = cmath.exp(-1j * z)
            assert_allclose(h_scaled.value, h_plain.value * g, rtol=1e-12)


def test_scaled_never_overflows():
    for z in (5 + 1e4j, -300 + 9000j, 1e3 - 1e4j):
        q = sf.bessel_j(3, z, scaling="scaled")
        assert np.isfinite(q.value) and abs(q.value) < 1


@pytest.mark.parametrize("family", ["cylindrical", "spherical"])
def test_log_deriv_matches_quotient(family):
    for n in (0, 1, 4, 12):
        for z in COMPLEX_GRID:
            q = sf.bessel_j(n, z, family)
            assert_allclose(sf.log_deriv_j(n, z, family), q.derivative / q.value, rtol=1e-10)
            h = sf.hankel1(n, z, family)
            assert_allclose(sf.hankel1_log_deriv(n, z, family), h.derivative / h.value, rtol=1e-10)


# --- mpmath oracle, random sampling ----------------------------------------

orders = st.integers(min_value=0, max_value=60)
args = st.complex_numbers(min_magnitude=0.05, max_magnitude=80, allow_nan=False, allow_infinity=False).filter(
    lambda z: abs(z.imag) < 40
)


@settings(max_examples=60, deadline=None)
@given(orders, args)
def test_bessel_j_against_mpmath(n, z):
    expected = _mp_j(n, z)
    if abs(expected) < 1e-290:
        return
    got = sf.bessel_j(n, z).value
    assert abs(got - expected) <= 1e-12 * abs(expected)


@settings(max_examples=60, deadline=None)
@given(orders, args)
def test_log_derivatives_against_mpmath(n, z):
    with mp.workdps(80):
        zz = mp.mpc(z)
        j = mp.besselj(n, zz)
        if abs(j) < mp.mpf(10) ** -280:
            return
        lj = complex(mp.diff(lambda t: mp.besselj(n, t), zz) / j)
        h = mp.besselj(n, zz) + 1j * mp.bessely(n, zz)
        lh = complex(mp.diff(lambda t: mp.besselj(n, t) + 1j * mp.bessely(n, t), zz) / h)
    try:
        got = sf.log_deriv_j(n, z)
    except sf.PoleProximityError:
        return
    assert abs(got - lj) <= 1e-11 * max(1.0, abs(lj))
    assert abs(sf.hankel1_log_deriv(n, z) - lh) <= 1e-11 * max(1.0, abs(lh))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.floats(0.5, 60), st.floats(0.0, 300))
def test_log_cross_ratio_matches_log_difference(n, x, y):
    z = complex(x, y)
    diff = sf.log_j(n, z) - sf.log_h(n, z)
    lr = sf.log_cross_ratio_jh(n, z)
    assert abs(diff.real - lr.real) <= 1e-10 * max(1.0, abs(lr.real))
    assert abs(_wrap(diff.imag - lr.imag)) <= 1e-9
