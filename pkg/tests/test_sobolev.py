import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import special as sp

from cloakbench.sobolev import (
    ModalDensity,
    SobolevError,
    default_probe,
    hs_norm,
    modal_project,
    rescale_density,
    single_mode,
    sphere_grid,
)


def test_single_mode_norm_is_power_of_two():
    d = ModalDensity(2, 1.0, {1: 1 / math.sqrt(2 * math.pi)})
    for s in (-1.5, -0.5, 0.0, 0.5, 2.0):
        assert_allclose(hs_norm(d, s), 2 ** (s / 2), rtol=1e-14)


def test_constant_density_on_outer_circle():
    R, c = 2.0, 0.7 - 0.2j
    d = ModalDensity(2, R, {0: c})
    assert_allclose(hs_norm(d, -0.5), abs(c) * math.sqrt(2 * math.pi * R), rtol=1e-14)


def test_3d_constant_mode():
    assert_allclose(hs_norm(ModalDensity(3, 1.0, {(0, 0): 1.0}), 0.5), 1.0, rtol=1e-15)


def test_empty_density_has_zero_norm():
    assert hs_norm(ModalDensity(2, 1.0, {}), 0.5) == 0.0
    assert hs_norm(ModalDensity(3, 0.3, {}), -1.5) == 0.0


def test_rescale_normalizer_factors():
    rho = 0.01
    d2 = ModalDensity(2, rho, {0: 1.0, 3: 0.5j})
    assert_allclose(hs_norm(rescale_density(d2, 1.0), 0) / hs_norm(d2, 0), math.sqrt(1 / rho), rtol=1e-14)
    tau = 0.05
    d3 = ModalDensity(3, tau, {(1, 0): 1.0, (2, -1): 0.3})
    assert_allclose(hs_norm(rescale_density(d3, 1.0), 0) / hs_norm(d3, 0), 1 / tau, rtol=1e-14)


def test_identity_rescale_keeps_norms():
    d = default_probe(2, 2.0)
    for s in (-1.5, -0.5, 0.5):
        assert hs_norm(rescale_density(d, 2.0), s) == hs_norm(d, s)


def test_project_cosine():
    theta = 2 * np.pi * np.arange(8) / 8
    d = modal_project(theta, np.cos(theta), 2, 1.0, 3)
    assert_allclose(d.coefficients[1], 0.5, atol=1e-14)
    assert_allclose(d.coefficients[-1], 0.5, atol=1e-14)
    for n in (-3, -2, 0, 2, 3):
        assert abs(d.coefficients[n]) < 1e-12


def test_project_constant():
    theta = 2 * np.pi * np.arange(11) / 11
    d = modal_project(theta, np.full(11, 2.5 + 1j), 2, 1.0, 5)
    assert_allclose(d.coefficients[0], 2.5 + 1j, rtol=1e-14)
    assert max(abs(v) for n, v in d.coefficients.items() if n != 0) < 1e-13


def test_project_mixed_exponentials():
    theta = 2 * np.pi * np.arange(16) / 16 + 0.3
    vals = np.exp(2j * theta) + 0.3 * np.exp(-1j * theta)
    d = modal_project(theta, vals, 2, 1.0, 4)
    # direct discrete summation oracle
    for n, expected in ((2, 1.0), (-1, 0.3)):
        oracle = sum(v * np.exp(-1j * n * t) for t, v in zip(theta, vals)) / len(theta)
        assert_allclose(d.coefficients[n], oracle, rtol=1e-14)
        assert_allclose(d.coefficients[n], expected, rtol=1e-13)


def test_project_insufficient_samples():
    theta = 2 * np.pi * np.arange(6) / 6
    with pytest.raises(SobolevError):
        modal_project(theta, np.ones(6), 2, 1.0, 3)


def test_project_rejects_nonuniform_grid():
    theta = np.sort(np.random.default_rng(1).uniform(0, 2 * np.pi, 12))
    with pytest.raises(SobolevError):
        modal_project(theta, np.ones(12), 2, 1.0, 3)


def test_sphere_grid_weights_and_roundtrip():
    angles, w = sphere_grid(5)
    assert_allclose(w.sum(), 4 * np.pi, rtol=1e-14)
    truth = {(0, 0): 1.0, (2, 1): 0.5 - 0.25j, (5, -3): 0.1j}
    d = ModalDensity(3, 1.0, truth)
    vals = d.evaluate(angles)
    back = modal_project(angles, vals, 3, 1.0, 5)
    for key, c in back.coefficients.items():
        assert_allclose(c, truth.get(key, 0), atol=1e-13)
    assert_allclose(back.evaluate(angles), vals, rtol=1e-10, atol=1e-13)


def test_3d_projection_requires_the_grid():
    angles, _ = sphere_grid(3)
    with pytest.raises(SobolevError):
        modal_project(angles[:-1], np.ones(len(angles) - 1), 3, 1.0, 3)


def test_nondecreasing_in_s_on_unit_radius():
    d = default_probe(3, 1.0)
    values = [hs_norm(d, s) for s in (-1.5, -0.5, 0.0, 0.5, 1.0)]
    assert all(b >= a for a, b in zip(values, values[1:]))


coeff = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.integers(-6, 6), coeff, max_size=8), st.floats(0.1, 5.0))
def test_parseval_2d(coeffs, r):
    d = ModalDensity(2, r, coeffs)
    m = 64
    theta = 2 * np.pi * np.arange(m) / m
    l2 = math.sqrt(np.sum(np.abs(d.evaluate(theta)) ** 2) * (2 * np.pi / m) * r)
    assert_allclose(hs_norm(d, 0), l2, rtol=1e-8, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(0, 4), st.integers(-4, 4)).filter(lambda k: abs(k[1]) <= k[0]),
                       coeff, max_size=6), st.floats(0.1, 3.0))
def test_parseval_3d(coeffs, r):
    d = ModalDensity(3, r, coeffs)
    angles, w = sphere_grid(6)
    l2 = math.sqrt(np.sum(w * np.abs(d.evaluate(angles)) ** 2) * r**2)
    assert_allclose(hs_norm(d, 0), l2, rtol=1e-8, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.integers(1, 6), coeff, max_size=6), coeff)
def test_conjugate_symmetric_coefficients_are_real(pos, c0):
    coeffs = {0: complex(c0.real, 0)}
    for n, c in pos.items():
        coeffs[n] = c
        coeffs[-n] = np.conj(c)
    d = ModalDensity(2, 1.0, coeffs)
    vals = d.evaluate(np.linspace(0, 2 * np.pi, 37))
    assert np.all(np.abs(vals.imag) <= 1e-10 * max(1.0, np.max(np.abs(vals.real))))


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.integers(-5, 5), coeff, max_size=6), st.floats(0.2, 3.0), st.floats(-2, 2),
       st.floats(0.1, 10))
def test_norm_is_homogeneous(coeffs, r, s, k):
    d = ModalDensity(2, r, coeffs)
    assert_allclose(hs_norm(d.scaled(k), s), k * hs_norm(d, s), rtol=1e-12, atol=1e-300)


def test_probe_shapes():
    p2 = default_probe(2, 2.0)
    assert sorted(p2.coefficients) == list(range(-8, 9))
    assert p2.coefficients[3] == 1 / 10
    p3 = default_probe(3, 2.0)
    assert len(p3.coefficients) == 49
    assert p3.coefficients[(6, -6)] == 1 / 43
    assert p3.n_max == 6


def test_invalid_densities():
    with pytest.raises(SobolevError):
        ModalDensity(3, 1.0, {(1, 2): 1.0})
    with pytest.raises(SobolevError):
        ModalDensity(4, 1.0, {})
    with pytest.raises(SobolevError):
        ModalDensity(2, -1.0, {})


def test_evaluate_matches_scipy_harmonics():
    d = single_mode(3, 1.0, 3, -2, 2.0)
    ang = np.array([[0.4, 1.1], [2.0, -0.5]])
    assert_allclose(d.evaluate(ang), 2.0 * sp.sph_harm_y(3, -2, ang[:, 0], ang[:, 1]), rtol=1e-14)
