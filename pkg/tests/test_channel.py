import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzsense.channel import (
    C,
    CarrierConfig,
    absorption_coefficient,
    channel_matrix,
    fresnel_coefficient,
    free_space_magnitude,
    los_gain,
    nlos_gain,
    rayleigh_factor,
    steering_vector,
    thermal_noise_power,
)
from thzsense.scene import PathParams, RisSubarray, User

F0 = 0.275e12


def test_dry_air_has_no_absorption():
    assert absorption_coefficient(F0, 0.0) == 0.0


def test_table_value_at_carrier():
    # shipped table row: 0.275 THz -> 0.0033 /m at 1 % vapor
    assert absorption_coefficient(F0, 0.01) == pytest.approx(0.0033)


def test_interpolation_midpoint():
    mid = absorption_coefficient(0.2625e12, 0.01)
    assert mid == pytest.approx((0.0026 + 0.0033) / 2)


def test_absorption_out_of_range():
    with pytest.raises(ValueError):
        absorption_coefficient(0.05e12, 0.01)
    with pytest.raises(ValueError):
        absorption_coefficient(F0, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1e12, 0.45e12), st.floats(0.1e12, 0.45e12), st.floats(0, 1), st.floats(0, 1))
def test_absorption_monotone(f1, f2, w1, w2):
    lo_f, hi_f = sorted((f1, f2))
    lo_w, hi_w = sorted((w1, w2))
    assert absorption_coefficient(lo_f, lo_w) <= absorption_coefficient(hi_f, lo_w) + 1e-15
    assert absorption_coefficient(lo_f, lo_w) <= absorption_coefficient(lo_f, hi_w) + 1e-15


def test_broadside_steering():
    assert np.allclose(steering_vector(8, 0.5, 1.0, 0.0), np.full(8, 1 / math.sqrt(8)))


def test_two_element_thirty_degrees():
    a = steering_vector(2, 0.5, 1.0, math.radians(30))
    assert np.allclose(a, np.array([1, np.exp(1j * math.pi / 2)]) / math.sqrt(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 128), st.floats(1e-4, 1e-2), st.floats(1e-4, 1e-2), st.floats(-math.pi, math.pi))
def test_steering_unit_norm(n, d, lam, ang):
    assert np.linalg.norm(steering_vector(n, d, lam, ang)) == pytest.approx(1.0, rel=1e-12)


def test_steering_rejects_bad_args():
    with pytest.raises(ValueError):
        steering_vector(0, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        steering_vector(4, -0.5, 1.0, 0.0)


def test_los_free_space():
    g = los_gain(F0, 10.0, 0.0, 0.0)
    assert abs(g) == pytest.approx(C / (4 * math.pi * F0 * 10.0))


def test_los_example_value():
    g = los_gain(F0, 10.0, 0.0033, 10.0 / C)
    assert abs(g) == pytest.approx(8.68e-6 * math.exp(-0.0165), rel=1e-3)
    assert np.angle(g) == pytest.approx(np.angle(np.exp(-2j * math.pi * F0 * 10.0 / C)))


def test_los_doubling_distance_halves():
    assert abs(los_gain(F0, 4.0, 0.0, 0.0)) == pytest.approx(abs(los_gain(F0, 2.0, 0.0, 0.0)) / 2, rel=1e-14)


def test_los_rejects_zero_distance():
    with pytest.raises(ValueError):
        los_gain(F0, 0.0, 0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 50), st.floats(0.01, 10), st.floats(0, 0.05), st.floats(0.1e12, 0.4e12))
def test_gain_decreases_in_r_k_f(r, dr, k, f):
    m = lambda f_, r_, k_: float(free_space_magnitude(f_, r_, k_))
    assert m(f, r + dr, k) < m(f, r, k)
    assert m(f, r, k + 0.01) < m(f, r, k)
    assert m(f * 1.1, r, k) < m(f, r, k)


def test_fresnel_examples():
    assert fresnel_coefficient(math.pi / 2, 2.0) == pytest.approx(-1.0)
    assert fresnel_coefficient(0.3, 1e9) == pytest.approx(-1.0, abs=1e-8)
    assert fresnel_coefficient(0.0, 2.0) == pytest.approx(-math.exp(-2 / math.sqrt(3)))
    with pytest.raises(ValueError):
        fresnel_coefficient(0.1, 1.0)


def test_rayleigh_examples():
    assert rayleigh_factor(0.4, 0.0, F0) == 1.0
    assert rayleigh_factor(math.pi / 2, 1e-3, F0) == pytest.approx(1.0)
    sigma = 0.05e-3
    want = math.exp(-8 * math.pi**2 * F0**2 * sigma**2 * 0.5 / C**2)
    assert rayleigh_factor(math.pi / 4, sigma, F0) == pytest.approx(want)
    with pytest.raises(ValueError):
        rayleigh_factor(0.1, -1.0, F0)


@settings(max_examples=80, deadline=None)
@given(st.floats(0, math.pi / 2), st.floats(1.01, 50), st.floats(0, 2e-4), st.floats(0.1e12, 0.45e12))
def test_reflection_factor_ranges(psi, eta, sigma, f):
    g = fresnel_coefficient(psi, eta)
    rho = rayleigh_factor(psi, sigma, f)
    assert -1 <= g < 0
    assert 0 < rho <= 1


def test_perfect_mirror_equals_los():
    # eta -> inf gives gamma = -1; sigma = 0 gives rho = 1
    a = nlos_gain(F0, 3.0, 4.0, 0.0033, 0.4, 1e12, 0.0, 0.0)
    assert abs(a) == pytest.approx(abs(los_gain(F0, 7.0, 0.0033, 0.0)), rel=1e-9)


def test_nlos_composes_subfactors():
    psi = math.pi / 4
    want = (abs(los_gain(F0, 10.0, 0.0033, 0.0)) * abs(fresnel_coefficient(psi, 2.0))
            * rayleigh_factor(psi, 0.0, F0))
    assert abs(nlos_gain(F0, 5.0, 5.0, 0.0033, psi, 2.0, 0.0, 0.0)) == pytest.approx(want)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 20), st.floats(0.1, 20), st.floats(0, math.pi / 2), st.floats(1.1, 5), st.floats(0, 1e-4))
def test_nlos_below_free_space(r1, r2, psi, eta, sigma):
    a = abs(nlos_gain(F0, r1, r2, 0.0, psi, eta, sigma, 0.0))
    assert a <= C / (4 * math.pi * F0 * (r1 + r2)) * (1 + 1e-12)


def test_noise_is_per_bin():
    car = CarrierConfig()
    assert car.noise_power == pytest.approx(thermal_noise_power(10e9 / 4096))
    assert car.replace(num_subcarriers=2048).noise_power == pytest.approx(2 * car.noise_power)


@pytest.mark.parametrize("kw", [{"bandwidth": 0}, {"num_subcarriers": 0}, {"center_frequency": -1}])
def test_carrier_validation(kw):
    with pytest.raises(ValueError):
        CarrierConfig(**kw)


def _link(M=16, Q=8):
    car = CarrierConfig(num_subcarriers=64)
    sa = RisSubarray(0, 0, (0.0, 0.0), 0.0, num_antennas=M, antenna_spacing=car.wavelength / 2)
    u = User(0, (5.0, 0.0), num_antennas=Q, antenna_spacing=car.wavelength / 2)
    return car, sa, u


def test_single_path_rank_one():
    car, sa, u = _link()
    path = PathParams("LoS", aoa=0.3, aod=0.1, toa=5 / C, r=5.0)
    H = channel_matrix([path], sa, u, car, 10).entries
    s = np.linalg.svd(H, compute_uv=False)
    alpha = los_gain(car.subcarrier_frequencies[10], 5.0, car.absorption[10], 5 / C)
    assert s[0] == pytest.approx(abs(alpha))
    assert s[1] < 1e-10 * s[0]


def test_blocked_gives_zero_matrix():
    car, sa, u = _link()
    assert not np.any(channel_matrix([PathParams("Blocked")], sa, u, car, 0).entries)


def test_orthogonal_paths_add_power():
    car, sa, u = _link(M=4, Q=4)
    # sin(angle) of 0 and 0.5 at half-wavelength spacing: orthogonal 4-element beams
    p1 = PathParams("LoS", aoa=0.0, aod=0.0, toa=5 / C, r=5.0)
    p2 = PathParams("LoS", aoa=math.asin(0.5), aod=math.asin(0.5), toa=7 / C, r=7.0)
    H = channel_matrix([p1, p2], sa, u, car, 3).entries
    a1 = los_gain(car.subcarrier_frequencies[3], 5.0, car.absorption[3], 5 / C)
    a2 = los_gain(car.subcarrier_frequencies[3], 7.0, car.absorption[3], 7 / C)
    assert np.linalg.norm(H) ** 2 == pytest.approx(abs(a1) ** 2 + abs(a2) ** 2)


def test_channel_linear_and_rank_bounded(rng):
    car, sa, u = _link()
    paths = [PathParams("LoS", aoa=float(a), aod=float(b), toa=float(r) / C, r=float(r))
             for a, b, r in zip(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), rng.uniform(2, 9, 3))]
    H = channel_matrix(paths, sa, u, car, 5).entries
    s = np.linalg.svd(H, compute_uv=False)
    assert np.sum(s > 1e-10 * s[0]) <= 3
    far = [PathParams("LoS", aoa=p.aoa, aod=p.aod, toa=p.toa, r=2 * p.r) for p in paths]
    # doubling every distance at fixed delay halves every gain when k = 0
    dry = car.replace(water_vapor_fraction=0.0)
    H1 = channel_matrix(paths, sa, u, dry, 5).entries
    H2 = channel_matrix(far, sa, u, dry, 5).entries
    assert np.allclose(H2, H1 / 2)
