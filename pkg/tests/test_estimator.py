import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzsense.channel import C, CarrierConfig, steering_vector
from thzsense.cpd import cpd_als
from thzsense.estimator import (
    SearchGrid,
    calibrate_threshold,
    classify_link,
    delay_ramp,
    estimate_aoa,
    estimate_aod,
    estimate_paths,
    estimate_toa,
    golden_max,
    normalized_gain,
    recover_gain,
)
from thzsense.scene import PathParams, RisSubarray, Scene, SceneConfig, User, build_scene, ground_truth_paths
from thzsense.signal import SoundingConfig, generate_snapshots, make_combiners, make_precoders

GRID = SearchGrid()


def a_column(W, deg):
    return W.T @ steering_vector(W.shape[0], 0.5, 1.0, math.radians(deg))


def test_golden_max_quadratic():
    assert golden_max(lambda x: -(x - 0.3) ** 2, 0.0, 1.0, 60) == pytest.approx(0.3, abs=1e-9)


def test_aoa_forty_degrees():
    bank = make_combiners(64, 16, 5)
    phi, score = estimate_aoa(a_column(bank.W, 40.0), bank)
    assert math.degrees(phi) == pytest.approx(40.0, abs=0.05)
    assert score > 0.999


def test_aoa_full_measurement_score():
    bank = make_combiners(8, 32, 1)
    assert estimate_aoa(a_column(bank.W, -12.0), bank)[1] > 0.999


@settings(max_examples=30, deadline=None)
@given(st.floats(-80, 80), st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_aoa_scale_invariant(deg, s):
    bank = make_combiners(32, 16, 2)
    col = a_column(bank.W, deg)
    assert estimate_aoa(s * col, bank)[0] == pytest.approx(estimate_aoa(col, bank)[0], abs=1e-12)


def test_zero_column_rejected():
    with pytest.raises(ValueError):
        estimate_aoa(np.zeros(16), make_combiners(8, 16, 0))


def test_aod_minus_twenty_five():
    track = make_precoders(32, 16, 1.0, 3)
    b = track.Omega.T @ steering_vector(32, 0.5, 1.0, math.radians(-25)).conj()
    theta, _ = estimate_aod(b, track)
    assert math.degrees(theta) == pytest.approx(-25.0, abs=0.05)


def test_aod_fewer_snapshots_than_antennas():
    track = make_precoders(32, 8, 1.0, 9)
    b = track.Omega.T @ steering_vector(32, 0.5, 1.0, math.radians(17)).conj()
    theta, score = estimate_aod(b, track)
    model = track.Omega.T @ np.stack([steering_vector(32, 0.5, 1.0, a) for a in GRID.angles], axis=1).conj()
    corr = np.abs(b.conj() @ model) / np.linalg.norm(model, axis=0) / np.linalg.norm(b)
    # the exhaustive grid agrees with the refined estimate to one grid step
    assert abs(GRID.angles[np.argmax(corr)] - theta) <= GRID.angle_step
    assert math.degrees(theta) == pytest.approx(17.0, abs=0.05)


def test_toa_twenty_ns():
    car = CarrierConfig(bandwidth=10e9, num_subcarriers=256)
    tau, score = estimate_toa(delay_ramp(256, 10e9, 20e-9)[:, 0], car)
    assert tau == pytest.approx(20e-9, abs=0.05e-9)
    assert score > 0.999


def test_toa_twenty_ns_wraps_at_64_subcarriers():
    # K/W = 6.4 ns, so 20 ns is indistinguishable from 0.8 ns
    car = CarrierConfig(bandwidth=10e9, num_subcarriers=64)
    tau, _ = estimate_toa(delay_ramp(64, 10e9, 20e-9)[:, 0], car)
    assert tau == pytest.approx(20e-9 - 3 * car.delay_period, abs=0.05e-9)


def test_toa_zero_delay():
    car = CarrierConfig(num_subcarriers=64)
    assert estimate_toa(np.ones(64), car)[0] == pytest.approx(0.0, abs=1e-13)


def test_toa_aliasing():
    car = CarrierConfig(num_subcarriers=64)
    a = delay_ramp(64, car.bandwidth, 3e-9)[:, 0]
    b = delay_ramp(64, car.bandwidth, 3e-9 + car.delay_period)[:, 0]
    assert np.allclose(a, b)
    tau = estimate_toa(b, car)[0]
    assert 0 <= tau < car.delay_period
    assert tau == pytest.approx(3e-9, abs=0.05e-9)


def test_toa_needs_two_subcarriers():
    with pytest.raises(ValueError):
        estimate_toa(np.ones(1), CarrierConfig(num_subcarriers=1))


def test_literal_argmin_differs():
    car = CarrierConfig(num_subcarriers=64)
    c = delay_ramp(64, car.bandwidth, 20e-9)[:, 0]
    assert abs(estimate_toa(c, car, literal_argmin=True)[0] - 20e-9) > 1e-9


def test_recover_gain_exact_and_linear():
    car = CarrierConfig(num_subcarriers=64)
    alpha = 3e-6 * np.exp(0.7j)
    c = alpha * delay_ramp(64, car.bandwidth, 11e-9)[:, 0]
    assert recover_gain(c, 11e-9, car) == pytest.approx(alpha)
    assert abs(recover_gain(2 * c, 11e-9, car)) == pytest.approx(2 * abs(alpha))
    assert recover_gain(np.zeros(64), 11e-9, car) == 0


def test_classify_boundary():
    assert classify_link(0.9, 0.9) == "LoS"
    assert classify_link(0.0, 0.9) == "NLoS"
    with pytest.raises(ValueError):
        classify_link(1.0, 0.0)


def _scene_links(seeds=range(6)):
    car = CarrierConfig(num_subcarriers=64)
    rows = []
    for seed in seeds:
        sc = build_scene(SceneConfig(users=12, seed=seed))
        for u in sc.users:
            for sa in sc.subarrays:
                (p,) = ground_truth_paths(sc, sa, u, car)
                if p.kind != "Blocked":
                    rows.append((p.kind, normalized_gain(p.gain, p.toa, car), p.incidence))
    return rows


def test_default_threshold_separates_non_grazing_bounces():
    rows = _scene_links()
    for kind, g, psi in rows:
        if kind == "LoS":
            assert g == pytest.approx(1.0, rel=1e-3)  # band-averaged reference
            assert classify_link(g, 0.9) == "LoS"
        elif psi < math.radians(80):
            assert classify_link(g, 0.9) == "NLoS"


@pytest.mark.xfail(strict=True, reason="grazing bounces lose almost nothing on reflection; "
                   "measured accuracy is about 92% with the geometric-mean threshold")
def test_calibrated_threshold_accuracy():
    rows = _scene_links()
    eps = calibrate_threshold([g for k, g, _ in rows if k == "LoS"], [g for k, g, _ in rows if k == "NLoS"])
    acc = np.mean([classify_link(g, eps) == k for k, g, _ in rows])
    assert acc >= 0.99


def _los_tensor(v, p, boresight, noise=0.0, K=4096):
    car = CarrierConfig(num_subcarriers=K, noise_power=noise)
    sa = RisSubarray(0, 0, v, boresight, num_antennas=64, antenna_spacing=car.wavelength / 2)
    u = User(0, p, num_antennas=32, antenna_spacing=car.wavelength / 2)
    sc = Scene(24.0, (sa,), (u,), (), {0: 0})
    paths = ground_truth_paths(sc, sa, u, car)
    return car, sa, u, paths, generate_snapshots(sc, sa, u, SoundingConfig(), car, paths=paths)


def test_end_to_end_los_identity():
    car, sa, u, paths, t = _los_tensor((10.0, 0.0), (13.0, 7.0), math.pi / 2)
    est = estimate_paths(t, cpd_als(t.data, 1, init="nvecs"), sa, u)[0]
    true = paths[0]
    assert abs(est.aoa - true.local_aoa(sa)) < math.radians(0.05)
    assert abs(est.aod - true.aod) < math.radians(0.05)
    assert abs(est.toa - true.toa) < 0.05e-9
    assert est.link_kind == "LoS"
    assert est.normalized_gain == pytest.approx(1.0, rel=1e-3)
    assert all(0 <= s <= 1 for s in est.scores.values())


@pytest.mark.slow
def test_angle_error_shrinks_with_snr():
    errs = []
    for noise in (1e-15, 1e-17):
        e = []
        for i in range(200):
            rng = np.random.default_rng(i)
            p = tuple(rng.uniform(4, 20, 2))
            car, sa, u, paths, _ = _los_tensor((12.0, 0.0), p, math.pi / 2, noise=noise, K=256)
            sc = Scene(24.0, (sa,), (u,), (), {0: 0})
            t = generate_snapshots(sc, sa, u, SoundingConfig(J=8, T=8, noise_seed=i), car, paths=paths)
            est = estimate_paths(t, cpd_als(t.data, 1, init="nvecs"), sa, u)[0]
            e.append(abs(est.aoa - paths[0].local_aoa(sa)))
        errs.append(np.mean(e))
    assert errs[1] <= errs[0]
