import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzsense.channel import C, CarrierConfig, nlos_gain
from thzsense.estimator import SensingEstimate
from thzsense.mapper import (
    AwarenessMap,
    LocalizationResult,
    export_map,
    invert_los,
    invert_nlos,
    load_map,
    localize,
    merge_maps,
    normalize_map,
    reflection_loss,
    solve_incidence,
    update_map,
)
from thzsense.scene import Obstacle, RisSubarray, Scene, User, ground_truth_paths

F0 = 0.275e12


def test_invert_los_example():
    assert invert_los(0.9273, 16.678e-9, (0.0, 0.0)) == pytest.approx((3.0, 4.0), abs=2e-4)
    assert invert_los(1.0, 0.0, (2.0, 5.0)) == (2.0, 5.0)
    with pytest.raises(ValueError):
        invert_los(0.0, -1.0, (0.0, 0.0))


def test_invert_los_round_trip(rng):
    v = np.array([12.0, 0.0])
    step = 1e-12
    for p in rng.uniform(0.5, 23.5, (1000, 2)):
        r = np.linalg.norm(p - v)
        tau = round(r / C / step) * step  # delay quantized to the refinement step
        q = invert_los(math.atan2(p[1] - v[1], p[0] - v[0]), tau, v)
        assert math.dist(q, p) <= C * step


def test_grazing_target():
    f = np.array([F0])
    k = np.array([0.0])
    r = 7.0
    full = float(C / (4 * math.pi * F0 * r))
    psi, ok = solve_incidence(full, r, f, k)
    assert ok and psi == pytest.approx(math.pi / 2)


def test_known_incidence_recovered():
    psi = math.radians(35)
    f = np.array([F0])
    g = abs(nlos_gain(F0, 3.0, 4.0, 0.0033, psi, 2.1, 0.0, 0.0))
    est, ok = solve_incidence(g, 7.0, f, np.array([0.0033]), eta=2.1)
    assert ok
    assert math.degrees(est) == pytest.approx(35.0, abs=0.5)


def test_unreachable_target_falls_back():
    psi, ok = solve_incidence(1.0, 7.0, np.array([F0]), np.array([0.0]))
    assert not ok and psi == pytest.approx(math.pi / 4)


def test_reflection_loss_monotone():
    vals = reflection_loss(np.linspace(1e-6, math.pi / 2, 500), 2.1, 2e-5, np.array([F0]))
    assert np.all(np.diff(vals) >= 0)


def mirror_case():
    blocker = Obstacle((2.0, 1.0), 0.2)
    mirror = Obstacle((2.0, -50.0), 50.0)
    sa = RisSubarray(0, 0, (0.0, 1.0), 0.0)
    u = User(0, (4.0, 1.0))
    return Scene(24.0, (sa,), (u,), (blocker, mirror), {0: 0}), sa, u


def test_invert_nlos_mirror():
    scene, sa, u = mirror_case()
    (p,) = ground_truth_paths(scene, sa, u, CarrierConfig())
    o, q, r1, r2, ok = invert_nlos(p.aoa, p.aod, p.toa, p.incidence, sa.position)
    assert ok
    assert r1 == pytest.approx(r2, rel=1e-9)
    assert o == pytest.approx((2.0, 0.0), abs=1e-6)
    assert q == pytest.approx((4.0, 1.0), abs=1e-6)


def test_grazing_is_degenerate():
    assert invert_nlos(0.3, 0.2, 20e-9, math.pi / 2, (0.0, 0.0))[-1] is False
    assert invert_nlos(0.3, 0.0, 20e-9, 0.4, (0.0, 0.0))[-1] is False


def test_degenerate_localization_flagged():
    sa = RisSubarray(0, 0, (0.0, 0.0), math.pi / 2)
    est = SensingEstimate(aoa=0.1, aod=0.0, toa=20e-9, gain=1e-7, link_kind="NLoS")
    res = localize(est, sa, CarrierConfig(num_subcarriers=16))
    assert res.degenerate and not res.usable


def test_out_of_room_is_clipped():
    sa = RisSubarray(0, 0, (12.0, 0.0), math.pi / 2)
    est = SensingEstimate(aoa=0.0, aod=0.0, toa=40 / C, gain=1e-6)
    res = localize(est, sa, CarrierConfig(num_subcarriers=16), room_size=24.0)
    assert res.clipped
    assert 0 <= res.user_position[1] <= 24.0


def los_result(p, v=(0.0, 0.0)):
    return LocalizationResult(p, "LoS", v)


def test_single_los_frame_rasterizes_row():
    amap = AwarenessMap(10.0, 1.0)
    update_map(amap, los_result((3.0, 0.0)))
    hit = {(int(ix), int(iy)) for iy, ix in zip(*np.nonzero(amap.sigma))}
    assert hit == {(0, 0), (1, 0), (2, 0), (3, 0)}
    assert amap.E[0, 3] == 1 and amap.E.sum() == 1


def test_empty_frame_clears_occupancy_only():
    amap = AwarenessMap(10.0, 1.0)
    update_map(amap, los_result((3.0, 0.0)))
    before = amap.sigma.copy()
    update_map(amap, [])
    assert not amap.E.any()
    assert np.array_equal(amap.sigma, before)
    assert amap.frame == 2


def test_two_frames_accumulate():
    amap = AwarenessMap(10.0, 1.0)
    for _ in range(2):
        update_map(amap, los_result((3.0, 0.0)))
    assert amap.sigma[0, :4].tolist() == [2, 2, 2, 2]


def test_degenerate_result_skipped():
    amap = AwarenessMap(10.0, 1.0)
    update_map(amap, LocalizationResult((1.0, 1.0), "NLoS", (0.0, 0.0), degenerate=True))
    assert not amap.sigma.any()


def test_nlos_marks_both_legs_and_reflector():
    amap = AwarenessMap(10.0, 1.0)
    res = LocalizationResult((4.5, 1.5), "NLoS", (0.5, 1.5), obstacle_position=(2.5, 0.5))
    update_map(amap, res)
    assert amap.E[0, 2] == 1 and amap.E[1, 4] == 1
    assert amap.sigma[1, 0] == 1 and amap.sigma[0, 2] == 1


def test_normalize_examples():
    s = np.array([[0, 5], [2, 1]])
    assert normalize_map(s).max() == 1.0
    assert not normalize_map(np.zeros((3, 3))).any()
    assert np.all(normalize_map(np.full((2, 2), 7)) == 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=12))
def test_scores_monotone_and_normalized(points):
    amap = AwarenessMap(10.0, 0.5)
    prev = amap.sigma.copy()
    for p in points:
        update_map(amap, los_result(p, (5.0, 0.0)))
        assert np.all(amap.sigma >= prev)
        prev = amap.sigma.copy()
    n = amap.normalized()
    assert n.max() == 1.0 and n.min() >= 0.0


def test_map_deterministic_and_mergeable(tmp_path):
    stream = [los_result((3.0, 2.0)), los_result((6.0, 7.0))]
    a, b = AwarenessMap(10.0), AwarenessMap(10.0)
    for r in stream:
        update_map(a, r)
        update_map(b, r)
    assert np.array_equal(a.sigma, b.sigma)
    m = merge_maps([a, b])
    assert np.array_equal(m.sigma, 2 * a.sigma)
    with pytest.raises(ValueError):
        merge_maps([a, AwarenessMap(10.0, 1.0)])
    csv_path, json_path = export_map(a, tmp_path / "map")
    grid, header = load_map(csv_path)
    assert grid.shape == (40, 40)
    assert header["cell_size"] == 0.25 and header["frame"] == 2
    assert np.allclose(grid, a.normalized(), atol=1e-6)


def test_finer_cells_read_out_closer(rng):
    pts = rng.uniform(0, 24, (500, 2))

    def readout_error(cell):
        amap = AwarenessMap(24.0, cell)
        centers = [((ix + 0.5) * cell, (iy + 0.5) * cell) for ix, iy in map(amap.cell_of, pts)]
        return np.mean([math.dist(c, p) for c, p in zip(centers, pts)])

    assert readout_error(0.25) <= readout_error(0.5) <= readout_error(1.0)
