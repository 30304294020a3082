import numpy as np
import pytest

from fastslow.spline import cubic_spline_plan


def test_two_collinear_waypoints_give_straight_segment():
    ref = cubic_spline_plan([(0.0, 0.0), (10.0, 0.0)], 0.1)
    assert np.allclose(ref.y, 0.0, atol=1e-12)
    assert np.allclose(ref.yaw, 0.0, atol=1e-12)
    assert np.allclose(ref.curvature, 0.0, atol=1e-12)
    assert ref.length == pytest.approx(10.0)


def test_spline_interpolates_waypoints():
    wps = [(0.0, 0.0), (3.0, 1.0), (6.0, -1.0), (9.0, 2.0)]
    ref = cubic_spline_plan(wps, 0.05)
    for wx, wy in wps:
        d = np.sqrt((ref.x - wx) ** 2 + (ref.y - wy) ** 2)
        assert d.min() <= 1e-9


def test_right_angle_curvature_peaks_near_middle_waypoint():
    ref = cubic_spline_plan([(0.0, 0.0), (5.0, 0.0), (5.0, 5.0)], 0.02)
    peak_s = ref.s[int(np.argmax(np.abs(ref.curvature)))]
    assert abs(peak_s - 5.0) < 1.0


def test_duplicate_waypoints_rejected():
    with pytest.raises(ValueError):
        cubic_spline_plan([(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)], 0.1)


def test_input_validation():
    with pytest.raises(ValueError):
        cubic_spline_plan([(0.0, 0.0)], 0.1)
    with pytest.raises(ValueError):
        cubic_spline_plan([(0.0, 0.0), (1.0, 0.0)], 0.0)


def test_state_at_clamps_and_projects():
    ref = cubic_spline_plan([(0.0, 0.0), (10.0, 0.0)], 0.1)
    x, y, yaw, kappa = ref.state_at(-5.0)
    assert (x, y) == (0.0, 0.0)
    x, y, _, _ = ref.state_at(1e9)
    assert x == pytest.approx(10.0)
    assert ref.project(3.14, 0.5) == pytest.approx(3.1, abs=0.11)
