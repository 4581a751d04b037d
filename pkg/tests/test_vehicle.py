import math

import pytest

from autonomy.mission.corridor import CorridorSpec, corridor_candidates, corridor_centerline
from autonomy.mission.vehicle import VehicleParams, VehicleState, follow_waypoints, heading_to
from src.models import ConfigError, Pose
from tests.conftest import assert_vec


def _vehicle(position=(0.0, 0.0, 1.0), **kwargs) -> VehicleState:
    return VehicleState(Pose(position, 0.0), **kwargs)


def test_moves_one_tick_towards_waypoint():
    v = follow_waypoints(_vehicle(waypoints=((1.0, 0.0, 1.0),)), 0.1)
    assert_vec(v.pose.position, (0.05, 0.0, 1.0))
    assert v.waypoints == ((1.0, 0.0, 1.0),)
    assert v.battery == pytest.approx(599.9)


def test_reached_waypoint_is_popped():
    v = _vehicle((0.99, 0.0, 1.0), waypoints=((1.0, 0.0, 1.0), (2.0, 0.0, 1.0)))
    v = follow_waypoints(v, 0.1)
    assert_vec(v.pose.position, (1.04, 0.0, 1.0))
    assert v.waypoints == ((2.0, 0.0, 1.0),)


def test_last_step_lands_on_waypoint():
    v = follow_waypoints(_vehicle((0.97, 0.0, 1.0), waypoints=((1.0, 0.0, 1.0),)), 0.1)
    assert_vec(v.pose.position, (1.0, 0.0, 1.0))
    assert v.hovering


def test_empty_queue_hovers():
    v = _vehicle((3.0, 2.0, 1.0))
    assert follow_waypoints(v, 0.1).pose == v.pose


def test_hold_setpoint_pulls_back():
    v = _vehicle((0.0, 0.0, 1.0), hold=(0.02, 0.0, 1.0))
    assert_vec(follow_waypoints(v, 0.1).pose.position, (0.02, 0.0, 1.0))


def test_yaw_rate_is_bounded():
    v = follow_waypoints(_vehicle(commanded_yaw=math.pi / 2), 0.1)
    assert v.pose.yaw == pytest.approx(0.08)


def test_yaw_turns_the_short_way():
    v = VehicleState(Pose((0.0, 0.0, 1.0), 3.0), commanded_yaw=-3.0)
    v = follow_waypoints(v, 0.1)
    assert v.pose.yaw == pytest.approx(3.08)


def test_battery_never_goes_negative():
    assert follow_waypoints(_vehicle(battery=0.05), 0.1).battery == 0.0


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        follow_waypoints(_vehicle(), 0.0)


def test_heading_to():
    assert heading_to((0.0, 0.0, 0.0), (0.0, 1.0, 0.0)) == pytest.approx(math.pi / 2)
    assert heading_to((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)) is None


def test_vehicle_params():
    assert_vec(VehicleParams().planning_extents, (0.45, 0.45, 0.25))
    with pytest.raises(ConfigError):
        VehicleParams(max_speed=-1.0)
    with pytest.raises(ConfigError):
        VehicleParams(half_extents=(0.3, 0.0, 0.1))


CORRIDOR = CorridorSpec((0.0, 0.0, 0.0), (10.0, 0.0, 0.0))


def test_centerline_projection():
    assert_vec(corridor_centerline(CORRIDOR, (2.0, 0.8, 1.0), 1.2), (2.0, 0.0, 1.2))


def test_centerline_clamps_to_segment():
    assert_vec(corridor_centerline(CORRIDOR, (-3.0, 0.5, 1.0), 1.0), (0.0, 0.0, 1.0))
    assert_vec(corridor_centerline(CORRIDOR, (12.0, -0.5, 1.0), 1.0), (10.0, 0.0, 1.0))


def test_candidates_run_farthest_first():
    points = corridor_candidates(CORRIDOR, (2.0, 0.3, 1.0), (5.0, 0.0, 1.0), 1.0)
    assert len(points) == 11
    assert_vec(points[0], (5.0, 0.0, 1.0))
    assert_vec(points[-1], (2.5, 0.0, 1.0))


def test_candidates_backwards():
    points = corridor_candidates(CORRIDOR, (5.0, 0.0, 1.0), (3.0, 0.0, 1.0), 1.0, spacing=0.5)
    assert_vec(points[0], (3.0, 0.0, 1.0))
    assert_vec(points[-1], (4.5, 0.0, 1.0))


def test_no_candidates_at_the_goal():
    assert corridor_candidates(CORRIDOR, (5.0, 0.4, 1.0), (5.0, -0.4, 1.0), 1.0) == []
    assert corridor_candidates(CORRIDOR, (5.0, 0.0, 1.0), (5.2, 0.0, 1.0), 1.0) == []


def test_degenerate_corridor():
    with pytest.raises(ConfigError):
        CorridorSpec((1.0, 1.0, 0.0), (1.0, 1.0, 2.0))
