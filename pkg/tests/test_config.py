import json
import logging

import pytest

from autonomy.perception.door_handle_localizer import LocalizationMethod
from src.config import MissionConfig, load_mission_config, load_settings, mission_config_from_dict
from src.logger import MissionEvent, MissionLogger, read_events, write_events
from src.models import ConfigError
from tests.conftest import ROOT


def test_empty_document_gives_defaults():
    config = mission_config_from_dict({})
    assert config == MissionConfig()
    assert config.spray.duration == 2.0
    assert config.spray.standoff == 0.30
    assert config.localization is LocalizationMethod.PROJECTED


def test_nested_override_keeps_sibling_defaults():
    config = mission_config_from_dict({"noise": {"false_negative": 0.0}, "spray": {"duration": 3.0}})
    assert config.noise.false_negative == 0.0
    assert config.noise.depth_std == MissionConfig().noise.depth_std
    assert config.spray.duration == 3.0
    assert config.spray.threshold == 0.05


def test_vectors_and_enums_are_coerced():
    config = mission_config_from_dict({"final_goal": [8, 0, 1], "localization": "raw_centroid"})
    assert config.final_goal == (8.0, 0.0, 1.0)
    assert config.localization is LocalizationMethod.RAW_CENTROID


@pytest.mark.parametrize("data", [
    {"spray_time": 2.0},
    {"spray": {"nozzle": 1}},
    {"spray": {"duration": -1.0}},
    {"localization": "guess"},
    {"final_goal": [1, 2]},
    {"ground_altitude": 2.0},
    {"noise": 3},
])
def test_invalid_documents(data):
    with pytest.raises(ConfigError):
        mission_config_from_dict(data)


def test_default_mission_file_loads():
    config = load_mission_config(ROOT / "config" / "default_mission.json")
    assert config.final_goal == (9.0, 0.0, 1.0)
    assert config.dt == 0.05


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "dt": 0.05,\n  "seed": \n}\n')
    with pytest.raises(ConfigError, match=r"bad\.json:4:"):
        load_mission_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_mission_config(tmp_path / "nope.json")


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("SPRAYSIM_LOG_LEVEL", "debug")
    monkeypatch.setenv("SPRAYSIM_WORKERS", "4")
    settings = load_settings()
    assert settings.log_level == "DEBUG"
    assert settings.workers == 4
    monkeypatch.setenv("SPRAYSIM_WORKERS", "many")
    with pytest.raises(ConfigError):
        load_settings()


def test_events_round_trip_as_json_lines(tmp_path):
    events = [
        MissionEvent(0.05, "transition", "Takeoff", {"to": "Explore"}),
        MissionEvent(12.5, "spray", "Spray(Spraying)", {"index": 0, "duration": 2.0}),
    ]
    path = tmp_path / "events.jsonl"
    assert write_events(path, events) == 2
    lines = path.read_text().splitlines()
    assert json.loads(lines[0]) == {"details": {"to": "Explore"}, "kind": "transition", "state": "Takeoff", "t": 0.05}
    assert read_events(path) == events


def test_mission_logger_writes_files(tmp_path):
    mission_logger = MissionLogger(tmp_path / "logs")
    mission_logger.log_event(3, MissionEvent(1.0, "spray", "Spray(Spraying)", {"index": 0}))
    try:
        raise ValueError("planner exploded")
    except ValueError as e:
        entry = mission_logger.log_error(3, e, {"seed": 3}, severity="high")
    for handler in logging.getLogger("mission").handlers + logging.getLogger("error").handlers:
        handler.flush()
    assert entry.error_type == "ValueError"
    assert "planner exploded" in entry.stack_trace
    assert "spray" in (tmp_path / "logs" / "mission.log").read_text()
    assert "planner exploded" in (tmp_path / "logs" / "errors.log").read_text()
