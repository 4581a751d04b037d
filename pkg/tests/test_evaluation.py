import json
import time

import numpy as np
import pytest

from autonomy.mission.mission_controller import SprayRecord
from evaluation.report import format_summary, report, sweep_rows, write_summary
from evaluation.suite_runner import SprayResult, TrialResult, run_trial, run_trials, score_spray, trial_start
from simulation.scene import ground_truth_spray_pose, random_hallway_scene
from src.config import MissionConfig
from src.models import PreconditionError
from tests.conftest import quiet_config


def _spray(*errors, handle="h", disinfected=True) -> SprayResult:
    trace = tuple((0.05 * (k + 1), tuple(float(c) for c in e)) for k, e in enumerate(errors))
    return SprayResult(handle, 2.0, 0.3, disinfected, trace)


def _trial(index, sprays=(), outcome="Done", handles=("h",)) -> TrialResult:
    return TrialResult(index, index, (1.0, 0.0, 0.2), outcome, sprays=list(sprays),
                       handles_in_scene=handles, tank_remaining=247.44)


def test_identical_errors():
    results = [_trial(i, [_spray((0.05, 0, 0), (0.05, 0, 0))]) for i in range(10)]
    suite = report(results)
    assert suite.mean_error == pytest.approx(0.05)
    assert suite.max_error == pytest.approx(0.05)
    assert suite.within_trial_std == pytest.approx(0.0)
    assert suite.between_trial_std == pytest.approx(0.0)
    assert suite.success_rate == 1.0
    assert suite.all_succeeded


def test_one_aborted_trial():
    results = [_trial(i, [_spray((0.05, 0, 0))]) for i in range(9)]
    results.append(_trial(9, outcome="Aborted"))
    results[-1].abort_reason = "low battery"
    suite = report(results)
    assert suite.success_count == 9
    assert suite.success_rate == pytest.approx(0.9)
    assert suite.trials[-1].abort_reason == "low battery"
    assert suite.trials[-1].mean_error is None


def test_trial_spread_dominates_hover_wobble():
    results = []
    for i in range(8):
        base = np.array([0.01 * i, 0.0, 0.0])
        results.append(_trial(i, [_spray(base + (0.001, 0, 0), base - (0.001, 0, 0))]))
    suite = report(results)
    assert suite.within_trial_std == pytest.approx(0.001)
    assert suite.within_trial_std < suite.between_trial_std


def test_between_trial_std_needs_repeat_sprays():
    suite = report([_trial(0, [_spray((0.02, 0, 0))])])
    assert suite.between_trial_std is None


def test_unsprayed_handle_is_not_a_success():
    trial = _trial(0, [_spray((0.02, 0, 0))], handles=("h", "other"))
    assert not trial.aborted
    assert not trial.succeeded
    failed_spray = _trial(1, [_spray((0.02, 0, 0), disinfected=False)])
    assert not failed_spray.succeeded


def test_report_needs_results():
    with pytest.raises(PreconditionError):
        report([])


def test_tank_figures():
    suite = report([_trial(0)])
    assert suite.sprays_per_full_tank == 97
    assert suite.claimed_sprays_per_tank == 20
    assert suite.minimum_adequate_duration == pytest.approx(1.87)


def test_summary_files(tmp_path):
    suite = report([_trial(i, [_spray((0.03, 0.04, 0))]) for i in range(3)])
    json_path, text_path = write_summary(suite, tmp_path)
    data = json.loads(json_path.read_text())
    assert data["trial_count"] == 3
    assert data["mean_error"] == 0.05
    assert data["trials"][0]["trace_file"] == "trial_0_spray.csv"
    assert "mean nozzle error:    5.0 cm" in text_path.read_text()
    assert text_path.read_text() == format_summary(suite)


def test_score_spray_on_target(default_scene):
    config = MissionConfig()
    target = ground_truth_spray_pose(default_scene, "d1-h0", config.spray.standoff)
    record = SprayRecord(0, 10.0, target.position, target.position, duration=2.0,
                         trace=[(10.05, target.position), (10.1, target.position)])
    scored = score_spray(default_scene, config, record)
    assert scored.handle_id == "d1-h0"
    assert scored.distance == pytest.approx(0.30)
    assert scored.mean_error == pytest.approx(0.0)
    assert scored.disinfected


def test_short_spray_is_not_disinfecting(default_scene):
    config = MissionConfig()
    target = ground_truth_spray_pose(default_scene, "d1-h0", config.spray.standoff)
    record = SprayRecord(0, 10.0, target.position, target.position, duration=1.0,
                         trace=[(10.05, target.position)])
    assert not score_spray(default_scene, config, record).disinfected


def test_empty_trace_is_not_scored(default_scene):
    record = SprayRecord(0, 10.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    assert score_spray(default_scene, MissionConfig(), record) is None


def test_start_is_drawn_from_region():
    config = MissionConfig()
    start = trial_start(config, 7)
    assert start == trial_start(config, 7)
    assert config.start_region.box.contains_point(start)


def test_duration_sweep():
    rows = sweep_rows("duration", [1.0, 2.0, 3.0])
    assert [r["coverage_0"] for r in rows] == [0.68, 0.97, 0.98]
    assert [r["coverage_60"] for r in rows] == [0.64, 0.94, 0.97]
    assert [r["disinfected"] for r in rows] == [False, True, True]
    assert rows[1]["deposition"] == 0.73
    assert rows[1]["volume_ml"] == pytest.approx(2.563333, abs=1e-6)


def test_distance_sweep():
    rows = sweep_rows("distance", [0.30, 0.45, 0.60])
    assert [r["disinfected"] for r in rows] == [True, False, False]
    assert rows[1]["effective_duration"] == pytest.approx(1.0)
    assert rows[2]["coverage_0"] == 0.0


def test_close_nozzle_row_agrees_with_its_verdict():
    row = sweep_rows("distance", [0.10])[0]
    assert row["effective_duration"] > row["duration"]
    assert (row["coverage_0"], row["coverage_60"]) == (0.97, 0.94)
    assert row["disinfected"]


def test_unknown_sweep_parameter():
    with pytest.raises(PreconditionError):
        sweep_rows("altitude", [1.0])


@pytest.mark.slow
def test_reruns_are_byte_identical(default_scene, tmp_path):
    config = quiet_config()
    a, b = tmp_path / "a", tmp_path / "b"
    first = run_trials(default_scene, config, 2, base_seed=5, out_dir=a)
    second = run_trials(default_scene, config, 2, base_seed=5, out_dir=b, workers=2)
    assert [r.outcome for r in first] == [r.outcome for r in second]
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert "trial_1_events.jsonl" in names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.slow
def test_noiseless_trial_is_accurate(default_scene):
    results = run_trials(default_scene, quiet_config(), 1, base_seed=0)
    suite = report(results)
    assert suite.success_count == 1
    assert suite.collision_ticks == 0
    assert suite.mean_error < 0.02


@pytest.mark.slow
def test_default_suite_finds_and_sprays_the_handle(default_scene):
    began = time.perf_counter()
    results = run_trials(default_scene, MissionConfig(), 10, base_seed=0, workers=4)
    elapsed = time.perf_counter() - began
    suite = report(results)
    assert suite.success_count >= 9, [(r.outcome, r.abort_reason) for r in results]
    assert 0.02 <= suite.mean_error <= 0.12
    assert suite.within_trial_std < suite.between_trial_std
    assert suite.collision_ticks == 0
    assert elapsed < 60.0


@pytest.mark.slow
def test_random_hallways_are_collision_free():
    for seed in range(20):
        result = run_trial(random_hallway_scene(seed), MissionConfig(), 0, base_seed=seed)
        assert not (result.abort_reason or "").startswith("error"), result.abort_reason
        assert result.collision_ticks == 0, seed
