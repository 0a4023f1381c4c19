import numpy as np
import pytest

from roistream.elastic import BandwidthThresholds, ElasticConfig
from roistream.enums import Scheduler, TraceProfile, WeightPreset
from roistream.errors import ConfigError, HorizonMismatchError, UntrainedModelError
from roistream.sim import runner
from roistream.sim.runner import GroundTruthUtility, LearnedUtility, SimConfig
from roistream.sim.scenario import FeatureStream, Scenario, generate_synthetic_scenario
from roistream.sim.traces import BandwidthTrace, generate_trace
from roistream.utility import ProfilingSample, TrainConfig, train_per_camera


def _config(**kwargs) -> SimConfig:
    fields = {"cameras": 3, "horizon": 30} | kwargs
    return SimConfig(**fields)


def _flat_trace(kbps: float, horizon: int = 30) -> BandwidthTrace:
    return BandwidthTrace(f"flat-{kbps:g}", np.full(horizon, kbps))


def _run(cfg, trace, scenario, elastic_cfg=None, **kwargs):
    return runner.run_simulation(
        cfg, trace, scenario, GroundTruthUtility(scenario), elastic_cfg or ElasticConfig(), **kwargs
    )


def _recomputed_utility(report, scenario, weights):
    b_index = {b: i for i, b in enumerate(scenario.bitrates)}
    r_index = {r: j for j, r in enumerate(scenario.resolutions)}
    totals = []
    for record in report.slots:
        total = 0.0
        for choice, stream, w in zip(record.decision.choices, scenario.streams, weights):
            if choice.transmits:
                table = stream.ground_truth[record.slot]
                total += w * table[b_index[choice.bitrate], r_index[choice.resolution]]
        totals.append(total)
    return float(np.mean(totals))


def test_sim_config_weights():
    assert _config().camera_weights(4) == [1.0] * 4
    assert _config(weights="set2").camera_weights(5) == [0.84, 0.38, 1.92, 0.74, 0.45]
    assert _config(weights=[0.5, 2.0]).camera_weights(2) == [0.5, 2.0]
    with pytest.raises(ConfigError):
        _config(weights=WeightPreset.SET3).camera_weights(3)


@pytest.mark.parametrize("kwargs", [{"weights": [1.0, -1.0]}, {"bitrates": []}, {"horizon": 0}])
def test_sim_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        _config(**kwargs)


def test_fair_unconstrained_single_camera():
    scenario = generate_synthetic_scenario(seed=1, cameras=1, horizon=20, profiling_slots=5)
    cfg = _config(cameras=1, horizon=20, scheduler=Scheduler.FAIR)
    report = _run(cfg, _flat_trace(5000.0, 20), scenario)
    truth = scenario.streams[0].ground_truth
    for record in report.slots:
        (choice,) = record.decision.choices
        assert choice.bitrate == 1000
        assert record.realized_utility == truth[record.slot, -1].max()


@pytest.mark.parametrize("profile", list(TraceProfile))
@pytest.mark.parametrize("seed", range(20))
def test_dp_dominates_baselines_with_exact_utility(seed, profile):
    scenario = generate_synthetic_scenario(seed=seed, cameras=5, horizon=30, profiling_slots=5)
    cfg = _config(cameras=5, weights="set2", seed=seed)
    trace = generate_trace(seed, profile, 30)
    reports = runner.compare_schedulers(
        cfg, trace, scenario, GroundTruthUtility(scenario), ElasticConfig(),
        schedulers=(Scheduler.DP, Scheduler.FAIR, Scheduler.AGNOSTIC),
    )
    dp, fair, agnostic = reports
    for other in (fair, agnostic):
        assert dp.mean_utility >= other.mean_utility - 1e-12
        for ours, theirs in zip(dp.slots, other.slots):
            assert ours.realized_utility >= theirs.realized_utility - 1e-12
            assert theirs.decision.total_bitrate <= theirs.available


def test_dp_beats_fair_with_skewed_weights():
    wins = 0
    for seed in range(20):
        scenario = generate_synthetic_scenario(seed=seed, cameras=5, horizon=40, profiling_slots=5)
        cfg = _config(cameras=5, horizon=40, weights="set2", seed=seed)
        trace = generate_trace(seed, TraceProfile.MEDIUM, 40)
        dp = _run(cfg, trace, scenario)
        fair = _run(cfg.model_copy(update={"scheduler": Scheduler.FAIR}), trace, scenario)
        assert dp.mean_utility >= fair.mean_utility - 1e-12
        wins += dp.mean_utility > fair.mean_utility
    assert wins >= 15


def test_elastic_gap_is_larger_on_low_bandwidth():
    cfg = _config(cameras=5, horizon=120, weights="set2")
    profiles = (TraceProfile.LOW, TraceProfile.HIGH)
    gaps = runner.seed_gaps(cfg, profiles, range(20), ElasticConfig())

    assert [(g.seed, g.profile) for g in gaps] == [(s, p) for s in range(20) for p in profiles]
    means = runner.mean_gaps(gaps)
    assert list(means) == list(profiles)
    assert means[TraceProfile.LOW] > means[TraceProfile.HIGH]
    assert runner.gap_rows(gaps[:1]) == [
        (0, "low", gaps[0].elastic_utility, gaps[0].fair_utility, gaps[0].gap)
    ]


@pytest.mark.parametrize("seed", range(5))
def test_generated_profiles_enable_borrowing_on_low_traces(seed):
    scenario = generate_synthetic_scenario(seed=seed, cameras=5, horizon=120)
    thresholds = runner.scenario_thresholds(scenario, ElasticConfig())
    # Five cameras at the smallest bitrate is the fallback.
    assert thresholds.tau_wl > 5 * 50
    assert not thresholds.inverted

    cfg = _config(cameras=5, horizon=120, scheduler=Scheduler.DP_ELASTIC, seed=seed)
    report = _run(cfg, generate_trace(seed, TraceProfile.LOW, 120), scenario)
    assert report.borrow_slots > 0


def test_elastic_noop_matches_dp(small_scenario):
    trace = generate_trace(0, TraceProfile.LOW, 30)
    noop = ElasticConfig(gamma_wl=0.0, gamma_wh=0.0)
    dp = _run(_config(), trace, small_scenario, noop)
    elastic = _run(_config(scheduler=Scheduler.DP_ELASTIC), trace, small_scenario, noop)
    assert elastic.slots == dp.slots
    assert elastic.borrow_slots == 0


def test_elastic_borrowing_respects_effective_budget(small_scenario):
    trace = generate_trace(2, TraceProfile.LOW, 30)
    eager = ElasticConfig(gamma_a=0.0)
    # Borrow whenever the area rises; never repay.
    thresholds = BandwidthThresholds(tau_wl=1e6, tau_wh=1e7, cameras=[])
    cfg = _config(scheduler=Scheduler.DP_ELASTIC)
    report = _run(cfg, trace, small_scenario, eager, thresholds=thresholds)

    cap = 2.0 * trace.mean * cfg.slot_length
    assert report.borrow_slots > 0
    assert report.repay_slots == 0
    assert report.peak_budget_used <= cap
    assert report.total_borrowed == pytest.approx(report.slots[-1].budget_used)
    for record in report.slots:
        assert record.decision.total_bitrate <= record.effective
        assert record.effective == record.available + record.borrowed / cfg.slot_length


def test_thresholds_default_to_profiling(small_scenario):
    trace = generate_trace(2, TraceProfile.LOW, 30)
    cfg = _config(scheduler=Scheduler.DP_ELASTIC)
    report = _run(cfg, trace, small_scenario)
    net = report.total_borrowed - report.total_repaid
    assert net == pytest.approx(report.slots[-1].budget_used, abs=1e-9)
    assert all(0.0 <= r.budget_used <= 2.0 * trace.mean for r in report.slots)


@pytest.mark.parametrize("scheduler", list(Scheduler))
def test_records_match_aggregate(scheduler, small_scenario):
    cfg = _config(scheduler=scheduler, weights=[0.5, 1.5, 1.0])
    report = _run(cfg, generate_trace(9, TraceProfile.MEDIUM, 30), small_scenario)
    weights = cfg.camera_weights(3)
    assert report.mean_utility == pytest.approx(
        _recomputed_utility(report, small_scenario, weights), abs=1e-12
    )
    assert len(report.slots) == 30
    if scheduler != Scheduler.DP_ELASTIC:
        assert all(r.decision.total_bitrate <= r.available for r in report.slots)


@pytest.mark.parametrize("scheduler", list(Scheduler))
def test_simulation_is_deterministic(scheduler):
    def once():
        scenario = generate_synthetic_scenario(seed=3, cameras=3, horizon=25, profiling_slots=10)
        trace = generate_trace(3, TraceProfile.LOW, 25)
        return _run(_config(scheduler=scheduler, horizon=25), trace, scenario)

    assert once().slots == once().slots


def test_horizon_mismatch(small_scenario):
    with pytest.raises(HorizonMismatchError):
        _run(_config(), _flat_trace(500.0, 10), small_scenario)
    with pytest.raises(HorizonMismatchError):
        _run(_config(horizon=40), _flat_trace(500.0, 40), small_scenario)


def test_option_mismatch(small_scenario):
    with pytest.raises(ConfigError):
        _run(_config(bitrates=[100, 200]), _flat_trace(500.0), small_scenario)


def test_weight_count_mismatch(small_scenario):
    with pytest.raises(ConfigError):
        _run(_config(weights=[1.0, 1.0]), _flat_trace(500.0), small_scenario)


def test_untrained_camera(small_scenario):
    utility = LearnedUtility({}, small_scenario.bitrates, small_scenario.resolutions)
    with pytest.raises(UntrainedModelError):
        runner.run_simulation(
            _config(), _flat_trace(500.0), small_scenario, utility, ElasticConfig()
        )


def test_learned_utility(small_scenario):
    models = train_per_camera(small_scenario.profiling, TrainConfig(hidden_size=4, epochs=20))
    utility = LearnedUtility(
        models, small_scenario.bitrates, small_scenario.resolutions, small_scenario.profiling
    )
    table = utility.average_table(0)
    assert table.shape == (6, 3)
    assert np.all((table >= 0) & (table <= 1))

    trace = generate_trace(1, TraceProfile.MEDIUM, 30)
    for scheduler in (Scheduler.DP, Scheduler.AGNOSTIC):
        report = runner.run_simulation(
            _config(scheduler=scheduler), trace, small_scenario, utility, ElasticConfig()
        )
        assert 0.0 <= report.mean_utility <= 3.0
        assert all(0.0 <= r.predicted_utility <= 3.0 for r in report.slots)

    with pytest.raises(UntrainedModelError):
        LearnedUtility(models, small_scenario.bitrates, small_scenario.resolutions).average_table(0)


def _flat_scenario(horizon: int = 10) -> Scenario:
    streams = tuple(
        FeatureStream(camera, np.full(horizon, 0.2), np.full(horizon, 0.8), np.full((horizon, 2, 1), 0.6))
        for camera in range(2)
    )
    profiling = tuple(
        ProfilingSample(a=0.2, c=0.8, bitrate=b, resolution=0, accuracy=0.6, camera=camera, segment=seg)
        for camera in range(2)
        for seg in range(2)
        for b in (50.0, 100.0)
    )
    return Scenario(streams=streams, bitrates=(50, 100), resolutions=(0,), profiling=profiling)


def test_schedulers_agree_on_degenerate_scenario():
    scenario = _flat_scenario()
    cfg = _config(bitrates=[50, 100], resolutions=[0], horizon=10)
    trace = BandwidthTrace("varied", np.linspace(100.0, 400.0, 10))
    reports = runner.compare_schedulers(
        cfg, trace, scenario, GroundTruthUtility(scenario), ElasticConfig()
    )
    assert [r.scheduler for r in reports] == list(Scheduler)
    utilities = [r.mean_utility for r in reports]
    assert max(utilities) - min(utilities) < 1e-9
    assert utilities[0] == pytest.approx(1.2)


def test_report_summary_and_files(tmp_path, small_scenario):
    trace = generate_trace(0, TraceProfile.MEDIUM, 30)
    reports = runner.compare_schedulers(
        _config(), trace, small_scenario, GroundTruthUtility(small_scenario), ElasticConfig()
    )
    rows = runner.comparison_rows(reports)
    assert [row[1] for row in rows] == ["dp", "dp+elastic", "fair", "agnostic"]
    assert all(row[0] == "medium-0" for row in rows)

    summary = reports[0].summary()
    assert summary["slots"] == 30
    assert set(summary["per_camera_accuracy"]) == {"0", "1", "2"}

    runner.write_report(tmp_path, reports[1], prefix="medium-0_")
    slots = (tmp_path / "slots_medium-0_dp+elastic.csv").read_text().splitlines()
    cameras = (tmp_path / "cameras_medium-0_dp+elastic.csv").read_text().splitlines()
    assert slots[0] == ",".join(runner.SLOT_COLUMNS)
    assert len(slots) == 31
    assert cameras[0] == ",".join(runner.CAMERA_COLUMNS)
    assert len(cameras) == 1 + 30 * 3
