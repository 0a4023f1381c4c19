"""Trace-driven simulation of the per-slot scheduling loop."""

from roistream.sim.runner import (
    GroundTruthUtility,
    LearnedUtility,
    SimConfig,
    SimReport,
    SlotRecord,
    compare_schedulers,
    run_simulation,
)
from roistream.sim.scenario import (
    FeatureStream,
    Scenario,
    generate_synthetic_scenario,
    load_scenario,
    write_scenario,
)
from roistream.sim.traces import BandwidthTrace, generate_trace, load_trace_csv, write_trace_csv

__all__ = [
    "BandwidthTrace",
    "FeatureStream",
    "GroundTruthUtility",
    "LearnedUtility",
    "Scenario",
    "SimConfig",
    "SimReport",
    "SlotRecord",
    "compare_schedulers",
    "generate_synthetic_scenario",
    "generate_trace",
    "load_scenario",
    "load_trace_csv",
    "run_simulation",
    "write_scenario",
    "write_trace_csv",
]
