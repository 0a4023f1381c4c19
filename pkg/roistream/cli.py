"""The ``roistream`` command line.

Exit codes: 0 on success, 2 on usage errors, 1 on any other error. Errors are
printed to stderr with an ``error:`` prefix.
"""

import logging
import sys
from pathlib import Path

import click

from roistream.alloc import (
    AllocationRequest,
    allocate_content_agnostic,
    allocate_dp,
    allocate_fair,
    brute_force,
)
from roistream.config import LOG_LEVELS, GlobalConfig, RunConfig, default_log_level, load_config
from roistream.detectors import NullDetector, OracleDetector
from roistream.elastic import compute_bandwidth_thresholds, profiling_accuracy_by_bitrate
from roistream.enums import RoiKind, Scheduler, TraceProfile
from roistream.errors import InsufficientDataError, RoistreamError
from roistream.roidet import RoidetParams, detect_segments
from roistream.sim.runner import (
    COMPARISON_COLUMNS,
    GAP_COLUMNS,
    GroundTruthUtility,
    LearnedUtility,
    UtilitySource,
    compare_schedulers,
    comparison_rows,
    gap_rows,
    mean_gaps,
    run_simulation,
    seed_gaps,
    write_report,
)
from roistream.sim.scenario import Scenario, generate_synthetic_scenario, load_scenario, write_scenario
from roistream.sim.traces import BandwidthTrace, generate_trace, load_trace_csv
from roistream.utility import load_models, load_profiling_csv, save_models, train_per_camera
from roistream.utils.files import atomic_write_text, write_csv
from roistream.utils.frames import load_frames
from roistream.utils.json_serde import dumps

logger = logging.getLogger(__name__)

ROI_COLUMNS = ("segment", "kind", "x", "y", "w", "h", "a", "c")

_HANDLER_NAME = "roistream"


def _initialize_logger(log_level: str) -> None:
    """Send log records to stderr. Safe to call more than once."""
    handler = logging.StreamHandler(sys.stderr)
    handler.set_name(_HANDLER_NAME)
    handler.setFormatter(
        logging.Formatter("[%(asctime)s] %(levelname)s in %(module)s: %(message)s")
    )
    root = logging.getLogger()
    for old in [h for h in root.handlers if h.get_name() == _HANDLER_NAME]:
        root.removeHandler(old)
    root.setLevel(log_level)
    root.addHandler(handler)


class CommandError(click.ClickException):
    """A runtime failure, reported as ``error: <message>`` with exit code 1."""

    def show(self, file=None):
        click.echo(f"error: {self.format_message()}", err=True)


class RoistreamGroup(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except RoistreamError as e:
            raise CommandError(str(e)) from e


def _existing_file():
    return click.Path(exists=True, dir_okay=False, path_type=Path)


def _out_dir():
    return click.Path(file_okay=False, path_type=Path)


def _load_run_config(config_path: Path | None, **overrides) -> RunConfig:
    run = load_config(config_path, RunConfig)
    updates = {k: v for k, v in overrides.items() if v is not None}
    if updates:
        sim = run.sim.model_validate(run.sim.model_dump() | updates)
        run = run.model_copy(update={"sim": sim})
    return run


def _resolve_trace(spec: str, run: RunConfig) -> BandwidthTrace:
    kind, _, value = spec.partition(":")
    if kind == "profile":
        try:
            profile = TraceProfile(value)
        except ValueError:
            names = ", ".join(p.value for p in TraceProfile)
            raise click.BadParameter(
                f"unknown profile {value!r}; choose from {names}", param_hint="--trace"
            ) from None
        return generate_trace(run.sim.seed, profile, run.sim.horizon)
    path = Path(spec)
    if not path.is_file():
        raise click.BadParameter(
            f"{spec!r} is neither profile:<name> nor an existing file", param_hint="--trace"
        )
    return load_trace_csv(path)


def _resolve_scenario(spec: str, run: RunConfig) -> Scenario:
    kind, _, value = spec.partition(":")
    if kind == "synthetic":
        try:
            seed = int(value)
        except ValueError:
            raise click.BadParameter(
                f"expected synthetic:<seed>, got {spec!r}", param_hint="--scenario"
            ) from None
        sim = run.sim
        return generate_synthetic_scenario(
            seed, sim.cameras, sim.horizon, sim.profiling_slots, sim.bitrates, sim.resolutions
        )
    path = Path(spec)
    if not path.is_dir():
        raise click.BadParameter(
            f"{spec!r} is neither synthetic:<seed> nor a directory", param_hint="--scenario"
        )
    return load_scenario(path)


def _utility_source(
    kind: str, models_dir: Path | None, scenario: Scenario, run: RunConfig
) -> UtilitySource:
    if kind == "truth":
        return GroundTruthUtility(scenario)
    if models_dir is not None:
        models = load_models(models_dir)
    else:
        if not scenario.profiling:
            raise InsufficientDataError("The scenario has no profiling data to train on")
        models = train_per_camera(scenario.profiling, run.train)
    return LearnedUtility(models, scenario.bitrates, scenario.resolutions, scenario.profiling)


@click.group(cls=RoistreamGroup)
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default=None,
    help="Log verbosity. Defaults to $ROISTREAM_LOG, then INFO.",
)
def cli(log_level):
    """Content-aware bandwidth allocation for co-located video analytics cameras."""
    _initialize_logger((log_level or default_log_level()).upper())


@cli.command()
@click.option(
    "--frames",
    "frames_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="directory of grayscale PGM frames, in file-name order",
)
@click.option("--oracle", type=_existing_file(), help="stationary detections CSV")
@click.option("--config", "config_path", type=_existing_file(), help="run config JSON")
@click.option(
    "--params", "params_path", type=_existing_file(), help="detector params JSON; overrides --config"
)
@click.option("--frames-per-segment", type=click.IntRange(min=2), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
def detect(frames_dir, oracle, config_path, params_path, frames_per_segment, out_path):
    """Find Regions of Interest in each segment of a camera's frames.

    Writes a CSV with one row per box and one summary row per segment
    carrying the segment's area ratio and confidence.
    """
    run = _load_run_config(config_path)
    params = run.roidet if params_path is None else load_config(params_path, RoidetParams)
    GlobalConfig(inputs=[frames_dir], out_dir=out_path.parent).prepare()
    frames = load_frames(frames_dir)
    detector = OracleDetector.from_csv(oracle) if oracle else NullDetector()
    results = detect_segments(
        frames, detector, params, frames_per_segment or run.sim.frames_per_slot
    )

    rows = []
    for r in results:
        for kind, boxes in ((RoiKind.STATIONARY, r.rois.stationary), (RoiKind.MOVING, r.rois.moving)):
            for box in boxes:
                rows.append((r.index, kind, box.x, box.y, box.w, box.h, None, None))
        rows.append((r.index, RoiKind.SUMMARY, None, None, None, None, r.features.a, r.features.c))
    write_csv(out_path, ROI_COLUMNS, rows)
    click.echo(f"Wrote {len(results)} segments to {out_path}")


@cli.command()
@click.option("--data", "data_path", required=True, type=_existing_file(), help="profiling CSV")
@click.option("--config", "config_path", type=_existing_file(), help="run config JSON")
@click.option("--seed", type=int, default=None, help="override the training seed")
@click.option("--out", "out_dir", required=True, type=_out_dir(), help="model directory")
def profile(data_path, config_path, seed, out_dir):
    """Train one utility model per camera from profiling data."""
    run = _load_run_config(config_path)
    train = run.train if seed is None else run.train.model_copy(update={"seed": seed})
    out = GlobalConfig(inputs=[data_path], out_dir=out_dir).prepare()

    models = train_per_camera(load_profiling_csv(data_path), train)
    save_models(models, out)
    for camera, model in models.items():
        click.echo(f"camera {camera}: training mse {model.train_mse:.6f}")


@cli.command()
@click.option("--tables", "tables_path", required=True, type=_existing_file(), help="tables JSON")
@click.option("--budget", required=True, type=click.FloatRange(min=0), help="kbps")
@click.option(
    "--mode",
    type=click.Choice(["dp", "fair", "agnostic", "brute"]),
    default="dp",
    show_default=True,
)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path))
def allocate(tables_path, budget, mode, out_path):
    """Allocate one slot's bandwidth across cameras.

    Prints the decision as JSON, or writes it to --out.
    """
    request = load_config(tables_path, AllocationRequest)
    cameras = request.camera_options()
    params = request.dp_params()
    match mode:
        case "fair":
            decision = allocate_fair(cameras, budget)
        case "agnostic":
            decision = allocate_content_agnostic(cameras, budget, params)
        case "brute":
            decision = brute_force(cameras, budget, params)
        case _:
            decision = allocate_dp(cameras, budget, params)

    text = dumps(decision.to_dict())
    if out_path is None:
        click.echo(text, nl=False)
    else:
        atomic_write_text(out_path, text)


@cli.command()
@click.option("--profiling", "profiling_path", required=True, type=_existing_file())
@click.option("--config", "config_path", type=_existing_file(), help="run config JSON")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
def thresholds(profiling_path, config_path, out_path):
    """Compute the elastic-transmission bandwidth thresholds."""
    run = _load_run_config(config_path)
    samples = load_profiling_csv(profiling_path)
    report = compute_bandwidth_thresholds(profiling_accuracy_by_bitrate(samples), run.elastic)
    atomic_write_text(out_path, report.model_dump_json(indent=2) + "\n")
    click.echo(f"tau_wl={report.tau_wl} kbps, tau_wh={report.tau_wh} kbps")


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cameras", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--horizon", type=click.IntRange(min=1), default=120, show_default=True)
@click.option("--profiling-slots", type=click.IntRange(min=2), default=80, show_default=True)
@click.option("--out", "out_dir", required=True, type=_out_dir(), help="scenario directory")
def scenario(seed, cameras, horizon, profiling_slots, out_dir):
    """Write a synthetic scenario directory."""
    out = GlobalConfig(out_dir=out_dir, seed=seed).prepare()
    write_scenario(out, generate_synthetic_scenario(seed, cameras, horizon, profiling_slots))
    click.echo(f"Wrote scenario to {out}")


def _simulation_options(f):
    f = click.option("--out", "out_dir", required=True, type=_out_dir())(f)
    f = click.option("--horizon", type=click.IntRange(min=1), default=None)(f)
    f = click.option("--seed", type=int, default=None, help="override the simulation seed")(f)
    f = click.option(
        "--models", "models_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
        help="trained model directory; otherwise models are trained on the scenario",
    )(f)
    f = click.option(
        "--utility",
        type=click.Choice(["learned", "truth"]),
        default="learned",
        show_default=True,
        help="schedule with learned models or with the ground truth",
    )(f)
    f = click.option(
        "--scenario", "scenario_spec", required=True, help="directory or synthetic:<seed>"
    )(f)
    f = click.option(
        "--config", "config_path", required=True, type=_existing_file(), help="run config JSON"
    )(f)
    return f


@cli.command()
@_simulation_options
@click.option("--trace", "trace_spec", required=True, help="trace CSV or profile:<low|medium|high>")
@click.option("--scheduler", type=click.Choice([s.value for s in Scheduler]), default=None)
def simulate(
    config_path, scenario_spec, utility, models_dir, seed, horizon, out_dir, trace_spec, scheduler
):
    """Run one scheduler over a bandwidth trace and a scenario."""
    run = _load_run_config(config_path, seed=seed, horizon=horizon, scheduler=scheduler)
    out = GlobalConfig(out_dir=out_dir, seed=run.sim.seed).prepare()
    trace = _resolve_trace(trace_spec, run)
    scen = _resolve_scenario(scenario_spec, run)
    source = _utility_source(utility, models_dir, scen, run)

    report = run_simulation(run.sim, trace, scen, source, run.elastic)
    write_report(out, report)
    atomic_write_text(out / "summary.json", dumps(report.summary()))
    click.echo(f"{report.scheduler}: mean utility {report.mean_utility:.6f}")


@cli.command()
@_simulation_options
@click.option(
    "--trace", "trace_specs", required=True, multiple=True,
    help="trace CSV or profile:<low|medium|high>; repeatable",
)
def compare(config_path, scenario_spec, utility, models_dir, seed, horizon, out_dir, trace_specs):
    """Run every scheduler on identical inputs and write comparison.csv."""
    run = _load_run_config(config_path, seed=seed, horizon=horizon)
    out = GlobalConfig(out_dir=out_dir, seed=run.sim.seed).prepare()
    scen = _resolve_scenario(scenario_spec, run)
    source = _utility_source(utility, models_dir, scen, run)

    rows = []
    for spec in trace_specs:
        trace = _resolve_trace(spec, run)
        reports = compare_schedulers(run.sim, trace, scen, source, run.elastic)
        for report in reports:
            write_report(out, report, prefix=f"{trace.name}_")
        rows.extend(comparison_rows(reports))
    write_csv(out / "comparison.csv", COMPARISON_COLUMNS, rows)
    for row in rows:
        click.echo(f"{row[0]} {row[1]}: {row[2]:.6f}")


@cli.command()
@click.option(
    "--config", "config_path", required=True, type=_existing_file(), help="run config JSON"
)
@click.option(
    "--seeds", type=click.IntRange(min=1), default=20, show_default=True,
    help="run seeds 0 to N-1",
)
@click.option(
    "--profile", "profiles", multiple=True, type=click.Choice([p.value for p in TraceProfile]),
    help="trace profile; repeatable, defaults to all",
)
@click.option("--horizon", type=click.IntRange(min=1), default=None)
@click.option("--out", "out_dir", required=True, type=_out_dir())
def gaps(config_path, seeds, profiles, horizon, out_dir):
    """Write the per-seed utility gap between dp+elastic and fair to gaps.csv."""
    run = _load_run_config(config_path, horizon=horizon)
    out = GlobalConfig(out_dir=out_dir, seed=run.sim.seed).prepare()
    chosen = [TraceProfile(p) for p in profiles] or list(TraceProfile)

    results = seed_gaps(run.sim, chosen, range(seeds), run.elastic)
    write_csv(out / "gaps.csv", GAP_COLUMNS, gap_rows(results))
    for profile, gap in mean_gaps(results).items():
        click.echo(f"{profile}: mean gap {gap:.6f} over {seeds} seeds")


def main(argv: list[str] | None = None) -> int:
    """Run the command line and return its exit code."""
    try:
        result = cli.main(args=argv, prog_name="roistream", standalone_mode=False)
    except click.UsageError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 2
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 1
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 1
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
