"""``kinemarker`` command line.

Each pipeline stage is a subcommand so it can be run and inspected on its
own; ``report`` runs all of them. Exit status: 0 success, 1 validation
failure (bad config, bad recording, degenerate input), 2 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config
from .errors import KinemarkerError
from .ingest import ACTIONS, series_to_recording, write_recording
from .fixtures import generate_cohort
from .kinematics import WindowSpec, compute_angle_series
from .pipeline import (
    AnalysisReport,
    analyse,
    assess,
    calibrate_sources,
    choose_source,
    compute_descriptors,
    feature_matrices,
    group_series,
    load_recordings,
    rank_biomarkers,
)
from .report import (
    TTEST_COLUMNS,
    _write_csv,
    emit_plot_data,
    render_report,
    ttest_rows,
    write_bland_altman,
    write_calibration,
    write_descriptors,
    write_rankings,
)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

log = logging.getLogger("kinemarker")


def _config(args) -> PipelineConfig:
    config = load_config(args.config)
    changes = {}
    if getattr(args, "tails", None):
        changes["tails"] = args.tails
    if getattr(args, "ba_multiplier", None) is not None:
        changes["ba_multiplier"] = args.ba_multiplier
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if changes:
        config = config.replace(**changes)
    return config


def _out_dir(args, config: PipelineConfig) -> Path:
    out = Path(args.out) if args.out else config.output_path
    out.mkdir(parents=True, exist_ok=True)
    return out


def _loaded(config):
    loaded = load_recordings(config)
    root = config.input_path
    for item in loaded:
        item.path = item.path.relative_to(root)
    return loaded


def _partial_report(config, loaded, source) -> AnalysisReport:
    return AnalysisReport(config, [(p.path.as_posix(), p.sha256) for p in loaded], source)


# --------------------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    config = _config(args)
    out = _out_dir(args, config) / "canonical"
    loaded = _loaded(config)
    for item in loaded:
        target = out / item.path
        target.parent.mkdir(parents=True, exist_ok=True)
        write_recording(series_to_recording(item.series), target)
    print(f"{len(loaded)} recording(s) validated and resampled into {out}")
    return EXIT_OK


def cmd_features(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    loaded = _loaded(config)
    angle_dir = out / "angles"
    angle_dir.mkdir(exist_ok=True)
    for item in loaded:
        s = item.series
        cols = [compute_angle_series(s, d).values for d in config.angles]
        rows = [[s.t0 + i * s.dt] + [float(c[i]) for c in cols] for i in range(s.n_frames)]
        name = item.path.with_suffix(".csv").name
        _write_csv(angle_dir / name, ["t"] + [d.name for d in config.angles], rows)
    groups = group_series(loaded)
    matrices = feature_matrices(config, groups)
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)
    for (patient, session, source), m in matrices.items():
        m.to_csv(feat_dir / f"{patient}_{session}_{source}.csv")
    print(f"{len(loaded)} angle series and {len(matrices)} feature matrices written to {out}")
    return EXIT_OK


def cmd_biomarkers(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    loaded = _loaded(config)
    groups = group_series(loaded)
    source = choose_source(config, groups)
    report = _partial_report(config, loaded, source)
    report.rankings, report.histograms = rank_biomarkers(
        config, feature_matrices(config, groups, source))
    write_rankings(report, out)
    for action in ACTIONS:
        if action in report.histograms:
            emit_plot_data(report.histograms[action], out / f"histogram_{action}.csv",
                           svg=config.svg)
            top = ", ".join(f"{n} ({c})" for n, c in report.histograms[action].sorted_items()[:config.top_k])
            print(f"{action}: {top}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    loaded = _loaded(config)
    groups = group_series(loaded)
    report = _partial_report(config, loaded, choose_source(config, groups))
    report.calibration = calibrate_sources(config, groups)
    write_calibration(report, out)
    if not report.calibration:
        print("no recordings present from both pose sources; nothing to calibrate")
    for c in report.calibration:
        if c.error:
            print(f"{c.biomarker}: {c.error}")
        else:
            print(f"{c.biomarker}: slope={c.slope:.4f} intercept={c.intercept:.4f} "
                  f"rmse {c.rmse_before:.3f} -> {c.rmse_after:.3f}, r={c.r:.3f}")
    return EXIT_OK


def cmd_assess(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    loaded = _loaded(config)
    groups = group_series(loaded)
    source = choose_source(config, groups)
    report = _partial_report(config, loaded, source)
    report.descriptors = compute_descriptors(config, groups, source)
    report.tests, report.bland_altman = assess(config, report.descriptors)
    write_descriptors(report, out)
    for action in ACTIONS:
        _write_csv(out / f"ttest_{action}.csv", TTEST_COLUMNS, ttest_rows(report, action))
    for b in report.bland_altman:
        write_bland_altman(b, out, svg=config.svg)
    sig = report.significant()
    print(f"{len(report.tests)} tests, {len(sig)} significant")
    for t in sig:
        p = t.p_one if config.tails == "one" else t.p_two
        print(f"  {t.action} {t.biomarker} {t.descriptor}: t={t.t:.3f} p={p:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    report = analyse(config, _loaded(config))
    written = render_report(report, out, formats=("text", "csv", "json"))
    print((out / "report.txt").read_text(encoding="utf-8"))
    log.info("%d files written to %s", len(written), out)
    return EXIT_OK


def cmd_fixture(args) -> int:
    sources = ("mesh_model_24", "depth_tracker_32") if args.both_sources else ("mesh_model_24",)
    overrides = {}
    if args.statistics:
        overrides["window"] = WindowSpec(statistics=tuple(args.statistics.split(",")))
    manifest = generate_cohort(args.out, seed=args.seed, n_patients=args.patients,
                               sources=sources,
                               tremor_amplitude=None if args.null else (1.0, 2.0),
                               mesh_noise=args.noise, config_overrides=overrides)
    print(f"{len(manifest.files)} recordings for {manifest.n_patients} patients "
          f"written to {args.out} (config: {Path(args.out) / 'config.json'})")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinemarker", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline configuration JSON")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        p.add_argument("--tails", choices=("one", "two"))
        p.add_argument("--ba-multiplier", type=float, dest="ba_multiplier",
                       help="Bland-Altman limit multiplier, e.g. 1.96 or 2.0")
        p.add_argument("--workers", type=int)
        p.set_defaults(func=func)
        return p

    stage("ingest", cmd_ingest, "validate and resample recordings, write canonical files")
    stage("features", cmd_features, "write angle series and windowed feature matrices")
    stage("biomarkers", cmd_biomarkers, "PCA rankings and top-k histograms")
    stage("calibrate", cmd_calibrate, "cross-source regression and Pearson correlation")
    stage("assess", cmd_assess, "paired t-tests and Bland-Altman summaries")
    stage("report", cmd_report, "full pipeline: text report, CSV bundle and report.json")

    fx = sub.add_parser("fixture", help="write a synthetic pre/post cohort")
    fx.add_argument("--out", required=True)
    fx.add_argument("--seed", type=int, default=0)
    fx.add_argument("--patients", type=int, default=20)
    fx.add_argument("--null", action="store_true", help="identical pre and post sessions")
    fx.add_argument("--both-sources", action="store_true", dest="both_sources",
                    help="also write depth-tracker recordings (enables calibration)")
    fx.add_argument("--noise", type=float, default=0.0,
                    help="Gaussian joint noise (m) on mesh-model recordings")
    fx.add_argument("--statistics", help="comma-separated window statistics for the config")
    fx.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KinemarkerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, csv.Error) as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
