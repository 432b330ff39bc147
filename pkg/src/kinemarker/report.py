"""Text and CSV rendering of an :class:`~kinemarker.pipeline.AnalysisReport`.

CSV floats are written with ``repr`` so the payloads are byte-stable and
round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .biomarker import BiomarkerHistogram
from .ingest import ACTIONS
from .pipeline import DESCRIPTORS, AnalysisReport, BlandAltmanEntry
from .stats import BlandAltmanSummary

TTEST_COLUMNS = ["biomarker", "descriptor", "t", "p_one", "p_two", "significant",
                 "df", "n", "critical", "error"]
HISTOGRAM_COLUMNS = ["feature", "count"]
BLAND_ALTMAN_COLUMNS = ["row_type", "pair_mean", "pair_diff", "mean_diff",
                        "upper_limit", "lower_limit", "inside", "total"]
CALIBRATION_COLUMNS = ["biomarker", "n", "slope", "intercept", "rmse_before", "rmse_after",
                       "r", "p", "error"]
DESCRIPTOR_COLUMNS = ["patient_id", "session", "action", "biomarker", "impulse", "smoothness"]
RANKING_COLUMNS = ["patient_id", "session", "scope", "rank", "feature", "importance", "error"]

ACTION_TITLES = {"squat": "Squat", "sit_to_stand": "Sit-to-Stand"}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _biomarker_title(name: str) -> str:
    # right_knee_flexion_max -> Right Knee Flexion (max)
    base, _, stat = name.rpartition("_")
    return f"{base.replace('_', ' ').title()} ({stat})"


# --------------------------------------------------------------------------- plot data

def coverage_label(summary: BlandAltmanSummary) -> str:
    return f"{summary.inside}/{summary.n} inside limits"


def emit_plot_data(summary, path, svg: bool = False) -> list[Path]:
    """Write the CSV behind a Bland-Altman scatter or a histogram bar chart."""
    path = Path(path)
    written = []
    if isinstance(summary, BlandAltmanSummary):
        rows = [["summary", None, None, summary.mean_diff, summary.upper_limit,
                 summary.lower_limit, summary.inside, summary.n]]
        rows += [["pair", float(m), float(d), None, None, None, None, None]
                 for m, d in zip(summary.pair_mean, summary.pair_diff)]
        written.append(_write_csv(path, BLAND_ALTMAN_COLUMNS, rows))
        if svg:
            written.append(_bland_altman_svg(summary, path.with_suffix(".svg")))
    elif isinstance(summary, BiomarkerHistogram):
        written.append(_write_csv(path, HISTOGRAM_COLUMNS, summary.sorted_items()))
        if svg:
            written.append(_histogram_svg(summary, path.with_suffix(".svg")))
    else:
        raise TypeError(f"no plot data for {type(summary).__name__}")
    return written


def read_bland_altman_csv(path) -> dict:
    """Inverse of :func:`emit_plot_data` for Bland-Altman files."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    summary = next(r for r in rows if r["row_type"] == "summary")
    pairs = [(float(r["pair_mean"]), float(r["pair_diff"])) for r in rows if r["row_type"] == "pair"]
    return {
        "mean_diff": float(summary["mean_diff"]),
        "upper_limit": float(summary["upper_limit"]),
        "lower_limit": float(summary["lower_limit"]),
        "inside": int(summary["inside"]),
        "total": int(summary["total"]),
        "pairs": pairs,
    }


def _svg_frame(width, height, body, title):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n'
            f'<title>{title}</title>\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n{body}</svg>\n')


def _scale(lo, hi, a, b):
    if hi == lo:
        hi, lo = hi + 1.0, lo - 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _bland_altman_svg(s: BlandAltmanSummary, path: Path) -> Path:
    w, h, pad = 480, 320, 40
    ys = list(s.pair_diff) + [s.lower_limit, s.upper_limit]
    sx = _scale(min(s.pair_mean), max(s.pair_mean), pad, w - pad)
    sy = _scale(min(ys), max(ys), h - pad, pad)
    parts = []
    for value, style in ((s.mean_diff, "black"), (s.upper_limit, "gray"), (s.lower_limit, "gray")):
        y = sy(value)
        parts.append(f'<line x1="{pad}" y1="{y:.2f}" x2="{w - pad}" y2="{y:.2f}" '
                     f'stroke="{style}" stroke-dasharray="4 3"/>')
    for m, d in zip(s.pair_mean, s.pair_diff):
        parts.append(f'<circle cx="{sx(m):.2f}" cy="{sy(d):.2f}" r="3" fill="steelblue"/>')
    parts.append(f'<text x="{pad}" y="{h - 8}" font-size="12">{coverage_label(s)}</text>')
    path.write_text(_svg_frame(w, h, "\n".join(parts) + "\n", "Bland-Altman"), encoding="utf-8")
    return path


def _histogram_svg(hist: BiomarkerHistogram, path: Path) -> Path:
    items = hist.sorted_items()
    bar, gap, pad = 24, 6, 220
    w = 520
    h = max(1, len(items)) * (bar + gap) + 20
    top = max([c for _, c in items] + [1])
    parts = []
    for i, (name, count) in enumerate(items):
        y = 10 + i * (bar + gap)
        length = (w - pad - 20) * count / top
        parts.append(f'<text x="4" y="{y + bar * 0.7:.1f}" font-size="12">{name}</text>')
        parts.append(f'<rect x="{pad}" y="{y}" width="{length:.2f}" height="{bar}" fill="steelblue"/>')
        parts.append(f'<text x="{pad + length + 4:.2f}" y="{y + bar * 0.7:.1f}" font-size="12">{count}</text>')
    path.write_text(_svg_frame(w, h, "\n".join(parts) + "\n", f"top features: {hist.action}"),
                    encoding="utf-8")
    return path


# --------------------------------------------------------------------------- tables

def ttest_rows(report: AnalysisReport, action: str):
    for t in report.tests:
        if t.action == action:
            yield [t.biomarker, t.descriptor, t.t, t.p_one, t.p_two, t.significant,
                   t.df, t.n, t.critical, t.error]


def _cell(entry) -> str:
    if entry is None:
        return "n/a"
    if entry.error:
        return f"n/a ({entry.error.split(':')[0]})"
    ps = f"p1={entry.p_one:.3f}, p2={entry.p_two:.3f}"
    if entry.significant:
        ps = f"**{ps}**"
    return f"{entry.t:.3f} ({ps})"


def render_text(report: AnalysisReport) -> str:
    cfg = report.config
    direction = "pre - post" if cfg.direction == "decrease" else "post - pre"
    lines = [
        "Movement biomarker assessment",
        "=============================",
        f"analysis source : {report.source}",
        f"config hash     : {cfg.digest()}",
        f"inputs          : {len(report.inputs)} recording(s)",
        f"paired test     : t on {direction}, {cfg.tails}-tailed significance at alpha={cfg.alpha}",
        "                  p1 = one-tailed (upper), p2 = two-tailed; * = significant",
        "",
    ]
    by_key = {(t.action, t.biomarker, t.descriptor): t for t in report.tests}
    for action in ACTIONS:
        names = [n for n in cfg.selected_biomarkers()
                 if any((action, n, d) in by_key for d in DESCRIPTORS)]
        if not names:
            continue
        crit = next((t for t in report.tests
                     if t.action == action and t.critical is not None), None)
        title = f"Biomechanic ({ACTION_TITLES[action]})"
        header = [title, "Spatial (impulse) t (p)", "Temporal (smoothness) t (p)"]
        rows = []
        for n in names:
            cells = [_cell(by_key.get((action, n, d))) for d in DESCRIPTORS]
            sig = any(by_key.get((action, n, d)) is not None and by_key[(action, n, d)].significant
                      for d in DESCRIPTORS)
            rows.append([("* " if sig else "  ") + _biomarker_title(n), *cells])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(3)]
        sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
        lines.append(sep)
        lines.append("| " + " | ".join(h.ljust(w) for h, w in zip(header, widths)) + " |")
        lines.append(sep)
        for r in rows:
            lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |")
        lines.append(sep)
        if crit is not None:
            lines.append(f"critical t (df={crit.df}) = {crit.critical:.3f}")
        lines.append("")

    lines.append("Top-feature histograms")
    lines.append("----------------------")
    for action in ACTIONS:
        hist = report.histograms.get(action)
        if hist is None:
            continue
        lines.append(f"{ACTION_TITLES[action]} ({hist.n_patients} patient(s), "
                     f"session={cfg.histogram_session}):")
        for name, count in hist.sorted_items():
            lines.append(f"  {name:<32} {count}")
    lines.append("")

    if report.calibration:
        lines.append("Source calibration (mesh_model_24 -> depth_tracker_32)")
        lines.append("------------------------------------------------------")
        for c in report.calibration:
            if c.error:
                lines.append(f"  {c.biomarker}: {c.error}")
            else:
                lines.append(f"  {c.biomarker}: y = {c.slope:.4f} x + {c.intercept:.4f}, "
                             f"r={c.r:.4f} (p={c.p:.2g}), rmse {c.rmse_before:.3f} -> {c.rmse_after:.3f}")
        lines.append("")

    sig_ba = [b for b in report.bland_altman if b.summary is not None
              and any(t.significant for t in report.tests
                      if (t.action, t.biomarker, t.descriptor) == (b.action, b.biomarker, b.descriptor))]
    if sig_ba:
        lines.append("Bland-Altman (significant biomarkers)")
        lines.append("-------------------------------------")
        for b in sig_ba:
            s = b.summary
            lines.append(f"  {b.key}: mean diff {s.mean_diff:.4g}, limits "
                         f"[{s.lower_limit:.4g}, {s.upper_limit:.4g}], {coverage_label(s)}")
        lines.append("")
    return "\n".join(lines)


def render_report(report: AnalysisReport, out_dir, formats=("text", "csv")) -> list[Path]:
    """Write the report. ``formats`` holds "text", "csv" (the CSV bundle) and/or "json"."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "text" in formats:
        p = out / "report.txt"
        p.write_text(render_text(report), encoding="utf-8")
        written.append(p)
    if "json" in formats:
        p = out / "report.json"
        p.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
    if "csv" in formats:
        written += write_csv_bundle(report, out)
    return written


def write_csv_bundle(report: AnalysisReport, out: Path) -> list[Path]:
    written = []
    for action in ACTIONS:
        written.append(_write_csv(out / f"ttest_{action}.csv", TTEST_COLUMNS,
                                  ttest_rows(report, action)))
        hist = report.histograms.get(action, BiomarkerHistogram(action, {}, 0))
        written += emit_plot_data(hist, out / f"histogram_{action}.csv", svg=report.config.svg)
    for b in report.bland_altman:
        written += write_bland_altman(b, out, svg=report.config.svg)
    written.append(write_calibration(report, out))
    written.append(write_descriptors(report, out))
    written.append(write_rankings(report, out))
    return written


def write_bland_altman(entry: BlandAltmanEntry, out: Path, svg: bool = False) -> list[Path]:
    path = Path(out) / f"bland_altman_{entry.key}.csv"
    if entry.summary is None:
        return [_write_csv(path, BLAND_ALTMAN_COLUMNS, [])]
    return emit_plot_data(entry.summary, path, svg=svg)


def write_calibration(report: AnalysisReport, out: Path) -> Path:
    rows = [[c.biomarker, c.n, c.slope, c.intercept, c.rmse_before, c.rmse_after, c.r, c.p, c.error]
            for c in report.calibration]
    return _write_csv(Path(out) / "calibration.csv", CALIBRATION_COLUMNS, rows)


def write_descriptors(report: AnalysisReport, out: Path) -> Path:
    rows = [[d.patient_id, d.session, d.action, d.biomarker, d.impulse, d.smoothness]
            for d in report.descriptors]
    return _write_csv(Path(out) / "descriptors.csv", DESCRIPTOR_COLUMNS, rows)


def write_rankings(report: AnalysisReport, out: Path) -> Path:
    rows = []
    for r in report.rankings:
        if r.ranking is None:
            rows.append([r.patient_id, r.session, r.scope, None, None, None, r.error])
            continue
        for i, (name, score) in enumerate(r.ranking.features, start=1):
            rows.append([r.patient_id, r.session, r.scope, i, name, score, None])
    return _write_csv(Path(out) / "rankings.csv", RANKING_COLUMNS, rows)
