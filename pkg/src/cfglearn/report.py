"""Render experiment results: aligned text table, machine-readable CSV, and
figures written next to the delimited output."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ParseError
from .pipeline import (
    ExperimentResult,
    SeriesAggregate,
    VariantSeries,
    aggregate_series,
)

VARIANT_HEADINGS = {"pao": "PaO", "pai": "PaI"}


@dataclass(frozen=True)
class SummaryData:
    """The per-run columns of one experiment, one series per variant."""

    series: tuple[VariantSeries, ...]

    @property
    def runs(self) -> int:
        return len(self.series[0].im)

    def aggregates(self) -> tuple[SeriesAggregate, ...]:
        return tuple(aggregate_series(s) for s in self.series)


def summary_from_result(result: ExperimentResult) -> SummaryData:
    variants = result.config.variants
    return SummaryData(tuple(result.series(v) for v in variants))


def _fmt_count(count: int, attempts: int) -> str:
    return f"{count}/{attempts:02d}"


def _fmt_ratio(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def format_summary_table(data: SummaryData) -> str:
    """Aligned table with run, im, nw, pd and CPU columns, a sum row, a mean
    row (counts pooled over all attempts) and a population-stdev row."""
    variants = [s.variant for s in data.series]
    heads = [VARIANT_HEADINGS.get(v, v) for v in variants]
    aggs = data.aggregates()

    columns: list[list[str]] = [["run"] + [str(i + 1) for i in range(data.runs)] + ["sum", "mean", "stdev"]]
    groups = ("im", "nw", "pd", "CPU")
    for gi, group in enumerate(groups):
        for vi, series in enumerate(data.series):
            agg = aggs[vi]
            head = f"{group} {heads[vi]}" if len(variants) > 1 else group
            col = [head]
            if group == "im":
                col += [_fmt_count(c, a) for c, a in zip(series.im, series.attempts)]
                col += [
                    _fmt_count(agg.im_total, agg.attempts_total),
                    _fmt_ratio(agg.im_mean),
                    _fmt_ratio(agg.im_stdev),
                ]
            elif group == "nw":
                col += [_fmt_count(c, a) for c, a in zip(series.nw, series.attempts)]
                col += [
                    _fmt_count(agg.nw_total, agg.attempts_total),
                    _fmt_ratio(agg.nw_mean),
                    _fmt_ratio(agg.nw_stdev),
                ]
            elif group == "pd":
                col += [f"{v:.2f}" for v in series.pd]
                col += [f"{agg.pd_sum:.2f}", _fmt_ratio(agg.pd_mean), _fmt_ratio(agg.pd_stdev)]
            else:
                col += [f"{v:.2f}" for v in series.cpu]
                col += [f"{agg.cpu_sum:.2f}", _fmt_ratio(agg.cpu_mean), _fmt_ratio(agg.cpu_stdev)]
            columns.append(col)

    widths = [max(len(cell) for cell in col) for col in columns]
    lines = []
    for row_i in range(len(columns[0])):
        cells = [col[row_i].rjust(w) for col, w in zip(columns, widths)]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


SUMMARY_FIELDS = (
    "section",
    "run",
    "variant",
    "im_count",
    "attempts",
    "nw_count",
    "im_ratio",
    "nw_ratio",
    "pd",
    "cpu_seconds",
)


def write_summary_csv(path: str | Path, data: SummaryData) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        for series in data.series:
            for i in range(len(series.im)):
                att = series.attempts[i]
                writer.writerow(
                    [
                        "run",
                        i + 1,
                        series.variant,
                        series.im[i],
                        att,
                        series.nw[i],
                        repr(series.im[i] / att) if att else "",
                        repr(series.nw[i] / att) if att else "",
                        repr(series.pd[i]),
                        repr(series.cpu[i]),
                    ]
                )
        for series, agg in zip(data.series, data.aggregates()):
            writer.writerow(
                [
                    "sum",
                    "",
                    series.variant,
                    agg.im_total,
                    agg.attempts_total,
                    agg.nw_total,
                    "",
                    "",
                    repr(agg.pd_sum),
                    repr(agg.cpu_sum),
                ]
            )
            writer.writerow(
                ["mean", "", series.variant, "", "", "",
                 repr(agg.im_mean), repr(agg.nw_mean), repr(agg.pd_mean), repr(agg.cpu_mean)]
            )
            writer.writerow(
                ["stdev", "", series.variant, "", "", "",
                 "" if agg.im_stdev is None else repr(agg.im_stdev),
                 "" if agg.nw_stdev is None else repr(agg.nw_stdev),
                 "" if agg.pd_stdev is None else repr(agg.pd_stdev),
                 "" if agg.cpu_stdev is None else repr(agg.cpu_stdev)]
            )


def read_summary_csv(path: str | Path) -> SummaryData:
    """Rebuild the per-run series from summary.csv; aggregate rows are
    recomputed rather than trusted."""
    path = Path(path)
    per_variant: dict[str, dict[str, list]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SUMMARY_FIELDS:
            raise ParseError(f"{path}: unexpected summary header {reader.fieldnames}")
        for row in reader:
            if row["section"] != "run":
                continue
            v = row["variant"]
            cols = per_variant.setdefault(
                v, {"run": [], "im": [], "nw": [], "attempts": [], "pd": [], "cpu": []}
            )
            try:
                cols["run"].append(int(row["run"]))
                cols["im"].append(int(row["im_count"]))
                cols["nw"].append(int(row["nw_count"]))
                cols["attempts"].append(int(row["attempts"]))
                cols["pd"].append(float(row["pd"]))
                cols["cpu"].append(float(row["cpu_seconds"]))
            except (ValueError, KeyError) as exc:
                raise ParseError(f"{path}: malformed summary row: {exc}") from exc
    if not per_variant:
        raise ParseError(f"{path}: no per-run rows found")
    series = []
    for v, cols in per_variant.items():
        order = np.argsort(cols["run"])
        series.append(
            VariantSeries(
                variant=v,
                im=tuple(cols["im"][i] for i in order),
                nw=tuple(cols["nw"][i] for i in order),
                attempts=tuple(cols["attempts"][i] for i in order),
                pd=tuple(cols["pd"][i] for i in order),
                cpu=tuple(cols["cpu"][i] for i in order),
            )
        )
    return SummaryData(tuple(series))


def render_figures(data: SummaryData, out_dir: str | Path) -> list[Path]:
    """Write the per-run ratio, performance-difference and CPU figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = np.arange(1, data.runs + 1)
    written: list[Path] = []

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), sharey=True)
    for ax, metric, title in zip(axes, ("im", "nw"), ("improvements", "non-worsenings")):
        width = 0.8 / len(data.series)
        for vi, series in enumerate(data.series):
            counts = getattr(series, metric)
            ratios = [c / a if a else 0.0 for c, a in zip(counts, series.attempts)]
            ax.bar(
                runs + (vi - (len(data.series) - 1) / 2) * width,
                ratios,
                width=width,
                label=VARIANT_HEADINGS.get(series.variant, series.variant),
            )
        ax.set_xlabel("run")
        ax.set_ylim(0, 1.05)
        ax.set_title(f"{title} per run")
        ax.set_xticks(runs)
    axes[0].set_ylabel("ratio")
    axes[0].legend()
    fig.tight_layout()
    target = out_dir / "summary_ratios.png"
    fig.savefig(target, dpi=120)
    plt.close(fig)
    written.append(target)

    for metric, fname, ylabel in (
        ("pd", "summary_pd.png", "mean |score difference|"),
        ("cpu", "summary_cpu.png", "solve seconds"),
    ):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        for series in data.series:
            ax.plot(
                runs,
                getattr(series, metric),
                marker="o",
                label=VARIANT_HEADINGS.get(series.variant, series.variant),
            )
        ax.set_xlabel("run")
        ax.set_ylabel(ylabel)
        ax.set_xticks(runs)
        ax.legend()
        fig.tight_layout()
        target = out_dir / fname
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    return written


RECORD_FIELDS = (
    "instance_id",
    "config_id",
    "bits",
    "settings",
    "r",
    "objective",
    "sigma",
    "score",
    "default_score",
    "improved",
    "non_worsened",
    "pd",
    "solve_seconds",
)


def write_records_csv(path: str | Path, outcomes: Sequence) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for o in outcomes:
            writer.writerow(
                [
                    o.instance_id,
                    o.config_id,
                    "".join(str(b) for b in o.bits),
                    "|".join(o.settings),
                    repr(o.r),
                    repr(o.objective),
                    "" if o.sigma is None else repr(o.sigma),
                    repr(o.score),
                    repr(o.default_score),
                    int(o.improved),
                    int(o.non_worsened),
                    repr(o.pd),
                    repr(o.solve_seconds),
                ]
            )
