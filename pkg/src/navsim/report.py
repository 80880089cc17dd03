"""Report rendering: delimited output, an aligned text table, and figures.

The CSV carries full-precision values and round-trips exactly; the text
table mirrors the familiar navigation-results layout (absolute columns are
dashed on the Overall row). Figures are rendered to PNG files alongside.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Sequence

from .evaluation import PathReport

_CSV_COLUMNS = [
    "path",
    "trials",
    "SR",
    "SPL",
    "HFR",
    "BR",
    "abs_steps_mean",
    "abs_steps_sem",
    "norm_steps_mean",
    "norm_steps_sem",
    "abs_time_mean",
    "abs_time_sem",
    "norm_time_mean",
    "norm_time_sem",
]


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else format(value, ".12g")


def render_csv(reports: Sequence[PathReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for r in reports:
        writer.writerow(
            [
                r.path_id,
                r.trials,
                _fmt(r.sr),
                _fmt(r.spl),
                _fmt(r.hfr),
                _fmt(r.br),
                _fmt(r.abs_steps[0] if r.abs_steps else None),
                _fmt(r.abs_steps[1] if r.abs_steps else None),
                _fmt(r.norm_steps[0] if r.norm_steps else None),
                _fmt(r.norm_steps[1] if r.norm_steps else None),
                _fmt(r.abs_time[0] if r.abs_time else None),
                _fmt(r.abs_time[1] if r.abs_time else None),
                _fmt(r.norm_time[0] if r.norm_time else None),
                _fmt(r.norm_time[1] if r.norm_time else None),
            ]
        )
    return buf.getvalue()


def parse_csv(text: str) -> list[PathReport]:
    """Inverse of render_csv, for round-trip checks and downstream tooling."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != _CSV_COLUMNS:
        raise ValueError("unrecognized report header")

    def fv(s: str) -> Optional[float]:
        return None if s == "" else float(s)

    def pair(m: str, s: str) -> Optional[tuple[float, float]]:
        return None if m == "" else (float(m), float(s))

    out = []
    for row in rows[1:]:
        out.append(
            PathReport(
                path_id=row[0],
                trials=int(row[1]),
                sr=float(row[2]),
                spl=fv(row[3]),
                hfr=float(row[4]),
                br=float(row[5]),
                abs_steps=pair(row[6], row[7]),
                norm_steps=pair(row[8], row[9]),
                abs_time=pair(row[10], row[11]),
                norm_time=pair(row[12], row[13]),
            )
        )
    return out


def _pm(pair: Optional[tuple[float, float]], prec: int, dash: bool = False) -> str:
    if pair is None or dash:
        return "-"
    return f"{pair[0]:.{prec}f}±{pair[1]:.{prec}f}"


def render_text(reports: Sequence[PathReport]) -> str:
    """Aligned table in the navigation-results layout."""
    headers = [
        "Path",
        "SR",
        "SPL",
        "HFR",
        "BR",
        "Abs.Steps",
        "Norm.Steps",
        "Abs.Time",
        "Norm.Time",
    ]
    rows = []
    for r in reports:
        is_overall = r.path_id == "Overall"
        rows.append(
            [
                r.path_id,
                f"{r.sr:.2f}",
                "-" if r.spl is None else f"{r.spl:.3f}",
                f"{r.hfr:.2f}",
                f"{r.br:.2f}",
                _pm(r.abs_steps, 2, dash=is_overall),
                _pm(r.norm_steps, 3),
                _pm(r.abs_time, 2, dash=is_overall),
                _pm(r.norm_time, 3),
            ]
        )
    widths = [
        max([len(h)] + [len(row[i]) for row in rows]) for i, h in enumerate(headers)
    ]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        if row[0] == "Overall":
            lines.append("  ".join("-" * w for w in widths))
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    lines.append("")
    lines.append("Normalized columns: human baseline over agent, capped at 1; +/- is SEM.")
    lines.append("Overall row is the unweighted mean of per-path values.")
    lines.append("Hard-failure trials are excluded from step/time means.")
    return "\n".join(lines) + "\n"


def render_figures(reports: Sequence[PathReport], out_dir: str | Path) -> list[Path]:
    """Bar charts of the main metrics per path, written as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_path = [r for r in reports if r.path_id != "Overall"]
    if not per_path:
        return []
    labels = [r.path_id for r in per_path]

    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    panels = [
        ("Success Rate", [r.sr for r in per_path], None),
        ("SPL", [r.spl if r.spl is not None else 0.0 for r in per_path], None),
        ("Hard Failure Rate", [r.hfr for r in per_path], None),
        ("Bump Rate", [r.br for r in per_path], None),
    ]
    for ax, (title, values, _) in zip(axes.ravel(), panels):
        ax.bar(labels, values, color="#4878cf")
        ax.set_title(title)
        ax.set_ylim(0.0, 1.05)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle("Navigation metrics by path")
    fig.tight_layout()
    rates_png = out_dir / "metrics_rates.png"
    fig.savefig(rates_png, dpi=120)
    plt.close(fig)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    for ax, (title, pairs) in zip(
        axes,
        [
            ("Normalized steps", [r.norm_steps for r in per_path]),
            ("Normalized time", [r.norm_time for r in per_path]),
        ],
    ):
        means = [p[0] if p else 0.0 for p in pairs]
        sems = [p[1] if p else 0.0 for p in pairs]
        ax.bar(labels, means, yerr=sems, capsize=4, color="#6acc65")
        ax.axhline(1.0, color="k", lw=0.8, ls="--")
        ax.set_title(title)
        ax.set_ylim(0.0, 1.1)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle("Human-normalized performance")
    fig.tight_layout()
    norm_png = out_dir / "metrics_normalized.png"
    fig.savefig(norm_png, dpi=120)
    plt.close(fig)
    return [rates_png, norm_png]


def write_report(reports: Sequence[PathReport], out_dir: str | Path) -> dict[str, Path]:
    """Emit report.csv, report.txt, and the metric figures into out_dir."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "report.csv"
        txt_path = out_dir / "report.txt"
        csv_path.write_text(render_csv(reports))
        txt_path.write_text(render_text(reports))
        figures = render_figures(reports, out_dir / "figures") if reports else []
    except OSError as exc:
        raise OSError(f"failed writing report under {out_dir}: {exc}") from exc
    out = {"csv": csv_path, "txt": txt_path}
    for i, fig in enumerate(figures):
        out[f"figure{i}"] = fig
    return out
