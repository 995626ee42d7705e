"""Deterministic report emission: records CSV, summary JSON, SVG line chart.

The SVG is hand-rendered so identical records always produce identical
bytes; reals are formatted with 17 significant digits in CSV/JSON and 6 in
chart geometry.
"""
from __future__ import annotations

import json
from pathlib import Path

from .harness import EvalRecord

CSV_HEADER = "target,task,m,method,n,kl_plus,kl_minus,wall_ms"

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f",
)


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def records_to_csv(records: list[EvalRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.target},{r.task},{r.m},{r.method},{r.n},"
            f"{_g17(r.kl_plus)},{_g17(r.kl_minus)},{_g17(r.wall_ms)}"
        )
    return "\n".join(lines) + "\n"


def summarize(records: list[EvalRecord]) -> dict:
    """Per (method, level) means and standard deviations of both metrics."""
    groups: dict[tuple[str, int], list[EvalRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.level), []).append(r)
    out: dict[str, dict] = {}
    for (method, level), recs in sorted(groups.items()):
        kp = [r.kl_plus for r in recs]
        km = [r.kl_minus for r in recs]
        cnt = len(recs)
        mean_p = sum(kp) / cnt
        mean_m = sum(km) / cnt
        std_p = (sum((v - mean_p) ** 2 for v in kp) / cnt) ** 0.5
        std_m = (sum((v - mean_m) ** 2 for v in km) / cnt) ** 0.5
        out.setdefault(method, {})[str(level)] = {
            "count": cnt,
            "mean_kl_plus": float(mean_p),
            "std_kl_plus": float(std_p),
            "mean_kl_minus": float(mean_m),
            "std_kl_minus": float(std_m),
        }
    return out


def _render_json(obj) -> str:
    if isinstance(obj, float):
        return _g17(obj)
    if isinstance(obj, dict):
        inner = ",".join(f"{json.dumps(str(k))}:{_render_json(v)}" for k, v in sorted(obj.items()))
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_render_json(v) for v in obj) + "]"
    return json.dumps(obj)


def summary_to_json(summary: dict, meta: dict | None = None) -> str:
    doc = {"per_method_level": summary}
    if meta:
        doc["meta"] = meta
    return _render_json(doc) + "\n"


def _fmt(x: float) -> str:
    return format(x, ".6g")


def render_line_chart(
    series: list[tuple[str, list[tuple[float, float]]]],
    title: str,
    x_label: str,
    y_label: str,
    width: int = 800,
    height: int = 500,
) -> str:
    """One polyline per named series over a shared, padded axis box."""
    margin_l, margin_r, margin_t, margin_b = 70, 160, 40, 50
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    x_min, x_max = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_min, y_max = 0.0, (max(ys) if ys else 1.0)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max <= y_min:
        y_max = y_min + 1.0
    y_max *= 1.05

    def px(x: float) -> float:
        return margin_l + (x - x_min) / (x_max - x_min) * plot_w

    def py(y: float) -> float:
        return margin_t + plot_h - (y - y_min) / (y_max - y_min) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    for i in range(5):
        y_val = y_min + (y_max - y_min) * i / 4
        yp = py(y_val)
        parts.append(
            f'<line x1="{margin_l}" y1="{_fmt(yp)}" x2="{margin_l + plot_w}" y2="{_fmt(yp)}" '
            f'stroke="#ddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin_l - 8}" y="{_fmt(yp + 4)}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{format(y_val, ".3g")}</text>'
        )
    x_ticks = sorted({x for x in xs}) or [0.0, 1.0]
    for x_val in x_ticks:
        xp = px(x_val)
        parts.append(
            f'<line x1="{_fmt(xp)}" y1="{margin_t + plot_h}" x2="{_fmt(xp)}" '
            f'y2="{margin_t + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_fmt(xp)}" y="{margin_t + plot_h + 20}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{format(x_val, ".3g")}</text>'
        )
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.0f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{x_label}</text>'
    )
    parts.append(
        f'<text x="18" y="{margin_t + plot_h / 2:.0f}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 18 {margin_t + plot_h / 2:.0f})">'
        f"{y_label}</text>"
    )
    for i, (name, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        if pts:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
            for x, y in pts:
                parts.append(
                    f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>'
                )
        ly = margin_t + 16 + 18 * i
        lx = margin_l + plot_w + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 28}" y="{ly}" font-size="12" font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def chart_from_summary(summary: dict, metric: str = "mean_kl_plus") -> str:
    series = []
    for method in sorted(summary):
        pts = [
            (float(level), summary[method][level][metric])
            for level in sorted(summary[method], key=int)
        ]
        series.append((method, pts))
    return render_line_chart(
        series,
        title="Mean KL+ by explanation complexity level",
        x_label="complexity level",
        y_label="mean KL divergence",
    )


def emit_report(
    records: list[EvalRecord],
    out_dir: str | Path,
    meta: dict | None = None,
    timings: list[EvalRecord] | None = None,
) -> dict[str, Path]:
    """Write records.csv, summary.json, and chart.svg (plus an optional
    non-contractual timings.csv sidecar). Returns the emitted paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out / "records.csv",
        "summary": out / "summary.json",
        "chart": out / "chart.svg",
    }
    paths["records"].write_text(records_to_csv(records), encoding="utf-8")
    summary = summarize(records)
    paths["summary"].write_text(summary_to_json(summary, meta), encoding="utf-8")
    paths["chart"].write_text(chart_from_summary(summary) if summary else _empty_chart(), encoding="utf-8")
    if timings is not None:
        paths["timings"] = out / "timings.csv"
        paths["timings"].write_text(records_to_csv(timings), encoding="utf-8")
    return paths


def _empty_chart() -> str:
    return render_line_chart([], title="Mean KL+ by explanation complexity level",
                             x_label="complexity level", y_label="mean KL divergence")
