"""Figure data and artifact writers: quantile curves, interval plots,
CSV/JSON tables, and a dependency-free SVG renderer.

All outputs are deterministic: fixed float formatting, sorted JSON keys,
no timestamps, and stable iteration order, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataprep import label_variables
from .dsinfer import DEFAULT_QUANTILE_LEVELS, EffectProfile, order_statistic_band
from .errors import ConfigurationError, DataError


@dataclass
class QuantileCurve:
    """Sorted effect quantiles with rank-carried simultaneous bands."""

    levels: np.ndarray
    effect: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    share_significant_negative: float
    share_significant_positive: float

    def rows(self) -> list:
        return [
            {
                "level": float(self.levels[i]),
                "effect": float(self.effect[i]),
                "lower": float(self.lower[i]),
                "upper": float(self.upper[i]),
            }
            for i in range(self.levels.shape[0])
        ]


def quantile_curve(profile: EffectProfile, grid=None) -> QuantileCurve:
    """Quantiles of the per-individual effects with their bands.

    The band at each grid level belongs to the individual holding that
    rank (band of order statistics), which makes the band curves step
    functions of actual realized intervals rather than smoothed envelopes.
    """
    if profile.effects.shape[0] == 0:
        raise DataError("effect profile is empty")
    levels = DEFAULT_QUANTILE_LEVELS.copy() if grid is None else np.asarray(grid, dtype=np.float64)
    eff, lo, up = order_statistic_band(profile.effects, profile.band_halfwidth, levels)
    upper_all = profile.effects + profile.band_halfwidth
    lower_all = profile.effects - profile.band_halfwidth
    return QuantileCurve(
        levels=levels,
        effect=eff,
        lower=lo,
        upper=up,
        share_significant_negative=float(np.mean(upper_all < 0.0)),
        share_significant_positive=float(np.mean(lower_all > 0.0)),
    )


def effect_interval_plot(table: list, group_by: str) -> list:
    """Rows of a marginal-effects table for one source variable.

    Selects the targets whose moderator label derives from ``group_by``
    (all dummy levels of a categorical, or the single row of a continuous
    variable) and orders them ascending by point estimate.  Raises when the
    variable matches nothing, listing what is available.
    """
    available = set()
    rows = []
    for row in table:
        label = row["label"]
        base = label[2:] if label.startswith("d*") else label
        variables = label_variables(base)
        available.update(variables)
        if variables == (group_by,):
            level = base.split("=", 1)[1] if "=" in base else base
            rows.append({
                "group": group_by,
                "level": level,
                "estimate": row["estimate"],
                "sim_lower": row["sim_lower"],
                "sim_upper": row["sim_upper"],
                "significant": row["significant"],
            })
    if not rows:
        raise ConfigurationError(
            f"no targets derive from variable {group_by!r}; available: "
            f"{sorted(available)}"
        )
    rows.sort(key=lambda r: (r["estimate"], r["level"]))
    return rows


# ---------------------------------------------------------------------------
# Tabular writers.  Floats go through repr() so reading the file back with
# float() reproduces the exact binary value.


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows: list, fieldnames=None) -> None:
    """RFC-4180 CSV (UTF-8, CRLF, '.' decimal) from a list of dicts."""
    if not rows and not fieldnames:
        raise DataError("cannot write an empty table without fieldnames")
    names = list(fieldnames) if fieldnames else list(rows[0].keys())
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(names)
            for row in rows:
                writer.writerow([_cell(row.get(name)) for name in names])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def read_csv_rows(path) -> list:
    """Read a CSV written by :func:`write_csv` back into string dicts."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload) -> None:
    """Sorted-key, ASCII-safe JSON; floats round-trip exactly."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# SVG rendering.  Hand-rolled on purpose: no plotting dependency, and byte
# determinism is trivial when every coordinate is formatted the same way.


@dataclass(frozen=True)
class PlotStyle:
    """Size, labels, and colors of a rendered figure."""

    width: int = 720
    height: int = 480
    margin_left: int = 64
    margin_right: int = 16
    margin_top: int = 32
    margin_bottom: int = 48
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    line_color: str = "#1a1a1a"
    band_color: str = "#bbbbbb"
    point_color: str = "#1a1a1a"
    zero_color: str = "#999999"
    font: str = "sans-serif"


def _f(x: float) -> str:
    # fixed two-decimal pixel coordinates keep files byte-stable
    return f"{x:.2f}"


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list:
    if not np.isfinite(lo) or not np.isfinite(hi):
        return [0.0]
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else float(t))
        t += step
    return ticks


def _tick_label(t: float) -> str:
    return f"{t:.6g}"


class _Canvas:
    def __init__(self, style: PlotStyle):
        self.s = style
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" '
            f'height="{style.height}" viewBox="0 0 {style.width} {style.height}">',
            f'<rect x="0" y="0" width="{style.width}" height="{style.height}" fill="#ffffff"/>',
        ]
        self.x0 = style.margin_left
        self.x1 = style.width - style.margin_right
        self.y0 = style.margin_top
        self.y1 = style.height - style.margin_bottom

    def text(self, x, y, s, size=12, anchor="middle", rotate=None):
        transform = f' transform="rotate(-90 {_f(x)} {_f(y)})"' if rotate else ""
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-family="{self.s.font}" '
            f'font-size="{size}" text-anchor="{anchor}"{transform}>{_esc(s)}</text>'
        )

    def line(self, xa, ya, xb, yb, color, width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_f(xa)}" y1="{_f(ya)}" x2="{_f(xb)}" y2="{_f(yb)}" '
            f'stroke="{color}" stroke-width="{width}"{d}/>'
        )

    def polyline(self, pts, color, width=1.5):
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>'
        )

    def polygon(self, pts, fill, opacity=0.5):
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(f'<polygon points="{coords}" fill="{fill}" fill-opacity="{opacity}"/>')

    def circle(self, x, y, r, color):
        self.parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{r}" fill="{color}"/>')

    def frame_and_title(self):
        s = self.s
        self.line(self.x0, self.y1, self.x1, self.y1, s.line_color)
        self.line(self.x0, self.y0, self.x0, self.y1, s.line_color)
        if s.title:
            self.text((self.x0 + self.x1) / 2, s.margin_top - 12, s.title, size=14)
        if s.x_label:
            self.text((self.x0 + self.x1) / 2, s.height - 10, s.x_label)
        if s.y_label:
            self.text(16, (self.y0 + self.y1) / 2, s.y_label, rotate=True)

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _esc(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _scales(lo_x, hi_x, lo_y, hi_y, canvas):
    if hi_x == lo_x:
        lo_x, hi_x = lo_x - 0.5, hi_x + 0.5
    if hi_y == lo_y:
        lo_y, hi_y = lo_y - 0.5, hi_y + 0.5

    def sx(v):
        return canvas.x0 + (v - lo_x) / (hi_x - lo_x) * (canvas.x1 - canvas.x0)

    def sy(v):
        return canvas.y1 - (v - lo_y) / (hi_y - lo_y) * (canvas.y1 - canvas.y0)

    return sx, sy, (lo_x, hi_x), (lo_y, hi_y)


def render_quantile_svg(curve: QuantileCurve, style: PlotStyle | None = None) -> str:
    """Quantile curve with its simultaneous band as a shaded polygon."""
    style = style or PlotStyle(x_label="quantile level", y_label="effect (log scale)")
    c = _Canvas(style)
    n = curve.levels.shape[0]
    if n == 0:
        c.frame_and_title()
        return c.render()

    ymin = float(min(curve.lower.min(), 0.0))
    ymax = float(max(curve.upper.max(), 0.0))
    pad = 0.05 * (ymax - ymin or 1.0)
    sx, sy, xr, yr = _scales(float(curve.levels[0]), float(curve.levels[-1]),
                             ymin - pad, ymax + pad, c)

    band = [(sx(curve.levels[i]), sy(curve.upper[i])) for i in range(n)]
    band += [(sx(curve.levels[i]), sy(curve.lower[i])) for i in range(n - 1, -1, -1)]
    c.polygon(band, style.band_color)
    c.line(sx(xr[0]), sy(0.0), sx(xr[1]), sy(0.0), style.zero_color, dash="4,3")
    c.polyline([(sx(curve.levels[i]), sy(curve.effect[i])) for i in range(n)],
               style.line_color)

    for t in _nice_ticks(*xr):
        c.line(sx(t), c.y1, sx(t), c.y1 + 4, style.line_color)
        c.text(sx(t), c.y1 + 16, _tick_label(t), size=10)
    for t in _nice_ticks(*yr):
        c.line(c.x0 - 4, sy(t), c.x0, sy(t), style.line_color)
        c.text(c.x0 - 8, sy(t) + 3, _tick_label(t), size=10, anchor="end")
    c.frame_and_title()
    return c.render()


def render_interval_svg(rows: list, style: PlotStyle | None = None) -> str:
    """Horizontal point-and-interval chart, one row per level."""
    style = style or PlotStyle(x_label="effect (log scale)")
    c = _Canvas(style)
    if not rows:
        c.frame_and_title()
        return c.render()

    xmin = min(min(r["sim_lower"] for r in rows), 0.0)
    xmax = max(max(r["sim_upper"] for r in rows), 0.0)
    pad = 0.05 * (xmax - xmin or 1.0)
    sx, sy, xr, _ = _scales(xmin - pad, xmax + pad, 0.0, 1.0, c)
    c.line(sx(0.0), c.y0, sx(0.0), c.y1, style.zero_color, dash="4,3")

    m = len(rows)
    for i, row in enumerate(rows):
        ypos = c.y0 + (i + 0.5) / m * (c.y1 - c.y0)
        c.line(sx(row["sim_lower"]), ypos, sx(row["sim_upper"]), ypos,
               style.line_color, width=1.5)
        for endpoint in (row["sim_lower"], row["sim_upper"]):
            c.line(sx(endpoint), ypos - 4, sx(endpoint), ypos + 4, style.line_color)
        c.circle(sx(row["estimate"]), ypos, 3, style.point_color)
        c.text(c.x0 - 8, ypos + 3, row["level"], size=10, anchor="end")

    for t in _nice_ticks(*xr):
        c.line(sx(t), c.y1, sx(t), c.y1 + 4, style.line_color)
        c.text(sx(t), c.y1 + 16, _tick_label(t), size=10)
    c.frame_and_title()
    return c.render()


def render_svg(plot_data, style: PlotStyle | None = None) -> str:
    """Render either a QuantileCurve or interval-plot rows to SVG text."""
    if isinstance(plot_data, QuantileCurve):
        return render_quantile_svg(plot_data, style)
    if isinstance(plot_data, list):
        return render_interval_svg(plot_data, style)
    raise ConfigurationError(f"cannot render {type(plot_data).__name__} as a figure")


def save_svg(text: str, path) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
