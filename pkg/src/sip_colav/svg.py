"""Minimal SVG emission for trajectory and benchmark plots.

World coordinates are mapped y-up into SVG's y-down pixel frame once, at
add time.  Only line/polygon/circle/rect/text primitives are used; no
plotting dependency.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


class Canvas:
    """Fixed-scale world-to-pixel SVG canvas (y up in world frame)."""

    def __init__(self, x_range, y_range, width: float = 640.0,
                 margin: float = 20.0):
        self.x0, self.x1 = float(x_range[0]), float(x_range[1])
        self.y0, self.y1 = float(y_range[0]), float(y_range[1])
        span_x = max(self.x1 - self.x0, 1e-9)
        span_y = max(self.y1 - self.y0, 1e-9)
        self.scale = (width - 2 * margin) / span_x
        self.margin = margin
        self.width = width
        self.height = span_y * self.scale + 2 * margin
        self._body: list[str] = []

    def to_px(self, p) -> tuple[float, float]:
        x = self.margin + (float(p[0]) - self.x0) * self.scale
        y = self.height - self.margin - (float(p[1]) - self.y0) * self.scale
        return x, y

    def _pts(self, pts) -> str:
        return " ".join(f"{_fmt(x)},{_fmt(y)}"
                        for x, y in (self.to_px(p) for p in pts))

    def polyline(self, pts, stroke="#1f77b4", width=1.5, dash=None,
                 opacity=1.0) -> None:
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self._body.append(
            f'<polyline points="{self._pts(pts)}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}" opacity="{opacity}"{d}/>')

    def polygon(self, pts, fill="none", stroke="#333", width=1.0,
                opacity=1.0) -> None:
        self._body.append(
            f'<polygon points="{self._pts(pts)}" fill="{fill}" '
            f'stroke="{stroke}" stroke-width="{width}" opacity="{opacity}"/>')

    def circle(self, center, radius_world: float, fill="#d62728",
               stroke="none", opacity=1.0) -> None:
        cx, cy = self.to_px(center)
        r = radius_world * self.scale
        self._body.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r)}" '
            f'fill="{fill}" stroke="{stroke}" opacity="{opacity}"/>')

    def dot_px(self, center, radius_px: float = 1.0, fill="#555") -> None:
        cx, cy = self.to_px(center)
        self._body.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{radius_px}" '
            f'fill="{fill}"/>')

    def text(self, p, s: str, size: float = 12.0, fill="#222",
             anchor="start") -> None:
        x, y = self.to_px(p)
        self._body.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'fill="{fill}" text-anchor="{anchor}" '
            f'font-family="sans-serif">{s}</text>')

    def text_px(self, x: float, y: float, s: str, size: float = 12.0,
                fill="#222", anchor="start") -> None:
        self._body.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'fill="{fill}" text-anchor="{anchor}" '
            f'font-family="sans-serif">{s}</text>')

    def save(self, path) -> None:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{_fmt(self.width)}" height="{_fmt(self.height)}" '
                f'viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">')
        bg = (f'<rect x="0" y="0" width="{_fmt(self.width)}" '
              f'height="{_fmt(self.height)}" fill="#ffffff"/>')
        Path(path).write_text("\n".join([head, bg, *self._body, "</svg>"]) + "\n")


def _world_footprint(poly, pose) -> np.ndarray:
    return np.array([pose.to_world(v) for v in poly.vertices])


def plot_trajectory(path, field, poly, xs, *, every: int = 2,
                    reference=None) -> None:
    """Map points, footprint sweep, and the trajectory's center path."""
    pts = field.points
    lo = np.minimum(pts.min(axis=0), xs[:, :2].min(axis=0)) - 0.5
    hi = np.maximum(pts.max(axis=0), xs[:, :2].max(axis=0)) + 0.5
    cv = Canvas((lo[0], hi[0]), (lo[1], hi[1]))
    for p in pts:
        cv.dot_px(p, 1.0, fill="#444")
    from .geometry import Pose2
    for k in range(0, xs.shape[0], every):
        fp = _world_footprint(poly, Pose2.from_state(xs[k]))
        cv.polygon(fp, stroke="#2ca02c", width=0.8, opacity=0.5)
    if reference is not None:
        cv.polyline(np.asarray(reference)[:, :2], stroke="#999", width=1.0,
                    dash="4,3")
    cv.polyline(xs[:, :2], stroke="#d62728", width=1.8)
    cv.save(path)


class Chart:
    """Plain 2-D line/bar chart in pixel space with axis labels."""

    def __init__(self, width=560.0, height=360.0, margin=52.0):
        self.w, self.h, self.m = width, height, margin
        self._series: list = []
        self._bars: list = []
        self.title = ""
        self.x_label = ""
        self.y_label = ""

    def line(self, xs, ys, color="#1f77b4", label="") -> None:
        self._series.append((np.asarray(xs, float), np.asarray(ys, float),
                             color, label))

    def bars(self, xs, ys, width, color="#1f77b4", label="") -> None:
        self._bars.append((np.asarray(xs, float), np.asarray(ys, float),
                           float(width), color, label))

    def _extent(self):
        xs = [s[0] for s in self._series] + \
             [np.concatenate([b[0] - b[2] / 2, b[0] + b[2] / 2])
              for b in self._bars]
        ys = [s[1] for s in self._series] + [b[1] for b in self._bars]
        allx = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        ally = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        x0, x1 = float(allx.min()), float(allx.max())
        y0, y1 = min(0.0, float(ally.min())), float(ally.max())
        if x1 - x0 < 1e-12:
            x1 = x0 + 1.0
        if y1 - y0 < 1e-12:
            y1 = y0 + 1.0
        return x0, x1, y0, y1

    def save(self, path) -> None:
        x0, x1, y0, y1 = self._extent()
        sx = (self.w - 2 * self.m) / (x1 - x0)
        sy = (self.h - 2 * self.m) / (y1 - y0)

        def px(x, y):
            return (self.m + (x - x0) * sx, self.h - self.m - (y - y0) * sy)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" '
               f'height="{self.h}" viewBox="0 0 {self.w} {self.h}">',
               f'<rect width="{self.w}" height="{self.h}" fill="#ffffff"/>']
        ax_c = "#888"
        ox, oy = px(x0, y0)
        cx, _ = px(x1, y0)
        _, cy = px(x0, y1)
        out.append(f'<line x1="{_fmt(ox)}" y1="{_fmt(oy)}" x2="{_fmt(cx)}" '
                   f'y2="{_fmt(oy)}" stroke="{ax_c}"/>')
        out.append(f'<line x1="{_fmt(ox)}" y1="{_fmt(oy)}" x2="{_fmt(ox)}" '
                   f'y2="{_fmt(cy)}" stroke="{ax_c}"/>')
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = x0 + frac * (x1 - x0)
            yv = y0 + frac * (y1 - y0)
            tx, ty = px(xv, y0)
            out.append(f'<text x="{_fmt(tx)}" y="{_fmt(ty + 16)}" '
                       f'font-size="10" fill="#555" text-anchor="middle" '
                       f'font-family="sans-serif">{xv:.3g}</text>')
            tx, ty = px(x0, yv)
            out.append(f'<text x="{_fmt(tx - 6)}" y="{_fmt(ty + 3)}" '
                       f'font-size="10" fill="#555" text-anchor="end" '
                       f'font-family="sans-serif">{yv:.3g}</text>')
        for bx, by, bw, color, _label in self._bars:
            for xi, yi in zip(bx, by):
                X0, Y0 = px(xi - bw / 2, yi)
                X1, Y1 = px(xi + bw / 2, y0)
                out.append(f'<rect x="{_fmt(X0)}" y="{_fmt(Y0)}" '
                           f'width="{_fmt(X1 - X0)}" '
                           f'height="{_fmt(Y1 - Y0)}" fill="{color}" '
                           f'opacity="0.8"/>')
        for xs_, ys_, color, _label in self._series:
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}"
                           for a, b in (px(x, y) for x, y in zip(xs_, ys_)))
            out.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.6"/>')
        if self.title:
            out.append(f'<text x="{self.w / 2}" y="18" font-size="13" '
                       f'fill="#111" text-anchor="middle" '
                       f'font-family="sans-serif">{self.title}</text>')
        if self.x_label:
            out.append(f'<text x="{self.w / 2}" y="{self.h - 8}" '
                       f'font-size="11" fill="#333" text-anchor="middle" '
                       f'font-family="sans-serif">{self.x_label}</text>')
        if self.y_label:
            out.append(f'<text x="14" y="{self.h / 2}" font-size="11" '
                       f'fill="#333" text-anchor="middle" '
                       f'font-family="sans-serif" '
                       f'transform="rotate(-90 14 {self.h / 2})">'
                       f'{self.y_label}</text>')
        legend_y = 30.0
        for _, _, color, label in self._series:
            if not label:
                continue
            out.append(f'<line x1="{self.w - 150}" y1="{legend_y}" '
                       f'x2="{self.w - 122}" y2="{legend_y}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{self.w - 116}" y="{legend_y + 4}" '
                       f'font-size="11" fill="#333" '
                       f'font-family="sans-serif">{label}</text>')
            legend_y += 16
        out.append("</svg>")
        Path(path).write_text("\n".join(out) + "\n")
