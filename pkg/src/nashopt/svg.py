"""Minimal self-contained SVG emission for trajectory figures.

No plotting library and no external process: documents are assembled as
strings from a handful of shape primitives. Enough for the two panels the
experiment runner needs (loss-space and, for 2-D problems, parameter-space
trajectories).
"""

import numpy as np

__all__ = ["SvgDocument", "trajectory_figure"]

# progress gradient endpoints (early -> late)
_COLOR_EARLY = (255, 140, 0)
_COLOR_LATE = (120, 40, 200)


def _fmt(x):
    return f"{float(x):.2f}"


def _lerp_color(t):
    r = [int(round(a + (b - a) * t)) for a, b in zip(_COLOR_EARLY, _COLOR_LATE)]
    return f"rgb({r[0]},{r[1]},{r[2]})"


class SvgDocument:
    """An SVG file under construction; elements append in paint order."""

    def __init__(self, width, height):
        self.width = width
        self.height = height
        self._parts = []

    def rect(self, x, y, w, h, stroke="black", fill="none"):
        self._parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'stroke="{stroke}" fill="{fill}"/>'
        )

    def polyline(self, points, stroke, width=1.0):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self._parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"/>'
        )

    def circle(self, x, y, r, fill="black", stroke="none"):
        self._parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start"):
        self._parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>'
        )

    def open_group(self, cls):
        self._parts.append(f'<g class="{cls}">')

    def close_group(self):
        self._parts.append("</g>")

    def tostring(self):
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">'
        )
        return head + "\n" + "\n".join(self._parts) + "\n</svg>\n"


class _Panel:
    """Maps data coordinates into a screen-space rectangle (y flipped)."""

    def __init__(self, x0, y0, w, h, xy):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        if len(xy):
            arr = np.asarray(xy, dtype=np.float64)
            lo = arr.min(axis=0)
            hi = arr.max(axis=0)
        else:
            lo = np.zeros(2)
            hi = np.ones(2)
        pad = np.maximum(0.05 * (hi - lo), 1e-9)
        self.lo = lo - pad
        self.hi = hi + pad

    def to_screen(self, p):
        f = (np.asarray(p, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        return (self.x0 + f[0] * self.w, self.y0 + (1.0 - f[1]) * self.h)


def _draw_panel(doc, panel, title, series, segments=64):
    """One framed panel: each series becomes a progress-colored trajectory
    group plus a marker at its starting point."""
    doc.open_group(f"panel-{title.split()[0]}")
    doc.rect(panel.x0, panel.y0, panel.w, panel.h)
    doc.text(panel.x0 + panel.w / 2.0, panel.y0 - 8.0, title, anchor="middle")
    doc.text(panel.x0, panel.y0 + panel.h + 14.0,
             f"[{panel.lo[0]:.3g}, {panel.hi[0]:.3g}]", size=9)
    doc.text(panel.x0 - 4.0, panel.y0 + 10.0,
             f"[{panel.lo[1]:.3g}, {panel.hi[1]:.3g}]", size=9, anchor="end")
    for pts in series:
        doc.open_group("trajectory")
        n = len(pts)
        if n >= 2:
            cuts = np.unique(np.linspace(0, n - 1, segments + 1).astype(int))
            for a, b in zip(cuts[:-1], cuts[1:]):
                frac = a / max(n - 2, 1)
                doc.polyline(
                    [panel.to_screen(p) for p in pts[a : b + 1]],
                    stroke=_lerp_color(frac),
                )
        if n >= 1:
            x, y = panel.to_screen(pts[0])
            doc.circle(x, y, 4.0, fill="black")
            x, y = panel.to_screen(pts[-1])
            doc.circle(x, y, 3.0, fill=_lerp_color(1.0))
        doc.close_group()
    doc.close_group()


def trajectory_figure(loss_paths, theta_paths, title=""):
    """Figure with a loss-space panel (first two losses) and, when the
    parameter dimension is 2, a parameter-space panel.

    ``loss_paths`` and ``theta_paths`` are parallel lists of (T_r, K) and
    (T_r, d) arrays, one per run; runs may be empty (markers only).
    Returns the SVG document as a string.
    """
    loss_paths = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in loss_paths]
    theta_paths = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in theta_paths]
    dims = {p.shape[1] for p in theta_paths if p.size}
    with_theta_panel = dims == {2}

    panel_w, panel_h, margin, gap = 360, 300, 50, 60
    n_panels = 2 if with_theta_panel else 1
    doc = SvgDocument(margin * 2 + panel_w * n_panels + gap * (n_panels - 1),
                      margin * 2 + panel_h)
    if title:
        doc.text(margin, 20.0, title, size=13)

    loss_xy = np.concatenate(
        [p[:, :2] for p in loss_paths if p.size] or [np.zeros((0, 2))]
    )
    left = _Panel(margin, margin, panel_w, panel_h, loss_xy)
    _draw_panel(doc, left, "loss space", [p[:, :2] for p in loss_paths if p.size])

    if with_theta_panel:
        theta_xy = np.concatenate([p for p in theta_paths if p.size])
        right = _Panel(margin + panel_w + gap, margin, panel_w, panel_h, theta_xy)
        _draw_panel(doc, right, "parameter space", [p for p in theta_paths if p.size])
    return doc.tostring()
