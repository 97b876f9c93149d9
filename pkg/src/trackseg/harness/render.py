"""Event display: eta-phi scatter of hits with ellipse outlines, written
as a standalone SVG.  Output bytes are deterministic for fixed input."""

from __future__ import annotations

import math
from pathlib import Path

from ..ellipses import Ellipse5
from ..events import Event
from ..postprocess import TrackCandidate

WIDTH, HEIGHT = 900, 640
MARGIN = 60.0
NOISE_COLOR = "#999999"


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _particle_color(rank: int) -> str:
    hue = (rank * 137.508) % 360.0
    return f"hsl({hue:.1f},70%,45%)"


def _as_ellipses(items) -> list[Ellipse5]:
    out = []
    for item in items or []:
        if item is None:
            continue
        out.append(item.ellipse if isinstance(item, TrackCandidate) else item)
    return out


def render_event_svg(event: Event, ellipses, path) -> None:
    """Write the eta-phi view of an event: one marker per hit (colored by
    truth particle, noise gray) and one outline per ellipse or candidate.
    """
    shapes = _as_ellipses(ellipses)
    etas = [h.eta for h in event.hits] + [e.eta_c for e in shapes]
    if etas:
        lo, hi = min(etas), max(etas)
        pad = 0.1 * max(hi - lo, 0.5)
        eta_min, eta_max = lo - pad, hi + pad
    else:
        eta_min, eta_max = -3.0, 3.0
    phi_min, phi_max = 0.0, 2.0 * math.pi

    sx = (WIDTH - 2 * MARGIN) / (eta_max - eta_min)
    sy = (HEIGHT - 2 * MARGIN) / (phi_max - phi_min)

    def px(eta: float) -> float:
        return MARGIN + (eta - eta_min) * sx

    def py(phi: float) -> float:
        return HEIGHT - MARGIN - (phi - phi_min) * sy

    pid_order = sorted({h.particle_id for h in event.hits
                        if h.particle_id != 0})
    color = {pid: _particle_color(i) for i, pid in enumerate(pid_order)}

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{_fmt(MARGIN)}" y1="{_fmt(HEIGHT - MARGIN)}" '
        f'x2="{_fmt(WIDTH - MARGIN)}" y2="{_fmt(HEIGHT - MARGIN)}" '
        f'stroke="black"/>',
        f'<line x1="{_fmt(MARGIN)}" y1="{_fmt(MARGIN)}" '
        f'x2="{_fmt(MARGIN)}" y2="{_fmt(HEIGHT - MARGIN)}" stroke="black"/>',
        f'<text x="{_fmt(WIDTH / 2)}" y="{_fmt(HEIGHT - MARGIN / 4)}" '
        f'text-anchor="middle" font-size="16">eta</text>',
        f'<text x="{_fmt(MARGIN / 3)}" y="{_fmt(HEIGHT / 2)}" '
        f'text-anchor="middle" font-size="16" '
        f'transform="rotate(-90 {_fmt(MARGIN / 3)} {_fmt(HEIGHT / 2)})">'
        f'phi</text>',
        f'<text x="{_fmt(MARGIN)}" y="{_fmt(HEIGHT - MARGIN / 2)}" '
        f'text-anchor="middle" font-size="12">{_fmt(eta_min)}</text>',
        f'<text x="{_fmt(WIDTH - MARGIN)}" y="{_fmt(HEIGHT - MARGIN / 2)}" '
        f'text-anchor="middle" font-size="12">{_fmt(eta_max)}</text>',
        f'<text x="{_fmt(MARGIN / 2)}" y="{_fmt(HEIGHT - MARGIN)}" '
        f'text-anchor="middle" font-size="12">0</text>',
        f'<text x="{_fmt(MARGIN / 2)}" y="{_fmt(MARGIN)}" '
        f'text-anchor="middle" font-size="12">{_fmt(phi_max)}</text>',
    ]

    for h in event.hits:
        fill = color.get(h.particle_id, NOISE_COLOR)
        lines.append(f'<circle cx="{_fmt(px(h.eta))}" cy="{_fmt(py(h.phi))}" '
                     f'r="3" fill="{fill}"/>')

    for e in shapes:
        # the scale() flip makes screen y increase downward, so the data
        # space rotation angle carries through unnegated
        deg = math.degrees(e.theta)
        transform = (f'translate({_fmt(px(e.eta_c))} {_fmt(py(e.phi_c))}) '
                     f'scale({_fmt(sx)} {_fmt(-sy)}) rotate({_fmt(deg)})')
        lines.append(
            f'<g transform="{transform}"><ellipse rx="{_fmt(e.a)}" '
            f'ry="{_fmt(e.b)}" fill="none" stroke="#1f5fbf" '
            f'stroke-width="1.5" vector-effect="non-scaling-stroke"/></g>')

    lines.append("</svg>")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
