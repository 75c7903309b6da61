"""Minimal deterministic SVG builder for explanation plots.

No external assets, no timestamps: identical input yields identical bytes.
Coordinates are formatted to two decimals; exact data values ride along in
<title> elements so emitted documents stay machine-checkable.
"""

from __future__ import annotations

from xml.sax.saxutils import escape


def _f(x: float) -> str:
    return f"{x:.2f}"


class Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._parts: list[str] = [
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
        ]

    def rect(
        self,
        x: float,
        y: float,
        w: float,
        h: float,
        fill: str,
        stroke: str | None = None,
        title: str | None = None,
        extra: str = "",
    ) -> None:
        attrs = f'x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}"'
        if stroke:
            attrs += f' stroke="{stroke}"'
        if extra:
            attrs += " " + extra
        if title is None:
            self._parts.append(f"<rect {attrs}/>\n")
        else:
            self._parts.append(
                f"<rect {attrs}><title>{escape(title)}</title></rect>\n"
            )

    def line(
        self, x1: float, y1: float, x2: float, y2: float, stroke: str, width: float = 1.0
    ) -> None:
        self._parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"/>\n'
        )

    def path(self, points: list[tuple[float, float]], stroke: str, width: float = 2.0) -> None:
        if not points:
            return
        d = "M " + " L ".join(f"{_f(x)} {_f(y)}" for x, y in points)
        self._parts.append(
            f'<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{_f(width)}"/>\n'
        )

    def text(
        self,
        x: float,
        y: float,
        s: str,
        size: int = 12,
        anchor: str = "start",
        fill: str = "#333333",
    ) -> None:
        self._parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'fill="{fill}">{escape(s)}</text>\n'
        )

    def tostring(self) -> str:
        return "".join(self._parts) + "</svg>\n"


def diverging_color(value: float, scale: float) -> str:
    """Blue (negative) -> white (zero) -> red (positive), clipped at +-scale."""
    if scale <= 0:
        t = 0.0
    else:
        t = max(-1.0, min(1.0, value / scale))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t * 0.75)), round(255 * (1 - t * 0.85))
    else:
        r, g, b = round(255 * (1 + t * 0.85)), round(255 * (1 + t * 0.75)), 255
    return f"#{r:02x}{g:02x}{b:02x}"
