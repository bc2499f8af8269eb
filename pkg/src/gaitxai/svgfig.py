"""Minimal deterministic SVG building blocks for the report figures.

Numbers are formatted with two fixed decimals, no timestamps or generated
ids are emitted, and element order follows insertion order, so identical
inputs produce byte-identical documents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def fnum(x: float) -> str:
    s = f"{float(x):.2f}"
    return "0.00" if s == "-0.00" else s


class SvgCanvas:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self._parts: list[str] = []

    def raw(self, element: str) -> None:
        self._parts.append(element)

    def open_group(self, transform: str = "", attrs: dict | None = None) -> None:
        bits = []
        if transform:
            bits.append(f' transform="{transform}"')
        for key, value in (attrs or {}).items():
            bits.append(f' {key}="{value}"')
        self._parts.append(f"<g{''.join(bits)}>")

    def close_group(self) -> None:
        self._parts.append("</g>")

    def rect(self, x, y, w, h, fill: str, attrs: dict | None = None) -> None:
        extra = "".join(f' {k}="{v}"' for k, v in (attrs or {}).items())
        self.raw(f'<rect x="{fnum(x)}" y="{fnum(y)}" width="{fnum(w)}" '
                 f'height="{fnum(h)}" fill="{fill}"{extra}/>')

    def line(self, x1, y1, x2, y2, stroke: str, width: float = 1.0,
             attrs: dict | None = None) -> None:
        extra = "".join(f' {k}="{v}"' for k, v in (attrs or {}).items())
        self.raw(f'<line x1="{fnum(x1)}" y1="{fnum(y1)}" x2="{fnum(x2)}" '
                 f'y2="{fnum(y2)}" stroke="{stroke}" stroke-width="{fnum(width)}"{extra}/>')

    def path(self, d: str, stroke: str, width: float = 1.0, fill: str = "none",
             attrs: dict | None = None) -> None:
        extra = "".join(f' {k}="{v}"' for k, v in (attrs or {}).items())
        self.raw(f'<path d="{d}" fill="{fill}" stroke="{stroke}" '
                 f'stroke-width="{fnum(width)}"{extra}/>')

    def polygon(self, points: str, fill: str, attrs: dict | None = None) -> None:
        extra = "".join(f' {k}="{v}"' for k, v in (attrs or {}).items())
        self.raw(f'<polygon points="{points}" fill="{fill}" stroke="none"{extra}/>')

    def text(self, x, y, content: str, size: float = 10.0, anchor: str = "start",
             fill: str = "#222222") -> None:
        self.raw(f'<text x="{fnum(x)}" y="{fnum(y)}" font-family="sans-serif" '
                 f'font-size="{fnum(size)}" text-anchor="{anchor}" '
                 f'fill="{fill}">{content}</text>')

    def tostring(self) -> str:
        header = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                  f'<svg xmlns="http://www.w3.org/2000/svg" '
                  f'width="{fnum(self.width)}" height="{fnum(self.height)}" '
                  f'viewBox="0 0 {fnum(self.width)} {fnum(self.height)}">')
        return "\n".join([header] + self._parts + ["</svg>"]) + "\n"


@dataclass(frozen=True)
class Axes:
    """Linear data-to-pixel mapping for one panel."""

    x0: float
    y0: float
    width: float
    height: float
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def px(self, x: float) -> float:
        return self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.width

    def py(self, y: float) -> float:
        return self.y0 + self.height - (y - self.ymin) / (self.ymax - self.ymin) * self.height

    def path_d(self, xs, ys) -> str:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        pieces = [f"M {fnum(self.px(xs[0]))} {fnum(self.py(ys[0]))}"]
        pieces.extend(f"L {fnum(self.px(x))} {fnum(self.py(y))}"
                      for x, y in zip(xs[1:], ys[1:]))
        return " ".join(pieces)

    def band_polygon(self, xs, lower, upper) -> str:
        xs = np.asarray(xs, dtype=np.float64)
        pts = [f"{fnum(self.px(x))},{fnum(self.py(y))}" for x, y in zip(xs, upper)]
        pts.extend(f"{fnum(self.px(x))},{fnum(self.py(y))}"
                   for x, y in zip(xs[::-1], np.asarray(lower)[::-1]))
        return " ".join(pts)

    def frame(self, canvas: SvgCanvas, stroke: str = "#555555") -> None:
        canvas.raw(f'<rect x="{fnum(self.x0)}" y="{fnum(self.y0)}" '
                   f'width="{fnum(self.width)}" height="{fnum(self.height)}" '
                   f'fill="none" stroke="{stroke}" stroke-width="0.75"/>')
