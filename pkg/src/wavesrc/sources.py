"""Library of true sources ``p(x)`` used to synthesise data.

Every source is evaluated pointwise on node coordinates, so discontinuous
sources are sampled, never smoothed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ConfigError

KINDS = ("two_inclusions", "three_inclusions", "peaks", "letters_AL", "custom_grid")
TEST_KINDS = {1: "two_inclusions", 2: "three_inclusions", 3: "peaks", 4: "letters_AL"}


def two_inclusions(x, y):
    """Ellipse of value 1 centred at (0.15, 0) and square of value -1 centred at (-0.15, 0)."""
    out = np.zeros(np.broadcast(x, y).shape)
    out[np.maximum(np.abs(x + 0.15), np.abs(y)) < 0.1] = -1.0
    out[4 * (x - 0.15) ** 2 + y**2 / 8 <= 0.1**2] = 1.0
    return out


def three_inclusions(x, y):
    out = np.zeros(np.broadcast(x, y).shape)
    out[np.abs(x + 0.25) + np.abs(y) < 0.17] = -1.0
    out[4 * x**2 + (y + 0.25) ** 2 < 0.15**2] = 1.0
    out[(x - 0.25) ** 2 + y**2 < 0.12**2] = 1.5
    return out


def peaks(x, y, stretch=6.0):
    """MATLAB's ``peaks`` evaluated at ``(stretch*x, stretch*y)``.

    ``stretch=6`` maps the square (-0.5, 0.5)^2 onto peaks' usual (-3, 3)^2
    window, where its extrema are about -6.55 and 8.11.
    """
    x = stretch * np.asarray(x, float)
    y = stretch * np.asarray(y, float)
    return (
        3 * (1 - x) ** 2 * np.exp(-(x**2) - (y + 1) ** 2)
        - 10 * (x / 5 - x**3 - y**5) * np.exp(-(x**2) - y**2)
        - np.exp(-((x + 1) ** 2) - y**2) / 3
    )


@lru_cache(maxsize=None)
def glyph(name: str) -> np.ndarray:
    """Binary raster of a letter shipped in ``wavesrc/glyphs``; row 0 is the top.

    Lines made only of ``#`` and ``.`` are raster rows; anything else is a comment.
    """
    text = resources.files("wavesrc").joinpath("glyphs", f"{name}.txt").read_text()
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and set(ln.strip()) <= {"#", "."}]
    return np.array([[c == "#" for c in r] for r in rows], dtype=bool)


def _raster(mask, x, y, box):
    """Nearest-cell lookup of ``mask`` stretched over ``box = (x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = box
    rows, cols = mask.shape
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    inside = (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
    c = np.clip(((x - x0) / (x1 - x0) * cols).astype(int), 0, cols - 1)
    r = np.clip(((y1 - y) / (y1 - y0) * rows).astype(int), 0, rows - 1)
    return inside & mask[r, c]


A_BOX = (-0.40, -0.05, -0.30, 0.30)
L_BOX = (0.08, 0.38, -0.30, 0.30)


def letters_AL(x, y):
    """-1 on the letter A (left half), +1 on the letter L (right half)."""
    out = np.zeros(np.broadcast(x, y).shape)
    out[_raster(glyph("A"), x, y, A_BOX)] = -1.0
    out[_raster(glyph("L"), x, y, L_BOX)] = 1.0
    return out


@dataclass(frozen=True)
class SourceSpec:
    """A named source with an amplitude scale, or raw samples for ``custom_grid``.

    ``values`` is an ``(n, n)`` array over ``extent = (x_min, x_max, y_min, y_max)``
    indexed ``[ix, iy]``; it is interpolated bilinearly and taken as zero
    outside the extent.
    """

    kind: str = "two_inclusions"
    amplitude: float = 1.0
    params: dict = field(default_factory=dict)
    values: np.ndarray | None = None
    extent: tuple[float, float, float, float] = (-0.5, 0.5, -0.5, 0.5)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown source kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom_grid" and self.values is None:
            raise ConfigError("custom_grid source needs a values array")

    @classmethod
    def for_test(cls, test_id: int, amplitude: float = 1.0) -> "SourceSpec":
        try:
            return cls(kind=TEST_KINDS[int(test_id)], amplitude=amplitude)
        except KeyError:
            raise ConfigError(f"unknown test id {test_id}; expected 1-4") from None

    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.kind == "two_inclusions":
            v = two_inclusions(x, y)
        elif self.kind == "three_inclusions":
            v = three_inclusions(x, y)
        elif self.kind == "peaks":
            v = peaks(x, y, **self.params)
        elif self.kind == "letters_AL":
            v = letters_AL(x, y)
        else:
            v = self._custom(x, y)
        return self.amplitude * v

    def _custom(self, x, y):
        from scipy.interpolate import RegularGridInterpolator

        vals = np.asarray(self.values, float)
        x0, x1, y0, y1 = self.extent
        gx = np.linspace(x0, x1, vals.shape[0])
        gy = np.linspace(y0, y1, vals.shape[1])
        f = RegularGridInterpolator((gx, gy), vals, bounds_error=False, fill_value=0.0)
        return f(np.stack([x, y], axis=-1))

    def describe(self) -> dict:
        d = {"kind": self.kind, "amplitude": self.amplitude}
        if self.params:
            d["params"] = dict(self.params)
        if self.kind == "custom_grid":
            d["extent"] = list(self.extent)
            d["shape"] = list(np.shape(self.values))
        return d
