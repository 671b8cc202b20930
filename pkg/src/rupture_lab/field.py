"""Uniform cell-centered scalar fields on boxes.

Conventions used throughout the package:

* grids are cell-centered: cell ``i`` along axis ``a`` sits at
  ``origin[a] + i * spacing[a]``, and the box extends half a cell beyond
  the outermost centers;
* spacing is isotropic (equal per axis up to 1e-12 relative), written ``h``;
* point evaluations use multilinear interpolation, set measures use cell
  counting, integrals use the midpoint rule ``sum(g * h**n)``.

The portable file format "RFLD" (version 1, little-endian) is::

    4s  magic "RFLD"
    u32 version
    u32 n
    u32 shape[n]
    f64 origin[n]
    f64 spacing[n]
    f64 values, row-major (C order)

with no padding and no compression.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

MAGIC = b"RFLD"
FORMAT_VERSION = 1

# Refuse to build grids beyond this many cells (raised deliberately, not OOM).
CELL_BUDGET = 2**26

_MAX_DIM = 4


class FieldIOError(Exception):
    """Base class for RFLD format failures."""


class BadMagicError(FieldIOError):
    pass


class BadVersionError(FieldIOError):
    pass


class TruncatedPayloadError(FieldIOError):
    pass


class ShapeMismatchError(FieldIOError):
    pass


class EmptyIntersectionError(ValueError):
    """A ball quadrature region contains no grid cells."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on a box in R^n."""

    shape: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        if not (1 <= self.dim <= _MAX_DIM):
            raise ValueError(f"dim must be in [1, {_MAX_DIM}], got {self.dim}")
        if len(self.origin) != self.dim or len(self.spacing) != self.dim:
            raise ValueError("shape/origin/spacing length mismatch")
        if any(s <= 0 for s in self.shape):
            raise ValueError("shape entries must be positive")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("spacing entries must be positive")
        h0 = self.spacing[0]
        if any(abs(h - h0) > 1e-12 * h0 for h in self.spacing):
            raise ValueError("grid must be isotropic (equal spacing per axis)")
        if int(np.prod(self.shape)) > CELL_BUDGET:
            raise ValueError(f"grid exceeds cell budget {CELL_BUDGET}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> float:
        return self.spacing[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) of the box, half a cell beyond the outer centers."""
        lo = np.array(self.origin) - 0.5 * np.array(self.spacing)
        hi = lo + np.array(self.shape) * np.array(self.spacing)
        return lo, hi

    def boundary_distance(self, x: Sequence[float]) -> float:
        """Distance from x to the boundary of the box (negative outside)."""
        lo, hi = self.box_bounds()
        x = np.asarray(x, dtype=float)
        return float(min(np.min(x - lo), np.min(hi - x)))

    def subbox(self, center: Sequence[float], radius: float) -> tuple[slice, ...]:
        """Index slices covering the cells within `radius` of `center`."""
        sl = []
        for a in range(self.dim):
            lo = int(math.floor((center[a] - radius - self.origin[a]) / self.spacing[a]))
            hi = int(math.ceil((center[a] + radius - self.origin[a]) / self.spacing[a])) + 1
            sl.append(slice(max(lo, 0), min(hi, self.shape[a])))
        return tuple(sl)

    def dist2(self, x: Sequence[float], slices: tuple[slice, ...] | None = None) -> np.ndarray:
        """|y - x|^2 at cell centers, optionally restricted to slices."""
        if slices is None:
            slices = tuple(slice(0, s) for s in self.shape)
        out = 0.0
        for a in range(self.dim):
            c = self.origin[a] + self.spacing[a] * np.arange(slices[a].start, slices[a].stop)
            d = (c - x[a]) ** 2
            shp = [1] * self.dim
            shp[a] = d.size
            out = out + d.reshape(shp)
        return out


def centered_grid(dim: int, shape_per_axis: int, spacing: float) -> Grid:
    """Grid of `shape_per_axis` cells per axis whose box is centered at 0.

    With an even cell count no cell center sits at the origin; with an odd
    count the origin is a cell center.
    """
    n = shape_per_axis
    origin = -0.5 * (n - 1) * spacing
    return Grid(
        shape=(n,) * dim,
        origin=(origin,) * dim,
        spacing=(spacing,) * dim,
    )


@dataclass(frozen=True)
class ScalarField:
    """Sampled scalar function on a Grid. Values are treated as immutable."""

    grid: Grid
    values: np.ndarray
    name: str = "field"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def require_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"field {self.name!r} has non-finite values")

    def require_nonnegative(self) -> None:
        self.require_finite()
        if np.any(self.values < 0):
            raise ValueError(f"field {self.name!r} has negative values")

    def with_values(self, values: np.ndarray, name: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, name if name is not None else self.name)


@dataclass(frozen=True)
class BallRegion:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def save_field(f: ScalarField, path: str | Path) -> None:
    g = f.grid
    n = g.dim
    header = struct.pack("<4sII", MAGIC, FORMAT_VERSION, n)
    header += struct.pack(f"<{n}I", *g.shape)
    header += struct.pack(f"<{n}d", *g.origin)
    header += struct.pack(f"<{n}d", *g.spacing)
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def load_field(path: str | Path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise TruncatedPayloadError(f"{path}: file shorter than fixed header")
    magic, version, n = struct.unpack_from("<4sII", raw, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}")
    if not (1 <= n <= _MAX_DIM):
        raise ShapeMismatchError(f"{path}: implausible dimension {n}")
    off = 12
    need = n * 4 + 2 * n * 8
    if len(raw) < off + need:
        raise TruncatedPayloadError(f"{path}: header truncated")
    shape = struct.unpack_from(f"<{n}I", raw, off)
    off += n * 4
    origin = struct.unpack_from(f"<{n}d", raw, off)
    off += n * 8
    spacing = struct.unpack_from(f"<{n}d", raw, off)
    off += n * 8
    count = int(np.prod(shape))
    expected = off + count * 8
    if len(raw) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(raw) - off} bytes, need {count * 8}"
        )
    if len(raw) > expected:
        raise ShapeMismatchError(
            f"{path}: {len(raw) - expected} trailing bytes beyond declared shape"
        )
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
    grid = Grid(shape=tuple(shape), origin=tuple(origin), spacing=tuple(spacing))
    return ScalarField(grid, values.astype(float), name=Path(path).stem)


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------


def gradient(u: ScalarField) -> np.ndarray:
    """Gradient, shape (n, *grid.shape).

    Second-order central differences in the interior, first-order one-sided
    at the box faces (exact on affine fields everywhere).
    """
    g = u.grid
    if any(s < 3 for s in g.shape):
        raise ValueError("gradient needs at least 3 cells per axis")
    parts = np.gradient(u.values, *g.spacing, edge_order=1)
    if g.dim == 1:
        parts = [parts]
    return np.stack(parts, axis=0)


def _grad2_staggered(v: np.ndarray, spacing) -> np.ndarray:
    """Cell-centered |grad u|^2 as the average of squared face differences.

    This is the density of the discrete Dirichlet energy whose gradient flow
    is the (2n+1)-point Laplacian; at cusps it loses less mass than squaring
    central differences.  Box faces reuse the single available face slope.
    """
    out = np.zeros_like(v)
    for a in range(v.ndim):
        d = np.diff(v, axis=a) / spacing[a]
        sq = d * d
        lo = np.concatenate([np.take(sq, [0], axis=a), sq], axis=a)
        hi = np.concatenate([sq, np.take(sq, [-1], axis=a)], axis=a)
        out += 0.5 * (lo + hi)
    return out


def gradient_energy_density(u: ScalarField) -> np.ndarray:
    return _grad2_staggered(u.values, u.grid.spacing)


def laplacian(u: ScalarField) -> ScalarField:
    """(2n+1)-point Laplacian; boundary cells are NaN (not-a-value)."""
    g = u.grid
    if any(s < 3 for s in g.shape):
        raise ValueError("laplacian needs at least 3 cells per axis")
    v = u.values
    out = np.full_like(v, np.nan)
    core = tuple(slice(1, -1) for _ in range(g.dim))
    acc = np.zeros_like(v[core])
    for a in range(g.dim):
        lo = tuple(slice(1, -1) if b != a else slice(0, -2) for b in range(g.dim))
        hi = tuple(slice(1, -1) if b != a else slice(2, None) for b in range(g.dim))
        acc += (v[lo] - 2.0 * v[core] + v[hi]) / g.spacing[a] ** 2
    out[core] = acc
    return u.with_values(out, name=f"lap({u.name})")


# ---------------------------------------------------------------------------
# Quadrature and set measures
# ---------------------------------------------------------------------------


def ball_integral(
    g: ScalarField,
    ball: BallRegion,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
    support: float = 1.0,
) -> float:
    """Midpoint-rule integral of g * weight(|y-x|^2 / r^2) over the support ball.

    `weight` is applied to t = |y-x|^2 / r^2; its support is assumed inside
    t < support**2, i.e. |y-x| < support * r. With weight=None the plain
    indicator of the ball is used. NaN cells (e.g. Laplacian boundary) are
    skipped.
    """
    value, _ = ball_integral_clipped(g, ball, weight=weight, support=support)
    return value


def ball_integral_clipped(
    g: ScalarField,
    ball: BallRegion,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
    support: float = 1.0,
) -> tuple[float, float]:
    """ball_integral plus the estimated clipped volume fraction of the support ball."""
    grid = g.grid
    rad = support * ball.radius
    sl = grid.subbox(ball.center, rad)
    if any(s.start >= s.stop for s in sl):
        raise EmptyIntersectionError("ball does not intersect the grid box")
    d2 = grid.dist2(ball.center, sl)
    inside = d2 < rad * rad
    if not inside.any():
        raise EmptyIntersectionError("ball contains no cell centers")
    vals = g.values[sl][inside]
    ok = np.isfinite(vals)
    t = d2[inside][ok] / (ball.radius * ball.radius)
    w = np.ones_like(t) if weight is None else np.asarray(weight(t), dtype=float)
    value = float(np.sum(vals[ok] * w) * grid.cell_volume)
    covered = np.count_nonzero(inside) * grid.cell_volume
    full = unit_ball_volume(grid.dim) * rad**grid.dim
    clipped = float(min(max(1.0 - covered / full, 0.0), 1.0))
    return value, clipped


def sublevel_measure(u: ScalarField, threshold: float, within: BallRegion | None = None) -> float:
    """h^n * #{cells in `within` with u < threshold}."""
    g = u.grid
    if within is None:
        mask = u.values < threshold
    else:
        sl = g.subbox(within.center, within.radius)
        d2 = g.dist2(within.center, sl)
        mask = (u.values[sl] < threshold) & (d2 < within.radius**2)
    return float(np.count_nonzero(mask) * g.cell_volume)


def distance_transform(grid: Grid, mask: np.ndarray) -> ScalarField:
    """Exact Euclidean distance to the nearest True cell center."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError("mask shape does not match grid")
    if not mask.any():
        raise ValueError("distance_transform of an all-false mask")
    dist = ndimage.distance_transform_edt(~mask, sampling=grid.spacing)
    return ScalarField(grid, np.asarray(dist, dtype=float), name="dist")


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------


def interpolate(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at points, shape (..., n). NaN outside the box.

    Inside the box but beyond the outermost cell centers the stencil is
    clamped (constant extension over the half-cell skin).
    """
    g = f.grid
    pts = np.asarray(points, dtype=float)
    scalar_in = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != g.dim:
        raise ValueError("points last axis must equal grid dim")
    lo, hi = g.box_bounds()
    outside = np.any((pts < lo) | (pts > hi), axis=-1)

    idx = []
    frac = []
    for a in range(g.dim):
        t = (pts[..., a] - g.origin[a]) / g.spacing[a]
        i0 = np.clip(np.floor(t).astype(int), 0, g.shape[a] - 2) if g.shape[a] > 1 else np.zeros_like(t, dtype=int)
        fr = np.clip(t - i0, 0.0, 1.0)
        idx.append(i0)
        frac.append(fr)

    out = np.zeros(pts.shape[:-1], dtype=float)
    for corner in range(2**g.dim):
        w = np.ones(pts.shape[:-1], dtype=float)
        ix = []
        for a in range(g.dim):
            bit = (corner >> a) & 1
            w = w * (frac[a] if bit else (1.0 - frac[a]))
            ix.append(np.minimum(idx[a] + bit, g.shape[a] - 1))
        out += w * f.values[tuple(ix)]
    out[outside] = np.nan
    return out[0] if scalar_in else out
