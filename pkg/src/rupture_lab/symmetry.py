"""Blow-ups, quantitative symmetry fits, and strata.

The recentered blow-up at (x, r) is T_{x,r}(u - u(x))(y) =
r^-alpha (u(x + r y) - u(x)), sampled over the unit ball on a fixed
reference grid.  A function h is k-symmetric when it is alpha-homogeneous
and invariant along a k-dimensional subspace V; u is (k, eps)-symmetric
in B_r(x) when some such h is within eps of the blow-up in sup norm on
B_1.  The infimum over all k-symmetric h is not computable; the
constructive fit used here builds h(y) = |y_perp|^alpha g(y_perp/|y_perp|)
with g an angular median of the rescaled samples, minimized over a finite
frame dictionary, so reported defects are upper bounds of the true
infimum.  Since every j-symmetric function with j >= k is k-symmetric,
defects are additionally minimized over higher orders, which makes them
monotone in k by construction.

The k-th (eps, r)-stratum collects sample points at which no scale in the
ladder is (k+1, eps)-symmetric; it shrinks when eps grows and when k
shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exact import homogeneity_exponent
from .field import BallRegion, Grid, ScalarField, gradient, interpolate


def reference_grid(n: int, m: int) -> Grid:
    return Grid(shape=(2 * m + 1,) * n, origin=(-1.0,) * n, spacing=(1.0 / m,) * n)


@dataclass(frozen=True)
class BlowUp:
    base_name: str
    x: tuple[float, ...]
    r: float
    alpha: float
    field: ScalarField  # values on the reference grid; NaN where x + r y leaves the box
    clipped_fraction: float


def blow_up(u: ScalarField, x, r: float, alpha: float, m: int = 32) -> BlowUp:
    """Recentered blow-up sampled on the reference grid over B_1."""
    if r <= 0:
        raise ValueError("scale must be positive")
    n = u.grid.dim
    ref = reference_grid(n, m)
    axes = [ref.coords(a) for a in range(n)]
    ys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = np.asarray(x, dtype=float) + r * ys
    ux = interpolate(u, np.asarray(x, dtype=float))
    if np.isnan(ux):
        raise ValueError("blow-up center lies outside the box")
    vals = (interpolate(u, pts) - ux) / r**alpha
    inside_ball = np.sum(ys * ys, axis=-1) <= 1.0
    clipped = float(np.count_nonzero(np.isnan(vals) & inside_ball) / np.count_nonzero(inside_ball))
    if clipped == 1.0:
        raise ValueError("blow-up ball lies entirely outside the box")
    return BlowUp(
        base_name=u.name,
        x=tuple(float(c) for c in x),
        r=float(r),
        alpha=float(alpha),
        field=ScalarField(ref, np.nan_to_num(vals, nan=np.nan), name=f"T[{u.name}]"),
        clipped_fraction=clipped,
    )


def scale_forcing(f: ScalarField, x, r: float, alpha: float, m: int = 32) -> ScalarField:
    """T*_{x,r} f (y) = r^(2-alpha) f(x + r y) on the reference grid."""
    n = f.grid.dim
    ref = reference_grid(n, m)
    axes = [ref.coords(a) for a in range(n)]
    ys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = np.asarray(x, dtype=float) + r * ys
    vals = r ** (2.0 - alpha) * interpolate(f, pts)
    return ScalarField(ref, np.nan_to_num(vals, nan=0.0), name=f"T*[{f.name}]")


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


def axis_frames(n: int, k: int) -> list[np.ndarray]:
    eye = np.eye(n)
    return [eye[:, list(c)] for c in combinations(range(n), k)]


def random_frames(n: int, k: int, count: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        out.append(q[:, :k])
    return out


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > 1e-14)[0]
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def gradient_moment_matrix(u: ScalarField, x, r: float) -> np.ndarray:
    """int_{B_r(x)} grad u (x) grad u, the cone-splitting moment matrix."""
    g = u.grid
    sl = g.subbox(x, r)
    d2 = g.dist2(x, sl)
    inside = d2 < r * r
    grad = gradient(u)
    n = g.dim
    M = np.empty((n, n))
    loc = [grad[a][sl][inside] for a in range(n)]
    for a in range(n):
        for b in range(a, n):
            M[a, b] = M[b, a] = np.sum(loc[a] * loc[b]) * g.cell_volume
    return M


def moment_frame(u: ScalarField, x, r: float, k: int) -> np.ndarray:
    """Frame of the k smallest-eigenvalue directions of the gradient moments."""
    M = gradient_moment_matrix(u, x, r)
    w, v = np.linalg.eigh(M)  # ascending
    return _fix_signs(v[:, :k])


# ---------------------------------------------------------------------------
# Constructive k-symmetric fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetryFit:
    k: int
    frame: np.ndarray  # (n, k) orthonormal
    angular_profile: np.ndarray  # median profile per direction bin
    defect: float
    method: str


def _direction_bins(d: int, n_bins: int = 48) -> np.ndarray:
    """Fixed direction set on S^(d-1) used for angular binning."""
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        th = 2.0 * np.pi * (np.arange(n_bins) + 0.5) / n_bins
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci-style deterministic spread for d >= 3
    rng = np.random.default_rng(1234)
    v = rng.standard_normal((4 * n_bins, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _fit_one_frame(ys, ws, frame, alpha, n):
    """Angular-median fit of |y_perp|^alpha g(dir) for one frame."""
    k = frame.shape[1]
    d = n - k
    if d == 0:
        return float(np.max(np.abs(ws))), np.zeros(0)
    if k > 0:
        perp = ys - (ys @ frame) @ frame.T
        # orthonormal basis of the complement
        q, _ = np.linalg.qr(np.concatenate([frame, np.eye(n)], axis=1))
        basis = q[:, k : k + d]
        coords = perp @ basis
    else:
        coords = ys
    rho = np.linalg.norm(coords, axis=1)
    dirs_ok = rho > 1e-12
    bins = _direction_bins(d)
    assign = np.full(ys.shape[0], -1, dtype=int)
    if dirs_ok.any():
        dots = (coords[dirs_ok] / rho[dirs_ok, None]) @ bins.T
        assign[dirs_ok] = np.argmax(dots, axis=1)

    usable = dirs_ok & (rho >= 0.05)
    rescaled = np.zeros_like(ws)
    rescaled[usable] = ws[usable] / rho[usable] ** alpha
    profile = np.zeros(bins.shape[0])
    global_med = float(np.median(rescaled[usable])) if usable.any() else 0.0
    for b in range(bins.shape[0]):
        sel = usable & (assign == b)
        profile[b] = float(np.median(rescaled[sel])) if sel.any() else global_med

    h = np.zeros_like(ws)
    h[dirs_ok] = rho[dirs_ok] ** alpha * profile[assign[dirs_ok]]
    return float(np.max(np.abs(ws - h))), profile


def fit_k_symmetric(
    w: BlowUp,
    k: int,
    candidate_frames: list[np.ndarray] | None = None,
    method: str = "axis-scan",
) -> SymmetryFit:
    """Best constructive k-symmetric approximation over the candidate frames.

    The reported defect upper-bounds the infimum over the searched class;
    for k = n the only candidate is h == 0.
    """
    n = w.field.grid.dim
    if not (0 <= k <= n):
        raise ValueError("k must lie in [0, n]")
    ref = w.field.grid
    axes = [ref.coords(a) for a in range(n)]
    ys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    ws = w.field.values.reshape(-1)
    keep = (np.sum(ys * ys, axis=1) <= 1.0) & np.isfinite(ws)
    ys, ws = ys[keep], ws[keep]

    if k == n:
        return SymmetryFit(
            k=k,
            frame=np.eye(n),
            angular_profile=np.zeros(0),
            defect=float(np.max(np.abs(ws))),
            method="zero",
        )
    if candidate_frames is None:
        candidate_frames = axis_frames(n, k)
    if not candidate_frames:
        raise ValueError("no candidate frames")
    best = None
    for frame in candidate_frames:
        defect, profile = _fit_one_frame(ys, ws, np.asarray(frame, dtype=float), w.alpha, n)
        if best is None or defect < best.defect:
            best = SymmetryFit(
                k=k, frame=np.asarray(frame, dtype=float),
                angular_profile=profile, defect=defect, method=method,
            )
    return best


# ---------------------------------------------------------------------------
# Defects on fields and strata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetryDefect:
    defect: float
    fit: SymmetryFit
    gradient_criterion: float  # inf over k-frames of s^(2-2a-n) int_{B_s} |V.grad u|^2

    def is_symmetric(self, eps: float) -> bool:
        return self.defect < eps


def default_frame_dictionary(
    u: ScalarField, x, r: float, n: int, k: int, seed: int = 0, n_random: int = 32
) -> list[np.ndarray]:
    frames = axis_frames(n, k)
    if 0 < k < n:
        frames.append(moment_frame(u, x, r, k))
        frames.extend(random_frames(n, k, n_random, seed=seed))
    return frames


def symmetry_defect(
    u: ScalarField,
    f: ScalarField | None,
    x,
    r: float,
    k: int,
    p: float,
    m: int = 16,
    seed: int = 0,
    n_random: int = 8,
    _blowup: BlowUp | None = None,
) -> SymmetryDefect:
    """(k, .)-symmetry defect of u in B_r(x), minimized over orders >= k."""
    alpha = homogeneity_exponent(p)
    n = u.grid.dim
    w = _blowup if _blowup is not None else blow_up(u, x, r, alpha, m=m)
    best = None
    for order in range(k, n + 1):
        frames = default_frame_dictionary(u, x, r, n, order, seed=seed, n_random=n_random)
        fit = fit_k_symmetric(w, order, candidate_frames=frames if order < n else None)
        if best is None or fit.defect < best.defect:
            best = fit
    M = gradient_moment_matrix(u, x, r)
    eigs = np.sort(np.linalg.eigvalsh(M))
    crit = r ** (2.0 - 2.0 * alpha - n) * float(np.sum(np.maximum(eigs[:k], 0.0)))
    return SymmetryDefect(defect=best.defect, fit=best, gradient_criterion=crit)


@dataclass(frozen=True)
class StratumReport:
    epsilon: float
    r_min: float
    k: int
    scales: np.ndarray
    points: np.ndarray  # (N, n) sample points
    flagged: np.ndarray  # bool per point
    best_defect: np.ndarray  # min over scales of the (k+1)-defect

    @property
    def flagged_points(self) -> np.ndarray:
        return self.points[self.flagged]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.flagged))


def quantitative_stratum(
    u: ScalarField,
    f: ScalarField | None,
    p: float,
    k: int,
    epsilon: float,
    r_min: float,
    sample_points: np.ndarray,
    r_max: float | None = None,
    m: int = 16,
    seed: int = 0,
) -> StratumReport:
    """Flag sample points at which no dyadic scale is (k+1, eps)-symmetric.

    A point is released as soon as one scale passes; the sup-norm of the
    blow-up itself (the h == 0 candidate) acts as a cheap prefilter before
    the frame fits run.
    """
    alpha = homogeneity_exponent(p)
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    n = u.grid.dim
    margin = min(u.grid.boundary_distance(x) for x in pts)
    if r_max is None:
        r_max = margin / 10.0
    if 10.0 * r_max > margin + 1e-12:
        raise ValueError("sample points need margin 10 r_max to the boundary")
    scales = []
    s = float(r_min)
    while s <= r_max * (1 + 1e-12):
        scales.append(s)
        s *= 2.0
    if not scales:
        raise ValueError("empty scale ladder")
    scales = np.asarray(scales)

    ref = reference_grid(n, m)
    axes = [ref.coords(a) for a in range(n)]
    ys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    ys = ys[np.sum(ys * ys, axis=1) <= 1.0]
    u_at = interpolate(u, pts)

    undecided = np.ones(len(pts), dtype=bool)
    best = np.full(len(pts), np.inf)
    for s in scales:
        if not undecided.any():
            break
        idx = np.nonzero(undecided)[0]
        # all blow-up samples for the undecided points at this scale at once
        query = pts[idx][:, None, :] + s * ys[None, :, :]
        vals = interpolate(u, query)
        w = (vals - u_at[idx][:, None]) / s**alpha
        sup = np.nanmax(np.abs(w), axis=1)
        passed = sup < epsilon
        best[idx] = np.minimum(best[idx], sup)
        undecided[idx[passed]] = False
        for j in idx[~passed]:
            sd = symmetry_defect(u, f, pts[j], float(s), k + 1, p, m=m, seed=seed)
            best[j] = min(best[j], sd.defect)
            if sd.defect < epsilon:
                undecided[j] = False

    return StratumReport(
        epsilon=float(epsilon),
        r_min=float(r_min),
        k=int(k),
        scales=scales,
        points=pts,
        flagged=undecided.copy(),
        best_defect=best,
    )


def rupture_points(
    u: ScalarField,
    epsilon: float,
    r: float,
    p: float,
    within: BallRegion | None = None,
) -> np.ndarray:
    """Cell centers with u < eps r^alpha inside the query ball, as (N, n) points."""
    alpha = homogeneity_exponent(p)
    g = u.grid
    thresh = epsilon * r**alpha
    if within is None:
        mask = u.values < thresh
        sl = tuple(slice(0, s) for s in g.shape)
    else:
        sl = g.subbox(within.center, within.radius)
        d2 = g.dist2(within.center, sl)
        mask = (u.values[sl] < thresh) & (d2 < within.radius**2)
    idx = np.argwhere(mask)
    coords = np.empty((idx.shape[0], g.dim))
    for a in range(g.dim):
        coords[:, a] = g.origin[a] + g.spacing[a] * (idx[:, a] + sl[a].start)
    return coords
