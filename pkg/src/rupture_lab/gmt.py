"""Geometric measure theory toolkit over weighted point clouds and masks.

The central quantity is the k-dimensional displacement of a measure mu,

    D_mu^k(x, r) = min over affine k-planes L of
                   r^(-k-2) int_{B_r(x)} dist^2(y, L) dmu(y),

whose minimizer has a closed spectral form: with x_cm the mass-normalized
center of atoms in the ball and lambda_1 >= ... >= lambda_n the
eigenvalues of their normalized second-moment matrix, the best plane is
x_cm + span of the top k eigenvectors and the normalized minimum equals
sum_{i>k} lambda_i.  An iterative multi-start minimizer exists purely as
the independent test oracle.

On top of the displacement sit the Reifenberg-hypothesis scan, the
rectifiability integral int D(x,s) ds/s, greedy Vitali coverings,
effective spanning of point sets, and Minkowski contents of masks via the
Euclidean distance transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Grid, ScalarField, distance_transform


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite weighted point cloud sum_i w_i delta_{y_i}."""

    atoms: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,) positive

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if a.shape[0] != w.shape[0]:
            raise ValueError("atoms and weights length mismatch")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def in_ball(self, x, r: float) -> np.ndarray:
        d2 = np.sum((self.atoms - np.asarray(x, dtype=float)) ** 2, axis=1)
        return d2 < r * r


@dataclass(frozen=True)
class AffineSubspace:
    """base + span(frame); k = 0 is a single point."""

    base: np.ndarray  # (n,)
    frame: np.ndarray  # (n, k) orthonormal

    def __post_init__(self):
        b = np.asarray(self.base, dtype=float).reshape(-1)
        fr = np.asarray(self.frame, dtype=float)
        if fr.ndim != 2 or fr.shape[0] != b.shape[0]:
            raise ValueError("frame must be (n, k)")
        if fr.shape[1] and not np.allclose(fr.T @ fr, np.eye(fr.shape[1]), atol=1e-12):
            raise ValueError("frame must be orthonormal")
        object.__setattr__(self, "base", b)
        object.__setattr__(self, "frame", fr)

    @property
    def k(self) -> int:
        return self.frame.shape[1]

    def dist(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.base
        if self.k:
            pts = pts - (pts @ self.frame) @ self.frame.T
        return np.linalg.norm(pts, axis=1)


@dataclass(frozen=True)
class MomentSpectrum:
    x_cm: np.ndarray
    eigenvalues: np.ndarray  # descending, >= 0
    eigenvectors: np.ndarray  # columns, orthonormal, deterministic signs
    mass: float


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > 1e-14)[0]
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def moment_spectrum(mu: AtomicMeasure, ball) -> MomentSpectrum:
    """Center of mass and normalized second-moment eigensystem in the ball.

    `ball` is a (center, radius) pair or BallRegion-like object.
    """
    center, radius = _ball_of(ball)
    sel = mu.in_ball(center, radius)
    if not sel.any():
        raise ValueError("measure has no mass in the ball")
    pts = mu.atoms[sel]
    w = mu.weights[sel]
    mass = float(np.sum(w))
    x_cm = (w @ pts) / mass
    centered = pts - x_cm
    M = (centered.T * w) @ centered / mass
    lam, vec = np.linalg.eigh(M)
    order = np.argsort(lam)[::-1]
    lam = np.maximum(lam[order], 0.0)
    vec = _fix_signs(vec[:, order])
    return MomentSpectrum(x_cm=x_cm, eigenvalues=lam, eigenvectors=vec, mass=mass)


def _ball_of(ball) -> tuple[np.ndarray, float]:
    if hasattr(ball, "center"):
        return np.asarray(ball.center, dtype=float), float(ball.radius)
    center, radius = ball
    return np.asarray(center, dtype=float), float(radius)


def best_fit_affine(mu: AtomicMeasure, ball, k: int) -> tuple[AffineSubspace, float]:
    """Spectral minimizer of the mass-normalized L^2 plane distance.

    Returns (L_k, m_value) with L_k = x_cm + span of the top k eigenvectors
    and m_value = sum_{i>k} lambda_i (0 when k = n).
    """
    spec = moment_spectrum(mu, ball)
    n = mu.dim
    if not (0 <= k <= n):
        raise ValueError("k must lie in [0, n]")
    L = AffineSubspace(base=spec.x_cm, frame=spec.eigenvectors[:, :k])
    m_value = float(np.sum(spec.eigenvalues[k:])) if k < n else 0.0
    return L, m_value


def displacement(mu: AtomicMeasure, x, r: float, k: int) -> float:
    """D_mu^k(x, r) by the closed spectral form; 0 on empty balls."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if not mu.in_ball(x, r).any():
        return 0.0
    _, m_value = best_fit_affine(mu, (x, r), k)
    spec_mass = moment_spectrum(mu, (x, r)).mass
    return r ** (-k - 2.0) * spec_mass * m_value


def displacement_bruteforce(
    mu: AtomicMeasure, x, r: float, k: int, starts: int = 64, iters: int = 400, seed: int = 7
) -> float:
    """Independent oracle: multi-start projected descent over (base, frame).

    Minimizes sum w_i dist^2(y_i, base + span V) by plain gradient steps,
    re-orthonormalizing V by QR after each step.  Test use only.
    """
    x = np.asarray(x, dtype=float)
    sel = mu.in_ball(x, r)
    if not sel.any():
        return 0.0
    pts = mu.atoms[sel]
    w = mu.weights[sel]
    n = mu.dim
    if k >= n:
        return 0.0

    def objective(base, V):
        rvec = pts - base
        if V.shape[1]:
            e = rvec - (rvec @ V) @ V.T
        else:
            e = rvec
        return float(np.sum(w * np.sum(e * e, axis=1)))

    rng = np.random.default_rng(seed)
    best = np.inf
    for s in range(starts):
        if s == 0:
            base = (w @ pts) / np.sum(w)
            V = np.eye(n)[:, :k]
        else:
            base = pts[rng.integers(len(pts))] + 0.1 * r * rng.standard_normal(n)
            V, _ = np.linalg.qr(rng.standard_normal((n, max(k, 1))))
            V = V[:, :k]
        val = objective(base, V)
        step = 0.5 / max(np.sum(w), 1e-300)
        for _ in range(iters):
            rvec = pts - base
            proj = rvec @ V if k else np.zeros((len(pts), 0))
            e = rvec - proj @ V.T
            g_base = -2.0 * (w @ e)
            g_V = -2.0 * (e.T * w) @ proj if k else np.zeros((n, 0))
            nb = base - step * g_base
            if k:
                nv, _ = np.linalg.qr(V - step * g_V)
                nv = nv[:, :k]
            else:
                nv = V
            nval = objective(nb, nv)
            if nval <= val:
                base, V, val = nb, nv, nval
                step *= 1.2
                if val < 1e-300:
                    break
            else:
                step *= 0.5
                if step < 1e-18 / max(np.sum(w), 1e-300):
                    break
        best = min(best, val)
    return r ** (-k - 2.0) * best


@dataclass(frozen=True)
class RectifiabilityReport:
    scales: np.ndarray
    displacement_raw: np.ndarray  # D_mu^k(x, s) per scale
    displacement_normalized: np.ndarray  # s^-2 mean_{B_s} dist^2 per scale
    integral: float  # trapezoid of normalized D / s over the ladder
    integral_raw: float


def rectifiability_integral(
    mu: AtomicMeasure, x, s_ladder, k: int
) -> RectifiabilityReport:
    """Trapezoid sum of D^k(x, s) / s over a geometric scale ladder.

    Two normalizations are traced: the plain displacement, and the
    mass-normalized one s^-2 int dist^2 dmu / mu(B_s), which is the
    H^k-intrinsic value when the cloud carries ~s^k mass per ball and is
    the one whose log-divergence separates fat clouds from rectifiable
    ones (a k-plane gives 0, a curved k-set O(s^2)/s, a (k+1)-dimensional
    cloud a constant integrand / s).
    """
    scales = np.sort(np.asarray(s_ladder, dtype=float))
    if scales.size < 2 or np.any(scales <= 0):
        raise ValueError("need a positive ladder with at least two scales")
    raw = np.empty(scales.size)
    norm = np.empty(scales.size)
    for i, s in enumerate(scales):
        sel = mu.in_ball(x, s)
        if not sel.any():
            raw[i] = norm[i] = 0.0
            continue
        raw[i] = displacement(mu, x, float(s), k)
        mass = float(np.sum(mu.weights[sel]))
        raw_int = raw[i] * s ** (k + 2.0)  # back to int dist^2 dmu
        norm[i] = raw_int / (mass * s * s)
    integral = float(np.trapezoid(norm / scales, scales))
    integral_raw = float(np.trapezoid(raw / scales, scales))
    return RectifiabilityReport(
        scales=scales,
        displacement_raw=raw,
        displacement_normalized=norm,
        integral=integral,
        integral_raw=integral_raw,
    )


@dataclass(frozen=True)
class ReifenbergReport:
    hypothesis_max: float  # max over (x, t) of integral / t^k
    hypothesis_ok: bool  # hypothesis_max < delta
    content_ratio: float  # mu(B_r(x0)) / r^k
    delta: float


def reifenberg_check(
    mu: AtomicMeasure,
    region_ball,
    k: int,
    delta: float,
    t_count: int = 8,
    s_count: int = 12,
) -> ReifenbergReport:
    """Scan the Reifenberg hypothesis integral over atom-centered balls.

    For centers x (the atoms plus the region center) and a geometric ladder
    of t below radius/10, evaluates

        int_{B_t(x)} ( int_0^t D_mu^k(y, s) ds/s ) dmu(y)

    and reports the max of integral / t^k against delta, together with the
    content ratio mu(B_r(x0)) / r^k of the conclusion.
    """
    x0, r = _ball_of(region_ball)
    sel0 = mu.in_ball(x0, r)
    content_ratio = float(np.sum(mu.weights[sel0])) / r**k if sel0.any() else 0.0

    centers = np.vstack([mu.atoms[mu.in_ball(x0, r)], x0[None, :]])
    ts = (r / 10.0) * (1.0 / 2.0) ** np.arange(t_count)
    t_max = float(ts[0])

    # inner dyadic integral per atom, accumulated once on a shared ladder
    s_grid = np.geomspace(t_max / 64.0, t_max, s_count)
    s_grid = np.sort(np.unique(np.concatenate([s_grid, ts])))
    inner = np.zeros((len(mu.atoms), s_grid.size))
    for j, s in enumerate(s_grid):
        for i in range(len(mu.atoms)):
            inner[i, j] = displacement(mu, mu.atoms[i], float(s), k)

    hyp_max = 0.0
    for t in ts:
        js = s_grid <= t * (1 + 1e-12)
        if np.count_nonzero(js) < 2:
            continue
        ss = s_grid[js]
        per_atom = np.trapezoid(inner[:, js] / ss, ss, axis=1)
        for x in centers:
            sel = mu.in_ball(x, float(t))
            if not sel.any():
                continue
            val = float(np.sum(mu.weights[sel] * per_atom[sel]))
            hyp_max = max(hyp_max, val / t**k)
    return ReifenbergReport(
        hypothesis_max=hyp_max,
        hypothesis_ok=hyp_max < delta,
        content_ratio=content_ratio,
        delta=float(delta),
    )


# ---------------------------------------------------------------------------
# Effective spanning and coverings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EffectiveSpan:
    k_max: int
    chain: np.ndarray  # (k_max + 1, n) the spanning points
    frame: np.ndarray  # (n, k_max) orthonormal directions

    def represent(self, x) -> np.ndarray:
        """Coefficients alpha with x = x0 + sum alpha_i (x_i - x0)."""
        if self.k_max == 0:
            return np.zeros(0)
        diffs = (self.chain[1:] - self.chain[0]).T  # (n, k)
        coef, *_ = np.linalg.lstsq(diffs, np.asarray(x, dtype=float) - self.chain[0], rcond=None)
        return coef


def effective_span(points: np.ndarray, s: float) -> EffectiveSpan:
    """Greedy s-effective spanning: successive points stay >= 2s from the span.

    Starts from the farthest pair (which must itself be >= 2s apart for
    k >= 1), then repeatedly adds the point farthest from the current
    affine span while that distance is >= 2s.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    n = pts.shape[1]
    if pts.shape[0] == 1:
        return EffectiveSpan(k_max=0, chain=pts[:1], frame=np.zeros((n, 0)))

    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    if i > j:
        i, j = j, i
    if np.sqrt(d2[i, j]) < 2.0 * s:
        return EffectiveSpan(k_max=0, chain=pts[[i]], frame=np.zeros((n, 0)))

    chain = [pts[i], pts[j]]
    while len(chain) <= n:
        sub = AffineSubspace(
            base=chain[0],
            frame=np.linalg.qr(np.stack([c - chain[0] for c in chain[1:]], axis=1))[0][
                :, : len(chain) - 1
            ],
        )
        dist = sub.dist(pts)
        cand = int(np.argmax(dist))
        if dist[cand] < 2.0 * s:
            break
        chain.append(pts[cand])
    chain = np.stack(chain)
    frame = np.linalg.qr((chain[1:] - chain[0]).T)[0][:, : len(chain) - 1]
    return EffectiveSpan(k_max=len(chain) - 1, chain=chain, frame=frame)


@dataclass(frozen=True)
class VitaliCover:
    kept: np.ndarray  # indices into the input points
    centers: np.ndarray
    radii: np.ndarray

    @property
    def count(self) -> int:
        return int(self.kept.size)

    def content_stat(self, k: int, R: float) -> float:
        return float(np.sum(self.radii**k)) / R**k


def vitali_cover(points: np.ndarray, radius_fn) -> VitaliCover:
    """Greedy Vitali subfamily: radii descending, keep when disjoint from kept.

    The 5x dilates of the kept balls cover every input point.  `radius_fn`
    is a callable point -> radius or a constant.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if callable(radius_fn):
        radii = np.array([float(radius_fn(p)) for p in pts])
    else:
        radii = np.full(pts.shape[0], float(radius_fn))
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    order = np.lexsort((np.arange(len(pts)), -radii))
    kept: list[int] = []
    for idx in order:
        ok = True
        for kdx in kept:
            if np.linalg.norm(pts[idx] - pts[kdx]) < radii[idx] + radii[kdx]:
                ok = False
                break
        if ok:
            kept.append(int(idx))
    kept_arr = np.array(sorted(kept), dtype=int)
    return VitaliCover(kept=kept_arr, centers=pts[kept_arr], radii=radii[kept_arr])


@dataclass(frozen=True)
class MinkowskiReport:
    radii: np.ndarray
    neighborhood_measures: np.ndarray  # L^n(B_r(S))
    contents: np.ndarray  # (2r)^(k-n) L^n(B_r(S))
    dimension: float  # n - log-log slope of the neighborhood measure


def minkowski_content(grid: Grid, mask: np.ndarray, k: int, r_ladder) -> MinkowskiReport:
    """Minkowski contents of a cell mask via the exact distance transform."""
    radii = np.sort(np.asarray(r_ladder, dtype=float))
    if radii.size == 0 or np.any(radii <= 0):
        raise ValueError("need a positive radius ladder")
    dist = distance_transform(grid, mask).values
    n = grid.dim
    meas = np.array(
        [float(np.count_nonzero(dist < r) * grid.cell_volume) for r in radii]
    )
    contents = (2.0 * radii) ** (k - n) * meas
    pos = meas > 0
    if np.count_nonzero(pos) >= 2:
        slope = float(np.polyfit(np.log(radii[pos]), np.log(meas[pos]), 1)[0])
    else:
        slope = np.nan
    return MinkowskiReport(
        radii=radii,
        neighborhood_measures=meas,
        contents=contents,
        dimension=n - slope,
    )


# ---------------------------------------------------------------------------
# Simplified pinched covering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoveringReport:
    balls: list[tuple[np.ndarray, float]]
    depth_reached: int

    def content_stat(self, k: int, R: float) -> float:
        return sum(r**k for _, r in self.balls) / R**k


def pinched_covering(
    u: ScalarField,
    f: ScalarField | None,
    p: float,
    x0,
    R: float,
    k: int,
    delta: float,
    rho: float = 0.1,
    eps_u: float = 0.5,
    lattice: int = 9,
    max_depth: int = 8,
) -> CoveringReport:
    """Depth-limited covering of the pinched low set by dyadic balls.

    At each ball, the pinched atoms F = lattice points y with u(y) small
    and density drop W_f(u;y,s) < delta are collected; if they sit inside
    the rho s / 10 neighborhood of a best-fit (k-1)-plane the ball is
    accepted, otherwise it splits one dyadic level (up to max_depth).
    """
    from .density import pinch_W
    from .exact import homogeneity_exponent
    from .field import interpolate

    alpha = homogeneity_exponent(p)
    x0 = np.asarray(x0, dtype=float)

    def pinched_atoms(c, s):
        axes = [np.linspace(-s, s, lattice) + c[a] for a in range(u.grid.dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, u.grid.dim)
        pts = pts[np.sum((pts - c) ** 2, axis=1) < s * s]
        vals = interpolate(u, pts)
        low = np.isfinite(vals) & (vals < eps_u * s**alpha)
        out = []
        for y in pts[low]:
            if u.grid.boundary_distance(y) < 20.0 * s:
                continue
            if pinch_W(u, f, y, s, p) < delta:
                out.append(y)
        return np.array(out).reshape(-1, u.grid.dim)

    balls: list[tuple[np.ndarray, float]] = []
    depth_reached = 0

    def recurse(c, s, depth):
        nonlocal depth_reached
        depth_reached = max(depth_reached, depth)
        F = pinched_atoms(c, s)
        if F.shape[0] == 0:
            return
        stop = depth >= max_depth
        if not stop and F.shape[0] > k:
            mu = AtomicMeasure(atoms=F, weights=np.ones(F.shape[0]))
            L, _ = best_fit_affine(mu, (c, s), max(k - 1, 0))
            stop = bool(np.max(L.dist(F)) <= rho * s / 10.0)
        elif not stop:
            stop = True  # too few atoms to split further
        if stop:
            balls.append((np.asarray(c, dtype=float), float(s)))
            return
        cover = vitali_cover(F, s / 4.0)
        for center in cover.centers:
            recurse(center, s / 2.0, depth + 1)

    recurse(x0, float(R), 0)
    return CoveringReport(balls=balls, depth_reached=depth_reached)
