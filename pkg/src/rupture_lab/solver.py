"""Variational solver for Delta u = u^-p + f and the parabolic flow.

The elliptic solve is damped explicit gradient flow on the energy

    E_delta(u) = int |grad u|^2 / 2 - max(u, delta)^(1-p) / (p-1) + f u

with the singular nonlinearity regularized through a decreasing delta
schedule: within each stage the update is

    u <- clamp(u + dt (Lap u - max(u, delta)^-p - f), 0, inf)

on interior cells, with dt = dt_safety h^2 / (2 n + p delta^(-p-1) h^2)
(diffusion CFL plus the Lipschitz constant of the regularized
nonlinearity at delta).  Steps that increase the energy are halved and
retried; accepted steps therefore have nonincreasing energy.  Convergence
is judged by the sup residual of the final-stage equation over cells with
u > 2 delta_min only: the equation is singular on the rupture set and the
weak formulation does not constrain pointwise residuals there.

Note the dt bound makes stages with delta much below h^alpha
astronomically slow (dt ~ delta^(p+1)); schedules should bottom out near
the grid resolution scale h^alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .exact import homogeneity_exponent
from .field import (
    BallRegion,
    Grid,
    ScalarField,
    distance_transform,
    gradient,
    gradient_energy_density,
    laplacian,
)


@dataclass(frozen=True)
class SolverConfig:
    p: float
    delta_schedule: tuple[float, ...]
    dt_safety: float = 0.9
    max_steps: int = 200_000
    tol_residual: float = 1e-6
    boundary: str = "dirichlet"  # "dirichlet" (fixed trace) or "neumann" (zero flux)

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        sched = tuple(float(d) for d in self.delta_schedule)
        if len(sched) == 0 or any(d <= 0 for d in sched):
            raise ValueError("delta schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("delta schedule must be strictly decreasing")
        if not (0 < self.dt_safety <= 1):
            raise ValueError("dt_safety must lie in (0, 1]")
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.boundary not in ("dirichlet", "neumann"):
            raise ValueError("boundary must be 'dirichlet' or 'neumann'")
        object.__setattr__(self, "delta_schedule", sched)

    @property
    def delta_min(self) -> float:
        return self.delta_schedule[-1]


@dataclass
class SolveResult:
    u: ScalarField
    residual_history: np.ndarray
    energy_history: np.ndarray
    converged: bool
    active_rupture_cells: int
    steps: int


def energy(
    u: ScalarField,
    f: ScalarField | None,
    region: BallRegion | None,
    delta: float,
    p: float,
) -> float:
    """int |grad u|^2/2 - max(u,delta)^(1-p)/(p-1) + f u over region (or the box).

    The Dirichlet part is the face-difference (staggered) energy, the exact
    discrete energy of the (2n+1)-point Laplacian flow.
    """
    g = u.grid
    dens = 0.5 * gradient_energy_density(u)
    dens = dens - np.maximum(u.values, delta) ** (1.0 - p) / (p - 1.0)
    if f is not None:
        dens = dens + f.values * u.values
    if region is None:
        return float(np.sum(dens) * g.cell_volume)
    sl = g.subbox(region.center, region.radius)
    d2 = g.dist2(region.center, sl)
    return float(np.sum(dens[sl][d2 < region.radius**2]) * g.cell_volume)


def _interior(shape: tuple[int, ...]) -> tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in shape)


def _lap_interior(v: np.ndarray, spacing) -> np.ndarray:
    n = v.ndim
    core = _interior(v.shape)
    acc = np.zeros_like(v[core])
    for a in range(n):
        lo = tuple(slice(1, -1) if b != a else slice(0, -2) for b in range(n))
        hi = tuple(slice(1, -1) if b != a else slice(2, None) for b in range(n))
        acc += (v[lo] - 2.0 * v[core] + v[hi]) / spacing[a] ** 2
    return acc


def _reflect_edges(v: np.ndarray) -> None:
    """Zero-flux boundary: copy the first interior layer onto each face."""
    n = v.ndim
    for a in range(n):
        lo_face = tuple(slice(None) if b != a else 0 for b in range(n))
        lo_src = tuple(slice(None) if b != a else 1 for b in range(n))
        hi_face = tuple(slice(None) if b != a else -1 for b in range(n))
        hi_src = tuple(slice(None) if b != a else -2 for b in range(n))
        v[lo_face] = v[lo_src]
        v[hi_face] = v[hi_src]


def _face_energy_sum(v: np.ndarray, spacing) -> float:
    """Sum over faces of (du/h)^2: the Dirichlet energy whose exact gradient
    (with fixed boundary cells) is the (2n+1)-point Laplacian."""
    total = 0.0
    for a in range(v.ndim):
        d = np.diff(v, axis=a)
        np.square(d, out=d)
        total += d.sum() / spacing[a] ** 2
    return float(total)


class _Stepper:
    """Shared explicit stepper for the elliptic flow and the parabolic run."""

    def __init__(self, f: ScalarField | None, cfg: SolverConfig, init: ScalarField):
        init.require_nonnegative()
        self.cfg = cfg
        self.grid = init.grid
        self.u = init.values.copy()
        self.f = None if f is None else f.values
        self.core = _interior(self.grid.shape)
        self.energy_tol = 1e-10
        self._cand = self.u.copy()
        self._rhs = np.empty_like(self.u[self.core])

    def dt_for(self, delta: float) -> float:
        g = self.grid
        h2 = g.h * g.h
        p = self.cfg.p
        lip = p * delta ** (-p - 1.0)
        return self.cfg.dt_safety * h2 / (2.0 * g.dim + lip * h2)

    def rhs(self, delta: float) -> np.ndarray:
        """Lap u - max(u,delta)^-p - f on interior cells (shared buffer)."""
        if self.cfg.boundary == "neumann":
            _reflect_edges(self.u)
        out = self._rhs
        out[...] = _lap_interior(self.u, self.grid.spacing)
        uc = np.maximum(self.u[self.core], delta)
        np.power(uc, -self.cfg.p, out=uc)
        out -= uc
        if self.f is not None:
            out -= self.f[self.core]
        return out

    def energy_of(self, values: np.ndarray, delta: float) -> float:
        """Exact Lyapunov functional of the regularized flow.

        The potential is -max(u,delta)^(1-p)/(p-1) continued LINEARLY below
        delta (slope delta^-p), so that its derivative is exactly the step's
        reaction max(u,delta)^-p; it coincides with the plain floored energy
        wherever u >= delta.  Without the continuation the floored energy is
        not monotone along the flow (the potential is flat below delta while
        the update still pushes down), and touchdown runs stall in step
        halving.
        """
        p = self.cfg.p
        hvol = self.grid.cell_volume
        e = 0.5 * _face_energy_sum(values, self.grid.spacing)
        pot = np.maximum(values, delta)
        np.power(pot, 1.0 - p, out=pot)
        e -= pot.sum() / (p - 1.0)
        e += delta ** (-p) * float(np.sum(np.minimum(values - delta, 0.0)))
        if self.f is not None:
            e += float(np.sum(self.f * values))
        return float(e * hvol)

    def step(self, dt: float, delta: float, enforce_energy: bool, e_old: float):
        """One accepted update; returns (dt_used, new_energy)."""
        rhs = self.rhs(delta)
        for _ in range(40):
            cand = self._cand
            cand[...] = self.u
            core = cand[self.core]  # view
            core += dt * rhs
            np.maximum(core, 0.0, out=core)
            if self.cfg.boundary == "neumann":
                _reflect_edges(cand)
            if not enforce_energy:
                self.u, self._cand = cand, self.u
                return dt, np.nan
            e_new = self.energy_of(cand, delta)
            if e_new <= e_old + self.energy_tol * max(1.0, abs(e_old)):
                self.u, self._cand = cand, self.u
                return dt, e_new
            dt *= 0.5
        raise ArithmeticError("energy kept increasing after 40 step halvings")

    def residual_sup(self, delta: float) -> float:
        """Sup |Lap u - max(u,delta)^-p - f| over interior cells with u > 2 delta_min.

        The sup over an empty active set is 0 (a fully-low field trivially
        meets the criterion; the equation is unconstrained there).
        """
        res = self.rhs(delta)
        active = self.u[self.core] > 2.0 * self.cfg.delta_min
        if not active.any():
            return 0.0
        return float(np.max(np.abs(res[active])))


def solve_elliptic(
    f: ScalarField | None,
    cfg: SolverConfig,
    init: ScalarField,
    trace: ScalarField | None = None,
) -> SolveResult:
    """Gradient-flow solve with Dirichlet data taken from the trace's edges.

    `trace` defaults to `init`; when given, init must match it on the box
    faces.  Returns a non-converged result with diagnostics if max_steps
    runs out (no exception).
    """
    if trace is not None:
        edge = np.ones(init.grid.shape, dtype=bool)
        edge[_interior(init.grid.shape)] = False
        if not np.array_equal(init.values[edge], trace.values[edge]):
            raise ValueError("init does not satisfy the Dirichlet trace")

    st = _Stepper(f, cfg, init)
    residuals: list[float] = []
    energies: list[float] = []
    steps = 0
    converged = False
    check_every = 20  # residual is a stop test only; probing it every step is waste
    for stage, delta in enumerate(cfg.delta_schedule):
        dt0 = st.dt_for(delta)
        e_old = st.energy_of(st.u, delta)
        energies.append(e_old)
        final = stage == len(cfg.delta_schedule) - 1
        check = delta if not final else cfg.delta_min
        while steps < cfg.max_steps:
            res = st.residual_sup(check)
            residuals.append(res)
            if res < cfg.tol_residual:
                if final:
                    converged = True
                break
            for _ in range(check_every):
                _, e_old = st.step(dt0, delta, enforce_energy=True, e_old=e_old)
                energies.append(e_old)
                steps += 1
                if steps >= cfg.max_steps:
                    break
        if steps >= cfg.max_steps:
            break

    u_out = ScalarField(init.grid, st.u, name=f"solve({init.name})")
    return SolveResult(
        u=u_out,
        residual_history=np.asarray(residuals),
        energy_history=np.asarray(energies),
        converged=converged,
        active_rupture_cells=int(np.count_nonzero(st.u <= cfg.delta_min)),
        steps=steps,
    )


def evolve_parabolic(
    u0: ScalarField,
    T: float,
    cfg: SolverConfig,
    times: list[float] | None = None,
) -> list[tuple[float, ScalarField]]:
    """Explicit run of du/dt = Lap u - u^-p, clamped at 0, snapshots at `times`.

    The dynamic equation carries no forcing.  The uniform-decay regime
    needs boundary='neumann'; a fixed Dirichlet trace pins the edges.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if times is None:
        times = list(np.linspace(0.0, T, 5)) if T > 0 else [0.0]
    times = sorted(float(t) for t in times)
    if times and (times[0] < 0 or times[-1] > T + 1e-12):
        raise ValueError("snapshot times must lie in [0, T]")

    st = _Stepper(None, cfg, u0)
    delta = cfg.delta_min
    dt0 = st.dt_for(delta)
    out: list[tuple[float, ScalarField]] = []
    t = 0.0
    for target in times:
        while t < target - 1e-15:
            dt = min(dt0, target - t)
            st.step(dt, delta, enforce_energy=False, e_old=np.nan)
            t += dt
        out.append((target, ScalarField(u0.grid, st.u.copy(), name=f"{u0.name}@t={target:g}")))
    return out


def coarsen_field(f: ScalarField) -> ScalarField:
    """2x cell-merge average (all axes must have even length)."""
    g = f.grid
    if any(s % 2 for s in g.shape):
        raise ValueError("coarsen_field needs even cell counts")
    v = f.values
    for a in range(g.dim):
        v = 0.5 * (np.take(v, np.arange(0, v.shape[a], 2), axis=a)
                   + np.take(v, np.arange(1, v.shape[a], 2), axis=a))
    cg = Grid(
        shape=tuple(s // 2 for s in g.shape),
        origin=tuple(o + 0.5 * h for o, h in zip(g.origin, g.spacing)),
        spacing=tuple(2.0 * h for h in g.spacing),
    )
    return ScalarField(cg, v, name=f.name)


def cascade_solve(
    f: ScalarField | None,
    cfg: SolverConfig,
    init: ScalarField,
    levels: int = 3,
) -> SolveResult:
    """Warm-started solve: relax on 2x-coarsened grids first, then refine.

    Pure performance device; each level runs solve_elliptic unchanged, and
    the fine-level result is the one reported.
    """
    from .field import interpolate

    inits = [init]
    fs = [f]
    for _ in range(levels - 1):
        if any(s % 2 or s < 8 for s in inits[-1].grid.shape):
            break
        inits.append(coarsen_field(inits[-1]))
        fs.append(None if fs[-1] is None else coarsen_field(fs[-1]))

    u_level = inits[-1]
    for lev in range(len(inits) - 1, -1, -1):
        if lev == 0:
            lcfg = cfg
        else:
            # coarse grids cannot resolve deltas below their own h^alpha, and
            # the dt bound ~ delta^(p+1) would stall there; lift the schedule
            alpha = homogeneity_exponent(cfg.p)
            floor = 0.5 * inits[lev].grid.h**alpha
            sched: list[float] = []
            for d in cfg.delta_schedule:
                d = max(d, floor)
                if not sched or d < sched[-1]:
                    sched.append(d)
            lcfg = SolverConfig(
                p=cfg.p,
                delta_schedule=tuple(sched),
                dt_safety=cfg.dt_safety,
                max_steps=cfg.max_steps,
                tol_residual=cfg.tol_residual,
                boundary=cfg.boundary,
            )
        res = solve_elliptic(fs[lev], lcfg, u_level)
        if lev == 0:
            return res
        # prolong the interior onto the next finer level, keep its trace
        fine = inits[lev - 1]
        axes = [fine.grid.coords(a) for a in range(fine.grid.dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = interpolate(res.u, pts)
        vals = np.where(np.isnan(vals), fine.values, vals)
        v = fine.values.copy()
        core = _interior(fine.grid.shape)
        v[core] = np.maximum(vals[core], 0.0)
        u_level = ScalarField(fine.grid, v, name=fine.name)
    raise AssertionError("unreachable")


def mountain_pass_solve(
    f: ScalarField | None,
    cfg: SolverConfig,
    low: ScalarField,
    high: ScalarField,
    bisections: int = 48,
    probe_steps: int = 40_000,
) -> SolveResult:
    """Bisect between a collapsing and a rising init to land on the saddle.

    Rupture-type stationary solutions are mountain passes of the energy (the
    linearized potential p u^(-p-1) is an inverse-square well, so they are
    unstable for the flow): plain descent either collapses to the clamped
    plate or climbs to the positive branch.  Bisecting the init family
    (1-s) low + s high across the separatrix makes the flow linger near the
    saddle, where the residual criterion of solve_elliptic triggers and the
    run stops at an approximately stationary field with rupture.

    `low` must collapse and `high` must rise; both must share the trace.
    """
    lo_v, hi_v = low.values, high.values
    edge = np.ones(low.grid.shape, dtype=bool)
    edge[_interior(low.grid.shape)] = False
    if not np.array_equal(lo_v[edge], hi_v[edge]):
        raise ValueError("low and high inits must share the Dirichlet trace")
    core = _interior(low.grid.shape)
    m_high = float(hi_v[core].min())
    collapse_level = 0.2 * m_high
    rise_level = 3.0 * m_high

    def probe(s: float):
        init = ScalarField(low.grid, (1.0 - s) * lo_v + s * hi_v, name=f"mp(s={s})")
        st = _Stepper(f, cfg, init)
        delta = cfg.delta_min
        dt0 = st.dt_for(delta)
        e = st.energy_of(st.u, delta)
        for k in range(probe_steps):
            _, e = st.step(dt0, delta, enforce_energy=True, e_old=e)
            if k % 20 == 0:
                m = st.u[core].min()
                if m < collapse_level:
                    return "collapse", st
                if m > rise_level:
                    return "rise", st
                if st.residual_sup(delta) < cfg.tol_residual:
                    return "converged", st
        return "slow", st

    s_lo, s_hi = 0.0, 1.0
    verdict, st = probe(s_lo)
    if verdict != "collapse":
        raise ValueError("low init did not collapse within the probe budget")
    verdict, st = probe(s_hi)
    if verdict == "converged":
        pass
    elif verdict != "rise":
        raise ValueError("high init did not rise within the probe budget")
    best = None
    for _ in range(bisections):
        s = 0.5 * (s_lo + s_hi)
        verdict, st = probe(s)
        if verdict == "collapse":
            s_lo = s
        elif verdict == "rise":
            s_hi = s
        else:  # converged near the saddle, or still undecided
            best = st
            if verdict == "converged":
                break
            s_hi = s  # undecided probes sit close; tighten either side
    if best is None:
        raise ArithmeticError("bisection never lingered near the saddle")
    u_out = ScalarField(low.grid, best.u.copy(), name=f"mp({low.name})")
    res = best.residual_sup(cfg.delta_min)
    return SolveResult(
        u=u_out,
        residual_history=np.array([res]),
        energy_history=np.array([best.energy_of(best.u, cfg.delta_min)]),
        converged=bool(res < cfg.tol_residual),
        active_rupture_cells=int(np.count_nonzero(best.u <= cfg.delta_min)),
        steps=0,
    )


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    sup: float
    l2: float
    cells: int


def pde_residual(
    u: ScalarField,
    f: ScalarField | None,
    p: float,
    exclusion_radius: float = 0.0,
    u_floor: float | None = None,
    exclude_mask: np.ndarray | None = None,
) -> ResidualReport:
    """Sup and L2 norms of Lap u - max(u,floor)^-p - f on interior cells.

    Cells within exclusion_radius of {u < u_floor} are excluded (the stencil
    is inconsistent at the rupture singularity), as is anything in
    exclude_mask.
    """
    from .density import default_u_floor

    g = u.grid
    if u_floor is None:
        u_floor = default_u_floor(u, p)
    lap = laplacian(u).values
    res = lap - np.maximum(u.values, u_floor) ** (-p)
    if f is not None:
        res = res - f.values
    ok = np.isfinite(res)
    if exclude_mask is not None:
        ok &= ~exclude_mask
    low = u.values < u_floor
    if exclusion_radius > 0 and low.any():
        dist = distance_transform(g, low).values
        ok &= dist > exclusion_radius
    vals = res[ok]
    if vals.size == 0:
        raise ValueError("no cells left after exclusions")
    return ResidualReport(
        sup=float(np.max(np.abs(vals))),
        l2=float(np.sqrt(np.sum(vals * vals) * g.cell_volume)),
        cells=int(vals.size),
    )


def morrey_seminorm(
    f: ScalarField,
    lam: float,
    q: float,
    centers: np.ndarray,
    radii: np.ndarray,
) -> float:
    """max over sampled (x, r) of (r^-lam int_{B_r(x)} |f|^q)^(1/q).

    A certified lower bound of the true sup (the sup is over all centers
    and radii; we scan a finite sample).
    """
    if q < 1 or lam < 0:
        raise ValueError("need q >= 1 and lam >= 0")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float)
    if centers.size == 0 or radii.size == 0:
        raise ValueError("empty sample set")
    g = f.grid
    absq = np.abs(f.values) ** q
    best = 0.0
    for x in centers:
        sl = g.subbox(x, float(radii.max()))
        d2 = g.dist2(x, sl)
        local = absq[sl]
        for r in radii:
            s = float(np.sum(local[d2 < r * r]) * g.cell_volume)
            best = max(best, (r ** (-lam) * s) ** (1.0 / q))
    return best


@dataclass(frozen=True)
class GradientTail:
    lambdas: np.ndarray
    measures: np.ndarray
    statistic: float  # sup of lambda^(2/(1-alpha)) * measure
    slope: float  # log-log slope of measure vs lambda


def gradient_tail(
    u: ScalarField,
    region: BallRegion,
    p: float,
    lambdas: np.ndarray | None = None,
) -> GradientTail:
    """Weak-Lorentz tail of |grad u| over a geometric lambda ladder."""
    alpha = homogeneity_exponent(p)
    expo = 2.0 / (1.0 - alpha)
    if lambdas is None:
        lambdas = np.geomspace(1.0, 8.0, 13)
    lambdas = np.asarray(lambdas, dtype=float)
    g = u.grid
    grad = gradient(u)
    mag = np.sqrt(np.sum(grad * grad, axis=0))
    sl = g.subbox(region.center, region.radius)
    d2 = g.dist2(region.center, sl)
    inside = d2 < region.radius**2
    local = mag[sl][inside]
    measures = np.array(
        [float(np.count_nonzero(local > lam) * g.cell_volume) for lam in lambdas]
    )
    stat = float(np.max(lambdas**expo * measures))
    pos = measures > 0
    if np.count_nonzero(pos) >= 2:
        slope = float(np.polyfit(np.log(lambdas[pos]), np.log(measures[pos]), 1)[0])
    else:
        slope = np.nan
    return GradientTail(lambdas=lambdas, measures=measures, statistic=stat, slope=slope)


def nondegeneracy_trace(u: ScalarField, x, radii, p: float) -> np.ndarray:
    """sup_{B_r(x)} u / r^alpha over the ladder (bounded away from 0 at rupture)."""
    alpha = homogeneity_exponent(p)
    g = u.grid
    out = []
    for r in np.asarray(radii, dtype=float):
        sl = g.subbox(x, r)
        d2 = g.dist2(x, sl)
        vals = u.values[sl][d2 < r * r]
        if vals.size == 0:
            raise ValueError(f"no cells inside B_{r}")
        out.append(float(np.max(vals)) / r**alpha)
    return np.asarray(out)


def interior_estimate_constants(
    u: ScalarField, x, radii, p: float, u_floor: float | None = None
) -> dict[str, float]:
    """Fitted constants of the interior estimates over a radius ladder.

    Reports max over r of int_{B_r} |grad u|^2 / r^(2a+n-2) and of
    int_{B_r} (r^a u^-p + u^(1-p)) / r^(2a+n-2), with the usual u floor.
    """
    from .density import default_u_floor

    alpha = homogeneity_exponent(p)
    if u_floor is None:
        u_floor = default_u_floor(u, p)
    g = u.grid
    grad2 = gradient_energy_density(u)
    uf = np.maximum(u.values, u_floor)
    best_grad = 0.0
    best_pot = 0.0
    for r in np.asarray(radii, dtype=float):
        sl = g.subbox(x, r)
        d2 = g.dist2(x, sl)
        inside = d2 < r * r
        scale = r ** (2.0 * alpha + g.dim - 2.0)
        ig = float(np.sum(grad2[sl][inside]) * g.cell_volume)
        ip = float(
            np.sum((r**alpha * uf ** (-p) + uf ** (1.0 - p))[sl][inside]) * g.cell_volume
        )
        best_grad = max(best_grad, ig / scale)
        best_pot = max(best_pot, ip / scale)
    return {"grad_constant": best_grad, "potential_constant": best_pot}


@dataclass(frozen=True)
class EnergyInequalityReport:
    lhs: float
    rhs: float
    defect: float  # lhs - rhs; nonnegative means the inequality holds


def energy_inequality_check(
    snapshots: list[tuple[float, ScalarField]],
    phi: ScalarField,
    psi,
    dpsi,
    p: float,
    u_floor: float | None = None,
) -> EnergyInequalityReport:
    """Localized energy inequality for a parabolic run.

    With a static space cutoff phi and time cutoff psi >= 0 (compactly
    supported in the snapshot window), evaluates

        lhs = int (|grad u|^2/2 - u^(1-p)/(p-1)) phi^2 psi'(t)
        rhs = int |du/dt|^2 phi^2 psi + 2 int du/dt (grad u . grad phi) phi psi

    by trapezoid in time and midpoint in space; time derivatives come from
    snapshot differences.  Suitable solutions give defect >= 0 up to
    discretization.
    """
    from .density import default_u_floor

    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    times = np.array([t for t, _ in snapshots])
    if np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must increase")
    g = snapshots[0][1].grid
    if u_floor is None:
        u_floor = default_u_floor(snapshots[0][1], p)
    hvol = g.cell_volume
    phi2 = phi.values**2
    gphi = gradient(phi)

    lhs_t = np.zeros(len(snapshots))
    rhs_t = np.zeros(len(snapshots))
    for i, (t, u) in enumerate(snapshots):
        gu = gradient(u)
        e_dens = 0.5 * gradient_energy_density(u) - np.maximum(u.values, u_floor) ** (
            1.0 - p
        ) / (p - 1.0)
        lhs_t[i] = np.sum(e_dens * phi2) * hvol * dpsi(t)
        if 0 < i < len(snapshots) - 1:
            du = (snapshots[i + 1][1].values - snapshots[i - 1][1].values) / (
                times[i + 1] - times[i - 1]
            )
        elif i == 0:
            du = (snapshots[1][1].values - snapshots[0][1].values) / (times[1] - times[0])
        else:
            du = (snapshots[-1][1].values - snapshots[-2][1].values) / (
                times[-1] - times[-2]
            )
        cross = np.sum(gu * gphi, axis=0)
        rhs_t[i] = (
            np.sum(du * du * phi2) * hvol + 2.0 * np.sum(du * cross * phi.values) * hvol
        ) * psi(t)

    lhs = float(np.trapezoid(lhs_t, times))
    rhs = float(np.trapezoid(rhs_t, times))
    return EnergyInequalityReport(lhs=lhs, rhs=rhs, defect=lhs - rhs)
