"""Closed-form and quadrature-exact reference solutions.

Two families back the test suite as oracles:

* homogeneous solutions ``u(x) = c |x_perp|^alpha`` of ``Delta u = u^-p``
  with ``alpha = 2/(p+1)``; the constant is forced by substituting
  ``c r^alpha`` into the radial Laplacian of the perpendicular variables,
  giving ``c = (alpha (alpha + m - 2))^(-1/(p+1))`` where m is the
  perpendicular dimension (m = n for the radial solution, in which case
  the 2-D constant reduces to ``alpha^-alpha``);
* 1-D even convex profiles with minimum value eps > 0, built from the
  strictly increasing map

      v(s) = int_eps^s dt / sqrt(lambda (eps^(1-p) - t^(1-p))),
      lambda = 2/(p-1),

  and u(r) = v^{-1}(|r|), which satisfy u'' = u^-p with u(0) = eps,
  u'(0) = 0 and the first integral (u')^2 = lambda (eps^(1-p) - u^(1-p)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .field import Grid, ScalarField


def homogeneity_exponent(p: float) -> float:
    if p <= 1:
        raise ValueError("p must exceed 1")
    return 2.0 / (p + 1.0)


def homogeneous_coefficient(n: int, p: float, axis_dim: int = 0) -> float:
    """Coefficient c with Delta(c |x_perp|^alpha) = (c |x_perp|^alpha)^-p."""
    alpha = homogeneity_exponent(p)
    m = n - axis_dim
    if m < 2:
        raise ValueError("perpendicular dimension must be at least 2")
    return (alpha * (alpha + m - 2.0)) ** (-1.0 / (p + 1.0))


@dataclass(frozen=True)
class HomogeneousSolution:
    """u(x) = coeff * |x_perp|^alpha, optionally invariant along a k-frame."""

    dim: int
    p: float
    axis_subspace: np.ndarray | None = None  # (dim, k) orthonormal columns

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if self.axis_subspace is not None:
            v = np.atleast_2d(np.asarray(self.axis_subspace, dtype=float))
            if v.shape[0] != self.dim:
                raise ValueError("axis frame rows must equal dim")
            if not np.allclose(v.T @ v, np.eye(v.shape[1]), atol=1e-12):
                raise ValueError("axis frame must be orthonormal")
            object.__setattr__(self, "axis_subspace", v)

    @property
    def alpha(self) -> float:
        return homogeneity_exponent(self.p)

    @property
    def axis_dim(self) -> int:
        return 0 if self.axis_subspace is None else self.axis_subspace.shape[1]

    @property
    def coeff(self) -> float:
        return homogeneous_coefficient(self.dim, self.p, self.axis_dim)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        if self.axis_subspace is not None:
            v = self.axis_subspace
            pts = pts - (pts @ v) @ v.T
        r = np.sqrt(np.sum(pts * pts, axis=-1))
        return self.coeff * np.where(r > 0, r, 0.0) ** self.alpha


def homogeneous_field(sol: HomogeneousSolution, grid: Grid) -> ScalarField:
    """Sample the homogeneous solution at cell centers (exact origin -> 0)."""
    if grid.dim != sol.dim:
        raise ValueError("grid dim does not match solution dim")
    axes = [grid.coords(a) for a in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    return ScalarField(grid, sol(pts), name=f"hom(n={sol.dim},p={sol.p},k={sol.axis_dim})")


@dataclass(frozen=True)
class OdeSolution:
    """Tabulated 1-D profile u(r) = v^{-1}(|r|) with minimum eps at r = 0."""

    p: float
    eps: float
    s_table: np.ndarray  # strictly increasing u-values, s_table[0] == eps
    v_table: np.ndarray  # v(s_table), strictly increasing from 0

    @property
    def lam(self) -> float:
        return 2.0 / (self.p - 1.0)

    @property
    def r_max(self) -> float:
        return float(self.v_table[-1])

    def v(self, s: np.ndarray) -> np.ndarray:
        interp = PchipInterpolator(self.s_table, self.v_table)
        return interp(np.asarray(s, dtype=float))

    def u(self, r: np.ndarray) -> np.ndarray:
        """u(r) by monotone interpolation of the inverse map."""
        inv = PchipInterpolator(self.v_table, self.s_table)
        rr = np.abs(np.asarray(r, dtype=float))
        if np.any(rr > self.r_max * (1 + 1e-12)):
            raise ValueError(f"profile tabulated only up to |r| = {self.r_max}")
        return inv(np.minimum(rr, self.r_max))


def _v_integrand_tau(tau, p: float, eps: float):
    """Integrand after t = eps + tau^2; removes the endpoint singularity."""
    lam = 2.0 / (p - 1.0)
    tt = np.asarray(tau, dtype=float)
    t = eps + tt * tt
    inner = lam * (eps ** (1.0 - p) - t ** (1.0 - p))
    # limit of 2 tau / sqrt(inner) as tau -> 0
    limit = 2.0 / np.sqrt(lam * (p - 1.0) * eps ** (-p))
    out = np.where(tt < 1e-12, limit, 2.0 * tt / np.sqrt(np.where(inner > 0, inner, 1.0)))
    return float(out) if np.isscalar(tau) else out


def ode_profile(p: float, eps: float, s_max: float, nodes: int = 600) -> OdeSolution:
    """Tabulate v(s) on [eps, s_max] by adaptive quadrature.

    The substitution t = eps + tau^2 flattens the inverse-square-root
    endpoint singularity at t = eps, after which scipy's adaptive rule
    converges to near machine accuracy per panel.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    if not (0 < eps < s_max):
        raise ValueError("need 0 < eps < s_max")
    # grade nodes quadratically toward eps where v varies fastest
    q = np.linspace(0.0, 1.0, nodes)
    s_nodes = eps + (s_max - eps) * q * q
    tau_nodes = np.sqrt(s_nodes - eps)
    v = np.zeros(nodes)
    for j in range(1, nodes):
        val, err = integrate.quad(
            _v_integrand_tau, tau_nodes[j - 1], tau_nodes[j], args=(p, eps), limit=200
        )
        if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(val)) + 1e-12:
            raise ArithmeticError(f"profile quadrature did not converge on panel {j}")
        v[j] = v[j - 1] + val
    if np.any(np.diff(v) <= 0):
        raise ArithmeticError("tabulated profile is not strictly increasing")
    return OdeSolution(p=p, eps=eps, s_table=s_nodes, v_table=v)
