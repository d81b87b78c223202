"""Zero-energy scattering: radial solver, scattering length, energy functional,
and the hypothesis checks for the lower bound.

The reduced radial function ``u(r) = r f(r)`` obeys ``u'' = v(r) u / 2`` with
``u(0) = 0``, ``u'(0) = 1``. Beyond the support it is linear, ``u = c (r - a)``,
which gives the scattering length ``a`` as a two-parameter fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from dilute_bose.potentials import RadialPotential, combine, decompose


class ScatteringError(RuntimeError):
    pass


class BoundStateSuspected(ScatteringError):
    """The zero-energy solution has a node, so ``-Laplacian + v/2`` binds."""


class DegenerateTail(ScatteringError):
    """The exterior solution is not linear to within the fit tolerance."""


TAIL_RESIDUAL_TOL = 1e-9
MIN_TAIL_POINTS = 20


@numba.njit(cache=True)
def _rk4_piece(u, du, k, h):
    # classical RK4 for (u, u')' = (u', k u) with constant k
    k1u, k1d = du, k * u
    k2u, k2d = du + 0.5 * h * k1d, k * (u + 0.5 * h * k1u)
    k3u, k3d = du + 0.5 * h * k2d, k * (u + 0.5 * h * k2u)
    k4u, k4d = du + h * k3d, k * (u + h * k3u)
    u_new = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    du_new = du + h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
    return u_new, du_new


@numba.njit(cache=True)
def _integrate(edges, values, h, n_steps):
    u = np.empty(n_steps + 1)
    du = np.empty(n_steps + 1)
    u[0] = 0.0
    du[0] = 1.0
    n_seg = values.shape[0]
    R0 = edges[n_seg] if n_seg > 0 else 0.0
    seg = 0
    for i in range(n_steps):
        r = i * h
        r_end = (i + 1) * h
        uu, dd = u[i], du[i]
        if r >= R0:
            # free region: RK4 is exact for a linear function
            uu, dd = _rk4_piece(uu, dd, 0.0, h)
        else:
            # split the step at every segment boundary it straddles
            pos = r
            while pos < r_end:
                while seg < n_seg and edges[seg + 1] <= pos:
                    seg += 1
                k = 0.5 * values[seg] if seg < n_seg else 0.0
                stop = r_end
                if seg < n_seg and edges[seg + 1] < r_end:
                    stop = edges[seg + 1]
                uu, dd = _rk4_piece(uu, dd, k, stop - pos)
                pos = stop
        u[i + 1] = uu
        du[i + 1] = dd
    return u, du


@dataclass(frozen=True)
class ScatteringSolution:
    grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    a: float
    R0: float
    f_infinity_normalized: bool
    slope: float
    tail_residual: float

    @property
    def f(self) -> np.ndarray:
        """``f = u / r`` with the r -> 0 limit ``u'(0)``."""
        out = np.empty_like(self.u)
        out[1:] = self.u[1:] / self.grid[1:]
        out[0] = self.du[0]
        return out

    @property
    def df(self) -> np.ndarray:
        out = np.empty_like(self.u)
        r = self.grid[1:]
        out[1:] = (self.du[1:] * r - self.u[1:]) / (r * r)
        # f'(0) = u''(0)/2 = v(0) u(0)/4 = 0
        out[0] = 0.0
        return out


def solve_zero_energy(
    v: RadialPotential,
    r_max: float | None = None,
    n_steps: int = 100_000,
    normalize: bool = True,
) -> ScatteringSolution:
    """Integrate the zero-energy radial equation outward and extract ``a``.

    Raises BoundStateSuspected if ``u`` has a node on ``(0, inf)`` and
    DegenerateTail if the exterior solution fails the linear fit.
    """
    if r_max is None:
        r_max = 4.0 * v.R0 if v.R0 > 0 else 4.0
    if n_steps < 1000:
        raise ValueError(f"n_steps must be at least 1000, got {n_steps}")
    if r_max < 2.0 * v.R0 or r_max <= 0:
        raise ValueError(f"r_max={r_max} must be at least 2*R0={2 * v.R0}")

    h = r_max / n_steps
    grid = np.arange(n_steps + 1) * h
    grid[-1] = r_max
    if v.is_zero:
        return ScatteringSolution(grid=grid, u=grid.copy(), du=np.ones_like(grid), a=0.0, R0=v.R0,
                                  f_infinity_normalized=normalize, slope=1.0, tail_residual=0.0)
    u, du = _integrate(v.edges, v.values, h, n_steps)

    tail = grid > v.R0
    if np.count_nonzero(tail) < MIN_TAIL_POINTS:
        raise DegenerateTail(f"only {np.count_nonzero(tail)} grid points beyond R0")
    rt, ut = grid[tail], u[tail]
    r_mid = float(rt.mean())
    design = np.column_stack([rt - r_mid, np.ones_like(rt)])
    (slope, level), *_ = np.linalg.lstsq(design, ut, rcond=None)
    scale_u = np.max(np.abs(u))
    residual = float(np.max(np.abs(design @ (slope, level) - ut)))

    # sign changes anywhere on the grid, or a tail heading to a node past r_max
    nodes = np.count_nonzero(u[1:-1] * u[2:] <= 0.0)
    if nodes or slope <= 0.0:
        raise BoundStateSuspected(
            f"zero-energy solution has a node (grid sign changes={nodes}, tail slope={slope:.3g})"
        )
    if residual > TAIL_RESIDUAL_TOL * scale_u:
        raise DegenerateTail(f"tail fit residual {residual:.3g} exceeds {TAIL_RESIDUAL_TOL:g}*|u|")

    a = float(r_mid - level / slope)
    if normalize:
        u = u / slope
        du = du / slope
        residual /= slope
    return ScatteringSolution(
        grid=grid,
        u=u,
        du=du,
        a=a,
        R0=v.R0,
        f_infinity_normalized=normalize,
        slope=float(slope),
        tail_residual=residual,
    )


def scattering_length(v: RadialPotential, n_steps: int = 100_000) -> float:
    if v.is_zero:
        return 0.0
    return solve_zero_energy(v, n_steps=n_steps).a


def energy_functional(grid, phi, v: RadialPotential, dphi=None) -> float:
    """``(1/4pi) * E[phi]`` for a radial profile, by trapezoidal quadrature.

    ``dphi`` defaults to second-order finite differences of ``phi``. The
    potential term is integrated segment by segment, with ``phi`` interpolated
    linearly onto the segment edges, so the jumps of ``v`` cost no accuracy.
    """
    grid = np.asarray(grid, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if grid.shape != phi.shape:
        raise ValueError(f"grid has shape {grid.shape} but phi has {phi.shape}")
    if dphi is None:
        dphi = np.gradient(phi, grid, edge_order=2)
    else:
        dphi = np.asarray(dphi, dtype=float)
        if dphi.shape != grid.shape:
            raise ValueError(f"grid has shape {grid.shape} but dphi has {dphi.shape}")
    kinetic = float(np.trapezoid(dphi**2 * grid**2, grid))
    weight = phi**2 * grid**2
    potential = 0.0
    for lo, hi, val in v.segments:
        lo, hi = max(lo, grid[0]), min(hi, grid[-1])
        if hi <= lo or val == 0.0:
            continue
        inner = (grid > lo) & (grid < hi)
        r = np.concatenate([[lo], grid[inner], [hi]])
        w = np.concatenate([[np.interp(lo, grid, weight)], weight[inner], [np.interp(hi, grid, weight)]])
        potential += 0.5 * val * float(np.trapezoid(w, r))
    return kinetic + potential


@dataclass(frozen=True)
class ConditionReport:
    sl_combined: float
    core_ok: bool
    sl_ok: bool
    bound_state: bool
    t: float
    c1: float
    c2: float
    lambda_plus: float
    lambda_minus: float
    r1: float
    R0: float

    @property
    def passed(self) -> bool:
        return self.core_ok and self.sl_ok

    @property
    def inputs_echo(self) -> tuple:
        return (self.t, self.c1, self.c2, self.lambda_plus, self.lambda_minus, self.r1, self.R0)

    def as_text(self) -> str:
        rows = [
            ("sl_combined", repr(self.sl_combined)),
            ("sl_ok", str(self.sl_ok).lower()),
            ("bound_state", str(self.bound_state).lower()),
            ("core_ok", str(self.core_ok).lower()),
            ("passed", str(self.passed).lower()),
            ("t", repr(self.t)),
            ("c1", repr(self.c1)),
            ("c2", repr(self.c2)),
            ("lambda_plus", repr(self.lambda_plus)),
            ("lambda_minus", repr(self.lambda_minus)),
            ("r1", repr(self.r1)),
            ("R0", repr(self.R0)),
        ]
        return "\n".join(f"{k}={val}" for k, val in rows) + "\n"


def check_theorem2(
    v: RadialPotential,
    t: float,
    c1: float | None = None,
    c2: float | None = None,
) -> ConditionReport:
    """Test ``SL[c1 (v + t v_-)] >= 0`` and ``lambda_+ >= (1 + 1/t) c2 lambda_-``.

    Missing ``c1``/``c2`` come from the covering constants at ``R0/r1``.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if c1 is None or c2 is None:
        if v.r1 <= 0:
            raise ValueError("default c1, c2 need a declared positive core radius r1")
        from dilute_bose.lower_bound import default_c_constants

        d1, d2 = default_c_constants(v.R0 / v.r1)
        c1 = d1 if c1 is None else c1
        c2 = d2 if c2 is None else c2
    if c1 < 1 or c2 < 1:
        raise ValueError(f"c1 and c2 must be at least 1, got c1={c1}, c2={c2}")

    _, v_minus = decompose(v)
    w = combine(v, v_minus, c1, c1 * t)
    bound = False
    try:
        sl = scattering_length(w)
    except BoundStateSuspected:
        sl, bound = -math.inf, True
    core_ok = v.lambda_plus >= (1.0 + 1.0 / t) * c2 * v.lambda_minus
    return ConditionReport(
        sl_combined=sl,
        core_ok=bool(core_ok),
        sl_ok=bool(sl >= 0.0 and not bound),
        bound_state=bound,
        t=float(t),
        c1=float(c1),
        c2=float(c2),
        lambda_plus=v.lambda_plus,
        lambda_minus=v.lambda_minus,
        r1=v.r1,
        R0=v.R0,
    )


def check_corollary2_narrowness(v: RadialPotential) -> float:
    """L1 norm of the negative part, summed over spherical shells."""
    total = 0.0
    for lo, hi, val in v.segments:
        if val < 0:
            total += 4.0 * math.pi / 3.0 * (hi**3 - lo**3) * -val
    return total
