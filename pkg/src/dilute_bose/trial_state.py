"""Generalized Dyson trial state ``Phi_N = prod_p F_p`` in a periodic box.

Each factor ``F_p`` looks at the particles ``j < p`` (so the state depends on
the labelling). Particles closer than ``R_tilde`` enter through the one
minimising ``f``; farther ones through the nearest of them, blended by the
cutoff ``T``. Particle indices are 0-based: particle 0 has no predecessors
and ``F_0 = 1``.

The numba kernels take the trial parameters packed as a scalar vector plus
the core tables, see ``TrialParams.packed``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate

from dilute_bose.potentials import RadialPotential, scale
from dilute_bose.scattering import scattering_length, solve_zero_energy

log = logging.getLogger(__name__)

N_TABLE = 10_000

# regime codes returned by the kernels
FIRST, THETA_IN, THETA_OUT, THETA_PLUS, THETA_MINUS = 0, 1, 2, 3, 4
REGIME_NAMES = {FIRST: "first", THETA_IN: "in", THETA_OUT: "out", THETA_PLUS: "plus", THETA_MINUS: "minus"}

# layout of the packed scalar vector
_A, _B, _RT, _CORE, _NORM, _TIN, _HTAB, _L = range(8)


class TrialStateError(ValueError):
    pass


class BoxTooSmall(TrialStateError):
    pass


class InvalidTruncation(TrialStateError):
    pass


class GradientAtZeroAmplitude(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrialParams:
    a: float
    rho: float
    N: int
    L: float
    Y_up: float
    b: float
    R_tilde: float
    core: float  # support radius of the scaled potential, R0*a
    M: float
    v_scaled: RadialPotential
    f_table: np.ndarray = field(repr=False)
    f_prime_table: np.ndarray = field(repr=False)
    standing_assumption: bool = True

    @property
    def free(self) -> bool:
        return self.a == 0.0

    @property
    def T_inner(self) -> float:
        """Radius where T starts to fall; collapses to b when 2*R_tilde >= b."""
        return min(2.0 * self.R_tilde, self.b)

    @property
    def packed(self) -> np.ndarray:
        h = self.core / (len(self.f_table) - 1) if self.core > 0 else 1.0
        norm = 1.0 - self.a / self.b if self.b > 0 else 1.0
        return np.array(
            [self.a, self.b, self.R_tilde, self.core, norm, self.T_inner, h, self.L],
            dtype=float,
        )

    def f(self, r):
        return _vectorized(self, r)[0]

    def f_prime(self, r):
        return _vectorized(self, r)[1]

    def T(self, r):
        return _vectorized(self, r)[2]

    def T_prime(self, r):
        return _vectorized(self, r)[3]

    def tabulate(self, n: int = N_TABLE) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """f and f' on ``n`` uniform intervals of ``[0, b]``."""
        r = np.linspace(0.0, self.b, n + 1)
        return r, self.f(r), self.f_prime(r)


def _vectorized(params: TrialParams, r):
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty((4,) + r_arr.shape)
    sc = params.packed
    for idx, rr in enumerate(r_arr.flat):
        fv, fp = _f_eval(rr, sc, params.f_table, params.f_prime_table)
        tv, tp = _T_eval(rr, sc)
        out[0].flat[idx], out[1].flat[idx], out[2].flat[idx], out[3].flat[idx] = fv, fp, tv, tp
    if np.ndim(r) == 0:
        return tuple(float(o[0]) for o in out)
    return tuple(out)


def build_trial(
    v: RadialPotential,
    a: float | None,
    rho: float,
    N: int,
    L: float | None = None,
    n_table: int = N_TABLE,
) -> TrialParams:
    """Trial-state constants for the potential rescaled to scattering length ``a``.

    ``v`` may have any positive scattering length; it is rescaled so that the
    pair potential in the box has scattering length exactly ``a``. With
    ``a=None`` the scattering length of ``v`` itself is used, i.e. ``v`` is
    taken as the physical potential.
    """
    if L is None:
        L = (N / rho) ** (1.0 / 3.0)
    if v.is_zero or a == 0.0:
        return TrialParams(
            a=0.0, rho=rho, N=N, L=L, Y_up=0.0, b=0.0, R_tilde=0.0, core=0.0, M=1.0,
            v_scaled=RadialPotential.zero(),
            f_table=np.ones(2), f_prime_table=np.zeros(2),
        )
    sl = scattering_length(v)
    if a is None:
        a = sl
    if not sl > 0 or not a > 0:
        raise TrialStateError(f"trial state needs a positive scattering length (SL(v)={sl}, a={a})")
    v_a = scale(v, a / sl)

    diluteness = 4.0 * math.pi / 3.0 * a**3 * rho
    if diluteness > 1.0:
        raise InvalidTruncation(f"(4pi/3) a^3 rho = {diluteness:.4g} exceeds 1")
    Y_up = diluteness**0.25
    b = a / Y_up
    core = v_a.R0
    R_tilde = max(core, 2.0 * a)
    if b >= L / 2:
        raise BoxTooSmall(f"b={b:.6g} must be below L/2={L / 2:.6g}")
    if b <= core or b <= a:
        raise InvalidTruncation(f"b={b:.6g} does not exceed the support {core:.6g} and a={a:.6g}")
    ok = b > max(2.0 * core, 4.0 * a)
    if not ok:
        log.warning("b=%.6g violates b > max(2 R0 a, 4 a) = %.6g; T degenerates to a step at b",
                    b, max(2.0 * core, 4.0 * a))

    sol = solve_zero_energy(v_a, r_max=2.0 * core, n_steps=2 * n_table)
    norm = 1.0 - a / b
    f_table = sol.f[: n_table + 1] / norm
    f_prime_table = sol.df[: n_table + 1] / norm
    # f on [core, b] is (1 - a/r)/norm <= 1, so the maximum is in the core or at b
    M = max(1.0, float(f_table.max()))
    params = TrialParams(
        a=float(a), rho=rho, N=N, L=float(L), Y_up=Y_up, b=b, R_tilde=R_tilde, core=core, M=M,
        v_scaled=v_a, f_table=f_table, f_prime_table=f_prime_table, standing_assumption=ok,
    )
    if not params.f(R_tilde) > 0.5:
        raise InvalidTruncation(f"f(R_tilde)={params.f(R_tilde)} is not above 1/2")
    return params


@numba.njit(cache=True)
def _f_eval(r, sc, ftab, fptab):
    a, b, core, norm, h = sc[_A], sc[_B], sc[_CORE], sc[_NORM], sc[_HTAB]
    if a == 0.0 or r >= b:
        return 1.0, 0.0
    if r >= core:
        return (1.0 - a / r) / norm, a / (r * r) / norm
    # cubic Hermite on the core table; f' is the exact derivative of this interpolant
    n = ftab.shape[0] - 1
    i = int(r / h)
    if i >= n:
        i = n - 1
    s = r / h - i
    s2 = s * s
    s3 = s2 * s
    y0, y1 = ftab[i], ftab[i + 1]
    m0, m1 = fptab[i] * h, fptab[i + 1] * h
    val = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * m1
    der = (6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * m1
    return val, der / h


@numba.njit(cache=True)
def _T_eval(r, sc):
    b, t_in = sc[_B], sc[_TIN]
    if r <= t_in and r < b:
        return 1.0, 0.0
    if r >= b:
        return 0.0, 0.0
    denom = 1.0 / t_in - 1.0 / b
    return (1.0 / r - 1.0 / b) / denom, -1.0 / (r * r) / denom


@numba.njit(cache=True)
def _min_image(pos, i, j, L):
    dx = pos[i, 0] - pos[j, 0]
    dy = pos[i, 1] - pos[j, 1]
    dz = pos[i, 2] - pos[j, 2]
    dx -= L * np.round(dx / L)
    dy -= L * np.round(dy / L)
    dz -= L * np.round(dz / L)
    return dx, dy, dz, math.sqrt(dx * dx + dy * dy + dz * dz)


@numba.njit(cache=True)
def _factor(p, pos, sc, ftab, fptab):
    """F_p and its neighbour statistics: (F, regime, i_p, j_p, r_p, R_p, f(r_p), f(R_p), T, T')."""
    L, RT = sc[_L], sc[_RT]
    if p == 0 or sc[_A] == 0.0:
        return 1.0, FIRST, -1, -1, math.nan, math.nan, 1.0, 1.0, 0.0, 0.0
    i_p, j_p = -1, -1
    r_p, R_p = math.nan, math.inf
    f_r = math.inf
    n_in = 0
    for j in range(p):
        d = _min_image(pos, p, j, L)[3]
        if d <= RT:
            n_in += 1
            fv = _f_eval(d, sc, ftab, fptab)[0]
            if fv < f_r or (fv == f_r and d < r_p):
                f_r, r_p, i_p = fv, d, j
        elif d < R_p:
            R_p, j_p = d, j
    if n_in == p:
        return f_r, THETA_IN, i_p, -1, r_p, RT, f_r, math.nan, 1.0, 0.0
    f_R = _f_eval(R_p, sc, ftab, fptab)[0]
    if n_in == 0:
        return f_R, THETA_OUT, -1, j_p, math.nan, R_p, math.nan, f_R, 0.0, 0.0
    T, Tp = _T_eval(R_p, sc)
    diff = f_R - f_r
    if diff >= 0.0:
        return f_r, THETA_PLUS, i_p, j_p, r_p, R_p, f_r, f_R, T, Tp
    return f_r + T * diff, THETA_MINUS, i_p, j_p, r_p, R_p, f_r, f_R, T, Tp


@numba.njit(cache=True)
def _log_factors(pos, sc, ftab, fptab):
    n = pos.shape[0]
    out = np.empty(n)
    for p in range(n):
        F = _factor(p, pos, sc, ftab, fptab)[0]
        out[p] = math.log(F) if F > 0.0 else -math.inf
    return out


@numba.njit(cache=True)
def _grad_log(pos, sc, ftab, fptab):
    n = pos.shape[0]
    L = sc[_L]
    grad = np.zeros((n, 3))
    ok = True
    for p in range(1, n):
        F, regime, i_p, j_p, r_p, R_p, f_r, f_R, T, Tp = _factor(p, pos, sc, ftab, fptab)
        if F <= 0.0:
            ok = False
            continue
        # coefficients c with grad_{i_p} F_p = -n^r c_r and grad_{j_p} F_p = -n^R c_R
        c_r, c_R = 0.0, 0.0
        if regime == THETA_IN or regime == THETA_PLUS:
            c_r = _f_eval(r_p, sc, ftab, fptab)[1]
        elif regime == THETA_OUT:
            c_R = _f_eval(R_p, sc, ftab, fptab)[1]
        elif regime == THETA_MINUS:
            c_r = _f_eval(r_p, sc, ftab, fptab)[1] * (1.0 - T)
            c_R = T * _f_eval(R_p, sc, ftab, fptab)[1] + Tp * (f_R - f_r)
        if c_r != 0.0 and r_p > 0.0:
            dx, dy, dz, d = _min_image(pos, p, i_p, L)
            s = c_r / (d * F)
            grad[i_p, 0] -= s * dx
            grad[i_p, 1] -= s * dy
            grad[i_p, 2] -= s * dz
            grad[p, 0] += s * dx
            grad[p, 1] += s * dy
            grad[p, 2] += s * dz
        if c_R != 0.0:
            dx, dy, dz, d = _min_image(pos, p, j_p, L)
            s = c_R / (d * F)
            grad[j_p, 0] -= s * dx
            grad[j_p, 1] -= s * dy
            grad[j_p, 2] -= s * dz
            grad[p, 0] += s * dx
            grad[p, 1] += s * dy
            grad[p, 2] += s * dz
    return grad, ok


@dataclass
class ParticleConfiguration:
    positions: np.ndarray
    L: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        self.positions = np.mod(pos, self.L)
        # np.mod can round up to L itself for tiny negative inputs
        self.positions[self.positions >= self.L] = 0.0

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def uniform(cls, N: int, L: float, rng: np.random.Generator) -> "ParticleConfiguration":
        return cls(rng.uniform(0.0, L, size=(N, 3)), L)

    def distance(self, i: int, j: int) -> float:
        return _min_image(self.positions, i, j, self.L)[3]


@dataclass(frozen=True)
class NeighborStats:
    p: int
    r_p: float | None
    R_p: float
    i_p: int | None
    j_p: int | None
    theta_in: bool
    theta_out: bool
    theta_plus: bool
    theta_minus: bool
    F: float

    @property
    def regime(self) -> str:
        for name in ("theta_in", "theta_out", "theta_plus", "theta_minus"):
            if getattr(self, name):
                return name.removeprefix("theta_")
        return "first"


def _check_box(config: ParticleConfiguration, params: TrialParams):
    if not params.free and abs(config.L - params.L) > 1e-12 * params.L:
        raise ValueError(f"configuration box L={config.L} differs from the trial box L={params.L}")


def neighbor_stats(config: ParticleConfiguration, p: int, params: TrialParams) -> NeighborStats:
    if not 0 <= p < config.N:
        raise IndexError(f"particle index {p} outside 0..{config.N - 1}")
    _check_box(config, params)
    F, regime, i_p, j_p, r_p, R_p, *_ = _factor(
        p, config.positions, params.packed, params.f_table, params.f_prime_table
    )
    if regime == FIRST:
        R_p = params.R_tilde
    return NeighborStats(
        p=p,
        r_p=None if math.isnan(r_p) else float(r_p),
        R_p=float(R_p),
        i_p=None if i_p < 0 else int(i_p),
        j_p=None if j_p < 0 else int(j_p),
        theta_in=regime == THETA_IN,
        theta_out=regime == THETA_OUT,
        theta_plus=regime == THETA_PLUS,
        theta_minus=regime == THETA_MINUS,
        F=float(F),
    )


def evaluate_F_p(config: ParticleConfiguration, p: int, params: TrialParams) -> float:
    return neighbor_stats(config, p, params).F


def log_psi(config: ParticleConfiguration, params: TrialParams) -> float:
    """``sum_p log F_p``; ``-inf`` when some factor vanishes."""
    _check_box(config, params)
    return float(np.sum(_log_factors(config.positions, params.packed, params.f_table, params.f_prime_table)))


def grad_log_psi(config: ParticleConfiguration, params: TrialParams) -> np.ndarray:
    """``grad_k log Phi_N`` for every particle, shape (N, 3)."""
    _check_box(config, params)
    grad, ok = _grad_log(config.positions, params.packed, params.f_table, params.f_prime_table)
    if not ok:
        raise GradientAtZeroAmplitude("some F_p vanishes; log-gradient undefined")
    return grad


def error_integrals(params: TrialParams) -> tuple[float, float]:
    """``K = int |f'| dx`` over the ball of radius b and ``L = int |T'| dx``."""
    if params.free:
        return 0.0, 0.0

    def shell(fun, lo, hi):
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(lambda r: abs(fun(r)) * r * r, lo, hi, limit=200)
        return 4.0 * math.pi * val

    r_core = np.linspace(0.0, params.core, len(params.f_table))
    K_core = 4.0 * math.pi * np.trapezoid(np.abs(params.f_prime_table) * r_core**2, r_core)
    K = float(K_core) + shell(params.f_prime, params.core, params.b)
    L_int = shell(params.T_prime, params.T_inner, params.b)
    return K, L_int
