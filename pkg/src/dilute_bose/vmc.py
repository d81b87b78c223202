"""Metropolis sampling of |Phi_N|^2 and the variational energy estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from dilute_bose.potentials import RadialPotential
from dilute_bose.trial_state import (
    GradientAtZeroAmplitude,
    ParticleConfiguration,
    TrialParams,
    _f_eval,
    _factor,
    _grad_log,
    _log_factors,
    _min_image,
    build_trial,
)

TARGET_ACCEPTANCE = 0.5
TUNE_EVERY = 20  # sweeps between step-size updates during burn-in
MIN_BLOCKS = 32


class NonFiniteSample(FloatingPointError):
    pass


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    stderr: float
    n_samples: int
    n_burn_in: int
    acceptance_rate: float
    ratio_to_bogoliubov: float
    ratio_stderr: float
    Y_up: float
    L: float
    N: int
    seed: int | None = None


@numba.njit(cache=True)
def _pair_potential(d, edges, values):
    n = values.shape[0]
    if n == 0 or d >= edges[n]:
        return 0.0
    return values[np.searchsorted(edges, d, side="right") - 1]


@numba.njit(cache=True)
def _local_integrand(pos, sc, ftab, fptab, edges, values):
    grad, ok = _grad_log(pos, sc, ftab, fptab)
    if not ok:
        return math.nan
    total = 0.0
    n = pos.shape[0]
    for i in range(n):
        total += grad[i, 0] ** 2 + grad[i, 1] ** 2 + grad[i, 2] ** 2
    L = sc[7]
    for i in range(n):
        for j in range(i):
            total += _pair_potential(_min_image(pos, i, j, L)[3], edges, values)
    return total


G_MAX = 1e6


@numba.njit(cache=True)
def _guide_term(d, sc, ftab, fptab):
    # 1/f^2 inside R_tilde: cancels the pair's own suppression in |Phi|^2
    if d >= sc[2]:
        return 0.0
    f = _f_eval(d, sc, ftab, fptab)[0]
    if f * f * G_MAX <= 1.0:
        return G_MAX
    return 1.0 / (f * f)


@numba.njit(cache=True)
def _guide_sum(pos, sc, ftab, fptab):
    n = pos.shape[0]
    L = sc[7]
    total = 0.0
    for i in range(n):
        for j in range(i):
            total += _guide_term(_min_image(pos, i, j, L)[3], sc, ftab, fptab)
    return total


@numba.njit(cache=True)
def _particle_guide(pos, k, sc, ftab, fptab):
    n = pos.shape[0]
    L = sc[7]
    total = 0.0
    for j in range(n):
        if j != k:
            total += _guide_term(_min_image(pos, k, j, L)[3], sc, ftab, fptab)
    return total


@numba.njit(cache=True)
def _sweeps(pos, logF, sc, ftab, fptab, edges, values, step, lam, n_sweeps, picks, shifts, coins, measure):
    """Run ``n_sweeps`` sweeps of N single-particle moves on |Phi|^2 (1 + lam*G).

    Returns the accepted-move count, the local integrand after every sweep
    (if ``measure``) and the guide weight ``1 + lam*G`` at the same instants.
    """
    n = pos.shape[0]
    L, b = sc[7], sc[1]
    out = np.empty(n_sweeps if measure else 0)
    weight = np.empty(n_sweeps if measure else 0)
    old = np.empty(3)
    new_logF = np.empty(n)
    touched_before = np.zeros(n, dtype=np.bool_)
    G = _guide_sum(pos, sc, ftab, fptab) if lam > 0.0 else 0.0
    accepted = 0
    t = 0
    for s in range(n_sweeps):
        for _ in range(n):
            k = picks[t]
            old[:] = pos[k]
            g_old = _particle_guide(pos, k, sc, ftab, fptab) if lam > 0.0 else 0.0
            # particles p > k whose factor may involve k: within b before or after the move
            for p in range(k + 1, n):
                touched_before[p] = _min_image(pos, p, k, L)[3] < b
            for c in range(3):
                x = old[c] + step * (shifts[t, c] - 0.5)
                pos[k, c] = x - L * math.floor(x / L)
            delta = 0.0
            zero = False
            for p in range(k, n):
                if p > k and not touched_before[p] and _min_image(pos, p, k, L)[3] >= b:
                    new_logF[p] = logF[p]
                    continue
                F = _factor(p, pos, sc, ftab, fptab)[0]
                if F <= 0.0:
                    zero = True
                    break
                new_logF[p] = math.log(F)
                delta += new_logF[p] - logF[p]
            log_ratio = 2.0 * delta
            G_new = G
            if lam > 0.0 and not zero:
                G_new = G - g_old + _particle_guide(pos, k, sc, ftab, fptab)
                if G_new < 0.0:
                    G_new = 0.0
                log_ratio += math.log((1.0 + lam * G_new) / (1.0 + lam * G))
            if not zero and (log_ratio >= 0.0 or coins[t] < math.exp(log_ratio)):
                for p in range(k, n):
                    logF[p] = new_logF[p]
                G = G_new
                accepted += 1
            else:
                pos[k] = old
            t += 1
        if lam > 0.0:
            # refresh against drift of the running sum
            G = _guide_sum(pos, sc, ftab, fptab)
        if measure:
            out[s] = _local_integrand(pos, sc, ftab, fptab, edges, values)
            weight[s] = 1.0 + lam * G
    return accepted, out, weight


class MetropolisChain:
    """Single-particle Metropolis walk, deterministic given ``seed``.

    Proposals displace one uniformly chosen particle inside a cube of side
    ``step`` centred on it, wrapped into the box. With ``guide=0`` the target
    is |Phi_N|^2. A positive ``guide`` samples |Phi_N|^2 (1 + guide*G) instead,
    where G sums 1/f^2 over pairs closer than R_tilde; averages are then
    reweighted by 1/(1 + guide*G), see ``reweighted_mean``.
    """

    def __init__(self, params: TrialParams, N: int, L: float, seed: int, step: float | None = None,
                 positions: np.ndarray | None = None, guide: float = 0.0):
        if not params.free and params.b >= L / 2:
            raise ValueError(f"b={params.b} must be below L/2={L / 2}")
        if guide < 0:
            raise ValueError("guide strength must be nonnegative")
        self.params = params
        self.N = N
        self.L = float(L)
        self.guide = 0.0 if params.free else float(guide)
        self.rng = np.random.default_rng(seed)
        self.step = float(step) if step is not None else min(self.L, max(params.b, 1e-3 * self.L))
        if not self.step > 0:
            raise ValueError("step must be positive")
        self._sc = params.packed
        self._sc[7] = self.L
        self._edges = np.ascontiguousarray(params.v_scaled.edges, dtype=float)
        self._values = np.ascontiguousarray(params.v_scaled.values, dtype=float)
        if positions is None:
            positions = self.rng.uniform(0.0, self.L, size=(N, 3))
        self.pos = ParticleConfiguration(positions, self.L).positions.copy()
        self.logF = _log_factors(self.pos, self._sc, params.f_table, params.f_prime_table)
        if not np.all(np.isfinite(self.logF)):
            raise ValueError("initial configuration has zero amplitude")
        self.n_moves = 0
        self.n_accepted = 0
        self.weights = np.ones(0)

    @property
    def configuration(self) -> ParticleConfiguration:
        return ParticleConfiguration(self.pos.copy(), self.L)

    def run(self, n_sweeps: int, measure: bool = True) -> np.ndarray:
        """Advance ``n_sweeps`` sweeps; returns the integrand after each (empty if not measuring).

        The matching guide weights are left in ``self.weights``.
        """
        n_moves = n_sweeps * self.N
        picks = self.rng.integers(0, self.N, size=n_moves)
        shifts = self.rng.random((n_moves, 3))
        coins = self.rng.random(n_moves)
        acc, samples, weights = _sweeps(
            self.pos, self.logF, self._sc, self.params.f_table, self.params.f_prime_table,
            self._edges, self._values, self.step, self.guide, n_sweeps, picks, shifts, coins, measure,
        )
        self.n_moves += n_moves
        self.n_accepted += acc
        self.weights = weights
        return samples

    def burn_in(self, n_sweeps: int, tune: bool = True) -> None:
        """Equilibrate; with ``tune`` the step is steered toward 50% acceptance, then frozen."""
        done = 0
        while done < n_sweeps:
            chunk = min(TUNE_EVERY, n_sweeps - done)
            before_moves, before_acc = self.n_moves, self.n_accepted
            self.run(chunk, measure=False)
            done += chunk
            if tune:
                rate = (self.n_accepted - before_acc) / (self.n_moves - before_moves)
                self.step = float(np.clip(self.step * math.exp(rate - TARGET_ACCEPTANCE), 1e-6 * self.L, self.L))
        self.n_moves = 0
        self.n_accepted = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_moves if self.n_moves else math.nan


def default_guide_strength(params: TrialParams, N: int) -> float:
    """Guide strength putting about half the sampling weight on close-pair configurations.

    Under |Phi|^2 the expected guide sum is roughly the number of pairs times
    the R_tilde-ball volume fraction; its inverse balances the two parts.
    """
    if params.free:
        return 0.0
    pairs = N * (N - 1) / 2
    expected = pairs * (4.0 * math.pi / 3.0) * params.R_tilde**3 / params.L**3
    return 1.0 / expected


def local_variational_integrand(config: ParticleConfiguration, params: TrialParams,
                                v_scaled: RadialPotential | None = None) -> float:
    """``sum_i |grad_i log Phi|^2 + sum_{i<j} v^a(d_ij)``; its |Phi|^2 average is the energy."""
    v_scaled = params.v_scaled if v_scaled is None else v_scaled
    sc = params.packed
    sc[7] = config.L
    val = _local_integrand(config.positions, sc, params.f_table, params.f_prime_table,
                           np.asarray(v_scaled.edges, dtype=float), np.asarray(v_scaled.values, dtype=float))
    if math.isnan(val):
        raise GradientAtZeroAmplitude("configuration has zero amplitude")
    return float(val)


def metropolis_chain(params: TrialParams, v_scaled: RadialPotential | None, N: int, L: float, seed: int,
                     step: float, n_steps: int) -> tuple[np.ndarray, float]:
    """``n_steps`` sweeps on |Phi_N|^2 at a fixed step.

    Returns per-sweep integrand samples and the acceptance rate.
    """
    chain = MetropolisChain(params, N, L, seed, step=step)
    if v_scaled is not None:
        chain._edges = np.asarray(v_scaled.edges, dtype=float)
        chain._values = np.asarray(v_scaled.values, dtype=float)
    samples = chain.run(n_steps)
    return samples, chain.acceptance_rate


def reweighted_mean(samples: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Ratio estimate ``<x/w> / <1/w>`` with a blocked, linearised standard error."""
    inv = 1.0 / np.asarray(weights, dtype=float)
    x = np.asarray(samples, dtype=float)
    norm = inv.mean()
    mean = float((x * inv).mean() / norm)
    z = (x - mean) * inv / norm
    return mean, blocking_stderr(z)


def blocking_levels(samples: np.ndarray) -> list[tuple[int, float, float]]:
    """``(block_size, stderr, stderr_uncertainty)`` for block sizes 1, 2, 4, ..."""
    x = np.asarray(samples, dtype=float)
    levels = []
    size = 1
    while len(x) >= 2:
        n = len(x)
        err = math.sqrt(np.var(x, ddof=1) / n)
        levels.append((size, err, err / math.sqrt(2.0 * (n - 1))))
        if n % 2:
            x = x[1:]
        x = 0.5 * (x[0::2] + x[1::2])
        size *= 2
    return levels


def blocking_stderr(samples: np.ndarray) -> float:
    """Standard error at the first blocking level consistent with every later one.

    Only levels with at least MIN_BLOCKS blocks are considered.
    """
    n = len(samples)
    if n < 2:
        return math.nan
    levels = blocking_levels(samples)
    usable = [lv for lv in levels if n // lv[0] >= MIN_BLOCKS] or levels[:1]
    for i, (_, err, _) in enumerate(usable):
        if all(err >= later - 2.0 * dlater for _, later, dlater in usable[i + 1:]):
            return err
    return usable[-1][1]


def estimate_upper_bound(
    v: RadialPotential,
    a: float | None,
    rho: float,
    N: int,
    seed: int,
    n_samples: int,
    n_burn_in: int,
    step: float | None = None,
    params: TrialParams | None = None,
    guide: float | None = None,
) -> EnergyEstimate:
    """Variational energy of the trial state for N particles at density rho.

    One sample is taken per sweep of N moves; ``n_samples`` and ``n_burn_in``
    count sweeps. ``guide`` defaults to ``default_guide_strength``; pass 0 for
    plain |Phi|^2 sampling.
    """
    if params is None:
        params = build_trial(v, a, rho, N)
    L = params.L
    if params.free:
        return EnergyEstimate(0.0, 0.0, n_samples, n_burn_in, 1.0, math.nan, math.nan, 0.0, L, N, seed)
    if guide is None:
        guide = default_guide_strength(params, N)
    chain = MetropolisChain(params, N, L, seed, step=step, guide=guide)
    chain.burn_in(n_burn_in, tune=step is None)
    samples = chain.run(n_samples)
    if not np.all(np.isfinite(samples)):
        raise NonFiniteSample(f"{np.count_nonzero(~np.isfinite(samples))} non-finite samples")
    mean, err = reweighted_mean(samples, chain.weights)
    bogoliubov = 4.0 * math.pi * params.a * rho * N
    return EnergyEstimate(
        mean=mean,
        stderr=err,
        n_samples=n_samples,
        n_burn_in=n_burn_in,
        acceptance_rate=chain.acceptance_rate,
        ratio_to_bogoliubov=mean / bogoliubov,
        ratio_stderr=err / bogoliubov,
        Y_up=params.Y_up,
        L=L,
        N=N,
        seed=seed,
    )


def merge_estimates(values, errors, weighting: str = "inverse-variance") -> tuple[float, float]:
    """Combine independent estimates; ``weighting`` is "inverse-variance" or "equal"."""
    values = np.asarray(values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if weighting == "equal":
        return float(values.mean()), float(math.sqrt(np.sum(errors**2)) / len(values))
    if weighting != "inverse-variance":
        raise ValueError(f"unknown weighting {weighting!r}")
    w = 1.0 / errors**2
    return float(np.sum(w * values) / np.sum(w)), float(1.0 / math.sqrt(np.sum(w)))


@numba.njit(cache=True)
def _last_factor_sq(pos, sc, ftab, fptab, trials):
    n = pos.shape[0]
    L = sc[7]
    acc = 0.0
    for t in range(trials.shape[0]):
        for c in range(3):
            pos[n - 1, c] = trials[t, c] * L
        F = _factor(n - 1, pos, sc, ftab, fptab)[0]
        acc += F * F
    return acc / trials.shape[0]


def norm_ratio_probe(
    params: TrialParams,
    v_scaled: RadialPotential | None,
    N: int,
    L: float,
    seed: int,
    n_samples: int,
    n_burn_in: int | None = None,
    draws_per_sample: int = 16,
) -> tuple[float, float]:
    """Estimate ``|Phi_N|^2 / (|Phi_{N-1}|^2 Lambda)`` and its standard error.

    Since ``Phi_N = Phi_{N-1} F_N``, this is the average of ``F_N^2`` with the
    first N-1 particles drawn from ``|Phi_{N-1}|^2`` and the last uniform.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if params.free:
        return 1.0, 0.0
    chain = MetropolisChain(params, N - 1, L, seed)
    chain.burn_in(n_burn_in if n_burn_in is not None else max(100, n_samples // 10))
    sc = chain._sc
    work = np.empty((N, 3))
    values = np.empty(n_samples)
    for s in range(n_samples):
        chain.run(1, measure=False)
        work[: N - 1] = chain.pos
        trials = chain.rng.random((draws_per_sample, 3))
        values[s] = _last_factor_sq(work, sc, params.f_table, params.f_prime_table, trials)
    return float(values.mean()), blocking_stderr(values)
