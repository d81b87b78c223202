"""Lower-bound pipeline: soft annulus potential, cell-wise Temple bound,
piecewise cell floors and the geometric covering constants.

Every unnamed constant of the estimates is an explicit argument (default 1)
and is echoed back in the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dilute_bose.potentials import RadialPotential, decompose
from dilute_bose.scattering import scattering_length


class NegativeTempleGap(ArithmeticError):
    """The Temple denominator ``3 pi Y / l^2 - 4 a n^2 / l^3`` is not positive."""


MAX_TABLE_N = 100
COVER_SAMPLES = 9


@dataclass(frozen=True)
class SoftPotential:
    """Constant potential on the annulus ``inner <= r <= outer`` with integral 4 pi."""

    inner: float
    outer: float
    value: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where((r >= self.inner) & (r <= self.outer), self.value, 0.0)
        return float(out) if out.ndim == 0 else out


def soft_potential(a: float, R0: float, R: float) -> SoftPotential:
    inner = R0 * a
    if not R > inner:
        raise ValueError(f"outer radius R={R} must exceed the core radius R0*a={inner}")
    return SoftPotential(inner=inner, outer=float(R), value=3.0 / (R**3 - inner**3))


def temple_factors(n: int, ell: float, a: float, R: float, R0: float, Y_low: float,
                   const: float = 1.0) -> dict[str, float]:
    """The separate factors of the Temple cell bound, keyed by name."""
    gap = 3.0 * math.pi * Y_low / ell**2 - 4.0 * a * n * n / ell**3
    if gap <= 0:
        raise NegativeTempleGap(f"Temple gap {gap:.6g} <= 0 at n={n}")
    return {
        "leading": 4.0 * math.pi * a * n / ell**3,
        "pair": 1.0 - 1.0 / n,
        "const": 1.0 - const * Y_low,
        "boundary": (1.0 - 2.0 * R / ell) ** 3,
        "density": 1.0 / (1.0 + 4.0 * math.pi * n / 3.0 * (2.0 * R / ell) ** 3),
        "temple": 1.0 - 3.0 * a * n / (math.pi * (R**3 - (a * R0) ** 3) * gap),
        "gap": gap,
    }


def temple_cell_bound(n: int, ell: float, a: float, R: float, R0: float, Y_low: float, rho: float,
                      const: float = 1.0) -> float:
    """Per-particle Temple lower bound for ``n`` particles in a cell of side ``ell``."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    n_max = 8.0 / 3.0 * rho * ell**3 / Y_low
    if n > n_max * (1 + 1e-12):
        raise ValueError(f"n={n} exceeds the small-occupancy range {n_max:.6g}")
    fac = temple_factors(n, ell, a, R, R0, Y_low, const)
    val = fac["leading"] * fac["pair"] * fac["const"] * fac["boundary"] * fac["density"] * fac["temple"]
    return val + 0.0  # turns -0.0 at n=1 into 0.0


def cell_energy_floor(n: int, ell: float, rho: float, a: float, Y_low: float, const_C: float = 1.0) -> float:
    """Piecewise per-particle floor: few-particle branch below ``4 l^3 rho``, ``8 pi a rho`` above."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    damp = 1.0 - const_C * Y_low
    crossover = 4.0 * ell**3 * rho
    few = 4.0 * math.pi * a * n / ell**3 * (1.0 - 1.0 / n) * damp
    many = 8.0 * math.pi * a * rho * damp
    if n < crossover:
        return few
    if n > crossover:
        return many
    return max(few, many)


@dataclass(frozen=True)
class TempleEntry:
    n: int
    bound: float  # nan when the Temple gap is not positive
    floor: float
    gap_ok: bool


@dataclass(frozen=True)
class LowerBoundReport:
    a: float
    rho: float
    a3rho: float
    Y_low: float
    R: float
    ell: float
    epsilon: float
    sl_plus: float
    t: float
    const: float
    const_C: float
    core_radius: float
    soft: SoftPotential
    temple_cell_values: tuple[TempleEntry, ...] = field(repr=False)
    floor_per_particle: float
    floor_terms: dict = field(repr=False)

    @property
    def epsilon_admissible(self) -> bool:
        return self.epsilon < self.t / (2.0 * (1.0 + self.t))

    @property
    def R_ok(self) -> bool:
        """``R >= 2 R0 a``, which only holds once the density is small enough."""
        return self.R >= 2.0 * self.core_radius

    @property
    def ordering_ok(self) -> bool:
        return self.core_radius < self.R < self.ell

    def as_text(self) -> str:
        rows = [
            ("a", self.a), ("rho", self.rho), ("a3rho", self.a3rho), ("Y_low", self.Y_low),
            ("R", self.R), ("ell", self.ell), ("epsilon", self.epsilon), ("sl_plus", self.sl_plus),
            ("t", self.t), ("const", self.const), ("const_C", self.const_C),
            ("core_radius", self.core_radius), ("soft_value", self.soft.value),
        ]
        lines = [f"{k}={format(float(val), '.17g')}" for k, val in rows]
        lines += [f"{k}={format(float(val), '.17g')}" for k, val in self.floor_terms.items()]
        lines.append(f"floor_per_particle={format(self.floor_per_particle, '.17g')}")
        lines.append(f"epsilon_admissible={str(self.epsilon_admissible).lower()}")
        lines.append(f"R_ok={str(self.R_ok).lower()}")
        lines.append(f"ordering_ok={str(self.ordering_ok).lower()}")
        lines.append(f"temple_gap_failures={sum(not e.gap_ok for e in self.temple_cell_values)}")
        return "\n".join(lines) + "\n"

    def table_csv(self) -> str:
        out = ["n,temple_bound,floor"]
        for e in self.temple_cell_values:
            out.append(f"{e.n},{format(e.bound, '.17g')},{format(e.floor, '.17g')}")
        return "\n".join(out) + "\n"


def assemble_lemma1(v: RadialPotential, a: float | None, rho: float, const_C: float = 1.0,
                    t: float = 1.0, const: float = 1.0) -> LowerBoundReport:
    """Lower-bound parameters and cell table for ``v`` rescaled to scattering length ``a``.

    ``a=None`` keeps ``v`` as given. ``SL[v_+]`` is measured in units of
    ``SL[v]``, so it is scale free.
    """
    sl = scattering_length(v)
    if not sl > 0:
        raise ValueError(f"potential must have a positive scattering length, got {sl}")
    a = sl if a is None else float(a)
    if not (a > 0 and rho > 0):
        raise ValueError("a and rho must be positive")
    a3rho = a**3 * rho
    if not a3rho < 1:
        raise ValueError(f"a^3 rho={a3rho} must be below 1")
    v_plus, _ = decompose(v)
    sl_plus = scattering_length(v_plus) / sl
    R0 = v.R0 / sl  # range in units of the scattering length

    Y = a3rho ** (1.0 / 17.0)
    R = a * a3rho ** (-5.0 / 17.0)
    ell = a * Y**-6
    eps = 3.0 * Y / min(1.0, sl_plus)
    soft = soft_potential(a, R0, R)

    n_top = int(math.floor(min(MAX_TABLE_N, 8.0 / 3.0 * rho * ell**3 / Y) * (1 + 1e-12)))
    table = []
    for n in range(1, n_top + 1):
        floor = cell_energy_floor(n, ell, rho, a, Y, const_C)
        try:
            bound = temple_cell_bound(n, ell, a, R, R0, Y, rho, const)
            table.append(TempleEntry(n, bound, floor, True))
        except NegativeTempleGap:
            table.append(TempleEntry(n, math.nan, floor, False))

    bogoliubov = 4.0 * math.pi * a * rho
    terms = {"bogoliubov": bogoliubov, "C_Y": const_C * Y, "C_term": -bogoliubov * const_C * Y}
    return LowerBoundReport(
        a=a, rho=float(rho), a3rho=a3rho, Y_low=Y, R=R, ell=ell, epsilon=eps, sl_plus=sl_plus,
        t=float(t), const=float(const), const_C=float(const_C), core_radius=R0 * a, soft=soft,
        temple_cell_values=tuple(table), floor_per_particle=bogoliubov * (1.0 - const_C * Y),
        floor_terms=terms,
    )


def _axis_gaps(c: float, side: float, radius: float) -> np.ndarray:
    # squared distance from coordinate c to every lattice interval [k s, (k+1) s] within reach
    k = np.arange(math.floor((c - radius) / side) - 1, math.ceil((c + radius) / side) + 2)
    gap = np.maximum(0.0, np.maximum(k * side - c, c - (k + 1) * side))
    return np.sort(gap**2)


def cubes_within(centre, radius: float, side: float = 0.5) -> int:
    """Number of lattice cubes of the given side at distance strictly below ``radius``."""
    gx, gy, gz = (_axis_gaps(float(c), side, radius) for c in centre)
    r2 = radius * radius
    xy = (gx[:, None] + gy[None, :]).ravel()
    xy = xy[xy < r2]
    return int(np.searchsorted(gz, r2 - xy, side="left").sum())


def max_cubes_within(radius: float, side: float = 0.5, samples: int = COVER_SAMPLES) -> int:
    """Maximum of ``cubes_within`` over a grid of centres in one cell.

    By the cube symmetries it suffices to sample ``0 <= x <= y <= z <= side/2``;
    the grid has ``samples`` points per axis, endpoints included.
    """
    pts = np.linspace(0.0, side / 2.0, samples)
    best = 0
    for i, x in enumerate(pts):
        for j in range(i, samples):
            for k in range(j, samples):
                best = max(best, cubes_within((x, pts[j], pts[k]), radius, side))
    return best


def covering_constants(ratio: float, samples: int = COVER_SAMPLES) -> tuple[int, int, int]:
    """``(n1, n2, n3)`` for cubes of side ``r1/2`` and interaction range ``ratio * r1``.

    n2 counts cubes meeting a ball of radius ``ratio`` and n3 those within
    ``3 * ratio``, both maximised over sampled ball centres. n1 is the least
    integer >= 3 with ``n1^2 / n2 >= 2 n1``, which makes
    ``g^2/n2 - g >= g^2/(2 n2)`` for every ``g >= n1``.
    """
    if ratio < 0:
        raise ValueError(f"ratio must be nonnegative, got {ratio}")
    if ratio == 0:
        return 3, 1, 1
    n2 = max_cubes_within(ratio, samples=samples)
    n3 = max_cubes_within(3.0 * ratio, samples=samples)
    n1 = max(3, 2 * n2)
    return n1, n2, n3


def default_c_constants(ratio: float) -> tuple[float, float]:
    n1, n2, n3 = covering_constants(ratio)
    c1 = 4.0 * n1
    c2 = max(2.0 * math.sqrt(n2 * n3), n2 * n3 / (4.0 * n1))
    return c1, c2
