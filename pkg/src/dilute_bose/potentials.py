"""Piecewise-constant radial pair potentials.

A potential is a list of ``(r_lo, r_hi, value)`` segments covering ``[0, R0]``
with the half-open convention ``[r_lo, r_hi)``; it vanishes for ``r > R0``.
The positive-core metadata ``r1``, ``lambda_plus`` and the global floor
``lambda_minus`` are declared by the caller and checked against the segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Segment = tuple[float, float, float]


@dataclass(frozen=True)
class RadialPotential:
    segments: tuple[Segment, ...]
    R0: float
    r1: float = 0.0
    lambda_plus: float = 0.0
    lambda_minus: float | None = None
    _edges: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple((float(lo), float(hi), float(val)) for lo, hi, val in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "R0", float(self.R0))
        object.__setattr__(self, "r1", float(self.r1))
        object.__setattr__(self, "lambda_plus", float(self.lambda_plus))

        if segs:
            if segs[0][0] != 0.0:
                raise ValueError(f"first segment must start at r=0, got {segs[0][0]}")
            for (lo, hi, _), nxt in zip(segs, segs[1:] + (None,)):
                if not lo < hi:
                    raise ValueError(f"segment [{lo}, {hi}) is empty or reversed")
                if nxt is not None and nxt[0] != hi:
                    raise ValueError(f"segments leave a gap or overlap at r={hi}")
            if segs[-1][1] != self.R0:
                raise ValueError(f"segments end at {segs[-1][1]} but R0={self.R0}")
        elif self.R0 != 0.0:
            raise ValueError("a potential without segments must have R0=0")

        values = np.array([s[2] for s in segs], dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("segment values must be finite")

        floor = max(0.0, -float(values.min())) if segs else 0.0
        if self.lambda_minus is None:
            object.__setattr__(self, "lambda_minus", floor)
        else:
            object.__setattr__(self, "lambda_minus", float(self.lambda_minus))
        if self.lambda_minus < 0 or self.lambda_plus < 0 or self.r1 < 0:
            raise ValueError("r1, lambda_plus and lambda_minus must be nonnegative")
        if floor > self.lambda_minus:
            raise ValueError(
                f"declared lambda_minus={self.lambda_minus} but v reaches {-floor}"
            )
        if self.r1 > self.R0:
            raise ValueError(f"r1={self.r1} exceeds R0={self.R0}")
        # segments meeting the open core [0, r1)
        for lo, hi, val in segs:
            if lo < self.r1 and val < self.lambda_plus:
                raise ValueError(
                    f"segment [{lo}, {hi}) has value {val} < lambda_plus={self.lambda_plus}"
                )

        edges = np.array([s[0] for s in segs] + ([self.R0] if segs else []), dtype=float)
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_values", values)

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[float]], **meta) -> "RadialPotential":
        triples = [tuple(t) for t in triples]
        R0 = triples[-1][1] if triples else 0.0
        return cls(tuple(triples), R0=meta.pop("R0", R0), **meta)

    @classmethod
    def zero(cls) -> "RadialPotential":
        return cls((), R0=0.0)

    @classmethod
    def square(cls, V0: float, R0: float, **meta) -> "RadialPotential":
        """Square barrier (V0 > 0) or well (V0 < 0) on [0, R0]."""
        if V0 > 0:
            meta.setdefault("r1", R0)
            meta.setdefault("lambda_plus", V0)
        return cls(((0.0, R0, V0),), R0=R0, **meta)

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def is_zero(self) -> bool:
        return not self.segments or not np.any(self._values)

    def __call__(self, r):
        return evaluate(self, r)


def evaluate(v: RadialPotential, r):
    """Value of ``v`` at radius ``r`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("radius must be nonnegative")
    if not v.segments:
        out = np.zeros_like(r_arr)
    else:
        idx = np.searchsorted(v._edges, r_arr, side="right") - 1
        inside = r_arr < v.R0
        out = np.where(inside, v._values[np.clip(idx, 0, len(v._values) - 1)], 0.0)
    return float(out) if out.ndim == 0 else out


def scale(v: RadialPotential, a: float) -> RadialPotential:
    """Return ``v^a(r) = a^-2 v(r/a)``."""
    if not a > 0:
        raise ValueError(f"scale factor must be positive, got {a}")
    if a == 1.0:
        return v
    a2 = a * a
    segs = tuple((lo * a, hi * a, val / a2) for lo, hi, val in v.segments)
    return RadialPotential(
        segs,
        R0=v.R0 * a,
        r1=v.r1 * a,
        lambda_plus=v.lambda_plus / a2,
        lambda_minus=v.lambda_minus / a2,
    )


def decompose(v: RadialPotential) -> tuple[RadialPotential, RadialPotential]:
    """Split ``v`` into a nonnegative part and a nonpositive part on the same segments."""
    plus = tuple((lo, hi, max(val, 0.0)) for lo, hi, val in v.segments)
    minus = tuple((lo, hi, val - max(val, 0.0)) for lo, hi, val in v.segments)
    v_plus = RadialPotential(plus, R0=v.R0, r1=v.r1, lambda_plus=v.lambda_plus, lambda_minus=0.0)
    v_minus = RadialPotential(minus, R0=v.R0, lambda_minus=v.lambda_minus)
    return v_plus, v_minus


def combine(v: RadialPotential, w: RadialPotential, cv: float = 1.0, cw: float = 1.0) -> RadialPotential:
    """Segmentwise ``cv*v + cw*w`` on the union of both partitions."""
    R0 = max(v.R0, w.R0)
    if R0 == 0.0:
        return RadialPotential.zero()
    knots = np.unique(np.concatenate([v.edges, w.edges, [0.0, R0]]))
    mids = 0.5 * (knots[:-1] + knots[1:])
    vals = cv * np.asarray(evaluate(v, mids)) + cw * np.asarray(evaluate(w, mids))
    segs = tuple((float(lo), float(hi), float(val)) for lo, hi, val in zip(knots[:-1], knots[1:], vals))
    return RadialPotential(segs, R0=R0)
