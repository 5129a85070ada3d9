"""Choice rules: distribution functions on (0, 1] that select which interval splits.

A rule is the law of the size-biased quantile level ``u`` used at each step.
``MaxK(2)`` keeps the larger of two uniformly thrown points, ``MinK(2)`` the
smaller, ``UniformChoice`` is plain i.i.d. sampling and ``Kakutani`` always
splits the largest interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

_TWO_M53 = 2.0**-53


class RuleError(ValueError):
    """Invalid rule definition or argument outside the unit interval."""


def open_uniform(rng: np.random.Generator, size=None):
    """Uniform draws strictly inside (0, 1) on the 2**-53 lattice midpoints."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * _TWO_M53


def _check_unit(u):
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise RuleError(f"argument outside [0, 1]: {u!r}")
    return arr


def _scalar_or_array(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


@dataclass(frozen=True)
class AssumptionReport:
    continuous: bool
    kappa: Optional[float]
    c: Optional[float]
    ok: bool = True
    message: str = ""


class ChoiceRule:
    """Base class. Subclasses are immutable and safe to share."""

    spec: str = ""

    def _cdf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inverse(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _density(self, u: np.ndarray) -> Optional[np.ndarray]:
        return None

    def _survival(self, u: np.ndarray) -> np.ndarray:
        """1 - Psi(u); subclasses evaluate it without cancellation near 1."""
        return 1.0 - self._cdf(u)

    def cdf(self, u):
        arr = _check_unit(u)
        return _scalar_or_array(self._cdf(arr), u)

    def inverse_cdf(self, w):
        """Generalized inverse ``inf{u : cdf(u) >= w}``."""
        arr = _check_unit(w)
        return _scalar_or_array(self._inverse(arr), w)

    def sample(self, rng: np.random.Generator, size=None):
        return self.inverse_cdf(open_uniform(rng, size))

    def density(self, u):
        arr = _check_unit(u)
        out = self._density(arr)
        if out is None:
            return None
        return _scalar_or_array(out, u)

    @property
    def has_density(self) -> bool:
        return self._density(np.array([0.5])) is not None

    def atoms(self) -> tuple[tuple[float, float], ...]:
        """Jump locations ``(u, height)`` of the distribution function."""
        return ()

    def breakpoints(self) -> np.ndarray:
        """Interior u-values where the density may be discontinuous."""
        return np.empty(0)

    def check_assumptions(self) -> AssumptionReport:
        return _fit_assumptions(self)

    def __str__(self) -> str:
        return self.spec


def _fit_assumptions(rule: ChoiceRule) -> AssumptionReport:
    # Condition only matters near u = 1, probe on u = 1 - 2^-j.
    continuous = not rule.atoms()
    j = np.arange(1, 41)
    gap = np.ldexp(1.0, -j)
    u = 1.0 - gap
    rest = rule._survival(u)
    if np.any(rest <= 0.0):
        return AssumptionReport(
            continuous, None, None, ok=False,
            message="1 - Psi(u) vanishes before u = 1",
        )
    slope = math.log(rest[-1] / rest[-2]) / math.log(gap[-1] / gap[-2])
    kappa = max(1.0, slope)
    c = float(np.min(rest / gap**kappa))
    ok = continuous and c > 0.0
    msg = "" if continuous else "Psi has jumps"
    return AssumptionReport(continuous, kappa, c, ok=ok, message=msg)


@dataclass(frozen=True)
class MaxK(ChoiceRule):
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise RuleError(f"max-k needs an integer k >= 1, got {self.k}")

    @property
    def spec(self):
        return f"max:{self.k}"

    def _cdf(self, u):
        return u**self.k

    def _inverse(self, w):
        if self.k == 2:
            return np.sqrt(w)
        return w ** (1.0 / self.k)

    def _density(self, u):
        return self.k * u ** (self.k - 1)

    def check_assumptions(self):
        return AssumptionReport(True, 1.0, 1.0)


@dataclass(frozen=True)
class MinK(ChoiceRule):
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise RuleError(f"min-k needs an integer k >= 1, got {self.k}")

    @property
    def spec(self):
        return f"min:{self.k}"

    def _cdf(self, u):
        return 1.0 - (1.0 - u) ** self.k

    def _survival(self, u):
        return (1.0 - u) ** self.k

    def _inverse(self, w):
        return -np.expm1(np.log1p(-w) / self.k)

    def _density(self, u):
        return self.k * (1.0 - u) ** (self.k - 1)

    def check_assumptions(self):
        return AssumptionReport(True, float(self.k), 1.0)


@dataclass(frozen=True)
class UniformChoice(ChoiceRule):
    spec = "uniform"

    def _cdf(self, u):
        return np.array(u, dtype=float, copy=True)

    def _inverse(self, w):
        return np.array(w, dtype=float, copy=True)

    def _density(self, u):
        return np.ones_like(u, dtype=float)

    def check_assumptions(self):
        return AssumptionReport(True, 1.0, 1.0)


@dataclass(frozen=True)
class Kakutani(ChoiceRule):
    """Unit mass at u = 1: the largest interval is always split."""

    spec = "kakutani"

    def _cdf(self, u):
        return np.where(u >= 1.0, 1.0, 0.0)

    def _inverse(self, w):
        return np.ones_like(w, dtype=float)

    def atoms(self):
        return ((1.0, 1.0),)

    def check_assumptions(self):
        return AssumptionReport(False, None, None, ok=False, message="Psi has jumps")


@dataclass(frozen=True)
class Tabulated(ChoiceRule):
    """Piecewise-linear distribution function through ``(u, Psi(u))`` knots.

    A knot ``(0, 0)`` is prepended when the table starts above zero.
    """

    knots: tuple = field(default=())
    source: str = ""

    def __post_init__(self):
        pts = np.asarray(self.knots, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
            raise RuleError("table needs (u, psi) pairs")
        if pts[0, 0] > 0.0:
            pts = np.vstack([[0.0, 0.0], pts])
        u, p = pts[:, 0], pts[:, 1]
        if np.any(np.diff(u) <= 0):
            raise RuleError("table u-values must be strictly increasing")
        if np.any(np.diff(p) < 0):
            raise RuleError("table psi-values must be nondecreasing")
        if u[0] != 0.0 or p[0] != 0.0:
            raise RuleError("table must start at (0, 0)")
        if u[-1] != 1.0 or p[-1] != 1.0:
            raise RuleError("table must end with the knot (1, 1)")
        if np.any(p < 0) or np.any(p > 1):
            raise RuleError("table psi-values must lie in [0, 1]")
        object.__setattr__(self, "knots", tuple(map(tuple, pts.tolist())))
        object.__setattr__(self, "_u", u)
        object.__setattr__(self, "_p", p)

    @property
    def spec(self):
        return f"table:{self.source}" if self.source else "table"

    def _cdf(self, u):
        return np.interp(u, self._u, self._p)

    def _survival(self, u):
        # interpolate 1 - Psi from the right knot; 1 - u is exact near 1
        u = np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(self._u, u, side="right"), 1, len(self._u) - 1)
        s0, s1 = 1.0 - self._p[i - 1], 1.0 - self._p[i]
        w = (self._u[i] - u) / (self._u[i] - self._u[i - 1])
        return s1 + (s0 - s1) * w

    def _inverse(self, w):
        u, p = self._u, self._p
        i = np.searchsorted(p, w, side="left")
        i = np.clip(i, 1, len(p) - 1)
        lo_p, hi_p = p[i - 1], p[i]
        span = np.where(hi_p > lo_p, hi_p - lo_p, 1.0)
        frac = np.clip((w - lo_p) / span, 0.0, 1.0)
        out = u[i - 1] + frac * (u[i] - u[i - 1])
        return np.where(w <= 0.0, 0.0, out)

    def breakpoints(self):
        return self._u[1:-1].copy()

    @classmethod
    def from_file(cls, path) -> "Tabulated":
        rows = _read_pairs(path)
        return cls(knots=tuple(rows), source=str(path))


@dataclass(frozen=True)
class DensityRule(ChoiceRule):
    """Distribution with a piecewise-linear density given on a u-grid.

    The density is renormalized to unit mass.
    """

    us: tuple = field(default=())
    values: tuple = field(default=())
    source: str = ""

    def __post_init__(self):
        u = np.asarray(self.us, dtype=float)
        d = np.asarray(self.values, dtype=float)
        if u.ndim != 1 or u.shape != d.shape or len(u) < 2:
            raise RuleError("density needs matching u and value arrays")
        if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
            raise RuleError("density grid must increase strictly from 0 to 1")
        if np.any(d < 0):
            raise RuleError("density must be nonnegative")
        seg = 0.5 * (d[1:] + d[:-1]) * np.diff(u)
        total = seg.sum()
        if total <= 0:
            raise RuleError("density has zero mass")
        d = d / total
        cum = np.concatenate([[0.0], np.cumsum(seg / total)])
        cum[-1] = 1.0
        object.__setattr__(self, "us", tuple(u.tolist()))
        object.__setattr__(self, "values", tuple(d.tolist()))
        object.__setattr__(self, "_u", u)
        object.__setattr__(self, "_d", d)
        object.__setattr__(self, "_c", cum)
        tail = np.concatenate([np.cumsum((seg / total)[::-1])[::-1], [0.0]])
        object.__setattr__(self, "_tail", tail)

    @property
    def spec(self):
        return f"density:{self.source}" if self.source else "density"

    def _segment(self, u):
        i = np.clip(np.searchsorted(self._u, u, side="right") - 1, 0, len(self._u) - 2)
        return i

    def _cdf(self, u):
        i = self._segment(u)
        h = self._u[i + 1] - self._u[i]
        s = u - self._u[i]
        d0, d1 = self._d[i], self._d[i + 1]
        return np.minimum(self._c[i] + d0 * s + (d1 - d0) * s * s / (2 * h), 1.0)

    def _inverse(self, w):
        i = np.clip(np.searchsorted(self._c, w, side="left") - 1, 0, len(self._u) - 2)
        h = self._u[i + 1] - self._u[i]
        d0, d1 = self._d[i], self._d[i + 1]
        a = (d1 - d0) / (2 * h)
        r = np.maximum(w - self._c[i], 0.0)
        disc = np.sqrt(np.maximum(d0 * d0 + 4 * a * r, 0.0))
        denom = d0 + disc
        s = np.where(denom > 0, 2 * r / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(self._u[i] + np.minimum(s, h), 0.0, 1.0)

    def _density(self, u):
        return np.interp(u, self._u, self._d)

    def _survival(self, u):
        # mass to the right of u: rest of the segment plus later segments
        i = self._segment(u)
        r = self._u[i + 1] - u
        return self._tail[i + 1] + 0.5 * r * (self._density(u) + self._d[i + 1])

    def breakpoints(self):
        return self._u[1:-1].copy()

    @classmethod
    def from_file(cls, path) -> "DensityRule":
        rows = np.asarray(_read_pairs(path))
        return cls(us=tuple(rows[:, 0]), values=tuple(rows[:, 1]), source=str(path))


def _read_pairs(path) -> list[tuple[float, float]]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise RuleError(f"{path}:{lineno}: expected 'u,psi'")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise RuleError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise RuleError(f"{path}: empty table")
    return rows


def parse_rule(text: str) -> ChoiceRule:
    """Parse ``max:K``, ``min:K``, ``uniform``, ``kakutani``, ``table:PATH``
    or ``density:PATH``."""
    text = text.strip()
    name, _, arg = text.partition(":")
    name = name.lower()
    if name in ("max", "min"):
        try:
            k = int(arg)
        except ValueError:
            raise RuleError(f"bad rule {text!r}: K must be an integer") from None
        return MaxK(k) if name == "max" else MinK(k)
    if name == "uniform" and not arg:
        return UniformChoice()
    if name == "kakutani" and not arg:
        return Kakutani()
    if name == "table" and arg:
        return Tabulated.from_file(arg)
    if name == "density" and arg:
        return DensityRule.from_file(arg)
    raise RuleError(f"unrecognized rule {text!r}")
