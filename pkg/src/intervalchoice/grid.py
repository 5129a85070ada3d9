"""Distribution functions sampled on an x-grid.

Between nodes a ``GridFunction`` is piecewise linear. On ``[0, xs[1]]`` it is
the quadratic ``q x^2`` through the first interior node, and beyond the last
node it follows ``tail_value + sum_j c_j (X/x)^p_j``; both closures keep
integrals against ``x^-2`` finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_JUMP_POWER = 1e6


class GridError(ValueError):
    pass


def make_grid(x_max: float = 40.0, n_points: int = 4096, x_min: float = 1e-3,
              extra=()) -> np.ndarray:
    """0 followed by ``n_points`` geometrically spaced nodes on [x_min, x_max]."""
    if not 0 < x_min < x_max:
        raise GridError("need 0 < x_min < x_max")
    xs = np.geomspace(x_min, x_max, n_points)
    if len(extra):
        xs = np.union1d(xs, [e for e in extra if x_min < e < x_max])
    return np.concatenate([[0.0], xs])


def fit_tail_power(xs, gaps) -> Optional[float]:
    """Power ``p`` with gap ~ x^-p from the last two nodes, or None."""
    g1, g2 = gaps[-2], gaps[-1]
    if not g2 > 0:
        return None
    if not g1 > g2:
        return _JUMP_POWER
    return math.log(g1 / g2) / math.log(xs[-1] / xs[-2])


@dataclass
class GridFunction:
    xs: np.ndarray
    values: np.ndarray
    tail_value: Optional[float] = None
    tail_terms: Optional[tuple] = None
    derivative: Optional[np.ndarray] = None
    signed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.xs.ndim != 1 or self.xs.shape != self.values.shape:
            raise GridError("xs and values must be 1-d and the same length")
        if len(self.xs) < 3 or self.xs[0] != 0.0 or np.any(np.diff(self.xs) <= 0):
            raise GridError("grid must start at 0 and increase strictly")
        if self.derivative is not None:
            self.derivative = np.asarray(self.derivative, dtype=float)
        if self.tail_value is None:
            self.tail_value = float(self.values[-1])
        if not self.signed:
            if np.any(np.diff(self.values) < 0):
                raise GridError("values must be nondecreasing")
            if self.values[0] < 0 or self.values[-1] > 1 + 1e-12 or self.tail_value < self.values[-1]:
                raise GridError("values must lie in [0, 1] below the tail value")
        if self.tail_terms is None:
            gaps = self.tail_value - self.values[-2:]
            p = fit_tail_power(self.xs[-2:], gaps) if not self.signed else None
            gap = float(self.tail_value - self.values[-1])
            if gap != 0.0 and p is None:
                p = _JUMP_POWER
            self.tail_terms = ((-gap, p),) if gap != 0.0 else ()
        self.tail_terms = tuple((float(c), float(p)) for c, p in self.tail_terms)

    @classmethod
    def from_function(cls, xs, f: Callable, tail_value: Optional[float] = None,
                      fprime: Optional[Callable] = None, **kw) -> "GridFunction":
        xs = np.asarray(xs, dtype=float)
        vals = np.asarray(f(xs), dtype=float)
        der = None if fprime is None else np.asarray(fprime(xs), dtype=float)
        return cls(xs, vals, tail_value=tail_value, derivative=der, **kw)

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    @property
    def quad_coef(self) -> float:
        """q in the near-zero model F(x) = q x^2."""
        return float(self.values[1] / self.xs[1] ** 2)

    @property
    def near_coefs(self) -> tuple[float, float]:
        """(q, r) in F(x) = q x^2 + r x^3 on [0, xs[1]].

        The cubic term is fitted to the stored derivative at ``xs[1]`` when
        one is available and is zero otherwise.
        """
        x1, v1 = self.xs[1], self.values[1]
        if self.derivative is None:
            return float(v1 / x1**2), 0.0
        d1 = self.derivative[1]
        return float((3.0 * v1 - d1 * x1) / x1**2), float((d1 * x1 - 2.0 * v1) / x1**3)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.tail_value)
        ratio = self.x_max / x
        for c, p in self.tail_terms:
            out = out + c * ratio**p
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xs, self.values)
        near = x < self.xs[1]
        if np.any(near):
            out = np.where(near, self.quad_coef * x * x, out)
        far = x > self.x_max
        if np.any(far):
            out = np.where(far, self.tail(np.where(far, x, self.x_max)), out)
        return out if out.ndim else float(out)

    def resample(self, xs) -> "GridFunction":
        xs = np.asarray(xs, dtype=float)
        vals = self(xs)
        if not self.signed:
            vals = np.clip(np.maximum.accumulate(vals), 0.0, self.tail_value)
        return GridFunction(xs, vals, tail_value=self.tail_value, signed=self.signed)

    def gauss_shape(self, nodes):
        """Points, values and slopes at Gauss nodes of every segment.

        ``nodes`` are reference points on [-1, 1]. Cubic Hermite between
        nodes when derivatives are stored, linear otherwise; the first
        segment always follows the quadratic near-zero model. Returns three
        arrays of shape (len(xs) - 1, len(nodes)).
        """
        xs, vals = self.xs, self.values
        a, b = xs[:-1], xs[1:]
        h = (b - a)[:, None]
        t = 0.5 * (np.asarray(nodes, dtype=float) + 1.0)
        z = a[:, None] + h * t[None, :]
        fa, fb = vals[:-1, None], vals[1:, None]
        if self.derivative is not None:
            da = self.derivative[:-1, None] * h
            db = self.derivative[1:, None] * h
            t2, t3 = t * t, t * t * t
            fz = (fa * (2 * t3 - 3 * t2 + 1) + da * (t3 - 2 * t2 + t)
                  + fb * (3 * t2 - 2 * t3) + db * (t3 - t2))
            dfz = (fa * (6 * t2 - 6 * t) + da * (3 * t2 - 4 * t + 1)
                   + fb * (6 * t - 6 * t2) + db * (3 * t2 - 2 * t)) / h
        else:
            slope = (fb - fa) / h
            fz = fa + slope * (z - a[:, None])
            dfz = np.broadcast_to(slope, z.shape).copy()
        q, r = self.near_coefs
        fz[0] = q * z[0] ** 2 + r * z[0] ** 3
        dfz[0] = 2.0 * q * z[0] + 3.0 * r * z[0] ** 2
        return z, fz, dfz

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.xs)

    def derivative_values(self) -> np.ndarray:
        """F' at the nodes: stored values, or centered differences."""
        if self.derivative is not None:
            return self.derivative
        s = self.slopes()
        h = np.diff(self.xs)
        d = np.empty_like(self.values)
        d[0] = 0.0
        d[1:-1] = (s[:-1] * h[1:] + s[1:] * h[:-1]) / (h[:-1] + h[1:])
        d[-1] = s[-1]
        return d

    def _combine(self, other: "GridFunction", sign: float) -> "GridFunction":
        if not np.array_equal(self.xs, other.xs):
            raise GridError("grid functions live on different grids")
        terms = tuple(self.tail_terms) + tuple((sign * c, p) for c, p in other.tail_terms)
        return GridFunction(self.xs, self.values + sign * other.values,
                            tail_value=self.tail_value + sign * other.tail_value,
                            tail_terms=terms, signed=True)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(self.xs, factor * self.values, tail_value=factor * self.tail_value,
                            tail_terms=tuple((factor * c, p) for c, p in self.tail_terms),
                            signed=True)
