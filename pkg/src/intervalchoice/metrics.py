"""Norms, distances, entropy and drift of distribution functions on a grid.

Integrals are closed form on the piecewise-linear model wherever possible.
When a function carries nodal derivatives (solver output does), the
unsigned integrals switch to cubic Hermite segments and Gauss quadrature,
which removes the O(h^2) interpolation bias.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from intervalchoice._stieltjes import TailDivergence, segment_measure
from intervalchoice.grid import GridFunction
from intervalchoice.psi import ChoiceRule

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_L1LOC_TERMS = 30


class DivergenceError(ArithmeticError):
    """An integral does not converge under the available closures."""


def _as_grid(f) -> GridFunction:
    if isinstance(f, GridFunction):
        return f
    raise TypeError(f"expected a GridFunction, got {type(f).__name__}")


def _common(F: GridFunction, G: GridFunction):
    if np.array_equal(F.xs, G.xs):
        return F, G
    xs = np.union1d(F.xs, G.xs)
    return (GridFunction(xs, F(xs), tail_value=F.tail_value, tail_terms=F.tail_terms, signed=True),
            GridFunction(xs, G(xs), tail_value=G.tail_value, tail_terms=G.tail_terms, signed=True))


def _abs_linear_weighted(a, b, fa, fb, kind):
    """int_a^b w(x) |f| for linear f, with w = x^-2 ('candy'), 1/x or 1.

    Segments with a sign change are split at the root.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    fa = np.asarray(fa, float)
    fb = np.asarray(fb, float)
    cross = (fa * fb) < 0
    r = np.where(cross, a + fa / np.where(cross, fa - fb, 1.0) * (b - a), b)
    total = _signed_piece(a, r, fa, np.where(cross, 0.0, fb), kind)
    total = np.abs(total)
    tail = np.where(cross, np.abs(_signed_piece(r, b, np.zeros_like(fb), fb, kind)), 0.0)
    return total + tail


def _signed_piece(a, b, fa, fb, kind):
    h = b - a
    safe = np.where(h > 0, h, 1.0)
    beta = np.where(h > 0, (fb - fa) / safe, 0.0)
    alpha = fa - beta * a
    if kind == "candy":
        # antiderivative of (alpha + beta x) / x^2 is -alpha / x + beta log x
        with np.errstate(divide="ignore", invalid="ignore"):
            out = alpha * (b - a) / (a * b) + beta * np.log(b / a)
        return np.where(h > 0, out, 0.0)
    if kind == "plain":
        return 0.5 * (fa + fb) * h
    raise ValueError(kind)


def _tail_integral(F: GridFunction, weight: str, absolute: bool) -> float:
    """int_X^inf w(x) f(x) dx for the tail model f = tv + sum c (X/x)^p."""
    X = F.x_max
    tv = F.tail_value
    terms = F.tail_terms
    if weight != "candy":
        raise ValueError(weight)
    if any(p <= -1.0 for c, p in terms if c != 0.0):
        raise DivergenceError("tail model grows too fast for the x^-2 weight")

    def g(s):
        # in s = X / x the weighted integral is (1/X) int_0^1 f ds
        return tv + sum(c * s**p for c, p in terms)

    exact = (tv + sum(c / (p + 1.0) for c, p in terms)) / X
    if not absolute:
        return exact
    s = np.linspace(0.0, 1.0, 513)[1:]
    vals = np.array([g(v) for v in s])
    if np.all(vals >= 0) and tv >= 0:
        return exact
    if np.all(vals <= 0) and tv <= 0:
        return -exact
    edges = [0.0]
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        edges.append(brentq(g, s[i], s[i + 1], xtol=1e-15))
    edges.append(1.0)
    total = 0.0
    xg, wg = np.polynomial.legendre.leggauss(24)
    for lo, hi in zip(edges[:-1], edges[1:]):
        pts = lo + (hi - lo) * 0.5 * (xg + 1.0)
        total += abs(0.5 * (hi - lo) * np.dot(wg, [g(v) for v in pts]))
    return total / X


def _hermite_segments(F: GridFunction):
    z, fz, dfz = F.gauss_shape(_GL_X)
    h = np.diff(F.xs)[:, None]
    return z, fz, dfz, 0.5 * h * _GL_W[None, :]


def candy_norm(f: GridFunction) -> float:
    """int_0^inf x^-2 |f(x)| dx.

    Closed form per linear segment (split at sign changes), ``|q| x_1`` on
    the quadratic near-zero piece and the analytic tail integral. Unsigned
    functions with stored derivatives use Hermite segments and the cubic
    near-zero model instead.
    """
    f = _as_grid(f)
    xs, v = f.xs, f.values
    if v[0] != 0.0:
        raise DivergenceError("f(0) != 0: x^-2 |f| is not integrable at the origin")
    if f.derivative is not None and not f.signed:
        q, r = f.near_coefs
        near = abs(q * xs[1] + 0.5 * r * xs[1] ** 2)
        z, fz, _, w = _hermite_segments(f)
        mid = float(np.sum(w[1:] * np.abs(fz[1:]) / z[1:] ** 2))
    else:
        near = abs(v[1]) / xs[1]
        mid = float(np.sum(_abs_linear_weighted(xs[1:-1], xs[2:], v[1:-1], v[2:], "candy")))
    return near + mid + _tail_integral(f, "candy", absolute=True)


def d_candy(F: GridFunction, G: GridFunction) -> float:
    """Candy distance ``||F - G||``; grids are merged if they differ."""
    F, G = _common(_as_grid(F), _as_grid(G))
    return candy_norm(F - G)


def d_l1loc(F: GridFunction, G: GridFunction, K: int = _L1LOC_TERMS) -> float:
    """sum_{k=1}^K min(2^-k, int_0^k |F - G|).

    Linear interpolation on every segment, including [0, xs[1]]; beyond the
    last node the tail models are integrated by Gauss quadrature.
    """
    F, G = _common(_as_grid(F), _as_grid(G))
    xs = F.xs
    diff = F.values - G.values
    seg = _abs_linear_weighted(xs[:-1], xs[1:], diff[:-1], diff[1:], "plain")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    X = F.x_max
    xg, wg = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for k in range(1, K + 1):
        if k <= X:
            j = int(np.searchsorted(xs, k, side="right")) - 1
            part = cum[j]
            if xs[j] < k:
                fk = np.interp(k, xs, diff)
                part += float(_abs_linear_weighted(xs[j], k, diff[j], fk, "plain"))
        else:
            part = cum[-1]
            edges = np.geomspace(X, k, 65)
            for lo, hi in zip(edges[:-1], edges[1:]):
                pts = lo + (hi - lo) * 0.5 * (xg + 1.0)
                part += 0.5 * (hi - lo) * float(np.dot(wg, np.abs(F(pts) - G(pts))))
        total += min(2.0**-k, part)
    return total


def ks_distance(F: GridFunction, G: GridFunction) -> float:
    """Largest nodal gap ``max |F - G|`` over the union of both grids."""
    F, G = _common(_as_grid(F), _as_grid(G))
    return float(np.max(np.abs(F.values - G.values)))


def ks_to_sample(F: GridFunction, samples) -> float:
    """Exact sup-distance between ``F`` and the size-biased empirical
    distribution function of ``samples`` (checked on both sides of every jump).

    Between jumps the empirical function is flat and ``F`` monotone, so the
    supremum is attained at a jump.
    """
    F = _as_grid(F)
    srt = np.sort(np.asarray(samples, dtype=float))
    if srt.size == 0 or srt[0] <= 0:
        raise ValueError("samples must be positive and nonempty")
    cum = np.cumsum(srt)
    cum /= cum[-1]
    before = np.concatenate([[0.0], cum[:-1]])
    f = np.asarray(F(srt), dtype=float)
    # equal samples share one jump: compare against the run's last value
    last = np.concatenate([srt[1:] != srt[:-1], [True]])
    first = np.concatenate([[True], srt[1:] != srt[:-1]])
    return float(max(np.max(np.abs(f[last] - cum[last])), np.max(np.abs(f[first] - before[first]))))


def underlying_mass(F: GridFunction) -> float:
    """int_0^inf F'(x) / x dx, the mass of the measure F size-biases."""
    F = _as_grid(F)
    xs, v = F.xs, F.values
    q, r = F.near_coefs
    near = 2.0 * q * xs[1] + 1.5 * r * xs[1] ** 2
    if F.derivative is not None:
        z, _, dfz, w = _hermite_segments(F)
        mid = float(np.sum(w[1:] * dfz[1:] / z[1:]))
    else:
        slope = np.diff(v[1:]) / np.diff(xs[1:])
        mid = float(np.sum(slope * np.log(xs[2:] / xs[1:-1])))
    X = F.x_max
    tail = -sum(c * p / ((p + 1.0) * X) for c, p in F.tail_terms)
    return near + mid + tail


def entropy_of(F: GridFunction) -> float:
    """H(F) = int_0^inf log x dF(x)."""
    F = _as_grid(F)
    xs, v = F.xs, F.values
    if v[0] > 0.0:
        raise DivergenceError("F has an atom at 0: log x is not integrable")
    x1 = xs[1]
    # int_0^x1 log z d(q z^2 + r z^3)
    q, r = F.near_coefs
    lx = math.log(x1)
    near = q * x1**2 * (lx - 0.5) + r * x1**3 * (lx - 1.0 / 3.0)
    if F.derivative is not None:
        z, _, dfz, w = _hermite_segments(F)
        mid = float(np.sum(w[1:] * dfz[1:] * np.log(z[1:])))
    else:
        a, b = xs[1:-1], xs[2:]
        slope = np.diff(v[1:]) / (b - a)
        mid = float(np.sum(slope * ((b * np.log(b) - b) - (a * np.log(a) - a))))
    X = F.x_max
    tail = 0.0
    for c, p in F.tail_terms:
        if c == 0.0:
            continue
        if p <= 0.0:
            raise DivergenceError("tail model does not decay")
        tail -= c * (math.log(X) + 1.0 / p)
    return near + mid + tail


def drift_D(rule: ChoiceRule, F: GridFunction) -> float:
    """D(F) = 1/2 int z dPsi(F(z))."""
    try:
        return 0.5 * segment_measure(rule, _as_grid(F)).first_moment()
    except TailDivergence as exc:
        raise DivergenceError(str(exc)) from exc


def in_unit_ball(F: GridFunction, tol: float = 1e-9) -> bool:
    """Membership in the candy unit ball of distribution functions."""
    return candy_norm(F) <= 1.0 + tol
