"""Deterministic evolution of size-biased profiles and its limit.

The profile ``F_t`` obeys

    F_t = T_t F_0 + int_0^t T_{t-s} A F_s ds,   T_t F(x) = F(e^-t x),
    A F(x) = x^2 int_x^inf z^-1 dPsi(F(z)),

and converges to the unique tight, unit-mass stationary point ``F^Psi``,
which solves F'(x) = x int_x^inf z^-1 dPsi(F(z)) with F(0) = 0, F(inf) = 1.

Numerics
--------
``evolve`` integrates in stretched coordinates ``Ft_t(x) = F_t(e^t x)``
where the transport term disappears; with sigma = e^t the equation becomes
dFt/dsigma = A Ft, integrated by the explicit midpoint rule.

``fixed_point`` iterates the stationary form of the evolution over a short
window ``h``: F <- F(e^-h x) + Phi(F)(x) - Phi(F)(e^-h x) with
Phi(F)(x) = int_0^x y int_y^inf z^-1 dPsi(F(z)) dy, damped per node. Its
fixed points are exactly the solutions of F = Phi(F); unlike the bare
iteration F <- Phi(F) it inherits the contraction of the evolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from intervalchoice import metrics
from intervalchoice._stieltjes import segment_measure
from intervalchoice.grid import GridFunction, make_grid
from intervalchoice.psi import ChoiceRule

LIGHT_TAIL_X_MAX = 40.0
HEAVY_TAIL_X_MAX = 1e4
DEFAULT_POINTS = 4096

# beyond-grid mass of a transient iterate may look heavier than any fixed
# point can be; keep its first moment finite
_SOLVER_TAIL_FLOOR = 1.05
_HEAVY_SHOOT_FACTOR = 1e4


class SolverError(RuntimeError):
    """Iteration or shooting failed to converge."""

    def __init__(self, message: str, trace: Sequence[float] = ()):
        super().__init__(message)
        self.trace = list(trace)


class PreconditionError(ValueError):
    """The rule or input does not meet the method's requirements."""


class RefinementError(RuntimeError):
    """Step size too large for a stable integration; refine and retry."""


# -- helpers ---------------------------------------------------------------

def rule_slope(rule: ChoiceRule, u) -> np.ndarray:
    """psi(u), or a centred difference of Psi for rules without a density."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    if rule.has_density:
        return np.asarray(rule.density(u), dtype=float)
    e = 1e-3
    hi = np.minimum(u + e, 1.0)
    lo = np.maximum(u - e, 0.0)
    return (np.asarray(rule.cdf(hi)) - np.asarray(rule.cdf(lo))) / (hi - lo)


def default_x_max(rule: ChoiceRule) -> float:
    """40 when psi(1) > 0 (exponential tails), 1e4 otherwise (power tails)."""
    return LIGHT_TAIL_X_MAX if float(rule_slope(rule, 1.0)) > 1e-9 else HEAVY_TAIL_X_MAX


def default_grid(rule: ChoiceRule, n_points: int = DEFAULT_POINTS) -> np.ndarray:
    return make_grid(default_x_max(rule), n_points)


def size_biased_exponential(xs) -> GridFunction:
    """1 - (1 + x) e^-x, the stationary profile of the uniform rule."""
    xs = np.asarray(xs, dtype=float)
    return GridFunction(xs, -np.expm1(-xs) - xs * np.exp(-xs), tail_value=1.0,
                        derivative=xs * np.exp(-xs))


def kakutani_profile(xs) -> GridFunction:
    """x^2 / 4 ^ 1, the limit when the largest interval is always split."""
    xs = np.asarray(xs, dtype=float)
    return GridFunction(xs, np.minimum(0.25 * xs * xs, 1.0), tail_value=1.0)


def _project(raw: np.ndarray, upper: float) -> tuple[np.ndarray, float]:
    """Clamp to [0, upper] and take the running maximum; report the change."""
    vals = np.minimum(np.maximum.accumulate(np.maximum(raw, 0.0)), upper)
    vals[0] = 0.0
    return vals, float(np.max(np.abs(vals - raw)))


def _geometric_ratio(xs: np.ndarray) -> float:
    return math.log(xs[2] / xs[1])


# -- trajectories and operators --------------------------------------------

@dataclass
class Trajectory:
    """Frames of the evolution at increasing times starting from 0."""

    times: np.ndarray
    frames: list
    tilde_frames: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.frames) or len(self.frames) == 0:
            raise ValueError("need one frame per time")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        xs = self.frames[0].xs
        if any(not np.array_equal(f.xs, xs) for f in self.frames):
            raise ValueError("frames must share one grid")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def xs(self) -> np.ndarray:
        return self.frames[0].xs

    @property
    def final(self) -> GridFunction:
        return self.frames[-1]

    def frame_at(self, t: float) -> GridFunction:
        """Stored frame at ``t``, linear in time between stored frames."""
        if t < 0 or t > self.times[-1] * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.times[-1]}]")
        j = int(np.searchsorted(self.times, t))
        if j < len(self.times) and abs(self.times[j] - t) <= 1e-12 * max(1.0, t):
            return self.frames[j]
        j = min(max(j, 1), len(self.times) - 1)
        t0, t1 = self.times[j - 1], self.times[j]
        w = (t - t0) / (t1 - t0)
        a, b = self.frames[j - 1], self.frames[j]
        return GridFunction(a.xs, (1 - w) * a.values + w * b.values,
                            tail_value=(1 - w) * a.tail_value + w * b.tail_value)

    def shifted(self, s: float) -> "Trajectory":
        """The trajectory t -> F_{s+t} on the stored times at or after ``s``."""
        keep = self.times >= s - 1e-12
        times = self.times[keep] - s
        frames = [f for f, k in zip(self.frames, keep) if k]
        if times[0] > 1e-12:
            times = np.concatenate([[0.0], times])
            frames = [self.frame_at(s)] + frames
        times[0] = 0.0
        return Trajectory(times, frames, meta=dict(self.meta, shifted_by=s))


def op_T(t: float, F: GridFunction) -> GridFunction:
    """Shift ``x -> e^-t x``: T_t F(x) = F(e^-t x).

    Linear interpolation between nodes keeps monotone inputs monotone; the
    near-zero coefficient becomes ``q e^-2t``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return GridFunction(F.xs, F.values.copy(), tail_value=F.tail_value,
                            tail_terms=F.tail_terms, signed=F.signed)
    vals = np.asarray(F(math.exp(-t) * F.xs), dtype=float)
    vals[0] = 0.0
    if not F.signed:
        vals = np.clip(np.maximum.accumulate(vals), 0.0, F.tail_value)
    return GridFunction(F.xs, vals, tail_value=F.tail_value, signed=F.signed)


def op_A(rule: ChoiceRule, F: GridFunction) -> GridFunction:
    """A F(x) = x^2 int_x^inf z^-1 dPsi(F(z)) on the grid of ``F``.

    Returned as a signed grid function vanishing at infinity; the inner
    integral ``J`` is kept in ``meta['J']``.
    """
    sm = segment_measure(rule, F)
    J = sm.inverse_tail()
    xs = F.xs
    terms = ()
    if sm.tail_mass > 0 and sm.tail_power > 1.0:
        p = sm.tail_power
        # x^2 J(x) beyond the grid is m p/(p+1) X (X/x)^(p-1)
        terms = ((sm.tail_mass * p / (p + 1.0) * sm.x_max, p - 1.0),)
    return GridFunction(xs, xs * xs * J, tail_value=0.0, tail_terms=terms, signed=True,
                        meta={"J": J, "measure": sm})


def op_S(rule: ChoiceRule, traj: Trajectory, t: float) -> GridFunction:
    """Right-hand side T_t F_0 + int_0^t T_{t-s} A F_s ds of the evolution.

    The time integral is the composite trapezoid rule over the stored frame
    times up to ``t`` (plus ``t`` itself, interpolated if needed).
    """
    if t < 0 or t > traj.times[-1] * (1 + 1e-12):
        raise ValueError(f"t={t} beyond trajectory end {traj.times[-1]}")
    F0 = traj.frames[0]
    base = op_T(t, F0)
    nodes = [s for s in traj.times if s < t - 1e-12] + ([t] if t > 0 else [])
    if len(nodes) < 2:
        return GridFunction(F0.xs, base.values, tail_value=F0.tail_value, signed=True)
    nodes = np.asarray(nodes)
    w = np.zeros(len(nodes))
    gaps = np.diff(nodes)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    acc = base.values.copy()
    for s, weight in zip(nodes, w):
        a = op_A(rule, traj.frame_at(s))
        acc += weight * np.asarray(a(math.exp(s - t) * F0.xs))
    acc[0] = 0.0
    return GridFunction(F0.xs, acc, tail_value=F0.tail_value, signed=True)


# -- time evolution ----------------------------------------------------------

def _tilde_grid(xs: np.ndarray, T: float) -> np.ndarray:
    d = _geometric_ratio(xs)
    k = int(math.ceil(T / d)) + 2
    below = xs[1] * np.exp(-d * np.arange(k, 0, -1))
    return np.concatenate([[0.0], below, xs[1:]])


def _a_values(rule: ChoiceRule, xs: np.ndarray, vals: np.ndarray, tail: float) -> np.ndarray:
    F = GridFunction(xs, vals, tail_value=tail)
    J = segment_measure(rule, F, min_tail_power=_SOLVER_TAIL_FLOOR).inverse_tail()
    return xs * xs * J


def evolve(rule: ChoiceRule, F0: GridFunction, T: float, steps: int, *,
           safety: float = 0.5, tol: float = 1e-5, max_substeps: int = 1_000_000,
           keep_tilde: bool = True) -> Trajectory:
    """Integrate the evolution from ``F0`` to time ``T``; ``steps`` frames.

    Works on ``Ft(x) = F(e^t x)`` with sigma = e^t, midpoint rule, step
    bounded by ``safety / max(x psi(Ft(x)))`` and adapted so that the
    Euler-midpoint difference per step stays below ``tol``. Each substep is
    clamped to [0, 1] and made monotone; if that changes values by more
    than ten times the local error estimate the step is halved.

    Raises
    ------
    RefinementError
        If the step keeps failing the monotonicity budget.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if F0.signed:
        raise ValueError("initial frame must be a distribution function")
    xs = F0.xs
    xt = _tilde_grid(xs, T)
    tail = F0.tail_value
    cur, _ = _project(np.asarray(F0(xt), dtype=float), tail)
    times = np.linspace(0.0, T, steps + 1)
    frames = [GridFunction(xs, F0.values.copy(), tail_value=tail)]
    tilde = [GridFunction(xt, cur.copy(), tail_value=tail)] if keep_tilde else None
    sigma = 1.0
    substeps = refinements = rejected = 0
    worst = 0.0
    ds_acc = math.inf
    for t_next in times[1:]:
        target = math.exp(t_next)
        while sigma < target * (1 - 1e-15):
            stiff = float(np.max(xt * rule_slope(rule, cur)))
            ds = min(target - sigma, ds_acc)
            if stiff > 0:
                ds = min(ds, safety / stiff)
            a0 = _a_values(rule, xt, cur, tail)
            while True:
                half, _ = _project(cur + 0.5 * ds * a0, tail)
                a1 = _a_values(rule, xt, half, tail)
                raw = cur + ds * a1
                new, violation = _project(raw, tail)
                lte = ds * float(np.max(np.abs(a1 - a0)))
                if lte > tol:
                    ds *= max(0.2, 0.9 * math.sqrt(tol / lte))
                    rejected += 1
                    continue
                if violation <= 10.0 * lte + 1e-13:
                    break
                ds *= 0.5
                refinements += 1
                if ds < 1e-14 * sigma or refinements > 10_000:
                    raise RefinementError(
                        f"monotonicity violation {violation:.3g} persists at step {ds:.3g}")
            worst = max(worst, violation)
            ds_acc = ds * min(2.0, 0.9 * math.sqrt(tol / lte)) if lte > 0 else math.inf
            cur = new
            sigma += ds
            substeps += 1
            if substeps > max_substeps:
                raise RefinementError("substep budget exhausted; lower T or coarsen the grid")
        Ft = GridFunction(xt, cur, tail_value=tail)
        vals, _ = _project(np.asarray(Ft(math.exp(-t_next) * xs), dtype=float), tail)
        frames.append(GridFunction(xs, vals, tail_value=tail))
        if keep_tilde:
            tilde.append(Ft)
    meta = {"rule": str(rule), "substeps": substeps, "refinements": refinements,
            "rejected": rejected,
            "max_projection": worst, "tilde_xs": xt}
    return Trajectory(times, frames, tilde_frames=tilde, meta=meta)


# -- stationary profile --------------------------------------------------------

def _phi(rule: ChoiceRule, F: GridFunction):
    """Phi(F) at the nodes, its value at infinity and J at the nodes."""
    sm = segment_measure(rule, F, min_tail_power=_SOLVER_TAIL_FLOOR)
    _, int_yj, _, beyond_yj = sm.integrals()
    vals = np.concatenate([[0.0], np.cumsum(int_yj)])
    return vals, float(vals[-1] + beyond_yj), sm.inverse_tail()


def fixed_point(rule: ChoiceRule, grid=None, tol: float = 1e-10, *,
                max_iter: int = 20_000, window: float = 0.1,
                initial: Optional[GridFunction] = None, check: bool = True,
                callback: Optional[Callable[[int, float], None]] = None) -> GridFunction:
    """Stationary profile ``F^Psi`` by damped fixed-point iteration.

    Parameters
    ----------
    rule : ChoiceRule
    grid : array, optional
        Nodes starting at 0; default geometric from 1e-3 to 40 (1e4 when
        psi(1) = 0) with 4096 points.
    tol : float
        Stop once the candy distance between successive iterates, inflated
        by the observed contraction factor, falls below ``tol``.
    window : float
        Length ``h`` of the evolution window per iteration.
    check : bool
        Refuse rules failing ``check_assumptions``.

    Returns
    -------
    GridFunction
        Values, tail value 1 and nodal derivative ``x J(x)``; ``meta`` holds
        the iteration count, the residual trace and normalization checks.

    Raises
    ------
    SolverError
        No convergence within ``max_iter`` or a diverging residual.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if check:
        rep = rule.check_assumptions()
        if not rep.ok:
            raise PreconditionError(f"rule {rule} fails the assumptions: {rep.message}")
    xs = np.asarray(grid, dtype=float) if grid is not None else default_grid(rule)
    F = initial if initial is not None else size_biased_exponential(xs)
    if not np.array_equal(F.xs, xs):
        F = F.resample(xs)
    F = GridFunction(xs, F.values, tail_value=1.0, derivative=F.derivative)
    h = max(window, _geometric_ratio(xs))
    shrink = math.exp(-h)
    damp = 1.0 / (1.0 + h * xs * rule_slope(rule, 1.0))
    trace: list[float] = []
    rho = 0.0
    for it in range(1, max_iter + 1):
        vals, _, J = _phi(rule, F)
        G = GridFunction(xs, vals, tail_value=vals[-1], signed=True)
        relaxed = np.asarray(F(shrink * xs)) + vals - np.asarray(G(shrink * xs))
        damp = 1.0 / (1.0 + h * xs * rule_slope(rule, F.values))
        new, _ = _project(F.values + damp * (relaxed - F.values), 1.0)
        nxt = GridFunction(xs, new, tail_value=1.0, derivative=xs * J)
        step = metrics.d_candy(nxt, F)
        trace.append(step)
        if callback is not None:
            callback(it, step)
        if not math.isfinite(step) or (it > 50 and step > 1e3 * min(trace)):
            raise SolverError(f"candy residual diverges at iteration {it}", trace)
        if len(trace) > 10 and trace[-11] > 0:
            rho = min(max((step / trace[-11]) ** 0.1, 0.0), 0.999)
        F = nxt
        if step < tol and (step < tol * (1.0 - rho) or step < 1e-15):
            break
    else:
        raise SolverError(f"no convergence after {max_iter} iterations "
                          f"(last step {trace[-1]:.3g})", trace)
    return _finish(rule, F, method="picard", iterations=it, trace=trace, tol=tol)


def _finish(rule, F: GridFunction, **meta) -> GridFunction:
    vals, D, J = _phi(rule, F)
    out = GridFunction(F.xs, F.values, tail_value=1.0, derivative=F.xs * J)
    out.meta.update(meta)
    out.meta.update({
        "rule": str(rule),
        "candy_norm": metrics.candy_norm(out),
        "underlying_mass": metrics.underlying_mass(out),
        "drift_D": metrics.drift_D(rule, out),
        "phi_residual": float(np.max(np.abs(vals - F.values))),
        "curvature_at_zero": float(J[0]),
    })
    return out


# -- shooting ------------------------------------------------------------------

def ode_solve(rule: ChoiceRule, x_max: Optional[float] = None, tol: float = 1e-14, *,
              grid=None, n_points: int = DEFAULT_POINTS, rtol: float = 1e-12) -> GridFunction:
    """Stationary profile from x F'' - F' + x F' psi(F) = 0 by shooting.

    With g = F'/x the equation is F' = x g, g' = -psi(F) g, F(0) = 0 and
    g(0) = c = F''(0+). Too large a ``c`` drives F through 1 before
    ``x_max``; too small leaves F below 1. ``c`` is found by Brent's method
    on a signed overshoot (F(x_max) - 1 below, the relative distance of the
    crossing from ``x_max`` above) to relative accuracy ``tol``; the largest
    non-crossing shot is returned. Where it separates from the smallest
    crossing shot (heavy tails amplify errors near the target) the profile
    continues with the local power law; ``meta['resolved_to']`` records
    that point.

    Raises
    ------
    PreconditionError
        Rule without a density.
    SolverError
        No bracket or a failed integration.
    """
    if not rule.has_density:
        raise PreconditionError(f"rule {rule} has no density; shooting needs psi")
    xs = np.asarray(grid, dtype=float) if grid is not None else make_grid(
        x_max if x_max is not None else default_x_max(rule), n_points)
    # a power tail still sits visibly below 1 at the last node; asking for
    # F = 1 there would pick the wrong orbit, so shoot much further out
    heavy = float(rule_slope(rule, 1.0)) <= 1e-9
    X = float(xs[-1]) * (_HEAVY_SHOOT_FACTOR if heavy else 1.0)

    dens = rule._density

    def rhs(x, y):
        f, g = y
        return [x * g, -float(dens(np.array(min(max(f, 0.0), 1.0)))) * g]

    def crossing(x, y):
        return y[0] - 1.0
    crossing.terminal = True
    crossing.direction = 1.0

    def saturated(x, y):
        # once F levels off below 1, g decays like exp(-psi(F) x); the rest of
        # the increase, about x g / psi(F), is below roundoff from here on
        f, g = y
        psi = float(dens(np.array(min(max(f, 0.0), 1.0))))
        return x * g - 1e-17 * psi * (1.0 - f)
    saturated.terminal = True
    saturated.direction = -1.0

    def evaluate(sol, pts):
        # dense output up to the end of the shot, frozen F and g = 0 beyond
        end = sol.t[-1]
        y = sol.sol(np.minimum(pts, end))
        return y[0], np.where(pts <= end, y[1], 0.0)

    calls = 0
    shots: dict = {}
    over: dict = {}

    def shoot(c):
        # signed overshoot: F(X) - 1 below the target, (X - x_cross) / X above
        nonlocal calls
        calls += 1
        sol = solve_ivp(rhs, (0.0, X), [0.0, c], method="DOP853", rtol=rtol, atol=1e-300,
                        events=(crossing, saturated), dense_output=True)
        if sol.status == -1:
            raise SolverError(f"integration failed at c={c}: {sol.message}")
        if sol.t_events[0].size:
            over[c] = sol
            return (X - sol.t_events[0][0]) / X
        shots[c] = sol
        return sol.y[0, -1] - 1.0

    lo = hi = None
    c = 1.0
    for _ in range(200):
        if shoot(c) > 0:
            hi = c
            if lo is not None:
                break
            c *= 0.5
        else:
            lo = c
            if hi is not None:
                break
            c *= 2.0
    if lo is None or hi is None:
        raise SolverError("no sign change in the overshoot criterion")
    try:
        brentq(shoot, lo, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps)
    except ValueError as exc:
        raise SolverError(f"shooting failed: {exc}") from exc
    lo = max(shots)
    hi = min(over)
    y = evaluate(shots[lo], xs)
    # past the point where the bracketing shots separate, the profile is
    # not determined by the shooting; continue with the local power tail
    hi_sol = over[hi]
    end = hi_sol.t[-1]
    f_hi = np.where(xs <= end, hi_sol.sol(np.minimum(xs, end))[0], 1.0)
    # rerun with a looser tolerance to see where integration error blows up
    loose = solve_ivp(rhs, (0.0, X), [0.0, lo], method="DOP853", rtol=100 * rtol,
                      atol=1e-300, events=(crossing, saturated), dense_output=True)
    calls += 1
    f_loose = evaluate(loose, xs)[0] if loose.status >= 0 else np.full_like(xs, np.inf)
    apart = np.nonzero((np.abs(f_hi - y[0]) > 1e-9) | (np.abs(f_loose - y[0]) > 1e-7))[0]
    resolved = float(xs[-1])
    vals = y[0].copy()
    der = xs * np.maximum(y[1], 0.0)
    if len(apart) and apart[0] > 2:
        j = int(apart[0]) - 1
        resolved = float(xs[j])
        gap = 1.0 - vals[j]
        if gap > 0 and der[j] > 0:
            p = xs[j] * der[j] / gap
            ratio = xs[j] / xs[j + 1:]
            vals[j + 1:] = 1.0 - gap * ratio**p
            der[j + 1:] = p * gap * ratio**p / xs[j + 1:]
    vals, _ = _project(vals, 1.0)
    F = GridFunction(xs, vals, tail_value=1.0, derivative=der)
    F.meta.update({"method": "shoot", "c": lo, "shots": calls, "resolved_to": resolved,
                   "rule": str(rule),
                   "candy_norm": metrics.candy_norm(F),
                   "underlying_mass": metrics.underlying_mass(F),
                   "drift_D": metrics.drift_D(rule, F)})
    return F


# -- min-k phase plane -----------------------------------------------------------

def min_k_constant(k: float) -> float:
    """c_k = ((2k - 1) / (k (k - 1)))^(1 / (k - 1))."""
    if not k > 1:
        raise ValueError("k must exceed 1")
    return ((2 * k - 1) / (k * (k - 1))) ** (1.0 / (k - 1))


def phase_field(k: float, G, dG):
    """Vector field of (G, G') for G'' = G' + (2k-1 - k(k-1) G^(k-1)) (G' - G)."""
    G = np.asarray(G, dtype=float)
    dG = np.asarray(dG, dtype=float)
    power = np.power(np.maximum(G, 0.0), k - 1.0)
    return dG, dG + (2 * k - 1 - k * (k - 1) * power) * (dG - G)


@dataclass
class PhaseResult:
    G_infinity: float
    c_k: float
    amplitude: float
    trace: dict
    shots: int


def min_k_phase(k: float, horizon: float = 60.0, *, eps: Optional[float] = None,
                tol: float = 1e-15) -> PhaseResult:
    """Saddle value reached by the min-k orbit from the origin.

    With 1 - F(x) = G(t) e^-t, x = e^((k-1) t), orbits leave the unstable
    node at the origin as G ~ e^t - b e^((2k-1) t). Each is launched at
    G = ``eps`` with G'/G = 1 - s, s = (2k-2) b eps^(2k-2); parametrizing by
    ``s`` keeps the family resolvable in floating point for any k. ``s`` is
    bisected: too large and G turns back towards 0 (G' hits 0), too small
    and G bends upward again (G'' hits 0 from below) or runs off. The
    returned value is G where |G'| / G is smallest on the final orbit;
    ``amplitude`` is the matching ``b``. The default ``eps`` puts the
    critical ``s`` near 1e-4 (the origin is a node, so any launch point
    close to it lies on an orbit from it).

    Raises
    ------
    RefinementError
        The integration fails or the orbit escapes within one step.
    """
    if not k > 1:
        raise ValueError("k must exceed 1")
    m = 2.0 * k - 1.0
    if eps is None:
        eps = min(1e-4 ** (1.0 / (m - 1.0)), 0.25 * min_k_constant(k))

    def rhs(t, y):
        a, b = phase_field(k, y[0], y[1])
        return [float(a), float(b)]

    def turn(t, y):
        return y[1]
    turn.terminal = True
    turn.direction = -1.0

    def rebound(t, y):
        return float(phase_field(k, y[0], y[1])[1])
    rebound.terminal = True
    rebound.direction = 1.0

    # far above the saddle the orbit rides the stiff family G ~ A e^t
    ceiling = 4.0 * min_k_constant(k) + 1.0

    def escape(t, y):
        return y[0] - ceiling
    escape.terminal = True
    escape.direction = 1.0

    shots = 0

    def shoot(slack):
        nonlocal shots
        shots += 1
        y0 = [eps, eps * (1.0 - slack)]
        sol = solve_ivp(rhs, (0.0, horizon), y0, method="DOP853", rtol=1e-12, atol=1e-15,
                        events=(turn, rebound, escape), dense_output=True)
        if sol.status == -1 or not np.all(np.isfinite(sol.y)):
            raise RefinementError(f"orbit integration failed: {sol.message}")
        if sol.t_events[0].size:
            return sol, "low"
        if sol.t_events[1].size or sol.t_events[2].size:
            return sol, "high"
        return sol, "stuck"

    lo, hi = 1e-3, 1e-3
    sol, kind = shoot(lo)
    if kind == "low":
        while kind == "low":
            hi = lo
            lo *= 0.5
            sol, kind = shoot(lo)
            if lo < 1e-300:
                raise RefinementError("no escaping orbit found")
    else:
        while kind != "low":
            lo = hi
            hi *= 2.0
            sol, kind = shoot(hi)
            if hi > 1e300:
                raise RefinementError("no returning orbit found")
    best = sol
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        sol, kind = shoot(mid)
        if kind == "low":
            hi = mid
        else:
            lo = mid
        best = sol
    t = np.linspace(0.0, best.t[-1], 4001)
    G, dG = best.sol(t)
    j = int(np.argmin(np.abs(dG) / np.maximum(G, eps)))
    b = 0.5 * (lo + hi) / ((m - 1.0) * eps ** (m - 1.0))
    return PhaseResult(G_infinity=float(G[j]), c_k=min_k_constant(k), amplitude=b,
                       trace={"t": t, "G": G, "dG": dG}, shots=shots)


# -- tail asymptotics ------------------------------------------------------------

class TailFitError(ValueError):
    pass


@dataclass
class TailFit:
    model: str
    window: tuple
    slope: float
    intercept: float
    level: float
    rms: float
    n: int

    def to_dict(self) -> dict:
        return {"model": self.model, "window": list(self.window), "slope": self.slope,
                "intercept": self.intercept, "level": self.level, "rms": self.rms, "n": self.n}


def tail_fit(F: GridFunction, model: str, window: tuple, power: Optional[float] = None) -> TailFit:
    """Least-squares tail fit over grid nodes inside ``window``.

    ``max_tail``: log(F'(x)/x) against x; slope estimates -psi(1), level is
    the prefactor C = exp(intercept).
    ``min_tail``: log(1 - F(x)) against log x; slope estimates -1/(k-1),
    level is the mean of x^p (1 - F(x)) with p = ``power`` or -slope.
    """
    lo, hi = map(float, window)
    if not 0 < lo < hi or hi > F.x_max:
        raise TailFitError(f"window {window} must satisfy 0 < a < b <= {F.x_max}")
    sel = (F.xs >= lo) & (F.xs <= hi)
    x = F.xs[sel]
    if len(x) < 3:
        raise TailFitError("window holds fewer than three grid nodes")
    if model == "max_tail":
        d = F.derivative_values()[sel]
        if np.any(d <= 0):
            raise TailFitError("nonpositive F' inside the window")
        y = np.log(d / x)
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        level = math.exp(intercept)
    elif model == "min_tail":
        gap = F.tail_value - F.values[sel]
        if np.any(gap < 1e-14):
            raise TailFitError("1 - F below 1e-14 inside the window")
        lx = np.log(x)
        y = np.log(gap)
        slope, intercept = np.polyfit(lx, y, 1)
        resid = y - (slope * lx + intercept)
        p = -slope if power is None else power
        level = float(np.mean(x**p * gap))
    else:
        raise TailFitError(f"unknown model {model!r}; use max_tail or min_tail")
    return TailFit(model, (lo, hi), float(slope), float(intercept), float(level),
                   float(np.sqrt(np.mean(resid**2))), int(len(x)))
