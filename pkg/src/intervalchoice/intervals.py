"""Live interval configuration of the splitting process.

Lengths sit in a treap ordered by ``(length, insertion_id)`` with subtree
length sums, so the size-biased distribution function and its quantiles cost
O(log n). Ties among equal lengths resolve to the smallest insertion id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from intervalchoice import _treap
from intervalchoice.grid import GridFunction
from intervalchoice.psi import ChoiceRule, open_uniform

RNG_ALGORITHM = "numpy.random.Philox(4x64-10)+SeedSequence"
_EPS = np.finfo(float).eps


class ConfigError(ValueError):
    pass


class PositionsDisabled(RuntimeError):
    pass


class LengthUnderflow(RuntimeError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every simulation stream.

    ``seed`` is an int, a sequence of ints or a ``SeedSequence`` (e.g. one
    spawned per replica).
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def split_draws(rng: np.random.Generator, rule: ChoiceRule, n: int):
    """Choice levels ``u`` and split fractions ``v`` for ``n`` steps.

    Each step consumes two consecutive open uniforms, so the stream does not
    depend on how a run is chunked.
    """
    w = open_uniform(rng, (n, 2))
    return rule.inverse_cdf(w[:, 0]), np.ascontiguousarray(w[:, 1])


def entropy_w(v: float) -> float:
    """v log v + (1 - v) log(1 - v)."""
    return v * math.log(v) + (1.0 - v) * math.log1p(-v)


class IntervalHandle(NamedTuple):
    slot: int
    insertion_id: int


@dataclass(frozen=True)
class SplitEvent:
    step: int
    chosen_length: float
    fraction: float
    entropy_increment: float
    new_lengths: tuple[float, float]
    handle: IntervalHandle
    time: Optional[float] = None


@dataclass
class Histogram:
    """Equal-width histogram on ``[0, xmax]`` with an overflow bucket.

    Counts are kept raw so replicas merge by addition.
    """

    edges: np.ndarray
    counts: np.ndarray
    overflow: float
    total: float

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def density(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / (self.total * self.width)

    @property
    def overflow_mass(self) -> float:
        return self.overflow / self.total if self.total else 0.0

    def merge(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("histograms have different bins")
        return Histogram(
            self.edges.copy(),
            self.counts + other.counts,
            self.overflow + other.overflow,
            self.total + other.total,
        )


def _histogram(values: np.ndarray, bins: int, xmax: float) -> Histogram:
    if bins < 1 or not xmax > 0:
        raise ValueError("need bins >= 1 and xmax > 0")
    edges = np.linspace(0.0, xmax, bins + 1)
    idx = np.floor(values * (bins / xmax)).astype(np.int64)
    inside = idx < bins
    counts = np.bincount(idx[inside], minlength=bins).astype(float)
    return Histogram(edges, counts, float(np.count_nonzero(~inside)), float(len(values)))


class IntervalTable:
    """Interval lengths of the process, summing to the circle circumference 1."""

    def __init__(self, capacity: int, track_positions: bool = False,
                 clock: bool = False, clock_seed=None):
        capacity = max(int(capacity), 1)
        self._alloc(capacity)
        self.meta = np.array([_treap.NIL, 0, 0], dtype=np.int64)
        self.n0 = 0
        self.step_index = 0
        self.track_positions = track_positions
        self.points = np.empty(0)
        self.n_points = 0
        self.clock = 0.0 if clock else None
        self._clock_rng = make_rng(clock_seed if clock_seed is not None else 0) if clock else None
        self.entropy_residual_max = 0.0
        self.largest_violations = 0

    def _alloc(self, cap):
        self.left = np.full(cap, _treap.NIL, dtype=np.int64)
        self.right = np.full(cap, _treap.NIL, dtype=np.int64)
        self.parent = np.full(cap, _treap.NIL, dtype=np.int64)
        self.length = np.zeros(cap)
        self.ident = np.zeros(cap, dtype=np.int64)
        self.prio = np.zeros(cap, dtype=np.uint64)
        self.sub_sum = np.zeros(cap)
        self.sub_cnt = np.zeros(cap, dtype=np.int64)
        self.start = np.zeros(cap)

    @property
    def capacity(self) -> int:
        return len(self.length)

    def reserve(self, extra_steps: int) -> None:
        need = int(self.meta[_treap.NEXT_SLOT]) + int(extra_steps)
        if need > self.capacity:
            cap = max(need, 2 * self.capacity)
            for name in ("left", "right", "parent", "length", "ident", "prio",
                         "sub_sum", "sub_cnt", "start"):
                old = getattr(self, name)
                fill = _treap.NIL if name in ("left", "right", "parent") else 0
                new = np.full(cap, fill, dtype=old.dtype)
                new[: len(old)] = old
                setattr(self, name, new)
        if self.track_positions:
            need_pts = self.n_points + int(extra_steps)
            if need_pts > len(self.points):
                pts = np.empty(max(need_pts, 2 * len(self.points)))
                pts[: self.n_points] = self.points[: self.n_points]
                self.points = pts

    @classmethod
    def from_config(cls, lengths: Sequence[float], *, track_positions: bool = False,
                    clock: bool = False, clock_seed=None,
                    reserve_steps: int = 0) -> "IntervalTable":
        """Table holding ``lengths`` in the given order around the circle.

        Lengths must be positive and sum to 1 within 1e-9; they are
        renormalized to sum to 1.
        """
        arr = np.asarray(lengths, dtype=float).ravel()
        if arr.size == 0:
            raise ConfigError("empty configuration")
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise ConfigError("nonpositive length in configuration")
        total = math.fsum(arr)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"lengths sum to {total!r}, not 1")
        arr = arr / total
        n0 = arr.size
        table = cls(n0 + reserve_steps, track_positions=track_positions,
                    clock=clock, clock_seed=clock_seed)
        starts = np.concatenate([[0.0], np.cumsum(arr)[:-1]])
        args = table._tree_args()
        for i in range(n0):
            table.length[i] = arr[i]
            table.ident[i] = i
            table.prio[i] = _treap.splitmix64(i)
            table.start[i] = starts[i]
            _treap.insert(i, *args)
        table.meta[_treap.NEXT_SLOT] = n0
        table.meta[_treap.NEXT_ID] = n0
        table.n0 = n0
        table.reserve(reserve_steps)
        return table

    @classmethod
    def random_config(cls, m: int, rng: np.random.Generator, **kwargs) -> "IntervalTable":
        """``m`` intervals cut by ``m - 1`` uniform points (plus the point 0)."""
        if m < 1:
            raise ConfigError("need at least one interval")
        cuts = np.sort(open_uniform(rng, m - 1))
        lengths = np.diff(np.concatenate([[0.0], cuts, [1.0]]))
        return cls.from_config(lengths, **kwargs)

    def _tree_args(self):
        return (self.left, self.right, self.parent, self.length, self.ident,
                self.prio, self.sub_sum, self.sub_cnt, self.meta)

    # ---- queries -----------------------------------------------------

    @property
    def count(self) -> int:
        root = self.meta[_treap.ROOT]
        return int(self.sub_cnt[root]) if root != _treap.NIL else 0

    @property
    def total_length(self) -> float:
        return float(self.sub_sum[self.meta[_treap.ROOT]])

    def _order(self) -> np.ndarray:
        out = np.empty(self.count, dtype=np.int64)
        k = _treap.inorder(self.left, self.right, self.meta, out)
        return out[:k]

    def lengths(self) -> np.ndarray:
        """Lengths in increasing order."""
        return self.length[self._order()]

    def intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """``(starts, lengths)`` sorted by start; needs tracked positions."""
        self._need_positions()
        order = self._order()
        s = self.start[order]
        idx = np.argsort(s, kind="stable")
        return s[idx], self.length[order][idx]

    def size_biased_cdf(self, x: float) -> float:
        if self.count == 0:
            return 0.0
        acc = _treap.prefix_sum(float(x), self.left, self.right, self.length,
                                self.sub_sum, self.meta)
        return min(acc / self.total_length, 1.0)

    def size_biased_quantile(self, u: float) -> tuple[float, IntervalHandle]:
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"quantile level outside [0, 1]: {u!r}")
        node = _treap.quantile_node(u * self.total_length, self.left, self.right,
                                    self.length, self.sub_sum, self.meta)
        ell = float(self.length[node])
        node = _treap.first_with_length(ell, self.left, self.right, self.length, self.meta)
        return ell, IntervalHandle(int(node), int(self.ident[node]))

    def largest(self) -> float:
        return float(self.length[_treap.max_node(self.right, self.meta)])

    def entropy(self) -> tuple[float, float]:
        """Raw ``sum I log I`` and the rescaled value ``raw + log(count)``."""
        ell = self.lengths()
        raw = math.fsum(ell * np.log(ell))
        return raw, raw + math.log(self.count)

    def mass_identity(self) -> float:
        """Closed form of the integral of x^-2 times the (unnormalized)
        size-biased distribution function, which should equal the count."""
        ell = self.lengths()
        cum = np.cumsum(ell)
        inv = 1.0 / ell
        # F is cum[j] on [ell_j, ell_{j+1}); last piece runs to infinity
        pieces = cum[:-1] * (inv[:-1] - inv[1:])
        return math.fsum(pieces) + cum[-1] * inv[-1]

    def rescaled_lengths(self) -> np.ndarray:
        return self.count * self.lengths()

    def empirical_rescaled_cdf(self, grid) -> GridFunction:
        """Size-biased distribution function of ``count * I_i`` on ``grid``."""
        xs = grid.xs if isinstance(grid, GridFunction) else np.asarray(grid, dtype=float)
        return GridFunction(xs, empirical_cdf_values(self.rescaled_lengths(), xs), tail_value=1.0)

    def density_histogram(self, bins: int = 1024, xmax: float = 4.0) -> Histogram:
        return _histogram(self.rescaled_lengths(), bins, xmax)

    def position_histogram(self, bins: int = 128) -> Histogram:
        self._need_positions()
        return _histogram(self.points[: self.n_points], bins, 1.0)

    def split_points(self) -> np.ndarray:
        self._need_positions()
        return self.points[: self.n_points].copy()

    def _need_positions(self):
        if not self.track_positions:
            raise PositionsDisabled("positions were not tracked for this table")

    def audit(self) -> dict:
        """Full recomputation of the cached aggregates."""
        order = np.empty(self.capacity, dtype=np.int64)
        mism, order_err, n = _treap.audit(
            self.left, self.right, self.parent, self.length, self.ident,
            self.sub_sum, self.sub_cnt, self.meta, order)
        ell = self.lengths()
        out = {
            "aggregate_mismatches": int(mism),
            "order_errors": int(order_err),
            "nodes": int(n),
            "count_ok": n == self.n0 + self.step_index,
            "length_drift": abs(math.fsum(ell) - 1.0),
        }
        if self.track_positions:
            s, l = self.intervals()
            out["tiling_gap"] = float(np.max(np.abs(s[1:] - (s[:-1] + l[:-1])), initial=0.0))
            out["tiling_end"] = float(abs(s[-1] + l[-1] - 1.0) + abs(s[0]))
        return out

    # ---- dynamics ----------------------------------------------------

    def _advance(self, us, vs, record=False) -> np.ndarray:
        n = len(us)
        self.reserve(n)
        chosen = np.empty(n if record else 0)
        stats = np.zeros(3)
        code = _treap.run_steps(
            np.ascontiguousarray(us, dtype=float), np.ascontiguousarray(vs, dtype=float),
            self.left, self.right, self.parent, self.length, self.ident, self.prio,
            self.sub_sum, self.sub_cnt, self.start, self.meta,
            self.track_positions, self.points, self.n_points, chosen, record, stats,
        )
        done = n if code == _treap.OK else int(stats[2])
        self.entropy_residual_max = max(self.entropy_residual_max, float(stats[0]))
        self.largest_violations += int(stats[1])
        if self.track_positions:
            self.n_points += done
        if self.clock is not None and done:
            e = self._clock_rng.standard_exponential(done)
            # arrivals of a rate-e^t Poisson clock: e^{t'} = e^t + E
            acc = math.exp(self.clock)
            for x in e:
                acc += x
            self.clock = math.log(acc)
        self.step_index += done
        if code != _treap.OK:
            raise LengthUnderflow(f"interval below 1e-300 at step {self.step_index}")
        return chosen

    def split_step(self, rule: ChoiceRule, rng: np.random.Generator) -> SplitEvent:
        """One step of the process: pick by size-biased quantile, cut uniformly."""
        us, vs = split_draws(rng, rule, 1)
        u, v = float(us[0]), float(vs[0])
        ell, handle = self.size_biased_quantile(u)
        self._advance(us, vs)
        a = v * ell
        return SplitEvent(
            step=self.step_index,
            chosen_length=ell,
            fraction=v,
            entropy_increment=ell * entropy_w(v),
            new_lengths=(a, ell - a),
            handle=handle,
            time=self.clock,
        )

    def apply_split(self, u: float, v: float) -> SplitEvent:
        """Deterministic step from explicit choice level ``u`` and fraction ``v``."""
        if not 0.0 < v < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        ell, handle = self.size_biased_quantile(u)
        self._advance(np.array([u]), np.array([v]))
        a = v * ell
        return SplitEvent(self.step_index, ell, v, ell * entropy_w(v), (a, ell - a),
                          handle, self.clock)


def empirical_cdf_values(samples: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Size-biased empirical distribution function of ``samples`` at ``xs``."""
    srt = np.sort(samples)
    cum = np.cumsum(srt)
    cum /= cum[-1]
    k = np.searchsorted(srt, xs, side="right")
    return np.where(k > 0, cum[np.maximum(k - 1, 0)], 0.0)


def log_schedule(n_steps: int) -> list[int]:
    """Observer ticks: 0, powers of two up to ``n_steps``, and ``n_steps``."""
    ticks = [0]
    p = 1
    while p <= n_steps:
        ticks.append(p)
        p *= 2
    if ticks[-1] != n_steps:
        ticks.append(n_steps)
    return ticks


@dataclass
class SimulationReport:
    seed: object
    rule: str
    n0: int
    steps: int
    schedule: list
    count: int
    entropy_trace: list = field(default_factory=list)
    largest_trace: list = field(default_factory=list)
    invariant_residuals: dict = field(default_factory=dict)
    rng_algorithm: str = RNG_ALGORITHM
    clock: Optional[float] = None
    observations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rule": self.rule,
            "n0": self.n0,
            "steps": self.steps,
            "count": self.count,
            "schedule": list(self.schedule),
            "rng_algorithm": self.rng_algorithm,
            "clock": self.clock,
            "entropy_trace": self.entropy_trace,
            "largest_trace": self.largest_trace,
            "invariant_residuals": self.invariant_residuals,
            "observations": self.observations,
        }


Observer = Callable[[IntervalTable, int], object]

_CHUNK = 1 << 16


def run(table: IntervalTable, rule: ChoiceRule, n_steps: int, rng=None, *,
        seed=None, schedule: Optional[Sequence[int]] = None,
        observers: Sequence[Observer] = ()) -> SimulationReport:
    """Advance ``table`` by ``n_steps`` splits, sampling traces at each tick.

    Either ``rng`` or ``seed`` supplies the stream; the report records the
    seed so a run is reproducible bit for bit.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if rng is None:
        rng = make_rng(seed)
    base = table.step_index
    ticks = sorted(set(int(t) for t in (schedule if schedule is not None else log_schedule(n_steps))))
    ticks = [t for t in ticks if 0 <= t <= n_steps]
    table.reserve(n_steps)
    report = SimulationReport(seed=seed, rule=str(rule), n0=table.n0, steps=n_steps,
                              schedule=ticks, count=table.count)
    mass_worst = 0.0
    drift_worst = 0.0
    done = 0

    def observe(step):
        nonlocal mass_worst, drift_worst
        raw, rescaled = table.entropy()
        report.entropy_trace.append([base + step, raw, rescaled])
        report.largest_trace.append([base + step, table.largest()])
        cnt = table.count
        mass_worst = max(mass_worst, abs(table.mass_identity() - cnt) / cnt)
        drift = abs(math.fsum(table.lengths()) - 1.0) / (cnt * _EPS)
        drift_worst = max(drift_worst, drift)
        for k, obs in enumerate(observers):
            report.observations.setdefault(str(k), []).append([base + step, obs(table, step)])

    for tick in ticks + [n_steps]:
        while done < tick:
            m = min(_CHUNK, tick - done)
            us, vs = split_draws(rng, rule, m)
            table._advance(us, vs)
            done += m
        if tick in ticks and (not report.entropy_trace or report.entropy_trace[-1][0] != base + tick):
            observe(tick)

    report.count = table.count
    report.clock = table.clock
    report.invariant_residuals = {
        "mass_identity_rel": mass_worst,
        "entropy_identity_rel": table.entropy_residual_max,
        "length_drift_eps_per_count": drift_worst,
        "largest_increases": table.largest_violations,
    }
    return report
