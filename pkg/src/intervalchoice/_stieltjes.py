"""The measure z -> dPsi(F(z)) of a grid function, split per grid segment.

On each segment the continuous part of the measure has mass
``Psi_c(F(b)) - Psi_c(F(a))`` (exact) and a shape proportional to
``psi(F(z)) F'(z)``; only its moments E[1/z] and E[z] are kept, from
Gauss-Legendre quadrature. Jumps of Psi become atoms where F first reaches
the jump level. Mass beyond the last node follows a fitted power law.
Any integral of the form  int h(z) dPsi(F(z))  with h in {1/z, z, 1} is then
a finite sum, and the discrete identities (total mass, Fubini swaps) hold
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from intervalchoice.grid import GridFunction, fit_tail_power
from intervalchoice.psi import ChoiceRule

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class TailDivergence(ArithmeticError):
    pass


def _continuous_cdf(rule: ChoiceRule, u):
    u = np.clip(u, 0.0, 1.0)
    out = rule.cdf(u)
    for level, jump in rule.atoms():
        out = out - jump * (u >= level)
    return out


@dataclass
class SegmentMeasure:
    xs: np.ndarray
    mass: np.ndarray       # per segment [xs[i], xs[i+1]]
    inv_mean: np.ndarray   # E[1/z] on the segment
    mean: np.ndarray       # E[z] on the segment
    atom_z: np.ndarray
    atom_mass: np.ndarray
    tail_mass: float
    tail_power: float

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    @property
    def tail_inv_mean(self) -> float:
        p = self.tail_power
        return p / ((p + 1.0) * self.x_max) if self.tail_mass > 0 else 0.0

    @property
    def tail_mean(self) -> float:
        if self.tail_mass <= 0:
            return 0.0
        p = self.tail_power
        if p <= 1.0:
            raise TailDivergence(f"tail power {p:.3g} <= 1: first moment diverges")
        return p * self.x_max / (p - 1.0)

    def total(self) -> float:
        return float(self.mass.sum() + self.tail_mass + self.atom_mass.sum())

    def first_moment(self) -> float:
        """int z dPsi(F(z))."""
        s = float(np.dot(self.mass, self.mean)) + float(np.dot(self.atom_mass, self.atom_z))
        if self.tail_mass > 0:
            s += self.tail_mass * self.tail_mean
        return s

    def inverse_tail(self) -> np.ndarray:
        """J(x) = int_{z >= x} z^-1 dPsi(F(z)) at every node."""
        contrib = self.mass * self.inv_mean
        j = np.zeros(len(self.xs))
        j[:-1] = np.cumsum(contrib[::-1])[::-1]
        j += self.tail_mass * self.tail_inv_mean
        for z, m in zip(self.atom_z, self.atom_mass):
            j[self.xs <= z] += m / z
        return j

    def inverse_tail_at(self, y) -> np.ndarray:
        """J at arbitrary points: linear between nodes, power law beyond."""
        y = np.asarray(y, dtype=float)
        nodes = self.inverse_tail()
        out = np.interp(y, self.xs, nodes)
        far = y > self.x_max
        if np.any(far):
            yy = np.where(far, y, self.x_max)
            val = np.zeros_like(yy)
            if self.tail_mass > 0:
                p = self.tail_power
                val = self.tail_mass * p / (p + 1.0) * self.x_max**p * yy ** (-p - 1.0)
            for z, m in zip(self.atom_z, self.atom_mass):
                val = val + np.where(yy <= z, m / z, 0.0)
            out = np.where(far, val, out)
        return out

    def integrals(self):
        """Per-segment int J dy and int y J dy, plus the beyond-grid pieces.

        Exact for the segment model, so the sums equal the total mass and
        half the first moment.
        """
        a, b = self.xs[:-1], self.xs[1:]
        jb = self.inverse_tail()[1:]
        int_j = (b - a) * jb + self.mass * (1.0 - a * self.inv_mean)
        int_yj = 0.5 * (b * b - a * a) * jb + 0.5 * self.mass * (self.mean - a * a * self.inv_mean)
        # atoms: J jumps down by m/z at z, so partial segments need care
        for z, m in zip(self.atom_z, self.atom_mass):
            if z >= self.x_max:
                continue
            i = int(np.searchsorted(self.xs, z, side="left")) - 1
            if 0 <= i < len(a) and a[i] < z < b[i]:
                int_j[i] += (m / z) * (z - a[i])
                int_yj[i] += (m / z) * 0.5 * (z * z - a[i] * a[i])
        X = self.x_max
        beyond_j = 0.0
        beyond_yj = 0.0
        if self.tail_mass > 0:
            p = self.tail_power
            beyond_j = self.tail_mass / (p + 1.0)
            if p <= 1.0:
                raise TailDivergence(f"tail power {p:.3g} <= 1")
            beyond_yj = self.tail_mass * p * X / ((p + 1.0) * (p - 1.0))
        for z, m in zip(self.atom_z, self.atom_mass):
            if z > X:
                beyond_j += (m / z) * (z - X)
                beyond_yj += (m / z) * 0.5 * (z * z - X * X)
        return int_j, int_yj, beyond_j, beyond_yj


def segment_measure(rule: ChoiceRule, F: GridFunction, min_tail_power: float = 0.0) -> SegmentMeasure:
    """Per-segment decomposition of z -> dPsi(F(z)).

    ``min_tail_power`` floors the fitted power of the beyond-grid mass; solvers
    pass a value above 1 so transient iterates cannot make the tail diverge.
    """
    xs = F.xs
    vals = np.clip(F.values, 0.0, 1.0)
    tail_value = min(max(F.tail_value, 0.0), 1.0)
    a, b = xs[:-1], xs[1:]
    pc = _continuous_cdf(rule, vals)
    mass = np.maximum(np.diff(pc), 0.0)

    inv_mean = np.log(b[1:] / a[1:]) / (b[1:] - a[1:])
    inv_mean = np.concatenate([[2.0 / b[0]], inv_mean])
    mean = np.concatenate([[2.0 * b[0] / 3.0], 0.5 * (a[1:] + b[1:])])

    if rule.has_density:
        z, fz, dfz = F.gauss_shape(_GL_X)
        dens = np.asarray(rule.density(np.clip(fz, 0.0, 1.0)))
        g = dens * np.maximum(dfz, 0.0) * _GL_W[None, :]
        norm = g.sum(axis=1)
        ok = norm > 0
        inv_mean = np.where(ok, (g / z).sum(axis=1) / np.where(ok, norm, 1.0), inv_mean)
        mean = np.where(ok, (g * z).sum(axis=1) / np.where(ok, norm, 1.0), mean)

    atom_z, atom_m = [], []
    for level, jump in rule.atoms():
        hit = np.nonzero(vals >= level)[0]
        if len(hit):
            j = int(hit[0])
            if j == 0:
                z = 0.0
            else:
                f0, f1 = vals[j - 1], vals[j]
                z = a[j - 1] + (level - f0) / (f1 - f0) * (b[j - 1] - a[j - 1])
            atom_z.append(z)
            atom_m.append(jump)
        elif tail_value >= level:
            atom_z.append(np.inf)
            atom_m.append(jump)

    ptail = _continuous_cdf(rule, np.array([tail_value]))[0]
    tail_mass = max(float(ptail - pc[-1]), 0.0)
    tail_power = 0.0
    if tail_mass > 0:
        gaps = ptail - pc[-2:]
        p = fit_tail_power(xs[-2:], gaps)
        tail_power = max(float(p) if p is not None else 1e6, min_tail_power)
    return SegmentMeasure(xs, mass, inv_mean, mean, np.array(atom_z, dtype=float),
                          np.array(atom_m, dtype=float), tail_mass, tail_power)
