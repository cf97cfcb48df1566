"""Atomic measures on the line, stored through their quantile functions.

A probability measure carried by finitely many atoms is encoded as the
right-continuous generalized inverse of its distribution function: a step
function on (0, 1] with breakpoints in cumulative mass and one value per
step.  This makes p-Wasserstein distances exact one-dimensional integrals
over the union of breakpoints, with no transport solve.

Empirical pushforwards of Lebesgue measure on [0, 1] under a monotone map
sampled on a grid use the midpoint-cell rule: the grid point x_i carries the
mass of the cell bounded by the midpoints to its neighbours, with the two
boundary cells extended to 0 and 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuantileMeasure",
    "CdfStep",
    "pushforward",
    "weighted_atoms",
    "generalized_inverse",
    "wasserstein_p",
    "estimate_W1p",
    "vague_discrepancy",
]


@dataclass(frozen=True)
class QuantileMeasure:
    """Step quantile function: value ``values[i]`` on ``(breakpoints[i], breakpoints[i+1]]``.

    ``breakpoints`` has length K+1, starts at 0.0 and ends at 1.0, strictly
    increasing; ``values`` has length K and is nondecreasing.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        if b.ndim != 1 or v.ndim != 1 or b.size != v.size + 1:
            raise ValueError("need K+1 breakpoints for K values")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("breakpoints must run from 0.0 to 1.0")
        if not np.all(np.diff(b) > 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(v) < 0.0):
            raise ValueError("quantile values must be nondecreasing")

    @classmethod
    def from_atoms(cls, positions, masses, mass_tol: float = 1e-9):
        """Build from atoms; masses must be positive and sum to 1 within mass_tol."""
        pos = np.asarray(positions, dtype=float)
        mas = np.asarray(masses, dtype=float)
        if pos.shape != mas.shape or pos.ndim != 1 or pos.size == 0:
            raise ValueError("positions and masses must be matching 1-d arrays")
        if np.any(mas <= 0.0):
            raise ValueError("atom masses must be positive")
        total = float(np.sum(mas))
        if abs(total - 1.0) > mass_tol:
            raise ValueError(f"atom masses sum to {total!r}, not 1")
        order = np.argsort(pos, kind="stable")
        pos, mas = pos[order], mas[order]
        # combine duplicate positions
        keep = np.concatenate([[True], np.diff(pos) > 0.0])
        grp = np.cumsum(keep) - 1
        upos = pos[keep]
        umas = np.zeros(upos.size)
        np.add.at(umas, grp, mas)
        cum = np.cumsum(umas) / total
        cum[-1] = 1.0
        return cls(np.concatenate([[0.0], cum]), upos)

    def atoms(self):
        """Return (positions, masses) with equal adjacent values merged."""
        spans = np.diff(self.breakpoints)
        keep = np.concatenate([[True], np.diff(self.values) > 0.0])
        grp = np.cumsum(keep) - 1
        pos = self.values[keep]
        mas = np.zeros(pos.size)
        np.add.at(mas, grp, spans)
        return pos, mas

    def quantile(self, u):
        """Evaluate the step quantile at u in [0, 1]; u = 0 maps to the lowest value."""
        uu = np.asarray(u, dtype=float)
        if np.any(uu < 0.0) or np.any(uu > 1.0):
            raise ValueError("quantile argument outside [0, 1]")
        idx = np.searchsorted(self.breakpoints, uu, side="left")
        idx = np.clip(idx, 1, self.values.size) - 1
        out = self.values[idx]
        return float(out) if np.isscalar(u) or uu.ndim == 0 else out

    def mean(self) -> float:
        return float(np.sum(np.diff(self.breakpoints) * self.values))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cum_mass", "value"])
            for b, v in zip(self.breakpoints[1:], self.values):
                w.writerow([f"{b:.17g}", f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path):
        cums, vals = [], []
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header != ["cum_mass", "value"]:
                raise ValueError(f"unexpected header {header!r}")
            for row in rd:
                cums.append(float(row[0]))
                vals.append(float(row[1]))
        return cls(np.concatenate([[0.0], cums]), np.asarray(vals))


@dataclass(frozen=True)
class CdfStep:
    """Right-continuous distribution function of an atomic probability measure."""

    positions: np.ndarray
    cum_masses: np.ndarray

    def __call__(self, x):
        xx = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.positions, xx, side="right")
        padded = np.concatenate([[0.0], self.cum_masses])
        out = padded[idx]
        return float(out) if np.isscalar(x) or xx.ndim == 0 else out

    def quantile_measure(self) -> QuantileMeasure:
        return QuantileMeasure(np.concatenate([[0.0], self.cum_masses]),
                               self.positions)


def generalized_inverse(qm: QuantileMeasure) -> CdfStep:
    """Distribution function of the measure behind a quantile step.

    Round trip: ``generalized_inverse(qm).quantile_measure()`` reproduces the
    canonical (atom-merged) form of ``qm``; applied twice it is a fixed point.
    """
    pos, mas = qm.atoms()
    cum = np.cumsum(mas)
    cum[-1] = 1.0
    return CdfStep(pos, cum)


def pushforward(grid_starts, end_positions) -> QuantileMeasure:
    """Pushforward of Lebesgue measure on [0, 1] under a map sampled on a grid.

    ``grid_starts`` must be strictly increasing inside [0, 1];
    ``end_positions`` are the mapped values and must be nondecreasing (the
    sampled map is monotone).  Each grid point receives the Lebesgue mass of
    its midpoint cell; the first and last cells extend to 0 and 1.
    """
    x = np.asarray(grid_starts, dtype=float)
    e = np.asarray(end_positions, dtype=float)
    if x.shape != e.shape or x.ndim != 1 or x.size == 0:
        raise ValueError("grid and endpoint arrays must be matching 1-d arrays")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("grid points must lie in [0, 1]")
    if x.size > 1 and not np.all(np.diff(x) > 0.0):
        raise ValueError("grid must be strictly increasing")
    if np.any(np.diff(e) < 0.0):
        raise ValueError("endpoint values must be nondecreasing (monotone map)")
    if x.size == 1:
        masses = np.array([1.0])
    else:
        mids = 0.5 * (x[:-1] + x[1:])
        edges = np.concatenate([[0.0], mids, [1.0]])
        masses = np.diff(edges)
    return QuantileMeasure.from_atoms(e, masses)


def weighted_atoms(positions, masses):
    """Validate and order a general (not necessarily probability) atomic measure.

    Returns (positions, masses) sorted by position with duplicates combined;
    total mass is left as given.  Used by :func:`vague_discrepancy` for
    locally finite limits such as restricted counting measures.
    """
    pos = np.asarray(positions, dtype=float)
    mas = np.asarray(masses, dtype=float)
    if pos.shape != mas.shape or pos.ndim != 1:
        raise ValueError("positions and masses must be matching 1-d arrays")
    if np.any(mas < 0.0):
        raise ValueError("atom masses must be nonnegative")
    order = np.argsort(pos, kind="stable")
    pos, mas = pos[order], mas[order]
    if pos.size:
        keep = np.concatenate([[True], np.diff(pos) > 0.0])
        grp = np.cumsum(keep) - 1
        upos = pos[keep]
        umas = np.zeros(upos.size)
        np.add.at(umas, grp, mas)
        pos, mas = upos, umas
    return pos, mas


def wasserstein_p(mu: QuantileMeasure, nu: QuantileMeasure, p: float = 1.0) -> float:
    """Exact W_p between two atomic measures via their quantile steps.

    W_p^p = integral over (0,1) of |G_mu - G_nu|^p, evaluated segment by
    segment on the union of breakpoints.
    """
    if p < 1.0:
        raise ValueError("order p must be >= 1")
    ub = np.union1d(mu.breakpoints, nu.breakpoints)
    seg = np.diff(ub)
    im = np.searchsorted(mu.breakpoints, ub[1:], side="left") - 1
    iv = np.searchsorted(nu.breakpoints, ub[1:], side="left") - 1
    gap = np.abs(mu.values[im] - nu.values[iv])
    if p == 1.0:
        cost = float(np.sum(seg * gap))
        return cost
    return float(np.sum(seg * gap ** p)) ** (1.0 / p)


def estimate_W1p(coupled_ensembles, p: float = 1.0):
    """Monte Carlo estimate of E W_p between coupled ensemble pairs.

    ``coupled_ensembles`` is a sequence of (mu, nu) QuantileMeasure pairs, one
    per replicate.  Returns (mean, standard error).  Each replicate's distance
    is an exact quantile integral; averaging over replicates estimates the
    expected coupled distance, an upper bound for the distance of expectations.
    """
    dists = np.array([wasserstein_p(mu, nu, p) for mu, nu in coupled_ensembles])
    if dists.size == 0:
        raise ValueError("need at least one replicate pair")
    mean = float(np.mean(dists))
    se = 0.0 if dists.size == 1 else float(np.std(dists, ddof=1) / np.sqrt(dists.size))
    return mean, se


def _as_atoms(obj):
    if isinstance(obj, QuantileMeasure):
        return obj.atoms()
    pos, mas = obj
    return weighted_atoms(pos, mas)


def vague_discrepancy(nu_n, nu, window, n_test: int = 32) -> float:
    """Max deviation of integrals of triangle test functions inside a window.

    Test functions are hat functions peaking at n_test interior points of
    ``window`` and vanishing outside it, so the result only sees atoms in the
    open window; both arguments may be QuantileMeasure or (positions, masses)
    pairs of a general atomic measure.
    """
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError("window must have positive length")
    if n_test < 1:
        raise ValueError("need at least one test function")
    p1, m1 = _as_atoms(nu_n)
    p2, m2 = _as_atoms(nu)
    half = (hi - lo) / (n_test + 1)
    centers = lo + half * np.arange(1, n_test + 1)
    worst = 0.0
    for c in centers:
        f1 = np.maximum(0.0, 1.0 - np.abs(p1 - c) / half)
        f2 = np.maximum(0.0, 1.0 - np.abs(p2 - c) / half)
        worst = max(worst, abs(float(np.sum(m1 * f1)) - float(np.sum(m2 * f2))))
    return worst
