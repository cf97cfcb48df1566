"""Backward flow read off a stored bundle of forward trajectories.

For a monotone forward system y(s, t, x), the dual runs on the reversed
clock: the value of the backward map at (s, t, x) is the smallest forward
value at time T - t among trajectories that sit strictly above x at time
T - s.  Computed from finitely many stored trajectories this is an outer
approximation that refines monotonically as trajectories are added.

The mapping I turns a whole bundle into a bundle of backward trajectories
on the forward grid, one per stored start, using the terminal values as
thresholds.  Rows that are nowhere covered carry +inf and are flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CoverageError",
    "TrajectoryBundle",
    "DualBundle",
    "dual_value",
    "mapping_I",
    "wedge_check",
    "export_bundle_csv",
]


class CoverageError(ValueError):
    """No stored trajectory qualifies for the requested dual evaluation."""


def _grid_index(times: np.ndarray, t: float, tol: float) -> int:
    i = int(np.searchsorted(times, t - tol))
    if i >= times.size or abs(times[i] - t) > tol:
        raise ValueError(f"time {t!r} is not on the stored grid")
    return i


@dataclass
class TrajectoryBundle:
    """Forward trajectories on a shared time grid, constant-left extended.

    ``values[j, i]`` is trajectory j at ``times[i]``; before its start time
    the row holds the start value.  ``starts`` is a list of (s_j, x_j).
    """

    starts: list
    times: np.ndarray
    values: np.ndarray
    shared_seed: int | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.starts), self.times.size):
            raise ValueError("values must be (n_trajectories, n_times)")
        if not np.all(np.diff(self.times) > 0.0):
            raise ValueError("time grid must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def _tol(self) -> float:
        return 1e-9 * max(1.0, self.horizon)

    def time_index(self, t: float) -> int:
        return _grid_index(self.times, t, self._tol)

    @classmethod
    def from_two_param(cls, paths, shared_seed=None):
        """Adopt the output of the two-parameter splitting run as a bundle."""
        return cls(list(paths.starts), paths.times, paths.values,
                   shared_seed=shared_seed)

    @classmethod
    def from_map(cls, flow_map, starts, times):
        """Tabulate an explicit two-parameter map y(s, t, x) on a grid.

        ``flow_map(s, t, x)`` must accept scalars with s <= t.  Rows are
        constant at x before their start time.
        """
        times = np.asarray(times, dtype=float)
        vals = np.empty((len(starts), times.size))
        for j, (s, x) in enumerate(starts):
            for i, t in enumerate(times):
                vals[j, i] = flow_map(s, t, x) if t >= s else x
        return cls(list(starts), times, vals)

    def export_csv(self, path, reversed_clock: bool = False) -> None:
        export_bundle_csv(self, path, reversed_clock=reversed_clock)


def dual_value(bundle: TrajectoryBundle, s: float, t: float, x: float) -> float:
    """Backward map at (s, t, x) on the reversed clock, 0 <= s <= t <= horizon.

    Evaluates inf over stored trajectories of their value at forward time
    T - t, among those already running at T - t whose value at forward time
    T - s exceeds x strictly.  Raises CoverageError when no trajectory
    qualifies (the inf over the void is +inf, not a number to act on).
    """
    T = bundle.horizon
    if not (0.0 <= s <= t <= T + bundle._tol):
        raise ValueError("need 0 <= s <= t <= horizon")
    i_s = bundle.time_index(T - s)
    i_t = bundle.time_index(T - t)
    s_arr = np.array([sj for sj, _ in bundle.starts])
    running = s_arr <= (T - t) + bundle._tol
    qual = running & (bundle.values[:, i_s] > x)
    if not np.any(qual):
        raise CoverageError(
            f"no stored trajectory above x={x!r} at reversed time s={s!r}")
    return float(np.min(bundle.values[qual, i_t]))


@dataclass
class DualBundle:
    """Backward trajectories produced by mapping a whole forward bundle.

    ``values[j, i]`` is the backward path with threshold x_j evaluated at
    forward time ``times[i]``; +inf where no forward trajectory qualifies,
    with ``covered[j, i]`` False there.  Rows are frozen at their own start
    level on [0, s_j).
    """

    starts: list
    times: np.ndarray
    values: np.ndarray
    covered: np.ndarray = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.covered is None:
            self.covered = np.isfinite(self.values)
        if self.values.shape != (len(self.starts), self.times.size):
            raise ValueError("values must be (n_trajectories, n_times)")

    def export_csv(self, path, reversed_clock: bool = True) -> None:
        export_bundle_csv(self, path, reversed_clock=reversed_clock)


def mapping_I(bundle: TrajectoryBundle, strict: bool = False) -> DualBundle:
    """Backward bundle: row j tracks inf of forward paths ending above x_j.

    For each stored start (s_j, x_j) and each grid time r, the value is
    inf over forward trajectories i with start s_i <= r and terminal value
    >= x_j of their value at r; constant on [0, s_j).  Uncovered entries are
    +inf and flagged; with ``strict`` they raise CoverageError instead.
    """
    tol = bundle._tol
    s_arr = np.array([sj for sj, _ in bundle.starts])
    x_arr = np.array([xj for _, xj in bundle.starts])
    order = np.argsort(s_arr, kind="stable")
    s_sorted = s_arr[order]
    vals_sorted = bundle.values[order]
    term_sorted = bundle.values[order, -1]
    n, nt = bundle.values.shape
    # number of started trajectories at each grid time, in sorted order
    cnt = np.searchsorted(s_sorted, bundle.times + tol, side="right")
    out = np.full((n, nt), np.inf)
    for j in range(n):
        masked = np.where((term_sorted >= x_arr[j])[:, None], vals_sorted, np.inf)
        prefix = np.minimum.accumulate(masked, axis=0)
        has = cnt > 0
        out[j, has] = prefix[cnt[has] - 1, has]
        i0 = bundle.time_index(s_arr[j]) if s_arr[j] > 0.0 else 0
        out[j, :i0] = out[j, i0]
    covered = np.isfinite(out)
    if strict and not covered.all():
        j, i = np.argwhere(~covered)[0]
        raise CoverageError(
            f"backward row {j} uncovered at time {bundle.times[i]!r}")
    return DualBundle(list(bundle.starts), bundle.times.copy(), out, covered)


def wedge_check(bundle: TrajectoryBundle, dual: DualBundle,
                threshold: float = 0.0) -> list:
    """Count strict crossings between forward and backward trajectories.

    A monotone forward system and its backward counterpart may touch but not
    cross: the sign of (forward - backward) along the shared grid must not
    flip with both sides exceeding ``threshold`` in magnitude.  Returns one
    record per violation; an empty list certifies the non-crossing property
    at this resolution.
    """
    if bundle.times.shape != dual.times.shape or \
            np.max(np.abs(bundle.times - dual.times)) > bundle._tol:
        raise ValueError("bundles must share the time grid")
    tol = bundle._tol
    # constant pre-start extensions are bookkeeping, not dynamics: a row only
    # participates in the crossing test once its trajectory is live.  The
    # stored value at the activation node itself is the raw initial condition
    # (pre-jump), so forward rows enter one node later.
    f_live = [bundle.times > s + tol for s, _ in bundle.starts]
    d_live = [dual.times >= s - tol for s, _ in dual.starts]
    violations = []
    for i in range(bundle.values.shape[0]):
        f = bundle.values[i]
        for j in range(dual.values.shape[0]):
            d = dual.values[j]
            ok = np.isfinite(d) & f_live[i] & d_live[j]
            diff = np.where(ok, f - d, np.nan)
            for k in range(diff.size - 1):
                lo, hi = diff[k], diff[k + 1]
                if np.isnan(lo) or np.isnan(hi):
                    continue
                if lo * hi < 0.0 and min(abs(lo), abs(hi)) > threshold:
                    violations.append({
                        "forward": i,
                        "backward": j,
                        "time_index": k,
                        "magnitude": float(min(abs(lo), abs(hi))),
                    })
    return violations


def export_bundle_csv(obj, path, reversed_clock: bool = False) -> None:
    """Write a trajectory bundle as CSV, one column per trajectory.

    A comment header records the clock direction: ``# reversed=true`` marks a
    backward bundle whose times are forward-grid times read under the
    reversed clock.
    """
    times = obj.times
    values = obj.values
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# reversed={'true' if reversed_clock else 'false'}\n")
        cols = ",".join(f"traj_{j}" for j in range(values.shape[0]))
        fh.write(f"t,{cols}\n")
        for i, t in enumerate(times):
            row = ",".join(f"{values[j, i]:.17g}" for j in range(values.shape[0]))
            fh.write(f"{t:.17g},{row}\n")
