"""Coalescing correlated particle system: the discrete Harris flow.

State is kept at cluster level (strictly increasing representatives plus a
label -> cluster map). Each fine step adds the drift Euler term to every
representative, then a correlated driftless increment sampled from the
covariance Gram of the current representatives, then applies the sticky merge
rule: any adjacent pair whose order inverts or whose gap falls to tol_merge is
merged (representative = arithmetic mean) and stays merged forever.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceSpec, cholesky_factor, eval_phi, gram_matrix
from .drift import DriftSpec, eval_drift


@dataclass
class SimConfig:
    dt_fine: float
    tol_merge: float = 1e-10
    jitter: float = 0.0
    record_stride: int = 1
    log_increments: bool = False
    zero_noise: bool = False  # dry-run mode: driftless increments forced to 0

    def __post_init__(self):
        if self.dt_fine <= 0:
            raise ValueError("dt_fine must be positive")
        if self.tol_merge < 0 or self.jitter < 0:
            raise ValueError("tol_merge and jitter must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.log_increments and self.record_stride != 1:
            raise ValueError("increment logging requires record_stride == 1")


@dataclass
class ClusterState:
    """Cluster representatives (strictly increasing) and label membership."""

    reps: np.ndarray
    membership: np.ndarray  # label index -> cluster index
    time: float = 0.0

    def validate(self, tol_merge: float = 0.0) -> None:
        if self.reps.ndim != 1 or self.membership.ndim != 1:
            raise ValueError("reps and membership must be one-dimensional")
        if np.any(np.diff(self.reps) <= tol_merge):
            raise ValueError("cluster representatives must be separated and increasing")
        used = np.unique(self.membership)
        if used.size != self.reps.size or used[0] != 0 or used[-1] != self.reps.size - 1:
            raise ValueError("membership must map onto all cluster indices")

    @property
    def n_clusters(self) -> int:
        return int(self.reps.size)

    def label_values(self) -> np.ndarray:
        return self.reps[self.membership]


@dataclass
class PathRecord:
    """Label-level trajectory record on the recorded grid."""

    times: np.ndarray
    values: np.ndarray  # shape (n_times, n_labels)
    merge_events: list = field(default_factory=list)
    increments: np.ndarray | None = None  # label-level driftless increments per fine step
    increment_times: np.ndarray | None = None
    dt_fine: float | None = None

    def to_csv(self, path, events_path=None) -> None:
        m = self.values.shape[1]
        header = "t," + ",".join(f"label_{j}" for j in range(m))
        with open(path, "w", newline="\n") as fh:
            fh.write(header + "\n")
            for t, row in zip(self.times, self.values):
                cells = [f"{t:.17g}"] + [f"{v:.17g}" for v in row]
                fh.write(",".join(cells) + "\n")
        if events_path is None:
            events_path = str(path) + ".events.json"
        with open(events_path, "w", newline="\n") as fh:
            json.dump(self.merge_events, fh, indent=1, sort_keys=True)
            fh.write("\n")


def init_state(starts, time: float = 0.0) -> ClusterState:
    """Sorted cluster state from label start positions; exact duplicates share a cluster."""
    arr = np.asarray(starts, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("starts must be a nonempty one-dimensional array")
    reps, membership = np.unique(arr, return_inverse=True)
    return ClusterState(reps=reps, membership=membership.astype(np.intp), time=time)


def coalesce(reps: np.ndarray, membership: np.ndarray, tol_merge: float):
    """Sticky merge pass; returns (reps, membership, merged_flag).

    Adjacent pairs (in the persistent cluster order) whose values inverted or
    whose gap is <= tol_merge are merged to their mean, greedy left-priority,
    repeated until the array is strictly increasing with gaps above tol_merge.
    """
    merged_any = False
    while reps.size > 1:
        gaps = np.diff(reps)
        offending = gaps <= tol_merge
        if not offending.any():
            break
        merged_any = True
        # greedy left-priority selection of non-overlapping adjacent pairs
        keep_map = np.empty(reps.size, dtype=np.intp)
        new_reps = []
        i = 0
        while i < reps.size:
            if i + 1 < reps.size and offending[i]:
                keep_map[i] = keep_map[i + 1] = len(new_reps)
                new_reps.append(0.5 * (reps[i] + reps[i + 1]))
                i += 2
            else:
                keep_map[i] = len(new_reps)
                new_reps.append(reps[i])
                i += 1
        reps = np.asarray(new_reps)
        membership = keep_map[membership]
    return reps, membership, merged_any


def _emit_merge_events(events: list, time: float, membership_before: np.ndarray,
                       membership_after: np.ndarray) -> None:
    if membership_after.max(initial=0) == membership_before.max(initial=0):
        return
    labels = np.arange(membership_after.size)
    for c in np.unique(membership_after):
        group = labels[membership_after == c]
        if np.unique(membership_before[group]).size > 1:
            events.append({"time": float(time), "labels": [int(x) for x in group]})


def driftless_substep(state: ClusterState, phi: CovarianceSpec, h: float,
                      rng: np.random.Generator, cfg: SimConfig,
                      events: list | None = None):
    """One correlated driftless increment plus the merge rule.

    Returns (new_state, label_increments). Cluster increments have covariance
    h * phi(rep_i - rep_j) (up to jitter); labels read their cluster's
    increment, which keeps merged labels bitwise equal.
    """
    c = state.n_clusters
    if cfg.zero_noise:
        inc = np.zeros(c)
    else:
        g = rng.standard_normal(c)
        ell = cholesky_factor(gram_matrix(phi, state.reps), cfg.jitter)
        inc = math.sqrt(h) * (ell @ g)
    label_inc = inc[state.membership]
    reps = state.reps + inc
    membership_before = state.membership
    reps, membership, merged = coalesce(reps, membership_before, cfg.tol_merge)
    t_new = state.time + h
    if merged and events is not None:
        _emit_merge_events(events, t_new, membership_before, membership)
    return ClusterState(reps=reps, membership=membership, time=t_new), label_inc


def simulate(phi: CovarianceSpec, a: DriftSpec, starts, T: float,
             cfg: SimConfig, rng: np.random.Generator) -> PathRecord:
    """Euler drift plus correlated driftless substeps from t = 0 to T."""
    n_steps = int(round(T / cfg.dt_fine))
    if abs(n_steps * cfg.dt_fine - T) > 1e-9 * max(1.0, T) or n_steps < 1:
        raise ValueError("dt_fine must divide T")
    h = cfg.dt_fine
    state = init_state(starts)
    m = state.membership.size
    events: list = []
    rec_times = [0.0]
    rec_values = [state.label_values()]
    incs = np.empty((n_steps, m)) if cfg.log_increments else None

    for k in range(n_steps):
        if not a.is_zero:
            state = ClusterState(reps=state.reps + eval_drift(a, state.reps) * h,
                                 membership=state.membership, time=state.time)
            # drift is applied to representatives; a monotone-breaking drift step
            # is resolved by the same merge rule before sampling noise
            reps, membership, merged = coalesce(state.reps, state.membership, cfg.tol_merge)
            if merged:
                _emit_merge_events(events, state.time, state.membership, membership)
                state = ClusterState(reps=reps, membership=membership, time=state.time)
        state, label_inc = driftless_substep(state, phi, h, rng, cfg, events)
        if incs is not None:
            incs[k] = label_inc
        if (k + 1) % cfg.record_stride == 0 or k == n_steps - 1:
            rec_times.append(state.time)
            rec_values.append(state.label_values())

    rec = PathRecord(times=np.asarray(rec_times), values=np.asarray(rec_values),
                     merge_events=events, dt_fine=h)
    if incs is not None:
        rec.increments = incs
        rec.increment_times = np.arange(n_steps) * h
    return rec


def empirical_quadratic_covariation(record: PathRecord, phi: CovarianceSpec) -> float:
    """Max pairwise gap between realized and model quadratic covariation.

    For each label pair: sum_k dw_i dw_j versus sum_k phi(X_i - X_j) h, with
    positions read at each step start. Requires increment logging.
    """
    if record.increments is None or record.dt_fine is None:
        raise ValueError("record needs log_increments=True")
    dw = record.increments
    x = record.values[:-1]  # position at each step start
    h = record.dt_fine
    realized = dw.T @ dw
    model = np.zeros_like(realized)
    m = dw.shape[1]
    for i in range(m):
        for j in range(m):
            model[i, j] = np.sum(eval_phi(phi, x[:, i] - x[:, j])) * h
    return float(np.max(np.abs(realized - model)))


def apply_generator(phi: CovarianceSpec, a: DriftSpec, x: np.ndarray,
                    grad: np.ndarray, hess: np.ndarray) -> float:
    """A f(x) = 1/2 sum_{k,j} phi(x_k - x_j) hess_kj + sum_k a(x_k) grad_k."""
    g = gram_matrix(phi, x)
    return float(0.5 * np.sum(g * hess) + np.dot(eval_drift(a, x), grad))


def martingale_residual(records: list[PathRecord], phi: CovarianceSpec, a: DriftSpec,
                        f, grad_f, hess_f, s: float, t: float) -> tuple[float, float]:
    """Monte Carlo mean and s.e. of f(X_t) - f(X_s) - int_s^t A f(X_r) dr.

    The integral uses the trapezoid rule on each record's grid restricted to
    [s, t]. Near zero for the flow's own generator.
    """
    vals = np.empty(len(records))
    for i, rec in enumerate(records):
        mask = (rec.times >= s - 1e-12) & (rec.times <= t + 1e-12)
        times = rec.times[mask]
        xs = rec.values[mask]
        if times.size < 2:
            raise ValueError("record grid too coarse for the window")
        af = np.array([apply_generator(phi, a, x, grad_f(x), hess_f(x)) for x in xs])
        integral = np.trapezoid(af, times)
        vals[i] = f(xs[-1]) - f(xs[0]) - integral
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(records))) if len(records) > 1 else float("inf")
    return est, se
