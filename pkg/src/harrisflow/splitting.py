"""Drift/noise splitting of the flow over a time partition.

Per block [t_k, t_{k+1}) the deterministic drift flow is applied to the
block-start state in one shot, then the driftless coalescing flow runs across
the block on the fine grid:

    u_t = F_{t - t_k}(y_{t_k-}),      y_t = u_{t_{k+1}-} + (w_t - w_{t_k}),

so u carries the drift continuously while y jumps at each knot. With
d_t = max{knot <= t} and dbar_t = min{knot > t} the two paths decompose as

    y_t - u_t = l_t + r_t,   l_t = w_t - w_{d_t},   r_t = int_t^{dbar_t} a(u_s) ds,

where r is evaluated through the flow itself: the integral telescopes to
u_{dbar_t -} - u_t, which is exact rather than a quadrature. The discrete w is
the realized driftless displacement (noise increments plus whatever the merge
rule's averaging moved a label), so the identity holds pathwise up to the
tolerance-sized nudges of knot-jump merges.

coupled_pair drives a reference chain (drift applied every fine step) and the
split chain from one shared raw draw per label per step; each chain maps the
raws through the Cholesky factor of its own label-level covariance and every
label reads the increment of its cluster's leftmost label. Marginal laws are
untouched, and with zero drift the two chains coincide bitwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceSpec, cholesky_factor, gram_matrix
from .drift import (DriftSpec, eval_drift, ode_flow, regularization_epsilon,
                    regularized_flow_step)
from .flow_sim import (ClusterState, PathRecord, SimConfig, _emit_merge_events,
                       coalesce, driftless_substep, init_state)
from .streams import derive


@dataclass(frozen=True)
class Partition:
    knots: np.ndarray
    kind: str = "explicit"

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or k.size < 2 or k[0] != 0.0 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must start at 0 and strictly increase")
        object.__setattr__(self, "knots", k)

    @property
    def T(self) -> float:
        return float(self.knots[-1])

    @property
    def n_blocks(self) -> int:
        return self.knots.size - 1

    @property
    def delta_n(self) -> float:
        return float(np.max(np.diff(self.knots)))


def make_partition(T: float, n_blocks: int = 1, kind: str = "uniform",
                   ratio: float | None = None, knots=None) -> Partition:
    if T <= 0:
        raise ValueError("T must be positive")
    if kind == "uniform":
        return Partition(knots=np.linspace(0.0, T, n_blocks + 1), kind=kind)
    if kind == "geometric":
        if ratio is None or ratio <= 0 or ratio == 1.0:
            raise ValueError("geometric partitions need ratio > 0, != 1")
        lengths = ratio ** np.arange(n_blocks, dtype=float)
        lengths *= T / lengths.sum()
        k = np.concatenate([[0.0], np.cumsum(lengths)])
        k[-1] = T
        return Partition(knots=k, kind=kind)
    if kind == "explicit":
        if knots is None:
            raise ValueError("explicit partitions need knots")
        k = np.asarray(knots, dtype=float)
        if abs(k[-1] - T) > 1e-12 * max(1.0, T):
            raise ValueError("last knot must equal T")
        return Partition(knots=k, kind=kind)
    raise ValueError(f"unknown partition kind {kind!r}")


def locate(partition: Partition, t: float) -> tuple[float, float, int]:
    """(d_t, dbar_t, block index): last knot <= t and first knot > t.

    The terminal point follows the closed-interval convention:
    locate(T) = (t_{N-1}, T, N-1).
    """
    knots = partition.knots
    T = partition.T
    if t < 0 or t > T + 1e-12 * max(1.0, T):
        raise ValueError("t outside [0, T]")
    if t >= T:
        return float(knots[-2]), T, partition.n_blocks - 1
    k = int(np.searchsorted(knots, t, side="right")) - 1
    return float(knots[k]), float(knots[k + 1]), k


def _block_steps(partition: Partition, dt_fine: float) -> np.ndarray:
    """Fine-step count per block; dt_fine must divide every block."""
    lengths = np.diff(partition.knots)
    steps = np.rint(lengths / dt_fine).astype(int)
    if np.any(steps < 1) or np.any(np.abs(steps * dt_fine - lengths) > 1e-9 * max(1.0, partition.T)):
        raise ValueError("dt_fine must divide every partition block")
    return steps


@dataclass
class SplitPaths:
    """Scheme paths on the fine grid, right-continuous at interior knots.

    values[j] is the state at times[j]; at an interior knot that is the
    post-jump value and the pre-jump state sits in u_left/y_left (rows are
    knots t_1..t_N). At T the recorded value is the left limit, matching the
    closed-interval convention of locate. w_values accumulates each label's
    realized driftless displacement; r_sup and l_sup are per-label suprema of
    the decomposition terms over the recorded grid.
    """

    partition: Partition
    times: np.ndarray
    u_values: np.ndarray
    y_values: np.ndarray
    u_left: np.ndarray
    y_left: np.ndarray
    w_values: np.ndarray
    r_sup: np.ndarray
    l_sup: np.ndarray
    merge_events: list = field(default_factory=list)
    dt_fine: float = 0.0

    @property
    def n_labels(self) -> int:
        return int(self.y_values.shape[1])


@dataclass
class CoupledPaths:
    """Reference chain and split chain driven by one shared raw stream."""

    reference: PathRecord
    split: SplitPaths

    def __iter__(self):
        return iter((self.reference, self.split))


@dataclass
class DecompositionDiagnostics:
    l_values: np.ndarray
    r_values: np.ndarray
    l_sup: np.ndarray  # per label
    r_sup: np.ndarray
    identity_residual: float


def _reps_of(label_values: np.ndarray, membership: np.ndarray) -> np.ndarray:
    reps = np.empty(int(membership.max()) + 1)
    reps[membership] = label_values
    return reps


def _drift_block_path(a: DriftSpec, start: np.ndarray, h: float, n_steps: int,
                      eps: float, rng: np.random.Generator) -> np.ndarray:
    """u along one block on the fine grid, rows 0..n_steps (row 0 = start).

    Lipschitz drifts advance by the exact/refined flow map; one-sided-Lipschitz
    drifts use the regularized Euler step with amplitude eps.
    """
    out = np.empty((n_steps + 1, start.size))
    out[0] = start
    for j in range(n_steps):
        if a.is_zero:
            out[j + 1] = out[j]
        elif a.kind == "one_sided_lipschitz":
            out[j + 1] = regularized_flow_step(a, out[j], h, eps, rng, substeps=1)
        else:
            out[j + 1] = np.atleast_1d(np.asarray(ode_flow(a, out[j], h), dtype=float))
    return out


def split_simulate(phi: CovarianceSpec, a: DriftSpec, starts, partition: Partition,
                   cfg: SimConfig, rng: np.random.Generator,
                   epsilon: float | None = None) -> SplitPaths:
    """One splitting run, sampled at the cluster level like flow.simulate.

    y on each block diffuses from the endpoint of that block's u path, which
    makes the decomposition identity exact by construction. With zero drift
    the knot jumps degenerate and the draw sequence matches flow.simulate:
    same seed, bitwise-equal y path. One-sided-Lipschitz drifts take their
    block maps from the regularized Euler step with amplitude epsilon
    (default sqrt(delta_n)); the regularization draws interleave ahead of each
    block's driftless draws.
    """
    steps = _block_steps(partition, cfg.dt_fine)
    h = cfg.dt_fine
    eps = epsilon if epsilon is not None else regularization_epsilon(partition.delta_n)
    state = init_state(starts)
    m = state.membership.size
    n_blocks = partition.n_blocks
    n_times = int(steps.sum()) + 1
    times = np.empty(n_times)
    u_vals = np.empty((n_times, m))
    y_vals = np.empty((n_times, m))
    w_vals = np.empty((n_times, m))
    u_left = np.empty((n_blocks, m))
    y_left = np.empty((n_blocks, m))
    events: list = []

    w = np.zeros(m)
    idx = 0
    for k in range(n_blocks):
        n_sub = int(steps[k])
        y_minus = state.label_values()
        mem0 = state.membership
        u_block = _drift_block_path(a, _reps_of(y_minus, mem0), h, n_sub, eps, rng)
        reps, membership, merged = coalesce(u_block[-1].copy(), mem0, cfg.tol_merge)
        if merged:
            _emit_merge_events(events, state.time, mem0, membership)
        state = ClusterState(reps=reps, membership=membership, time=state.time)
        # right-continuous values at t_k (the terminal block never overwrites T)
        times[idx] = state.time
        u_vals[idx] = y_minus
        y_vals[idx] = state.label_values()
        w_vals[idx] = w
        for j in range(n_sub):
            y_prev = state.label_values()
            state, _inc = driftless_substep(state, phi, h, rng, cfg, events)
            w = w + (state.label_values() - y_prev)
            idx += 1
            times[idx] = state.time
            u_vals[idx] = u_block[j + 1][mem0]
            y_vals[idx] = state.label_values()
            w_vals[idx] = w
        u_left[k] = u_block[-1][mem0]
        y_left[k] = state.label_values()
        # idx now sits on t_{k+1}; the next block rewrites it with the
        # post-jump state, which is what right-continuity asks for
    sp = SplitPaths(partition=partition, times=times, u_values=u_vals,
                    y_values=y_vals, u_left=u_left, y_left=y_left,
                    w_values=w_vals, r_sup=np.zeros(m), l_sup=np.zeros(m),
                    merge_events=events, dt_fine=h)
    diag = decomposition_diagnostics(sp)
    sp.r_sup = diag.r_sup
    sp.l_sup = diag.l_sup
    return sp


def _init_cid(x: np.ndarray) -> np.ndarray:
    """Leftmost-label cluster ids for a sorted start vector (ties share)."""
    cid = np.arange(x.size, dtype=np.intp)
    for j in range(1, x.size):
        if x[j] == x[j - 1]:
            cid[j] = cid[j - 1]
    return cid


def _label_coalesce(x: np.ndarray, cid: np.ndarray, tol: float,
                    events: list | None = None, time: float = 0.0,
                    ids: np.ndarray | None = None) -> None:
    """In-place sticky merge at the label level.

    Adjacent labels in different clusters whose gap is <= tol (inversions
    included) pull both clusters to their mean; the left cluster's id wins.
    """
    m = x.size
    while True:
        hit = -1
        for j in range(m - 1):
            if cid[j + 1] != cid[j] and x[j + 1] - x[j] <= tol:
                hit = j
                break
        if hit < 0:
            return
        c1, c2 = cid[hit], cid[hit + 1]
        v = 0.5 * (x[hit] + x[hit + 1])
        sel = (cid == c1) | (cid == c2)
        x[sel] = v
        cid[sel] = c1
        if events is not None:
            members = np.nonzero(sel)[0]
            if ids is not None:
                members = ids[members]
            events.append({"time": float(time), "labels": [int(i) for i in members]})


def _label_gather_increment(phi: CovarianceSpec, x: np.ndarray, cid: np.ndarray,
                            h: float, g: np.ndarray, jitter: float) -> np.ndarray:
    """Label increments from a shared raw vector g.

    The Gram matrix is built over label positions (merged labels contribute
    duplicate rows, hence the jitter floor) and each label reads the component
    of its cluster's leftmost label, which keeps merged labels identical.
    """
    ell = cholesky_factor(gram_matrix(phi, x), jitter)
    return (math.sqrt(h) * (ell @ g))[cid]


def coupled_pair(phi: CovarianceSpec, a: DriftSpec, starts, partition: Partition,
                 cfg: SimConfig, seed) -> CoupledPaths:
    """Reference dynamics and split scheme driven by the same raw noise.

    seed is a nonnegative integer (a private stream is derived from it) or an
    already-constructed numpy Generator. One standard-normal vector of length
    n_labels is drawn per fine step and fed to both chains regardless of their
    merge topology, so the streams stay aligned; with zero drift the chains
    are bitwise equal. Drifts whose block map itself needs randomization
    (one_sided_lipschitz) are not coupled here.
    """
    if a.kind == "one_sided_lipschitz":
        raise ValueError("coupled_pair needs a deterministic block drift map")
    rng = seed if isinstance(seed, np.random.Generator) else derive(int(seed))
    steps = _block_steps(partition, cfg.dt_fine)
    h = cfg.dt_fine
    x0 = np.asarray(starts, dtype=float)
    if x0.ndim != 1 or x0.size == 0 or np.any(np.diff(x0) < 0):
        raise ValueError("starts must be a nondecreasing vector")
    m = x0.size
    jitter = cfg.jitter
    n_blocks = partition.n_blocks
    n_times = int(steps.sum()) + 1

    xr = x0.copy()
    cid_r = _init_cid(x0)
    xs = x0.copy()
    cid_s = _init_cid(x0)
    events_r: list = []
    events_s: list = []
    times = np.empty(n_times)
    ref_vals = np.empty((n_times, m))
    u_vals = np.empty((n_times, m))
    y_vals = np.empty((n_times, m))
    w_vals = np.empty((n_times, m))
    u_left = np.empty((n_blocks, m))
    y_left = np.empty((n_blocks, m))
    ref_vals[0] = xr
    times[0] = 0.0

    w = np.zeros(m)
    t = 0.0
    idx = 0
    for k in range(n_blocks):
        delta = float(partition.knots[k + 1] - partition.knots[k])
        u_lab = xs.copy()                       # u(t_k) = y_{t_k-}
        xs = np.atleast_1d(np.asarray(ode_flow(a, xs, delta), dtype=float))
        _label_coalesce(xs, cid_s, cfg.tol_merge, events_s, t)
        times[idx] = t
        u_vals[idx] = u_lab
        y_vals[idx] = xs
        w_vals[idx] = w
        for _ in range(int(steps[k])):
            if not a.is_zero:
                xr = xr + eval_drift(a, xr) * h
                _label_coalesce(xr, cid_r, cfg.tol_merge, events_r, t)
                u_lab = np.atleast_1d(np.asarray(ode_flow(a, u_lab, h), dtype=float))
            if cfg.zero_noise:
                inc_r = inc_s = np.zeros(m)
            else:
                g = rng.standard_normal(m)
                inc_r = _label_gather_increment(phi, xr, cid_r, h, g, jitter)
                inc_s = _label_gather_increment(phi, xs, cid_s, h, g, jitter)
            t += h
            xr = xr + inc_r
            _label_coalesce(xr, cid_r, cfg.tol_merge, events_r, t)
            y_prev = xs
            xs = xs + inc_s
            _label_coalesce(xs, cid_s, cfg.tol_merge, events_s, t)
            w = w + (xs - y_prev)
            idx += 1
            times[idx] = t
            ref_vals[idx] = xr
            u_vals[idx] = u_lab
            y_vals[idx] = xs
            w_vals[idx] = w
        u_left[k] = u_lab
        y_left[k] = xs
    reference = PathRecord(times=times.copy(), values=ref_vals,
                           merge_events=events_r, dt_fine=h)
    split = SplitPaths(partition=partition, times=times, u_values=u_vals,
                       y_values=y_vals, u_left=u_left, y_left=y_left,
                       w_values=w_vals, r_sup=np.zeros(m), l_sup=np.zeros(m),
                       merge_events=events_s, dt_fine=h)
    diag = decomposition_diagnostics(split)
    split.r_sup = diag.r_sup
    split.l_sup = diag.l_sup
    return CoupledPaths(reference=reference, split=split)


def decomposition_diagnostics(sp: SplitPaths) -> DecompositionDiagnostics:
    """l and r on the recorded grid plus the pathwise identity residual.

    r_t telescopes along the drift flow to u_{dbar_t -} - u_t, so no
    quadrature error enters; the residual only picks up the tolerance-sized
    merge nudges of the knot jumps.
    """
    steps = _block_steps(sp.partition, sp.dt_fine)
    kidx = np.concatenate([[0], np.cumsum(steps)])
    l_vals = np.empty_like(sp.w_values)
    r_vals = np.empty_like(sp.w_values)
    for k in range(sp.partition.n_blocks):
        lo, hi = int(kidx[k]), int(kidx[k + 1])
        l_vals[lo:hi] = sp.w_values[lo:hi] - sp.w_values[lo]
        r_vals[lo:hi] = sp.u_left[k][None, :] - sp.u_values[lo:hi]
    l_vals[-1] = sp.w_values[-1] - sp.w_values[int(kidx[-2])]
    r_vals[-1] = 0.0
    resid = np.max(np.abs(sp.y_values - sp.u_values - l_vals - r_vals))
    return DecompositionDiagnostics(l_values=l_vals, r_values=r_vals,
                                    l_sup=np.max(np.abs(l_vals), axis=0),
                                    r_sup=np.max(np.abs(r_vals), axis=0),
                                    identity_residual=float(resid))


@dataclass
class TwoParamPaths:
    """Pooled scheme trajectories over staggered starts (s_j, x_j).

    values[j] holds x_j up to and including the activation time and the
    scheme values after it (the constant left extension); all trajectories
    ride one driftless flow, so later starts coalesce with earlier ones on
    contact.
    """

    partition: Partition
    times: np.ndarray
    values: np.ndarray
    starts: list
    merge_events: list = field(default_factory=list)
    dt_fine: float = 0.0


def split_two_param(phi: CovarianceSpec, a: DriftSpec, starts, partition: Partition,
                    cfg: SimConfig, rng: np.random.Generator) -> TwoParamPaths:
    """Two-parameter splitting: trajectory j launches at time s_j from x_j.

    A start at a knot enters just before the knot jump (its stored value at
    s_j stays x_j); a start inside a block enters at the remaining-block drift
    image F_{t_{k+1}-s_j}(x_j) and diffuses with the pool from there, so a
    start placed on a running trajectory's left limit merges with it.
    """
    if a.kind == "one_sided_lipschitz":
        raise ValueError("split_two_param needs a deterministic block drift map")
    steps = _block_steps(partition, cfg.dt_fine)
    h = cfg.dt_fine
    T = partition.T
    start_list = [(float(s), float(x)) for s, x in starts]
    n_traj = len(start_list)
    if n_traj == 0:
        raise ValueError("at least one start is required")
    by_step: dict[int, list[int]] = {}
    for j, (s, _x) in enumerate(start_list):
        if s < 0 or s >= T:
            raise ValueError("start times must lie in [0, T)")
        gs = int(round(s / h))
        if abs(gs * h - s) > 1e-9 * max(1.0, T):
            raise ValueError("start times must sit on the fine grid")
        by_step.setdefault(gs, []).append(j)

    kidx = np.concatenate([[0], np.cumsum(steps)])
    n_times = int(kidx[-1]) + 1
    times = np.arange(n_times) * h
    times[-1] = T
    values = np.tile(np.asarray([x for _s, x in start_list])[:, None], (1, n_times))
    jitter = cfg.jitter
    events: list = []

    act_ids = np.empty(0, dtype=np.intp)
    act_pos = np.empty(0)
    act_cid = np.empty(0, dtype=np.intp)
    act_step = np.full(n_traj, -1, dtype=int)

    def insert(j: int, value: float, gstep: int) -> None:
        nonlocal act_ids, act_pos, act_cid
        slot = int(np.searchsorted(act_pos, value, side="left"))
        act_pos = np.insert(act_pos, slot, value)
        act_ids = np.insert(act_ids, slot, j)
        act_cid = np.insert(act_cid, slot, j)
        act_step[j] = gstep

    for k in range(partition.n_blocks):
        t_k = float(partition.knots[k])
        delta = float(partition.knots[k + 1] - partition.knots[k])
        lo, hi = int(kidx[k]), int(kidx[k + 1])
        for j in sorted(by_step.pop(lo, []), key=lambda i: start_list[i][1]):
            insert(j, start_list[j][1], lo)
        if act_pos.size:
            if not a.is_zero:
                act_pos = np.atleast_1d(np.asarray(ode_flow(a, act_pos, delta), dtype=float))
            _label_coalesce(act_pos, act_cid, cfg.tol_merge, events, t_k, ids=act_ids)
            ripe = act_step[act_ids] < lo
            values[act_ids[ripe], lo] = act_pos[ripe]
        for gstep in range(lo, hi):
            if gstep > lo and gstep in by_step:
                rem = (hi - gstep) * h
                for j in sorted(by_step.pop(gstep), key=lambda i: start_list[i][1]):
                    insert(j, float(ode_flow(a, start_list[j][1], rem)), gstep)
                _label_coalesce(act_pos, act_cid, cfg.tol_merge, events,
                                gstep * h, ids=act_ids)
            g = rng.standard_normal(n_traj)
            if act_pos.size and not cfg.zero_noise:
                boundary = np.empty(act_pos.size, dtype=bool)
                boundary[0] = True
                boundary[1:] = act_cid[1:] != act_cid[:-1]
                rep_slot = np.maximum.accumulate(
                    np.where(boundary, np.arange(act_pos.size), 0))
                ell = cholesky_factor(gram_matrix(phi, act_pos), jitter)
                act_pos = act_pos + (math.sqrt(h) * (ell @ g[act_ids]))[rep_slot]
                _label_coalesce(act_pos, act_cid, cfg.tol_merge, events,
                                (gstep + 1) * h, ids=act_ids)
            if act_pos.size:
                values[act_ids, gstep + 1] = act_pos
    return TwoParamPaths(partition=partition, times=times, values=values,
                         starts=start_list, merge_events=events, dt_fine=h)
