"""Vectorized Monte Carlo engines behind the experiment front ends.

These trade the general cluster bookkeeping of flow_sim/splitting for shapes
numpy can chew on: replicates run as array rows against one counter-based
stream, columns stay iid across replicates, and everything is deterministic
given the generator.  Semantics (merge rule, label-level gather protocol,
drift splitting) mirror the reference implementations; the engines exist so
that 10^5-replicate runs finish in seconds, not hours.
"""

from __future__ import annotations

import numpy as np

from .covariance import eval_phi
from .drift import eval_drift, ode_flow
from .splitting import _label_coalesce

_JITTER_CAP = 1e-6


def pair_gap_walk(phi, a, gap: float, h: float, n_steps: int, reps: int, rng,
                  tol_merge: float) -> int:
    """Count replicates whose two-label gap never closes within n_steps.

    Zero drift reduces the pair to its gap, one normal draw per live
    replicate per step; with drift both coordinates are carried and the
    pair noise uses the closed-form 2x2 Cholesky factor.  Absorbed
    replicates stop consuming randomness.
    """
    sq = np.sqrt(h)
    if a.is_zero:
        d = np.full(reps, gap)
        for _ in range(n_steps):
            if d.size == 0:
                break
            g = rng.standard_normal(d.size)
            var = np.maximum(2.0 * (1.0 - eval_phi(phi, d)), 0.0)
            d = d + np.sqrt(var * h) * g
            d = d[d > tol_merge]
        return int(d.size)
    x1 = np.zeros(reps)
    x2 = np.full(reps, gap)
    for _ in range(n_steps):
        if x1.size == 0:
            break
        x1 = x1 + eval_drift(a, x1) * h
        x2 = x2 + eval_drift(a, x2) * h
        alive = (x2 - x1) > tol_merge
        if not alive.all():
            x1, x2 = x1[alive], x2[alive]
            if x1.size == 0:
                break
        rho = eval_phi(phi, x2 - x1)
        g = rng.standard_normal((x1.size, 2))
        x1 = x1 + sq * g[:, 0]
        x2 = x2 + sq * (rho * g[:, 0] + np.sqrt(np.maximum(1.0 - rho * rho, 0.0)) * g[:, 1])
        alive = (x2 - x1) > tol_merge
        if not alive.all():
            x1, x2 = x1[alive], x2[alive]
    return int(x1.size)


def cluster_count_samples(phi, a, starts: np.ndarray, h: float, n_steps: int,
                          reps: int, rng, tol_merge: float) -> np.ndarray:
    """Final cluster counts of the full coalescing system, one per replicate.

    Each replicate evolves its cluster representatives sequentially; a
    replicate that has collapsed to one cluster is settled (counts cannot
    grow) and is skipped to its end.
    """
    from .covariance import cholesky_factor, gram_matrix
    from .flow_sim import coalesce

    sq = np.sqrt(h)
    zero_drift = a.is_zero
    counts = np.empty(reps)
    for r in range(reps):
        x = np.unique(np.asarray(starts, dtype=float))
        for _ in range(n_steps):
            if x.size == 1:
                break
            if not zero_drift:
                x = x + eval_drift(a, x) * h
                x, _, _ = coalesce(x, np.arange(x.size), tol_merge)
                if x.size == 1:
                    break
            gram = gram_matrix(phi, x)
            low = cholesky_factor(gram, 1e-12)
            g = rng.standard_normal(x.size)
            x = x + sq * (low @ g)
            x, _, _ = coalesce(x, np.arange(x.size), tol_merge)
        counts[r] = x.size
    return counts


def coupled_affine_m1(a, x0: float, h: float, kidx: np.ndarray, reps: int,
                      rng) -> dict:
    """Single-label coupled reference/split chains, vectorized over replicates.

    ``kidx`` are the partition knots as fine-step indices (first 0, last
    n_steps).  One label means unit noise variance, so both chains share the
    raw draw directly.  Returns per-replicate running suprema over the fine
    grid: |y-X|, |u-X|, the block noise l, the block drift remainder r, and
    the residual of the identity y - u = l + r.
    """
    kidx = np.asarray(kidx, dtype=int)
    sq = np.sqrt(h)
    ref = np.full(reps, float(x0))
    y = np.full(reps, float(x0))
    sups = {k: np.zeros(reps) for k in ("y_sup", "u_sup", "l_sup", "r_sup", "resid")}
    for b in range(kidx.size - 1):
        lo, hi = kidx[b], kidx[b + 1]
        delta = (hi - lo) * h
        u = y.copy()                      # left limit at the knot
        u_end = ode_flow(a, y, delta) if not a.is_zero else y.copy()
        y = u_end.copy()                  # right-continuous drift jump
        lacc = np.zeros(reps)
        for _ in range(lo, hi):
            g = rng.standard_normal(reps)
            ref = ref + eval_drift(a, ref) * h + sq * g
            y = y + sq * g
            lacc += sq * g
            u = ode_flow(a, u, h) if not a.is_zero else u
            np.maximum(sups["y_sup"], np.abs(y - ref), out=sups["y_sup"])
            np.maximum(sups["u_sup"], np.abs(u - ref), out=sups["u_sup"])
            np.maximum(sups["l_sup"], np.abs(lacc), out=sups["l_sup"])
            np.maximum(sups["r_sup"], np.abs(u_end - u), out=sups["r_sup"])
            np.maximum(sups["resid"], np.abs((y - u) - (lacc + (u_end - u))),
                       out=sups["resid"])
    return sups


def _merge_pass(x: np.ndarray, cid: np.ndarray, tol: float) -> None:
    """Apply the label-level contact/inversion merge rule row by row."""
    if x.shape[1] == 2:
        bad = ((x[:, 1] - x[:, 0]) <= tol) & (cid[:, 1] != cid[:, 0])
        if np.any(bad):
            mval = 0.5 * (x[bad, 0] + x[bad, 1])
            x[bad, 0] = mval
            x[bad, 1] = mval
            cid[bad, 1] = cid[bad, 0]
        return
    gap = np.diff(x, axis=1)
    bad = (gap <= tol) & (cid[:, 1:] != cid[:, :-1])
    for r in np.nonzero(bad.any(axis=1))[0]:
        _label_coalesce(x[r], cid[r], tol)


def _noise_step(phi, x: np.ndarray, cid: np.ndarray, g: np.ndarray,
                sq: float, jitter: float, tol: float) -> None:
    """Shared-raw correlated increment at label level, then merge pass."""
    reps, m = x.shape
    if m == 2:
        rho = eval_phi(phi, x[:, 1] - x[:, 0])
        l00 = np.sqrt(1.0 + jitter)
        l10 = rho / l00
        l11 = np.sqrt(np.maximum(1.0 + jitter - l10 * l10, 0.0))
        inc = np.stack([l00 * g[:, 0], l10 * g[:, 0] + l11 * g[:, 1]], axis=1)
    else:
        gram = eval_phi(phi, x[:, :, None] - x[:, None, :])
        idx = np.arange(m)
        gram[:, idx, idx] = 1.0 + jitter
        jit = jitter
        while True:
            try:
                low = np.linalg.cholesky(gram)
                break
            except np.linalg.LinAlgError:
                jit = max(jit, 1e-12) * 100.0
                if jit > _JITTER_CAP:
                    raise
                gram[:, idx, idx] = 1.0 + jit
        inc = (low @ g[:, :, None])[:, :, 0]
    x += sq * np.take_along_axis(inc, cid, axis=1)
    _merge_pass(x, cid, tol)


def coupled_grid_runs(phi, a, starts: np.ndarray, h: float, n_steps: int,
                      kidx: np.ndarray, reps: int, rng,
                      tol_merge: float = 1e-10, jitter: float = 1e-12,
                      want=("reference", "split")):
    """Batched label-level coupled chains over a start grid.

    Returns (reference_T, split_T), each (reps, m) terminal label values or
    None if not requested.  Raw draws are consumed identically regardless of
    ``want`` so either side alone reproduces its half of the pair.  The split
    chain applies the whole-block drift map at knots; the reference chain
    drifts every fine step; both share each step's raw normal matrix.
    """
    starts = np.asarray(starts, dtype=float)
    m = starts.size
    kidx = np.asarray(kidx, dtype=int)
    sq = np.sqrt(h)
    want_ref = "reference" in want
    want_spl = "split" in want
    x_ref = np.tile(starts, (reps, 1)) if want_ref else None
    c_ref = np.tile(np.arange(m), (reps, 1)) if want_ref else None
    x_spl = np.tile(starts, (reps, 1)) if want_spl else None
    c_spl = np.tile(np.arange(m), (reps, 1)) if want_spl else None
    bptr = 0
    for s in range(n_steps):
        if bptr < kidx.size - 1 and s == kidx[bptr]:
            if want_spl and not a.is_zero:
                delta = (kidx[bptr + 1] - kidx[bptr]) * h
                x_spl[...] = ode_flow(a, x_spl, delta)
                _merge_pass(x_spl, c_spl, tol_merge)
            bptr += 1
        if want_ref and not a.is_zero:
            x_ref += eval_drift(a, x_ref) * h
            _merge_pass(x_ref, c_ref, tol_merge)
        g = rng.standard_normal((reps, m))
        if want_ref:
            _noise_step(phi, x_ref, c_ref, g, sq, jitter, tol_merge)
        if want_spl:
            _noise_step(phi, x_spl, c_spl, g, sq, jitter, tol_merge)
    return x_ref, x_spl


def block_max_squares(n_blocks: int, reps: int, rng) -> np.ndarray:
    """Per-replicate max over blocks of the squared normalized block maximum.

    The running maximum of a Brownian block of length h given its endpoint
    increment d is (d + sqrt(d^2 - 2 h log U)) / 2 with U uniform; divided
    by sqrt(h) its law is |N(0,1)|, so h drops out and blocks are sampled
    at unit length.
    """
    d = rng.standard_normal((reps, n_blocks))
    u = rng.random((reps, n_blocks))
    mx = 0.5 * (d + np.sqrt(d * d - 2.0 * np.log(u)))
    return np.max(mx * mx, axis=1)
