"""Experiment runners: rate studies, sharpness, distribution tests.

Each runner consumes an ExperimentConfig, spends its randomness through
streams derived from the master seed (one stream per partition size and
purpose, so runs are reproducible and extensible), and returns a
ConvergenceReport ready for emit_report.

Runner-to-claim map, with the metric each row carries:
  run_strong_rate        E sup|y-X|^2, E sup|u-X|^2, E sup l^2, E sup r^2
  run_sharpness          ratio of E sup(X-u)^2 to 4 log(n)/n at zero drift
  run_wasserstein_rate   E W_2 between coupled pushforwards at the horizon
  run_weak_convergence   two-sample KS of terminal marginals vs reference
  run_coalesce_prob      pair non-coalescence frequency per starting gap
  run_cluster_flatness   mean surviving cluster count per grid size
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _batch, coalescence_theory
from .covariance import CovarianceSpec
from .covariance import from_config as phi_from_config
from .drift import DriftSpec
from .drift import from_config as drift_from_config
from .measures import estimate_W1p, pushforward
from .report import (ConvergenceReport, config_hash, ks_statistic,
                     ks_threshold, mean_se, wls_line)
from .splitting import coupled_pair, make_partition
from .flow_sim import SimConfig
from .streams import derive

__all__ = [
    "ExperimentConfig",
    "run_strong_rate",
    "run_sharpness",
    "run_wasserstein_rate",
    "run_weak_convergence",
    "weak_null_calibration",
    "run_coalesce_prob",
    "run_cluster_flatness",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment family.

    dt_fine must divide T/N for every partition size so every knot lands on
    the fine grid; reps is the replicate (or sample) count per row.
    """

    phi: CovarianceSpec
    drift: DriftSpec
    particles: tuple = (0.0,)
    T: float = 1.0
    partitions: tuple = (8, 16, 32, 64, 128, 256, 512, 1024)
    dt_fine: float = 2.0 ** -14
    reps: int = 200
    seed: int = 0
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(float(x) for x in self.particles))
        object.__setattr__(self, "partitions", tuple(int(n) for n in self.partitions))
        if self.reps < 2:
            raise ValueError("need at least 2 replicates")
        if not (self.T > 0.0 and self.dt_fine > 0.0):
            raise ValueError("T and dt_fine must be positive")
        for n in self.partitions:
            if n < 1:
                raise ValueError("partition sizes must be positive")
            ratio = self.T / n / self.dt_fine
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
                raise ValueError(f"dt_fine does not divide T/{n}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt_fine))

    def block_steps(self, n_blocks: int) -> int:
        return self.n_steps // n_blocks

    def knot_indices(self, n_blocks: int) -> np.ndarray:
        return np.arange(n_blocks + 1) * self.block_steps(n_blocks)

    def to_dict(self) -> dict:
        return {
            "phi": asdict(self.phi),
            "drift": asdict(self.drift),
            "particles": list(self.particles),
            "T": self.T,
            "partitions": list(self.partitions),
            "dt_fine": self.dt_fine,
            "reps": self.reps,
            "seed": self.seed,
            "outputs": dict(self.outputs),
        }

    @classmethod
    def from_dict(cls, d: dict):
        d = dict(d)
        phi = phi_from_config(d.pop("phi"))
        drift = drift_from_config(d.pop("drift", {"kind": "zero"}))
        allowed = {"particles", "T", "partitions", "dt_fine", "reps", "seed",
                   "outputs"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(phi=phi, drift=drift, **d)

    @classmethod
    def from_file(cls, path):
        text = open(path, "rb").read()
        if str(path).endswith(".json"):
            return cls.from_dict(json.loads(text.decode()))
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return cls.from_dict(tomllib.loads(text.decode()))

    def _metadata(self, kind: str) -> dict:
        return {"kind": kind, "seed": self.seed,
                "config": config_hash(self.to_dict())}


def _general_sup_metrics(cfg: ExperimentConfig, n_blocks: int, rep_seeds):
    """Reference slow path for multi-particle strong-rate rows."""
    part = make_partition(cfg.T, n_blocks)
    sim = SimConfig(dt_fine=cfg.dt_fine)
    starts = np.asarray(cfg.particles)
    out = {k: np.empty(len(rep_seeds)) for k in ("y_sup", "u_sup", "l_sup", "r_sup")}
    for i, rs in enumerate(rep_seeds):
        ref, spl = coupled_pair(cfg.phi, cfg.drift, starts, part, sim, rs)
        out["y_sup"][i] = np.max(np.abs(spl.y_values - ref.values))
        out["u_sup"][i] = np.max(np.abs(spl.u_values - ref.values))
        out["l_sup"][i] = np.max(spl.l_sup)
        out["r_sup"][i] = np.max(spl.r_sup)
    return out


def run_strong_rate(cfg: ExperimentConfig) -> ConvergenceReport:
    """Pathwise coupled errors of the split scheme against the reference.

    Rows carry E sup_t |y-X|^2 and E sup_t |u-X|^2 plus the decomposition
    moments E sup l^2, E sup r^2, all with standard errors.  With zero drift
    the coupling is exact and the slope is reported as degenerate.
    """
    if cfg.drift.kind == "one_sided_lipschitz":
        raise ValueError("coupled runs need a drift with a deterministic flow map")
    single = len(cfg.particles) == 1
    columns = ["y_sup_sq", "y_sup_sq_se", "u_sup_sq", "u_sup_sq_se",
               "l_sup_sq", "l_sup_sq_se", "r_sup_sq", "r_sup_sq_se"]
    rows = []
    for i, n_blocks in enumerate(cfg.partitions):
        if single:
            sups = _batch.coupled_affine_m1(
                cfg.drift, cfg.particles[0], cfg.dt_fine,
                cfg.knot_indices(n_blocks), cfg.reps, derive(cfg.seed, 1, i))
        else:
            sups = _general_sup_metrics(
                cfg, n_blocks,
                [derive(cfg.seed, 1, i, r) for r in range(cfg.reps)])
        row = {"delta_n": cfg.T / n_blocks}
        for key, col in (("y_sup", "y_sup_sq"), ("u_sup", "u_sup_sq"),
                         ("l_sup", "l_sup_sq"), ("r_sup", "r_sup_sq")):
            m, se = mean_se(sups[key] ** 2)
            row[col] = m
            row[col + "_se"] = se
        rows.append(row)
    meta = cfg._metadata("strong_rate")
    rep = ConvergenceReport(columns, rows, metadata=meta)
    if cfg.drift.is_zero:
        meta["degenerate"] = "zero drift: coupled errors vanish identically"
        for col in ("y_sup_sq", "u_sup_sq"):
            rep.fits[col] = None
    else:
        for k, col in enumerate(("y_sup_sq", "u_sup_sq")):
            rep.fit(col, rng=derive(cfg.seed, 9, k))
    return rep


def run_sharpness(cfg: ExperimentConfig) -> ConvergenceReport:
    """Exact block-maximum sampling of the zero-drift frozen-path error.

    Per n the metric is (2/n) E max_k of squared normalized block maxima and
    the row reports its ratio to 4 log(n)/n.  n = 1 has a vanishing
    normalizer and is skipped.
    """
    if not cfg.drift.is_zero:
        raise ValueError("sharpness study is defined for zero drift")
    if cfg.T != 1.0:
        raise ValueError("sharpness study uses T = 1")
    columns = ["ratio", "ratio_se", "metric"]
    rows = []
    for i, n in enumerate(cfg.partitions):
        if n == 1:
            continue
        mx = _batch.block_max_squares(n, cfg.reps, derive(cfg.seed, 2, i))
        norm = 2.0 * math.log(n)
        m, se = mean_se(mx / norm)
        rows.append({"delta_n": 1.0 / n, "ratio": m, "ratio_se": se,
                     "metric": (2.0 / n) * float(np.mean(mx))})
    return ConvergenceReport(columns, rows, metadata=cfg._metadata("sharpness"))


def run_wasserstein_rate(cfg: ExperimentConfig) -> ConvergenceReport:
    """W_2 between coupled pushforward ensembles at the horizon, per N.

    Each replicate pushes Lebesgue measure on [0,1] through the sampled
    terminal maps of the reference and split chains run on shared noise;
    the row is the mean coupled distance, an upper bound on the distance
    of the laws.
    """
    starts = np.asarray(cfg.particles)
    if np.any(starts < 0.0) or np.any(starts > 1.0):
        raise ValueError("pushforward start grid must lie in [0, 1]")
    columns = ["w2", "w2_se"]
    rows = []
    degenerate = cfg.drift.is_zero
    for i, n_blocks in enumerate(cfg.partitions):
        ref, spl = _batch.coupled_grid_runs(
            cfg.phi, cfg.drift, starts, cfg.dt_fine, cfg.n_steps,
            cfg.knot_indices(n_blocks), cfg.reps, derive(cfg.seed, 3, i))
        if degenerate:
            w2, se = 0.0, 0.0
        else:
            pairs = [(pushforward(starts, ref[r]), pushforward(starts, spl[r]))
                     for r in range(cfg.reps)]
            w2, se = estimate_W1p(pairs, p=2.0)
        rows.append({"delta_n": cfg.T / n_blocks, "w2": w2, "w2_se": se})
    rep = ConvergenceReport(columns, rows, metadata=cfg._metadata("wasserstein_rate"))
    if degenerate:
        rep.metadata["degenerate"] = "zero drift: coupled chains coincide"
        rep.fits["w2"] = None
    else:
        rep.fit("w2", rng=derive(cfg.seed, 9, 3))
    return rep


def _marginal_ks(a: np.ndarray, b: np.ndarray) -> float:
    """Max KS over coordinate marginals and pairwise gap marginals."""
    m = a.shape[1]
    worst = 0.0
    for j in range(m):
        worst = max(worst, ks_statistic(a[:, j], b[:, j]))
    for j in range(m):
        for k in range(j + 1, m):
            worst = max(worst, ks_statistic(a[:, k] - a[:, j], b[:, k] - b[:, j]))
    return worst


def run_weak_convergence(cfg: ExperimentConfig, trials: int = 20) -> ConvergenceReport:
    """Two-sample KS between split and reference terminal marginals.

    cfg.reps is the sample count per side.  Each trial draws a fresh
    independent reference sample (shared across partition sizes) and one
    split sample per N; the row reports the median and mean of the max-KS
    over coordinate and gap marginals, against the 95% threshold.
    """
    starts = np.asarray(cfg.particles)
    if starts.size > 5:
        raise ValueError("weak test works with at most 5 particles")
    stats = {n: [] for n in cfg.partitions}
    for t in range(trials):
        ref, _ = _batch.coupled_grid_runs(
            cfg.phi, cfg.drift, starts, cfg.dt_fine, cfg.n_steps,
            cfg.knot_indices(cfg.partitions[0]), cfg.reps,
            derive(cfg.seed, 4, t, 0), want=("reference",))
        for i, n_blocks in enumerate(cfg.partitions):
            _, spl = _batch.coupled_grid_runs(
                cfg.phi, cfg.drift, starts, cfg.dt_fine, cfg.n_steps,
                cfg.knot_indices(n_blocks), cfg.reps,
                derive(cfg.seed, 4, t, 1 + i), want=("split",))
            stats[n_blocks].append(_marginal_ks(ref, spl))
    thresh = ks_threshold(cfg.reps, cfg.reps)
    columns = ["ks_median", "ks_mean", "ks_se", "threshold"]
    rows = []
    for n_blocks in cfg.partitions:
        vals = np.asarray(stats[n_blocks])
        m, se = mean_se(vals)
        rows.append({"delta_n": cfg.T / n_blocks,
                     "ks_median": float(np.median(vals)),
                     "ks_mean": m, "ks_se": se, "threshold": thresh})
    meta = cfg._metadata("weak_convergence")
    meta["trials"] = trials
    return ConvergenceReport(columns, rows, metadata=meta)


def weak_null_calibration(cfg: ExperimentConfig, trials: int = 100) -> float:
    """Fraction of reference-vs-reference trials with KS below threshold.

    Both sides are independent reference runs of the same law, so the KS
    statistic lives under the null; a healthy test keeps roughly 95% of
    trials under the 95% threshold.
    """
    starts = np.asarray(cfg.particles)
    thresh = ks_threshold(cfg.reps, cfg.reps)
    kidx = cfg.knot_indices(cfg.partitions[0])
    below = 0
    for t in range(trials):
        sides = []
        for s in (0, 1):
            ref, _ = _batch.coupled_grid_runs(
                cfg.phi, cfg.drift, starts, cfg.dt_fine, cfg.n_steps, kidx,
                cfg.reps, derive(cfg.seed, 5, t, s), want=("reference",))
            sides.append(ref)
        if _marginal_ks(sides[0], sides[1]) < thresh:
            below += 1
    return below / trials


def run_coalesce_prob(cfg: ExperimentConfig, gaps, t: float = None,
                      dt: float = 2.5e-4) -> ConvergenceReport:
    """Pair non-coalescence frequency per starting gap with a linear fit.

    Rows carry the Monte Carlo estimate and its standard error; the weighted
    least-squares line over (gap, estimate) is stored in the metadata so the
    linearity claim (slope positive, intercept consistent with 0) can be
    read off directly.
    """
    horizon = cfg.T if t is None else t
    gaps = [float(g) for g in gaps]
    rows = []
    for i, gap in enumerate(gaps):
        est, se = coalescence_theory.pair_noncoalescence_mc(
            cfg.phi, cfg.drift, gap, horizon, cfg.reps,
            derive(cfg.seed, 6, i), dt=dt)
        rows.append({"delta_n": gap, "estimate": est, "se": se})
    x = np.array([r["delta_n"] for r in rows])
    y = np.array([r["estimate"] for r in rows])
    yse = np.array([max(r["se"], 1e-12) for r in rows])
    slope, intercept, slope_se, intercept_se = wls_line(x, y, yse)
    for r in rows:
        r["linear_fit_slope"] = slope
        r["intercept"] = intercept
    meta = cfg._metadata("coalesce_prob")
    meta.update(slope=slope, intercept=intercept,
                slope_se=slope_se, intercept_se=intercept_se)
    return ConvergenceReport(
        ["estimate", "se", "linear_fit_slope", "intercept"], rows, metadata=meta)


def run_cluster_flatness(cfg: ExperimentConfig, n_grids=(16, 64, 256),
                         interval=(0.0, 1.0), t: float = None,
                         dt: float = 2.5e-4) -> ConvergenceReport:
    """Mean surviving cluster count per start-grid size on a fixed interval."""
    horizon = cfg.T if t is None else t
    rows = []
    for i, n_grid in enumerate(n_grids):
        mean, se = coalescence_theory.cluster_count_mc(
            cfg.phi, cfg.drift, interval, int(n_grid), horizon, cfg.reps,
            derive(cfg.seed, 7, i), dt=dt)
        rows.append({"delta_n": 1.0 / n_grid, "n_grid": float(n_grid),
                     "mean_clusters": mean, "se": se})
    return ConvergenceReport(["n_grid", "mean_clusters", "se"], rows,
                             metadata=cfg._metadata("cluster_flatness"))
