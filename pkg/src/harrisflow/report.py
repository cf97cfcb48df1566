"""Rate fitting, two-sample statistics, and deterministic report emission.

Reports hold one row per partition size with Monte Carlo metrics and their
standard errors, a fitted log-log slope with a bootstrap confidence
interval, and enough metadata (seed, config hash) to reproduce the run.
Emission is byte-deterministic: floats at 17 significant digits, LF line
endings, no timestamps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SlopeFit",
    "ConvergenceReport",
    "fit_loglog",
    "config_hash",
    "emit_report",
    "load_report_json",
    "mean_se",
    "wls_line",
    "ks_statistic",
    "ks_threshold",
]


def mean_se(values):
    """Sample mean and standard error (pairwise summation, order stable)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no samples")
    m = float(np.mean(arr))
    se = 0.0 if arr.size == 1 else float(np.std(arr, ddof=1) / math.sqrt(arr.size))
    return m, se


def wls_line(x, y, y_se):
    """Weighted least-squares line y = slope*x + intercept.

    Weights come from the known per-point standard errors, so the returned
    parameter standard errors are exact under the stated noise model rather
    than residual-based (useful with few points).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    se = np.asarray(y_se, dtype=float)
    if x.size < 2:
        raise ValueError("line fit needs at least 2 points")
    if np.any(se <= 0.0):
        raise ValueError("standard errors must be positive")
    w = 1.0 / se ** 2
    design = np.stack([np.ones_like(x), x], axis=1)
    gram = design.T @ (design * w[:, None])
    cov = np.linalg.inv(gram)
    coef = cov @ (design.T @ (y * w))
    intercept, slope = coef
    intercept_se, slope_se = np.sqrt(np.diag(cov))
    return float(slope), float(intercept), float(slope_se), float(intercept_se)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    n_boot: int


def fit_loglog(deltas, values, n_boot: int = 200, rng=None) -> SlopeFit:
    """Least-squares slope of log(values) against log(deltas).

    The confidence interval is a residual bootstrap: refit on the fitted
    line plus resampled residuals, take the 2.5/97.5 percentiles.  Needs at
    least 3 distinct deltas and strictly positive values.
    """
    d = np.asarray(deltas, dtype=float)
    v = np.asarray(values, dtype=float)
    if d.size != v.size or d.size < 3:
        raise ValueError("slope fit needs at least 3 matched points")
    if np.any(d <= 0.0) or np.any(v <= 0.0):
        raise ValueError("slope fit needs positive deltas and values")
    if np.unique(d).size < 3:
        raise ValueError("slope fit needs at least 3 distinct deltas")
    x = np.log(d)
    y = np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    if rng is None:
        rng = np.random.default_rng(0)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        ystar = slope * x + intercept + rng.choice(resid, size=resid.size)
        boots[b] = np.polyfit(x, ystar, 1)[0]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return SlopeFit(float(slope), float(intercept), float(lo), float(hi), n_boot)


@dataclass
class ConvergenceReport:
    """Rows of per-partition metrics plus per-metric slope fits and metadata.

    Each row is a dict with key ``delta_n`` and one entry per metric column
    (values and ``<name>_se`` errors).  Rows are kept sorted by delta_n
    descending; fits map metric name to a SlopeFit or None when degenerate.
    """

    columns: list
    rows: list
    fits: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: -r["delta_n"])
        for row in self.rows:
            missing = [c for c in self.columns if c not in row]
            if missing:
                raise ValueError(f"row lacks columns {missing}")

    def fit(self, column: str, rng=None, n_boot: int = 200):
        """Fit and store the log-log slope of one metric column; None if degenerate."""
        d = [r["delta_n"] for r in self.rows]
        v = [r[column] for r in self.rows]
        try:
            self.fits[column] = fit_loglog(d, v, n_boot=n_boot, rng=rng)
        except ValueError:
            self.fits[column] = None
        return self.fits[column]


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a config dict."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _f(x) -> str:
    return f"{x:.17g}"


def emit_report(rep: ConvergenceReport, fmt: str, path,
                delta_name: str = "delta_n") -> None:
    """Write a report as CSV or JSON; identical reports give identical bytes.

    CSV carries metadata and fits as leading comment lines, then a header
    row and one line per partition.  delta_name renames the leading CSV
    column when the abscissa is not a partition mesh (a gap, say).  JSON
    nests the same content and round-trips through :func:`load_report_json`.
    """
    if fmt == "csv":
        with open(path, "w", newline="\n") as fh:
            for key in sorted(rep.metadata):
                fh.write(f"# {key}={rep.metadata[key]}\n")
            for name in sorted(rep.fits):
                sf = rep.fits[name]
                if sf is None:
                    fh.write(f"# slope_{name}=degenerate\n")
                else:
                    fh.write(f"# slope_{name}={_f(sf.slope)}"
                             f" ci=[{_f(sf.ci_low)},{_f(sf.ci_high)}]\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([delta_name] + list(rep.columns))
            for row in rep.rows:
                w.writerow([_f(row["delta_n"])] + [_f(row[c]) for c in rep.columns])
    elif fmt == "json":
        doc = {
            "columns": list(rep.columns),
            "rows": rep.rows,
            "fits": {
                k: (None if v is None else {
                    "slope": v.slope, "intercept": v.intercept,
                    "ci_low": v.ci_low, "ci_high": v.ci_high,
                    "n_boot": v.n_boot,
                }) for k, v in rep.fits.items()
            },
            "metadata": rep.metadata,
        }
        with open(path, "w", newline="\n") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_report_json(path) -> ConvergenceReport:
    with open(path) as fh:
        doc = json.load(fh)
    fits = {
        k: (None if v is None else SlopeFit(**v))
        for k, v in doc.get("fits", {}).items()
    }
    return ConvergenceReport(doc["columns"], doc["rows"], fits,
                             doc.get("metadata", {}))


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic, exact sweep over both samples."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_threshold(n: int, m: int, alpha: float = 0.05) -> float:
    """Two-sample KS critical value with the finite-sample size correction.

    Uses the asymptotic quantile c(alpha) = sqrt(-log(alpha/2)/2) over the
    effective sample size with the Stephens small-sample adjustment
    sqrt(ne) + 0.12 + 0.11/sqrt(ne).
    """
    if n < 1 or m < 1:
        raise ValueError("need nonempty samples")
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    ne = n * m / (n + m)
    return c / (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne))
