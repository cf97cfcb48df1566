"""Spatial covariance functions for the driving noise field.

A covariance phi is a continuous, symmetric, positive-definite function with
phi(0) = 1 and |phi| <= 1. The strength of its cusp at 0 controls whether the
flow coalesces: specs carry class parameters (alpha_class, c_phi, c_tilde_phi)
asserting 1 - phi(x) >= c_phi * |x|^alpha_class on [-c_tilde_phi, c_tilde_phi],
and a lipschitz_radius outside which phi is expected to be Lipschitz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("exponential_alpha", "gaussian", "indicator", "cosine_series", "custom_tabulated")

_ONE_MINUS_INV_E = 1.0 - math.exp(-1.0)


class SingularGramError(np.linalg.LinAlgError):
    """Gram matrix stayed non-factorizable through the whole jitter ladder."""


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance kind plus coalescence-class parameters.

    cosine_series evaluates
        c1 * exp(-x^2/2) + c2 * sum_{n<=n_terms} cos(e^{n/2} n^{3/2} x) / n^2 / Z,
    Z = sum_{n<=n_terms} n^{-2}, so phi(0) = 1 exactly; the truncation tail is
    bounded by sum_{n>N} n^{-2} <= 1/N. Frequencies grow like e^{n/2}, so for
    n_terms beyond ~40 the phases are float-inaccurate once |x| ~ 1; keep
    n_terms modest for Gram work at order-one separations. custom_tabulated
    interpolates (grid, values) linearly in |x| and clamps beyond the grid.
    """

    kind: str
    alpha: float = 2.0
    c1: float = 0.5
    c2: float = 0.5
    n_terms: int = 200
    grid: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    alpha_class: float | None = None
    c_phi: float = _ONE_MINUS_INV_E
    c_tilde_phi: float = 1.0
    lipschitz_radius: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "exponential_alpha" and not (0.0 < self.alpha <= 2.0):
            raise ValueError("exponential_alpha needs alpha in (0, 2]")
        if self.kind == "cosine_series":
            if abs(self.c1 + self.c2 - 1.0) > 1e-12 or self.c1 < 0 or self.c2 < 0:
                raise ValueError("cosine_series needs c1, c2 >= 0 with c1 + c2 = 1")
            if self.n_terms < 1:
                raise ValueError("n_terms must be positive")
        if self.kind == "custom_tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.size < 2 or g.size != v.size:
                raise ValueError("custom_tabulated needs matching grid/values, length >= 2")
            if g[0] != 0.0 or not np.all(np.diff(g) > 0):
                raise ValueError("grid must start at 0 and increase")
            if v[0] != 1.0:
                raise ValueError("values[0] must be 1 (phi(0) = 1)")
            if np.any(np.abs(v) > 1.0):
                raise ValueError("|phi| <= 1 required")
        if self.c_phi <= 0 or self.c_tilde_phi <= 0 or self.lipschitz_radius <= 0:
            raise ValueError("class parameters must be positive")
        if self.alpha_class is None:
            object.__setattr__(self, "alpha_class", _default_alpha_class(self.kind, self.alpha))

    @property
    def holder_order_sqrt(self) -> float:
        """Heuristic Holder order of sqrt(1 - phi): alpha_class / 2."""
        return self.alpha_class / 2.0


def _default_alpha_class(kind: str, alpha: float) -> float:
    if kind == "exponential_alpha":
        return alpha
    if kind == "gaussian":
        return 2.0
    if kind == "cosine_series":
        return 1.5
    return 1.0  # indicator, custom_tabulated


def exponential_spec(alpha: float, **kw) -> CovarianceSpec:
    return CovarianceSpec(kind="exponential_alpha", alpha=alpha, **kw)


def gaussian_spec(**kw) -> CovarianceSpec:
    return CovarianceSpec(kind="gaussian", **kw)


def indicator_spec(**kw) -> CovarianceSpec:
    kw.setdefault("c_phi", 1.0)
    return CovarianceSpec(kind="indicator", **kw)


def cosine_series_spec(c1: float = 0.5, c2: float = 0.5, n_terms: int = 200, **kw) -> CovarianceSpec:
    kw.setdefault("c_phi", 1.0)
    kw.setdefault("c_tilde_phi", math.exp(-2.0))
    return CovarianceSpec(kind="cosine_series", c1=c1, c2=c2, n_terms=n_terms, **kw)


def from_config(cfg: dict) -> CovarianceSpec:
    """Build a spec from a flat config mapping (kind plus optional overrides)."""
    allowed = {"kind", "alpha", "c_phi", "c_tilde_phi", "lipschitz_radius", "n_terms",
               "c1", "c2", "grid", "values", "alpha_class"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown covariance config keys: {sorted(unknown)}")
    kw = dict(cfg)
    kind = kw.pop("kind")
    if "grid" in kw:
        kw["grid"] = tuple(float(x) for x in kw["grid"])
    if "values" in kw:
        kw["values"] = tuple(float(x) for x in kw["values"])
    builders = {
        "exponential_alpha": lambda: CovarianceSpec(kind=kind, **kw),
        "gaussian": lambda: CovarianceSpec(kind=kind, **kw),
        "indicator": lambda: indicator_spec(**kw),
        "cosine_series": lambda: cosine_series_spec(**kw),
        "custom_tabulated": lambda: CovarianceSpec(kind=kind, **kw),
    }
    if kind not in builders:
        raise ValueError(f"unknown covariance kind {kind!r}")
    return builders[kind]()


def eval_phi(spec: CovarianceSpec, x):
    """phi evaluated at x (scalar or array). phi(0) = 1 exactly for every kind."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("phi argument must be finite")
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr)
    if spec.kind == "exponential_alpha":
        out = np.exp(-np.abs(a) ** spec.alpha)
    elif spec.kind == "gaussian":
        out = np.exp(-(a * a))
    elif spec.kind == "indicator":
        out = np.where(a == 0.0, 1.0, 0.0)
    elif spec.kind == "cosine_series":
        n = np.arange(1, spec.n_terms + 1, dtype=float)
        omega = np.exp(n / 2.0) * n ** 1.5
        inv_n2 = 1.0 / (n * n)
        z = inv_n2.sum()
        series = np.cos(np.multiply.outer(a, omega)) @ inv_n2 / z
        out = spec.c1 * np.exp(-a * a / 2.0) + spec.c2 * series
        out[a == 0.0] = 1.0  # guard rounding in the series at the origin
    else:  # custom_tabulated
        out = np.interp(np.abs(a), np.asarray(spec.grid), np.asarray(spec.values))
    return float(out[0]) if scalar else out.reshape(arr.shape)


def gram_matrix(spec: CovarianceSpec, points) -> np.ndarray:
    """Gram matrix phi(x_i - x_j) with an exactly-unit diagonal."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1:
        raise ValueError("points must be one-dimensional")
    g = eval_phi(spec, pts[:, None] - pts[None, :])
    np.fill_diagonal(g, 1.0)
    return g


_JITTER_LADDER = tuple(10.0 ** (-k) for k in range(12, 5, -1))  # 1e-12 .. 1e-6


def cholesky_factor(gram: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Lower-triangular L with L @ L.T = gram + j*I (within 1e-10 entrywise).

    Starts at the requested jitter and climbs the decade ladder 1e-12..1e-6
    before raising SingularGramError.
    """
    gram = np.asarray(gram, dtype=float)
    eye = np.eye(gram.shape[0])
    tried = []
    candidates = [jitter] + [j for j in _JITTER_LADDER if j > jitter]
    for j in candidates:
        tried.append(j)
        try:
            ell = np.linalg.cholesky(gram + j * eye)
        except np.linalg.LinAlgError:
            continue
        resid = np.max(np.abs(ell @ ell.T - (gram + j * eye)))
        if resid <= 1e-10:
            return ell
    raise SingularGramError(f"gram not factorizable; jitters tried: {tried}")


@dataclass
class ClassReport:
    """Grid-scan result for the covariance-class conditions."""

    ok: bool
    phi0_exact: bool
    symmetry_violations: list = field(default_factory=list)
    bound_violations: list = field(default_factory=list)
    class_bound_violations: list = field(default_factory=list)
    lipschitz_suspect: bool = False
    max_slope_coarse: float = 0.0
    max_slope_fine: float = 0.0


def verify_class(spec: CovarianceSpec, grid_step: float = 1e-3, radius: float = 3.0,
                 tol: float = 1e-12, max_report: int = 20) -> ClassReport:
    """Scan a symmetric grid for violations of the class conditions.

    Checks phi(0) = 1 exactly, symmetry and |phi| <= 1 on the grid, the lower
    bound 1 - phi >= c_phi |x|^alpha_class on [-c_tilde_phi, c_tilde_phi], and a
    finite-difference Lipschitz probe outside lipschitz_radius (slopes that keep
    doubling under step halving mark the function as Lipschitz-suspect).
    """
    xs = np.arange(grid_step, radius + grid_step / 2, grid_step)
    vp = eval_phi(spec, xs)
    vm = eval_phi(spec, -xs)
    rep = ClassReport(ok=True, phi0_exact=(eval_phi(spec, 0.0) == 1.0))

    bad = np.nonzero(np.abs(vp - vm) > tol)[0]
    rep.symmetry_violations = [float(xs[i]) for i in bad[:max_report]]
    bad = np.nonzero(np.maximum(np.abs(vp), np.abs(vm)) > 1.0 + tol)[0]
    rep.bound_violations = [float(xs[i]) for i in bad[:max_report]]

    inside = xs[xs <= spec.c_tilde_phi]
    if inside.size:
        lower = spec.c_phi * inside ** spec.alpha_class
        vals = 1.0 - eval_phi(spec, inside)
        bad = np.nonzero(vals + tol < lower)[0]
        rep.class_bound_violations = [float(inside[i]) for i in bad[:max_report]]

    outside = xs[xs >= spec.lipschitz_radius]
    if outside.size >= 2:
        def max_slope(step):
            d = eval_phi(spec, outside + step) - eval_phi(spec, outside)
            return float(np.max(np.abs(d)) / step)
        rep.max_slope_coarse = max_slope(grid_step)
        rep.max_slope_fine = max_slope(grid_step / 2.0)
        rep.lipschitz_suspect = rep.max_slope_fine > 2.0 * rep.max_slope_coarse + 1.0

    rep.ok = (rep.phi0_exact and not rep.symmetry_violations and not rep.bound_violations
              and not rep.class_bound_violations and not rep.lipschitz_suspect)
    return rep
