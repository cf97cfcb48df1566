"""Scale, speed, and Bessel comparisons for the pair-gap diffusion.

The gap between two coupled labels diffuses with generator
(1 - phi) d^2/dx^2 + rho d/dx; whether it reaches 0 in finite time is read
off a scale function p and speed measure m whose integrands blow up at the
origin like powers z^(beta-alpha) and y^(-alpha).  All quadrature here
regularizes those endpoints with the substitution z = u^(1/(1+beta-alpha))
before applying halving-refined composite rules.

For a pure power 1 - phi(z) = C z^alpha the transformed gap is a
time-changed squared Bessel process of dimension 2(1-alpha)/(2-alpha), and
its survival probability is a regularized lower incomplete gamma, computed
here from scratch (series / continued fraction).  Monte Carlo front ends
check the linear coalescence-probability bound and cluster finiteness on
simulated flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _batch
from .covariance import CovarianceSpec, eval_phi
from .drift import DriftSpec, eval_rho

__all__ = [
    "DiffusionSpec",
    "scale_function",
    "scale_at_infinity",
    "speed_density",
    "accessibility_v",
    "accessibility_limit",
    "bessel_dimension",
    "lower_incomplete_gamma",
    "regularized_gamma_p",
    "squared_bessel_survival",
    "gap_survival_bound",
    "pair_noncoalescence_mc",
    "cluster_count_mc",
]


@dataclass(frozen=True)
class DiffusionSpec:
    """Gap diffusion built from a covariance spec and a drift modulus.

    ``rho`` must be a beta_modulus spec (or zero); the singular exponent
    beta - alpha must exceed -1 so the scale integrand is integrable at 0,
    and alpha < 2 so single points can coalesce at all.  ``c_tilde`` is the
    common validity radius, by convention the smaller of the two.
    """

    phi: CovarianceSpec
    rho: DriftSpec
    c_tilde: float = None

    def __post_init__(self):
        if self.phi.alpha_class is None:
            raise ValueError("phi needs a declared alpha_class")
        if not self.phi.alpha_class < 2.0:
            raise ValueError("need alpha < 2")
        if self.rho.kind not in ("zero", "beta_modulus"):
            raise ValueError("rho must be a beta_modulus or zero spec")
        if self.rho.kind == "beta_modulus":
            if not self.rho.beta - self.phi.alpha_class > -1.0:
                raise ValueError("need beta - alpha > -1")
        if self.c_tilde is None:
            ct = self.phi.c_tilde_phi
            if self.rho.kind == "beta_modulus":
                ct = min(ct, self.rho.c_tilde_rho)
            object.__setattr__(self, "c_tilde", float(ct))
        if not self.c_tilde > 0.0:
            raise ValueError("c_tilde must be positive")

    @property
    def singular_exponent(self) -> float:
        """Exponent of the scale integrand rho/(1-phi) at the origin."""
        if self.rho.kind == "zero":
            return 0.0
        return self.rho.beta - self.phi.alpha_class


def _midpoint_doubling(g, a: float, b: float, tol: float, n0: int = 16,
                       n_cap: int = 1 << 20) -> float:
    """Composite midpoint rule on [a, b] with halving until stable."""
    if b <= a:
        return 0.0
    n = n0
    prev = None
    while n <= n_cap:
        h = (b - a) / n
        mids = a + h * (np.arange(n) + 0.5)
        val = h * float(np.sum(g(mids)))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise RuntimeError("quadrature refinement stagnated")


def _integrate_from_zero(f, b: float, q: float, tol: float) -> float:
    """Integral of f over (0, b] where f(z) ~ z^q at 0 with q > -1.

    Substituting z = u^(1/(1+q)) turns the power endpoint into a bounded
    integrand, then the open midpoint rule never touches u = 0.
    """
    if b <= 0.0:
        return 0.0
    if q <= -1.0:
        raise ValueError("non-integrable endpoint")
    pw = 1.0 / (1.0 + q)
    upper = b ** (1.0 + q)

    def g(u):
        z = u ** pw
        return f(z) * pw * u ** (pw - 1.0)

    return _midpoint_doubling(g, 0.0, upper, tol)


def _simpson_segment(f, a: float, b: float, n: int = 8) -> float:
    xs = np.linspace(a, b, n + 1)
    ys = f(xs)
    h = (b - a) / n
    return h / 3.0 * float(ys[0] + ys[-1] + 4.0 * np.sum(ys[1:-1:2])
                           + 2.0 * np.sum(ys[2:-1:2]))


def _scale_integrand(spec: DiffusionSpec):
    phi = spec.phi
    rho = spec.rho

    def f(z):
        return eval_rho(rho, z) / (1.0 - eval_phi(phi, z))

    return f


def _inner_cumulative(spec: DiffusionSpec, nodes: np.ndarray, tol: float) -> np.ndarray:
    """Inner exponent integral of rho/(1-phi) from 0 to each ascending node."""
    if spec.rho.kind == "zero":
        return np.zeros(nodes.size)
    f = _scale_integrand(spec)
    out = np.empty(nodes.size)
    acc = _integrate_from_zero(f, float(nodes[0]), spec.singular_exponent, tol)
    out[0] = acc
    for i in range(1, nodes.size):
        acc += _simpson_segment(f, float(nodes[i - 1]), float(nodes[i]))
        out[i] = acc
    return out


def scale_function(spec: DiffusionSpec, x: float, tol: float = 1e-8) -> float:
    """Scale function p(x): integral from 0 to x of exp(-inner exponent).

    Nested quadrature with halving refinement; raises when refinement
    stagnates before reaching tol.  p(0) = 0 and p is strictly increasing;
    with zero drift the integrand is 1 and p(x) = x exactly.
    """
    if not x > 0.0:
        raise ValueError("scale function argument must be positive")
    if spec.rho.kind == "zero":
        return float(x)
    n = 32
    prev = None
    while n <= (1 << 16):
        nodes = np.linspace(0.0, x, n + 1)[1:]
        inner = _inner_cumulative(spec, nodes, 0.1 * tol)
        vals = np.concatenate([[1.0], np.exp(-inner)])
        p = float(np.trapezoid(vals, np.concatenate([[0.0], nodes])))
        if prev is not None and abs(p - prev) <= tol * max(1.0, abs(p)):
            return p
        prev = p
        n *= 2
    raise RuntimeError("scale function refinement stagnated")


def scale_at_infinity(spec: DiffusionSpec, tol: float = 1e-6,
                      x0: float = 1.0, j_max: int = 24):
    """Tail estimate of p(x) as x doubles; returns (estimate, finite).

    Doubles the endpoint until the increment falls below tol (finite limit)
    or increments grow across consecutive doublings (apparently divergent;
    the estimate is the last partial value and the flag is False).
    """
    xs = x0 * 2.0 ** np.arange(j_max)
    p_prev = scale_function(spec, float(xs[0]), tol)
    inc_prev = None
    grow = 0
    for xj in xs[1:]:
        p_cur = scale_function(spec, float(xj), tol)
        inc = p_cur - p_prev
        if inc <= tol * max(1.0, p_cur):
            return p_cur, True
        if inc_prev is not None and inc >= inc_prev:
            grow += 1
            if grow >= 2:
                return p_cur, False
        p_prev, inc_prev = p_cur, inc
    return p_prev, False


def speed_density(spec: DiffusionSpec, y: float, tol: float = 1e-10) -> float:
    """Density of the speed measure, exp(inner exponent)/(1 - phi).

    Blows up like y^(-alpha) at the origin and is never evaluated there.
    """
    if not y > 0.0:
        raise ValueError("speed density argument must be positive")
    one_minus = 1.0 - eval_phi(spec.phi, y)
    if not one_minus > 0.0:
        raise ValueError("1 - phi must be positive away from 0")
    if spec.rho.kind == "zero":
        return 1.0 / one_minus
    f = _scale_integrand(spec)
    inner = _integrate_from_zero(f, y, spec.singular_exponent, tol)
    return math.exp(inner) / one_minus


def accessibility_v(spec: DiffusionSpec, x: float, tol: float = 1e-6) -> float:
    """Accessibility functional v(x) between x and the validity radius.

    v(x) integrates (p(x) - p(y)) against the speed measure from c_tilde to
    x, oriented so the result is nonnegative; a finite limit as x -> 0+
    certifies that the origin is reached in finite time.  Uses one shared
    log-spaced grid for the inner exponent, the scale offset, and the outer
    integral, refined by doubling.
    """
    if not x > 0.0:
        raise ValueError("argument must be positive")
    c = spec.c_tilde
    if x == c:
        return 0.0
    lo, hi = (x, c) if x < c else (c, x)
    n = 64
    prev = None
    while n <= (1 << 18):
        s = np.linspace(math.log(lo), math.log(hi), n + 1)
        ys = np.exp(s)
        ys[0], ys[-1] = lo, hi
        inner = _inner_cumulative(spec, ys, 0.1 * tol)
        escale = np.exp(-inner)
        # p(y) - p(x) accumulated along the grid; x sits at one end
        segs = np.diff(ys) * 0.5 * (escale[:-1] + escale[1:])
        poff = np.concatenate([[0.0], np.cumsum(segs)])
        if x > c:
            poff = poff - poff[-1]
        dens = np.exp(inner) / (1.0 - eval_phi(spec.phi, ys))
        g = np.abs(poff) * dens
        val = float(np.trapezoid(g, ys))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise RuntimeError("accessibility quadrature stagnated")


def accessibility_limit(spec: DiffusionSpec, tol: float = 1e-4, k_max: int = 14):
    """Estimate lim v(eps) over eps = c_tilde 2^-k; returns (estimate, converged, samples).

    Convergence means the dyadic increments decay; the estimate extrapolates
    the geometric tail when a stable ratio is visible, otherwise reports the
    last sample.
    """
    eps = spec.c_tilde * 2.0 ** -np.arange(1, k_max + 1)
    vals = np.array([accessibility_v(spec, float(e), tol) for e in eps])
    inc = np.diff(vals)
    if inc.size >= 2 and abs(inc[-1]) <= tol * max(1.0, abs(vals[-1])):
        return float(vals[-1]), True, vals
    if inc.size >= 2 and abs(inc[-2]) > 0:
        r = inc[-1] / inc[-2]
        if 0.0 < r < 0.9:
            return float(vals[-1] + inc[-1] * r / (1.0 - r)), True, vals
    return float(vals[-1]), False, vals


def bessel_dimension(alpha: float) -> float:
    """Dimension of the comparison squared Bessel process, 2(1-alpha)/(2-alpha)."""
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    return 2.0 * (1.0 - alpha) / (2.0 - alpha)


def regularized_gamma_p(s: float, x: float, rel_tol: float = 1e-12) -> float:
    """Regularized lower incomplete gamma P(s, x) for s > 0, x >= 0.

    Power series below x = s + 1, Lentz continued fraction for the upper
    tail above it; both iterated to relative tolerance.
    """
    if s <= 0.0:
        raise ValueError("shape must be positive")
    if x < 0.0:
        raise ValueError("argument must be nonnegative")
    if x == 0.0:
        return 0.0
    log_front = -x + s * math.log(x) - math.lgamma(s)
    if x < s + 1.0:
        term = 1.0 / s
        total = term
        n = 0
        while abs(term) > rel_tol * abs(total):
            n += 1
            term *= x / (s + n)
            total += term
            if n > 100000:
                raise RuntimeError("series for P(s, x) failed to converge")
        return min(1.0, math.exp(log_front) * total)
    # modified Lentz for the continued fraction of Q(s, x)
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, 200000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rel_tol:
            return max(0.0, 1.0 - math.exp(log_front) * h)
    raise RuntimeError("continued fraction for Q(s, x) failed to converge")


def lower_incomplete_gamma(s: float, x: float) -> float:
    """Unregularized lower incomplete gamma via the regularized kernel."""
    return regularized_gamma_p(s, x) * math.exp(math.lgamma(s))


def squared_bessel_survival(x0: float, t: float, alpha: float) -> float:
    """Probability the comparison squared Bessel gap has not hit 0 by t.

    Shape 1/(2 - alpha) = 1 - dim/2, argument x0/(2t).  Increasing in x0,
    decreasing in t; at alpha = 1 this is 1 - exp(-x0/(2t)).
    """
    if not (x0 > 0.0 and t > 0.0):
        raise ValueError("x0 and t must be positive")
    bessel_dimension(alpha)  # domain check for alpha
    shape = 1.0 / (2.0 - alpha)
    return regularized_gamma_p(shape, x0 / (2.0 * t))


def gap_survival_bound(c_phi: float, alpha: float, gap: float, t: float) -> float:
    """Survival bound for a gap diffusing with 1 - phi(z) >= c_phi z^alpha.

    The transformed gap gap^(2-alpha) runs a squared Bessel clock at rate
    c_phi (2-alpha)^2 / 2, so the bound is the Bessel survival at that
    rescaled time.
    """
    if not (gap > 0.0 and t > 0.0 and c_phi > 0.0):
        raise ValueError("gap, t, c_phi must be positive")
    rate = c_phi * (2.0 - alpha) ** 2 / 2.0
    return squared_bessel_survival(gap ** (2.0 - alpha), rate * t, alpha)


def pair_noncoalescence_mc(phi: CovarianceSpec, a: DriftSpec, gap: float,
                           t: float, reps: int, rng,
                           dt: float = 2.5e-4, tol_merge: float = 1e-10):
    """Monte Carlo frequency that two labels stay unmerged at time t.

    Simulates the two-label flow started at 0 and gap; a zero gap is a
    shared cluster and returns 0 with no sampling.  Returns (estimate, se).
    """
    if gap < 0.0:
        raise ValueError("gap must be nonnegative")
    if gap == 0.0 or gap <= tol_merge:
        return 0.0, 0.0
    n_steps = max(1, int(round(t / dt)))
    h = t / n_steps
    survived = _batch.pair_gap_walk(phi, a, gap, h, n_steps, reps, rng,
                                    tol_merge)
    p = survived / reps
    se = math.sqrt(max(p * (1.0 - p), 1.0 / reps) / reps)
    return p, se


def cluster_count_mc(phi: CovarianceSpec, a: DriftSpec, interval, n_grid: int,
                     t: float, reps: int, rng,
                     dt: float = 2.5e-4, tol_merge: float = 1e-10):
    """Mean number of live clusters at time t from n_grid equispaced starts.

    Returns (mean, se).  A single start is one cluster forever.
    """
    if n_grid < 1:
        raise ValueError("need at least one start")
    lo, hi = float(interval[0]), float(interval[1])
    if n_grid == 1:
        return 1.0, 0.0
    starts = np.linspace(lo, hi, n_grid)
    n_steps = max(1, int(round(t / dt)))
    h = t / n_steps
    counts = _batch.cluster_count_samples(phi, a, starts, h, n_steps, reps,
                                          rng, tol_merge)
    mean = float(np.mean(counts))
    se = float(np.std(counts, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return mean, se
