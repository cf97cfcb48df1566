"""Drift fields and their deterministic flows.

Supported classes: zero, affine (exact flow), named Lipschitz callables,
beta-modulus fields a(x) = c_rho * sign(x) |x|^beta (Holder for beta in (0,1],
evaluation-only for beta <= 0), and named one-sided-Lipschitz callables which
enter the scheme through the regularized Euler step rather than the exact flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("zero", "affine", "lipschitz_custom", "beta_modulus", "one_sided_lipschitz")

_MAX_SUBSTEPS = 2 ** 20

# Named drift callables usable from configs. Each entry: (fn, lipschitz-ish bound,
# linear-growth constant).
_REGISTRY: dict[str, tuple] = {
    "sin": (np.sin, 1.0, 1.0),
    "neg_signed_sqrt": (lambda x: -np.sign(x) * np.sqrt(np.abs(x)), 1.0, 1.0),
}


def register_drift(tag: str, fn, c_a: float = 1.0, growth: float = 1.0) -> None:
    _REGISTRY[tag] = (fn, c_a, growth)


@dataclass(frozen=True)
class DriftSpec:
    kind: str
    c0: float = 0.0
    c1: float = 0.0
    tag: str = ""
    c_a: float = 1.0
    beta: float = 0.5
    c_rho: float = 1.0
    c_tilde_rho: float = 1.0
    growth: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind in ("lipschitz_custom", "one_sided_lipschitz"):
            if self.tag not in _REGISTRY:
                raise ValueError(f"drift tag {self.tag!r} is not registered")
        if self.growth is None:
            object.__setattr__(self, "growth", _default_growth(self))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"


def _default_growth(spec: DriftSpec) -> float:
    if spec.kind == "zero":
        return 0.0
    if spec.kind == "affine":
        return max(abs(spec.c0), abs(spec.c1))
    if spec.kind == "beta_modulus":
        return abs(spec.c_rho)
    return _REGISTRY[spec.tag][2]


def zero_spec() -> DriftSpec:
    return DriftSpec(kind="zero")


def affine_spec(c0: float, c1: float) -> DriftSpec:
    return DriftSpec(kind="affine", c0=c0, c1=c1)


def from_config(cfg: dict) -> DriftSpec:
    allowed = {"kind", "c0", "c1", "c_a", "beta", "growth", "tag", "c_rho", "c_tilde_rho"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown drift config keys: {sorted(unknown)}")
    return DriftSpec(**cfg)


def eval_drift(spec: DriftSpec, x):
    """a(x) for scalar or array x. beta_modulus takes a(0) = 0 by convention."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("drift argument must be finite")
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr)
    if spec.kind == "zero":
        out = np.zeros_like(a)
    elif spec.kind == "affine":
        out = spec.c0 + spec.c1 * a
    elif spec.kind == "beta_modulus":
        out = np.zeros_like(a)
        nz = a != 0.0
        out[nz] = spec.c_rho * np.sign(a[nz]) * np.abs(a[nz]) ** spec.beta
    else:
        out = np.asarray(_REGISTRY[spec.tag][0](a), dtype=float)
    return float(out[0]) if scalar else out.reshape(arr.shape)


def eval_rho(spec: DriftSpec, y):
    """Continuity modulus rho(y) = c_rho * y^beta for beta_modulus specs (y >= 0)."""
    if spec.kind == "zero":
        return np.zeros_like(np.asarray(y, dtype=float)) if np.ndim(y) else 0.0
    if spec.kind != "beta_modulus":
        raise ValueError("modulus only defined for beta_modulus (or zero) specs")
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0):
        raise ValueError("modulus argument must be nonnegative")
    out = spec.c_rho * arr ** spec.beta
    return float(out) if np.ndim(y) == 0 else out


def _expm1_over(z):
    """expm1(z)/z, continuous at 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0.0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def _rk4(spec: DriftSpec, x: np.ndarray, t: float, n: int) -> np.ndarray:
    h = t / n
    y = x.copy()
    for _ in range(n):
        k1 = eval_drift(spec, y)
        k2 = eval_drift(spec, y + 0.5 * h * k1)
        k3 = eval_drift(spec, y + 0.5 * h * k2)
        k4 = eval_drift(spec, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def ode_flow(spec: DriftSpec, x, t: float, tol: float = 1e-10):
    """F_t(x): time-t map of dF/dt = a(F), F_0 = x.

    Exact for zero and affine drifts. Otherwise classical fourth-order steps
    with the substep count doubled until two successive refinements agree
    within tol; the initial substep respects h <= 1/(2 c_a).
    """
    if t < 0:
        raise ValueError("ode_flow runs forward in time")
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr).astype(float)
    if t == 0 or spec.kind == "zero":
        out = a.copy()
    elif spec.kind == "affine":
        z = spec.c1 * t
        out = a * math.exp(z) + spec.c0 * t * _expm1_over(z)
    else:
        stiff = spec.c_a if spec.kind in ("lipschitz_custom", "one_sided_lipschitz") else abs(spec.c_rho)
        n = max(4, int(math.ceil(2.0 * stiff * t)))
        prev = _rk4(spec, a, t, n)
        while True:
            n *= 2
            if n > _MAX_SUBSTEPS:
                raise RuntimeError("ode_flow: refinement stagnated before reaching tol")
            cur = _rk4(spec, a, t, n)
            if np.max(np.abs(cur - prev)) < tol:
                out = cur
                break
            prev = cur
    return float(out[0]) if scalar else out.reshape(arr.shape)


def regularized_flow_step(spec: DriftSpec, x, dt: float, eps: float,
                          rng: np.random.Generator, substeps: int = 16):
    """Euler-Maruyama step of dF = a(F) dt + eps dw over one block of length dt.

    Used for one-sided-Lipschitz drifts where the exact flow map is not wired
    in; eps = 0 reduces to explicit Euler for the ODE.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    y = np.atleast_1d(arr).astype(float)
    h = dt / substeps
    root_h = math.sqrt(h)
    for _ in range(substeps):
        noise = rng.standard_normal(y.shape) if eps != 0.0 else 0.0
        y = y + eval_drift(spec, y) * h + eps * root_h * noise
    return float(y[0]) if scalar else y.reshape(arr.shape)


def regularization_epsilon(delta_n: float) -> float:
    """Default smoothing amplitude for one-sided-Lipschitz drifts: sqrt(delta_n)."""
    return math.sqrt(delta_n)
