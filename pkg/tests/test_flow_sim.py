import json
import math

import numpy as np
import pytest

from harrisflow.covariance import cholesky_factor, gram_matrix
from harrisflow.flow_sim import (PathRecord, SimConfig, coalesce,
                                 driftless_substep,
                                 empirical_quadratic_covariation, init_state,
                                 martingale_residual, simulate)
from harrisflow.streams import derive


def test_init_state_examples():
    st = init_state([0.0, 1.0])
    assert st.n_clusters == 2

    st = init_state([1.0, 1.0, 2.0])
    assert st.n_clusters == 2
    assert st.membership[0] == st.membership[1]

    st = init_state([3.0, 1.0, 2.0])
    np.testing.assert_array_equal(st.reps, [1.0, 2.0, 3.0])
    assert list(st.membership) == [2, 0, 1]

    with pytest.raises(ValueError):
        init_state([])


def test_coalesce_examples():
    reps, mem, merged = coalesce(np.array([0.0, 1.0]), np.arange(2), 1e-10)
    assert not merged and list(reps) == [0.0, 1.0]

    reps, mem, merged = coalesce(np.array([1.0, 0.9]), np.arange(2), 1e-10)
    assert merged and reps.size == 1
    assert reps[0] == pytest.approx(0.95)
    assert list(mem) == [0, 0]

    reps, mem, merged = coalesce(np.array([0.0, 1e-12, 5.0]), np.arange(3), 1e-10)
    np.testing.assert_allclose(reps, [5e-13, 5.0])
    assert list(mem) == [0, 0, 1]


def test_coalesce_cascades():
    # chain within tolerance collapses fully
    reps, mem, merged = coalesce(np.array([0.0, 1e-11, 2e-11]), np.arange(3), 1e-10)
    assert reps.size == 1


def test_substep_single_cluster_moments(gauss):
    rng = derive(11)
    cfg = SimConfig(dt_fine=1.0)
    n = 30000
    incs = np.empty(n)
    for i in range(n):
        state = init_state([0.0])
        new, label_inc = driftless_substep(state, gauss, 1.0, rng, cfg)
        incs[i] = label_inc[0]
        assert new.time == 1.0
    assert abs(float(np.mean(incs))) <= 3.0 / math.sqrt(n)
    assert abs(float(np.var(incs, ddof=1)) - 1.0) <= 3.0 * math.sqrt(2.0 / (n - 1))


def test_substep_indicator_increments_uncorrelated(indicator):
    rng = derive(12)
    cfg = SimConfig(dt_fine=1.0)
    n = 5000
    pairs = np.empty((n, 2))
    for i in range(n):
        _, inc = driftless_substep(init_state([0.0, 10.0]), indicator, 1.0, rng, cfg)
        pairs[i] = inc
    corr = float(np.corrcoef(pairs.T)[0, 1])
    assert abs(corr) <= 3.0 / math.sqrt(n)


def test_simulate_single_particle_terminal_variance(gauss, zero_drift):
    cfg = SimConfig(dt_fine=1.0 / 64)
    n = 400
    terms = np.empty(n)
    for i in range(n):
        rec = simulate(gauss, zero_drift, [0.0], 1.0, cfg, derive(13, i))
        terms[i] = rec.values[-1, 0]
    var = float(np.var(terms, ddof=1))
    assert abs(var - 1.0) <= 3.0 * math.sqrt(2.0 / (n - 1))


def test_simulate_equal_starts_share_path(gauss, zero_drift):
    rec = simulate(gauss, zero_drift, [0.5, 0.5], 1.0, SimConfig(dt_fine=1.0 / 32),
                   derive(14))
    np.testing.assert_array_equal(rec.values[:, 0], rec.values[:, 1])


def test_simulate_brownian_web_meeting_probability(indicator, zero_drift):
    """Coarse-dt sanity check of the reflection-principle value erf(0.5).

    The discrete monitor misses barrier grazes, so the estimate sits a bit
    above the continuum value; the acceptance suite runs the fine-dt version.
    """
    cfg = SimConfig(dt_fine=1.0 / 256)
    n = 200
    survived = 0
    for i in range(n):
        rec = simulate(indicator, zero_drift, [0.0, 1.0], 1.0, cfg, derive(15, i))
        survived += rec.values[-1, 0] != rec.values[-1, 1]
    assert abs(survived / n - math.erf(0.5)) <= 0.12


def test_path_record_structural_invariants(exp1, zero_drift):
    starts = np.linspace(0.0, 1.0, 8)
    rec = simulate(exp1, zero_drift, starts, 1.0, SimConfig(dt_fine=2.0 ** -8),
                   derive(16))
    vals = rec.values
    assert np.all(np.diff(vals, axis=1) >= 0.0)  # monotone in the start order

    # stickiness: once equal, bitwise equal ever after
    m = vals.shape[1]
    for i in range(m - 1):
        eq = vals[:, i] == vals[:, i + 1]
        first = np.argmax(eq) if eq.any() else None
        if first is not None and eq.any():
            assert eq[first:].all()

    counts = np.array([np.unique(row).size for row in vals])
    assert np.all(np.diff(counts) <= 0)
    assert rec.merge_events, "this configuration coalesces with near certainty"
    times = [e["time"] for e in rec.merge_events]
    assert times == sorted(times)


def test_simulate_translation_equivariance(gauss, zero_drift):
    cfg = SimConfig(dt_fine=1.0 / 64)
    a = simulate(gauss, zero_drift, [0.0, 0.3, 1.1], 0.5, cfg, derive(17))
    b = simulate(gauss, zero_drift, [2.0, 2.3, 3.1], 0.5, cfg, derive(17))
    np.testing.assert_allclose(b.values, a.values + 2.0, atol=1e-12)
    assert len(a.merge_events) == len(b.merge_events)


def test_simulate_rejects_bad_dt(gauss, zero_drift):
    with pytest.raises(ValueError):
        simulate(gauss, zero_drift, [0.0], 1.0, SimConfig(dt_fine=0.3), derive(0))


def test_quadratic_covariation_single_particle(gauss, zero_drift):
    cfg = SimConfig(dt_fine=2.0 ** -10, log_increments=True)
    rec = simulate(gauss, zero_drift, [0.0], 1.0, cfg, derive(18))
    # realized QV of one Brownian path fluctuates at scale sqrt(2 h t)
    assert empirical_quadratic_covariation(rec, gauss) <= 5.0 * math.sqrt(2.0 * cfg.dt_fine)


def test_quadratic_covariation_independent_pair(indicator, zero_drift):
    cfg = SimConfig(dt_fine=2.0 ** -10, log_increments=True)
    rec = simulate(indicator, zero_drift, [0.0, 100.0], 1.0, cfg, derive(19))
    assert empirical_quadratic_covariation(rec, indicator) <= 0.2


def test_quadratic_covariation_requires_log(gauss, zero_drift):
    rec = simulate(gauss, zero_drift, [0.0], 0.5, SimConfig(dt_fine=1.0 / 32), derive(20))
    with pytest.raises(ValueError):
        empirical_quadratic_covariation(rec, gauss)


def test_frozen_pair_cross_covariation(gauss):
    # increments drawn at frozen positions (0, 1): cross QV accumulates phi(1) t
    rho = math.exp(-1.0)
    ell = cholesky_factor(gram_matrix(gauss, np.array([0.0, 1.0])))
    n, h = 4096, 1.0 / 4096
    g = derive(21).standard_normal((n, 2))
    inc = math.sqrt(h) * g @ ell.T
    cross = float(np.sum(inc[:, 0] * inc[:, 1]))
    se = h * math.sqrt(n * (1.0 + rho * rho))
    assert abs(cross - rho) <= 3.0 * se


def _make_records(phi, a, starts, T, dt, n, seed):
    cfg = SimConfig(dt_fine=dt)
    return [simulate(phi, a, starts, T, cfg, derive(seed, i)) for i in range(n)]


def test_martingale_residual_constant_function(gauss, zero_drift):
    recs = _make_records(gauss, zero_drift, [0.0], 0.5, 1.0 / 64, 5, 22)
    zero = lambda x: np.zeros_like(x)
    est, se = martingale_residual(recs, gauss, zero_drift,
                                  lambda x: 1.0, zero,
                                  lambda x: np.zeros((x.size, x.size)), 0.0, 0.5)
    assert est == 0.0


def test_martingale_residual_linear(gauss, zero_drift):
    recs = _make_records(gauss, zero_drift, [0.0], 0.5, 1.0 / 64, 100, 23)
    est, se = martingale_residual(
        recs, gauss, zero_drift,
        lambda x: float(x[0]),
        lambda x: np.ones(1),
        lambda x: np.zeros((1, 1)), 0.0, 0.5)
    assert abs(est) <= 3.0 * se


def test_martingale_residual_product(gauss, zero_drift):
    # f = x1 x2 needs the off-diagonal bracket term phi(x1 - x2)
    recs = _make_records(gauss, zero_drift, [0.0, 1.0], 0.5, 1.0 / 64, 100, 24)
    est, se = martingale_residual(
        recs, gauss, zero_drift,
        lambda x: float(x[0] * x[1]),
        lambda x: x[::-1].astype(float),
        lambda x: np.array([[0.0, 1.0], [1.0, 0.0]]), 0.0, 0.5)
    assert abs(est) <= 3.0 * se


def test_path_record_csv_round_trip(tmp_path, gauss, zero_drift):
    rec = simulate(gauss, zero_drift, [0.0, 1.0], 0.25, SimConfig(dt_fine=1.0 / 32),
                   derive(25))
    out = tmp_path / "paths.csv"
    rec.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,label_0,label_1"
    got = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_array_equal(got[:, 0], rec.times)
    np.testing.assert_array_equal(got[:, 1:], rec.values)  # 17 digits round-trip
    events = json.loads((tmp_path / "paths.csv.events.json").read_text())
    assert isinstance(events, list)
