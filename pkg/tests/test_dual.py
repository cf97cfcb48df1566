import math

import numpy as np
import pytest

from harrisflow.dual import (CoverageError, DualBundle, TrajectoryBundle,
                             dual_value, mapping_I, wedge_check)


def identity_bundle():
    starts = [(0.0, k / 4.0) for k in range(5)]
    times = np.linspace(0.0, 1.0, 9)
    return TrajectoryBundle.from_map(lambda s, t, x: x, starts, times)


def contraction_bundle(n_starts=21, n_times=17):
    starts = [(0.0, x) for x in np.linspace(0.0, 2.0, n_starts)]
    times = np.linspace(0.0, 1.0, n_times)
    flow = lambda s, t, x: x * math.exp(-(t - s))
    return TrajectoryBundle.from_map(flow, starts, times)


def test_dual_value_identity_picks_smallest_above():
    b = identity_bundle()
    assert dual_value(b, 0.0, 0.5, 0.3) == 0.5
    assert dual_value(b, 0.25, 1.0, 0.74) == 0.75
    assert dual_value(b, 0.0, 0.0, 0.99) == 1.0
    with pytest.raises(CoverageError):
        dual_value(b, 0.0, 0.5, 1.0)  # strictly above the top trajectory
    with pytest.raises(ValueError):
        dual_value(b, 0.5, 0.25, 0.0)  # s > t


def test_dual_value_contraction_within_one_cell():
    b = contraction_bundle()
    cell = 2.0 / 20
    for s, t, z in [(0.0, 0.5, 0.4), (0.25, 0.75, 0.3), (0.1875, 1.0, 0.05)]:
        exact = z * math.exp(t - s)
        got = dual_value(b, s, t, z)
        assert exact < got <= exact + cell * math.exp(-(1.0 - t)) + 1e-12


def test_dual_value_monotone_in_x():
    b = contraction_bundle()
    xs = np.linspace(0.0, 0.5, 8)
    vals = [dual_value(b, 0.25, 0.75, float(x)) for x in xs]
    assert all(a <= c for a, c in zip(vals, vals[1:]))


def test_dual_refinement_decreases():
    # adding trajectories can only tighten the outer approximation
    coarse = contraction_bundle(n_starts=6)
    fine = contraction_bundle(n_starts=41)
    for z in (0.1, 0.3, 0.55):
        assert dual_value(fine, 0.25, 0.75, z) <= dual_value(coarse, 0.25, 0.75, z)


def rereverse(dual):
    """Read a backward bundle as a forward bundle on the reversed clock."""
    T = float(dual.times[-1])
    times = T - dual.times[::-1]
    values = dual.values[:, ::-1]
    starts = [(0.0, float(v[0])) for v in values]
    return TrajectoryBundle(starts=starts, times=times, values=values)


def test_dual_involution_within_grid_resolution():
    # mapping the dual bundle back (time re-reversed) recovers the forward
    # values; each pass rounds thresholds up by at most one start-grid cell
    n = 96
    xs = np.linspace(0.1, 2.0, n)
    cell = float(xs[1] - xs[0])
    times = np.linspace(0.0, 0.25, 17)
    flow = lambda s, t, x: x * math.exp(t - s)
    b = TrajectoryBundle.from_map(flow, [(0.0, float(x)) for x in xs], times)
    twice = mapping_I(rereverse(mapping_I(b)))
    recovered = twice.values[:, ::-1]
    covered = np.isfinite(recovered).all(axis=1)
    assert covered.sum() >= n // 2
    err = np.abs(recovered[covered] - b.values[covered])
    assert float(err.max()) <= 3.0 * cell


def test_mapping_identity_bundle():
    b = identity_bundle()
    dual = mapping_I(b)
    assert isinstance(dual, DualBundle)
    # constant trajectories: terminal == start, so row j tracks inf over
    # forward values >= x_j, which is x_j itself
    for j, (_s, x) in enumerate(b.starts):
        np.testing.assert_allclose(dual.values[j], x)
    assert dual.covered.all()
    assert wedge_check(b, dual) == []


def test_mapping_two_constants_threshold():
    times = np.linspace(0.0, 1.0, 5)
    b = TrajectoryBundle(starts=[(0.0, 0.0), (0.0, 1.0)], times=times,
                         values=np.array([[0.0] * 5, [1.0] * 5]))
    dual = mapping_I(b)
    np.testing.assert_allclose(dual.values[0], 0.0)  # both qualify, inf is 0
    np.testing.assert_allclose(dual.values[1], 1.0)  # only the upper one


def test_mapping_uncovered_rows_flagged():
    times = np.linspace(0.0, 1.0, 5)
    b = TrajectoryBundle(starts=[(0.0, 0.0), (0.0, 2.0)], times=times,
                         values=np.array([[0.0] * 5, [1.0] * 5]))  # decays below 2
    dual = mapping_I(b)
    assert not dual.covered[1].any()
    assert np.isinf(dual.values[1]).all()
    with pytest.raises(CoverageError):
        mapping_I(b, strict=True)


def test_mapping_dyadic_grid_wedge_clean():
    starts = [(s, x) for s in np.linspace(0.0, 0.875, 8)
              for x in np.linspace(0.0, 2.0, 8)]
    times = np.linspace(0.0, 1.0, 33)
    flow = lambda s, t, x: x * math.exp(-(t - s))
    b = TrajectoryBundle.from_map(flow, starts, times)
    dual = mapping_I(b)
    assert dual.covered.any()
    assert wedge_check(b, dual) == []


def test_stochastic_dyadic_bundle_wedge_clean():
    from harrisflow.covariance import gaussian_spec
    from harrisflow.flow_sim import SimConfig
    from harrisflow.splitting import make_partition, split_two_param
    from harrisflow.streams import derive

    sin = __import__("harrisflow.drift", fromlist=["DriftSpec"]).DriftSpec(
        kind="lipschitz_custom", tag="sin", c_a=1.0)
    starts = [(s, x) for s in np.linspace(0.0, 0.875, 8)
              for x in np.linspace(0.0, 0.875, 8)]
    dt = 2.0 ** -6
    tp = split_two_param(gaussian_spec(), sin, starts, make_partition(1.0, 8),
                         SimConfig(dt_fine=dt), derive(44))
    b = TrajectoryBundle.from_two_param(tp, shared_seed=44)
    dual = mapping_I(b)
    assert dual.covered.any()
    # a noisy bundle may graze at single nodes, but never beyond the scale of
    # one fine-grid increment; above that scale the wedge must be clean
    assert wedge_check(b, dual, threshold=2.0 * math.sqrt(dt)) == []
    raw = wedge_check(b, dual)
    n_cells = b.values.shape[0] * dual.values.shape[0] * (b.times.size - 1)
    assert len(raw) <= 0.01 * n_cells


def test_wedge_check_flags_true_crossing():
    times = np.linspace(0.0, 1.0, 5)
    rising = TrajectoryBundle(starts=[(0.0, -1.0)], times=times,
                              values=np.array([[-1.0, -0.4, 0.2, 0.8, 1.4]]))
    falling = DualBundle(starts=[(0.0, 1.0)], times=times,
                         values=np.linspace(1.0, -1.0, 5)[None, :])
    bad = wedge_check(rising, falling)
    assert len(bad) == 1 and bad[0]["forward"] == 0


def test_export_csv_headers(tmp_path):
    b = identity_bundle()
    fwd = tmp_path / "forward.csv"
    b.export_csv(fwd)
    assert fwd.read_text().splitlines()[0] == "# reversed=false"

    back = tmp_path / "backward.csv"
    mapping_I(b).export_csv(back)
    lines = back.read_text().splitlines()
    assert lines[0] == "# reversed=true"
    assert lines[1].startswith("t,traj_0")
