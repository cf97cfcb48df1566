import math

import numpy as np
import pytest

from harrisflow.covariance import (CovarianceSpec, SingularGramError,
                                   cholesky_factor, cosine_series_spec,
                                   eval_phi, from_config, gram_matrix,
                                   verify_class)


def test_eval_phi_pointwise(gauss, exp1, indicator):
    assert eval_phi(CovarianceSpec(kind="exponential_alpha", alpha=2.0), 0.0) == 1.0
    assert eval_phi(indicator, 0.5) == 0.0
    assert eval_phi(exp1, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert eval_phi(gauss, 2.0) == pytest.approx(math.exp(-4.0), rel=1e-15)


def test_eval_phi_symmetry_and_normalization():
    specs = [
        CovarianceSpec(kind="gaussian"),
        CovarianceSpec(kind="exponential_alpha", alpha=0.7),
        CovarianceSpec(kind="indicator", c_phi=1.0),
        cosine_series_spec(n_terms=50),
    ]
    xs = np.linspace(0.0, 3.0, 601)
    for spec in specs:
        assert eval_phi(spec, 0.0) == 1.0
        np.testing.assert_array_equal(eval_phi(spec, xs), eval_phi(spec, -xs))
        assert np.all(np.abs(eval_phi(spec, xs)) <= 1.0)


def test_eval_phi_rejects_non_finite(gauss):
    with pytest.raises(ValueError):
        eval_phi(gauss, float("nan"))
    with pytest.raises(ValueError):
        eval_phi(gauss, float("inf"))


def test_gram_matrix_examples(gauss, exp1):
    ones = gram_matrix(gauss, [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(ones, np.ones((3, 3)))

    far = gram_matrix(gauss, [0.0, 1e6])
    assert far[0, 1] == 0.0 and far[0, 0] == 1.0

    g = gram_matrix(exp1, [0.0, 1.0])
    np.testing.assert_allclose(
        g, [[1.0, math.exp(-1)], [math.exp(-1), 1.0]], rtol=0, atol=1e-16)


def test_gram_strict_positive_definiteness(rng):
    # random distinct point sets stay strictly PD for the analytic kinds
    specs = [CovarianceSpec(kind="gaussian"),
             CovarianceSpec(kind="exponential_alpha", alpha=1.0),
             CovarianceSpec(kind="indicator", c_phi=1.0)]
    for _ in range(1000):
        m = int(rng.integers(2, 13))
        pts = np.sort(rng.uniform(-5, 5, size=m))
        pts += np.arange(m) * 1e-6  # force distinctness
        spec = specs[int(rng.integers(len(specs)))]
        w = np.linalg.eigvalsh(gram_matrix(spec, pts))
        assert w.min() > 0.0


def test_gram_strict_pd_cosine_series(rng):
    spec = cosine_series_spec(n_terms=50)
    for _ in range(100):
        m = int(rng.integers(2, 13))
        pts = np.sort(rng.uniform(-2, 2, size=m))
        if np.any(np.diff(pts) == 0.0):
            continue
        assert np.linalg.eigvalsh(gram_matrix(spec, pts)).min() > 0.0


def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky_factor(np.eye(4)), np.eye(4))


def test_cholesky_two_by_two_closed_form():
    rho = math.exp(-1.0)
    ell = cholesky_factor(np.array([[1.0, rho], [rho, 1.0]]))
    assert ell[0, 0] == 1.0
    assert ell[1, 0] == pytest.approx(rho, rel=1e-15)
    assert ell[1, 1] == pytest.approx(math.sqrt(1 - rho * rho), rel=1e-14)


def test_cholesky_all_ones_with_jitter():
    g = np.ones((3, 3))
    ell = cholesky_factor(g, jitter=1e-12)
    resid = np.max(np.abs(ell @ ell.T - (g + 1e-12 * np.eye(3))))
    assert resid <= 1e-10


def test_cholesky_rejects_indefinite():
    with pytest.raises(SingularGramError):
        cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_verify_class_gaussian():
    spec = CovarianceSpec(kind="gaussian", alpha_class=2.0, c_phi=0.3, c_tilde_phi=1.0)
    rep = verify_class(spec, grid_step=1e-3, radius=3.0)
    assert rep.ok
    assert rep.phi0_exact
    assert not rep.class_bound_violations


def test_verify_class_indicator(indicator):
    # phi vanishes off 0, so every class condition holds trivially
    assert verify_class(indicator, grid_step=1e-3, radius=2.0).ok


def test_verify_class_cosine_series_dyadic_points():
    spec = cosine_series_spec(n_terms=200)
    assert spec.alpha_class == 1.5
    rep = verify_class(spec, grid_step=1e-4, radius=1.0)
    assert rep.ok
    # the cusp bound at the dyadic-in-log points e^{-2m} inside the window
    for m in range(3, 8):
        x = math.exp(-2.0 * m)
        assert 1.0 - eval_phi(spec, x) >= spec.c_phi * x ** 1.5


def test_verify_class_flags_false_claim():
    # claiming a quadratic cusp for a linear-cusp kind must be reported
    spec = CovarianceSpec(kind="exponential_alpha", alpha=1.0,
                          alpha_class=2.0, c_phi=2.0, c_tilde_phi=1.0)
    rep = verify_class(spec, grid_step=1e-3, radius=2.0)
    assert not rep.ok
    assert rep.class_bound_violations


def test_from_config_round_trip():
    spec = from_config({"kind": "exponential_alpha", "alpha": 1.5, "c_phi": 0.2})
    assert spec.alpha == 1.5 and spec.c_phi == 0.2 and spec.alpha_class == 1.5
    with pytest.raises(ValueError):
        from_config({"kind": "gaussian", "bogus": 1})
    with pytest.raises(ValueError):
        from_config({"kind": "unheard_of"})


def test_custom_tabulated_validation():
    spec = from_config({"kind": "custom_tabulated", "grid": [0.0, 1.0, 2.0],
                        "values": [1.0, 0.5, 0.1], "alpha_class": 1.0, "c_phi": 0.4})
    assert eval_phi(spec, 0.5) == pytest.approx(0.75)
    assert eval_phi(spec, 5.0) == pytest.approx(0.1)  # clamped past the grid
    with pytest.raises(ValueError):
        CovarianceSpec(kind="custom_tabulated", grid=(0.0, 1.0), values=(0.9, 0.5))
