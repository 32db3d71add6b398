import math

import numpy as np
import pytest

import vimp


def test_equi_s_closed_form():
    for b in np.arange(0.0, 0.95, 0.1):
        s = vimp.equi_s(np.array([[1.0, b], [b, 1.0]]))
        assert s[0] == pytest.approx(min(2 * (1 - b), 1), abs=1e-9)


def test_min_eigenvalue_and_cholesky():
    m = np.array([[1.0, 0.6], [0.6, 1.0]])
    assert vimp.min_eigenvalue(m) == pytest.approx(0.4, abs=1e-12)
    lower = vimp.cholesky(m)
    assert np.allclose(lower @ lower.T, m, atol=1e-12)
    with pytest.raises(vimp.VimpError):
        vimp.cholesky(np.ones((2, 2)))


def test_theorem_points():
    assert vimp.theoretical_self_corr(0.3) == 0.0
    assert vimp.theoretical_self_corr(0.75) == 0.5
    with pytest.raises(vimp.ValidationError):
        vimp.theoretical_self_corr(1.0)
    rows = vimp.run_elbow([0.0, 0.75], 50000, seed=7)
    assert abs(rows[1]["empirical_self_corr"] - 0.5) < 0.02


def test_knockoffs_identity_and_zero_s():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2000, 2))
    same = vimp.sample_knockoffs(x, np.eye(2), s=np.zeros(2))
    assert np.array_equal(same, x)
    fresh = vimp.sample_knockoffs(x, np.eye(2), seed=3)
    assert abs(np.corrcoef(x[:, 0], fresh[:, 0])[0, 1]) < 0.1
    kp = vimp.knockoff_params(np.array([[1.0, 0.75], [0.75, 1.0]]))
    assert kp["joint_cov"][0, 2] == pytest.approx(0.5, abs=1e-9)


def test_dataset_and_ols():
    d = vimp.generate_dataset(3, 0.5, 500, seed=1)
    assert d["x"].shape == (500, 9)
    assert d["feature_names"][0] == "avg_x1_x2"
    noiseless = vimp.generate_dataset(1, 0.2, 300, seed=2, noise_sd=0.0)
    fit = vimp.fit_ols(noiseless["x"], noiseless["y"])
    assert np.allclose(fit["coefficients"], [1, 1, 1, 1, 1, 0, 0.5, 0.8, 1.2, 1.5], atol=1e-9)


def test_ranks_and_importance():
    assert vimp.rank_features([2.0, 2.0, 1.0]) == [1.5, 1.5, 3.0]
    d = vimp.generate_dataset(1, 0.0, 1000, seed=4)
    x, y = d["x"], d["y"]
    perm = vimp.permutation_linear(x[:500], y[:500], x[500:], y[500:], n_perms=3, seed=1)
    assert perm[9]["rank"] < perm[5]["rank"]
    assert perm[0]["p_value"] is None
    cpi = vimp.cpi_linear(x[:500], y[:500], x[500:], y[500:], seed=2)
    assert cpi[9]["p_value"] < 0.05
    with pytest.raises(vimp.ValidationError):
        vimp.cpi_linear(x[:500], y[:500], x[500:], y[500:], method="nope")


def test_run_experiment_deterministic():
    kwargs = dict(scenarios=[1], rho_grid=[0.0, 0.5], n=200, reps=2, trees=10, n_perms=2, seed=9)
    a = vimp.run_experiment(**kwargs, threads=1)
    b = vimp.run_experiment(**kwargs, threads=4)
    assert a["results_csv"] == b["results_csv"]
    assert a["summary_csv"].splitlines()[0] == (
        "scenario,rho,method,feature,mean_importance,mean_rank,rejection_rate,n_reps"
    )
    assert len(a["summary"]) == 2 * 4 * 10
    assert all(1 <= row["mean_rank"] <= 10 for row in a["summary"])
    with pytest.raises(vimp.ValidationError, match="bogus"):
        vimp.run_experiment([1], [0.0], methods="bogus")
