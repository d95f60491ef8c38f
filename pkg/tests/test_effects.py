import math

import numpy as np
import pandas as pd
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from teamshock.effects import (compute_ite, conformal_interval, ks_two_sample,
                               residual_distribution_report)


# ---------------------------------------------------------------------------
# ITE

def test_compute_ite_is_observed_minus_predicted():
    obs = pd.Series([1.0, 2.0], index=["a", "b"])
    pred = pd.Series([1.5, 1.0], index=["b", "a"])  # order must not matter
    df = compute_ite(obs, pred, month=3, outcome="productivity")
    assert df.set_index("repo").loc["a", "ite"] == pytest.approx(0.0)
    assert df.set_index("repo").loc["b", "ite"] == pytest.approx(0.5)
    assert set(df["month"]) == {3} and set(df["outcome"]) == {"productivity"}


def test_compute_ite_rejects_mismatched_ids():
    obs = pd.Series([1.0], index=["a"])
    pred = pd.Series([1.0], index=["b"])
    with pytest.raises(ValueError, match="do not match"):
        compute_ite(obs, pred)


def test_compute_ite_rejects_non_finite():
    obs = pd.Series([np.nan], index=["a"])
    pred = pd.Series([1.0], index=["a"])
    with pytest.raises(ValueError, match="non-finite"):
        compute_ite(obs, pred)


# ---------------------------------------------------------------------------
# Conformal

def test_conformal_rank_rule_hand_ranked():
    # [DERIVED] n=19, alpha=0.05: k = ceil(20*0.95) = 19 -> largest |resid|
    residuals = np.arange(1.0, 20.0)
    ci = conformal_interval(residuals, alpha=0.05)
    assert ci.k == 19 and ci.d == 19.0
    # [DERIVED] n=19, alpha=0.5: k = ceil(20*0.5) = 10 -> 10th smallest
    ci2 = conformal_interval(residuals, alpha=0.5)
    assert ci2.k == 10 and ci2.d == 10.0


def test_conformal_uses_absolute_residuals():
    ci = conformal_interval(np.array([-5.0, 1.0, 2.0]), alpha=0.5)
    # |residuals| sorted: 1,2,5; k=ceil(4*0.5)=2 -> d=2
    assert ci.d == 2.0


def test_conformal_small_sample_infinite_with_warning():
    with pytest.warns(UserWarning, match="infinite"):
        ci = conformal_interval(np.ones(5), alpha=0.05)
    assert math.isinf(ci.d)
    assert ci.covers([1e300])[0]  # vacuous bound covers everything


def test_conformal_d_monotone_in_alpha():
    rng = np.random.default_rng(0)
    residuals = rng.normal(size=200)
    ds = [conformal_interval(residuals, alpha=a).d
          for a in (0.01, 0.05, 0.2, 0.5)]
    assert ds == sorted(ds, reverse=True)


def test_conformal_validation():
    with pytest.raises(ValueError):
        conformal_interval([], alpha=0.05)
    with pytest.raises(ValueError):
        conformal_interval([1.0], alpha=1.5)


def test_conformal_coverage_quick():
    # coverage >= 1 - alpha in expectation over exchangeable draws
    hits = []
    for rep in range(50):
        rng = np.random.default_rng(rep)
        ci = conformal_interval(rng.normal(size=300), alpha=0.1)
        hits.append(ci.covers(rng.normal(size=500)).mean())
    assert np.mean(hits) >= 0.88


# ---------------------------------------------------------------------------
# KS test

def test_ks_statistic_hand_computed():
    # [DERIVED] a=(1,2,3), b=(4,5,6): ECDFs fully separated -> D = 1
    r = ks_two_sample([1, 2, 3], [4, 5, 6])
    assert r.statistic == 1.0
    # [DERIVED] identical samples -> D = 0, p = 1
    r2 = ks_two_sample([1, 2, 3], [1, 2, 3])
    assert r2.statistic == 0.0 and r2.p_value == 1.0


def test_ks_statistic_matches_scipy_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.normal(size=rng.integers(5, 60))
        b = rng.normal(loc=rng.normal(), size=rng.integers(5, 60))
        ours = ks_two_sample(a, b)
        ref = scipy.stats.ks_2samp(a, b, method="asymp")
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)


def test_ks_pvalue_reasonable_against_scipy():
    rng = np.random.default_rng(2)
    a = rng.normal(size=400)
    b = rng.normal(loc=0.3, size=400)
    ours = ks_two_sample(a, b)
    ref = scipy.stats.ks_2samp(a, b, method="asymp")
    assert ours.p_value == pytest.approx(ref.pvalue, rel=0.2, abs=1e-4)


def test_ks_detects_shift_and_respects_null():
    rng = np.random.default_rng(3)
    a = rng.normal(size=500)
    assert ks_two_sample(a, rng.normal(loc=0.5, size=500)).p_value < 1e-6
    assert ks_two_sample(a, rng.normal(size=500)).p_value > 0.05


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-2, 2), scale=st.floats(0.1, 3))
def test_ks_invariant_under_monotone_transform(seed, shift, scale):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=30)
    b = rng.normal(size=25)
    base = ks_two_sample(a, b).statistic
    transformed = ks_two_sample(scale * a + shift, scale * b + shift).statistic
    assert transformed == pytest.approx(base, abs=1e-12)


def test_ks_empty_sample_rejected():
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


# ---------------------------------------------------------------------------
# Distribution report

def test_residual_distribution_report_contents():
    rng = np.random.default_rng(4)
    y = rng.normal(size=100)
    y_hat = y + rng.normal(0, 0.1, size=100)
    ites = rng.normal(-0.3, 0.1, size=80)
    rep = residual_distribution_report(y, y_hat, ites, month=2, outcome="o")
    assert rep["month"] == 2 and rep["outcome"] == "o"
    assert rep["test_residuals"]["n"] == 100
    assert rep["target_ites"]["n"] == 80
    assert rep["target_ites"]["median"] == pytest.approx(np.median(ites))
    assert rep["ks"]["p_value"] < 0.01  # clearly shifted
