"""Randomized equivalence sweeps against an independent reference
implementation (scipy, test-only)."""

import numpy as np
import pytest

scipy_stats = pytest.importorskip("scipy.stats")

from volumetrica.stats import levene, one_way_anova, paired_t, shapiro_wilk, tukey_hsd
from volumetrica.stats.special import f_sf, studentized_range_cdf, t_sf


def test_paired_t_sweep():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(3, 60))
        x = rng.normal(0, 1, n)
        y = x + rng.normal(0.2, 0.8, n)
        mine = paired_t(x, y)
        ref = scipy_stats.ttest_rel(x, y)
        assert mine.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-10)


def test_anova_sweep():
    rng = np.random.default_rng(1)
    for _ in range(25):
        k = int(rng.integers(2, 6))
        groups = [rng.normal(rng.normal(0, 1), 1.0, int(rng.integers(3, 20))) for _ in range(k)]
        mine = one_way_anova(groups)
        ref = scipy_stats.f_oneway(*groups)
        assert mine.statistic == pytest.approx(ref.statistic, rel=1e-9)
        assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def test_levene_sweep():
    rng = np.random.default_rng(2)
    for _ in range(25):
        k = int(rng.integers(2, 5))
        groups = [
            rng.normal(0, float(rng.uniform(0.5, 3.0)), int(rng.integers(4, 25)))
            for _ in range(k)
        ]
        mine = levene(groups)
        ref = scipy_stats.levene(*groups, center="median")
        assert mine.statistic == pytest.approx(ref.statistic, rel=1e-9)
        assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def test_shapiro_sweep():
    rng = np.random.default_rng(3)
    for n in (5, 8, 11, 12, 25, 60, 150, 400):
        x = rng.normal(0, 1, n) + rng.uniform(0, 0.5) * rng.normal(0, 1, n) ** 2
        mine = shapiro_wilk(x)
        ref = scipy_stats.shapiro(x)
        assert mine.statistic == pytest.approx(ref.statistic, abs=1e-8)
        assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-6)


def test_tukey_sweep():
    rng = np.random.default_rng(4)
    for _ in range(5):
        groups = [rng.normal(rng.normal(0, 1), 1.0, int(rng.integers(5, 15))) for _ in range(4)]
        mine = dict(tukey_hsd(groups))
        ref = scipy_stats.tukey_hsd(*groups)
        for (i, j), res in mine.items():
            assert res.p_value == pytest.approx(ref.pvalue[i, j], abs=1e-6)


def test_distribution_kernels_sweep():
    rng = np.random.default_rng(5)
    for _ in range(60):
        t = float(rng.normal(0, 3))
        df = float(rng.integers(1, 500))
        assert t_sf(t, df) == pytest.approx(scipy_stats.t.sf(t, df), abs=1e-12)
        f = float(rng.uniform(0, 8))
        d1, d2 = float(rng.integers(1, 20)), float(rng.integers(2, 1500))
        assert f_sf(f, d1, d2) == pytest.approx(scipy_stats.f.sf(f, d1, d2), abs=1e-12)
    for _ in range(15):
        q = float(rng.uniform(0.2, 7.0))
        k = int(rng.integers(2, 8))
        df = float(rng.integers(2, 300))
        assert studentized_range_cdf(q, k, df) == pytest.approx(
            scipy_stats.studentized_range.cdf(q, k, df), abs=1e-6
        )
