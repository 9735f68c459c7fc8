import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hjmyield as hy
from hjmyield.calibration import (
    BiasMoments,
    bias_inputs,
    bias_moments,
    correlation_matrix,
    convergence_series,
    correct_bias,
    raw_s,
    scaled_returns,
    solve_diag,
    solve_offdiag,
)

from oracles import recovery

WEEK = 1 / 52
SPEC = hy.ScalingSpec()


def _panel(rows, labels=("1W", "1Y", "5Y")):
    g = hy.MaturityGrid.from_labels(WEEK, list(labels), extrapolate_flat=True)
    return hy.YieldPanel(g, np.asarray(rows, dtype=float))


class TestScaledReturns:
    def test_single_increment(self):
        p = _panel([[0.04, 0.04, 0.04], [0.04, 0.05, 0.03]])
        ups = hy.compute_upsilon(p)
        c = scaled_returns(ups, SPEC)
        assert c.values[:, 0] == pytest.approx(ups.values[:, 0] / 0.2, rel=1e-14)
        # K = 1: S_K(y) = h(y) c c' h(y), the outer product of Upsilon
        u = ups.values[:, 0]
        assert np.allclose(raw_s(c, [0.04] * 3, SPEC), np.outer(u, u), rtol=1e-13)

    def test_raw_s_scales_with_h_squared(self):
        p = _panel([[0.03, 0.03, 0.04], [0.031, 0.032, 0.041], [0.03, 0.035, 0.04]])
        c = scaled_returns(hy.compute_upsilon(p), SPEC)
        a = raw_s(c, [0.04] * 3, SPEC)
        b = raw_s(c, [0.16] * 3, SPEC)
        assert np.allclose(b, 4 * a, rtol=1e-13)

    def test_bias_inputs_zero_short(self):
        # r = 0 and h = 1 at 1Y: a = delta/4, b = 1, c = -s_bias, and Upsilon = -delta
        p = _panel([[0.0, 1.0, 1.0]] * 3)
        mom = bias_moments(hy.compute_upsilon(p), hy.ScalingSpec(theta=0.0))
        a, b, c = bias_inputs(mom, 1)
        assert a == pytest.approx(WEEK / 4, rel=1e-14)
        assert a == pytest.approx(0.0048077, abs=5e-8)
        assert b == 1.0
        assert c == pytest.approx(-WEEK, rel=1e-12)


class TestSolveDiag:
    def test_hand_roots(self):
        # s^2 + 4 s - 2 = 0 -> s = sqrt(6) - 2
        assert solve_diag(1.0, 4.0, -2.0) == pytest.approx(0.4494897, abs=5e-8)
        assert solve_diag(0.0, 1.0, -0.1) == pytest.approx(0.1, rel=1e-15)
        assert solve_diag(0.25, 1.0, 0.0) == 0.0

    def test_continuous_in_a(self):
        assert solve_diag(1e-10, 1.0, -0.3) == pytest.approx(solve_diag(0.0, 1.0, -0.3), abs=1e-6)

    def test_errors(self):
        with pytest.raises(hy.CalibrationError, match="discriminant"):
            solve_diag(1.0, 1.0, 1.0)
        with pytest.raises(hy.CalibrationError, match="b <= 0"):
            solve_diag(0.0, -0.5, -1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-6, 10), st.floats(0.5, 1.5), st.floats(-10, 0))
    def test_root_solves_quadratic(self, a, b, c):
        s = solve_diag(a, b, c)
        assert s >= 0
        assert a * s * s + b * s + c == pytest.approx(0.0, abs=1e-9 * max(1.0, abs(c)))


def _exact_moments(s, H, r, delta):
    """Moments whose ``s_bias`` is the exact expectation of ``c c' / delta`` given ``s``.

    ``E[c_i c_j] = delta s_ij + delta^2 g_i g_j`` with ``g_i = r / h_i - h_i s_ii / 2``.
    """
    K, d = H.shape
    s_bias = np.zeros((d, d))
    for k in range(K):
        g = r[k] / H[k] - 0.5 * H[k] * np.diag(s)
        s_bias += s + delta * np.outer(g, g)
    s_bias /= K
    return BiasMoments(
        delta=delta,
        K=K,
        mean_r=float(r.mean()),
        hh=np.einsum("ki,kj->ij", H, H) / K,
        rr=np.einsum("k,ki,kj->ij", r**2, 1 / H, 1 / H) / K,
        rh=np.einsum("k,ki,kj->ij", r, H, 1 / H) / K,
        s_bias=s_bias,
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1 / 52, 1 / 12, 1 / 4]))
def test_correction_inverts_exact_bias(seed, delta):
    gen = np.random.default_rng(seed)
    d, K = 4, 30
    A = gen.normal(size=(d, d)) * 0.3
    s = A @ A.T + 0.01 * np.eye(d)
    H = gen.uniform(0.05, 0.3, (K, d))
    r = gen.uniform(0.0, 0.08, K)
    mom = _exact_moments(s, H, r, delta)
    assert np.allclose(correct_bias(mom), s, rtol=1e-10, atol=1e-13)


def test_offdiag_zero_inputs():
    z = np.zeros((2, 2))
    mom = BiasMoments(WEEK, 5, 0.0, z, z, z, np.array([[1.0, 0.3], [0.3, 1.0]]))
    assert solve_offdiag(mom, 0, 1, 1.0, 1.0) == 0.3
    assert solve_offdiag(mom, 1, 0, 1.0, 1.0) == 0.3


class TestCalibrate:
    @pytest.fixture(scope="class")
    @staticmethod
    def est():
        return hy.calibrate(recovery().path(600, 1), SPEC)

    def test_shapes_and_symmetry(self, est):
        assert est.s_corrected.shape == (4, 4)
        assert np.array_equal(est.s_corrected, est.s_corrected.T)
        assert np.allclose(np.diag(est.correlation), 1.0)
        assert est.eigen_shares.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(est.eigen_shares) <= 0)

    def test_beta_identity(self, est):
        assert np.array_equal(est.beta, est.s_bias - est.s_corrected)

    def test_correction_is_small_and_positive(self, est):
        # drift is order delta: correction shrinks the diagonal by (r/h)^2 delta / s
        # (about 8% at 5Y); the near-deterministic short row is almost all drift
        frac = np.diag(est.beta) / np.diag(est.s_bias)
        assert np.all(frac[1:] > 0)
        assert np.all(frac[1:] < 0.1)
        assert frac[0] > 0.9

    def test_dict_round_trip(self, est):
        d = est.to_dict()
        assert d["K"] == 600
        assert np.allclose(np.array(d["s_corrected"]), est.s_corrected)

    def test_needs_two_increments(self):
        p = _panel([[0.03, 0.03, 0.04], [0.031, 0.032, 0.041]])
        with pytest.raises(hy.CalibrationError, match="K >= 2"):
            hy.calibrate(p, SPEC)

    def test_scaling_failure_names_increment(self):
        p = _panel([[0.03, 0.03, 0.04], [0.031, -0.01, 0.041], [0.03, 0.03, 0.04]])
        with pytest.raises(hy.ScalingError, match="increment 2"):
            hy.calibrate(p, SPEC)


class TestTable1:
    def test_bundled(self):
        labels, s = hy.load_table1()
        assert len(labels) == 17
        assert np.array_equal(s, s.T)
        corr, undefined = correlation_matrix(s)
        assert undefined.tolist() == [True] + [False] * 16
        i, j = labels.index("5Y"), labels.index("10Y")
        assert corr[i, j] == pytest.approx(0.9001, abs=5e-4)

    def test_pca_excludes_zero_variance(self):
        labels, s = hy.load_table1()
        rep = hy.pca_report(s, labels=labels)
        assert rep.excluded == ("1 week",)
        assert len(rep.shares) == 16
        assert rep.cumulative[-1] == pytest.approx(1.0)


class TestPCA:
    def test_identity(self):
        rep = hy.pca_report(np.eye(4))
        assert np.allclose(rep.shares, 0.25)

    def test_perfectly_correlated(self):
        rep = hy.pca_report(np.ones((3, 3)) * 2.0)
        assert rep.shares[0] == pytest.approx(1.0)
        assert rep.top(1) == pytest.approx(1.0)

    def test_subset(self):
        s = np.diag([1.0, 2.0, 3.0])
        s[1, 2] = s[2, 1] = 2.0
        rep = hy.pca_report(s, subset=[1, 2])
        rho = 2.0 / np.sqrt(6.0)
        assert rep.shares[0] == pytest.approx((1 + rho) / 2)
        with pytest.raises(ValueError):
            hy.pca_report(s, subset=[])
        with pytest.raises(IndexError):
            hy.pca_report(s, subset=[5])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 7))
    def test_correlation_is_valid(self, seed, d):
        gen = np.random.default_rng(seed)
        A = gen.normal(size=(d, d + 2))
        corr, undefined = correlation_matrix(A @ A.T)
        assert not undefined.any()
        assert np.all(np.abs(corr) <= 1 + 1e-12)
        assert np.linalg.eigvalsh(corr).min() > -1e-10


def test_convergence_ends_at_full_estimate():
    p = recovery().path(200, 2)
    series = convergence_series(p, SPEC)
    est = hy.calibrate(p, SPEC)
    assert series["K"][-1] == 200
    assert np.allclose(series["s_bias"][-1], np.diag(est.s_bias), rtol=1e-12)
    assert np.allclose(series["s_corrected"][-1], np.diag(est.s_corrected), rtol=1e-12)


class TestGridCompare:
    def test_factor_one_is_zero(self):
        p = recovery().path(104, 3)
        cmp_ = hy.grid_compare(p, 1, SPEC)
        assert np.all(cmp_.relative_difference == 0.0)

    def test_quarterly_from_weekly(self):
        o = recovery(delta=1 / 52)
        g = hy.MaturityGrid.from_labels(WEEK, ["1W", "3M", "5Y", "10Y", "20Y"], extrapolate_flat=True)
        sig = np.zeros((5, 5))
        idx = [0, 2, 3, 4]
        sig[np.ix_(idx, idx)] = o.sigma
        sig[1, 1] = 1e-5
        p = hy.simulate_path(np.full(5, 0.05), 520, hy.FactorLoadings.from_sigma(sig), SPEC, 0, g)
        cmp_ = hy.grid_compare(p, 13, SPEC)
        assert cmp_.labels == ("3M", "5Y", "10Y", "20Y")
        assert cmp_.coarse.K == 40

    def test_errors(self):
        p = recovery().path(10, 3)
        with pytest.raises(hy.GridError, match="does not divide"):
            hy.grid_compare(p, 3, SPEC)
        with pytest.raises(ValueError):
            hy.grid_compare(p, 0, SPEC)
        with pytest.raises(hy.GridError, match="not one of the maturities"):
            hy.grid_compare(p, 2, SPEC)


def test_min_eigenvalue_reports_indefinite_estimate():
    est = hy.calibrate(recovery().path(600, 1), SPEC)
    assert est.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(est.correlation).min())
    assert est.to_dict()["correlation_min_eigenvalue"] == est.min_eigenvalue
    # an indefinite corrected matrix is reported, not clipped
    s = np.array([[1.0, 1.2], [1.2, 1.0]])
    bad = hy.CovarianceEstimate(("1Y", "2Y"), s, s, 10, WEEK, 0.025)
    assert bad.min_eigenvalue == pytest.approx(-0.2)
    assert bad.eigen_shares.sum() == pytest.approx(1.0)
