import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from newsbt.errors import AlignmentError, DegenerateError, InsufficientSampleError, ParameterError
from newsbt.sharpe import (
    PairedSeries,
    auto_bandwidth,
    hac_long_run_cov,
    lw_bootstrap_test,
    lw_test,
    pairwise_matrix,
    psd_repair,
    sharpe_delta,
    write_pmatrix_csv,
)


def ann_sr(x):
    return math.sqrt(252) * np.mean(x) / np.std(x, ddof=1)


def pair(seed, T=1000, mu=(0.0005, 0.0003), rho=0.3):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((T, 2))
    a = 0.01 * z[:, 0] + mu[0]
    b = 0.01 * (rho * z[:, 0] + math.sqrt(1 - rho**2) * z[:, 1]) + mu[1]
    return a, b


# -- delta -----------------------------------------------------------------


def test_delta_identical_is_zero():
    a, _ = pair(0)
    assert sharpe_delta((a, a)) == 0.0


def test_delta_sign_follows_mean_shift():
    a, _ = pair(1)
    assert sharpe_delta((a + 0.001, a)) > 0
    assert sharpe_delta((a - 0.001, a)) < 0


def test_delta_matches_independent_recompute():
    a, b = pair(2)
    assert sharpe_delta((a, b)) == pytest.approx(ann_sr(a) - ann_sr(b), abs=1e-12)


def test_delta_degenerate():
    a, _ = pair(3)
    with pytest.raises(DegenerateError):
        sharpe_delta((a, np.full(a.size, 0.001)))


def test_paired_series_checks():
    with pytest.raises(InsufficientSampleError):
        PairedSeries(np.ones(59), np.ones(59))
    with pytest.raises(AlignmentError):
        PairedSeries(np.ones(80), np.ones(81))
    x = np.ones(80)
    x[3] = np.inf
    with pytest.raises(AlignmentError):
        PairedSeries(x, np.ones(80))


# -- HAC covariance --------------------------------------------------------


def test_bandwidth_zero_is_sample_covariance():
    psi = np.random.default_rng(4).standard_normal((200, 4))
    psi -= psi.mean(0)
    assert np.allclose(hac_long_run_cov(psi, 0), psi.T @ psi / 200, atol=1e-15)


@pytest.mark.parametrize("bw", [0, 2])
def test_iid_gives_identity(bw):
    psi = np.random.default_rng(5).standard_normal((10000, 4))
    psi -= psi.mean(0)
    omega = hac_long_run_cov(psi, bw)
    assert np.all(np.abs(omega - np.eye(4)) < 0.05)


def test_iid_auto_bandwidth_within_kernel_noise():
    # with b lags the entries have sd of roughly sqrt(2 * 0.54 * (b + 1) / T)
    T = 10000
    b = auto_bandwidth(T)
    psi = np.random.default_rng(5).standard_normal((T, 4))
    psi -= psi.mean(0)
    omega = hac_long_run_cov(psi, b)
    assert np.all(np.abs(omega - np.eye(4)) < 4 * math.sqrt(2 * 0.54 * (b + 1) / T))


def test_ar1_long_run_variance():
    rng = np.random.default_rng(6)
    phi, T = 0.5, 20000
    e = rng.standard_normal(T + 500)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, e.size):
        x[t] = phi * x[t - 1] + e[t]
    x = x[500:]
    psi = np.column_stack([x, rng.standard_normal((T, 3))])
    psi -= psi.mean(0)
    omega = hac_long_run_cov(psi, auto_bandwidth(T))
    # marginal variance 1/(1-phi^2) times (1+phi)/(1-phi) = 1/(1-phi)^2 = 4
    truth = (1 + phi) / (1 - phi) / (1 - phi**2)
    assert abs(omega[0, 0] - truth) / truth < 0.10


def test_bandwidth_must_be_below_T():
    psi = np.zeros((70, 4))
    with pytest.raises(ParameterError):
        hac_long_run_cov(psi, 70)
    with pytest.raises(ParameterError):
        hac_long_run_cov(psi, -1)


def test_auto_bandwidth():
    assert auto_bandwidth(3900) == math.floor(1.3 * 3900 ** (1 / 3)) == 20


def test_psd_repair_clip_bound():
    rng = np.random.default_rng(7)
    V, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    w = np.array([3.0, 1.0, 0.5, -1e-12])
    M = (V * w) @ V.T
    R = psd_repair(M)
    w_new = np.linalg.eigvalsh(R)
    assert w_new.min() >= -1e-15
    assert np.max(w_new - np.sort(w)) <= 1e-10 * 3.0
    with pytest.raises(DegenerateError):
        psd_repair((V * np.array([3.0, 1.0, 0.5, -0.1])) @ V.T)


# -- delta-method test -----------------------------------------------------


def test_equal_series_null_boundary():
    a, _ = pair(8)
    r = lw_test((a, a))
    assert r.delta == 0 and r.p_one_sided == 0.5


def test_complement_identity_many():
    for seed in range(30):
        a, b = pair(seed, T=300 + 37 * seed)
        assert lw_test((a, b)).p_one_sided + lw_test((b, a)).p_one_sided == pytest.approx(1.0, abs=1e-12)
        assert lw_test((a, b)).z == -lw_test((b, a)).z


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(60, 400), rho=st.floats(-0.9, 0.9))
def test_antisymmetry_property(seed, T, rho):
    a, b = pair(seed, T=T, rho=rho)
    ab, ba = lw_test((a, b)), lw_test((b, a))
    assert ab.z == -ba.z
    assert abs(ab.p_one_sided + ba.p_one_sided - 1.0) <= 1e-12


def test_scale_invariance():
    a, b = pair(9)
    r1, r2 = lw_test((a, b)), lw_test((3.3 * a, 3.3 * b))
    assert r2.delta == pytest.approx(r1.delta, abs=1e-10)
    assert r2.z == pytest.approx(r1.z, abs=1e-10)
    assert r2.p_one_sided == pytest.approx(r1.p_one_sided, abs=1e-10)


def test_p_is_normal_tail():
    a, b = pair(10)
    r = lw_test((a, b))
    assert r.p_one_sided == pytest.approx(norm.sf(r.delta / r.se), abs=1e-15)
    assert r.bandwidth == auto_bandwidth(a.size)


def test_bandwidth_zero_matches_jobson_korkie():
    # Normal iid returns: Var(SR_a - SR_b) = (2 - 2 rho + (SRa^2 + SRb^2 - 2 SRa SRb rho^2) / 2) / T
    rho, T = 0.4, 20000
    a, b = pair(11, T=T, mu=(0.001, 0.002), rho=rho)
    r = lw_test((a, b), bandwidth=0)
    sa, sb = np.mean(a) / np.std(a), np.mean(b) / np.std(b)
    var = (2 - 2 * rho + 0.5 * (sa**2 + sb**2 - 2 * sa * sb * rho**2)) / T
    assert r.se == pytest.approx(math.sqrt(252 * var), rel=0.05)


def test_power_at_sr_gap_two():
    hits = 0
    daily = 2.0 / math.sqrt(252)
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        a = rng.normal(daily * 0.01, 0.01, 3900)
        b = rng.normal(0.0, 0.01, 3900)
        hits += lw_test((a, b)).p_one_sided < 0.05
    assert hits >= 160


def test_short_sample():
    with pytest.raises(InsufficientSampleError):
        lw_test((np.arange(30.0), np.arange(30.0)))


# -- bootstrap -------------------------------------------------------------


def test_bootstrap_null_identical():
    a, _ = pair(12, T=500)
    r = lw_bootstrap_test((a, a), draws=4999)
    assert 0.45 <= r.p_one_sided <= 0.55
    assert r.method == "bootstrap" and r.draws == 4999 and r.block_length == 5


def test_bootstrap_deterministic():
    a, b = pair(13, T=400)
    r1 = lw_bootstrap_test((a, b), draws=999, seed=42)
    r2 = lw_bootstrap_test((a, b), draws=999, seed=42)
    assert r1 == r2
    assert lw_bootstrap_test((a, b), draws=999, seed=43).p_one_sided != r1.p_one_sided


def test_bootstrap_chunking_does_not_change_result():
    a, b = pair(14, T=300)
    assert lw_bootstrap_test((a, b), draws=999, chunk=50) == lw_bootstrap_test((a, b), draws=999, chunk=999)


def test_bootstrap_parameters():
    a, b = pair(15, T=100)
    with pytest.raises(ParameterError):
        lw_bootstrap_test((a, b), draws=500)
    with pytest.raises(ParameterError):
        lw_bootstrap_test((a, b), block_length=0)
    with pytest.raises(ParameterError):
        lw_bootstrap_test((a, b), block_length=100)


def test_bootstrap_detects_large_gap():
    rng = np.random.default_rng(16)
    a = rng.normal(0.002, 0.01, 1500)
    b = rng.normal(0.0, 0.01, 1500)
    assert lw_bootstrap_test((a, b), draws=999).p_one_sided < 0.01


@pytest.mark.slow
def test_bootstrap_size():
    rejections = 0
    runs = 500
    for seed in range(runs):
        rng = np.random.default_rng(5000 + seed)
        a = rng.normal(0.0005, 0.01, 500)
        b = rng.normal(0.0005, 0.01, 500)
        rejections += lw_bootstrap_test((a, b), draws=999, seed=seed).p_one_sided < 0.05
    assert 0.03 <= rejections / runs <= 0.08, rejections / runs


# -- matrix ----------------------------------------------------------------


def test_identical_models_half():
    a, _ = pair(17)
    m = pairwise_matrix({"x": a, "y": a.copy()})
    assert m.get("x", "y") == 0.5 and m.get("y", "x") == 0.5
    assert np.isnan(m.p[0, 0])


def test_matrix_complements_and_ordering():
    rng = np.random.default_rng(18)
    T = 2000
    common = rng.standard_normal(T)
    series = {}
    for name, mu in (("strong", 0.003), ("mid", 0.0015), ("weak", 0.0)):
        series[name] = 0.01 * (0.5 * common + rng.standard_normal(T)) + mu
    m = pairwise_matrix(series)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert m.p[i, j] + m.p[j, i] == pytest.approx(1.0, abs=1e-12)
    assert m.get("strong", "mid") < 0.05 and m.get("strong", "weak") < 0.05 and m.get("mid", "weak") < 0.05


def test_matrix_grid_mismatch():
    a, b = pair(19, T=100)
    days = list(range(100))
    with pytest.raises(AlignmentError):
        pairwise_matrix({"a": (days, a), "b": (days[1:] + [100], b)})
    with pytest.raises(AlignmentError):
        pairwise_matrix({"a": a, "b": b[:90]})


def test_matrix_unknown_method():
    a, b = pair(20, T=100)
    with pytest.raises(ParameterError):
        pairwise_matrix({"a": a, "b": b}, method="magic")


def test_matrix_bootstrap_method():
    a, b = pair(21, T=200)
    m = pairwise_matrix({"a": a, "b": b}, method="bootstrap", draws=999, seed=1)
    assert m.method == "bootstrap"
    assert m.results[("a", "b")].draws == 999


def test_pmatrix_csv(tmp_path):
    a, b = pair(22, T=200)
    m = pairwise_matrix({"a": a, "b": b})
    write_pmatrix_csv(m, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == ",a,b"
    row_a = lines[1].split(",")
    assert row_a[1] == "" and row_a[2] == f"{m.get('a', 'b'):.3f}"
    assert lines[2].split(",")[2] == ""
    assert m.to_json()["p"][0][0] is None
