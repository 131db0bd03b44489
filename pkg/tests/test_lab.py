import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from wcjscc import (Experiment, InvalidInputError, SourceSpec, Topology, additive_network,
                    bitpipe_network, build_scheme, convergence_sweep, effective_noise_probe,
                    effective_source_probe, estimate_distortion, gaussianity, ks_statistic,
                    scalar_channel)


def _ks_brute(x, sigma=1.0):
    # sup over every jump point of |F_n - Phi|, taking both one-sided limits
    x = np.asarray(x, dtype=float)
    pts = np.unique(x)
    best = 0.0
    for p in pts:
        phi = stats.norm.cdf(p / sigma)
        left = np.mean(x < p)
        right = np.mean(x <= p)
        best = max(best, abs(left - phi), abs(right - phi))
    return best


def test_passthrough_zero_distortion():
    net = additive_network(2, (0,), (1,), [[0, 0], [1, 0]], np.zeros((2, 2)))
    rep = estimate_distortion(net, build_scheme("passthrough", n=4), SourceSpec([[2.0]], "laplace"),
                              300, seed=0)
    assert rep.mse[0] == 0.0 and rep.stderr[0] == 0.0


def test_report_fields():
    rep = estimate_distortion(scalar_channel(1.0), build_scheme("uncoded_lmmse", n=3),
                              SourceSpec([[1.0]]), 400, seed=1)
    assert rep.trials == 400
    assert np.all(rep.mse >= 0)
    np.testing.assert_allclose(rep.ci95, 1.96 * rep.stderr)
    lo, hi = rep.interval(0)
    assert lo < rep.mse[0] < hi
    assert rep.metadata["seed"] == 1 and rep.metadata["n"] == 3
    assert rep.profile is None


def test_too_few_trials_or_mismatch():
    net = scalar_channel(1.0)
    with pytest.raises(InvalidInputError):
        estimate_distortion(net, build_scheme("sign_bpsk"), SourceSpec([[1.0]]), 99)
    with pytest.raises(InvalidInputError):
        estimate_distortion(net, build_scheme("sign_bpsk", k=2), SourceSpec(np.eye(2)), 100)


def test_reproducible_bit_identical():
    net = scalar_channel(1.0, "uniform")
    s = build_scheme("sign_bpsk", n=2)
    a = estimate_distortion(net, s, SourceSpec([[1.0]], "laplace"), 1000, seed=5)
    b = estimate_distortion(net, s, SourceSpec([[1.0]], "laplace"), 1000, seed=5)
    assert a.mse.tobytes() == b.mse.tobytes() and a.stderr.tobytes() == b.stderr.tobytes()
    c = estimate_distortion(net, s, SourceSpec([[1.0]], "laplace"), 1000, seed=6)
    assert c.mse.tobytes() != a.mse.tobytes()


def test_ci_scaling():
    net = scalar_channel(1.0)
    s = build_scheme("uncoded_lmmse")
    src = SourceSpec([[1.0]])
    w = {t: estimate_distortion(net, s, src, t, seed=7).ci95[0] for t in (25_000, 50_000, 100_000)}
    assert w[25_000] / w[50_000] == pytest.approx(np.sqrt(2), rel=0.2)
    assert w[25_000] / w[100_000] == pytest.approx(2.0, rel=0.2)


def test_ci_calibration():
    # LMMSE on Gaussian data has known distortion 1/2
    net = scalar_channel(1.0)
    s = build_scheme("uncoded_lmmse")
    src = SourceSpec([[1.0]])
    hits = 0
    for seed in range(200):
        lo, hi = estimate_distortion(net, s, src, 500, seed=1000 + seed).interval(0)
        hits += lo <= 0.5 <= hi
    assert hits >= 180


def test_multi_destination():
    K = np.array([[1.0, 0.5], [0.5, 2.0]])
    H = np.zeros((4, 4))
    H[2, 0] = 1.0
    H[3, 1] = 1.0
    net = additive_network(4, (0, 1), (2, 3), H, np.diag([0, 0, 1.0, 0.5]))
    s = build_scheme("uncoded_lmmse", k=2)
    rep = estimate_distortion(net, s, SourceSpec(K), 50_000, seed=8)
    assert rep.mse.shape == (2,)
    # destination 0: s2=1, z2=1; destination 1 uses the design (s2=1, z2=1) on s2=2, z2=0.5
    assert abs(rep.mse[0] - 0.5) <= 3 * rep.stderr[0]
    g = np.sqrt(1.0 * 1.0) / 2.0
    true1 = (1 - g) ** 2 * 2.0 + g ** 2 * 0.5
    assert abs(rep.mse[1] - true1) <= 3 * rep.stderr[1]


def test_ks_normal():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert ks_statistic(x, 1.0) < 0.01
    assert ks_statistic(3 * x, 3.0) < 0.01


def test_ks_point_mass():
    assert ks_statistic(np.zeros(1000), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_ks_rademacher():
    x = np.tile([-1.0, 1.0], 500)
    expected = stats.norm.cdf(1.0) - 0.5
    assert ks_statistic(x, 1.0) == pytest.approx(expected, abs=1e-12)
    assert ks_statistic(x, 1.0) == pytest.approx(_ks_brute(x), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(100, 2000), st.floats(0.05, 0.95), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(0.2, 3), st.integers(0, 2**32 - 1))
def test_ks_two_point_matches_brute_force(n, p, a, b, sigma, seed):
    x = np.where(np.random.default_rng(seed).random(n) < p, a, b)
    assert ks_statistic(x, sigma) == pytest.approx(_ks_brute(x, sigma), abs=1e-12)


def test_ks_matches_scipy():
    x = np.random.default_rng(1).laplace(size=5000)
    assert ks_statistic(x, 1.3) == pytest.approx(stats.kstest(x / 1.3, "norm").statistic, abs=1e-12)


def test_ks_rejects():
    with pytest.raises(InvalidInputError):
        ks_statistic(np.zeros(200), 0.0)
    with pytest.raises(InvalidInputError):
        ks_statistic(np.zeros(200), -1.0)
    with pytest.raises(InvalidInputError):
        ks_statistic(np.zeros(50), 1.0)


def test_gaussianity_moments():
    g = gaussianity(np.random.default_rng(2).uniform(-1, 1, 200_000), 1 / np.sqrt(3))
    assert g.skew == pytest.approx(0.0, abs=0.02)
    assert g.exkurt == pytest.approx(-1.2, abs=0.03)
    assert 0 <= g.ks <= 1 and g.samples == 200_000


@pytest.mark.parametrize("family", ["uniform", "rademacher"])
def test_effective_noise_covariance_and_whiteness(family):
    K = np.array([[1.0, 0.3], [0.3, 1.0]])
    net = additive_network(2, (0,), (1,), np.eye(2), K, family)
    b = 32
    probe = effective_noise_probe(net, b, 100_000, seed=3, ells=(0, 1, b // 2, b - 1))
    for i in range(len(probe.ells)):
        assert np.all(np.abs(probe.cov[i] - K) <= 3 * probe.cov_se[i])
        # lag-1 correlation of i.i.d. rows is ~N(0, 1/rows)
        assert np.all(np.abs(probe.autocorr[i]) <= 4 / np.sqrt(probe.rows))


def test_effective_noise_probe_rejects():
    net = bitpipe_network(Topology(2, (0,), (1,)), 3)
    with pytest.raises(InvalidInputError):
        effective_noise_probe(net, 4, 1000)
    with pytest.raises(InvalidInputError):
        effective_noise_probe(scalar_channel(1.0), 4, 999)
    with pytest.raises(InvalidInputError):
        effective_noise_probe(scalar_channel(1.0), 4, 1000, ells=(4,))


def test_effective_source_gaussianizes():
    src = SourceSpec([[1.0]], "two-point-asymmetric")
    raw = gaussianity(src.sample(50_000, np.random.default_rng(0)).ravel(), 1.0)
    probe = effective_source_probe(src, 64, 50_000, seed=4, ells=(1,))
    assert probe.ks[0, 0] < raw.ks / 10
    assert abs(probe.skew[0, 0]) < abs(raw.skew) / 4


def _quantizer_experiment(family, converter="source", trials=2000):
    net = bitpipe_network(Topology(2, (0,), (1,)), 3)
    return Experiment(net, build_scheme("scalar_quantizer"), SourceSpec([[1.0]], family), converter,
                      trials, seed=9)


def test_sweep_gaussian_within_ci():
    exp = _quantizer_experiment("gaussian", trials=5000)
    inner = estimate_distortion(exp.model, exp.scheme, exp.source, 100_000, seed=10)
    for row in convergence_sweep(exp, [4, 16, 64]):
        r = row.report
        assert abs(r.mse[0] - inner.mse[0]) <= r.ci95[0] + inner.ci95[0]


def test_sweep_rademacher_shrinks():
    exp = _quantizer_experiment("rademacher", trials=5000)
    rows = convergence_sweep(exp, [4, 16, 64, 256])
    d_g = oracles.quantizer_mse(3, 4.0)
    gaps = [abs(r.report.mse[0] - d_g) for r in rows]
    assert gaps[-1] < gaps[0]
    assert oracles.gaps_non_increasing(gaps, [r.report.ci95[0] for r in rows])
    ks = [r.diagnostics[0].ks for r in rows]
    assert ks[-1] < ks[0]


def test_sweep_single_and_errors():
    exp = _quantizer_experiment("uniform", trials=200)
    rows = convergence_sweep(exp, [8])
    assert len(rows) == 1 and rows[0].b == 8 and rows[0].report.metadata["b"] == 8
    with pytest.raises(InvalidInputError):
        convergence_sweep(exp, [4, 7])
    with pytest.raises(InvalidInputError):
        convergence_sweep(exp, [16, 4])
    with pytest.raises(InvalidInputError):
        convergence_sweep(exp, [])


def test_sweep_noise_converter_diagnostics():
    exp = Experiment(scalar_channel(1.0, "rademacher"), build_scheme("sign_bpsk"), SourceSpec([[1.0]]),
                     "noise", 1000, seed=11)
    rows = convergence_sweep(exp, [4, 64])
    assert rows[0].diagnostics[0].ks > rows[1].diagnostics[0].ks
    assert rows[1].report.metadata["b"] == 64
