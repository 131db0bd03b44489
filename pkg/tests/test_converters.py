import numpy as np
import pytest

import oracles
from wcjscc import (AccessLog, FunctionScheme, InvalidInputError, NoiseConvertedScheme,
                    SourceConvertedScheme, SourceSpec, Topology, additive_network,
                    bitpipe_network, build_q, build_scheme, convert_for_noise,
                    convert_for_source, estimate_distortion, gaussianize_source,
                    BlockGeometry, run_scheme, scalar_channel)

T = 100_000
NON_GAUSSIAN = ["uniform", "rademacher", "laplace", "two-point-asymmetric", "mixture-of-gaussians"]


def _identity_net():
    return additive_network(2, (0,), (1,), [[0, 0], [1, 0]], np.zeros((2, 2)))


def _feedback_net(K=None):
    # destination hears the source, source hears the destination
    K = np.zeros((2, 2)) if K is None else K
    return additive_network(2, (0,), (1,), [[0, 0.5], [1.0, 0]], K)


def _feedback_scheme(n):
    """Inner scheme whose source and destination both react to the past."""

    def src(t, x, y):
        fb = 0.7 * y[t - 1] if t else 0.0
        return x[:, t] - fb

    def dst(t, y):
        return np.tanh(y[t - 1]) if t else np.zeros(y.batch)

    def dec(y):
        return np.cumsum(y, axis=1) / (1 + np.arange(y.shape[1]))

    return FunctionScheme(n, [src], [dec], destination_encoders={0: dst})


def test_source_converter_b2_passthrough_exact():
    s = convert_for_source(build_scheme("passthrough", n=3), 2)
    assert s.n == 6 and isinstance(s, SourceConvertedScheme)
    x = np.random.default_rng(0).standard_normal((1, 50, 6))
    xhat, _ = run_scheme(_identity_net(), s, x, rng=np.random.default_rng(1))
    np.testing.assert_allclose(xhat, x, atol=1e-12)


def test_source_converter_feeds_effective_sources():
    # the physical transmit signal equals the inner encoder applied to the effective sub-block
    n, b = 3, 4
    s = convert_for_source(build_scheme("passthrough", n=n), b)
    x = np.random.default_rng(2).standard_normal((1, 5, n * b))
    _, tr = run_scheme(_identity_net(), s, x, rng=np.random.default_rng(3))
    eff = gaussianize_source(x[0], BlockGeometry(n, b))
    np.testing.assert_allclose(tr.inputs[:, :, 0], eff.reshape(5, n * b), atol=1e-12)


def test_source_converter_parseval():
    n, b = 2, 8
    s = convert_for_source(build_scheme("sign_bpsk", n=n), b)
    net = scalar_channel(1.0, "uniform")
    x = np.random.default_rng(4).standard_normal((1, 30, n * b))
    xhat, _ = run_scheme(net, s, x, rng=np.random.default_rng(5))
    geom = BlockGeometry(n, b)
    direct = np.sum((x - xhat) ** 2, axis=-1)
    transformed = np.sum((gaussianize_source(x, geom) - gaussianize_source(xhat, geom)) ** 2,
                         axis=(-1, -2))
    np.testing.assert_allclose(transformed, direct, rtol=1e-9)
    rep = estimate_distortion(net, s, SourceSpec([[1.0]], "laplace"), 500, seed=1)
    assert rep.profile.shape == (1, b)
    assert rep.profile.mean() == pytest.approx(rep.mse[0], rel=1e-9)


def test_converters_reject_bad_input():
    for b in (3, 0, 1, 2.5):
        with pytest.raises(InvalidInputError):
            convert_for_source(build_scheme("sign_bpsk"), b)
        with pytest.raises(InvalidInputError):
            convert_for_noise(build_scheme("sign_bpsk"), b)
    with pytest.raises(InvalidInputError):
        convert_for_source("not a scheme", 4)
    net = bitpipe_network(Topology(2, (0,), (1,)), 3)
    s = convert_for_noise(build_scheme("scalar_quantizer"), 4)
    with pytest.raises(InvalidInputError, match="additive"):
        run_scheme(net, s, np.zeros((1, 2, 4)), rng=np.random.default_rng(0))


def test_converted_scheme_needs_session():
    s = convert_for_noise(build_scheme("sign_bpsk"), 4)
    with pytest.raises(TypeError):
        s.decode(0, np.zeros((1, 4)))


def test_wrap_default():
    builtin = convert_for_source(build_scheme("sign_bpsk"), 4)
    assert builtin.inner.name == "sign_bpsk"
    custom = FunctionScheme(1, [lambda t, x, y: x[:, t]], [lambda y: y])
    wrapped = convert_for_source(custom, 4)
    assert wrapped.inner.name.startswith("encprec(clip(")
    nwrapped = convert_for_noise(custom, 4)
    assert nwrapped.inner.name.startswith("readprec(clip(")
    assert convert_for_source(custom, 4, wrap=False).inner is custom
    assert convert_for_source(build_scheme("sign_bpsk"), 4, wrap=True).inner.name != "sign_bpsk"


def test_noise_converter_zero_noise_matches_inner():
    n, b = 3, 8
    inner = _feedback_scheme(n)
    conv = convert_for_noise(inner, b, wrap=False)
    assert isinstance(conv, NoiseConvertedScheme)
    net = _feedback_net()
    x = np.random.default_rng(6).standard_normal((1, 20, n * b))
    xhat, _ = run_scheme(net, conv, x, rng=np.random.default_rng(7))
    for ell in range(b):
        part = x[:, :, ell * n:(ell + 1) * n]
        ref, _ = run_scheme(net, inner, part, rng=np.random.default_rng(8))
        assert np.max(np.abs(xhat[:, :, ell * n:(ell + 1) * n] - ref)) <= 1e-9


def test_noise_converter_effective_channel_sees_mixed_noise():
    # with noise, effective outputs are H U_eff + Q Z blockwise
    n, b = 2, 4
    inner = build_scheme("passthrough", n=n)
    conv = convert_for_noise(inner, b)
    net = scalar_channel(1.0, "rademacher")
    x = np.random.default_rng(9).standard_normal((1, 10, n * b))
    xhat, tr = run_scheme(net, conv, x, rng=np.random.default_rng(10))
    q = build_q(b).entries
    z = tr.noise[:, :, 1].reshape(10, n, b) @ q.T  # (B, t, l)
    expected = x[0].reshape(10, b, n) + np.swapaxes(z, 1, 2)
    np.testing.assert_allclose(xhat[0].reshape(10, b, n), expected, atol=1e-12)


def test_noise_converter_causality_with_feedback():
    n, b = 3, 4
    conv = convert_for_noise(_feedback_scheme(n), b, wrap=False)
    log = AccessLog()
    net = _feedback_net(np.diag([0.2, 0.5]))
    run_scheme(net, conv, np.random.default_rng(11).standard_normal((1, 6, n * b)),
               rng=np.random.default_rng(12), audit=log)
    assert log.reads
    for slot, idx in log.reads:
        # everything sent in physical block t depends on blocks < t only
        assert idx < (slot // b) * b, (slot, idx)


def test_source_converter_causality_with_feedback():
    n, b = 3, 4
    conv = convert_for_source(_feedback_scheme(n), b, wrap=False)
    log = AccessLog()
    run_scheme(_feedback_net(np.diag([0.2, 0.5])), conv,
               np.random.default_rng(13).standard_normal((1, 6, n * b)),
               rng=np.random.default_rng(14), audit=log)
    assert log.reads and log.violations() == []
    for slot, idx in log.reads:
        # each sub-block only sees its own window
        assert idx >= (slot // n) * n


def test_source_gaussian_fixed_point():
    net = bitpipe_network(Topology(2, (0,), (1,)), 3)
    inner = build_scheme("scalar_quantizer", rate=3, loading=4.0)
    src = SourceSpec([[1.0]])
    a = estimate_distortion(net, inner, src, T, seed=21)
    c = estimate_distortion(net, convert_for_source(inner, 16), src, T // 16, seed=22)
    assert abs(a.mse[0] - c.mse[0]) <= 3 * np.hypot(a.stderr[0], c.stderr[0])


def test_noise_gaussian_fixed_point():
    net = scalar_channel(1.0)
    inner = build_scheme("sign_bpsk")
    src = SourceSpec([[1.0]])
    a = estimate_distortion(net, inner, src, T, seed=23)
    c = estimate_distortion(net, convert_for_noise(inner, 16), src, T // 16, seed=24)
    assert abs(a.mse[0] - c.mse[0]) <= 3 * np.hypot(a.stderr[0], c.stderr[0])


def test_rademacher_source_quantizer_sweep():
    net = bitpipe_network(Topology(2, (0,), (1,)), 3)
    inner = build_scheme("scalar_quantizer", rate=3, loading=4.0)
    d_g = oracles.quantizer_mse(3, 4.0)
    src = SourceSpec([[1.0]], "rademacher")
    gaps, hw = [], []
    for b in (4, 64, 256):
        rep = estimate_distortion(net, convert_for_source(inner, b), src, 20_000, seed=25)
        gaps.append(abs(rep.mse[0] - d_g))
        hw.append(rep.ci95[0])
    assert gaps[0] > gaps[-1]
    assert oracles.gaps_non_increasing(gaps, hw)
    assert gaps[-1] <= 0.1 * d_g


def test_rademacher_noise_sign_rates():
    src = SourceSpec([[1.0]])
    net = scalar_channel(1.0, "rademacher")
    inner = build_scheme("sign_bpsk")
    raw = estimate_distortion(net, inner, src, T, seed=26)
    assert abs(raw.sign_mismatch[0] - 0.25) <= 0.01
    conv = estimate_distortion(net, convert_for_noise(inner, 256), src, 2000, seed=27)
    assert abs(conv.sign_mismatch[0] - oracles.Q1) <= 0.02


def _combo(kind, family):
    if kind == "source-quantizer":
        net = bitpipe_network(Topology(2, (0,), (1,)), 3)
        inner = build_scheme("scalar_quantizer", rate=3, loading=4.0)
        return net, inner, SourceSpec([[1.0]], family), convert_for_source, oracles.quantizer_mse(3, 4.0)
    d_g = oracles.sign_bpsk_mse(oracles.Q1)
    inner = build_scheme("sign_bpsk")
    if kind == "source-sign":
        return scalar_channel(1.0), inner, SourceSpec([[1.0]], family), convert_for_source, d_g
    return scalar_channel(1.0, family), inner, SourceSpec([[1.0]]), convert_for_noise, d_g


@pytest.mark.slow
@pytest.mark.parametrize("family", NON_GAUSSIAN)
@pytest.mark.parametrize("kind", ["source-quantizer", "source-sign", "noise-sign"])
def test_convergence_property(kind, family):
    net, inner, src, convert, d_g = _combo(kind, family)
    gaps, hw = [], []
    for b in (4, 16, 64, 256):
        rep = estimate_distortion(net, convert(inner, b), src, 20_000, seed=31)
        gaps.append(abs(rep.mse[0] - d_g))
        hw.append(rep.ci95[0])
    assert oracles.gaps_non_increasing(gaps, hw), (gaps, hw)
