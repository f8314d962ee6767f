import numpy as np
import pytest

from rismimo.coding import ConvCodeSpec, InterleaverSpec, conv_encode, interleave, map_qam4
from rismimo.detector import (
    DetectorError,
    GecConfig,
    SvdFactorization,
    benchmark_aqnm,
    detect_gecc,
    detect_gecu,
    lmmse_stage,
)
from rismimo.geometry import default_scenario, synthesize
from rismimo.quantizer import make_thresholds, quantize


def _random_channel(rng, n=16, k=8):
    a = (rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))) / np.sqrt(2 * n)
    ch = synthesize(default_scenario())
    # reuse the container but with a random matrix
    from dataclasses import replace
    sv = np.linalg.svd(a, compute_uv=False)
    return replace(ch, matrix=a, singular_values=sv,
                   power_z=float(np.trace(a @ a.conj().T).real / n))


def _transmit(ch, snr_db, n_uses, seed, adc_bits=3):
    rng = np.random.default_rng(seed)
    k = ch.n_tx
    n_coded = 2 * k * n_uses
    code = ConvCodeSpec()
    il = InterleaverSpec(n_coded, seed=seed)
    info = rng.integers(0, 2, size=code.info_length(n_coded))
    coded = conv_encode(info, code)
    x = map_qam4(interleave(coded, il)).reshape(n_uses, k).T
    v_w = ch.power_z / 10 ** (snr_db / 10)
    z = ch.matrix @ x
    y = z + np.sqrt(v_w / 2) * (rng.normal(size=z.shape) + 1j * rng.normal(size=z.shape))
    spec = make_thresholds(adc_bits, np.sqrt((ch.power_z + v_w) / 2))
    from dataclasses import replace
    return replace(ch, noise_w=v_w), quantize(y, spec), code, il, info, x


class TestLmmseStage:
    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(0)
        n, k, t = 16, 8, 5
        a = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
        svd = SvdFactorization.of(a)
        r_2x = rng.normal(size=(k, t)) + 1j * rng.normal(size=(k, t))
        r_2z = rng.normal(size=(n, t)) + 1j * rng.normal(size=(n, t))
        v_2x, v_2z = 0.7, 0.3
        x_hat, dq_x, z_hat, dq_z = lmmse_stage(r_2x, v_2x, r_2z, v_2z, svd)

        q = np.linalg.inv(np.eye(k) / v_2x + a.conj().T @ a / v_2z)
        x_ref = q @ (r_2x / v_2x + a.conj().T @ r_2z / v_2z)
        assert np.allclose(x_hat, x_ref, rtol=1e-9, atol=1e-12)
        assert dq_x == pytest.approx(np.trace(q).real / k, rel=1e-9)
        assert np.allclose(z_hat, a @ x_ref, rtol=1e-9, atol=1e-12)
        assert dq_z == pytest.approx(np.trace(a @ q @ a.conj().T).real / n, rel=1e-9)

    def test_wide_matrix_includes_nullspace_prior(self):
        # K' < K singular directions: untouched coordinates keep v_2x
        rng = np.random.default_rng(1)
        n, k = 4, 8
        a = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
        svd = SvdFactorization.of(a)
        r_2x = rng.normal(size=(k, 1)) + 1j * rng.normal(size=(k, 1))
        r_2z = rng.normal(size=(n, 1)) + 1j * rng.normal(size=(n, 1))
        v_2x, v_2z = 0.9, 0.2
        x_hat, dq_x, _, _ = lmmse_stage(r_2x, v_2x, r_2z, v_2z, svd)
        q = np.linalg.inv(np.eye(k) / v_2x + a.conj().T @ a / v_2z)
        assert np.allclose(x_hat, q @ (r_2x / v_2x + a.conj().T @ r_2z / v_2z),
                           rtol=1e-9, atol=1e-12)
        assert dq_x == pytest.approx(np.trace(q).real / k, rel=1e-9)

    def test_infinite_observation_variance_returns_prior(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(6, 4)) + 1j * rng.normal(size=(6, 4))
        svd = SvdFactorization.of(a)
        r_2x = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        r_2z = np.zeros((6, 2), complex)
        x_hat, dq_x, _, _ = lmmse_stage(r_2x, 0.5, r_2z, 1e12, svd)
        assert np.allclose(x_hat, r_2x, atol=1e-9)
        assert dq_x == pytest.approx(0.5, rel=1e-9)


class TestGecc:
    def test_decodes_above_threshold(self):
        ch = synthesize(default_scenario())
        ch, obs, code, il, info, _ = _transmit(ch, snr_db=2.0, n_uses=150, seed=3)
        bits, diags = detect_gecc(obs, ch, code, il,
                                  GecConfig(max_iters=100, damping=0.3))
        assert np.array_equal(bits, info)
        assert len(diags) >= 2

    def test_fails_far_below_threshold(self):
        ch = synthesize(default_scenario())
        ch, obs, code, il, info, _ = _transmit(ch, snr_db=-10.0, n_uses=150, seed=4)
        bits, _ = detect_gecc(obs, ch, code, il,
                              GecConfig(max_iters=30, damping=0.3))
        assert np.mean(bits != info) > 0.2

    def test_interleaver_length_checked(self):
        ch = synthesize(default_scenario())
        ch, obs, code, il, info, _ = _transmit(ch, snr_db=0.0, n_uses=10, seed=5)
        with pytest.raises(DetectorError):
            detect_gecc(obs, ch, code, InterleaverSpec(50), GecConfig(max_iters=2))

    def test_diagnostics_track_bit_errors(self):
        ch = synthesize(default_scenario())
        ch, obs, code, il, info, _ = _transmit(ch, snr_db=2.0, n_uses=150, seed=6)
        truth = np.concatenate([info, np.zeros(code.memory, dtype=np.int64)])
        bits, diags = detect_gecc(obs, ch, code, il,
                                  GecConfig(max_iters=100, damping=0.3),
                                  truth_bits=info)
        assert diags[-1].bit_errors == int(np.sum(bits != info))

    def test_variances_stay_positive(self):
        ch = synthesize(default_scenario())
        ch, obs, code, il, info, _ = _transmit(ch, snr_db=0.0, n_uses=150, seed=7)
        _, diags = detect_gecc(obs, ch, code, il, GecConfig(max_iters=20, damping=0.3))
        for d in diags:
            assert d.v_1z > 0 and d.v_2z > 0 and d.v_1x > 0 and d.v_2x > 0


class TestGecu:
    def test_recovers_symbols_on_easy_channel(self):
        # well-conditioned random channel at high SNR, unquantized
        rng = np.random.default_rng(8)
        ch = _random_channel(rng)
        k, t = 8, 40
        bits = rng.integers(0, 2, size=2 * k * t)
        x = map_qam4(bits).reshape(t, k).T
        v_w = ch.power_z / 10 ** (18 / 10)
        from dataclasses import replace
        ch = replace(ch, noise_w=v_w)
        z = ch.matrix @ x
        y = z + np.sqrt(v_w / 2) * (rng.normal(size=z.shape) + 1j * rng.normal(size=z.shape))
        obs = quantize(y, make_thresholds(None, 1.0))
        hard, _ = detect_gecu(obs, ch, GecConfig(max_iters=50, damping=0.3))
        assert np.mean(np.abs(hard - x) > 1e-9) < 0.01

    def test_outputs_are_qam_points(self):
        ch = synthesize(default_scenario())
        ch, obs, _, _, _, _ = _transmit(ch, snr_db=0.0, n_uses=30, seed=9)
        hard, _ = detect_gecu(obs, ch, GecConfig(max_iters=10, damping=0.3))
        assert np.allclose(np.abs(hard.real), 1 / np.sqrt(2))
        assert np.allclose(np.abs(hard.imag), 1 / np.sqrt(2))


class TestAqnm:
    def test_decodes_at_high_snr(self):
        ch = synthesize(default_scenario())
        ch, obs, code, il, info, _ = _transmit(ch, snr_db=18.0, n_uses=150, seed=10)
        bits = benchmark_aqnm(obs, ch, code, il)
        assert np.mean(bits != info) < 0.01

    def test_worse_than_gecc_midrange(self):
        ch0 = synthesize(default_scenario())
        gec_err = 0
        aqnm_err = 0
        for seed in range(5):
            ch, obs, code, il, info, _ = _transmit(ch0, snr_db=3.0, n_uses=150,
                                                   seed=100 + seed)
            bits_g, _ = detect_gecc(obs, ch, code, il,
                                    GecConfig(max_iters=100, damping=0.3))
            bits_a = benchmark_aqnm(obs, ch, code, il)
            gec_err += int(np.sum(bits_g != info))
            aqnm_err += int(np.sum(bits_a != info))
        assert gec_err < aqnm_err


class TestConfig:
    def test_bad_damping(self):
        with pytest.raises(DetectorError):
            GecConfig(damping=1.0)

    def test_bad_iters(self):
        with pytest.raises(DetectorError):
            GecConfig(max_iters=0)
