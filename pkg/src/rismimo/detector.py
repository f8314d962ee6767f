"""Expectation-consistent MIMO detectors for the quantized synthetic channel.

The coded detector alternates three local MMSE estimators (quantization
posterior, SVD-accelerated LMMSE, BCJR code posterior) exchanging extrinsic
means and variances; the uncoded variant replaces the code posterior by an
elementwise constellation posterior.  An AQNM LMMSE + Viterbi receiver is
included as the conventional benchmark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coding import (ConvCodeSpec, InterleaverSpec, bcjr_decode, deinterleave,
                     interleave, soft_demod, soft_modulate, viterbi_decode)
from .geometry import SyntheticChannel
from .quantizer import (V_MAX, V_MIN, AdcSpec, QuantizedObs, extrinsic_update,
                        posterior_z, aqnm_distortion, reconstruct)


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class GecConfig:
    max_iters: int = 30
    damping: float = 0.0            # convex damping on extrinsic quantities
    v_min: float = V_MIN
    v_max: float = V_MAX
    tolerance: float = 1e-8         # convergence threshold on v_1x change

    def __post_init__(self):
        if self.max_iters < 1:
            raise DetectorError("need at least one iteration")
        if not 0 <= self.damping < 1:
            raise DetectorError("damping must be in [0, 1)")


@dataclass
class IterationDiag:
    """Per-iteration state snapshot for convergence analysis."""

    t: int
    v_1z: float
    v_2z: float
    v_1x: float
    v_2x: float
    post_var_z: float
    post_var_x: float
    bit_errors: int | None = None


@dataclass(frozen=True)
class SvdFactorization:
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray

    @classmethod
    def of(cls, a: np.ndarray) -> "SvdFactorization":
        u, s, vh = np.linalg.svd(a, full_matrices=False)
        return cls(u, s, vh)

    @property
    def rank_cols(self) -> int:
        return self.s.size


def lmmse_stage(r_2x: np.ndarray, v_2x: float, r_2z: np.ndarray, v_2z: float,
                svd: SvdFactorization):
    """Joint Gaussian estimate of x and z = A x through the singular basis.

    Inputs are (K, T) and (N, T) matrices of extrinsic means with shared
    scalar variances.  Returns (x_hat, dQ_x, z_hat, dQ_z).
    """
    if v_2x <= 0 or v_2z <= 0:
        raise DetectorError("extrinsic variances must be positive")
    k = r_2x.shape[0]
    n = r_2z.shape[0]
    d = 1.0 / (1.0 / v_2x + svd.s[:, None] ** 2 / v_2z)

    rhs = r_2x / v_2x + svd.vh.conj().T @ (svd.s[:, None] * (svd.u.conj().T @ r_2z)) / v_2z
    proj = svd.vh @ rhs
    x_hat = svd.vh.conj().T @ (d * proj) + v_2x * (rhs - svd.vh.conj().T @ proj)
    z_hat = svd.u @ (svd.s[:, None] * (svd.vh @ x_hat))

    kp = svd.rank_cols
    dq_x = float(np.sum(d[:, 0]) + (k - kp) * v_2x) / k
    dq_z = float(np.sum(svd.s ** 2 * d[:, 0])) / n
    return x_hat, dq_x, z_hat, dq_z


def _damp(new, old, rho):
    if rho == 0.0 or old is None:
        return new
    return (1 - rho) * new + rho * old


@dataclass
class _GecRun:
    """Shared loop for the coded and uncoded detectors."""

    obs: QuantizedObs
    channel: SyntheticChannel
    config: GecConfig
    x_posterior: "callable"         # (r_1x, v_1x) -> (x_hat_1, avg post var, extras)
    truth_bits: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def run(self):
        cfg = self.config
        a = self.channel.matrix
        n, k = a.shape
        n_uses = (self.obs.idx_re if self.obs.quantized else self.obs.values).shape[1]
        svd = SvdFactorization.of(a)

        r_2x = np.zeros((k, n_uses), dtype=complex)
        v_2x = 1.0
        r_1z = np.zeros((n, n_uses), dtype=complex)
        v_1z = self.channel.power_z
        r_2z, v_2z = None, None
        r_1x, v_1x = None, None
        prev_v_1x = None

        for t in range(cfg.max_iters):
            # 1) quantization posterior of z -> extrinsic toward the LMMSE
            z_hat_1, var_z = posterior_z(self.obs, r_1z, v_1z, self.channel.noise_w)
            pv_z = float(np.mean(var_z))
            new_r_2z, new_v_2z = extrinsic_update(z_hat_1, pv_z, r_1z, v_1z,
                                                  cfg.v_min, cfg.v_max)
            r_2z = _damp(new_r_2z, r_2z, cfg.damping)
            v_2z = _damp(new_v_2z, v_2z, cfg.damping)

            # 2) reverse LMMSE -> extrinsic toward the x posterior
            x_hat_2, dq_x, _, _ = lmmse_stage(r_2x, v_2x, r_2z, v_2z, svd)
            new_r_1x, new_v_1x = extrinsic_update(x_hat_2, dq_x, r_2x, v_2x,
                                                  cfg.v_min, cfg.v_max)
            r_1x = _damp(new_r_1x, r_1x, cfg.damping)
            v_1x = _damp(new_v_1x, v_1x, cfg.damping)

            # 3) constellation / code posterior of x -> extrinsic back
            x_hat_1, pv_x, errors = self.x_posterior(r_1x, v_1x)
            new_r_2x, new_v_2x = extrinsic_update(x_hat_1, pv_x, r_1x, v_1x,
                                                  cfg.v_min, cfg.v_max)
            r_2x = _damp(new_r_2x, r_2x, cfg.damping)
            v_2x = _damp(new_v_2x, v_2x, cfg.damping)

            # 4) forward LMMSE -> extrinsic toward the z posterior
            _, _, z_hat_2, dq_z = lmmse_stage(r_2x, v_2x, r_2z, v_2z, svd)
            new_r_1z, new_v_1z = extrinsic_update(z_hat_2, dq_z, r_2z, v_2z,
                                                  cfg.v_min, cfg.v_max)
            r_1z = _damp(new_r_1z, r_1z, cfg.damping)
            v_1z = _damp(new_v_1z, v_1z, cfg.damping)

            self.diagnostics.append(IterationDiag(
                t=t, v_1z=v_1z, v_2z=v_2z, v_1x=v_1x, v_2x=v_2x,
                post_var_z=pv_z, post_var_x=pv_x, bit_errors=errors))

            if prev_v_1x is not None and abs(v_1x - prev_v_1x) < cfg.tolerance:
                break
            prev_v_1x = v_1x
        return self


def detect_gecc(obs: QuantizedObs, channel: SyntheticChannel,
                code: ConvCodeSpec, interleaver: InterleaverSpec,
                config: GecConfig = GecConfig(),
                truth_bits: np.ndarray | None = None):
    """Coded detector; returns (decoded info bits, per-iteration diagnostics)."""
    k = channel.n_tx
    n_uses = (obs.idx_re if obs.quantized else obs.values).shape[1]
    n_coded = 2 * k * n_uses
    if n_coded != interleaver.length:
        raise DetectorError(
            f"{k} antennas x {n_uses} uses carry {n_coded} coded bits, "
            f"interleaver expects {interleaver.length}")
    n_info = code.info_length(n_coded)
    state = {"info_llr": None}

    def x_posterior(r_1x, v_1x):
        # symbols are filled column-wise: use t occupies symbols t*K..(t+1)*K
        symbols = r_1x.T.ravel()
        d2 = soft_demod(symbols, v_1x)
        s2 = deinterleave(d2, interleaver)
        info_llr, s1 = bcjr_decode(s2, code)
        state["info_llr"] = info_llr[:n_info]
        d1 = interleave(s1, interleaver)
        means, variances = soft_modulate(d1)
        x_hat = means.reshape(n_uses, k).T
        errors = None
        if truth_bits is not None:
            errors = int(np.sum((state["info_llr"] > 0) != truth_bits[:n_info]))
        return x_hat, float(np.mean(variances)), errors

    run = _GecRun(obs, channel, config, x_posterior, truth_bits).run()
    bits = (state["info_llr"] > 0).astype(np.int64)
    return bits, run.diagnostics


def detect_gecu(obs: QuantizedObs, channel: SyntheticChannel,
                config: GecConfig = GecConfig(),
                truth_symbols: np.ndarray | None = None):
    """Uncoded detector; returns (hard symbol decisions, diagnostics)."""

    last = {"x": None}

    def x_posterior(r_1x, v_1x):
        tr = np.tanh(np.sqrt(2) * r_1x.real / v_1x)
        ti = np.tanh(np.sqrt(2) * r_1x.imag / v_1x)
        x_hat = (tr + 1j * ti) / np.sqrt(2)
        last["x"] = x_hat
        pv = float(np.mean(1 - (tr ** 2 + ti ** 2) / 2))
        errors = None
        if truth_symbols is not None:
            hard = (np.sign(x_hat.real) + 1j * np.sign(x_hat.imag)) / np.sqrt(2)
            errors = int(np.sum(np.abs(hard - truth_symbols) > 1e-9))
        return x_hat, pv, errors

    run = _GecRun(obs, channel, config, x_posterior).run()
    hard = (np.sign(last["x"].real) + 1j * np.sign(last["x"].imag)) / np.sqrt(2)
    return hard, run.diagnostics


def benchmark_aqnm(obs: QuantizedObs, channel: SyntheticChannel,
                   code: ConvCodeSpec, interleaver: InterleaverSpec) -> np.ndarray:
    """AQNM-linearized one-shot LMMSE followed by hard Viterbi decoding."""
    a = channel.matrix
    n, k = a.shape
    y = reconstruct(obs)
    rho = aqnm_distortion(obs.spec.bits) if obs.quantized else 0.0

    c_z = a @ a.conj().T + channel.noise_w * np.eye(n)
    cov = (1 - rho) ** 2 * c_z + rho * (1 - rho) * np.diag(np.diag(c_z).real)
    gain = (1 - rho) * a.conj().T @ np.linalg.inv(cov)
    x_hat = gain @ y

    symbols = x_hat.T.ravel()
    bits = np.empty(2 * symbols.size, dtype=np.int64)
    bits[0::2] = symbols.real > 0
    bits[1::2] = symbols.imag > 0
    coded = deinterleave(bits, interleaver)
    return viterbi_decode(coded, code)
