"""Rate-1/2 convolutional coding chain: encoder, interleaver, 4-QAM Gray
mapping, soft demodulation, log-domain BCJR, soft modulation, and Viterbi.

LLR convention throughout: L = ln p(bit = 1) / p(bit = 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

LLR_CLAMP = 60.0


class CodingError(ValueError):
    pass


@dataclass(frozen=True)
class ConvCodeSpec:
    """Rate-1/2 feedforward convolutional code with zero-tail termination."""

    generators: tuple[int, int] = (0o133, 0o171)
    constraint_length: int = 7

    def __post_init__(self):
        if any(g == 0 for g in self.generators):
            raise CodingError("generator polynomials must be nonzero")
        if self.constraint_length != 1 + max(g.bit_length() for g in self.generators) - 1:
            raise CodingError("constraint length inconsistent with generators")

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    def coded_length(self, n_info: int) -> int:
        return 2 * (n_info + self.memory)

    def info_length(self, n_coded: int) -> int:
        n_info = n_coded // 2 - self.memory
        if n_coded % 2 or n_info < 1:
            raise CodingError(f"coded length {n_coded} not a terminated codeword")
        return n_info


@lru_cache(maxsize=None)
def _trellis(generators: tuple[int, int], constraint_length: int):
    """(next_state, out0, out1) tables, indexed [state, input_bit].

    State holds the previous ``memory`` inputs, newest in the MSB; the full
    register is (input << memory) | state with taps applied MSB-first.
    """
    memory = constraint_length - 1
    n_states = 1 << memory
    g0, g1 = generators
    next_state = np.empty((n_states, 2), dtype=np.int64)
    out0 = np.empty((n_states, 2), dtype=np.int64)
    out1 = np.empty((n_states, 2), dtype=np.int64)
    for s in range(n_states):
        for u in (0, 1):
            reg = (u << memory) | s
            out0[s, u] = bin(reg & g0).count("1") % 2
            out1[s, u] = bin(reg & g1).count("1") % 2
            next_state[s, u] = reg >> 1
    return next_state, out0, out1


def conv_encode(bits: np.ndarray, spec: ConvCodeSpec = ConvCodeSpec()) -> np.ndarray:
    """Encode and zero-terminate; output interleaves s0, s1 per input bit."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size == 0:
        raise CodingError("empty input bitstream")
    next_state, out0, out1 = _trellis(spec.generators, spec.constraint_length)
    padded = np.concatenate([bits, np.zeros(spec.memory, dtype=np.int64)])
    return _encode_loop(padded, next_state, out0, out1)


@njit(cache=True)
def _encode_loop(bits, next_state, out0, out1):
    out = np.empty(2 * bits.size, dtype=np.int64)
    s = 0
    for i in range(bits.size):
        u = bits[i]
        out[2 * i] = out0[s, u]
        out[2 * i + 1] = out1[s, u]
        s = next_state[s, u]
    return out


# ---------------------------------------------------------------------------
# Interleaving
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterleaverSpec:
    length: int
    seed: int = 0

    def permutation(self) -> np.ndarray:
        return np.random.default_rng(self.seed).permutation(self.length)


def interleave(stream: np.ndarray, spec: InterleaverSpec) -> np.ndarray:
    stream = np.asarray(stream)
    if stream.size != spec.length:
        raise CodingError(f"stream length {stream.size} != interleaver length {spec.length}")
    return stream[spec.permutation()]


def deinterleave(stream: np.ndarray, spec: InterleaverSpec) -> np.ndarray:
    stream = np.asarray(stream)
    if stream.size != spec.length:
        raise CodingError(f"stream length {stream.size} != interleaver length {spec.length}")
    out = np.empty_like(stream)
    out[spec.permutation()] = stream
    return out


# ---------------------------------------------------------------------------
# Modulation
# ---------------------------------------------------------------------------

def map_qam4(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped 4-QAM: bit pairs -> (+-1 +- j)/sqrt(2), bit 1 -> +."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % 2:
        raise CodingError("bit count must be even for 4-QAM")
    pairs = bits.reshape(-1, 2)
    return ((2 * pairs[:, 0] - 1) + 1j * (2 * pairs[:, 1] - 1)) / np.sqrt(2)


def soft_demod(r: np.ndarray, v: float) -> np.ndarray:
    """Map extrinsic symbol observations to interleaved (real, imag) LLRs."""
    if v <= 0:
        raise CodingError("extrinsic variance must be positive")
    r = np.asarray(r)
    llr = np.empty(2 * r.size)
    llr[0::2] = 2 * np.sqrt(2) * r.real.ravel() / v
    llr[1::2] = 2 * np.sqrt(2) * r.imag.ravel() / v
    return llr


def soft_modulate(llr: np.ndarray):
    """Posterior symbol means and per-symbol variances from bit LLRs."""
    llr = np.asarray(llr, dtype=float)
    if llr.size % 2:
        raise CodingError("LLR count must be even for 4-QAM")
    t = np.tanh(np.clip(llr, -LLR_CLAMP, LLR_CLAMP) / 2).reshape(-1, 2)
    means = (t[:, 0] + 1j * t[:, 1]) / np.sqrt(2)
    variances = 1 - (t[:, 0] ** 2 + t[:, 1] ** 2) / 2
    return means, variances


# ---------------------------------------------------------------------------
# BCJR
# ---------------------------------------------------------------------------

def bcjr_decode(coded_llr: np.ndarray, spec: ConvCodeSpec = ConvCodeSpec()):
    """Exact APP decoding over the zero-terminated trellis.

    Returns (info LLRs including the zero tail, coded LLRs).
    """
    coded_llr = np.asarray(coded_llr, dtype=float)
    if coded_llr.size % 2:
        raise CodingError("coded LLR count must be even")
    n_steps = coded_llr.size // 2
    if n_steps <= spec.memory:
        raise CodingError("codeword shorter than the termination tail")
    next_state, out0, out1 = _trellis(spec.generators, spec.constraint_length)
    llr = np.clip(coded_llr, -LLR_CLAMP, LLR_CLAMP)
    return _bcjr_loop(llr[0::2].copy(), llr[1::2].copy(), next_state, out0, out1,
                      spec.memory)


@njit(cache=True)
def _logaddexp(a, b):
    if a < b:
        a, b = b, a
    return a + np.log1p(np.exp(b - a))


@njit(cache=True)
def _bcjr_loop(llr0, llr1, next_state, out0, out1, memory):
    n_steps = llr0.size
    n_states = next_state.shape[0]
    neg_inf = -1e30

    # branch metrics: gamma[t, s, u] = c0 * L0[t] + c1 * L1[t]
    alpha = np.full((n_steps + 1, n_states), neg_inf)
    alpha[0, 0] = 0.0
    for t in range(n_steps):
        u_max = 1 if t < n_steps - memory else 0   # tail forces zeros
        for s in range(n_states):
            a = alpha[t, s]
            if a <= neg_inf:
                continue
            for u in range(u_max + 1):
                m = a + out0[s, u] * llr0[t] + out1[s, u] * llr1[t]
                ns = next_state[s, u]
                if alpha[t + 1, ns] <= neg_inf:
                    alpha[t + 1, ns] = m
                else:
                    alpha[t + 1, ns] = _logaddexp(alpha[t + 1, ns], m)
        # normalize for stability
        mx = alpha[t + 1, 0]
        for s in range(1, n_states):
            if alpha[t + 1, s] > mx:
                mx = alpha[t + 1, s]
        for s in range(n_states):
            if alpha[t + 1, s] > neg_inf:
                alpha[t + 1, s] -= mx

    beta = np.full((n_steps + 1, n_states), neg_inf)
    beta[n_steps, 0] = 0.0
    for t in range(n_steps - 1, -1, -1):
        u_max = 1 if t < n_steps - memory else 0
        for s in range(n_states):
            for u in range(u_max + 1):
                ns = next_state[s, u]
                b = beta[t + 1, ns]
                if b <= neg_inf:
                    continue
                m = b + out0[s, u] * llr0[t] + out1[s, u] * llr1[t]
                if beta[t, s] <= neg_inf:
                    beta[t, s] = m
                else:
                    beta[t, s] = _logaddexp(beta[t, s], m)
        mx = beta[t, 0]
        for s in range(1, n_states):
            if beta[t, s] > mx:
                mx = beta[t, s]
        for s in range(n_states):
            if beta[t, s] > neg_inf:
                beta[t, s] -= mx

    info_llr = np.empty(n_steps)
    coded_llr = np.empty(2 * n_steps)
    for t in range(n_steps):
        u_max = 1 if t < n_steps - memory else 0
        num_u = neg_inf
        den_u = neg_inf
        num_c0 = neg_inf
        den_c0 = neg_inf
        num_c1 = neg_inf
        den_c1 = neg_inf
        for s in range(n_states):
            a = alpha[t, s]
            if a <= neg_inf:
                continue
            for u in range(u_max + 1):
                ns = next_state[s, u]
                b = beta[t + 1, ns]
                if b <= neg_inf:
                    continue
                c0 = out0[s, u]
                c1 = out1[s, u]
                m = a + b + c0 * llr0[t] + c1 * llr1[t]
                if u == 1:
                    num_u = m if num_u <= neg_inf else _logaddexp(num_u, m)
                else:
                    den_u = m if den_u <= neg_inf else _logaddexp(den_u, m)
                if c0 == 1:
                    num_c0 = m if num_c0 <= neg_inf else _logaddexp(num_c0, m)
                else:
                    den_c0 = m if den_c0 <= neg_inf else _logaddexp(den_c0, m)
                if c1 == 1:
                    num_c1 = m if num_c1 <= neg_inf else _logaddexp(num_c1, m)
                else:
                    den_c1 = m if den_c1 <= neg_inf else _logaddexp(den_c1, m)

        def _diff(num, den):
            if num <= neg_inf:
                return -LLR_CLAMP
            if den <= neg_inf:
                return LLR_CLAMP
            d = num - den
            if d > LLR_CLAMP:
                return LLR_CLAMP
            if d < -LLR_CLAMP:
                return -LLR_CLAMP
            return d

        info_llr[t] = _diff(num_u, den_u)
        coded_llr[2 * t] = _diff(num_c0, den_c0)
        coded_llr[2 * t + 1] = _diff(num_c1, den_c1)
    return info_llr, coded_llr


# ---------------------------------------------------------------------------
# Viterbi
# ---------------------------------------------------------------------------

def viterbi_decode(coded_bits: np.ndarray, spec: ConvCodeSpec = ConvCodeSpec()) -> np.ndarray:
    """ML sequence decision under the Hamming metric, zero tail enforced.

    Returns the information bits without the tail.
    """
    coded_bits = np.asarray(coded_bits, dtype=np.int64)
    if coded_bits.size % 2:
        raise CodingError("coded bit count must be even")
    n_steps = coded_bits.size // 2
    if n_steps <= spec.memory:
        raise CodingError("codeword shorter than the termination tail")
    next_state, out0, out1 = _trellis(spec.generators, spec.constraint_length)
    decided = _viterbi_loop(coded_bits[0::2].copy(), coded_bits[1::2].copy(),
                            next_state, out0, out1, spec.memory)
    return decided[: n_steps - spec.memory]


@njit(cache=True)
def _viterbi_loop(c0, c1, next_state, out0, out1, memory):
    n_steps = c0.size
    n_states = next_state.shape[0]
    big = 1 << 30
    metric = np.full(n_states, big, dtype=np.int64)
    metric[0] = 0
    survivor = np.zeros((n_steps, n_states), dtype=np.int64)    # packed (prev_state, u)
    for t in range(n_steps):
        u_max = 1 if t < n_steps - memory else 0
        new_metric = np.full(n_states, big, dtype=np.int64)
        for s in range(n_states):
            if metric[s] >= big:
                continue
            for u in range(u_max + 1):
                cost = metric[s] + (out0[s, u] != c0[t]) + (out1[s, u] != c1[t])
                ns = next_state[s, u]
                if cost < new_metric[ns]:
                    new_metric[ns] = cost
                    survivor[t, ns] = 2 * s + u
        metric = new_metric

    bits = np.empty(n_steps, dtype=np.int64)
    s = 0
    for t in range(n_steps - 1, -1, -1):
        packed = survivor[t, s]
        bits[t] = packed & 1
        s = packed >> 1
    return bits
