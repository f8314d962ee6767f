"""State-evolution analysis of the expectation-consistent detectors.

Deterministic scalar recursions predict the per-iteration error state of the
coded and uncoded detectors from the channel's singular spectrum, the noise
level, and the ADC thresholds.  The code prior enters through a Monte-Carlo
transfer table that maps the input noise precision to equivalent Gaussian
precisions of the decoder's output LLRs (BER matching).
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri
from scipy.stats import norm

from .coding import ConvCodeSpec, bcjr_decode, conv_encode
from .quantizer import V_MAX, V_MIN, AdcSpec

GH_NODES = 61
_gh_x, _gh_w = np.polynomial.hermite_e.hermegauss(GH_NODES)
_gh_w = _gh_w / np.sqrt(2 * np.pi)   # weights for the standard normal measure


class SeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Transfer functions
# ---------------------------------------------------------------------------

def _mmse_u_integrand(x: float, eta_x: float) -> float:
    return (1.0 - math.tanh(x)) ** 2 * norm.pdf(x, eta_x, math.sqrt(eta_x))


@lru_cache(maxsize=8192)
def mmse_u(eta_x: float) -> float:
    """Scalar MMSE of a +-1 prior under Gaussian noise precision eta_x.

    Evaluates E[(1 - tanh(x))^2] with x ~ N(eta_x, eta_x); equals 1 at
    eta_x = 0 and decays to 0.  Adaptive quadrature: Gauss-Hermite rules
    lose too many digits at large eta_x because the tanh poles close in
    on the real axis after rescaling.
    """
    if eta_x < 0:
        raise SeError("precision must be non-negative")
    if eta_x == 0:
        return 1.0
    s = math.sqrt(eta_x)
    lo, hi = eta_x - 45.0 * s, eta_x + 45.0 * s
    # the integrand mass splits between x ~ 0 and x ~ eta_x
    pts = [0.0] if lo < 0.0 < hi else None
    val, _ = integrate.quad(_mmse_u_integrand, lo, hi, args=(eta_x,),
                            points=pts, limit=200, epsabs=0.0, epsrel=1e-12)
    return min(max(float(val), 0.0), 1.0)


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values of the channel with its aspect ratio alpha = K/N."""

    values: np.ndarray
    n_tx: int
    n_rx: int

    def __post_init__(self):
        if np.any(self.values < 0):
            raise SeError("singular values must be non-negative")

    @property
    def alpha(self) -> float:
        return self.n_tx / self.n_rx

    @classmethod
    def of_channel(cls, channel) -> "SingularSpectrum":
        return cls(np.asarray(channel.singular_values), channel.n_tx, channel.n_rx)


def psi_r(v_x: float, eta_z: float, spectrum: SingularSpectrum) -> float:
    """Average of 1 / (1 + v_x eta_z lambda^2) over K singular values.

    Missing singular values (rank-deficient channels) contribute 1.
    """
    lam2 = spectrum.values ** 2
    total = float(np.sum(1.0 / (1.0 + v_x * eta_z * lam2)))
    total += spectrum.n_tx - lam2.size
    return total / spectrum.n_tx


def psi_f(v_x: float, eta_z: float, spectrum: SingularSpectrum) -> float:
    return 1.0 - spectrum.alpha * (1.0 - psi_r(v_x, eta_z, spectrum))


def zeta(v_z: float, p_z: float, v_w: float, adc: AdcSpec) -> float:
    """Fisher-type information of the quantized observation about z.

    Sums over output bins the squared derivative of the bin mass over twice
    the mass, averaged over the Gaussian prior of the pre-quantization mean.
    Unquantized ADCs give the Gaussian-conditioning limit 1/(v_z + v_w).
    """
    if v_z <= 0 or v_z > p_z * (1 + 1e-12):
        raise SeError("need 0 < v_z <= P_z")
    v_z = min(v_z, p_z)
    if adc.bits is None:
        return 1.0 / (v_z + v_w)

    a = np.sqrt(max(p_z - v_z, 0.0) / 2) * _gh_x       # conditional mean grid
    c2 = (v_w + v_z) / 2
    c = math.sqrt(c2)
    edges = adc.edges()
    lo = (edges[:-1][:, None] - a[None, :]) / c
    hi = (edges[1:][:, None] - a[None, :]) / c

    with np.errstate(over="ignore", under="ignore"):
        phi_lo = np.where(np.isfinite(lo), np.exp(-np.minimum(lo ** 2, 1400) / 2), 0.0)
        phi_hi = np.where(np.isfinite(hi), np.exp(-np.minimum(hi ** 2, 1400) / 2), 0.0)
    psi_prime = -(phi_hi - phi_lo) / math.sqrt(2 * math.pi * c2)
    psi = ndtr(hi) - ndtr(lo)
    ratio = np.where(psi > 1e-300, psi_prime ** 2 / (2 * np.maximum(psi, 1e-300)), 0.0)
    return float(np.sum(_gh_w[None, :] * ratio))


# ---------------------------------------------------------------------------
# Code characterization (density evolution with BER matching)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McParams:
    block_len: int = 2048           # information bits per simulated block
    min_blocks: int = 8
    max_blocks: int = 400
    target_rel_se: float = 0.05     # stop when tail-mass std errors reach this
    seed: int = 0


def _tail_to_eta(errors: float, total: int, confidence: float = 0.95):
    """Equivalent Gaussian precision from an empirical tail mass.

    Zero observed errors fall back to a one-sided Clopper-Pearson upper
    bound on the tail; the returned flag marks that saturation.
    """
    if errors > 0:
        tail = errors / total
        return float(ndtri(1 - tail) ** 2) if tail < 0.5 else 0.0, False
    upper = 1 - (1 - confidence) ** (1 / total)
    return float(ndtri(1 - upper) ** 2), True


def characterize_code(eta_x: float, mc: McParams = McParams(),
                      code: ConvCodeSpec = ConvCodeSpec()):
    """Monte-Carlo BER matching of the decoder at input precision eta_x.

    Simulates the binary-input AWGN channel y = s_bar + w with noise
    precision eta_x, decodes with BCJR on channel LLRs 2 eta_x y, and
    returns (eta_b, eta_0, eta_1, saturated) from the error-tail masses of
    the information bit and the two encoded output bits.
    """
    if eta_x <= 0:
        raise SeError("input precision must be positive")
    rng = np.random.default_rng(mc.seed)
    sigma = 1.0 / math.sqrt(eta_x)

    err = np.zeros(3)      # b, s0, s1
    tot = np.zeros(3, dtype=np.int64)
    for block in range(mc.max_blocks):
        info = rng.integers(0, 2, size=mc.block_len)
        coded = conv_encode(info, code)
        s_bar = 2.0 * coded - 1.0
        y = s_bar + sigma * rng.standard_normal(coded.size)
        info_llr, coded_llr = bcjr_decode(2 * eta_x * y, code)

        n_info = mc.block_len
        # symmetry: bit=0 errors mirror bit=1 errors, double the sample size
        b_wrong = (2 * info[:n_info] - 1) * info_llr[:n_info] < 0
        err[0] += np.sum(b_wrong) + 0.5 * np.sum(info_llr[:n_info] == 0)
        tot[0] += n_info
        for j in (0, 1):
            s = coded[j::2]
            l = coded_llr[j::2]
            err[1 + j] += np.sum((2 * s - 1) * l < 0) + 0.5 * np.sum(l == 0)
            tot[1 + j] += s.size

        if block + 1 >= mc.min_blocks:
            p = np.maximum(err, 1.0) / tot
            rel_se = np.sqrt((1 - p) / (np.maximum(err, 1.0)))
            if np.all(err > 0) and np.all(rel_se <= mc.target_rel_se):
                break

    etas = []
    saturated = False
    for e, t in zip(err, tot):
        eta, sat = _tail_to_eta(e, int(t))
        etas.append(eta)
        saturated = saturated or sat
    return etas[0], etas[1], etas[2], saturated


DEFAULT_GRID = np.logspace(-3, 3, 40)


@dataclass(frozen=True)
class CodeTransfer:
    """Sampled map eta_x -> (eta_b, eta_0, eta_1), interpolated log-linearly."""

    grid: np.ndarray
    eta_b: np.ndarray
    eta_0: np.ndarray
    eta_1: np.ndarray

    def _interp(self, table: np.ndarray, eta_x: float) -> float:
        eta_x = min(max(eta_x, self.grid[0]), self.grid[-1])
        return float(np.interp(math.log(eta_x), np.log(self.grid),
                               np.log(np.maximum(table, 1e-300))))

    def delta(self, eta_x: float) -> float:
        """Equivalent information-bit precision (the BER-matching map)."""
        return math.exp(self._interp(self.eta_b, eta_x))

    def output_precisions(self, eta_x: float):
        return (math.exp(self._interp(self.eta_0, eta_x)),
                math.exp(self._interp(self.eta_1, eta_x)))


def mmse_c(eta_x: float, transfer: CodeTransfer) -> float:
    """Coded MMSE under the Gaussian approximation of the decoder LLRs."""
    eta_0, eta_1 = transfer.output_precisions(eta_x)
    return 0.5 * (mmse_u(eta_0) + mmse_u(eta_1))


def _transfer_point(args):
    eta_x, mc, code = args
    return characterize_code(eta_x, mc, code)


def build_code_transfer(code: ConvCodeSpec = ConvCodeSpec(),
                        grid: np.ndarray = DEFAULT_GRID,
                        mc: McParams = McParams(),
                        cache_dir: str | None = None,
                        workers: int = 1) -> CodeTransfer:
    """Build (or load from cache) the Monte-Carlo code transfer table."""
    grid = np.asarray(grid, dtype=float)
    cache_path = None
    if cache_dir is not None:
        key = hashlib.sha256(repr((code.generators, code.constraint_length,
                                   grid.tolist(), mc)).encode()).hexdigest()[:16]
        cache_path = os.path.join(cache_dir, f"code_transfer_{key}.csv")
        if os.path.exists(cache_path):
            return load_code_transfer(cache_path)

    jobs = [(float(e), McParams(mc.block_len, mc.min_blocks, mc.max_blocks,
                                mc.target_rel_se, mc.seed + i), code)
            for i, e in enumerate(grid)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_transfer_point, jobs))
    else:
        rows = [_transfer_point(j) for j in jobs]

    eta_b = np.array([r[0] for r in rows])
    eta_0 = np.array([r[1] for r in rows])
    eta_1 = np.array([r[2] for r in rows])
    # BER matching is monotone; iron out Monte-Carlo wiggles
    eta_b = np.maximum.accumulate(eta_b)
    eta_0 = np.maximum.accumulate(eta_0)
    eta_1 = np.maximum.accumulate(eta_1)
    transfer = CodeTransfer(grid, eta_b, eta_0, eta_1)

    if cache_path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        save_code_transfer(transfer, cache_path, mc)
    return transfer


def save_code_transfer(transfer: CodeTransfer, path: str, mc: McParams = McParams()):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta_x", "eta_b", "eta_0", "eta_1",
                         "blocks", "block_len", "seed"])
        for i in range(transfer.grid.size):
            writer.writerow([transfer.grid[i], transfer.eta_b[i],
                             transfer.eta_0[i], transfer.eta_1[i],
                             mc.max_blocks, mc.block_len, mc.seed])


def load_code_transfer(path: str) -> CodeTransfer:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return CodeTransfer(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])


# ---------------------------------------------------------------------------
# SE trajectories
# ---------------------------------------------------------------------------

@dataclass
class SeTrace:
    process: str                    # "descent" | "ascent"
    eta_z: list = field(default_factory=list)
    eta_x: list = field(default_factory=list)
    v_x: list = field(default_factory=list)
    v_z: list = field(default_factory=list)
    ber: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_ber(self) -> float:
        return self.ber[-1]


def _clip(v: float) -> float:
    return min(max(v, V_MIN), V_MAX)


def _inv_diff(a: float, b: float, on_negative: float = V_MAX) -> float:
    """Clipped 1 / (1/a - 1/b); a non-positive difference yields on_negative."""
    d = 1.0 / a - 1.0 / b
    if d <= 0:
        return on_negative
    return _clip(1.0 / d)


def se_iterate(spectrum: SingularSpectrum, p_z: float, v_w: float, adc: AdcSpec,
               transfer: CodeTransfer | None, max_iters: int = 200,
               eta_x_init: float | None = None, tol: float = 1e-10) -> SeTrace:
    """Run the SE recursion; coded when a transfer table is given.

    ``eta_x_init`` forces the first x-stage precision (the ascent process);
    descent leaves it None.
    """
    process = "descent" if eta_x_init is None else "ascent"
    trace = SeTrace(process=process)
    v_x = 1.0
    v_z = p_z
    prev_v_x = None
    for t in range(max_iters):
        eta_z = _inv_diff(zeta(v_z, p_z, v_w, adc), 1.0 / v_z)
        if t == 0 and eta_x_init is not None:
            eta_x = eta_x_init
        else:
            eta_x = max((1.0 / psi_r(v_x, eta_z, spectrum) - 1.0) / v_x, V_MIN)
        if transfer is not None:
            m = mmse_c(eta_x, transfer)
            ber = float(norm.cdf(-math.sqrt(transfer.delta(eta_x))))
        else:
            m = mmse_u(eta_x)
            ber = float(norm.cdf(-math.sqrt(eta_x)))
        # a decoder beating the forced prior means a tiny posterior variance,
        # not an unbounded one, so the negative branch clips low here
        v_x = _inv_diff(m, 1.0 / eta_x, on_negative=V_MIN)
        v_z = min(_clip((1.0 / psi_f(v_x, eta_z, spectrum) - 1.0) / eta_z), p_z)

        trace.eta_z.append(eta_z)
        trace.eta_x.append(eta_x)
        trace.v_x.append(v_x)
        trace.v_z.append(v_z)
        trace.ber.append(ber)
        if prev_v_x is not None and abs(v_x - prev_v_x) < tol:
            trace.converged = True
            break
        prev_v_x = v_x
    return trace


def se_descent(spectrum: SingularSpectrum, p_z: float, v_w: float, adc: AdcSpec,
               transfer: CodeTransfer | None = None, max_iters: int = 200) -> SeTrace:
    return se_iterate(spectrum, p_z, v_w, adc, transfer, max_iters)


def se_ascent(spectrum: SingularSpectrum, p_z: float, v_w: float, adc: AdcSpec,
              transfer: CodeTransfer, eta_x_init: float = 1e4,
              max_iters: int = 200) -> SeTrace:
    return se_iterate(spectrum, p_z, v_w, adc, transfer, max_iters,
                      eta_x_init=eta_x_init)
