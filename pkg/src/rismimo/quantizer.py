"""B-bit complex ADC model and the quantized-observation posterior of z.

Each real dimension uses a uniform mid-rise quantizer whose step minimizes
the quantization MSE for a unit Gaussian, scaled by the received standard
deviation.  Posterior moments are truncated-Gaussian moments computed with
erfcx-based expressions that stay finite in the deep tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfcx, ndtr

V_MIN = 1e-9
V_MAX = 1e9

_SQRT_2PI = math.sqrt(2 * math.pi)


class QuantizerError(ValueError):
    pass


@dataclass(frozen=True)
class AdcSpec:
    """Per-real-dimension quantizer; ``bits is None`` means unquantized."""

    bits: int | None
    thresholds: tuple[float, ...]   # strictly increasing, excludes +-inf
    scale: float = 1.0

    def __post_init__(self):
        if self.bits is not None:
            if self.bits < 1:
                raise QuantizerError("ADC resolution must be >= 1 bit")
            if len(self.thresholds) != 2 ** self.bits - 1:
                raise QuantizerError("need 2^B - 1 thresholds")
            if np.any(np.diff(self.thresholds) <= 0):
                raise QuantizerError("thresholds must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return 2 ** self.bits if self.bits is not None else 0

    def edges(self) -> np.ndarray:
        """Bin edges with the infinite end bins, length n_bins + 1."""
        return np.concatenate([[-np.inf], self.thresholds, [np.inf]])


@lru_cache(maxsize=None)
def optimal_uniform_step(bits: int) -> float:
    """MSE-optimal mid-rise step for a unit Gaussian input."""

    def mse(step):
        if step <= 0:
            return 1.0
        edges = step * (np.arange(1, 2 ** bits) - 2 ** (bits - 1))
        lo = np.concatenate([[-np.inf], edges])
        hi = np.concatenate([edges, [np.inf]])
        # per-bin E[(x - c)^2] with midpoint reconstruction c
        centers = step * (np.arange(2 ** bits) - 2 ** (bits - 1) + 0.5)
        centers[0] = lo[1] - step / 2
        centers[-1] = hi[-2] + step / 2
        with np.errstate(invalid="ignore"):
            phi_lo = np.where(np.isfinite(lo), np.exp(-lo ** 2 / 2) / _SQRT_2PI, 0.0)
            phi_hi = np.where(np.isfinite(hi), np.exp(-hi ** 2 / 2) / _SQRT_2PI, 0.0)
            z = ndtr(hi) - ndtr(lo)
            ex = phi_lo - phi_hi
            ex2 = z + np.where(np.isfinite(lo), lo * phi_lo, 0.0) \
                - np.where(np.isfinite(hi), hi * phi_hi, 0.0)
        return float(np.sum(ex2 - 2 * centers * ex + centers ** 2 * z))

    res = minimize_scalar(mse, bounds=(1e-3, 4.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def make_thresholds(bits: int | None, scale: float) -> AdcSpec:
    """Uniform mid-rise quantizer scaled to the per-dimension std dev."""
    if scale <= 0:
        raise QuantizerError("scale must be positive")
    if bits is None:
        return AdcSpec(None, (), scale)
    step = optimal_uniform_step(bits) * scale
    thresholds = step * (np.arange(1, 2 ** bits) - 2 ** (bits - 1))
    return AdcSpec(bits, tuple(thresholds), scale)


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantizedObs:
    """Observed bins (1-based, per real dimension) or exact values for B=inf."""

    spec: AdcSpec
    idx_re: np.ndarray | None = None
    idx_im: np.ndarray | None = None
    values: np.ndarray | None = None

    @property
    def quantized(self) -> bool:
        return self.values is None

    def bounds(self):
        """(lo_re, hi_re, lo_im, hi_im) bin edges for each observation."""
        edges = self.spec.edges()
        return (edges[self.idx_re - 1], edges[self.idx_re],
                edges[self.idx_im - 1], edges[self.idx_im])


def quantize(y: np.ndarray, spec: AdcSpec) -> QuantizedObs:
    """Map complex observations to bin indices; value <= r_b lands in bin b."""
    y = np.asarray(y, dtype=complex)
    if np.any(np.isnan(y)):
        raise QuantizerError("NaN in quantizer input")
    if spec.bits is None:
        return QuantizedObs(spec, values=y)
    thr = np.asarray(spec.thresholds)
    idx_re = np.searchsorted(thr, y.real, side="left") + 1
    idx_im = np.searchsorted(thr, y.imag, side="left") + 1
    return QuantizedObs(spec, idx_re=idx_re, idx_im=idx_im)


# ---------------------------------------------------------------------------
# Posterior moments
# ---------------------------------------------------------------------------

def _truncated_ratios(alpha, beta):
    """R = (phi(a) - phi(b)) / Z and S = (a phi(a) - b phi(b)) / Z.

    Z = Phi(b) - Phi(a).  Uses erfcx identities when the bin sits in one
    tail so that the ratios stay finite for arbitrarily remote bins.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    r = np.empty_like(alpha)
    s = np.empty_like(alpha)

    # reflect left-tail bins onto the right tail: R odd-symmetric, S even
    flip = np.where(np.isfinite(beta), beta, 0.0) + np.where(np.isfinite(alpha), alpha, 0.0) < 0
    lo = np.where(flip, -beta, alpha)
    hi = np.where(flip, -alpha, beta)

    tail = lo > 0
    # central / mixed-sign bins: direct evaluation is stable
    c_lo, c_hi = lo[~tail], hi[~tail]
    with np.errstate(invalid="ignore"):
        phi_lo = np.where(np.isfinite(c_lo), np.exp(-c_lo ** 2 / 2) / _SQRT_2PI, 0.0)
        phi_hi = np.where(np.isfinite(c_hi), np.exp(-c_hi ** 2 / 2) / _SQRT_2PI, 0.0)
        z = ndtr(c_hi) - ndtr(c_lo)
        z = np.maximum(z, 1e-300)
        r[~tail] = (phi_lo - phi_hi) / z
        s[~tail] = (np.where(np.isfinite(c_lo), c_lo * phi_lo, 0.0)
                    - np.where(np.isfinite(c_hi), c_hi * phi_hi, 0.0)) / z

    # right-tail bins: factor out exp(-lo^2/2) through erfcx
    t_lo, t_hi = lo[tail], hi[tail]
    e_lo = erfcx(t_lo / math.sqrt(2))
    with np.errstate(over="ignore"):
        decay = np.where(np.isfinite(t_hi),
                         np.exp(-(t_hi ** 2 - t_lo ** 2) / 2), 0.0)
    e_hi = np.where(np.isfinite(t_hi), erfcx(np.where(np.isfinite(t_hi), t_hi, 1.0) / math.sqrt(2)), 0.0)
    denom = np.maximum(e_lo - e_hi * decay, 1e-300)
    r[tail] = (2 / _SQRT_2PI) * (1.0 - decay) / denom
    s[tail] = (2 / _SQRT_2PI) * (t_lo - np.where(np.isfinite(t_hi), t_hi, 0.0) * decay) / denom

    r[flip] = -r[flip]
    return r, s


def truncated_gaussian_moments(m, tau, tau_w, lo, hi):
    """Posterior mean/variance of x ~ N(m, tau) given x + N(0, tau_w) in (lo, hi]."""
    sigma = np.sqrt(tau + tau_w)
    alpha = (lo - m) / sigma
    beta = (hi - m) / sigma
    r, s = _truncated_ratios(alpha, beta)
    mean = m + (tau / sigma) * r
    # law of total variance through y = x + noise: the bin shrinks Var(y)
    # from sigma^2 to sigma^2 (1 + s - r^2)
    var = tau + (tau ** 2 / (tau + tau_w)) * (s - r ** 2)
    return mean, np.maximum(var, 0.0)


def posterior_z(obs: QuantizedObs, r_1z: np.ndarray, v_1z: float, v_w: float):
    """Posterior mean and per-entry variance of z given the quantized bins.

    Prior: z ~ CN(r_1z, v_1z); observation: Q(z + CN(0, v_w)).  Real and
    imaginary dimensions are handled independently with half variances.
    """
    if v_1z <= 0:
        raise QuantizerError("prior variance must be positive")
    if v_w < 0:
        raise QuantizerError("noise level must be non-negative")
    tau = v_1z / 2
    tau_w = max(v_w, V_MIN) / 2

    if not obs.quantized:
        y = obs.values
        gain = tau / (tau + tau_w)
        mean = r_1z + gain * (y - r_1z)
        var = np.full(y.shape, 2 * tau * tau_w / (tau + tau_w))
        return mean, var

    lo_re, hi_re, lo_im, hi_im = obs.bounds()
    mean_re, var_re = truncated_gaussian_moments(r_1z.real, tau, tau_w, lo_re, hi_re)
    mean_im, var_im = truncated_gaussian_moments(r_1z.imag, tau, tau_w, lo_im, hi_im)
    return mean_re + 1j * mean_im, var_re + var_im


# ---------------------------------------------------------------------------
# Extrinsic update
# ---------------------------------------------------------------------------

def extrinsic_update(post_mean: np.ndarray, post_var: float,
                     prior_mean: np.ndarray, prior_var: float,
                     v_min: float = V_MIN, v_max: float = V_MAX):
    """Remove the prior contribution from a Gaussian posterior.

    Variances are clipped to [v_min, v_max]; the mean is always formed with
    the clipped variance so that clipping never flips its sign structure.
    """
    post_var = min(max(post_var, v_min), prior_var * (1 - 1e-12))
    ext_var = 1.0 / (1.0 / post_var - 1.0 / prior_var)
    ext_var = min(max(ext_var, v_min), v_max)
    ext_mean = ext_var * (post_mean / post_var - prior_mean / prior_var)
    return ext_mean, ext_var


def centroids(spec: AdcSpec) -> np.ndarray:
    """Per-bin conditional means of N(0, scale^2), used by the AQNM benchmark."""
    if spec.bits is None:
        raise QuantizerError("centroids undefined for the unquantized spec")
    edges = spec.edges()
    mean, _ = truncated_gaussian_moments(0.0, spec.scale ** 2, 0.0,
                                         edges[:-1], edges[1:])
    return mean


def reconstruct(obs: QuantizedObs) -> np.ndarray:
    """Analog-domain reconstruction: bin centroids, or the values for B=inf."""
    if not obs.quantized:
        return obs.values
    c = centroids(obs.spec)
    return c[obs.idx_re - 1] + 1j * c[obs.idx_im - 1]


@lru_cache(maxsize=None)
def aqnm_distortion(bits: int) -> float:
    """Quantizer distortion factor rho_B = E[(x - c(x))^2] for unit Gaussian.

    With conditional-mean reconstruction this equals 1 - E[c^2].
    """
    spec = make_thresholds(bits, 1.0)
    edges = spec.edges()
    z = ndtr(edges[1:]) - ndtr(edges[:-1])
    c = centroids(spec)
    return float(1.0 - np.sum(z * c ** 2))
