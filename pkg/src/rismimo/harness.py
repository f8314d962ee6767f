"""Monte-Carlo BER runs, SE curves, and parameter sweeps with CSV output.

Trials are independently seeded from (master seed, point index, trial index)
so results are bit-identical across worker counts; per-point aggregation is
plain integer addition of error and bit counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .coding import ConvCodeSpec, InterleaverSpec, conv_encode, interleave, map_qam4
from .detector import GecConfig, benchmark_aqnm, detect_gecc, detect_gecu
from .geometry import Scenario, SyntheticChannel, default_scenario, synthesize
from .quantizer import make_thresholds, quantize
from .se import (CodeTransfer, McParams, SingularSpectrum, build_code_transfer,
                 se_ascent, se_descent)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    detector: str = "gecc"               # gecc | gecu | aqnm
    adc_bits: int | None = 3
    codeword_len: int = 4800             # coded bits per codeword
    snr_mode: str = "snr"                # snr | txpower
    snr_grid_db: tuple[float, ...] = tuple(np.arange(-12.0, 2.1, 1.0))
    tx_power_grid_dbm: tuple[float, ...] = ()
    codewords_per_point: int = 200
    min_bit_errors: int = 100            # early stop once reached
    seed: int = 1234
    # damping keeps GEC-C stable on the ill-conditioned synthetic channels
    gec: GecConfig = GecConfig(max_iters=100, damping=0.3)
    code: ConvCodeSpec = ConvCodeSpec()
    eta_x_init: float = 1e4

    def __post_init__(self):
        if self.detector not in ("gecc", "gecu", "aqnm"):
            raise ConfigError(f"unknown detector {self.detector!r}")
        if self.snr_mode not in ("snr", "txpower"):
            raise ConfigError(f"unknown SNR mode {self.snr_mode!r}")
        if not self.grid():
            raise ConfigError("empty sweep grid")
        if self.codewords_per_point < 1:
            raise ConfigError("trial budget must be >= 1")

    def grid(self) -> tuple[float, ...]:
        return self.snr_grid_db if self.snr_mode == "snr" else self.tx_power_grid_dbm

    def config_hash(self) -> str:
        blob = repr((self.detector, self.adc_bits, self.codeword_len,
                     self.snr_mode, self.grid(), self.codewords_per_point,
                     self.min_bit_errors, self.seed, self.gec, self.code,
                     self.scenario)).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class BerPoint:
    snr_db: float
    errors: int = 0
    bits: int = 0
    se_descent_ber: float = math.nan
    se_ascent_ber: float = math.nan
    seconds: float = 0.0

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else math.nan


@dataclass
class BerCurve:
    label: str
    config_hash: str
    points: list[BerPoint] = field(default_factory=list)


def point_noise_level(channel: SyntheticChannel, config: ExperimentConfig,
                      value: float):
    """(v_w, tx scale) for one grid point.

    Mode "snr" rescales the noise so that P_z / v_w hits the grid value;
    mode "txpower" sweeps transmit power against the physical noise floor.
    Power is folded into the noise level rather than the symbol amplitude,
    keeping all variances near the well-scaled unit-symbol channel.
    """
    if config.snr_mode == "snr":
        return channel.power_z / 10 ** (value / 10), 1.0
    power_w = 10 ** ((value - 30) / 10)
    return channel.noise_w / power_w, 1.0


def scaled_channel(channel: SyntheticChannel, scale: float,
                   v_w: float) -> SyntheticChannel:
    """Fold a transmit-amplitude scale into the channel matrix.

    Keeps the detector's unit-power symbol prior valid in txpower mode.
    """
    if scale == 1.0:
        return channel.with_noise(v_w)
    return SyntheticChannel(scale * channel.matrix, scale * channel.panel_gains,
                            scale * channel.singular_values,
                            scale ** 2 * channel.power_z, v_w)


def trial_seed(master: int, point: int, trial: int) -> np.random.SeedSequence:
    digest = hashlib.sha256(f"{master}/{point}/{trial}".encode()).digest()
    return np.random.SeedSequence(int.from_bytes(digest[:8], "little"))


def run_trial(channel: SyntheticChannel, config: ExperimentConfig,
              point: int, trial: int):
    """One codeword through the channel and detector; returns (errors, bits)."""
    k = channel.n_tx
    n_coded = config.codeword_len
    n_symbols = n_coded // 2
    if n_symbols % k:
        raise ConfigError(
            f"codeword maps to {n_symbols} symbols, not divisible by {k} "
            f"antennas; pick codeword_len as a multiple of {2 * k}")
    n_uses = n_symbols // k
    n_info = config.code.info_length(n_coded)

    rng = np.random.default_rng(trial_seed(config.seed, point, trial))
    il = InterleaverSpec(n_coded, seed=int(rng.integers(2 ** 31)))
    info = rng.integers(0, 2, size=n_info)
    coded = conv_encode(info, config.code)
    symbols = map_qam4(interleave(coded, il))
    x = symbols.reshape(n_uses, k).T

    z = channel.matrix @ x
    noise = math.sqrt(channel.noise_w / 2) * (
        rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape))
    y = z + noise

    adc_scale = math.sqrt((channel.power_z + channel.noise_w) / 2)
    spec = make_thresholds(config.adc_bits, adc_scale)
    obs = quantize(y, spec)

    if config.detector == "gecc":
        bits, _ = detect_gecc(obs, channel, config.code, il, config.gec,
                              truth_bits=info)
        errors = int(np.sum(bits != info))
        return errors, n_info
    if config.detector == "aqnm":
        bits = benchmark_aqnm(obs, channel, config.code, il)
        errors = int(np.sum(bits != info))
        return errors, n_info
    # uncoded: symbol stream carries 2 raw bits per symbol, ignore the code
    hard, _ = detect_gecu(obs, channel, config.gec)
    tx_hard = (np.sign(x.real) + 1j * np.sign(x.imag)) / math.sqrt(2)
    errors = int(np.sum(hard.real * tx_hard.real < 0)
                 + np.sum(hard.imag * tx_hard.imag < 0))
    return errors, 2 * n_symbols


def _trial_job(args):
    channel, config, point, trial = args
    return run_trial(channel, config, point, trial)


def run_mc_ber(config: ExperimentConfig, workers: int = 1,
               transfer: CodeTransfer | None = None,
               batch: int = 8) -> BerCurve:
    """Monte-Carlo BER sweep with optional SE reference columns."""
    channel = synthesize(config.scenario)
    curve = BerCurve(label=config.detector, config_hash=config.config_hash())
    se_curve = None
    if transfer is not None:
        se_curve = run_se_curve(config, transfer, channel=channel)

    for p_idx, value in enumerate(config.grid()):
        v_w, scale = point_noise_level(channel, config, value)
        ch = scaled_channel(channel, scale, v_w)
        point = BerPoint(snr_db=value)
        if se_curve is not None:
            point.se_descent_ber = se_curve.points[p_idx].se_descent_ber
            point.se_ascent_ber = se_curve.points[p_idx].se_ascent_ber
        t0 = time.perf_counter()
        trial = 0
        while trial < config.codewords_per_point:
            n = min(batch if workers > 1 else 1,
                    config.codewords_per_point - trial)
            jobs = [(ch, config, p_idx, trial + i) for i in range(n)]
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_trial_job, jobs))
            else:
                results = [_trial_job(j) for j in jobs]
            for errors, bits in results:
                point.errors += errors
                point.bits += bits
            trial += n
            if point.errors >= config.min_bit_errors:
                break
        point.seconds = time.perf_counter() - t0
        curve.points.append(point)
    return curve


def run_se_curve(config: ExperimentConfig, transfer: CodeTransfer | None = None,
                 channel: SyntheticChannel | None = None,
                 max_iters: int = 200) -> BerCurve:
    """Descent and ascent SE predictions over the sweep grid."""
    if channel is None:
        channel = synthesize(config.scenario)
    spectrum = SingularSpectrum.of_channel(channel)
    curve = BerCurve(label=f"se-{config.detector}",
                     config_hash=config.config_hash())
    coded = config.detector != "gecu"
    if coded and transfer is None:
        raise ConfigError("coded SE requires a code transfer table")
    for value in config.grid():
        v_w, scale = point_noise_level(channel, config, value)
        p_z = scale ** 2 * channel.power_z
        sp = SingularSpectrum(scale * spectrum.values, spectrum.n_tx, spectrum.n_rx)
        adc = make_thresholds(config.adc_bits, math.sqrt((p_z + v_w) / 2))
        point = BerPoint(snr_db=value)
        if coded:
            desc = se_descent(sp, p_z, v_w, adc, transfer, max_iters)
            asc = se_ascent(sp, p_z, v_w, adc, transfer, config.eta_x_init,
                            max_iters)
            point.se_descent_ber = desc.final_ber
            point.se_ascent_ber = asc.final_ber
        else:
            desc = se_descent(sp, p_z, v_w, adc, None, max_iters)
            point.se_descent_ber = desc.final_ber
            point.se_ascent_ber = desc.final_ber
        curve.points.append(point)
    return curve


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def sweep_axis(config: ExperimentConfig, axis: str, values) -> dict:
    """Expand a config along one scenario axis; shared master seed."""
    out = {}
    for v in values:
        sc = config.scenario
        if axis == "L":
            sc = default_scenario(n_panels=int(v), ue_n1=sc.ue_array.n1,
                                  ue_n2=sc.ue_array.n2, bs_n1=sc.bs_array.n1,
                                  bs_n2=sc.bs_array.n2,
                                  panel_rows=sc.panels[0].rows,
                                  panel_cols=sc.panels[0].cols,
                                  phase_bits=sc.panels[0].phase_bits,
                                  direct_path=sc.direct_path)
            out[v] = replace(config, scenario=sc)
        elif axis == "K":
            sc = replace(sc, ue_array=replace(sc.ue_array, n1=int(v)))
            out[v] = replace(config, scenario=sc)
        elif axis == "B":
            out[v] = replace(config, adc_bits=None if v in (None, "inf") else int(v))
        elif axis == "phase_bits":
            bits = None if v in (None, "inf") else int(v)
            out[v] = replace(config, scenario=sc.with_phase_bits(bits))
        elif axis == "layout":
            (k1, k2), (n1, n2) = v
            sc = replace(sc, ue_array=replace(sc.ue_array, n1=k1, n2=k2),
                         bs_array=replace(sc.bs_array, n1=n1, n2=n2))
            out[str(v)] = replace(config, scenario=sc)
        elif axis == "ue_position":
            sc = replace(sc, ue_position=tuple(v))
            out[str(v)] = replace(config, scenario=sc)
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}")
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

CSV_FIELDS = ["curve", "config_hash", "snr_db", "ber", "errors", "bits",
              "se_descent_ber", "se_ascent_ber", "seconds"]


def write_curves(curves: list[BerCurve], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for curve in curves:
            for p in curve.points:
                writer.writerow([curve.label, curve.config_hash, p.snr_db,
                                 p.ber, p.errors, p.bits, p.se_descent_ber,
                                 p.se_ascent_ber, round(p.seconds, 3)])


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read an experiment description from TOML or JSON."""
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            raw = json.load(fh)
    return experiment_from_dict(raw)


def experiment_from_dict(raw: dict) -> ExperimentConfig:
    from .geometry import scenario_from_dict

    if "scenario" in raw and isinstance(raw["scenario"], dict):
        scenario = scenario_from_dict(raw["scenario"])
    else:
        s = raw.get("scenario_defaults", {})
        scenario = default_scenario(**s)

    adc = raw.get("adc_bits", 3)
    kwargs = {}
    grid = raw.get("snr_grid_db")
    if grid is not None:
        kwargs["snr_grid_db"] = tuple(grid)
    if "tx_power_grid_dbm" in raw:
        kwargs["tx_power_grid_dbm"] = tuple(raw["tx_power_grid_dbm"])
    gec_raw = raw.get("gec", {})
    return ExperimentConfig(
        scenario=scenario,
        detector=raw.get("detector", "gecc"),
        adc_bits=None if adc in (None, "inf") else int(adc),
        codeword_len=raw.get("codeword_len", 4800),
        snr_mode=raw.get("snr_mode", "snr"),
        codewords_per_point=raw.get("codewords_per_point", 200),
        min_bit_errors=raw.get("min_bit_errors", 100),
        seed=raw.get("seed", 1234),
        gec=GecConfig(max_iters=gec_raw.get("max_iters", 100),
                      damping=gec_raw.get("damping", 0.3)),
        **kwargs,
    )
