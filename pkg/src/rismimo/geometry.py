"""Synthetic UE -> RIS -> BS channel construction from 3-D indoor geometry.

Each reflecting panel applies an equal-gain-combining (EGC) phase profile so
that its scalar response equals the reflector count M; the effective MIMO
matrix is the sum of the resulting rank-1 links plus an optional direct path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Array geometry and steering vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna array on the x-y plane: linear along x or y, or rectangular.

    ``n1`` counts elements along x, ``n2`` along y; spacings are in
    wavelengths.  A linear layout is expressed by setting the other count
    to 1.
    """

    n1: int
    n2: int = 1
    spacing: float = 0.5
    spacing2: float | None = None

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise GeometryError("element counts must be >= 1")
        if self.spacing <= 0 or (self.spacing2 is not None and self.spacing2 <= 0):
            raise GeometryError("element spacing must be positive")

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def dy(self) -> float:
        return self.spacing if self.spacing2 is None else self.spacing2


def _linear_phase(n: int, spacing: float, direction_cosine: float) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * spacing * k * direction_cosine)


def steering_vector(geometry: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-modulus steering vector for a planar array.

    Sign convention: entry k of the x-axis linear factor is
    exp(-j 2 pi d k cos(az) sin(el)).  Rectangular layouts are the Kronecker
    product of the x- and y-axis linear factors.
    """
    if not (math.isfinite(azimuth) and math.isfinite(elevation)):
        raise GeometryError("steering angles must be finite")
    vx = _linear_phase(geometry.n1, geometry.spacing, math.cos(azimuth) * math.sin(elevation))
    vy = _linear_phase(geometry.n2, geometry.dy, math.sin(azimuth) * math.sin(elevation))
    return np.kron(vx, vy)


def direction_angles(origin: np.ndarray, target: np.ndarray, normal_sign: float = 1.0):
    """(azimuth, elevation) of the line origin -> target.

    Azimuth is measured in the x-y plane from +x; elevation from the array
    broadside normal, which points along +z for floor-mounted arrays and -z
    (``normal_sign = -1``) for ceiling panels facing down.
    """
    d = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    r = np.linalg.norm(d)
    if r == 0:
        raise GeometryError("origin and target coincide")
    azimuth = math.atan2(d[1], d[0])
    elevation = math.acos(np.clip(normal_sign * d[2] / r, -1.0, 1.0))
    return azimuth, elevation


# ---------------------------------------------------------------------------
# RIS panels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RisPanel:
    """One reflecting panel: rows x cols unit cells on the ceiling plane."""

    rows: int
    cols: int
    position: tuple[float, float, float]
    cell_dx: float = 0.1          # cell size along x, wavelengths
    cell_dy: float = 0.1
    reflection: float = 0.9       # amplitude reflection coefficient, (0, 1]
    pattern_exp: float = 1.0      # radiation pattern cos^q(elevation)
    phase_bits: int | None = None  # None = continuous phase shift

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise GeometryError("panel must have at least one reflector")
        if not 0 < self.reflection <= 1:
            raise GeometryError("reflection coefficient must be in (0, 1]")
        if self.phase_bits is not None and self.phase_bits < 1:
            raise GeometryError("phase resolution must be >= 1 bit")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.rows, self.cols, self.cell_dx, self.cell_dy)


def egc_phase_profile(departure: np.ndarray, incident: np.ndarray) -> np.ndarray:
    """Per-reflector phase factors aligning incident and departing waves.

    With a = departure steering, b = incident steering, the profile satisfies
    a^H diag(omega) b = M exactly.
    """
    a = np.asarray(departure)
    b = np.asarray(incident)
    if a.shape != b.shape:
        raise GeometryError("steering vectors must have equal length")
    return a * np.conj(b)


def quantize_phase(omega: np.ndarray, bits: int) -> np.ndarray:
    """Snap each unit-modulus entry to the nearest of 2^bits uniform phases.

    Ties break toward the smaller grid index.
    """
    if bits < 1:
        raise GeometryError("phase resolution must be >= 1 bit")
    n_levels = 2 ** bits
    step = 2 * np.pi / n_levels
    phase = np.angle(omega) % (2 * np.pi)
    idx = np.floor(phase / step + 0.5).astype(int)
    # exact half-step ties go to the lower index
    ties = np.isclose((phase / step + 0.5) % 1.0, 0.0)
    idx[ties & (idx > 0)] -= 1
    return np.exp(1j * step * (idx % n_levels))


def cell_gain(pattern_exp: float) -> float:
    """Antenna gain of a unit cell with power pattern cos^q over a hemisphere."""
    if pattern_exp < 0:
        raise GeometryError("pattern exponent must be >= 0")
    from scipy.integrate import quad

    integral, _ = quad(
        lambda el: math.cos(el) ** pattern_exp * math.sin(el), 0.0, math.pi / 2,
        epsrel=1e-10,
    )
    return 4 * math.pi / (2 * math.pi * integral)


def path_loss_far_field(panel: RisPanel, ue_elevation: float, bs_elevation: float,
                        d_ue: float, d_bs: float, wavelength: float,
                        g_t: float = 1.0, g_r: float = 1.0) -> float:
    """Amplitude gain M*beta of one panel in the far-field beamforming regime.

    Elevations are the incidence/departure angles at the panel, measured from
    its broadside normal.
    """
    if d_ue <= 0 or d_bs <= 0:
        raise GeometryError("propagation distances must be positive")
    q = panel.pattern_exp
    g = cell_gain(q)
    f_ue = math.cos(ue_elevation) ** q
    f_bs = math.cos(bs_elevation) ** q
    dx = panel.cell_dx * wavelength
    dy = panel.cell_dy * wavelength
    beta = math.sqrt(
        g_t * g_r * g * dx * dy * wavelength ** 2 * f_ue * f_bs
        * panel.reflection ** 2
        / (64 * math.pi ** 3 * d_ue ** 2 * d_bs ** 2)
    )
    return panel.size * beta


def direct_path_gain(d_ue_bs: float, wavelength: float,
                     g_t: float = 1.0, g_r: float = 1.0) -> float:
    """Free-space amplitude gain of the UE -> BS line-of-sight path."""
    if d_ue_bs <= 0:
        raise GeometryError("UE-BS distance must be positive")
    return math.sqrt(g_t * g_r * wavelength ** 2 / (16 * math.pi ** 2 * d_ue_bs ** 2))


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Indoor deployment: BS and UE arrays plus ceiling-mounted panels."""

    room: tuple[float, float, float]
    bs_position: tuple[float, float, float]
    bs_array: ArrayGeometry
    ue_position: tuple[float, float, float]
    ue_array: ArrayGeometry
    panels: tuple[RisPanel, ...]
    carrier_hz: float = 28e9
    bandwidth_hz: float = 100e6
    noise_psd_dbm_hz: float = -174.0
    direct_path: bool = False

    def __post_init__(self):
        if self.carrier_hz <= 0:
            raise GeometryError("carrier frequency must be positive")
        if not self.panels:
            raise GeometryError("at least one panel is required")
        for pos in (self.bs_position, self.ue_position, *(p.position for p in self.panels)):
            if not all(0 <= c <= r for c, r in zip(pos, self.room)):
                raise GeometryError(f"position {pos} outside room {self.room}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power_w(self) -> float:
        # PSD (dBm/Hz) integrated over the bandwidth, in watts
        return 10 ** ((self.noise_psd_dbm_hz - 30) / 10) * self.bandwidth_hz

    def with_phase_bits(self, bits: int | None) -> "Scenario":
        return replace(self, panels=tuple(replace(p, phase_bits=bits) for p in self.panels))


def circle_deployment(n_panels: int, radius: float, room: tuple[float, float, float],
                      rows: int = 90, cols: int = 90, phase_bits: int | None = None,
                      **panel_kwargs) -> tuple[RisPanel, ...]:
    """Place panels uniformly on a ceiling circle centred in the room."""
    cx, cy = room[0] / 2, room[1] / 2
    panels = []
    for i in range(n_panels):
        ang = 2 * np.pi * i / n_panels
        pos = (cx + radius * math.cos(ang), cy + radius * math.sin(ang), room[2])
        panels.append(RisPanel(rows, cols, pos, phase_bits=phase_bits, **panel_kwargs))
    return tuple(panels)


def default_scenario(n_panels: int = 10, ue_n1: int = 8, ue_n2: int = 1,
                     bs_n1: int = 16, bs_n2: int = 1, panel_rows: int = 30,
                     panel_cols: int = 30, phase_bits: int | None = None,
                     direct_path: bool = False,
                     ue_position: tuple[float, float, float] = (1.0, 4.0, 1.0),
                     bs_position: tuple[float, float, float] = (2.0, 1.0, 2.0)) -> Scenario:
    """Desk-scale indoor room with panels on a radius-2.8 m ceiling circle."""
    room = (6.0, 6.0, 3.0)
    return Scenario(
        room=room,
        bs_position=bs_position,
        bs_array=ArrayGeometry(bs_n1, bs_n2),
        ue_position=ue_position,
        ue_array=ArrayGeometry(ue_n1, ue_n2),
        panels=circle_deployment(n_panels, 2.8, room, rows=panel_rows,
                                 cols=panel_cols, phase_bits=phase_bits),
        direct_path=direct_path,
    )


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticChannel:
    """Effective N x K matrix with its singular spectrum and power summary."""

    matrix: np.ndarray
    panel_gains: np.ndarray        # amplitude gain M*beta_i per panel
    singular_values: np.ndarray    # sorted descending
    power_z: float                 # tr(A A^H) / N
    noise_w: float

    @property
    def n_rx(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_tx(self) -> int:
        return self.matrix.shape[1]

    @property
    def alpha(self) -> float:
        return self.n_tx / self.n_rx

    def with_noise(self, noise_w: float) -> "SyntheticChannel":
        return replace(self, noise_w=noise_w)


def panel_response(panel: RisPanel, departure: np.ndarray, incident: np.ndarray) -> complex:
    """Scalar a^H diag(omega_hat) b after optional phase quantization."""
    omega = egc_phase_profile(departure, incident)
    if panel.phase_bits is not None:
        omega = quantize_phase(omega, panel.phase_bits)
    return np.vdot(departure, omega * incident)


def synthesize(scenario: Scenario) -> SyntheticChannel:
    """Build the synthetic channel matrix for a scenario."""
    lam = scenario.wavelength
    n = scenario.bs_array.size
    k = scenario.ue_array.size
    ue = np.asarray(scenario.ue_position, dtype=float)
    bs = np.asarray(scenario.bs_position, dtype=float)

    a_mat = np.zeros((n, k), dtype=complex)
    gains = np.zeros(len(scenario.panels))
    for i, panel in enumerate(scenario.panels):
        ris = np.asarray(panel.position, dtype=float)
        d_ue = np.linalg.norm(ris - ue)
        d_bs = np.linalg.norm(bs - ris)
        if d_ue == 0 or d_bs == 0:
            raise GeometryError("UE or BS colocated with a panel")

        az_ue, el_ue = direction_angles(ue, ris)            # UE departure
        az_bs, el_bs = direction_angles(bs, ris)            # BS arrival
        az_in, el_in = direction_angles(ris, ue, normal_sign=-1.0)   # panel incidence
        az_out, el_out = direction_angles(ris, bs, normal_sign=-1.0)  # panel departure

        h_i = steering_vector(scenario.ue_array, az_ue, el_ue)
        g_i = steering_vector(scenario.bs_array, az_bs, el_bs)
        b_i = steering_vector(panel.geometry(), az_in, el_in)
        a_i = steering_vector(panel.geometry(), az_out, el_out)

        m_beta = path_loss_far_field(panel, el_in, el_out, d_ue, d_bs, lam)
        gains[i] = m_beta
        response = panel_response(panel, a_i, b_i)
        a_mat += (m_beta / panel.size) * response * np.outer(g_i, h_i.conj())

    if scenario.direct_path:
        d_los = np.linalg.norm(bs - ue)
        if d_los == 0:
            raise GeometryError("UE and BS coincide")
        az_h, el_h = direction_angles(ue, bs)
        az_g, el_g = direction_angles(bs, ue)
        h_los = steering_vector(scenario.ue_array, az_h, el_h)
        g_los = steering_vector(scenario.bs_array, az_g, el_g)
        a_mat += direct_path_gain(d_los, lam) * np.outer(g_los, h_los.conj())

    a_mat /= math.sqrt(k)
    sv = np.linalg.svd(a_mat, compute_uv=False)
    p_z = float(np.sum(sv ** 2) / n)
    return SyntheticChannel(a_mat, gains, sv, p_z, scenario.noise_power_w)


def spectrum_stats(channel: SyntheticChannel):
    """(singular values, condition number, P_z) of a synthesized channel."""
    sv = channel.singular_values
    smallest = sv[-1]
    cond = float(sv[0] / smallest) if smallest > 0 else math.inf
    return sv, cond, channel.power_z


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def load_scenario(path: str) -> Scenario:
    """Read a scenario from a TOML or JSON file."""
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:       # python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            raw = json.load(fh)
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    room = tuple(raw["room"])
    phase_bits = raw.get("phase_bits")

    def _array(d):
        return ArrayGeometry(d.get("n1", 1), d.get("n2", 1),
                             d.get("spacing", 0.5), d.get("spacing2"))

    panels = []
    for p in raw.get("ris", []):
        panels.append(RisPanel(
            rows=p.get("rows", 30), cols=p.get("cols", 30),
            position=tuple(p["position"]),
            cell_dx=p.get("cell_dx", 0.1), cell_dy=p.get("cell_dy", 0.1),
            reflection=p.get("reflection", 0.9),
            pattern_exp=p.get("pattern_exp", 1.0),
            phase_bits=p.get("phase_bits", phase_bits),
        ))
    if not panels and "circle" in raw:
        c = raw["circle"]
        panels = list(circle_deployment(
            c["count"], c.get("radius", 2.8), room,
            rows=c.get("rows", 30), cols=c.get("cols", 30), phase_bits=phase_bits))

    return Scenario(
        room=room,
        bs_position=tuple(raw["bs"]["position"]),
        bs_array=_array(raw["bs"]),
        ue_position=tuple(raw["ue"]["position"]),
        ue_array=_array(raw["ue"]),
        panels=tuple(panels),
        carrier_hz=raw.get("carrier_hz", 28e9),
        bandwidth_hz=raw.get("bandwidth_hz", 100e6),
        noise_psd_dbm_hz=raw.get("noise_psd_dbm_hz", -174.0),
        direct_path=raw.get("direct_path", False),
    )


def export_channel(channel: SyntheticChannel, csv_path: str, meta_path: str | None = None):
    """Write the matrix as interleaved real/imag CSV plus a metadata sidecar."""
    a = channel.matrix
    flat = np.empty((a.shape[0], 2 * a.shape[1]))
    flat[:, 0::2] = a.real
    flat[:, 1::2] = a.imag
    np.savetxt(csv_path, flat, delimiter=",")
    meta = {
        "n_rx": channel.n_rx,
        "n_tx": channel.n_tx,
        "singular_values": channel.singular_values.tolist(),
        "power_z": channel.power_z,
        "noise_w": channel.noise_w,
        "panel_gains": channel.panel_gains.tolist(),
    }
    with open(meta_path or csv_path + ".json", "w") as fh:
        json.dump(meta, fh, indent=2)
