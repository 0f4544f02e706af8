"""Synthetic propagation: geometry, pathloss, multipath, antennas, noise.

Two stylized environments are provided. Rural is free-space line of sight
with a strong Rician direct path and optional weak reflections; urban uses a
log-distance exponent of 3 with random blockage events on the direct path
and an exponential power-delay profile of Rayleigh reflections. Fading and
blockage are redrawn per call: receptions are separated by at least the
configured sample spacing, which exceeds half a wavelength at the supported
carriers, so snapshots decorrelate.

All captures are complex baseband on an absolute power scale (watts at the
antenna reference plane); thermal noise is added once per capture from the
configured receiver noise figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN_T0 = 1.380649e-23 * 290.0  # thermal noise density at 290 K, W/Hz
DIPOLE_PEAK_DBI = 2.15
_PATTERN_FLOOR = 1e-4  # numerical null floor for analytic patterns
_FRAC_TAPS = 33  # windowed-sinc fractional-delay filter length
_FRAC_WINDOW = np.kaiser(_FRAC_TAPS, 8.6)


class ChannelError(ValueError):
    """Raised for inconsistent capture grids or invalid channel inputs."""


@dataclass(frozen=True)
class IqCapture:
    """Complex baseband capture tied to a sampling grid.

    t0_s is the absolute time of sample 0; captures must share
    (sample_rate, t0, length) to be superposable.
    """

    samples: np.ndarray
    sample_rate_hz: float
    t0_s: float = 0.0
    antenna_id: int = 0
    center_freq_hz: float = 0.0

    def __len__(self) -> int:
        return len(self.samples)

    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class Antenna:
    """Receive antenna: mount offset, dipole axis and gain model.

    pattern_table, when given, is (az_deg, el_deg, gain_db) for bilinear
    interpolation; otherwise an analytic half-wave dipole pattern around
    `axis` is used with peak gain peak_gain_dbi.
    """

    offset_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    peak_gain_dbi: float = DIPOLE_PEAK_DBI
    pattern_table: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None


@dataclass(frozen=True)
class UeProfile:
    """Transmitting user: placement, SRS assignment and impairments."""

    ue_id: str
    position_m: tuple[float, float, float]
    band_id: int
    shift: int
    tx_power_dbm: float = 0.0
    cfo_hz: float = 0.0
    timing_advance_s: float = 0.0
    clock_drift_ppm: float = 0.0
    drift_correction_interval_s: float | None = 1.0
    channel_mode: str = "rural"
    antenna_gain_dbi: float = DIPOLE_PEAK_DBI

    def drift_delay_s(self, t_s: float) -> float:
        """Sawtooth clock-drift timing skew at absolute time t."""
        if self.clock_drift_ppm == 0.0:
            return 0.0
        skew = self.clock_drift_ppm * 1e-6
        if self.drift_correction_interval_s is None:
            return skew * t_s
        return skew * (t_s % self.drift_correction_interval_s)


@dataclass(frozen=True)
class UavState:
    """Receiver platform pose and antenna fit."""

    position_m: tuple[float, float, float]
    velocity_mps: tuple[float, float, float] = (0.0, 0.0, 0.0)
    antennas: tuple[Antenna, ...] = (
        Antenna(offset_m=(-0.15, 0.0, 0.0), axis=(1.0, 0.0, 0.0)),
        Antenna(offset_m=(0.15, 0.0, 0.0), axis=(0.0, 1.0, 0.0)),
    )


@dataclass(frozen=True)
class ChannelPath:
    """One propagation path at a receive antenna."""

    gain: complex  # complex amplitude (linear, includes antenna gains)
    delay_s: float  # one-way propagation delay
    doppler_hz: float


@dataclass(frozen=True)
class PropagationModel:
    """Statistical environment parameters for geometry_paths."""

    name: str
    pathloss_exponent: float
    rician_k_db: float | None  # direct-path Rician K factor; None = no fading
    n_reflections: int
    reflection_power_db: float  # first reflection relative to unfaded direct
    reflection_decay_db: float  # extra decay per successive reflection
    excess_delay_scale_s: float
    blockage_prob: float = 0.0
    blockage_db: float = 0.0


RURAL_MODEL = PropagationModel(
    name="rural",
    pathloss_exponent=2.0,
    rician_k_db=15.0,
    n_reflections=2,
    reflection_power_db=-18.0,
    reflection_decay_db=3.0,
    excess_delay_scale_s=2e-7,
)

URBAN_MODEL = PropagationModel(
    name="urban",
    pathloss_exponent=3.0,
    rician_k_db=6.0,
    n_reflections=4,
    reflection_power_db=-6.0,
    reflection_decay_db=2.0,
    excess_delay_scale_s=4e-7,
    blockage_prob=0.35,
    blockage_db=10.0,
)

MODELS = {m.name: m for m in (RURAL_MODEL, URBAN_MODEL)}


def pathloss_db(distance_m: float, carrier_hz: float, exponent: float = 2.0) -> float:
    """Log-distance pathloss with a 1 m free-space reference.

    exponent = 2 reproduces Friis exactly.
    """
    if distance_m <= 0.0:
        raise ChannelError("distance must be positive")
    d = max(distance_m, 1.0)
    pl_ref = 20.0 * math.log10(4.0 * math.pi * carrier_hz / SPEED_OF_LIGHT)
    return pl_ref + 10.0 * exponent * math.log10(d)


def dipole_pattern_db(cos_theta: float) -> float:
    """Normalized half-wave dipole pattern (0 dB broadside), floored null."""
    c = min(1.0, max(-1.0, cos_theta))
    s2 = 1.0 - c * c
    if s2 <= 0.0:
        return 10.0 * math.log10(_PATTERN_FLOOR)
    p = math.cos(0.5 * math.pi * c) ** 2 / s2
    return 10.0 * math.log10(max(p, _PATTERN_FLOOR))


def antenna_gain_db(antenna: Antenna, direction: np.ndarray) -> float:
    """Gain toward a unit direction vector (dB, includes peak gain).

    Tabulated patterns interpolate bilinearly over (azimuth, elevation)
    degrees and return table values exactly on grid points.
    """
    d = np.asarray(direction, dtype=np.float64)
    nrm = np.linalg.norm(d)
    if nrm == 0.0:
        raise ChannelError("zero direction vector")
    d = d / nrm
    if antenna.pattern_table is None:
        ax = np.asarray(antenna.axis, dtype=np.float64)
        ax = ax / np.linalg.norm(ax)
        return antenna.peak_gain_dbi + dipole_pattern_db(float(np.dot(ax, d)))
    az_grid, el_grid, table = antenna.pattern_table
    az = math.degrees(math.atan2(d[1], d[0])) % 360.0
    el = math.degrees(math.asin(min(1.0, max(-1.0, d[2]))))
    ia = np.clip(np.searchsorted(az_grid, az) - 1, 0, len(az_grid) - 2)
    ie = np.clip(np.searchsorted(el_grid, el) - 1, 0, len(el_grid) - 2)
    ta = (az - az_grid[ia]) / (az_grid[ia + 1] - az_grid[ia])
    te = (el - el_grid[ie]) / (el_grid[ie + 1] - el_grid[ie])
    ta, te = np.clip(ta, 0.0, 1.0), np.clip(te, 0.0, 1.0)
    g = (
        table[ia, ie] * (1 - ta) * (1 - te)
        + table[ia + 1, ie] * ta * (1 - te)
        + table[ia, ie + 1] * (1 - ta) * te
        + table[ia + 1, ie + 1] * ta * te
    )
    return float(g)


def geometry_paths(
    ue: UeProfile,
    uav: UavState,
    model: PropagationModel,
    carrier_hz: float,
    rng: np.random.Generator,
) -> list[list[ChannelPath]]:
    """Draw the multipath snapshot toward each UAV antenna.

    Per antenna: a direct path from geometry (pathloss, both antenna gains,
    Rician fluctuation, possible blockage) plus model.n_reflections Rayleigh
    taps on an exponential delay profile. Delays are one-way propagation
    delays; timing advance and clock drift are applied at propagate time.
    """
    out: list[list[ChannelPath]] = []
    ue_pos = np.asarray(ue.position_m, dtype=np.float64)
    uav_pos = np.asarray(uav.position_m, dtype=np.float64)
    vel = np.asarray(uav.velocity_mps, dtype=np.float64)
    speed = float(np.linalg.norm(vel))
    for antenna in uav.antennas:
        ant_pos = uav_pos + np.asarray(antenna.offset_m)
        vec = ue_pos - ant_pos
        dist = float(np.linalg.norm(vec))
        if dist <= 0.0:
            raise ChannelError(f"UE {ue.ue_id} coincides with antenna")
        u = vec / dist
        delay = dist / SPEED_OF_LIGHT
        gain_db = (
            -pathloss_db(dist, carrier_hz, model.pathloss_exponent)
            + antenna_gain_db(antenna, u)
            + ue.antenna_gain_dbi
        )
        if model.blockage_prob > 0.0 and rng.random() < model.blockage_prob:
            gain_db -= model.blockage_db
        amp = 10.0 ** (gain_db / 20.0)
        if model.rician_k_db is None:
            direct = amp * np.exp(2j * np.pi * rng.random())
        else:
            k = 10.0 ** (model.rician_k_db / 10.0)
            los = math.sqrt(k / (k + 1.0)) * np.exp(2j * np.pi * rng.random())
            scatter = math.sqrt(1.0 / (k + 1.0)) * (
                rng.normal(scale=math.sqrt(0.5)) + 1j * rng.normal(scale=math.sqrt(0.5))
            )
            direct = amp * (los + scatter)
        doppler = carrier_hz / SPEED_OF_LIGHT * float(np.dot(vel, u))
        paths = [ChannelPath(gain=complex(direct), delay_s=delay, doppler_hz=doppler)]
        for i in range(model.n_reflections):
            excess = float(rng.exponential(model.excess_delay_scale_s))
            p_db = gain_db + model.reflection_power_db - i * model.reflection_decay_db
            ray = (
                rng.normal(scale=math.sqrt(0.5)) + 1j * rng.normal(scale=math.sqrt(0.5))
            ) * 10.0 ** (p_db / 20.0)
            dop = (
                carrier_hz / SPEED_OF_LIGHT * speed * float(rng.uniform(-1.0, 1.0))
                if speed
                else 0.0
            )
            paths.append(
                ChannelPath(gain=complex(ray), delay_s=delay + excess, doppler_hz=dop)
            )
        out.append(paths)
    # sort per antenna by delay: direct arrives first by construction
    for paths in out:
        paths.sort(key=lambda p: p.delay_s)
    return out


def fractional_delay(x: np.ndarray, shift_samples: float) -> np.ndarray:
    """Delay x by a (possibly fractional, possibly negative) sample count.

    Fractional parts use a Kaiser-windowed sinc interpolator; output has the
    same length, content shifted out of range is lost.
    """
    n0 = math.floor(shift_samples)
    mu = shift_samples - n0
    out = np.zeros_like(x)
    n = len(x)
    if mu < 1e-9 or mu > 1.0 - 1e-9:
        n0 += round(mu)
        src_lo, src_hi = max(0, -n0), min(n, n - n0)
        if src_lo < src_hi:
            out[src_lo + n0 : src_hi + n0] = x[src_lo:src_hi]
        return out
    half = _FRAC_TAPS // 2
    taps = np.arange(_FRAC_TAPS) - half - mu
    h = np.sinc(taps) * _FRAC_WINDOW
    full = np.convolve(x, h)
    # full[j] interpolates x at j - half - mu; want out[k] = x(k - n0 - mu)
    j0 = half - n0
    lo, hi = max(0, -j0), min(n, len(full) - j0)
    if lo < hi:
        out[lo:hi] = full[lo + j0 : hi + j0]
    return out


def propagate(
    tx: IqCapture,
    paths: list[ChannelPath],
    ue: UeProfile,
    noise_figure_db: float | None = None,
    rng: np.random.Generator | None = None,
) -> IqCapture:
    """Apply a multipath channel (one antenna) to a transmitted capture.

    Each path delays tx by (delay - timing_advance + clock drift) seconds,
    scales by the complex path gain and rotates by the path Doppler plus the
    UE carrier-frequency offset. Drift is evaluated at the capture start
    (it moves well under a sample within any supported capture). Thermal
    noise at noise_figure_db is added when requested; pass None when
    several UEs will be superposed first.
    """
    if not paths:
        raise ChannelError("no propagation paths")
    fs = tx.sample_rate_hz
    n = len(tx.samples)
    t = tx.t0_s + np.arange(n) / fs
    drift = ue.drift_delay_s(tx.t0_s)
    out = np.zeros(n, dtype=np.complex128)
    for path in paths:
        tau = path.delay_s - ue.timing_advance_s + drift
        delayed = fractional_delay(tx.samples, tau * fs)
        f = path.doppler_hz + ue.cfo_hz
        out += path.gain * delayed * np.exp(2j * np.pi * f * t)
    cap = IqCapture(
        samples=out,
        sample_rate_hz=fs,
        t0_s=tx.t0_s,
        antenna_id=tx.antenna_id,
        center_freq_hz=tx.center_freq_hz,
    )
    if noise_figure_db is not None:
        if rng is None:
            raise ChannelError("noise requires an rng")
        cap = add_noise(cap, noise_figure_db, rng)
    return cap


def noise_power_w(sample_rate_hz: float, noise_figure_db: float) -> float:
    """Complex thermal noise power over the full sampling bandwidth."""
    return BOLTZMANN_T0 * sample_rate_hz * 10.0 ** (noise_figure_db / 10.0)


def add_noise(
    cap: IqCapture, noise_figure_db: float, rng: np.random.Generator
) -> IqCapture:
    """Add circular complex white noise at the receiver noise figure."""
    sigma2 = noise_power_w(cap.sample_rate_hz, noise_figure_db)
    n = len(cap.samples)
    noise = math.sqrt(sigma2 / 2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    return IqCapture(
        samples=cap.samples + noise,
        sample_rate_hz=cap.sample_rate_hz,
        t0_s=cap.t0_s,
        antenna_id=cap.antenna_id,
        center_freq_hz=cap.center_freq_hz,
    )


def superpose(captures: list[IqCapture]) -> IqCapture:
    """Coherent sum of captures sharing one sampling grid."""
    if not captures:
        raise ChannelError("nothing to superpose")
    ref = captures[0]
    total = np.zeros(len(ref.samples), dtype=np.complex128)
    for cap in captures:
        if (
            cap.sample_rate_hz != ref.sample_rate_hz
            or len(cap.samples) != len(ref.samples)
            or abs(cap.t0_s - ref.t0_s) > 0.5 / ref.sample_rate_hz
            or cap.antenna_id != ref.antenna_id
        ):
            raise ChannelError("captures on mismatched grids")
        total += cap.samples
    return IqCapture(
        samples=total,
        sample_rate_hz=ref.sample_rate_hz,
        t0_s=ref.t0_s,
        antenna_id=ref.antenna_id,
        center_freq_hz=ref.center_freq_hz,
    )


def tx_amplitude(n_fft: int, tx_power_dbm: float) -> float:
    """Scale factor making a unit-energy symbol body average tx_power_dbm."""
    p_w = 10.0 ** ((tx_power_dbm - 30.0) / 10.0)
    return math.sqrt(p_w * n_fft)
