"""Scenario configuration: areas, users, radio parameters, mission knobs.

A scenario is a JSON document (see data/presets/*.json) that fully
determines a simulated deployment: survey area, carrier, SRS numerology
with its band plan, the UE fleet with per-user radio impairments, channel
mode, UAV platform parameters and mission-planner settings. Loading is
deterministic: per-UE orientation gains are drawn from the scenario seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import MODELS, UavState, UeProfile
from .waveform import N_SHIFTS, SrsConfig, WaveformError

SCENARIO_SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario documents."""


@dataclass(frozen=True)
class MissionSettings:
    """Mission-planner knobs carried by the scenario."""

    perimeter_margin_m: float = 20.0
    hex_radius_m: float = 15.0
    min_sample_spacing_m: float = 1.0
    speed_mps: float = 3.5
    altitude_m: float = 25.0
    acquisition_periods: int = 2


@dataclass(frozen=True)
class Scenario:
    """A fully resolved simulation scenario."""

    name: str
    seed: int
    carrier_hz: float
    noise_figure_db: float
    area_polygon: np.ndarray  # (V, 2) vertices, metres
    srs: SrsConfig  # band at k0 = band_k0[0]; other bands differ in k0 only
    band_k0: tuple[int, ...]
    ues: tuple[UeProfile, ...]
    mission: MissionSettings
    home_m: np.ndarray  # (3,) launch point

    @property
    def center(self) -> np.ndarray:
        return self.area_polygon.mean(axis=0)

    def band_config(self, band: int) -> SrsConfig:
        if not 0 <= band < len(self.band_k0):
            raise ScenarioError(f"band {band} outside plan {self.band_k0}")
        return SrsConfig(
            n_fft=self.srs.n_fft,
            cp_len=self.srs.cp_len,
            m_srs_rb=self.srs.m_srs_rb,
            k_tc=self.srs.k_tc,
            k0=self.band_k0[band],
            seq_id=self.srs.seq_id,
            mu=self.srs.mu,
            period_slots=self.srs.period_slots,
        )

    def band_ues(self, band: int) -> tuple[UeProfile, ...]:
        return tuple(u for u in self.ues if u.band_id == band)

    def assigned_shifts(self, band: int) -> tuple[int, ...]:
        return tuple(u.shift for u in self.band_ues(band))

    def uav_state(
        self, position_m, velocity_mps=(0.0, 0.0, 0.0)
    ) -> UavState:
        return UavState(
            position_m=tuple(float(v) for v in position_m),
            velocity_mps=tuple(float(v) for v in velocity_mps),
        )


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}: missing field {key!r}")
    return doc[key]


def load_scenario(source: str | Path | dict, seed: int | None = None) -> Scenario:
    """Parse and validate a scenario JSON document.

    source may be a path or an already-parsed dict. seed overrides the
    document seed (the CLI --seed flag). Per-UE orientation gains are drawn
    from the resolved seed, so two loads with equal inputs are identical.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"malformed scenario JSON {source}: {exc}") from exc
    else:
        doc = dict(source)
    where = doc.get("name", "scenario")
    version = doc.get("schema_version")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ScenarioError(
            f"{where}: schema_version {version!r} unsupported "
            f"(expected {SCENARIO_SCHEMA_VERSION})"
        )
    resolved_seed = int(doc.get("seed", 0) if seed is None else seed)

    poly = np.asarray(_require(doc, "area", where)["polygon"], dtype=np.float64)
    if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
        raise ScenarioError(f"{where}: area polygon needs >= 3 [x, y] vertices")

    srs_doc = _require(doc, "srs", where)
    band_k0 = tuple(int(k) for k in _require(srs_doc, "band_k0", where))
    if not band_k0:
        raise ScenarioError(f"{where}: band_k0 must list at least one band")
    try:
        base = SrsConfig(
            n_fft=int(srs_doc.get("n_fft", 128)),
            cp_len=int(srs_doc.get("cp_len", 9)),
            m_srs_rb=int(srs_doc.get("m_srs_rb", 4)),
            k0=band_k0[0],
            seq_id=int(srs_doc.get("seq_id", 1)),
            mu=int(srs_doc.get("mu", 1)),
            period_slots=int(srs_doc.get("period_slots", 80)),
        )
    except WaveformError as exc:
        raise ScenarioError(f"{where}: invalid srs block: {exc}") from exc
    width = base.m_srs  # occupied comb positions per band
    spans = []
    for k0 in band_k0:
        if k0 % base.k_tc:
            raise ScenarioError(f"{where}: band k0={k0} not on the comb grid")
        lo, hi = k0, k0 + base.k_tc * width
        if hi > base.n_fft:
            raise ScenarioError(f"{where}: band k0={k0} exceeds the FFT grid")
        spans.append((lo, hi))
    for i, (lo_i, hi_i) in enumerate(spans):
        for lo_j, hi_j in spans[:i]:
            if lo_i < hi_j and lo_j < hi_i:
                raise ScenarioError(f"{where}: bands overlap in subcarriers")

    mission_doc = doc.get("mission", {})
    mission = MissionSettings(
        perimeter_margin_m=float(mission_doc.get("perimeter_margin_m", 20.0)),
        hex_radius_m=float(mission_doc.get("hex_radius_m", 15.0)),
        min_sample_spacing_m=float(mission_doc.get("min_sample_spacing_m", 1.0)),
        speed_mps=float(mission_doc.get("speed_mps", 3.5)),
        altitude_m=float(mission_doc.get("altitude_m", 25.0)),
        acquisition_periods=int(mission_doc.get("acquisition_periods", 2)),
    )
    if mission.speed_mps > 6.0:
        raise ScenarioError(f"{where}: speed {mission.speed_mps} exceeds 6 m/s cap")
    ext = poly.max(axis=0) - poly.min(axis=0)
    if mission.perimeter_margin_m >= min(ext) / 2.0:
        raise ScenarioError(f"{where}: perimeter margin swallows the area")

    gain_lo, gain_hi = doc.get("ue_gain_range_dbi", (-3.0, 3.0))
    rng = np.random.default_rng(np.random.SeedSequence([resolved_seed, 0x5CE7A0]))
    ues = []
    seen = set()
    for ue_doc in _require(doc, "ues", where):
        ue_id = str(_require(ue_doc, "ue_id", where))
        band = int(_require(ue_doc, "band", where))
        shift = int(_require(ue_doc, "shift", where))
        if not 0 <= band < len(band_k0):
            raise ScenarioError(f"{where}: {ue_id} band {band} not in plan")
        if not 0 <= shift < N_SHIFTS:
            raise ScenarioError(f"{where}: {ue_id} shift {shift} outside grid")
        if (band, shift) in seen:
            raise ScenarioError(f"{where}: duplicate (band, shift) = {(band, shift)}")
        seen.add((band, shift))
        mode = str(ue_doc.get("mode", doc.get("channel_mode", "rural")))
        if mode not in MODELS:
            raise ScenarioError(f"{where}: unknown channel mode {mode!r}")
        pos = np.asarray(_require(ue_doc, "position_m", where), dtype=np.float64)
        if pos.shape != (3,):
            raise ScenarioError(f"{where}: {ue_id} position must be [x, y, z]")
        ues.append(
            UeProfile(
                ue_id=ue_id,
                position_m=pos,
                band_id=band,
                shift=shift,
                tx_power_dbm=float(ue_doc.get("tx_power_dbm", 20.0)),
                cfo_hz=float(ue_doc.get("cfo_hz", 0.0)),
                timing_advance_s=float(ue_doc.get("timing_advance_s", 0.0)),
                clock_drift_ppm=float(ue_doc.get("clock_drift_ppm", 0.0)),
                drift_correction_interval_s=float(
                    ue_doc.get("drift_correction_interval_s", 1.0)
                ),
                channel_mode=mode,
                antenna_gain_dbi=float(rng.uniform(gain_lo, gain_hi)),
            )
        )
    home_doc = doc.get("home_m")
    if home_doc is None:
        first = poly[0]
        home = np.array([first[0], first[1], mission.altitude_m])
    else:
        home = np.asarray(home_doc, dtype=np.float64)
        if home.shape != (3,):
            raise ScenarioError(f"{where}: home_m must be [x, y, z]")

    return Scenario(
        name=str(where),
        seed=resolved_seed,
        carrier_hz=float(_require(doc, "carrier_hz", where)),
        noise_figure_db=float(doc.get("noise_figure_db", 7.0)),
        area_polygon=poly,
        srs=base,
        band_k0=band_k0,
        ues=tuple(ues),
        mission=mission,
        home_m=home,
    )


def preset_names() -> tuple[str, ...]:
    base = resources.files("srsloc").joinpath("data/presets")
    return tuple(
        sorted(p.name[: -len(".json")] for p in base.iterdir() if p.name.endswith(".json"))
    )


def load_preset(name: str, seed: int | None = None) -> Scenario:
    """Load a packaged scenario preset by name (e.g. "rural", "urban")."""
    res = resources.files("srsloc").joinpath(f"data/presets/{name}.json")
    try:
        text = res.read_text()
    except FileNotFoundError as exc:
        raise ScenarioError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from exc
    return load_scenario(json.loads(text), seed=seed)
