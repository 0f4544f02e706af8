"""Autonomous survey mission simulation.

The mission flies a fixed phase sequence — to_center, perimeter sweep,
one hexagonal refinement pass per detected user, return_home — while a
simulated multi-antenna receiver samples sounding transmissions along the
path. Each reception runs the full receive chain (channel, synchronized
despreading, tone extraction, cleaning) and appends one measurement row;
phase boundaries trigger the localization stages.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import ident, locate, sync
from .scenario import Scenario
from .waveform import SrsConfig, synthesize_symbol

PHASE_TO_CENTER = "to_center"
PHASE_PERIMETER = "perimeter"
PHASE_REFINE = "refine"
PHASE_RETURN = "return_home"
PHASE_DONE = "done"
_PHASE_RANK = {
    PHASE_TO_CENTER: 0,
    PHASE_PERIMETER: 1,
    PHASE_REFINE: 2,
    PHASE_RETURN: 3,
    PHASE_DONE: 4,
}

MISSION_REPORT_SCHEMA_VERSION = 1
_WINDOW_GUARD = 16  # samples of slack either side of the expected symbol
_MAX_SIM_SECONDS = 3600.0
_MP_PRUNE_NATS = 30.0  # see matching_pursuit: worst legitimate hump ~24 nats


class MissionError(RuntimeError):
    """Raised when mission planning or execution cannot proceed."""


@dataclass(frozen=True)
class MissionPlan:
    """Static mission geometry and motion limits."""

    area_polygon: np.ndarray
    center: np.ndarray
    altitude_m: float = 25.0
    perimeter_margin_m: float = 20.0
    hex_radius_m: float = 15.0
    speed_mps: float = 3.5
    min_sample_spacing_m: float = 1.0

    def __post_init__(self):
        if self.speed_mps > 6.0:
            raise MissionError(f"speed {self.speed_mps} m/s exceeds the 6 m/s cap")
        if self.speed_mps <= 0.0:
            raise MissionError("speed must be positive")
        poly = np.asarray(self.area_polygon, dtype=np.float64)
        if poly.ndim != 2 or len(poly) < 3 or poly.shape[1] != 2:
            raise MissionError("area polygon needs >= 3 2-D vertices")
        ext = poly.max(axis=0) - poly.min(axis=0)
        if min(ext) <= 0.0:
            raise MissionError("degenerate area polygon")
        if self.perimeter_margin_m >= min(ext) / 2.0:
            raise MissionError("perimeter margin larger than half the area extent")


@dataclass
class Measurement:
    """One processed reception for one band."""

    t_s: float
    period: int
    band: int
    position_m: tuple[float, float, float]
    phase: str
    gamma_db: np.ndarray  # (n_antennas, n_assigned_ues)
    eps_hat: np.ndarray  # (n_antennas, n_assigned_ues)
    missed: np.ndarray  # (n_antennas, n_assigned_ues) bool
    n_extra: int


@dataclass
class _BandReceiver:
    cfg: SrsConfig
    assigned: tuple[int, ...]
    state: sync.SyncState | None = None


@dataclass
class MissionState:
    """Mutable execution state advanced by step()."""

    plan: MissionPlan
    scenario: Scenario
    rng: np.random.Generator
    phase: str = PHASE_TO_CENTER
    t_s: float = 0.0
    position_m: np.ndarray = None  # type: ignore[assignment]
    waypoints: deque = field(default_factory=deque)
    refine_queue: deque = field(default_factory=deque)
    refining_ue: str | None = None
    measurement_log: list[Measurement] = field(default_factory=list)
    initial_estimates: dict = field(default_factory=dict)
    refined_estimates: dict = field(default_factory=dict)
    phase_started_s: float = 0.0
    phase_durations_s: dict = field(default_factory=dict)
    last_period: int = -1
    last_sample_pos: np.ndarray | None = None
    receivers: dict = field(default_factory=dict)
    phase_history: list[str] = field(default_factory=list)
    symbol_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.position_m is None:
            self.position_m = np.asarray(self.scenario.home_m, dtype=np.float64)
        self.position_m = self.position_m.astype(np.float64).copy()
        self.phase_history.append(self.phase)


def _resample_path(vertices: np.ndarray, spacing: float, closed: bool) -> np.ndarray:
    """Waypoints along a polyline at intervals <= spacing, vertices kept."""
    if spacing <= 0.0:
        raise MissionError("waypoint spacing must be positive")
    pts = [np.asarray(vertices[0], dtype=np.float64)]
    seq = list(vertices[1:]) + ([vertices[0]] if closed else [])
    for vertex in seq:
        prev = pts[-1]
        seg = np.asarray(vertex, dtype=np.float64) - prev
        dist = float(np.linalg.norm(seg))
        if dist == 0.0:
            continue
        n_steps = max(1, math.ceil(dist / spacing))
        for i in range(1, n_steps + 1):
            pts.append(prev + seg * (i / n_steps))
    return np.asarray(pts)


def _inset_convex(polygon: np.ndarray, margin: float) -> np.ndarray:
    """Shrink a convex polygon by moving every edge inward by margin."""
    poly = np.asarray(polygon, dtype=np.float64)
    # enforce counter-clockwise orientation so inward normals are consistent
    area2 = float(
        np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    )
    if area2 < 0.0:
        poly = poly[::-1]
    n = len(poly)
    lines = []
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        d = b - a
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise MissionError("repeated polygon vertices")
        inward = np.array([-d[1], d[0]]) / norm
        lines.append((a + inward * margin, d / norm))
    out = []
    for i in range(n):
        (p1, d1), (p2, d2) = lines[(i - 1) % n], lines[i]
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(cross) < 1e-12:
            continue  # collinear edges merge after offsetting
        t = ((p2[0] - p1[0]) * d2[1] - (p2[1] - p1[1]) * d2[0]) / cross
        out.append(p1 + t * d1)
    out = np.asarray(out)
    if len(out) < 3 or _polygon_area(out) < 1e-9:
        raise MissionError(f"margin {margin} m collapses the survey polygon")
    # an over-large margin makes offset edges cross past the centre and
    # re-intersect as a phantom polygon with positive area; reject unless
    # every vertex is on the inward side of every offset line
    tol = 1e-9 * max(1.0, float(np.abs(out).max()))
    for p, d in lines:
        inward = np.array([-d[1], d[0]])
        if np.any((out - p) @ inward < -tol):
            raise MissionError(f"margin {margin} m collapses the survey polygon")
    return out


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def plan_perimeter(
    area_polygon: np.ndarray, margin_m: float, spacing_m: float,
    entry_point: np.ndarray | None = None,
) -> np.ndarray:
    """Closed sweep along the margin-inset boundary of a convex survey area.

    Waypoints sit at most spacing_m apart; the loop is rotated to start
    (and therefore end) at the point nearest entry_point, which defaults to
    the area center — the point the mission approaches from.
    """
    poly = np.asarray(area_polygon, dtype=np.float64)
    inset = _inset_convex(poly, margin_m) if margin_m > 0.0 else poly
    loop = _resample_path(inset, spacing_m, closed=True)[:-1]  # drop dup start
    ref = np.asarray(
        entry_point if entry_point is not None else poly.mean(axis=0),
        dtype=np.float64,
    )
    start = int(np.argmin(np.linalg.norm(loop - ref, axis=1)))
    rotated = np.roll(loop, -start, axis=0)
    return np.vstack([rotated, rotated[:1]])  # close the loop


def plan_hex(
    center_est: np.ndarray, radius_m: float, spacing_m: float
) -> np.ndarray:
    """Hexagonal refinement lap around a preliminary position estimate."""
    if radius_m < 0.0:
        raise MissionError("hex radius must be non-negative")
    c = np.asarray(center_est, dtype=np.float64)[:2]
    if radius_m == 0.0:
        return c[None, :]
    angles = np.arange(6) * (math.pi / 3.0)
    verts = c + radius_m * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return _resample_path(verts, spacing_m, closed=True)


def perimeter_length(waypoints: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(waypoints, axis=0), axis=1).sum())


def _uav_at(state: MissionState, velocity: np.ndarray) -> ch.UavState:
    return ch.UavState(
        position_m=tuple(float(v) for v in state.position_m),
        velocity_mps=tuple(float(v) for v in velocity),
    )


def _symbol_cache(state: MissionState, band: int, shift: int) -> np.ndarray:
    key = (band, shift)
    cached = state.symbol_cache.get(key)
    if cached is None:
        cached = synthesize_symbol(state.scenario.band_config(band), shift).samples
        state.symbol_cache[key] = cached
    return cached


def _simulate_reception(
    state: MissionState,
    uav: ch.UavState,
    period: int,
    window_start: int,
    window_len: int,
) -> list[np.ndarray]:
    """Received samples around one sounding period, one array per antenna.

    Every user transmits its symbol on the shared period grid; the channel
    applies per-user geometry, impairments and antenna response, with one
    multipath snapshot per user covering all antennas. Noise is added once
    per antenna on the composite.
    """
    scn = state.scenario
    fs = scn.srs.sample_rate_hz
    n_ant = len(uav.antennas)
    acc = [np.zeros(window_len, dtype=np.complex128) for _ in range(n_ant)]
    for band in range(len(scn.band_k0)):
        cfg = scn.band_config(band)
        for ue in scn.band_ues(band):
            symbol = _symbol_cache(state, band, ue.shift)
            amp = ch.tx_amplitude(cfg.n_fft, ue.tx_power_dbm)
            tx_samples = np.zeros(window_len, dtype=np.complex128)
            n_nom = period * cfg.period_samples - window_start
            if not 0 <= n_nom <= window_len - len(symbol):
                raise MissionError("symbol window misplanned")
            tx_samples[n_nom : n_nom + len(symbol)] = amp * symbol
            per_antenna = ch.geometry_paths(
                ue, uav, ch.MODELS[ue.channel_mode], scn.carrier_hz, state.rng
            )
            for a in range(n_ant):
                tx = ch.IqCapture(
                    samples=tx_samples,
                    sample_rate_hz=fs,
                    t0_s=window_start / fs,
                    antenna_id=a,
                    center_freq_hz=scn.carrier_hz,
                )
                acc[a] += ch.propagate(tx, per_antenna[a], ue).samples
    out = []
    for a in range(n_ant):
        cap = ch.IqCapture(
            samples=acc[a],
            sample_rate_hz=fs,
            t0_s=window_start / fs,
            antenna_id=a,
            center_freq_hz=scn.carrier_hz,
        )
        out.append(ch.add_noise(cap, scn.noise_figure_db, state.rng).samples)
    return out


def _acquire(state: MissionState) -> None:
    """Initial coarse synchronization from a multi-period capture.

    Simulating tens of milliseconds sample-by-sample is wasteful when the
    inter-symbol gaps carry only noise, so the capture is assembled from
    noise plus short simulated windows around each sounding occasion; the
    detector still scans the full trace.
    """
    scn = state.scenario
    cfg0 = scn.band_config(0)
    n_periods = scn.mission.acquisition_periods
    total = n_periods * cfg0.period_samples + 4 * cfg0.half_len
    uav = _uav_at(state, np.zeros(3))
    y = ch.add_noise(
        ch.IqCapture(
            samples=np.zeros(total, dtype=np.complex128),
            sample_rate_hz=cfg0.sample_rate_hz,
            t0_s=0.0,
            antenna_id=0,
            center_freq_hz=scn.carrier_hz,
        ),
        scn.noise_figure_db,
        state.rng,
    ).samples
    win = 2 * _WINDOW_GUARD + cfg0.symbol_len
    for q in range(n_periods):
        w0 = max(q * cfg0.period_samples - _WINDOW_GUARD, 0)
        seg = _simulate_reception(state, uav, q, w0, win)[0]
        y[w0 : w0 + win] = seg
    trace = sync.repetition_metric(y, cfg0.half_len, cfg0.cp_len)
    n_det = sync.detect(trace)
    if n_det is None:
        raise MissionError("acquisition failed: no sounding symbol detected")
    # fold onto the period grid; keeps small negative offsets intact
    q_det = round(n_det / cfg0.period_samples)
    n_sync = n_det - q_det * cfg0.period_samples
    m_f_peak = float(np.max(trace.m_f))
    for band in range(len(scn.band_k0)):
        cfg = scn.band_config(band)
        state.receivers[band] = _BandReceiver(
            cfg=cfg,
            assigned=scn.assigned_shifts(band),
            state=sync.SyncState(
                n_sync=n_sync,
                period_samples=cfg.period_samples,
                m_f_peak=m_f_peak,
                snr_db=sync.estimate_snr(m_f_peak),
            ),
        )


def _process_reception(state: MissionState, velocity: np.ndarray) -> None:
    """Run the receive chain for every band at the current period."""
    scn = state.scenario
    period = state.last_period
    uav = _uav_at(state, velocity)
    n_ant = len(uav.antennas)
    cfg0 = scn.band_config(0)
    expected = state.receivers[0].state.expected_index(period)
    window_start = expected - _WINDOW_GUARD
    window_len = cfg0.symbol_len + 2 * _WINDOW_GUARD
    captures = _simulate_reception(state, uav, period, window_start, window_len)
    for band, rcv in state.receivers.items():
        n_assigned = len(rcv.assigned)
        gamma = np.full((n_ant, n_assigned), np.nan)
        eps = np.full((n_ant, n_assigned), np.nan)
        missed = np.ones((n_ant, n_assigned), dtype=bool)
        n_extra = 0
        ref_eps = None
        for a in range(n_ant):
            n_half = rcv.state.expected_index(period) + rcv.cfg.cp_len - window_start
            spec = ident.despread(captures[a], n_half, rcv.cfg)
            result = ident.matching_pursuit(
                spec.values, rcv.cfg.half_len, prune_nats=_MP_PRUNE_NATS
            )
            cleaned = ident.clean(result.components, rcv.assigned, rcv.cfg.half_len)
            gamma[a] = cleaned.gamma_db
            eps[a] = cleaned.eps_hat
            missed[a] = cleaned.missed
            n_extra += cleaned.n_extra
            if ref_eps is None and not math.isnan(cleaned.ref_eps):
                ref_eps = cleaned.ref_eps
        if ref_eps is not None:
            offset_used = rcv.state.expected_index(period) - (
                rcv.state.n_sync + period * rcv.state.period_samples
            )
            rcv.state = sync.track(rcv.state, offset_used + ref_eps)
        state.measurement_log.append(
            Measurement(
                t_s=state.t_s,
                period=period,
                band=band,
                position_m=tuple(float(v) for v in state.position_m),
                phase=state.phase if state.phase != PHASE_REFINE
                else f"{PHASE_REFINE}:{state.refining_ue}",
                gamma_db=gamma,
                eps_hat=eps,
                missed=missed,
                n_extra=n_extra,
            )
        )


def _estimate(state: MissionState, ue_id: str, bandwidth, stage: str):
    """Mean-shift estimate for one user from the measurement log so far."""
    scn = state.scenario
    ue = next(u for u in scn.ues if u.ue_id == ue_id)
    col = scn.assigned_shifts(ue.band_id).index(ue.shift)
    rows = [m for m in state.measurement_log if m.band == ue.band_id]
    if not rows:
        return None
    points = np.asarray([m.position_m[:2] for m in rows])
    per_ant = np.asarray([m.gamma_db[:, col] for m in rows])
    vals, _ = locate.select_antenna(per_ant)
    if not np.isfinite(vals).any():
        return None
    try:
        return locate.estimate_position(
            ue_id, points, vals, bandwidth=bandwidth, stage=stage
        )
    except locate.LocateError:
        return None


def _enter_phase(state: MissionState, phase: str) -> None:
    if _PHASE_RANK[phase] < _PHASE_RANK[state.phase]:
        raise MissionError(f"phase regression {state.phase} -> {phase}")
    state.phase_durations_s[state.phase] = (
        state.phase_durations_s.get(state.phase, 0.0)
        + state.t_s
        - state.phase_started_s
    )
    state.phase = phase
    state.phase_started_s = state.t_s
    state.phase_history.append(phase)


def _initial_bandwidth(scn: Scenario) -> tuple[float, float]:
    ext = scn.area_polygon.max(axis=0) - scn.area_polygon.min(axis=0)
    return (float(ext[0]) / 2.0, float(ext[1]) / 2.0)


def _advance_phase(state: MissionState) -> None:
    """Waypoint queue ran dry: run stage logic and load the next phase."""
    scn = state.scenario
    plan = state.plan
    if state.phase == PHASE_TO_CENTER:
        loop = plan_perimeter(
            plan.area_polygon,
            plan.perimeter_margin_m,
            plan.min_sample_spacing_m,
            entry_point=state.position_m[:2],
        )
        state.waypoints = deque(
            np.array([p[0], p[1], plan.altitude_m]) for p in loop
        )
        _enter_phase(state, PHASE_PERIMETER)
        return
    if state.phase == PHASE_PERIMETER:
        bw = _initial_bandwidth(scn)
        for ue in scn.ues:
            est = _estimate(state, ue.ue_id, bw, stage="initial")
            if est is not None:
                state.initial_estimates[ue.ue_id] = est
        state.refine_queue = deque(
            u.ue_id for u in scn.ues if u.ue_id in state.initial_estimates
        )
        if not state.refine_queue:
            state.waypoints = deque([np.asarray(scn.home_m, dtype=np.float64)])
            _enter_phase(state, PHASE_RETURN)
            return
        _enter_phase(state, PHASE_REFINE)
        _load_next_hex(state)
        return
    if state.phase == PHASE_REFINE:
        _finish_current_hex(state)
        if state.refine_queue:
            _load_next_hex(state)
            return
        state.waypoints = deque([np.asarray(scn.home_m, dtype=np.float64)])
        _enter_phase(state, PHASE_RETURN)
        return
    if state.phase == PHASE_RETURN:
        _enter_phase(state, PHASE_DONE)
        return
    raise MissionError(f"no phase follows {state.phase}")


def _load_next_hex(state: MissionState) -> None:
    plan = state.plan
    ue_id = state.refine_queue.popleft()
    state.refining_ue = ue_id
    center = state.initial_estimates[ue_id].position_m
    lap = plan_hex(np.asarray(center), plan.hex_radius_m, plan.min_sample_spacing_m)
    state.waypoints = deque(np.array([p[0], p[1], plan.altitude_m]) for p in lap)


def _finish_current_hex(state: MissionState) -> None:
    ue_id = state.refining_ue
    if ue_id is None:
        return
    plan = state.plan
    bw = (plan.hex_radius_m, plan.hex_radius_m)
    est = _estimate(state, ue_id, bw, stage="refined")
    if est is not None:
        state.refined_estimates[ue_id] = est
    state.refining_ue = None


def step(state: MissionState, dt: float) -> MissionState:
    """Advance the simulation clock by dt seconds.

    Moves the platform toward the current waypoint under the speed cap,
    fires a reception when a sounding period elapses and the platform has
    moved at least the minimum sample spacing, and runs phase-boundary
    logic when the waypoint queue empties.
    """
    if dt <= 0.0:
        raise MissionError("dt must be positive")
    if state.phase == PHASE_DONE:
        return state
    if not state.receivers:
        _acquire(state)
    plan = state.plan
    budget = plan.speed_mps * dt
    velocity = np.zeros(3)
    while budget > 0.0 and state.waypoints:
        target = state.waypoints[0]
        delta = target - state.position_m
        dist = float(np.linalg.norm(delta))
        if dist <= budget:
            state.position_m = target.astype(np.float64).copy()
            state.waypoints.popleft()
            budget -= dist
        else:
            direction = delta / dist
            state.position_m = state.position_m + direction * budget
            velocity = direction * plan.speed_mps
            budget = 0.0
    state.t_s += dt

    cfg0 = state.scenario.band_config(0)
    period_now = int(state.t_s / cfg0.period_s)
    if period_now > state.last_period:
        state.last_period = period_now
        moved_enough = (
            state.last_sample_pos is None
            or np.linalg.norm(state.position_m - state.last_sample_pos)
            >= plan.min_sample_spacing_m
        )
        if moved_enough:
            _process_reception(state, velocity)
            state.last_sample_pos = state.position_m.copy()

    if not state.waypoints and state.phase != PHASE_DONE:
        _advance_phase(state)
    return state


def _estimate_to_dict(est: locate.LocalizationEstimate | None) -> dict | None:
    if est is None:
        return None
    return {
        "position_m": [round(v, 6) for v in est.position_m],
        "n_valid": est.n_valid,
        "iterations": est.iterations,
        "converged": est.converged,
        "stage": est.stage,
    }


def run_mission(
    scenario: Scenario,
    plan: MissionPlan | None = None,
    seed: int | None = None,
    dt: float = 0.1,
    include_log: bool = True,
) -> dict:
    """Execute a full mission and return the JSON-ready report."""
    if plan is None:
        plan = MissionPlan(
            area_polygon=scenario.area_polygon,
            center=scenario.center,
            altitude_m=scenario.mission.altitude_m,
            perimeter_margin_m=scenario.mission.perimeter_margin_m,
            hex_radius_m=scenario.mission.hex_radius_m,
            speed_mps=scenario.mission.speed_mps,
            min_sample_spacing_m=scenario.mission.min_sample_spacing_m,
        )
    resolved_seed = scenario.seed if seed is None else int(seed)
    rng = np.random.default_rng(np.random.SeedSequence([resolved_seed, 0x015510]))
    state = MissionState(plan=plan, scenario=scenario, rng=rng)
    state.waypoints = deque(
        [np.array([plan.center[0], plan.center[1], plan.altitude_m])]
    )
    n_steps = 0
    max_steps = int(_MAX_SIM_SECONDS / dt)
    while state.phase != PHASE_DONE:
        step(state, dt)
        n_steps += 1
        if n_steps > max_steps:
            raise MissionError("mission exceeded the simulation time limit")

    errors_initial, errors_refined = [], []
    per_ue = {}
    for ue in scenario.ues:
        truth = [float(ue.position_m[0]), float(ue.position_m[1])]
        init = state.initial_estimates.get(ue.ue_id)
        refined = state.refined_estimates.get(ue.ue_id)
        row = {
            "band": ue.band_id,
            "shift": ue.shift,
            "truth_m": truth,
            "initial": _estimate_to_dict(init),
            "refined": _estimate_to_dict(refined),
        }
        if init is not None:
            row["le_initial_m"] = round(
                locate.localization_error(init.position_m, truth), 6
            )
            errors_initial.append(row["le_initial_m"])
        if refined is not None:
            row["le_refined_m"] = round(
                locate.localization_error(refined.position_m, truth), 6
            )
            errors_refined.append(row["le_refined_m"])
        per_ue[ue.ue_id] = row

    report = {
        "schema_version": MISSION_REPORT_SCHEMA_VERSION,
        "scenario": scenario.name,
        "seed": resolved_seed,
        "dt_s": dt,
        "phase_durations_s": {
            k: round(v, 3) for k, v in state.phase_durations_s.items()
        },
        "phase_history": state.phase_history,
        "n_measurements": len(state.measurement_log),
        "ues": per_ue,
        "ale_initial_m": round(float(np.mean(errors_initial)), 6)
        if errors_initial
        else None,
        "ale_refined_m": round(float(np.mean(errors_refined)), 6)
        if errors_refined
        else None,
    }
    if include_log:
        report["measurements"] = [
            {
                "t_s": round(m.t_s, 3),
                "period": m.period,
                "band": m.band,
                "position_m": [round(v, 6) for v in m.position_m],
                "phase": m.phase,
                "gamma_db": [
                    [None if math.isnan(g) else round(float(g), 4) for g in row]
                    for row in m.gamma_db
                ],
                "eps_hat": [
                    [None if math.isnan(e) else round(float(e), 4) for e in row]
                    for row in m.eps_hat
                ],
                "n_extra": m.n_extra,
            }
            for m in state.measurement_log
        ]
    return report
