"""Experiment harness: composite captures and Monte-Carlo sweeps.

Provides the laboratory composite-capture construction (three shifted users
per sub-band, optionally duplicated onto the adjacent allocation), the
misidentification grid over delay/power spread, and the localization-error
CDF over mission seeds. Every trial derives its own RNG stream from the
base seed and its cell/trial coordinates, so aggregation order cannot
change any result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import ident
from .mission import run_mission
from .scenario import Scenario, load_preset
from .waveform import N_SHIFTS, SrsConfig, synthesize_symbol

KIND_MISID_GRID = "misid_grid"
KIND_LOC_CDF = "loc_cdf"
KIND_MISSION = "mission"
KIND_PROCESS_CAPTURE = "process_capture"
KIND_METRIC_TRACE = "metric_trace"
KINDS = (
    KIND_MISID_GRID,
    KIND_LOC_CDF,
    KIND_MISSION,
    KIND_PROCESS_CAPTURE,
    KIND_METRIC_TRACE,
)

# the two supported allocation widths: same numerology, 4 RB vs 36 RB
BANDWIDTH_CONFIGS = {
    "1.4MHz": SrsConfig(),
    "13MHz": SrsConfig(n_fft=1024, cp_len=72, m_srs_rb=36),
}

# CP start of the zero-offset user inside a composite capture (before any
# caller padding); leaves room for the interpolator tails of offset users
COMPOSITE_MARGIN = 24

_Z95 = 1.959963984540054  # two-sided 95% normal quantile
RESULT_SCHEMA_VERSION = 1


class ExperimentError(ValueError):
    """Raised for invalid experiment specifications or inputs."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Sweep definition: what to run, over which axes, how many trials."""

    kind: str
    trials: int = 500
    base_seed: int = 0
    delay_spread_s: tuple[float, ...] = ()
    power_spread_db: tuple[float, ...] = ()
    ub_list: tuple[int, ...] = ()
    bandwidth_list: tuple[str, ...] = ()
    snr_db: float = 20.0
    preset: str = "rural"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        if self.kind == KIND_MISID_GRID:
            for name, axis in (
                ("delay_spread_s", self.delay_spread_s),
                ("power_spread_db", self.power_spread_db),
                ("ub_list", self.ub_list),
                ("bandwidth_list", self.bandwidth_list),
            ):
                if not axis:
                    raise ExperimentError(f"misid_grid needs a nonempty {name}")
            for ub in self.ub_list:
                if ub not in (1, 2, 4, 8):
                    raise ExperimentError(
                        f"U_b={ub}: evenly spaced multiplexing needs a divisor of 8"
                    )
            for bw in self.bandwidth_list:
                if bw not in BANDWIDTH_CONFIGS:
                    raise ExperimentError(
                        f"unknown bandwidth {bw!r}; known: {sorted(BANDWIDTH_CONFIGS)}"
                    )


@dataclass(frozen=True)
class ResultTable:
    """Sweep output: one value per cell plus trial counts and CIs.

    axes maps axis name to its values in cell-index order; cells has one
    dimension per axis. For probability tables ci_lo/ci_hi bound each cell
    at 95% by the recorded method; value tables carry ci_method="none".
    """

    kind: str
    axes: dict[str, tuple]
    cells: np.ndarray
    counts: np.ndarray
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    ci_method: str = "none"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(len(v) for v in self.axes.values())
        if self.cells.shape != shape:
            raise ExperimentError(
                f"cells shape {self.cells.shape} does not match axes {shape}"
            )
        if self.ci_method != "none":
            finite = self.cells[np.isfinite(self.cells)]
            if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
                raise ExperimentError("probability cells outside [0, 1]")

    def to_json(self) -> str:
        """Deterministic JSON document (sorted keys, fixed float text)."""
        doc = {
            "schema_version": RESULT_SCHEMA_VERSION,
            "kind": self.kind,
            "axes": {k: list(v) for k, v in self.axes.items()},
            "cells": self.cells.tolist(),
            "counts": self.counts.tolist(),
            "ci_lo": None if self.ci_lo is None else self.ci_lo.tolist(),
            "ci_hi": None if self.ci_hi is None else self.ci_hi.tolist(),
            "ci_method": self.ci_method,
            "meta": self.meta,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        """Long-form CSV: one row per cell with axis coordinates."""
        names = list(self.axes)
        lines = [",".join(names + ["value", "count", "ci_lo", "ci_hi"])]
        shape = tuple(len(v) for v in self.axes.values())
        for idx in np.ndindex(*shape):
            coord = []
            for n, i in zip(names, idx):
                v = self.axes[n][i]
                coord.append(v if isinstance(v, str) else repr(v))
            row = coord + [
                repr(float(self.cells[idx])),
                str(int(self.counts[idx])),
                "" if self.ci_lo is None else repr(float(self.ci_lo[idx])),
                "" if self.ci_hi is None else repr(float(self.ci_hi[idx])),
            ]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def table_from_json(text: str) -> ResultTable:
    """Parse a ResultTable.to_json document back into a table."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ExperimentError(f"malformed result document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ExperimentError("result document is not a JSON object")
    if doc.get("schema_version") != RESULT_SCHEMA_VERSION:
        raise ExperimentError(
            f"unsupported result schema_version {doc.get('schema_version')!r}"
            f" (expected {RESULT_SCHEMA_VERSION})"
        )
    try:
        return ResultTable(
            kind=str(doc["kind"]),
            axes={str(k): tuple(v) for k, v in doc["axes"].items()},
            cells=np.asarray(doc["cells"], dtype=float),
            counts=np.asarray(doc["counts"], dtype=np.int64),
            ci_lo=None
            if doc["ci_lo"] is None
            else np.asarray(doc["ci_lo"], dtype=float),
            ci_hi=None
            if doc["ci_hi"] is None
            else np.asarray(doc["ci_hi"], dtype=float),
            ci_method=str(doc["ci_method"]),
            meta=dict(doc["meta"]),
        )
    except KeyError as exc:
        raise ExperimentError(f"result document missing field {exc}") from exc


def wilson_interval(k: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for k successes in n Bernoulli trials."""
    if n < 1 or not 0 <= k <= n:
        raise ExperimentError(f"invalid counts k={k}, n={n}")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    # at the boundary counts the exact bound is the point estimate itself;
    # computing it as center -/+ half leaves ~1e-17 of rounding residue
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


def build_composite_capture(
    cfg: SrsConfig,
    shifts: tuple[int, ...] = (0, 4, 2),
    offsets_samples: tuple[float, ...] = (0.0, 1.5, -1.5),
    powers_dbfs: tuple[float, ...] = (-5.0, -8.0, -15.0),
    cfos_hz: tuple[float, ...] | None = None,
    duplicate_band: bool = False,
    pad: int = 0,
) -> ch.IqCapture:
    """Superimpose per-user sounding symbols into one laboratory capture.

    Each user's symbol is scaled so its body RMS equals 10^(dBfs/20) (full
    scale = unit RMS), delayed by its sample offset (fractional offsets use
    the windowed-sinc interpolator), rotated by its CFO and summed. With
    duplicate_band the whole composite is additionally frequency-shifted by
    one allocation width, forming a second user group on the adjacent
    subcarriers. The zero-offset symbol's CP starts at sample
    pad + COMPOSITE_MARGIN; the capture is noise-free.
    """
    n_ue = len(shifts)
    if cfos_hz is None:
        cfos_hz = (0.0,) * n_ue
    if not (len(offsets_samples) == len(powers_dbfs) == len(cfos_hz) == n_ue):
        raise ExperimentError("per-user parameter lists must share length")
    if len(set(shifts)) != n_ue:
        raise ExperimentError("duplicate cyclic shifts in one sub-band")
    margin = pad + COMPOSITE_MARGIN
    total = cfg.symbol_len + 2 * margin
    fs = cfg.sample_rate_hz
    t = np.arange(total) / fs
    composite = np.zeros(total, dtype=np.complex128)
    for w, off, p_dbfs, cfo in zip(shifts, offsets_samples, powers_dbfs, cfos_hz):
        sym = synthesize_symbol(cfg, w).samples
        body_rms = math.sqrt(np.sum(np.abs(sym[cfg.cp_len :]) ** 2) / (2 * cfg.half_len))
        x = np.zeros(total, dtype=np.complex128)
        x[margin : margin + len(sym)] = (10.0 ** (p_dbfs / 20.0) / body_rms) * sym
        if off:
            x = ch.fractional_delay(x, off)
        if cfo:
            x = x * np.exp(2j * np.pi * cfo * t)
        composite += x
    if duplicate_band:
        dk = cfg.k_tc * cfg.m_srs
        if cfg.k0 + 2 * dk > cfg.n_fft:
            raise ExperimentError(
                f"duplicate sub-band [{cfg.k0 + dk}, {cfg.k0 + 2 * dk}) exceeds the "
                f"FFT grid of {cfg.n_fft} and would alias onto the original"
            )
        composite = composite * (1.0 + np.exp(2j * np.pi * dk * np.arange(total) / cfg.n_fft))
    return ch.IqCapture(samples=composite, sample_rate_hz=fs, t0_s=0.0)


_ECHO_GAIN_DB = -6.0
# exponential excess-delay draw spanning LoS-like (tens of ns) to NLoS-like
# (hundreds of ns) channels, truncated to keep the echo inside the CP scale
_ECHO_DELAY_SCALE_S = 0.15e-6
_ECHO_DELAY_MIN_S = 0.02e-6
_ECHO_DELAY_MAX_S = 0.8e-6


def misid_trial(
    cfg: SrsConfig,
    ub: int,
    delay_spread_s: float,
    power_spread_db: float,
    snr_db: float,
    seed_key: tuple[int, ...],
) -> tuple[bool, bool]:
    """One misidentification trial; returns (misidentified, missed).

    U_b users occupy evenly spaced shifts. The receiver is synchronized to
    the strongest user (index 0, zero delay); the remaining users arrive
    later and weaker, with the last user at exactly the delay/power spread
    and the middle users uniform in between — the spread axes are the max
    pairwise gaps. Each user contributes its direct tone plus one -6 dB
    echo at an exponentially drawn excess delay (tens to hundreds of ns,
    the two-ray multipath that wide allocations resolve and narrow ones
    merge into a biased blob), synthesized directly in the despread domain
    with complex white noise at snr_db below the strongest user. A trial
    misidentifies when any retained component's nearest true direct tone
    belongs to a different user than the shift it classified to.
    """
    rng = np.random.default_rng(np.random.SeedSequence(list(seed_key)))
    m_len, half = cfg.m_srs, cfg.half_len
    step = N_SHIFTS // ub
    assigned = tuple(range(0, N_SHIFTS, step))

    eps = np.empty(ub)
    p_db = np.empty(ub)
    eps[0], p_db[0] = 0.0, 0.0
    if ub > 1:
        eps[-1] = delay_spread_s * cfg.sample_rate_hz
        p_db[-1] = -power_spread_db
        if ub > 2:
            eps[1:-1] = np.sort(rng.uniform(0.0, eps[-1], ub - 2))
            p_db[1:-1] = -np.sort(rng.uniform(0.0, power_spread_db, ub - 2))
    amps = 10.0 ** (p_db / 20.0) * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, ub))
    true_f = (np.array(assigned) / N_SHIFTS - eps / half) % 1.0

    echo_excess = np.clip(
        _ECHO_DELAY_MIN_S + rng.exponential(_ECHO_DELAY_SCALE_S, ub),
        None,
        _ECHO_DELAY_MAX_S,
    )
    echo_eps = eps + cfg.sample_rate_hz * echo_excess
    echo_f = (np.array(assigned) / N_SHIFTS - echo_eps / half) % 1.0
    echo_amps = (
        amps
        * 10.0 ** (_ECHO_GAIN_DB / 20.0)
        * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, ub))
    )

    m = np.arange(m_len)
    c = (amps[:, None] * np.exp(2j * np.pi * true_f[:, None] * m)).sum(axis=0)
    c += (echo_amps[:, None] * np.exp(2j * np.pi * echo_f[:, None] * m)).sum(axis=0)
    sigma = math.sqrt(10.0 ** (-snr_db / 10.0) / 2.0)
    c = c + sigma * (rng.standard_normal(m_len) + 1j * rng.standard_normal(m_len))

    result = ident.matching_pursuit(c, half)
    cleaned = ident.clean(result.components, assigned, half)
    misid = False
    for j, w in enumerate(assigned):
        if cleaned.missed[j]:
            continue
        f_hat = (w / N_SHIFTS - cleaned.eps_hat[j] / half) % 1.0
        d = np.abs(f_hat - true_f) % 1.0
        src = int(np.argmin(np.minimum(d, 1.0 - d)))
        if src != j:
            misid = True
            break
    return misid, bool(cleaned.missed.any())


def run_misid_grid(spec: ExperimentSpec) -> ResultTable:
    """Monte-Carlo misidentification probability over the sweep grid.

    Cell value = fraction of trials with any wrong shift-to-user mapping;
    missed detections are tallied separately in meta. Per-trial seeds
    derive from (base_seed, cell indices, trial), so trial execution order
    is irrelevant to the result.
    """
    if spec.kind != KIND_MISID_GRID:
        raise ExperimentError(f"spec kind {spec.kind!r} is not misid_grid")
    axes = {
        "ub": tuple(spec.ub_list),
        "bandwidth": tuple(spec.bandwidth_list),
        "delay_spread_s": tuple(spec.delay_spread_s),
        "power_spread_db": tuple(spec.power_spread_db),
    }
    shape = tuple(len(v) for v in axes.values())
    mis = np.zeros(shape, dtype=np.int64)
    missed = np.zeros(shape, dtype=np.int64)
    for iu, ub in enumerate(spec.ub_list):
        for ib, bw in enumerate(spec.bandwidth_list):
            cfg = BANDWIDTH_CONFIGS[bw]
            for idl, d_s in enumerate(spec.delay_spread_s):
                for ip, p_dB in enumerate(spec.power_spread_db):
                    for trial in range(spec.trials):
                        m, x = misid_trial(
                            cfg,
                            ub,
                            d_s,
                            p_dB,
                            spec.snr_db,
                            (spec.base_seed, iu, ib, idl, ip, trial),
                        )
                        mis[iu, ib, idl, ip] += m
                        missed[iu, ib, idl, ip] += x
    counts = np.full(shape, spec.trials, dtype=np.int64)
    lo = np.empty(shape)
    hi = np.empty(shape)
    for idx in np.ndindex(*shape):
        lo[idx], hi[idx] = wilson_interval(int(mis[idx]), spec.trials)
    return ResultTable(
        kind=KIND_MISID_GRID,
        axes=axes,
        cells=mis / spec.trials,
        counts=counts,
        ci_lo=lo,
        ci_hi=hi,
        ci_method="wilson-95",
        meta={
            "snr_db": spec.snr_db,
            "base_seed": spec.base_seed,
            "missed_rate": (missed / spec.trials).tolist(),
            "snr_reference": "strongest user",
        },
    )


def run_loc_cdf(
    spec: ExperimentSpec, scenario: Scenario | None = None
) -> ResultTable:
    """Localization-error CDF over mission seeds.

    Runs spec.trials full missions on the preset (seeds base_seed + i),
    collects every refined per-user localization error, and returns them
    sorted (an empirical CDF) with the seed-mean ALE in meta.
    """
    if spec.kind != KIND_LOC_CDF:
        raise ExperimentError(f"spec kind {spec.kind!r} is not loc_cdf")
    errors: list[float] = []
    errors_initial: list[float] = []
    per_seed_ale: list[float] = []
    for i in range(spec.trials):
        seed = spec.base_seed + i
        scn = scenario if scenario is not None else load_preset(spec.preset, seed=seed)
        report = run_mission(scn, seed=seed, include_log=False)
        seed_errs = []
        for row in report["ues"].values():
            if "le_refined_m" in row:
                errors.append(row["le_refined_m"])
                seed_errs.append(row["le_refined_m"])
            if "le_initial_m" in row:
                errors_initial.append(row["le_initial_m"])
        if seed_errs:
            per_seed_ale.append(float(np.mean(seed_errs)))
    if not errors:
        raise ExperimentError("no mission produced a refined estimate")
    cells = np.sort(np.asarray(errors))
    return ResultTable(
        kind=KIND_LOC_CDF,
        axes={"rank": tuple(range(len(cells)))},
        cells=cells,
        counts=np.full(len(cells), 1, dtype=np.int64),
        meta={
            "preset": spec.preset,
            "n_seeds": spec.trials,
            "base_seed": spec.base_seed,
            "ale_m": float(np.mean(errors)),
            "ale_initial_m": float(np.mean(errors_initial))
            if errors_initial
            else None,
            "per_seed_ale_m": [round(a, 6) for a in per_seed_ale],
            "seed_mean_ale_m": float(np.mean(per_seed_ale)),
        },
    )


def inject_dummy_traffic(
    samples: np.ndarray,
    rng: np.random.Generator,
    power_dbfs: float = -20.0,
    duty: float = 0.3,
    burst_len: int = 256,
) -> np.ndarray:
    """Fill idle (all-zero) stretches of a frame with noise-like bursts.

    Emulates unrelated uplink traffic between sounding symbols: bursts of
    complex Gaussian samples at power_dbfs (RMS relative to full scale)
    covering roughly the duty fraction of the idle samples. Occupied
    samples are never touched. Returns a new array.
    """
    if not 0.0 <= duty <= 1.0:
        raise ExperimentError("duty must be within [0, 1]")
    if burst_len < 1:
        raise ExperimentError("burst_len must be >= 1")
    out = np.array(samples, dtype=np.complex128, copy=True)
    idle = np.flatnonzero(out == 0)
    if idle.size == 0 or duty == 0.0:
        return out
    rms = 10.0 ** (power_dbfs / 20.0)
    n_bursts = max(1, int(duty * idle.size / burst_len))
    starts = rng.choice(idle.size, size=n_bursts, replace=True)
    for s in starts:
        run = idle[s : s + burst_len]
        # stay inside one contiguous idle stretch
        run = run[run - run[0] == np.arange(len(run))]
        burst = rms * math.sqrt(0.5) * (
            rng.standard_normal(len(run)) + 1j * rng.standard_normal(len(run))
        )
        out[run] = burst
    return out
