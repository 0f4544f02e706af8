"""Timing acquisition and tracking on the half-symbol repetition.

A comb-2 sounding symbol repeats its body halves, so the normalized sliding
correlation between adjacent L-sample windows plateaus at 1 across the CP.
Acquisition filters that metric, detects the plateau, and converts the peak
into a coarse arrival index; tracking then keeps a per-period expected index
locked using the fine residuals measured downstream.

The metric is carrier-frequency-offset invariant: a CFO rotates every lag-L
product by the same constant phase, leaving |P| and R unchanged.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

SNR_FLOOR_DB = -60.0
SNR_CAP_DB = 60.0


class SyncError(ValueError):
    """Raised for invalid metric/tracking inputs."""


@dataclass(frozen=True)
class MetricTrace:
    """Sliding repetition metric and its filtered version.

    Index n is the start of the leading half window: m[n] compares
    y[n : n+L] against y[n+L : n+2L]. m_f is m passed through a causal
    length-cp_len box average (partial windows at the head are normalized
    by their actual length).
    """

    p: np.ndarray
    r: np.ndarray
    m: np.ndarray
    m_f: np.ndarray
    half_len: int
    cp_len: int


@dataclass(frozen=True)
class SyncState:
    """Per-lane synchronization state.

    n_sync is the base index of the first repetition half at acquisition
    (q = 0); eps_filtered accumulates the smoothed timing error in samples
    relative to the fixed periodic grid n_sync + q * period_samples.
    """

    n_sync: int
    period_samples: int
    beta: float = 0.5
    eps_filtered: float = 0.0
    m_f_peak: float = 0.0
    snr_db: float = SNR_FLOOR_DB

    def expected_index(self, q: int) -> int:
        """Expected start of the repetition half at period q."""
        return self.n_sync + q * self.period_samples + round(self.eps_filtered)


def metric_backend() -> str:
    """Name of the active sliding-metric kernel ('compiled' or 'numpy')."""
    return _kernels.backend()


def filter_metric(m: np.ndarray, cp_len: int) -> np.ndarray:
    """Causal box average of the raw metric over cp_len samples."""
    if cp_len < 1:
        raise SyncError("cp_len must be >= 1")
    c = np.concatenate([np.zeros(1), np.cumsum(m, dtype=np.float64)])
    full = (c[cp_len:] - c[:-cp_len]) / cp_len
    head = c[1:cp_len] / np.arange(1, cp_len)
    return np.concatenate([head, full]) if cp_len > 1 else full


def repetition_metric(y: np.ndarray, half_len: int, cp_len: int) -> MetricTrace:
    """Compute the sliding repetition metric over a capture.

    Requires len(y) >= 2 * half_len. The heavy lag-product windowing runs on
    the selected kernel backend; the CP-length smoothing happens here.
    """
    if half_len < 1 or len(y) < 2 * half_len:
        raise SyncError(
            f"capture of {len(y)} samples is shorter than two repetition "
            f"halves (2 * {half_len})"
        )
    p, r, m = _kernels.sliding_metric(y, half_len)
    m_f = filter_metric(m, cp_len)
    return MetricTrace(p=p, r=r, m=m, m_f=m_f, half_len=half_len, cp_len=cp_len)


def detect(trace: MetricTrace, m_th: float = 0.6, delta: float = 0.0) -> int | None:
    """Detect the filtered-metric peak and return the coarse arrival index.

    Finds the smallest n whose filtered metric is above m_th, rises into n
    (forward difference > delta before it) and falls after it (< -delta),
    tolerating a flat top of |difference| <= delta in between; ties resolve
    to the first sample of the top. The returned index is compensated for
    the causal filter group delay and the CP span so it estimates the
    symbol start (CP onset); despreading should begin cp_len later.

    Returns None when no sample qualifies.
    """
    m_f = trace.m_f
    if len(m_f) < 3:
        return None
    d = np.diff(m_f)
    cand = np.nonzero((m_f[1:-1] >= m_th) & (d[:-1] > delta))[0] + 1
    n_d = len(d)
    for n in cand:
        k = int(n)
        while k < n_d and abs(d[k]) <= delta and m_f[k] >= m_th:
            k += 1
        if k < n_d and d[k] < -delta:
            return int(n) - (trace.cp_len - 1)
    return None


def estimate_snr(m_f_peak: float) -> float:
    """SNR estimate (dB) from the filtered-metric peak.

    Inverts the plateau relation sqrt(M) = SNR / (1 + SNR). Values at or
    above 1 saturate to +60 dB; non-positive inputs floor at -60 dB.
    """
    if not math.isfinite(m_f_peak):
        raise SyncError(f"non-finite metric value {m_f_peak}")
    if m_f_peak <= 0.0:
        return SNR_FLOOR_DB
    s = math.sqrt(m_f_peak)
    if s >= 1.0:
        return SNR_CAP_DB
    snr = s / (1.0 - s)
    return float(np.clip(10.0 * math.log10(snr), SNR_FLOOR_DB, SNR_CAP_DB))


def _f0(dt: float, t_l: float, t_cp: float) -> float:
    # fractional coherent lag-product overlap for one component
    if -t_l - t_cp <= dt < -t_cp:
        return (dt + t_cp + t_l) / t_l
    if -t_cp <= dt <= 0.0:
        return 1.0
    if 0.0 < dt < t_l:
        return 1.0 - dt / t_l
    return 0.0


def _g0(dt: float, t_l: float, t_cp: float) -> float:
    # fractional energy overlap with the double-half window
    if -2.0 * t_l - t_cp <= dt < -t_cp:
        return (dt + t_cp + 2.0 * t_l) / (2.0 * t_l)
    if -t_cp <= dt <= 0.0:
        return 1.0
    if 0.0 < dt < 2.0 * t_l:
        return 1.0 - dt / (2.0 * t_l)
    return 0.0


def predict_metric(
    components: list[tuple[float, float]] | np.ndarray,
    half_len: int,
    cp_len: int,
    sample_rate_hz: float,
) -> float:
    """Predicted metric value at a reference window from (power, delay) pairs.

    components holds per-path (|a|^2, delta_tau) entries where delta_tau is
    the window misalignment in seconds: window start minus the path's body
    arrival. delta_tau = 0 puts the window exactly at the body start;
    delta_tau in [-t_cp, 0] keeps it inside the cyclic prefix (the unit
    plateau); positive values slide it into the body, shrinking the
    coherent overlap. Cross terms between paths are neglected, which is
    exact unless a pair violates the cyclic-shift orthogonality condition
    (pairwise delay difference equal to a shift-grid offset).
    """
    comps = np.atleast_2d(np.asarray(components, dtype=np.float64))
    if comps.size == 0 or comps.shape[1] != 2:
        raise SyncError("components must be a non-empty list of (power, delay)")
    powers, delays = comps[:, 0], comps[:, 1]
    if np.any(powers < 0.0):
        raise SyncError("negative component power")
    if not np.any(powers > 0.0):
        raise SyncError("all component powers are zero")
    t_l = half_len / sample_rate_hz
    t_cp = cp_len / sample_rate_hz
    num = sum(p * _f0(dt, t_l, t_cp) for p, dt in zip(powers, delays))
    den = sum(p * _g0(dt, t_l, t_cp) for p, dt in zip(powers, delays))
    if den <= 0.0:
        return 0.0
    return float((num / den) ** 2)


def track(state: SyncState, eps_hat: float) -> SyncState:
    """Fold one fine timing-error measurement into the tracked state.

    eps_hat is the absolute offset (samples) of the true half start relative
    to the fixed grid n_sync + q * period_samples at the period it was
    measured. The filtered error updates as
    eps_filtered <- beta * eps_hat + (1 - beta) * eps_filtered,
    so beta = 1 follows raw measurements and beta = 0 never adapts.
    """
    if not 0.0 <= state.beta <= 1.0:
        raise SyncError(f"beta={state.beta} outside [0, 1]")
    if not math.isfinite(eps_hat):
        raise SyncError("non-finite timing error")
    eps = state.beta * eps_hat + (1.0 - state.beta) * state.eps_filtered
    return dataclasses.replace(state, eps_filtered=eps)
