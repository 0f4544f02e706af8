"""RSSI-style localization from despread tone amplitudes.

Each user's measurement series (strongest-antenna amplitude per reception,
normalized to its maximum) is thresholded and fed to a weighted mean-shift
with a diagonal Gaussian kernel; the mode estimate is the user position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAMMA_TH_DEFAULT = 0.6
MEAN_SHIFT_TOL_M = 1e-6
MEAN_SHIFT_MAX_ITER = 50


class LocateError(ValueError):
    """Raised when localization inputs are unusable."""


@dataclass(frozen=True)
class LocalizationEstimate:
    """Mode estimate for one user."""

    ue_id: str
    position_m: tuple[float, float]
    n_valid: int
    iterations: int
    converged: bool
    stage: str = "initial"


def select_antenna(gamma_db: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pick the strongest antenna per reception.

    gamma_db has shape (n_receptions, n_antennas) with NaN for missed
    detections. Returns (values, antenna_index); receptions missed on every
    antenna stay NaN with index -1.
    """
    g = np.atleast_2d(np.asarray(gamma_db, dtype=np.float64))
    all_nan = np.isnan(g).all(axis=1)
    idx = np.full(len(g), -1, dtype=np.int64)
    vals = np.full(len(g), np.nan)
    if (~all_nan).any():
        safe = np.where(np.isnan(g), -np.inf, g)
        idx[~all_nan] = np.argmax(safe[~all_nan], axis=1)
        vals[~all_nan] = safe[~all_nan, idx[~all_nan]]
    return vals, idx


def normalize_and_filter(
    gamma_db: np.ndarray, gamma_th: float = GAMMA_TH_DEFAULT
) -> tuple[np.ndarray, np.ndarray]:
    """Convert a dB series to normalized linear amplitude and threshold it.

    Amplitudes are scaled by the series maximum, so weights lie in (0, 1]
    and the retained set is {r : w[r] >= gamma_th}. NaNs never validate.

    Raises
    ------
    LocateError
        If no finite measurement exists (empty valid set).
    """
    g = np.asarray(gamma_db, dtype=np.float64)
    finite = np.isfinite(g)
    if not finite.any():
        raise LocateError("no valid measurements for this user")
    lin = np.where(finite, 10.0 ** (np.where(finite, g, 0.0) / 20.0), 0.0)
    weights = lin / lin.max()
    valid = finite & (weights >= gamma_th)
    return weights, valid


def mean_shift(
    points: np.ndarray,
    weights: np.ndarray,
    bandwidth: tuple[float, float],
    tol: float = MEAN_SHIFT_TOL_M,
    max_iter: int = MEAN_SHIFT_MAX_ITER,
) -> tuple[np.ndarray, int, bool]:
    """Weighted mean-shift mode seeking with a diagonal Gaussian kernel.

    Starts from the weighted centroid and iterates
    m <- sum_i p_i w_i K_i / sum_i w_i K_i,
    K_i = exp(-0.5 * (p_i - m)^T H^-1 (p_i - m)), H = diag(hx^2, hy^2),
    until the step is below tol or max_iter is reached.

    Returns (position, iterations, converged).
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) != len(w):
        raise LocateError("points must be (n, 2) matching weights")
    if len(p) == 0 or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise LocateError("invalid weights")
    if w.sum() <= 0:
        raise LocateError("all weights zero")
    hx, hy = bandwidth
    if hx <= 0 or hy <= 0:
        raise LocateError("bandwidth must be positive")
    inv_h = np.array([1.0 / hx**2, 1.0 / hy**2])
    m = (p * w[:, None]).sum(axis=0) / w.sum()
    for it in range(1, max_iter + 1):
        d = p - m
        k = np.exp(-0.5 * (d * d * inv_h).sum(axis=1)) * w
        denom = k.sum()
        if denom <= 1e-300:
            return m, it, False
        m_new = (p * k[:, None]).sum(axis=0) / denom
        step = float(np.linalg.norm(m_new - m))
        m = m_new
        if step < tol:
            return m, it, True
    return m, max_iter, False


def estimate_position(
    ue_id: str,
    points: np.ndarray,
    gamma_db: np.ndarray,
    bandwidth: tuple[float, float],
    gamma_th: float = GAMMA_TH_DEFAULT,
    stage: str = "initial",
) -> LocalizationEstimate:
    """Full per-user pipeline: normalize, threshold, mean-shift."""
    weights, valid = normalize_and_filter(gamma_db, gamma_th)
    pos, iters, converged = mean_shift(
        np.atleast_2d(points)[valid], weights[valid], bandwidth
    )
    return LocalizationEstimate(
        ue_id=ue_id,
        position_m=(float(pos[0]), float(pos[1])),
        n_valid=int(valid.sum()),
        iterations=iters,
        converged=converged,
        stage=stage,
    )


def localization_error(
    estimate: tuple[float, float] | np.ndarray, truth: tuple[float, float] | np.ndarray
) -> float:
    """Horizontal Euclidean distance between estimate and ground truth."""
    e = np.asarray(estimate, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    return float(np.linalg.norm(e[:2] - t[:2]))


def average_localization_error(errors: list[float] | np.ndarray) -> float:
    """Mean localization error over users/trials."""
    arr = np.asarray(errors, dtype=np.float64)
    if arr.size == 0:
        raise LocateError("no errors to average")
    return float(arr.mean())
