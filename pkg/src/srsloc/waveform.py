"""SRS waveform synthesis: base sequences, cyclic shifts, comb-mapped symbols.

Comb-2 sounding symbols are built from low-PAPR base sequences (table rows for
short allocations, cyclically extended Zadoff-Chu above 36 subcarriers) mapped
onto every second subcarrier. Occupying only even bins makes the two halves of
the OFDM body identical, which is what the timing metric downstream exploits.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

SUBCARRIER_SPACING_BASE_HZ = 15_000.0
N_SHIFTS = 8  # cyclic-shift grid for comb-2 SRS
_TABLE_LENGTHS = (6, 12, 18, 24)
_ZC_MIN_LENGTH = 36


class WaveformError(ValueError):
    """Raised for invalid SRS configuration or sequence parameters."""


@dataclass(frozen=True)
class SrsConfig:
    """Static SRS numerology and allocation parameters.

    Attributes
    ----------
    n_fft : int
        OFDM FFT size N. Must be even and large enough for the allocation.
    cp_len : int
        Cyclic prefix length in samples.
    m_srs_rb : int
        Allocation width in resource blocks (12 subcarriers each).
    k_tc : int
        Transmission comb. Only comb-2 produces the half-symbol repetition
        this pipeline relies on, so 2 is required.
    k0 : int
        First occupied subcarrier. Must be a multiple of ``k_tc`` so the
        despread bin map stays integral.
    seq_id : int
        Base-sequence root/row selector q.
    mu : int
        3GPP numerology exponent (subcarrier spacing = 15 kHz * 2**mu).
    period_slots : int
        Sounding period in slots.
    """

    n_fft: int = 128
    cp_len: int = 9
    m_srs_rb: int = 4
    k_tc: int = 2
    k0: int = 0
    seq_id: int = 1
    mu: int = 1
    period_slots: int = 80

    def __post_init__(self) -> None:
        if self.k_tc != 2:
            raise WaveformError(f"comb K_TC={self.k_tc}: only comb-2 is supported")
        if self.n_fft % 2 or self.n_fft < 8:
            raise WaveformError(f"n_fft={self.n_fft} must be even and >= 8")
        if not 0 < self.cp_len < self.n_fft // 2:
            raise WaveformError(f"cp_len={self.cp_len} out of range")
        if self.m_srs_rb < 1:
            raise WaveformError("m_srs_rb must be positive")
        if self.k0 % self.k_tc:
            raise WaveformError(f"k0={self.k0} must be a multiple of K_TC={self.k_tc}")
        m = self.m_srs
        if m < _ZC_MIN_LENGTH and m not in _TABLE_LENGTHS:
            raise WaveformError(f"M_SRS={m}: no flat-spectrum table for this length")
        if self.k0 + self.k_tc * (m - 1) >= self.n_fft:
            raise WaveformError(
                f"allocation k0={self.k0}, M_SRS={m} exceeds n_fft={self.n_fft}"
            )
        if self.seq_id < 1:
            raise WaveformError("seq_id must be >= 1")
        if self.mu < 0 or self.period_slots < 1:
            raise WaveformError("invalid numerology/period")

    @property
    def m_srs(self) -> int:
        """Number of occupied subcarriers M_SRS = 12 * m_srs_rb / K_TC."""
        return 12 * self.m_srs_rb // self.k_tc

    @property
    def half_len(self) -> int:
        """Repetition half length L = N/2."""
        return self.n_fft // 2

    @property
    def sample_rate_hz(self) -> float:
        return self.n_fft * SUBCARRIER_SPACING_BASE_HZ * 2**self.mu

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def slot_samples(self) -> int:
        # one slot = 1 ms / 2**mu
        return round(self.n_fft * SUBCARRIER_SPACING_BASE_HZ * 1e-3)

    @property
    def period_samples(self) -> int:
        """Sounding period T_per in samples."""
        return self.period_slots * self.slot_samples

    @property
    def period_s(self) -> float:
        return self.period_samples * self.sample_period_s

    @property
    def symbol_len(self) -> int:
        """CP + body length of one sounding symbol."""
        return self.cp_len + self.n_fft

    def subcarrier_indices(self) -> np.ndarray:
        """Occupied FFT bins k0 + m*K_TC for m in [0, M_SRS)."""
        return self.k0 + self.k_tc * np.arange(self.m_srs)


@dataclass(frozen=True)
class BaseSequence:
    """Flat-modulus base sequence Qbar with its provenance."""

    values: np.ndarray
    seq_id: int
    kind: str  # "table" or "zc"

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SrsSymbol:
    """One time-domain sounding symbol (CP + body, body energy = 1)."""

    samples: np.ndarray  # length cp_len + n_fft
    n_fft: int
    cp_len: int
    shift: int

    @property
    def body(self) -> np.ndarray:
        return self.samples[self.cp_len :]

    @property
    def half(self) -> np.ndarray:
        return self.samples[self.cp_len : self.cp_len + self.n_fft // 2]


@functools.lru_cache(maxsize=None)
def _load_phase_tables() -> dict[int, np.ndarray]:
    text = resources.files("srsloc.data").joinpath("low_papr_phases.txt").read_text()
    tables: dict[int, list[list[int]]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        length, row = int(parts[0]), int(parts[1])
        phi = [int(v) for v in parts[2:]]
        if len(phi) != length:
            raise WaveformError(f"phase table row {length}/{row} malformed")
        tables.setdefault(length, []).append(phi)
    out = {}
    for length, rows in tables.items():
        if len(rows) != 30:
            raise WaveformError(f"phase table for length {length} must have 30 rows")
        out[length] = np.asarray(rows, dtype=np.int64)
    return out


def largest_prime_below(n: int) -> int:
    """Largest prime strictly below n (n >= 3)."""
    if n <= 2:
        raise WaveformError(f"no prime below {n}")
    for cand in range(n - 1, 1, -1):
        if all(cand % p for p in range(2, int(cand**0.5) + 1)):
            return cand
    raise WaveformError(f"no prime below {n}")


def zadoff_chu_extended(q: int, m_srs: int) -> np.ndarray:
    """Cyclically extended Zadoff-Chu sequence of length m_srs.

    The core is the largest prime N_ZC < m_srs; samples repeat cyclically to
    fill the allocation: Qbar[k] = exp(-j*pi*q*k'*(k'+1)/N_ZC), k' = k mod N_ZC.

    Raises
    ------
    WaveformError
        If q is a multiple of N_ZC (degenerate constant sequence).
    """
    n_zc = largest_prime_below(m_srs)
    if q % n_zc == 0:
        raise WaveformError(f"root q={q} degenerate for N_ZC={n_zc}")
    k = np.arange(m_srs) % n_zc
    return np.exp(-1j * np.pi * (q % n_zc) * k * (k + 1) / n_zc)


def base_sequence(cfg: SrsConfig) -> BaseSequence:
    """Base sequence for the configured allocation.

    Lengths below 36 use the embedded flat-spectrum table rows
    (row = seq_id mod 30); longer allocations use extended Zadoff-Chu.
    """
    m = cfg.m_srs
    if m < _ZC_MIN_LENGTH:
        phi = _load_phase_tables()[m][cfg.seq_id % 30]
        values = np.exp(1j * np.pi * phi / 4)
        kind = "table"
    else:
        values = zadoff_chu_extended(cfg.seq_id, m)
        kind = "zc"
    return BaseSequence(values=values, seq_id=cfg.seq_id, kind=kind)


def apply_cyclic_shift(base: BaseSequence | np.ndarray, shift: int) -> np.ndarray:
    """Apply cyclic shift w: Q_alpha[k] = exp(j*2*pi*w*k/8) * Qbar[k].

    The phase ramp across subcarriers is a circular time shift of w*L/8
    samples in the half-symbol, which is what separates users downstream.
    """
    if not 0 <= shift < N_SHIFTS:
        raise WaveformError(f"shift w={shift} outside [0, {N_SHIFTS})")
    values = base.values if isinstance(base, BaseSequence) else np.asarray(base)
    k = np.arange(len(values))
    return np.exp(2j * np.pi * shift * k / N_SHIFTS) * values


def synthesize_symbol(cfg: SrsConfig, shift: int) -> SrsSymbol:
    """Time-domain sounding symbol for cyclic shift w.

    The comb-2 grid is filled at bins k0 + 2m, transformed with an N-point
    IDFT, energy-normalized to unit body energy and prefixed with the last
    cp_len body samples. The two body halves are identical by construction.
    """
    q_alpha = apply_cyclic_shift(base_sequence(cfg), shift)
    grid = np.zeros(cfg.n_fft, dtype=np.complex128)
    grid[cfg.subcarrier_indices()] = q_alpha
    body = np.fft.ifft(grid)
    body /= np.sqrt(np.sum(np.abs(body) ** 2))
    samples = np.concatenate([body[-cfg.cp_len :], body])
    return SrsSymbol(samples=samples, n_fft=cfg.n_fft, cp_len=cfg.cp_len, shift=shift)


def srs_frame(
    cfg: SrsConfig,
    shift: int,
    n_periods: int,
    symbol_offset: int = 0,
) -> np.ndarray:
    """Periodic sounding frame: one symbol per period, zeros elsewhere.

    Parameters
    ----------
    symbol_offset : int
        Sample offset of the symbol start within each period.
    """
    if n_periods < 1:
        raise WaveformError("n_periods must be >= 1")
    per = cfg.period_samples
    if not 0 <= symbol_offset <= per - cfg.symbol_len:
        raise WaveformError("symbol does not fit in the period at this offset")
    sym = synthesize_symbol(cfg, shift)
    frame = np.zeros(n_periods * per, dtype=np.complex128)
    for p in range(n_periods):
        start = p * per + symbol_offset
        frame[start : start + cfg.symbol_len] = sym.samples
    return frame


def shift_frequencies(assigned_shifts: np.ndarray | list[int]) -> np.ndarray:
    """Despread-domain tone frequencies w/8 for a set of assigned shifts."""
    w = np.asarray(assigned_shifts, dtype=np.int64)
    if w.size and (w.min() < 0 or w.max() >= N_SHIFTS):
        raise WaveformError("shift outside [0, 8)")
    return w / N_SHIFTS
