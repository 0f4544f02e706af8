"""IQ capture file I/O.

Payload format: little-endian interleaved 32-bit float I/Q pairs, no
header. Metadata lives in a JSON sidecar at ``<path>.json`` holding the
sample rate, center frequency, capture start time and antenna id. float32
values are exactly representable in the complex128 arrays used in memory,
so file -> memory -> file round trips are bit-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np

from .channel import IqCapture

SIDECAR_SCHEMA_VERSION = 1
BYTES_PER_SAMPLE = 8  # two little-endian float32 values
_SIDECAR_FIELDS = ("sample_rate_hz", "center_freq_hz", "t0_s", "antenna_id")


class IqFormatError(ValueError):
    """Raised for malformed IQ payloads or sidecar metadata."""


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def write_iq(path: str | Path, capture: IqCapture) -> None:
    """Write samples as interleaved float32 pairs plus a JSON sidecar."""
    path = Path(path)
    samples = np.asarray(capture.samples, dtype=np.complex128)
    inter = np.empty(2 * len(samples), dtype="<f4")
    inter[0::2] = samples.real.astype("<f4")
    inter[1::2] = samples.imag.astype("<f4")
    path.write_bytes(inter.tobytes())
    meta = {
        "schema_version": SIDECAR_SCHEMA_VERSION,
        "sample_rate_hz": float(capture.sample_rate_hz),
        "center_freq_hz": float(capture.center_freq_hz),
        "t0_s": float(capture.t0_s),
        "antenna_id": int(capture.antenna_id),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


class IqWriter:
    """Incremental IQ writer for captures too large to hold in memory.

    Usage::

        with IqWriter(path, sample_rate_hz=fs) as w:
            for chunk in produce_chunks():
                w.append(chunk)

    The payload is appended chunk by chunk; the sidecar is written on a
    clean close. Output bytes are identical to a single write_iq call on
    the concatenated samples.
    """

    def __init__(
        self,
        path: str | Path,
        sample_rate_hz: float,
        center_freq_hz: float = 0.0,
        t0_s: float = 0.0,
        antenna_id: int = 0,
    ):
        self.path = Path(path)
        self._meta = {
            "schema_version": SIDECAR_SCHEMA_VERSION,
            "sample_rate_hz": float(sample_rate_hz),
            "center_freq_hz": float(center_freq_hz),
            "t0_s": float(t0_s),
            "antenna_id": int(antenna_id),
        }
        self.n_samples = 0
        self._fh = open(self.path, "wb")

    def append(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=np.complex128)
        inter = np.empty(2 * len(samples), dtype="<f4")
        inter[0::2] = samples.real.astype("<f4")
        inter[1::2] = samples.imag.astype("<f4")
        self._fh.write(inter.tobytes())
        self.n_samples += len(samples)

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.close()
        sidecar_path(self.path).write_text(
            json.dumps(self._meta, indent=2, sort_keys=True) + "\n"
        )

    def __enter__(self) -> "IqWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:  # leave no half-written sidecar behind on failure
            self._fh.close()


def read_sidecar(path: str | Path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        raise IqFormatError(f"missing sidecar metadata file {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise IqFormatError(f"malformed sidecar {side}: {exc}") from exc
    for key in _SIDECAR_FIELDS:
        if key not in meta:
            raise IqFormatError(f"sidecar {side} missing field {key!r}")
        if not isinstance(meta[key], (int, float)):
            raise IqFormatError(f"sidecar {side} field {key!r} is not numeric")
    return meta


def _check_payload_size(path: Path) -> int:
    n_bytes = path.stat().st_size
    rem = n_bytes % BYTES_PER_SAMPLE
    if rem:
        raise IqFormatError(
            f"truncated IQ payload {path}: {n_bytes} bytes is not a multiple "
            f"of {BYTES_PER_SAMPLE}; dangling {rem} bytes at offset {n_bytes - rem}"
        )
    return n_bytes // BYTES_PER_SAMPLE


def read_iq(path: str | Path) -> IqCapture:
    """Load a full capture (payload plus sidecar) into memory."""
    path = Path(path)
    if not path.exists():
        raise IqFormatError(f"no such IQ file {path}")
    meta = read_sidecar(path)
    n_samples = _check_payload_size(path)
    inter = np.fromfile(path, dtype="<f4")
    samples = inter[0::2].astype(np.float64) + 1j * inter[1::2].astype(np.float64)
    assert len(samples) == n_samples
    return IqCapture(
        samples=samples,
        sample_rate_hz=float(meta["sample_rate_hz"]),
        t0_s=float(meta["t0_s"]),
        antenna_id=int(meta["antenna_id"]),
        center_freq_hz=float(meta["center_freq_hz"]),
    )


def stream_iq(
    path: str | Path, chunk_samples: int = 1 << 20
) -> Iterator[np.ndarray]:
    """Yield complex128 chunks without loading the whole payload.

    Chunks hold at most chunk_samples entries; the final chunk may be
    shorter. Size validation happens up front so a truncated file fails
    before any data is consumed.
    """
    path = Path(path)
    if chunk_samples < 1:
        raise IqFormatError("chunk_samples must be >= 1")
    if not path.exists():
        raise IqFormatError(f"no such IQ file {path}")
    _check_payload_size(path)
    with open(path, "rb") as fh:
        while True:
            inter = np.fromfile(fh, dtype="<f4", count=2 * chunk_samples)
            if inter.size == 0:
                return
            yield inter[0::2].astype(np.float64) + 1j * inter[1::2].astype(
                np.float64
            )
