#!/usr/bin/env python3
"""Benchmark the compiled kernels against their numpy fallbacks.

Covers both hot families:
  * the sliding repetition metric over a long capture, and
  * the matching-pursuit tone primitives, both as microbenchmarks and
    through a full matching-pursuit call on a realistic despread vector.

Run from the repository root after installing the package:

    python3 benchmarks/bench_metric.py [--samples N] [--repeats R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from srsloc import ident, waveform
from srsloc._kernels import metric_np, pursuit_np

try:
    from srsloc._kernels import _metric_cy, _pursuit_cy

    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False

_PURSUIT_NAMES = ("add_tone", "project", "mean_power", "newton_refine")


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_capture(n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Noise plus periodic sounding symbols, like a real acquisition run."""
    cfg = waveform.SrsConfig()
    y = 0.1 * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    sym = waveform.synthesize_symbol(cfg, 0).samples
    per = cfg.period_samples
    for start in range(100, n_samples - len(sym), per):
        y[start : start + len(sym)] += sym
    return y


def make_despread(rng: np.random.Generator) -> np.ndarray:
    """Four-user despread vector with noise (the pursuit workload)."""
    cfg = waveform.SrsConfig()
    c = np.zeros(cfg.m_srs, dtype=np.complex128)
    m = np.arange(cfg.m_srs)
    for i, w in enumerate((0, 2, 4, 6)):
        f = w / 8.0 - rng.uniform(0, 3) / cfg.half_len
        c += 10 ** (-i * 3 / 20) * np.exp(2j * np.pi * f * m)
    c += 0.05 * (rng.standard_normal(cfg.m_srs) + 1j * rng.standard_normal(cfg.m_srs))
    return c


class use_pursuit_backend:
    """Temporarily bind ident's pursuit kernels to one implementation."""

    def __init__(self, module):
        self.module = module

    def __enter__(self):
        kernels = ident._kernels
        self.saved = {n: getattr(kernels, n) for n in _PURSUIT_NAMES}
        for n in _PURSUIT_NAMES:
            setattr(kernels, n, getattr(self.module, n))

    def __exit__(self, *exc):
        for n, fn in self.saved.items():
            setattr(ident._kernels, n, fn)


def report(label: str, t_np: float, t_cy: float | None) -> None:
    if t_cy is None:
        print(f"{label:<38} numpy {t_np * 1e3:9.3f} ms   compiled unavailable")
    else:
        print(
            f"{label:<38} numpy {t_np * 1e3:9.3f} ms   "
            f"compiled {t_cy * 1e3:9.3f} ms   x{t_np / t_cy:6.2f}"
        )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1 << 21,
                    help="capture length for the metric benchmark")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"compiled kernels available: {HAVE_COMPILED}")

    y = make_capture(args.samples, rng)
    half = waveform.SrsConfig().half_len
    t_np = best_of(lambda: metric_np.sliding_metric(y, half), args.repeats)
    t_cy = (
        best_of(lambda: _metric_cy.sliding_metric(y, half), args.repeats)
        if HAVE_COMPILED
        else None
    )
    report(f"sliding_metric ({args.samples} samples)", t_np, t_cy)

    c = make_despread(rng)
    n_micro = 2000

    def micro(mod):
        def run():
            x = c.copy()
            for _ in range(n_micro):
                f = mod.newton_refine(x, 0.124, 4, 0.01)
                a = mod.project(x, f)
                mod.add_tone(x, f, -0.0001 * a)
                mod.mean_power(x)

        return run

    t_np = best_of(micro(pursuit_np), args.repeats)
    t_cy = best_of(micro(_pursuit_cy), args.repeats) if HAVE_COMPILED else None
    report(f"pursuit primitives ({n_micro} rounds)", t_np, t_cy)

    n_mp = 50

    def full(mod):
        def run():
            with use_pursuit_backend(mod):
                for _ in range(n_mp):
                    ident.matching_pursuit(c, half)

        return run

    t_np = best_of(full(pursuit_np), args.repeats)
    t_cy = best_of(full(_pursuit_cy), args.repeats) if HAVE_COMPILED else None
    report(f"matching_pursuit ({n_mp} calls)", t_np, t_cy)


if __name__ == "__main__":
    main()
