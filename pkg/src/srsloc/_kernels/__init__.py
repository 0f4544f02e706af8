"""Numeric kernel backend selection.

Two kernel families run hot enough to justify compiled twins: the sliding
repetition metric and the matching-pursuit tone primitives. The compiled
Cython versions are preferred; the numpy implementations are drop-in
fallbacks. Selection is all-or-nothing so the reported backend describes
every kernel. Set SRSLOC_FORCE_PURE=1 to force the fallback.
"""

from __future__ import annotations

import os

from . import metric_np, pursuit_np

_BACKEND = "numpy"
sliding_metric = metric_np.sliding_metric
add_tone = pursuit_np.add_tone
project = pursuit_np.project
mean_power = pursuit_np.mean_power
newton_refine = pursuit_np.newton_refine

if not os.environ.get("SRSLOC_FORCE_PURE"):
    try:
        from . import _metric_cy, _pursuit_cy

        sliding_metric = _metric_cy.sliding_metric
        add_tone = _pursuit_cy.add_tone
        project = _pursuit_cy.project
        mean_power = _pursuit_cy.mean_power
        newton_refine = _pursuit_cy.newton_refine
        _BACKEND = "compiled"
    except ImportError:
        pass


def backend() -> str:
    """Active kernel backend: 'compiled' or 'numpy'."""
    return _BACKEND
