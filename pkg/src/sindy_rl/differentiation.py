"""Time-derivative estimation from sampled state sequences.

The smoothed differentiator fits a local least-squares polynomial over a
sliding window (Savitzky-Golay style) and returns its analytic derivative at
the window center.  Boundary rows fall back to the one-sided polynomial fit
of the nearest full window and are flagged outside ``valid_range`` because
their accuracy is degraded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

__all__ = ["DerivativeEstimate", "smoothed_finite_difference", "central_difference"]


@dataclass(frozen=True)
class DerivativeEstimate:
    """Per-sample derivative values plus the index range meeting full accuracy.

    ``valid_range`` is a half-open interval ``(start, stop)``; rows outside
    it come from one-sided boundary treatment.
    """

    values: np.ndarray
    valid_range: tuple[int, int]

    @property
    def valid_slice(self) -> slice:
        return slice(*self.valid_range)


def _as_state_matrix(states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.ndim != 2:
        raise ValueError(f"states must be 1-D or 2-D, got shape {states.shape}")
    if not np.all(np.isfinite(states)):
        raise ValueError("states contain non-finite entries")
    return states


def smoothed_finite_difference(
    states: np.ndarray,
    dt: float,
    window: int = 7,
    poly_order: int = 3,
) -> DerivativeEstimate:
    """Savitzky-Golay derivative of each state column.

    Interior rows use the centered window fit; the first and last
    ``window // 2`` rows reuse the polynomial fitted to the nearest full
    window (one-sided) and are excluded from ``valid_range``.
    """
    states = _as_state_matrix(states)
    n_rows = states.shape[0]
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    if poly_order < 1 or poly_order >= window:
        raise ValueError(f"poly_order must satisfy 1 <= poly_order < window, got {poly_order}")
    if n_rows < window:
        raise ValueError(f"need at least {window} samples, got {n_rows}")
    values = savgol_filter(states, window, poly_order, deriv=1, delta=dt,
                           axis=0, mode="interp")
    half = window // 2
    return DerivativeEstimate(values=values, valid_range=(half, n_rows - half))


def central_difference(states: np.ndarray, dt: float) -> DerivativeEstimate:
    """Second-order central differences, first-order one-sided at the ends."""
    states = _as_state_matrix(states)
    n_rows = states.shape[0]
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_rows < 3:
        raise ValueError(f"need at least 3 samples, got {n_rows}")
    values = np.gradient(states, dt, axis=0, edge_order=1)
    return DerivativeEstimate(values=values, valid_range=(1, n_rows - 1))
