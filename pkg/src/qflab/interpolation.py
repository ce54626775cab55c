"""Separable cubic-spline interpolation on uniform periodic grids.

One interpolator per array; prefiltering happens once at construction so
repeated evaluation (RK4 stages over whole ensembles) stays cheap.  Spline
filtering is linear, so two interpolators over the same grid can be blended
coefficient-wise -- the wave evolver uses that for linear-in-time frame
interpolation.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_ORDER = 3
_MODE = "grid-wrap"


class CubicGridInterpolator:
    """Cubic B-spline evaluator for one (real or complex) gridded array."""

    def __init__(self, axes, values=None, coefficients=None):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.origins = np.array([a[0] for a in self.axes])
        self.steps = np.array([a[1] - a[0] for a in self.axes])
        self.lengths = np.array([a.size for a in self.axes], dtype=float)
        if coefficients is not None:
            self.coefficients = coefficients
        else:
            values = np.asarray(values)
            if np.iscomplexobj(values):
                self.coefficients = (
                    ndimage.spline_filter(values.real, order=_ORDER, mode=_MODE)
                    + 1j * ndimage.spline_filter(values.imag, order=_ORDER, mode=_MODE)
                )
            else:
                self.coefficients = ndimage.spline_filter(
                    values, order=_ORDER, mode=_MODE
                )

    def blend(self, other: "CubicGridInterpolator", weight: float):
        """Interpolator for (1-weight)*self + weight*other (shared grid)."""
        coeffs = (1.0 - weight) * self.coefficients + weight * other.coefficients
        return CubicGridInterpolator(self.axes, coefficients=coeffs)

    def _fractional_indices(self, points: np.ndarray) -> np.ndarray:
        # points: (n, ndim) -> (ndim, n) fractional grid indices, wrapped
        idx = (points - self.origins) / self.steps
        return np.mod(idx, self.lengths).T

    def __call__(self, points) -> np.ndarray:
        """Evaluate at points of shape (n, ndim) or (ndim,)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self._fractional_indices(pts)
        c = self.coefficients
        if np.iscomplexobj(c):
            out = ndimage.map_coordinates(
                c.real, idx, order=_ORDER, prefilter=False, mode=_MODE
            ) + 1j * ndimage.map_coordinates(
                c.imag, idx, order=_ORDER, prefilter=False, mode=_MODE
            )
        else:
            out = ndimage.map_coordinates(
                c, idx, order=_ORDER, prefilter=False, mode=_MODE
            )
        return out
