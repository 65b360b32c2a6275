"""Separable Gaussian-derivative filtering and integral-image box sums.

This is the numerical engine behind every scale of the ridge index:
sampled Gaussian derivative kernels, separable convolution with mirrored
borders, and summed-area tables for O(1) box means of arbitrary size.

Kernel normalization is chosen so that responses are comparable across
scales without an extra scale-power factor: the order-0 kernel preserves
constants, the order-1 kernel maps a unit-slope ramp to 1, and the order-2
kernel maps the half-quadratic x^2/2 to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d


@dataclass(frozen=True)
class Kernel1D:
    """Odd-length 1-D filter tap set.

    ``gaussian_kernel`` is the normal constructor; building one directly
    from arbitrary taps is allowed (custom filters, tests) as long as the
    tap count is odd so the kernel has an exact center.

    Attributes
    ----------
    taps : np.ndarray
        Filter coefficients, centered; ``taps[half]`` is the center tap.
    sigma : float
        Standard deviation the taps were sampled at (informational for
        hand-built kernels).
    order : int
        Derivative order, 0, 1 or 2.
    """

    taps: np.ndarray
    sigma: float
    order: int

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size % 2 == 0:
            raise ValueError("kernel taps must be a 1-D array of odd length")
        object.__setattr__(self, "taps", taps)

    @property
    def half(self) -> int:
        """Half-width; the full window is ``2 * half + 1`` taps."""
        return self.taps.size // 2


def gaussian_kernel(sigma: float, order: int) -> Kernel1D:
    """Sample a Gaussian derivative kernel of the given order.

    Taps are evaluated on integer offsets within +/- ceil(3 * sigma), so the
    full window has ``2 * ceil(3 * sigma) + 1`` taps with an exact center.
    Symmetry is exact by construction (taps are mirrored from the
    nonnegative half), and each order is normalized to unit response on its
    canonical polynomial under convolution:

    - order 0: taps sum to 1 (constants preserved),
    - order 1: first moment is -1, so a unit-slope ramp maps to +1,
    - order 2: zero sum is enforced, second moment is 2, so x^2/2 maps to 1.

    Parameters
    ----------
    sigma : float
        Standard deviation in pixels, > 0.
    order : int
        Derivative order, one of 0, 1, 2.

    Returns
    -------
    Kernel1D
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")

    half = math.ceil(3.0 * sigma)
    m = np.arange(half + 1, dtype=np.float64)
    g = np.exp(-(m * m) / (2.0 * sigma * sigma))

    if order == 0:
        right = g
        taps = np.concatenate([right[:0:-1], right])
        taps /= taps.sum()
    elif order == 1:
        right = -(m / sigma**2) * g
        # Odd mirror keeps taps[-m] == -taps[m] exact in floating point.
        taps = np.concatenate([-right[:0:-1], right])
        offsets = np.arange(-half, half + 1, dtype=np.float64)
        first_moment = float(np.sum(offsets * taps))
        taps *= -1.0 / first_moment
    else:
        right = ((m * m - sigma**2) / sigma**4) * g
        taps = np.concatenate([right[:0:-1], right])
        taps -= taps.mean()
        offsets = np.arange(-half, half + 1, dtype=np.float64)
        second_moment = float(np.sum(offsets * offsets * taps))
        taps *= 2.0 / second_moment

    return Kernel1D(taps=taps, sigma=float(sigma), order=order)


def convolve_separable(
    field: np.ndarray,
    kx: Kernel1D,
    ky: Kernel1D,
    border: str = "reflect",
) -> np.ndarray:
    """Convolve a 2-D field with a separable kernel pair.

    Rows are filtered with ``kx`` (along axis 1), then columns with ``ky``
    (along axis 0). The border is mirror-extended without repeating the
    edge pixel (``abcd`` extends to ``dcb|abcd|cba``), which preserves the
    DC level and does not invent gradients at the image edge.

    Parameters
    ----------
    field : np.ndarray
        2-D input.
    kx, ky : Kernel1D
        Kernels applied along columns (x) and rows (y) respectively.
    border : str
        Only ``"reflect"`` is supported.

    Returns
    -------
    np.ndarray
        Filtered field, same shape as the input, float64.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError("field must be 2-D")
    if border != "reflect":
        raise ValueError(f"unsupported border mode: {border}")
    rows, cols = field.shape
    if kx.taps.size >= 2 * cols or ky.taps.size >= 2 * rows:
        raise ValueError(
            f"kernel too large for image: {kx.taps.size}x{ky.taps.size} taps "
            f"on a {rows}x{cols} field"
        )
    # scipy's "mirror" mode is the no-edge-repeat reflection used here.
    out = convolve1d(field, kx.taps, axis=1, mode="mirror")
    out = convolve1d(out, ky.taps, axis=0, mode="mirror")
    return out


def integral_image(field: np.ndarray) -> np.ndarray:
    """Build a summed-area table with a zero top row and left column.

    ``S[r, c]`` holds the sum of ``field[i, j]`` for all ``i < r, j < c``,
    so any rectangle sum costs four lookups.

    Returns
    -------
    np.ndarray
        ``(rows + 1, cols + 1)`` float64 table.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError("field must be 2-D")
    rows, cols = field.shape
    table = np.zeros((rows + 1, cols + 1), dtype=np.float64)
    np.cumsum(field, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table


def box_mean(integral: np.ndarray, center: tuple[int, int], half: int) -> float:
    """Mean of the source field over a square window, clipped to the image.

    The window is ``[r - half, r + half] x [c - half, c + half]`` around
    ``center = (r, c)``; parts outside the image are discarded and the sum
    is divided by the clipped pixel count, so the result is always a true
    mean of in-image pixels.
    """
    rows = integral.shape[0] - 1
    cols = integral.shape[1] - 1
    r, c = center
    if not (0 <= r < rows and 0 <= c < cols):
        raise ValueError(f"center {center} outside a {rows}x{cols} image")
    if half < 0:
        raise ValueError("half must be nonnegative")
    r0 = max(r - half, 0)
    r1 = min(r + half, rows - 1)
    c0 = max(c - half, 0)
    c1 = min(c + half, cols - 1)
    total = (
        integral[r1 + 1, c1 + 1]
        - integral[r0, c1 + 1]
        - integral[r1 + 1, c0]
        + integral[r0, c0]
    )
    return float(total) / ((r1 - r0 + 1) * (c1 - c0 + 1))


def box_mean_grid(integral: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Vectorized ``box_mean`` with a per-pixel half-width map.

    Parameters
    ----------
    integral : np.ndarray
        Summed-area table from ``integral_image``.
    half : np.ndarray
        Integer half-width per pixel, shape ``(rows, cols)``, >= 0.

    Returns
    -------
    np.ndarray
        Clipped-window mean per pixel.
    """
    rows = integral.shape[0] - 1
    cols = integral.shape[1] - 1
    half = np.asarray(half)
    if half.shape != (rows, cols):
        raise ValueError("half-width map shape must match the source field")
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    r0 = np.maximum(rr - half, 0)
    r1 = np.minimum(rr + half, rows - 1)
    c0 = np.maximum(cc - half, 0)
    c1 = np.minimum(cc + half, cols - 1)
    total = (
        integral[r1 + 1, c1 + 1]
        - integral[r0, c1 + 1]
        - integral[r1 + 1, c0]
        + integral[r0, c0]
    )
    return total / ((r1 - r0 + 1) * (c1 - c0 + 1))
