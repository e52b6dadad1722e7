"""Dense 2D probability mass functions and the grid algebra built on them.

Every field is a row-major float64 array indexed ``[row, col]``. A *mass grid*
is any finite, non-negative array; a *PMF* additionally sums to one (within
1e-9). Kernels are centered: cell ``((h-1)//2, (w-1)//2)`` represents offset
(0, 0), so convolving with a delta placed there is the identity.

Boundary policy is zero padding everywhere; callers renormalize after
composing, so mass that leaks past the frame edge is simply redistributed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ZeroMassError

# Total mass at or below this is treated as "no mass at all".
EPS_MASS = 1e-12

# normalize() leaves a grid untouched when its mass is already this close to
# one. Keeps normalize exactly idempotent and lets alpha=0 shape updates be
# bitwise no-ops.
UNIT_TOL = 1e-9

# Crossover to the spectral backend; below this direct summation wins.
FFT_MIN_DIM = 32


def normalize(grid):
    """Scale a non-negative mass grid to unit total mass.

    Returns the input array itself when its mass is already within
    ``UNIT_TOL`` of one. Raises :class:`ZeroMassError` when total mass is at
    or below ``EPS_MASS``; callers decide how to recover (see the tracker's
    reseed rule).
    """
    total = float(grid.sum())
    if not math.isfinite(total):
        raise ValueError("mass grid contains non-finite values")
    if total <= EPS_MASS:
        raise ZeroMassError(f"total mass {total:g} <= {EPS_MASS:g}")
    if abs(total - 1.0) <= UNIT_TOL:
        return grid
    return grid / total


def _pick_method(a, b, method):
    if method != "auto":
        return method
    if min(a.shape + b.shape) >= FFT_MIN_DIM:
        return "fft"
    return "direct"


def convolve(a, b, method="auto"):
    """Zero-padded 2D convolution of mass grids, output on the domain of ``a``.

    ``b`` acts as a centered kernel: out[i] = sum_d a[i-d] * b[c+d] with
    c = ((hb-1)//2, (wb-1)//2). Inputs are assumed non-negative; the spectral
    path clips its tiny negative ringing back to zero so downstream products
    stay valid mass grids.
    """
    m = _pick_method(a, b, method)
    if m == "fft":
        out = signal.fftconvolve(a, b, mode="same")
        np.maximum(out, 0.0, out=out)
        return out
    return signal.convolve2d(a, b, mode="same", boundary="fill")


def cross_correlate(a, b, method="auto"):
    """Zero-padded 2D cross-correlation: ``convolve`` with ``b`` index-reversed.

    out[i] = sum_d a[i+d] * b[c+d], so a peak appears where the pattern in
    ``b`` aligns with ``a`` shifted by the output position.
    """
    return convolve(a, b[::-1, ::-1], method=method)


def displacement_pmf(a, b, out_shape, method="auto"):
    """Mass over coordinate differences (index in ``a`` minus index in ``b``).

    Returns a grid of shape ``out_shape`` whose center cell is zero
    displacement. This is the full cross-correlation of ``a`` against ``b``,
    cropped to a centered window; it realizes difference relationships such
    as velocity = position_now - position_before on their own small domains.
    """
    out_h, out_w = out_shape
    m = _pick_method(a, b, method)
    flipped = b[::-1, ::-1]
    if m == "fft":
        full = signal.fftconvolve(a, flipped, mode="full")
        np.maximum(full, 0.0, out=full)
    else:
        full = signal.convolve2d(a, flipped, mode="full", boundary="fill")
    # Zero displacement sits at index (hb-1, wb-1) of the full correlation.
    zr, zc = b.shape[0] - 1, b.shape[1] - 1
    r0 = zr - (out_h - 1) // 2
    c0 = zc - (out_w - 1) // 2
    out = np.zeros(out_shape, dtype=full.dtype)
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + out_h, full.shape[0]), min(c0 + out_w, full.shape[1])
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = full[rs:re, cs:ce]
    return out


def delta_pmf(h, w, pos):
    """Unit point mass at integer cell ``pos`` of an ``h`` x ``w`` grid."""
    out = np.zeros((h, w))
    r = min(max(int(round(pos[0])), 0), h - 1)
    c = min(max(int(round(pos[1])), 0), w - 1)
    out[r, c] = 1.0
    return out


def gaussian_pmf(h, w, sigma, center):
    """Truncated, renormalized 2D Gaussian PMF on an ``h`` x ``w`` grid.

    ``sigma`` may be a scalar or a ``(sigma_row, sigma_col)`` pair; ``center``
    is a (row, col) position, not necessarily integer or inside the grid.
    A vanishing sigma (or full underflow) clamps to a delta at the nearest
    in-grid cell.
    """
    try:
        sr, sc = sigma
    except TypeError:
        sr = sc = sigma
    if sr <= 1e-6 or sc <= 1e-6:
        return delta_pmf(h, w, center)
    rows = np.arange(h, dtype=float) - center[0]
    cols = np.arange(w, dtype=float) - center[1]
    gr = np.exp(-0.5 * (rows / sr) ** 2)
    gc = np.exp(-0.5 * (cols / sc) ** 2)
    grid = np.outer(gr, gc)
    total = grid.sum()
    if total <= EPS_MASS:
        return delta_pmf(h, w, center)
    return grid / total


def argmax_cell(p):
    """(row, col) of the first maximum in row-major order."""
    return np.unravel_index(int(np.argmax(p)), p.shape)


def argmax_delta(p):
    """Delta PMF at the first row-major maximum of ``p`` (deterministic ties)."""
    out = np.zeros_like(p)
    out[argmax_cell(p)] = 1.0
    return out


def energy(p):
    """Sum of squared cell masses; 1 for a delta, 1/(h*w) for uniform."""
    return float(np.square(p).sum())


@dataclass(frozen=True)
class OrientedBox:
    """Oriented bounding box from a second-order moment ellipse.

    ``cx``/``cy`` are pixel coordinates (x = column, y = row); ``half_len`` and
    ``half_wid`` are the 2-sigma half extents along the major and minor axes;
    ``angle`` is the major-axis inclination from the +x axis in [0, pi).
    """

    cx: float
    cy: float
    half_len: float
    half_wid: float
    angle: float

    def corners(self):
        """4x2 array of (x, y) corners in rotational order."""
        ux, uy = math.cos(self.angle), math.sin(self.angle)
        lx, ly = self.half_len * ux, self.half_len * uy
        wx, wy = -self.half_wid * uy, self.half_wid * ux
        return np.array([
            [self.cx + lx + wx, self.cy + ly + wy],
            [self.cx - lx + wx, self.cy - ly + wy],
            [self.cx - lx - wx, self.cy - ly - wy],
            [self.cx + lx - wx, self.cy + ly - wy],
        ])

    @property
    def rect_area(self):
        return 4.0 * self.half_len * self.half_wid

    @property
    def ellipse_area(self):
        return math.pi * self.half_len * self.half_wid


def moment_ellipse(p, scale=2.0):
    """Second-order moment ellipse of a PMF as an :class:`OrientedBox`.

    The covariance gets a +1/12 per-axis cell-extent term so that discrete
    grids reproduce continuous uniform-shape variances (w^2/12 for extent w).
    A pure point mass has no ellipse and returns a zero-extent box at the
    mass location.
    """
    h, w = p.shape
    rows = np.arange(h, dtype=float)
    cols = np.arange(w, dtype=float)
    pr = p.sum(axis=1)
    pc = p.sum(axis=0)
    total = pr.sum()
    if total <= EPS_MASS:
        raise ZeroMassError("moment ellipse of an empty grid")
    cy = float(rows @ pr) / total
    cx = float(cols @ pc) / total
    var_y = float(((rows - cy) ** 2) @ pr) / total
    var_x = float(((cols - cx) ** 2) @ pc) / total
    cov_xy = float((p * np.outer(rows - cy, cols - cx)).sum()) / total
    if var_x + var_y <= 1e-12:
        return OrientedBox(cx=cx, cy=cy, half_len=0.0, half_wid=0.0, angle=0.0)
    cov = np.array([[var_x + 1.0 / 12.0, cov_xy],
                    [cov_xy, var_y + 1.0 / 12.0]])
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals, 0.0)
    # eigh returns ascending order: index 1 is the major axis.
    major = evecs[:, 1]
    angle = math.atan2(major[1], major[0]) % math.pi
    return OrientedBox(
        cx=cx,
        cy=cy,
        half_len=scale * math.sqrt(evals[1]),
        half_wid=scale * math.sqrt(evals[0]),
        angle=angle,
    )
