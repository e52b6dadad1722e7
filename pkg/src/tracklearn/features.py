"""Generic per-frame feature extraction.

A raw frame becomes 25 candidate feature maps: one forward motion-history
image plus 24 filter-bank responses over the preprocessed (whitened,
mean-subtracted, rms-normalized) grayscale frame. Each map is min-max
rescaled to [0, 1] so downstream 64-bin histograms have fixed bin edges.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import DimensionMismatchError, EmptyFrameError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
WHITEN_CUTOFF = 200.0  # cycles/image
MHI_DECAY = 1.0 / 15.0
MHI_DIFF_THRESH = 0.1

_BANK_MAGIC = b"FBNK"


@dataclass
class FilterBank:
    """A stack of square convolution kernels, ``kernels[k]`` of shape (size, size)."""

    kernels: np.ndarray

    @property
    def count(self):
        return self.kernels.shape[0]

    @property
    def size(self):
        return self.kernels.shape[1]


def gabor_bank(size=16):
    """Deterministic stand-in filter bank: 24 Gabor kernels over 6
    orientations, 2 scales and 2 phases, each zero-mean and unit L2 norm.

    Used whenever no learned bank file is supplied. Envelope widths and
    wavelengths scale with ``size`` (sigma 2.5/4.5 px and wavelength 5/9 px
    at the default 16).
    """
    coords = np.arange(size, dtype=float) - (size - 1) / 2.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    gamma = 0.8
    s_base = size / 6.4
    kernels = []
    for sigma, wavelength in ((s_base, 2.0 * s_base), (1.8 * s_base, 3.6 * s_base)):
        for k in range(6):
            theta = k * np.pi / 6.0
            xr = xx * np.cos(theta) + yy * np.sin(theta)
            yr = -xx * np.sin(theta) + yy * np.cos(theta)
            envelope = np.exp(-(xr ** 2 + (gamma * yr) ** 2) / (2.0 * sigma ** 2))
            for phase in (0.0, np.pi / 2.0):
                kern = envelope * np.cos(2.0 * np.pi * xr / wavelength + phase)
                kern = kern - kern.mean()
                norm = np.sqrt((kern ** 2).sum())
                if norm > 0:
                    kern = kern / norm
                kernels.append(kern)
    return FilterBank(kernels=np.stack(kernels))


def save_bank(path, bank):
    """Write a bank as little-endian binary: magic, u32 count, u32 size, f64 kernels."""
    with open(path, "wb") as fh:
        fh.write(_BANK_MAGIC)
        fh.write(struct.pack("<II", bank.count, bank.size))
        fh.write(bank.kernels.astype("<f8").tobytes())


def load_bank(path):
    """Load a filter bank from the binary format or from plain CSV.

    CSV layout is count*size rows by size columns (kernels stacked
    vertically). The format is sniffed from the leading magic bytes.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _BANK_MAGIC:
            count, size = struct.unpack("<II", fh.read(8))
            data = np.frombuffer(fh.read(count * size * size * 8), dtype="<f8")
            if data.size != count * size * size:
                raise ValueError(f"truncated filter bank file: {path}")
            return FilterBank(kernels=data.reshape(count, size, size).astype(float))
    raw = np.loadtxt(path, delimiter=",", dtype=float)
    size = raw.shape[1]
    if raw.shape[0] % size != 0:
        raise ValueError(f"CSV bank rows ({raw.shape[0]}) not a multiple of size ({size})")
    count = raw.shape[0] // size
    return FilterBank(kernels=raw.reshape(count, size, size))


def to_gray(frame):
    """Luminance grayscale; uint8 input is scaled to [0, 1]."""
    arr = np.asarray(frame)
    if arr.dtype == np.uint8:
        arr = arr.astype(float) / 255.0
    else:
        arr = arr.astype(float)
    if arr.ndim == 3:
        r, g, b = LUMA_WEIGHTS
        arr = r * arr[..., 0] + g * arr[..., 1] + b * arr[..., 2]
    return arr


def downsample(gray, factor):
    """Block-average downsampling; trailing rows/cols that do not fill a block
    are dropped."""
    if factor <= 1:
        return gray
    h, w = gray.shape
    h2, w2 = h // factor, w // factor
    if h2 == 0 or w2 == 0:
        raise EmptyFrameError("frame smaller than downsample factor")
    trimmed = gray[: h2 * factor, : w2 * factor]
    return trimmed.reshape(h2, factor, w2, factor).mean(axis=(1, 3))


def whiten(gray, cutoff=WHITEN_CUTOFF):
    """Spectral whitening with response f * exp(-(f/cutoff)^4).

    ``f`` is the radial frequency in cycles/image; the DC component is
    removed exactly.
    """
    h, w = gray.shape
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.rfftfreq(w) * w
    f = np.hypot(fy[:, None], fx[None, :])
    response = f * np.exp(-((f / cutoff) ** 4))
    spec = np.fft.rfft2(gray) * response
    return np.fft.irfft2(spec, s=(h, w))


def preprocess(frame, downsample_factor=2, cutoff=WHITEN_CUTOFF):
    """Frame -> whitened, zero-mean, unit-rms grayscale field.

    Steps: grayscale, block-average downsample, whitening, mean subtraction,
    rms normalization. An all-constant frame whitens to zero everywhere; the
    rms division is skipped in that case and the zero field is returned.
    """
    arr = np.asarray(frame)
    if arr.size == 0:
        raise EmptyFrameError("empty frame")
    gray = to_gray(arr)
    gray = downsample(gray, downsample_factor)
    out = whiten(gray, cutoff=cutoff)
    out = out - out.mean()
    rms = np.sqrt((out ** 2).mean())
    if rms <= 1e-12:
        return np.zeros_like(out)
    return out / rms


def motion_history(prev_mhi, cur, prev, decay=MHI_DECAY, diff_thresh=MHI_DIFF_THRESH):
    """Forward motion-history image update.

    Cells where |cur - prev| exceeds ``diff_thresh`` are set to 1; everywhere
    else the previous trail fades by ``decay`` (floored at 0).
    """
    if prev_mhi.shape != cur.shape or cur.shape != prev.shape:
        raise DimensionMismatchError(
            f"MHI shapes differ: {prev_mhi.shape}, {cur.shape}, {prev.shape}")
    moved = np.abs(cur - prev) > diff_thresh
    return np.where(moved, 1.0, np.maximum(prev_mhi - decay, 0.0))


@dataclass
class FeatureStack:
    """Candidate feature maps for one frame.

    ``maps`` has shape (n, h, w) with every map in [0, 1]; ``ids`` are the
    1-based feature identifiers (id 1 is the motion-history image, the rest
    are filter responses in bank order).
    """

    maps: np.ndarray
    ids: np.ndarray

    @property
    def frame_shape(self):
        return self.maps.shape[1:]


def _rescale_unit(m):
    lo = m.min()
    hi = m.max()
    if hi - lo <= 0:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def apply_filter_bank(frame, bank, mhi=None):
    """Run the bank over a preprocessed frame and assemble the feature stack.

    Each response is a same-size zero-padded convolution, then min-max
    rescaled to [0, 1] (a constant response rescales to all zeros). When
    ``mhi`` is given it is prepended unchanged as feature 1.
    """
    maps = []
    if mhi is not None:
        if mhi.shape != frame.shape:
            raise DimensionMismatchError(
                f"MHI shape {mhi.shape} != frame shape {frame.shape}")
        maps.append(np.clip(mhi, 0.0, 1.0))
    for kern in bank.kernels:
        resp = signal.fftconvolve(frame, kern, mode="same")
        maps.append(_rescale_unit(resp))
    stacked = np.stack(maps)
    return FeatureStack(maps=stacked, ids=np.arange(1, stacked.shape[0] + 1))
