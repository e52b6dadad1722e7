"""A single shape-estimating tracker over 2D probability mass functions.

The tracker carries PMFs for position (frame domain), velocity (small
centered offset domain), shape (centered offset domain) and its rendered
object image (frame domain). Each frame it predicts by traversing down the
state hierarchy with convolutions, measures by traversing back up with
cross-correlations against the fused detection map, and blends the two with
Bayesian products. Shape memory is vigilance-gated: observations that match
the remembered shape poorly are not written back.

Update order within a frame is position-first: the posterior position is
formed (including any competition mass from the multi-tracker layer), its
argmax extracts the observed shape, and only then are shape and velocity
smoothed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroMassError
from .pmf import (
    EPS_MASS,
    argmax_cell,
    displacement_pmf,
    convolve,
    cross_correlate,
    gaussian_pmf,
    normalize,
)
from .selection import N_BINS, update_feature_posterior

_STATE_MAGIC = b"SEFS"
_STATE_VERSION = 1


def _odd_kernel_size(sigma):
    # covers +-4 sigma
    return 2 * int(np.ceil(4.0 * sigma)) + 1


@dataclass
class SefParams:
    """Shared static parameters and prior kernels for all trackers."""

    shape_dim: int = 71
    v_max: int = 16
    vigilance: float = 0.3
    accel_sigma: float = 0.5        # px/frame^2, velocity process noise
    shape_drift_sigma: float = 0.5  # px/frame, shape process noise
    shape_prior_sigma: float = 12.0  # px, centering envelope on the shape domain
    init_pos_sigma: float = 12.0
    init_vel_sigma: float = 1.0
    shape_measure_mode: str = "argmax"  # "argmax" or "posterior"

    accel_kernel: np.ndarray = field(init=False, repr=False)
    drift_kernel: np.ndarray = field(init=False, repr=False)
    shape_prior: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.shape_dim % 2 == 0 or self.v_max < 1:
            raise ValueError("shape_dim must be odd and v_max >= 1")
        ak = _odd_kernel_size(self.accel_sigma)
        dk = _odd_kernel_size(self.shape_drift_sigma)
        self.accel_kernel = gaussian_pmf(ak, ak, self.accel_sigma,
                                         ((ak - 1) / 2, (ak - 1) / 2))
        self.drift_kernel = gaussian_pmf(dk, dk, self.shape_drift_sigma,
                                         ((dk - 1) / 2, (dk - 1) / 2))
        c = (self.shape_dim - 1) / 2
        self.shape_prior = gaussian_pmf(self.shape_dim, self.shape_dim,
                                        self.shape_prior_sigma, (c, c))

    @property
    def vel_dim(self):
        return 2 * self.v_max + 1


@dataclass
class SefState:
    """One tracker's posterior state after a frame."""

    pos: np.ndarray           # PMF over the frame
    vel: np.ndarray           # PMF over velocity offsets (vel_dim square)
    shape: np.ndarray         # PMF over shape offsets (shape_dim square)
    img: np.ndarray           # rendered object image, PMF over the frame
    feat_post: np.ndarray     # learned feature response histograms (n_feat, bins)
    home: tuple               # (row, col) anchor for reseeding
    params: SefParams

    @property
    def frame_shape(self):
        return self.pos.shape


@dataclass
class SefPrediction:
    vel: np.ndarray
    pos: np.ndarray
    shape: np.ndarray
    img: np.ndarray


@dataclass
class SefMeasurement:
    """Bottom-up observations plus the already-competed posterior position.

    ``alpha`` is the gated shape-memory blend weight: rho^2 when the measured
    shape matches the predicted one at least as well as the vigilance
    threshold, else exactly 0. ``coasted`` marks a frame with no usable
    bottom-up evidence (measurements fell back to predictions).
    """

    pos_m: np.ndarray
    vel_m: np.ndarray
    shape_m: np.ndarray
    rho: float
    alpha: float
    pos_post: np.ndarray
    peak: tuple
    coasted: bool = False


def init_state(params, frame_shape, home, n_features):
    """Fresh tracker state anchored at ``home``: Gaussian position there,
    zero-centered Gaussian velocity, prior shape, uniform feature memory."""
    h, w = frame_shape
    vd = params.vel_dim
    vc = (vd - 1) / 2
    pos = gaussian_pmf(h, w, params.init_pos_sigma, home)
    vel = gaussian_pmf(vd, vd, params.init_vel_sigma, (vc, vc))
    shape = params.shape_prior.copy()
    img = normalize(stamp_shape(shape, (int(round(home[0])), int(round(home[1]))),
                                frame_shape))
    feat_post = np.full((n_features, N_BINS), 1.0 / N_BINS)
    return SefState(pos=pos, vel=vel, shape=shape, img=img,
                    feat_post=feat_post, home=home, params=params)


def reseed(state):
    """Reinitialize a dead tracker at its home cell (track death/rebirth)."""
    return init_state(state.params, state.frame_shape, state.home,
                      state.feat_post.shape[0])


def stamp_shape(shape, peak, frame_shape):
    """Place a shape-domain grid into the frame centered at ``peak``, clipped
    at the frame edges (unnormalized)."""
    h, w = frame_shape
    sd = shape.shape[0]
    half = (sd - 1) // 2
    out = np.zeros(frame_shape)
    r0, c0 = peak[0] - half, peak[1] - half
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + sd, h), min(c0 + sd, w)
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = shape[rs - r0:re - r0, cs - c0:ce - c0]
    return out


def extract_window(frame_grid, peak, dim):
    """Window of ``frame_grid`` centered at ``peak``, zero-padded to (dim, dim);
    the windowed view of cross-correlation against a delta at ``peak``."""
    h, w = frame_grid.shape
    half = (dim - 1) // 2
    out = np.zeros((dim, dim))
    r0, c0 = peak[0] - half, peak[1] - half
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + dim, h), min(c0 + dim, w)
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = frame_grid[rs:re, cs:ce]
    return out


def predict(state):
    """Traverse down the state hierarchy: velocity, position, shape, image.

    Raises :class:`ZeroMassError` when zero-padding pushes all mass out of a
    domain (e.g. a tracker predicting itself off the frame); the caller
    reseeds.
    """
    p = state.params
    vel_p = normalize(convolve(state.vel, p.accel_kernel))
    pos_p = normalize(convolve(state.pos, vel_p))
    shape_p = normalize(convolve(state.shape, p.drift_kernel))
    img_p = normalize(convolve(pos_p, shape_p))
    return SefPrediction(vel=vel_p, pos=pos_p, shape=shape_p, img=img_p)


def match_and_gate(shape_m, shape_p, vigilance):
    """Degree of match rho (cosine of the two shapes) and the gated blend
    weight alpha = rho^2 if rho >= vigilance else 0."""
    nm = float(np.sqrt(np.square(shape_m).sum()))
    np_ = float(np.sqrt(np.square(shape_p).sum()))
    if nm <= 0.0 or np_ <= 0.0:
        return 0.0, 0.0
    rho = float((shape_m * shape_p).sum() / (nm * np_))
    rho = min(max(rho, 0.0), 1.0)
    alpha = rho * rho if rho >= vigilance else 0.0
    return rho, alpha


def measure(state, pred, fused, assoc=None):
    """Traverse up the hierarchy against the fused detection map.

    The posterior position is formed here (association mass ``assoc``
    included) because the observed shape is extracted at its argmax. An
    all-zero detection map coasts: every measurement falls back to its
    prediction and the shape gate stays closed. A zero posterior-position
    product raises :class:`ZeroMassError` for the caller's reseed rule.
    """
    p = state.params
    if float(fused.sum()) <= EPS_MASS:
        prod = pred.pos * pred.pos
        if assoc is not None:
            prod = prod * assoc
        if prod.sum() <= EPS_MASS:
            raise ZeroMassError("posterior position vanished while coasting")
        pos_post = normalize(prod)
        return SefMeasurement(pos_m=pred.pos, vel_m=pred.vel, shape_m=pred.shape,
                              rho=0.0, alpha=0.0, pos_post=pos_post,
                              peak=argmax_cell(pos_post), coasted=True)

    template = pred.shape * p.shape_prior
    pos_m = normalize(cross_correlate(fused, template))

    prod = pos_m * pred.pos
    if assoc is not None:
        prod = prod * assoc
    if prod.sum() <= EPS_MASS:
        raise ZeroMassError("posterior position product has no mass")
    pos_post = normalize(prod)
    peak = argmax_cell(pos_post)

    if p.shape_measure_mode == "posterior":
        shape_m = displacement_pmf(fused, pos_post, (p.shape_dim, p.shape_dim))
    else:
        shape_m = extract_window(fused, peak, p.shape_dim)
    sm_total = float(shape_m.sum())
    if sm_total <= EPS_MASS:
        # nothing observed under the window: keep remembered shape, gate shut
        shape_m = pred.shape
        rho, alpha = 0.0, 0.0
    else:
        shape_m = shape_m / sm_total
        rho, alpha = match_and_gate(shape_m, pred.shape, p.vigilance)

    vel_m = displacement_pmf(pos_m, state.pos, (p.vel_dim, p.vel_dim))
    vm_total = float(vel_m.sum())
    vel_m = vel_m / vm_total if vm_total > EPS_MASS else pred.vel

    return SefMeasurement(pos_m=pos_m, vel_m=vel_m, shape_m=shape_m,
                          rho=rho, alpha=alpha, pos_post=pos_post, peak=peak)


def smooth(state, pred, meas, feature_obs=None):
    """Blend predictions and measurements into the next posterior state.

    Shape memory is the vigilance-gated geometric blend
    shape_m^alpha * shape_p^(1-alpha); alpha == 0 keeps the predicted shape
    bitwise. The object image is the posterior shape stamped at the position
    argmax. ``feature_obs`` is an optional list of (feature_index, measured
    histogram) pairs used to update the learned feature responses.
    """
    p = state.params
    vel_post = normalize(meas.vel_m * pred.vel)

    if meas.alpha <= 0.0:
        shape_post = pred.shape
    elif meas.alpha >= 1.0:
        shape_post = normalize(meas.shape_m)
    else:
        blend = np.power(meas.shape_m, meas.alpha) * np.power(pred.shape,
                                                              1.0 - meas.alpha)
        shape_post = normalize(blend)

    img_post = normalize(stamp_shape(shape_post, meas.peak, state.frame_shape))

    feat_post = state.feat_post
    if feature_obs:
        feat_post = feat_post.copy()
        for idx, hist in feature_obs:
            feat_post[idx] = update_feature_posterior(feat_post[idx], hist)

    return SefState(pos=meas.pos_post, vel=vel_post, shape=shape_post,
                    img=img_post, feat_post=feat_post, home=state.home,
                    params=state.params)


def save_states(path, states):
    """Checkpoint a tracker population as flat little-endian binary."""
    if not states:
        raise ValueError("no states to save")
    h, w = states[0].frame_shape
    p = states[0].params
    n_feat = states[0].feat_post.shape[0]
    with open(path, "wb") as fh:
        fh.write(_STATE_MAGIC)
        fh.write(struct.pack("<IIIIIII", _STATE_VERSION, len(states), h, w,
                             p.shape_dim, p.vel_dim, n_feat))
        for st in states:
            fh.write(struct.pack("<dd", float(st.home[0]), float(st.home[1])))
            for arr in (st.pos, st.vel, st.shape, st.img, st.feat_post):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_states(path, params):
    """Restore a tracker population saved by :func:`save_states`."""
    with open(path, "rb") as fh:
        if fh.read(4) != _STATE_MAGIC:
            raise ValueError(f"not a tracker state file: {path}")
        version, k, h, w, shape_dim, vel_dim, n_feat = struct.unpack(
            "<IIIIIII", fh.read(28))
        if version != _STATE_VERSION:
            raise ValueError(f"unsupported state file version {version}")
        if shape_dim != params.shape_dim or vel_dim != params.vel_dim:
            raise ValueError("state file domain sizes do not match params")

        def read(count):
            return np.frombuffer(fh.read(count * 8), dtype="<f8").astype(float)

        states = []
        for _ in range(k):
            home = tuple(struct.unpack("<dd", fh.read(16)))
            pos = read(h * w).reshape(h, w)
            vel = read(vel_dim * vel_dim).reshape(vel_dim, vel_dim)
            shape = read(shape_dim * shape_dim).reshape(shape_dim, shape_dim)
            img = read(h * w).reshape(h, w)
            feat = read(n_feat * N_BINS).reshape(n_feat, N_BINS)
            states.append(SefState(pos=pos, vel=vel, shape=shape, img=img,
                                   feat_post=feat, home=home, params=params))
    return states
