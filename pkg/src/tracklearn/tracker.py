"""Competitive multi-tracker orchestration.

K shape-estimating trackers cover the scene from a rectangular grid of home
cells and compete for evidence each frame:

* attention masks beta split every pixel of fused detection evidence among
  trackers in proportion to their predicted object images, and
* association masses C split every position cell among trackers in
  proportion to their predicted positions (winner-take-more),

so each measurement is owned by the tracker that best explains it. The
per-frame schedule has two barriers: all predictions first (beta and C are
built from them), then fully independent per-tracker work, which makes the
step embarrassingly parallel and bit-deterministic for any worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroMassError
from .pmf import EPS_MASS, OrientedBox, argmax_cell, energy, moment_ellipse
from .selection import class_histograms, response_bins, select_and_fuse
from .shape_filter import SefParams, init_state, measure, predict, reseed, smooth

TRACK_CSV_FIELDS = ("frame", "sef_id", "cx", "cy", "half_len", "half_wid",
                    "angle", "energy", "rho")


@dataclass
class TrackerConfig:
    """Static configuration of the multi-tracker layer."""

    grid_rows: int = 8
    grid_cols: int = 14
    n_select: int = 6
    n_features: int = 25
    patch_scale: int = 3          # background patch extent in shape-domain units
    ellipse_scale: float = 2.0
    sef: SefParams = field(default_factory=SefParams)

    @property
    def n_trackers(self):
        return self.grid_rows * self.grid_cols


@dataclass
class TrackFrameOutput:
    """Per-tracker, per-frame record emitted by :func:`step`."""

    sef_id: int
    box: OrientedBox
    energy: float
    rho: float
    selected: tuple


def init_grid(cfg, frame_shape):
    """Tracker population on an evenly spaced grid of home cells.

    Homes sit at cell centers of a grid_rows x grid_cols partition of the
    frame, so spacing is height/rows by width/cols.
    """
    h, w = frame_shape
    states = []
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            home = ((r + 0.5) * h / cfg.grid_rows, (c + 0.5) * w / cfg.grid_cols)
            states.append(init_state(cfg.sef, frame_shape, home, cfg.n_features))
    return states


def competition_shares(stack_of_maps, eps=EPS_MASS):
    """Per-pixel share of each map in their sum.

    Where the summed mass is effectively zero no tracker has a claim and
    every share is 1/K, keeping the shares a valid partition of unity.
    """
    maps = np.asarray(stack_of_maps)
    total = maps.sum(axis=0)
    k = maps.shape[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        shares = np.where(total > eps, maps / total, 1.0 / k)
    return shares


def attention_masks(pred_imgs, eps=EPS_MASS):
    """Pixel-claim attention masks beta from predicted object images."""
    return competition_shares(pred_imgs, eps)


def association_masses(pred_positions, eps=EPS_MASS):
    """Winner-take-more association masses C from predicted positions."""
    return competition_shares(pred_positions, eps)


def _predict_or_reseed(state):
    try:
        return state, predict(state)
    except ZeroMassError:
        state = reseed(state)
        return state, predict(state)


def _patch_bounds(center, frame_shape, extent):
    h, w = frame_shape
    half = extent // 2
    r0 = max(int(center[0]) - half, 0)
    c0 = max(int(center[1]) - half, 0)
    r1 = min(int(center[0]) + half + 1, h)
    c1 = min(int(center[1]) + half + 1, w)
    return r0, r1, c0, c1


def _step_one(k, state, pred, stack, bin_idx, beta_k, assoc_k, cfg):
    """Feature selection, measurement and smoothing for one tracker."""
    patch = _patch_bounds(argmax_cell(state.img), state.frame_shape,
                          cfg.patch_scale * cfg.sef.shape_dim)
    r0, r1, c0, c1 = patch
    obj_mass = float(state.img[r0:r1, c0:c1].sum())
    area = (r1 - r0) * (c1 - c0)
    prior_obj = min(max(obj_mass / area, 1e-6), 1.0 - 1e-6)

    hists = [class_histograms(stack.maps[n], state.img, patch,
                              bin_idx=bin_idx[n])
             for n in range(stack.maps.shape[0])]
    sel = select_and_fuse(stack, hists, state.feat_post, cfg.n_select,
                          prior_obj, bin_idx=bin_idx)
    fused_k = beta_k * sel.fused

    feature_obs = [(int(fid) - 1, hists[int(fid) - 1][0]) for fid in sel.chosen]
    try:
        meas = measure(state, pred, fused_k, assoc_k)
        new_state = smooth(state, pred, meas, feature_obs=feature_obs)
    except ZeroMassError:
        # track death: restart at home and continue the frame
        state = reseed(state)
        pred = predict(state)
        try:
            meas = measure(state, pred, fused_k, assoc_k)
            new_state = smooth(state, pred, meas, feature_obs=feature_obs)
        except ZeroMassError:
            meas = measure(state, pred, np.zeros_like(fused_k), None)
            new_state = smooth(state, pred, meas)

    out = TrackFrameOutput(
        sef_id=k,
        box=moment_ellipse(new_state.img, scale=cfg.ellipse_scale),
        energy=energy(new_state.pos),
        rho=meas.rho,
        selected=tuple(int(i) for i in sel.chosen),
    )
    return new_state, out


def step(stack, states, cfg, workers=1, debug=None):
    """Advance every tracker by one frame against a shared feature stack.

    Returns (new_states, outputs). Tracker failures never abort the frame:
    a tracker whose mass dies is reseeded at its home cell mid-frame and
    continues. Pass a dict as ``debug`` to receive the frame's beta and C
    stacks (testing hook).
    """
    states_pred = [_predict_or_reseed(s) for s in states]
    states = [sp[0] for sp in states_pred]
    preds = [sp[1] for sp in states_pred]

    beta = attention_masks(np.stack([p.img for p in preds]))
    assoc = association_masses(np.stack([p.pos for p in preds]))
    if debug is not None:
        debug["beta"] = beta
        debug["assoc"] = assoc

    bin_idx = response_bins(stack.maps)

    def run(k):
        return _step_one(k, states[k], preds[k], stack, bin_idx,
                         beta[k], assoc[k], cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(states))))
    else:
        results = [run(k) for k in range(len(states))]

    new_states = [r[0] for r in results]
    outputs = [r[1] for r in results]
    return new_states, outputs


def track_csv_header(n_select):
    return list(TRACK_CSV_FIELDS) + [f"f{i + 1}" for i in range(n_select)]


def write_track_csv(path, rows_by_frame, n_select):
    """Write per-frame tracker outputs as CSV (floats with 6 decimals)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(track_csv_header(n_select))
        for frame, outputs in rows_by_frame:
            for out in outputs:
                b = out.box
                row = [frame, out.sef_id,
                       f"{b.cx:.6f}", f"{b.cy:.6f}",
                       f"{b.half_len:.6f}", f"{b.half_wid:.6f}",
                       f"{b.angle:.6f}", f"{out.energy:.6f}", f"{out.rho:.6f}"]
                row += [str(s) for s in out.selected]
                writer.writerow(row)


def read_track_csv(path):
    """Read a track CSV into a list of per-row dicts (extra columns kept)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            row = {
                "frame": int(rec["frame"]),
                "sef_id": int(rec["sef_id"]),
                "box": OrientedBox(cx=float(rec["cx"]), cy=float(rec["cy"]),
                                   half_len=float(rec["half_len"]),
                                   half_wid=float(rec["half_wid"]),
                                   angle=float(rec["angle"])),
                "energy": float(rec["energy"]),
                "rho": float(rec["rho"]),
            }
            if "label" in rec and rec["label"]:
                row["label"] = rec["label"]
            rows.append(row)
    return rows
