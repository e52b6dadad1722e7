"""End-to-end flows that the command line (and the tests) drive.

Everything here operates on in-memory frame sequences; file handling lives
in the CLI. The tracking loop is the canonical wiring: preprocess each
frame, update the motion history, run the filter bank, and step the tracker
population; per-frame outputs can be augmented with classifier labels or
captured posterior shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import classify, features, metrics, tracker
from .rng import substream, substream_seed


def build_bank(cfg, bank_path=None):
    """The learned filter bank from a file, or the deterministic stand-in."""
    if bank_path:
        return features.load_bank(bank_path)
    return features.gabor_bank(size=cfg.filter_size)


@dataclass
class FrameRecord:
    """Everything produced for one tracker in one frame."""

    frame: int
    output: tracker.TrackFrameOutput
    shape: np.ndarray = None        # posterior shape (float32) when captured
    scores: np.ndarray = None       # classifier score vector when classified
    label: str = None


def run_tracking(frames, cfg, bank=None, collect_shapes=False,
                 classifier=None, progress=None):
    """Track a frame sequence end to end.

    ``classifier`` is an optional per-frame callable
    (states, outputs, pre_frame) -> list of (scores, label); when given,
    every record carries classifier results. Returns a list of FrameRecord.
    """
    if bank is None:
        bank = build_bank(cfg)
    tcfg = cfg.tracker_config()
    records = []
    states = None
    mhi = None
    prev = None
    for t, frame in enumerate(frames):
        pre = features.preprocess(frame, downsample_factor=cfg.downsample,
                                  cutoff=cfg.whiten_cutoff)
        if states is None:
            states = tracker.init_grid(tcfg, pre.shape)
            mhi = np.zeros(pre.shape)
            prev = pre
        mhi = features.motion_history(mhi, pre, prev, decay=cfg.mhi_decay,
                                      diff_thresh=cfg.mhi_diff_thresh)
        prev = pre
        stack = features.apply_filter_bank(pre, bank, mhi=mhi)
        states, outputs = tracker.step(stack, states, tcfg,
                                       workers=cfg.workers)
        labeled = classifier(states, outputs, pre) if classifier else None
        for k, (st, out) in enumerate(zip(states, outputs)):
            rec = FrameRecord(frame=t, output=out)
            if collect_shapes:
                rec.shape = st.shape.astype(np.float32)
            if labeled is not None:
                rec.scores, rec.label = labeled[k]
            records.append(rec)
        if progress is not None:
            progress(t)
    return records


def _frame_patch_scores(model, outputs, pre):
    patches = np.stack([
        classify.extract_patch(pre, (out.box.cy, out.box.cx),
                               patch_size=model.patch_size,
                               mask_radius=model.mask_radius)
        for out in outputs])
    return classify.scnn_scores(patches, model)


def scnn_classifier(model):
    """Frame classifier: patches at track box centers, network argmax labels."""

    def classify_frame(states, outputs, pre):
        scores = _frame_patch_scores(model, outputs, pre)
        return [(s, model.classes[int(np.argmax(s))]) for s in scores]

    return classify_frame


def ensemble_classifier(scnn_model, ensemble):
    """Frame classifier combining patch scores with tracker state."""

    def classify_frame(states, outputs, pre):
        scores = _frame_patch_scores(scnn_model, outputs, pre)
        out = []
        for st, o, s in zip(states, outputs, scores):
            label, _ = ensemble.predict(s, o.box, o.energy, st.shape)
            out.append((s, label))
        return out

    return classify_frame


def records_to_rows(records):
    """FrameRecords -> track-CSV row dicts (as read_track_csv would yield)."""
    rows = []
    for rec in records:
        row = {"frame": rec.frame, "sef_id": rec.output.sef_id,
               "box": rec.output.box, "energy": rec.output.energy,
               "rho": rec.output.rho}
        if rec.label is not None:
            row["label"] = rec.label
        rows.append(row)
    return rows


def build_patch_set(frame_sets, gt_sets, cfg, per_class, seed,
                    holdout_jitter=False):
    """Balanced labeled patch batch from ground-truth boxes plus random
    background (clutter) sampling.

    ``frame_sets``/``gt_sets`` are parallel lists of preprocessed frame
    sequences and their ground-truth records. Object patches are re-extracted
    with fresh positional jitter until each class reaches ``per_class``;
    clutter centers are drawn uniformly and rejected near any object.
    """
    rng = substream(seed, "patches")
    entries = {cls: [] for cls in cfg.classes if cls != metrics.CLUTTER_LABEL}
    clutter_pool = []
    for pres, gts in zip(frame_sets, gt_sets):
        by_frame = {}
        for g in gts:
            by_frame.setdefault(g.frame, []).append(g)
            if g.class_name in entries:
                entries[g.class_name].append((pres, g.frame,
                                              (g.box.cy, g.box.cx)))
        clutter_pool.append((pres, by_frame))

    patches = []
    labels = []
    for cls, pool in entries.items():
        if not pool:
            continue
        idx = rng.integers(0, len(pool), size=per_class)
        for i in idx:
            pres, f, center = pool[i]
            patches.append(classify.extract_patch(
                pres[f], center, jitter_sigma=cfg.jitter_sigma, rng=rng,
                patch_size=cfg.patch_size, mask_radius=cfg.mask_radius))
            labels.append(cls)

    n_clutter = per_class
    got = 0
    while got < n_clutter:
        pres, by_frame = clutter_pool[int(rng.integers(0, len(clutter_pool)))]
        f = int(rng.integers(0, len(pres)))
        h, w = pres[f].shape
        r = float(rng.uniform(2, h - 2))
        c = float(rng.uniform(2, w - 2))
        near = any(np.hypot(r - g.box.cy, c - g.box.cx)
                   < g.box.half_len + cfg.mask_radius / 2
                   for g in by_frame.get(f, []))
        if near:
            continue
        patches.append(classify.extract_patch(
            pres[f], (r, c), jitter_sigma=0.0, rng=rng,
            patch_size=cfg.patch_size, mask_radius=cfg.mask_radius))
        labels.append(metrics.CLUTTER_LABEL)
        got += 1

    patches = np.stack(patches)
    labels = np.array(labels)
    perm = rng.permutation(len(labels))
    return patches[perm], labels[perm]


def train_scnn_from_patches(patches, labels, cfg, bank=None):
    if bank is None:
        bank = build_bank(cfg)
    return classify.train_scnn(
        patches, labels, cfg.classes, bank.kernels,
        seed=substream_seed(cfg.seed, "scnn-w-in"), hidden=cfg.scnn_hidden)


def train_ensemble_from_records(records, gt_records, scnn_model, cfg):
    """Label tracker rows against ground truth and fit the SLFN ensemble.

    Records must carry scores and shapes (classified, shape-collecting
    tracking run).
    """
    rows = records_to_rows(records)
    labels = classify.label_tracks(rows, gt_records)
    base = np.stack([
        classify.base_state_features(rec.scores, rec.output.box,
                                     rec.output.energy)
        for rec in records])
    shapes = np.stack([rec.shape for rec in records])
    return classify.train_slfn_ensemble(
        base, shapes, labels, cfg.classes, seed=cfg.seed,
        hidden=cfg.slfn_hidden, shape_hidden=cfg.shape_hidden)
