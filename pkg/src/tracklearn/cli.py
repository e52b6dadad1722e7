"""Batch command-line entry points.

Subcommands wire the library end to end with reproducible configs:

  synth       scene spec -> frame PNGs + ground-truth CSV
  track       frames -> track CSV (optionally posterior-shape archive, overlays)
  train-scnn  frames + ground truth (or a patch manifest) -> classifier model
  train-slfn  frames + tracks + shapes + ground truth + model -> ensemble
  recognize   frames + models -> labeled track CSV
  evaluate    labeled tracks + ground truth -> detection-accuracy report

Every command accepts --config/--seed/--workers/--log-level; configuration
precedence is defaults < config file < TRACKLEARN_* environment < flags.
Exit codes: 2 config errors, 3 missing files, 4 dimension mismatches,
5 empty ground truth, 6 singular training systems, 7 other run errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import classify, features, metrics, pipeline, scenegen, tracker
from .config import load_config, save_config
from .errors import (ConfigError, DimensionMismatchError, SingularSystemError,
                     TracklearnError, ZeroGTError)

log = logging.getLogger("tracklearn")

LABEL_COLORS = {"car": (255, 64, 64), "person": (64, 255, 255),
                "cyclist": (255, 64, 255), "clutter": (64, 255, 64)}


def _add_common(parser):
    parser.add_argument("--config", help="YAML run config")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--workers", type=int, help="parallel tracker workers")
    parser.add_argument("--log-level", default="warn",
                        choices=["error", "warn", "info", "debug"])
    parser.add_argument("--emit-config", help="write the effective config here")


def _setup(args):
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    log.setLevel({"error": logging.ERROR, "warn": logging.WARNING,
                  "info": logging.INFO, "debug": logging.DEBUG}[args.log_level])
    cfg = load_config(args.config, overrides={
        "seed": args.seed, "workers": args.workers})
    if args.emit_config:
        save_config(args.emit_config, cfg)
    return cfg


def _require(path, what):
    if path and not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _progress(total):
    def report(t):
        if t % 50 == 0:
            log.info("frame %d/%d", t, total)
    return report


# --- synth -------------------------------------------------------------------

def cmd_synth(args):
    cfg = _setup(args)
    _require(args.scene, "scene spec")
    spec = scenegen.load_scene_spec(args.scene)
    if args.seed is not None:
        spec.seed = args.seed
    frames, gts = scenegen.generate(spec)
    scenegen.write_frames(args.out_dir, frames)
    gt_path = args.gt or os.path.join(args.out_dir, "gt.csv")
    metrics.write_gt_csv(gt_path, gts)
    log.info("wrote %d frames to %s and %d ground-truth rows to %s",
             len(frames), args.out_dir, len(gts), gt_path)
    return 0


# --- track -------------------------------------------------------------------

def _load_frames(path):
    _require(path, "frame directory")
    return scenegen.read_frames(path)


def _save_shapes(path, records):
    np.savez_compressed(
        path,
        frames=np.array([r.frame for r in records], dtype=np.int64),
        sef_ids=np.array([r.output.sef_id for r in records], dtype=np.int64),
        shapes=np.stack([r.shape for r in records]))


def _load_shapes(path):
    data = np.load(path, allow_pickle=False)
    return {(int(f), int(s)): data["shapes"][i]
            for i, (f, s) in enumerate(zip(data["frames"], data["sef_ids"]))}


def _write_overlays(out_dir, frames, cfg, records_by_frame):
    from PIL import Image, ImageDraw
    os.makedirs(out_dir, exist_ok=True)
    for t, frame in enumerate(frames):
        gray = features.to_gray(frame)
        gray = features.downsample(gray, cfg.downsample)
        img = Image.fromarray((np.clip(gray, 0, 1) * 255).astype(np.uint8))
        img = img.convert("RGB")
        draw = ImageDraw.Draw(img)
        for rec in records_by_frame.get(t, []):
            color = LABEL_COLORS.get(rec.label, (255, 255, 64))
            pts = [tuple(p) for p in rec.output.box.corners()]
            draw.polygon(pts, outline=color)
        img.save(os.path.join(out_dir, f"overlay_{t:06d}.png"))


def _records_by_frame(records):
    by_frame = {}
    for rec in records:
        by_frame.setdefault(rec.frame, []).append(rec)
    return by_frame


def cmd_track(args):
    cfg = _setup(args)
    frames = _load_frames(args.frames)
    bank = pipeline.build_bank(cfg, _require(args.bank, "filter bank"))
    records = pipeline.run_tracking(frames, cfg, bank=bank,
                                    collect_shapes=args.shapes_out is not None,
                                    progress=_progress(len(frames)))
    by_frame = _records_by_frame(records)
    tracker.write_track_csv(
        args.out,
        [(t, [r.output for r in by_frame[t]]) for t in sorted(by_frame)],
        cfg.n_select)
    if args.shapes_out:
        _save_shapes(args.shapes_out, records)
    if args.overlay_dir:
        _write_overlays(args.overlay_dir, frames, cfg, by_frame)
    log.info("wrote %d track rows to %s", len(records), args.out)
    return 0


# --- train-scnn --------------------------------------------------------------

def _read_manifest(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((rec["frame_path"], float(rec["cx"]), float(rec["cy"]),
                         rec["label"]))
    return rows


def cmd_train_scnn(args):
    cfg = _setup(args)
    bank = pipeline.build_bank(cfg, _require(args.bank, "filter bank"))
    if args.manifest:
        _require(args.manifest, "patch manifest")
        rows = _read_manifest(args.manifest)
        pre_cache = {}
        patches, labels = [], []
        for frame_path, cx, cy, label in rows:
            if frame_path not in pre_cache:
                _require(frame_path, "frame image")
                from PIL import Image
                raw = np.asarray(Image.open(frame_path))
                pre_cache[frame_path] = features.preprocess(
                    raw, downsample_factor=cfg.downsample,
                    cutoff=cfg.whiten_cutoff)
            patches.append(classify.extract_patch(
                pre_cache[frame_path], (cy, cx), patch_size=cfg.patch_size,
                mask_radius=cfg.mask_radius))
            labels.append(label)
        patches = np.stack(patches)
        labels = np.array(labels)
    else:
        if not args.frames or not args.gt:
            raise ConfigError("train-scnn needs --manifest or --frames/--gt")
        if len(args.frames) != len(args.gt):
            raise ConfigError("train-scnn needs one --gt per --frames")
        frame_sets, gt_sets = [], []
        for fdir, gtp in zip(args.frames, args.gt):
            raw = _load_frames(fdir)
            _require(gtp, "ground truth CSV")
            frame_sets.append([features.preprocess(
                f, downsample_factor=cfg.downsample, cutoff=cfg.whiten_cutoff)
                for f in raw])
            gt_sets.append(metrics.read_gt_csv(gtp))
        patches, labels = pipeline.build_patch_set(
            frame_sets, gt_sets, cfg, per_class=args.per_class, seed=cfg.seed)
    model = pipeline.train_scnn_from_patches(patches, labels, cfg, bank=bank)
    classify.save_scnn(args.out, model)
    pred = np.array(model.classes)[
        np.argmax(classify.scnn_scores(patches, model), axis=1)]
    log.info("trained on %d patches, training accuracy %.4f",
             len(labels), float((pred == labels).mean()))
    return 0


# --- train-slfn --------------------------------------------------------------

def cmd_train_slfn(args):
    cfg = _setup(args)
    frames = _load_frames(args.frames)
    _require(args.tracks, "track CSV")
    _require(args.shapes, "shape archive")
    _require(args.gt, "ground truth CSV")
    _require(args.scnn, "classifier model")
    scnn = classify.load_scnn(args.scnn)
    rows = tracker.read_track_csv(args.tracks)
    shapes = _load_shapes(args.shapes)
    gts = metrics.read_gt_csv(args.gt)

    pres = [features.preprocess(f, downsample_factor=cfg.downsample,
                                cutoff=cfg.whiten_cutoff) for f in frames]
    by_frame = {}
    for i, row in enumerate(rows):
        by_frame.setdefault(row["frame"], []).append(i)
    scores = [None] * len(rows)
    for t, idxs in sorted(by_frame.items()):
        if t >= len(pres):
            raise DimensionMismatchError(
                f"track CSV references frame {t} beyond the sequence")
        patches = np.stack([classify.extract_patch(
            pres[t], (rows[i]["box"].cy, rows[i]["box"].cx),
            patch_size=scnn.patch_size, mask_radius=scnn.mask_radius)
            for i in idxs])
        for i, s in zip(idxs, classify.scnn_scores(patches, scnn)):
            scores[i] = s

    labels = classify.label_tracks(rows, gts)
    base = np.stack([classify.base_state_features(scores[i], rows[i]["box"],
                                                  rows[i]["energy"])
                     for i in range(len(rows))])
    try:
        shape_stack = np.stack([shapes[(r["frame"], r["sef_id"])] for r in rows])
    except KeyError as exc:
        raise DimensionMismatchError(
            f"shape archive is missing entry {exc}; regenerate with "
            "`track --shapes-out`")
    ens = classify.train_slfn_ensemble(
        base, shape_stack, labels, cfg.classes, seed=cfg.seed,
        hidden=cfg.slfn_hidden, shape_hidden=cfg.shape_hidden)
    classify.save_ensemble(args.out, ens)
    log.info("trained ensemble on %d rows (%d clutter)", len(rows),
             sum(1 for lab in labels if lab == metrics.CLUTTER_LABEL))
    return 0


# --- recognize ---------------------------------------------------------------

def _write_labeled_csv(path, records, n_select, classes):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = tracker.track_csv_header(n_select) + ["label"]
        header += [f"score_{c}" for c in classes]
        writer.writerow(header)
        by_frame = _records_by_frame(records)
        for t in sorted(by_frame):
            for rec in by_frame[t]:
                out = rec.output
                b = out.box
                row = [t, out.sef_id, f"{b.cx:.6f}", f"{b.cy:.6f}",
                       f"{b.half_len:.6f}", f"{b.half_wid:.6f}",
                       f"{b.angle:.6f}", f"{out.energy:.6f}", f"{out.rho:.6f}"]
                row += [str(s) for s in out.selected]
                row.append(rec.label)
                row += [f"{s:.6f}" for s in rec.scores]
                writer.writerow(row)


def cmd_recognize(args):
    cfg = _setup(args)
    frames = _load_frames(args.frames)
    bank = pipeline.build_bank(cfg, _require(args.bank, "filter bank"))
    _require(args.scnn, "classifier model")
    scnn = classify.load_scnn(args.scnn)
    if args.classifier == "ensemble":
        if not args.ensemble:
            raise ConfigError("--classifier ensemble needs --ensemble")
        _require(args.ensemble, "ensemble model")
        ens = classify.load_ensemble(args.ensemble)
        frame_classifier = pipeline.ensemble_classifier(scnn, ens)
    else:
        frame_classifier = pipeline.scnn_classifier(scnn)
    records = pipeline.run_tracking(frames, cfg, bank=bank,
                                    classifier=frame_classifier,
                                    progress=_progress(len(frames)))
    _write_labeled_csv(args.out, records, cfg.n_select, scnn.classes)
    if args.overlay_dir:
        _write_overlays(args.overlay_dir, frames, cfg,
                        _records_by_frame(records))
    log.info("wrote %d labeled rows to %s", len(records), args.out)
    return 0


# --- evaluate ----------------------------------------------------------------

def cmd_evaluate(args):
    cfg = _setup(args)
    if len(args.tracks) != len(args.gt):
        raise ConfigError("evaluate needs one --gt per --tracks")
    pairs = list(zip(args.tracks, args.gt))
    results = []
    for tracks_path, gt_path in pairs:
        _require(tracks_path, "track CSV")
        _require(gt_path, "ground truth CSV")
        rows = tracker.read_track_csv(tracks_path)
        gts = metrics.read_gt_csv(gt_path)
        res = metrics.evaluate_sequence(gts, rows,
                                        t_d=cfg.overlap_threshold)
        results.append(res)
        print(f"# sequence: {tracks_path}")
        print(metrics.report_table(res))
    if len(results) > 1:
        agg = metrics.aggregate_weighted(results)
        print("# weighted across sequences")
        for name, score in sorted(agg.items()):
            print(f"{name:<12}{score:>12.6f}")
    if args.out:
        metrics.write_report_csv(args.out, results[0])
    return 0


# --- parser ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="tracklearn",
        description="online multi-object tracking and recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene")
    _add_common(p)
    p.add_argument("--scene", required=True, help="scene spec YAML")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gt", help="ground-truth CSV path (default OUT/gt.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("track", help="run the tracker over a frame directory")
    _add_common(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True, help="track CSV path")
    p.add_argument("--bank", help="filter bank file (default: stand-in bank)")
    p.add_argument("--shapes-out", help="write posterior shapes (npz)")
    p.add_argument("--overlay-dir", help="write box overlay images")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("train-scnn", help="train the patch classifier")
    _add_common(p)
    p.add_argument("--frames", action="append", default=[])
    p.add_argument("--gt", action="append", default=[])
    p.add_argument("--manifest", help="patch manifest CSV "
                                      "(frame_path,cx,cy,label)")
    p.add_argument("--bank", help="filter bank file")
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_scnn)

    p = sub.add_parser("train-slfn", help="train the recognition ensemble")
    _add_common(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--shapes", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--scnn", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_slfn)

    p = sub.add_parser("recognize", help="track and classify a sequence")
    _add_common(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--scnn", required=True)
    p.add_argument("--ensemble")
    p.add_argument("--classifier", choices=["scnn", "ensemble"],
                   default="ensemble")
    p.add_argument("--bank", help="filter bank file")
    p.add_argument("--out", required=True)
    p.add_argument("--overlay-dir")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("evaluate", help="score labeled tracks against truth")
    _add_common(p)
    p.add_argument("--tracks", action="append", required=True)
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--out", help="report CSV path")
    p.set_defaults(func=cmd_evaluate)
    return parser


_EXIT_CODES = (
    (ConfigError, 2),
    (FileNotFoundError, 3),
    (DimensionMismatchError, 4),
    (ZeroGTError, 5),
    (SingularSystemError, 6),
    (TracklearnError, 7),
)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - map to exit codes at the boundary
        for exc_type, code in _EXIT_CODES:
            if isinstance(exc, exc_type):
                print(f"tracklearn: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
