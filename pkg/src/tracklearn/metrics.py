"""Detection-accuracy scoring for oriented-box tracker output.

Overlap is intersection-over-union of the two oriented rectangles, computed
by convex polygon clipping. Detections and ground truths are matched per
frame with an optimal one-to-one assignment (Munkres on cost 1 - overlap),
pairs below the overlap threshold are discarded, and the per-sequence score
is 1 - (FN + FP) / GT, aggregated across sequences by ground-truth-count
weighting. A sequence-level assignment over accumulated overlap maps
trackers to object identities for label generation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ZeroGTError
from .pmf import OrientedBox

T_D_DEFAULT = 0.2
CLUTTER_LABEL = "clutter"


@dataclass
class GroundTruthRecord:
    frame: int
    object_id: int
    class_name: str
    box: OrientedBox


def _polygon_area(pts):
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_polygon(subject, clipper):
    """Sutherland-Hodgman clip of ``subject`` by convex ``clipper`` (CCW)."""
    output = list(subject)
    n = len(clipper)
    for i in range(n):
        if not output:
            return []
        ax, ay = clipper[i]
        bx, by = clipper[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inputs = output
        output = []
        prev = inputs[-1]
        prev_in = ex * (prev[1] - ay) - ey * (prev[0] - ax) <= 0
        for cur in inputs:
            cur_in = ex * (cur[1] - ay) - ey * (cur[0] - ax) <= 0
            if cur_in != prev_in:
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = ex * dy - ey * dx
                if abs(denom) > 1e-30:
                    t = (ex * (ay - prev[1]) - ey * (ax - prev[0])) / denom
                    output.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return output


def _ccw_corners(box):
    pts = box.corners()
    if _polygon_area(pts) > 0:
        pts = pts[::-1]
    # screen coordinates (y down): negative signed area here is CCW for the
    # clipping inequality used above
    return pts


def overlap(a, b):
    """Intersection-over-union of two oriented boxes, in [0, 1]."""
    area_a = a.rect_area
    area_b = b.rect_area
    if area_a <= 0.0 and area_b <= 0.0:
        return 0.0
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    pa = [tuple(p) for p in _ccw_corners(a)]
    pb = [tuple(p) for p in _ccw_corners(b)]
    inter_pts = _clip_polygon(pa, pb)
    if len(inter_pts) < 3:
        return 0.0
    inter = abs(_polygon_area(np.asarray(inter_pts)))
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def overlap_matrix(gt_boxes, det_boxes):
    mat = np.zeros((len(gt_boxes), len(det_boxes)))
    for i, g in enumerate(gt_boxes):
        for j, d in enumerate(det_boxes):
            mat[i, j] = overlap(g, d)
    return mat


def match_frame(gt_boxes, det_boxes, t_d=T_D_DEFAULT):
    """Optimal one-to-one detection matching for a single frame.

    Returns (pairs, unmatched_gt, unmatched_det) where pairs are
    (gt_index, det_index, overlap) triples with overlap >= ``t_d``. The
    assignment maximizes total overlap; below-threshold pairs are discarded
    afterwards and count as both a miss and a false alarm.
    """
    if not gt_boxes or not det_boxes:
        return [], list(range(len(gt_boxes))), list(range(len(det_boxes)))
    mat = overlap_matrix(gt_boxes, det_boxes)
    rows, cols = linear_sum_assignment(1.0 - mat)
    pairs = []
    for i, j in zip(rows, cols):
        if mat[i, j] >= t_d:
            pairs.append((int(i), int(j), float(mat[i, j])))
    matched_gt = {p[0] for p in pairs}
    matched_det = {p[1] for p in pairs}
    unmatched_gt = [i for i in range(len(gt_boxes)) if i not in matched_gt]
    unmatched_det = [j for j in range(len(det_boxes)) if j not in matched_det]
    return pairs, unmatched_gt, unmatched_det


def nmotda(gt_total, fn_total, fp_total):
    """Normalized detection accuracy 1 - (FN + FP) / GT over a sequence."""
    if gt_total <= 0:
        raise ZeroGTError("no ground truth objects for this class")
    return 1.0 - (fn_total + fp_total) / gt_total


def wnmotda(per_sequence):
    """Ground-truth-weighted mean of per-sequence scores.

    ``per_sequence`` is a list of (score, gt_count) pairs.
    """
    total_gt = sum(g for _, g in per_sequence)
    if total_gt <= 0:
        raise ZeroGTError("no ground truth objects across sequences")
    return sum(s * g for s, g in per_sequence) / total_gt


def count_sequence(gts_by_frame, dets_by_frame, t_d=T_D_DEFAULT):
    """Accumulate GT/FN/FP over a sequence; one class at a time.

    Both arguments map frame -> list of boxes. Frames present in either map
    are scored.
    """
    gt = fn = fp = 0
    frames = sorted(set(gts_by_frame) | set(dets_by_frame))
    for t in frames:
        g = gts_by_frame.get(t, [])
        d = dets_by_frame.get(t, [])
        _, ug, ud = match_frame(g, d, t_d)
        gt += len(g)
        fn += len(ug)
        fp += len(ud)
    return gt, fn, fp


@dataclass
class SequenceScore:
    class_name: str
    gt: int
    fn: int
    fp: int

    @property
    def score(self):
        return nmotda(self.gt, self.fn, self.fp)


def evaluate_sequence(gt_records, det_rows, t_d=T_D_DEFAULT, drop_clutter=True):
    """Per-class and merged detection scores for one sequence.

    ``det_rows`` are track-CSV row dicts; rows labeled clutter are excluded
    before matching (they are the tracker saying "not an object"). Rows with
    no label at all are kept and only contribute to the merged score.
    Returns {class_name: SequenceScore} plus an "average" entry with the
    class labels ignored.
    """
    if drop_clutter:
        det_rows = [r for r in det_rows
                    if r.get("label", "").lower() != CLUTTER_LABEL]

    classes = sorted({g.class_name for g in gt_records})
    results = {}
    for cls in classes:
        gts = {}
        for g in gt_records:
            if g.class_name == cls:
                gts.setdefault(g.frame, []).append(g.box)
        dets = {}
        for r in det_rows:
            if r.get("label", "").lower() == cls:
                dets.setdefault(r["frame"], []).append(r["box"])
        gt, fn, fp = count_sequence(gts, dets, t_d)
        results[cls] = SequenceScore(class_name=cls, gt=gt, fn=fn, fp=fp)

    gts_all = {}
    for g in gt_records:
        gts_all.setdefault(g.frame, []).append(g.box)
    dets_all = {}
    for r in det_rows:
        dets_all.setdefault(r["frame"], []).append(r["box"])
    gt, fn, fp = count_sequence(gts_all, dets_all, t_d)
    results["average"] = SequenceScore(class_name="average", gt=gt, fn=fn, fp=fp)
    return results


def aggregate_weighted(per_sequence_results):
    """Weighted scores across sequences per class (and for "average")."""
    names = set()
    for res in per_sequence_results:
        names.update(res.keys())
    out = {}
    for name in sorted(names):
        pairs = [(res[name].score, res[name].gt)
                 for res in per_sequence_results if name in res and res[name].gt > 0]
        if pairs:
            out[name] = wnmotda(pairs)
    return out


def sequence_assignment(track_rows, gt_records):
    """Map tracker ids to ground-truth object ids over a whole sequence.

    Total spatial overlap is accumulated per (tracker, object) pair across
    all frames and a single optimal assignment is solved on the accumulated
    matrix; pairs with zero total overlap stay unmatched. Returns
    {sef_id: (object_id, class_name)}.
    """
    gt_by_frame = {}
    obj_class = {}
    for g in gt_records:
        gt_by_frame.setdefault(g.frame, {})[g.object_id] = g.box
        obj_class[g.object_id] = g.class_name

    sef_ids = sorted({r["sef_id"] for r in track_rows})
    obj_ids = sorted(obj_class)
    if not sef_ids or not obj_ids:
        return {}
    sef_index = {s: i for i, s in enumerate(sef_ids)}
    obj_index = {o: j for j, o in enumerate(obj_ids)}
    totals = np.zeros((len(sef_ids), len(obj_ids)))
    for r in track_rows:
        frame_gts = gt_by_frame.get(r["frame"])
        if not frame_gts:
            continue
        for oid, gbox in frame_gts.items():
            ov = overlap(gbox, r["box"])
            if ov > 0.0:
                totals[sef_index[r["sef_id"]], obj_index[oid]] += ov
    rows, cols = linear_sum_assignment(-totals)
    mapping = {}
    for i, j in zip(rows, cols):
        if totals[i, j] > 0.0:
            oid = obj_ids[j]
            mapping[sef_ids[i]] = (oid, obj_class[oid])
    return mapping


GT_CSV_FIELDS = ("frame", "object_id", "class", "cx", "cy", "half_len",
                 "half_wid", "angle")


def write_gt_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GT_CSV_FIELDS)
        for g in records:
            b = g.box
            writer.writerow([g.frame, g.object_id, g.class_name,
                             f"{b.cx:.6f}", f"{b.cy:.6f}", f"{b.half_len:.6f}",
                             f"{b.half_wid:.6f}", f"{b.angle:.6f}"])


def read_gt_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            records.append(GroundTruthRecord(
                frame=int(rec["frame"]),
                object_id=int(rec["object_id"]),
                class_name=rec["class"],
                box=OrientedBox(cx=float(rec["cx"]), cy=float(rec["cy"]),
                                half_len=float(rec["half_len"]),
                                half_wid=float(rec["half_wid"]),
                                angle=float(rec["angle"])),
            ))
    return records


def report_table(results):
    """Human-readable table for one sequence's results."""
    lines = [f"{'class':<12}{'GT':>8}{'FN':>8}{'FP':>8}{'NMOTDA':>12}"]
    for name, sc in sorted(results.items()):
        lines.append(f"{name:<12}{sc.gt:>8}{sc.fn:>8}{sc.fp:>8}{sc.score:>12.6f}")
    return "\n".join(lines)


def write_report_csv(path, results):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "GT", "FN", "FP", "nmotda"])
        for name, sc in sorted(results.items()):
            writer.writerow([name, sc.gt, sc.fn, sc.fp, f"{sc.score:.6f}"])
