"""Per-tracker online discriminative feature selection.

Each tracker scores every candidate feature by how well its response
histogram separates "my object" from "my local background", back-projects
likelihood ratios of the best features into detection maps, and fuses them
into a single bottom-up evidence map. Object pixels are weighted by the
tracker's own learned object image from the previous frame, so detection and
tracking reinforce each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pmf import EPS_MASS

N_BINS = 64
EPS_LR = 1e-6  # likelihood-ratio floor for empty background bins


def response_bins(maps, bins=N_BINS):
    """Histogram bin index per pixel for maps in [0, 1].

    bin(z) = min(floor(z * bins), bins - 1), i.e. 64 equal-width bins with the
    top edge closed.
    """
    idx = (np.asarray(maps) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def class_histograms(feature_map, obj_mask, patch, bins=N_BINS, bin_idx=None):
    """Object/background response histograms for one feature.

    ``obj_mask`` is a PMF-like pixel weighting (the learned object image);
    background weights are ``1 - obj_mask`` restricted to ``patch``, a
    (row0, row1, col0, col1) window that must contain the object mask's
    support. Either histogram that comes up empty is replaced by a uniform
    one so scoring stays finite.
    """
    r0, r1, c0, c1 = patch
    if bin_idx is None:
        bin_idx = response_bins(feature_map[r0:r1, c0:c1], bins)
    else:
        bin_idx = bin_idx[r0:r1, c0:c1]
    obj_w = obj_mask[r0:r1, c0:c1].ravel()
    flat = bin_idx.ravel()
    f_hist = np.bincount(flat, weights=obj_w, minlength=bins)
    b_hist = np.bincount(flat, weights=1.0 - obj_w, minlength=bins)
    fs = f_hist.sum()
    bs = b_hist.sum()
    f_hist = f_hist / fs if fs > EPS_MASS else np.full(bins, 1.0 / bins)
    b_hist = b_hist / bs if bs > EPS_MASS else np.full(bins, 1.0 / bins)
    return f_hist, b_hist


def likelihood_map(f_hist, b_hist, feature_map, eps=EPS_LR, bin_idx=None):
    """Back-projected likelihood-ratio detection map, peak-normalized to [0, 1].

    L(u) = F(u) / (B(u) + eps) looked up per pixel, then divided by the map
    maximum. Returns an all-zero map when nothing responds.
    """
    ratio = f_hist / (b_hist + eps)
    if bin_idx is None:
        bin_idx = response_bins(feature_map)
    out = ratio[bin_idx]
    peak = out.max()
    if peak <= 0.0:
        return np.zeros_like(out)
    return out / peak


def _kl_bits(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def mmd_score(f_hist, b_hist, prior_obj):
    """Mutual information (bits) between feature response and class label.

    Marginal diversity score: sum_c p(c) KL(p(u|c) || p(u)) with
    p(u) = prior_obj * F + (1 - prior_obj) * B and base-2 logs. Zero iff the
    two class-conditioned histograms coincide.
    """
    marginal = prior_obj * f_hist + (1.0 - prior_obj) * b_hist
    score = prior_obj * _kl_bits(f_hist, marginal)
    score += (1.0 - prior_obj) * _kl_bits(b_hist, marginal)
    return max(score, 0.0)


def bhattacharyya(p, q):
    """Bhattacharyya coefficient sum_u sqrt(p * q), in [0, 1]."""
    return float(min(np.sqrt(p * q).sum(), 1.0))


def update_feature_posterior(f_prev, f_meas):
    """Normalized elementwise product of prior and measured histograms.

    Disjoint supports would annihilate the posterior; in that degenerate case
    the previous histogram is retained unchanged.
    """
    prod = f_prev * f_meas
    total = prod.sum()
    if total <= EPS_MASS:
        return f_prev
    return prod / total


@dataclass
class SelectionResult:
    """Outcome of one tracker's per-frame feature selection.

    ``chosen`` holds 1-based feature ids in rank order, ``weights`` the fusion
    weight of each, ``fused`` the combined detection map.
    """

    chosen: np.ndarray
    weights: np.ndarray
    fused: np.ndarray


def select_and_fuse(stack, hists, learned, n_select, prior_obj,
                    eps=EPS_LR, bin_idx=None):
    """Choose the ``n_select`` most informative features and fuse their maps.

    ``hists`` is a list of (F, B) histogram pairs per candidate, ``learned``
    the matching learned posterior histograms from the previous frame.
    Features are ranked by mutual information (ties to the lower id); each
    selected map enters the fused sum with weight score * Bhattacharyya(F,
    learned), rewarding temporal consistency.
    """
    n_feat = len(hists)
    scores = np.array([mmd_score(f, b, prior_obj) for f, b in hists])
    sims = np.array([bhattacharyya(hists[n][0], learned[n]) for n in range(n_feat)])
    order = sorted(range(n_feat), key=lambda n: (-scores[n], n))[:n_select]
    chosen = np.array(order, dtype=int)
    weights = scores[chosen] * sims[chosen]
    fused = np.zeros(stack.frame_shape)
    for w, n in zip(weights, chosen):
        if w <= 0.0:
            continue
        idx = bin_idx[n] if bin_idx is not None else None
        fused += w * likelihood_map(hists[n][0], hists[n][1], stack.maps[n],
                                    eps=eps, bin_idx=idx)
    return SelectionResult(chosen=stack.ids[chosen], weights=weights, fused=fused)
