"""Object recognition: a shallow convolutional network plus an ensemble of
single-hidden-layer networks that folds tracker state back into the decision.

The convolutional network reuses the tracker's filter bank as a fixed first
layer, squares, average-pools (18x18 window, stride 6), takes the quarter
power, projects through fixed random input weights onto a wide hidden layer,
squares again and maps to class scores with output weights solved in one shot
by ridge least squares. Only the output weights are ever learned.

Seven small networks form the recognition ensemble: six operate on a
pairwise-expanded feature vector of class scores and tracker state (box
width/length, inclination, position energy), the seventh on the flattened
posterior shape. Their softmaxed outputs are summed elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.special import expit

from .errors import SingularSystemError
from .metrics import CLUTTER_LABEL, sequence_assignment
from .rng import substream_seed

DEFAULT_CLASSES = ("car", "person", "cyclist", CLUTTER_LABEL)
PATCH_SIZE = 61
MASK_RADIUS = 30
POOL_SIZE = 18
POOL_STRIDE = 6
SCNN_HIDDEN = 12000
SLFN_HIDDEN = 320
SHAPE_HIDDEN = 12800
JITTER_SIGMA = 10.0

_MODEL_VERSION = 1
_mask_cache = {}


def random_weights(seed, shape, scale, dtype=np.float64):
    """Fixed random input weights, reproducible from (seed, shape, scale)."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return (rng.standard_normal(shape, dtype=dtype) * dtype(scale))


def softmax(v):
    shifted = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def sigmoid(u):
    return expit(u)


def _disc_mask(patch_size, radius):
    key = (patch_size, radius)
    if key not in _mask_cache:
        c = (patch_size - 1) / 2.0
        rr, cc = np.meshgrid(np.arange(patch_size) - c,
                             np.arange(patch_size) - c, indexing="ij")
        _mask_cache[key] = (rr ** 2 + cc ** 2) <= radius ** 2
    return _mask_cache[key]


def extract_patch(frame, center, jitter_sigma=0.0, rng=None,
                  patch_size=PATCH_SIZE, mask_radius=MASK_RADIUS):
    """Masked square patch of a preprocessed frame around ``center``.

    The crop center is ``center`` (row, col) plus optional Gaussian jitter,
    clamped into the frame; pixels that fall outside the frame read as zero
    and pixels outside the central disc of ``mask_radius`` are zeroed.
    """
    h, w = frame.shape
    r, c = float(center[0]), float(center[1])
    if jitter_sigma > 0.0:
        if rng is None:
            raise ValueError("jitter requires an rng")
        off = rng.normal(0.0, jitter_sigma, 2)
        r, c = r + off[0], c + off[1]
    r = min(max(r, 0.0), h - 1.0)
    c = min(max(c, 0.0), w - 1.0)
    ri, ci = int(round(r)), int(round(c))
    half = (patch_size - 1) // 2
    out = np.zeros((patch_size, patch_size))
    r0, c0 = ri - half, ci - half
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + patch_size, h), min(c0 + patch_size, w)
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = frame[rs:re, cs:ce]
    out[~_disc_mask(patch_size, mask_radius)] = 0.0
    return out


# --- shallow CNN -----------------------------------------------------------

@dataclass
class ScnnModel:
    kernels: np.ndarray      # fixed first-layer filters (n, k, k)
    w_out: np.ndarray        # learned output weights (hidden, n_classes)
    classes: tuple
    seed: int
    hidden: int = SCNN_HIDDEN
    pool_size: int = POOL_SIZE
    pool_stride: int = POOL_STRIDE
    patch_size: int = PATCH_SIZE
    mask_radius: int = MASK_RADIUS

    def __post_init__(self):
        d = pooled_dim(self.patch_size, self.kernels.shape[-1],
                       self.pool_size, self.pool_stride, self.kernels.shape[0])
        self.w_in = random_weights(self.seed, (self.hidden, d),
                                   1.0 / np.sqrt(d))


def pooled_dim(patch_size, kernel_size, pool_size, pool_stride, n_kernels):
    conv = patch_size - kernel_size + 1
    per_axis = (conv - pool_size) // pool_stride + 1
    return n_kernels * per_axis * per_axis


def _box_pool(x, pool_size, stride):
    """Uniform average pooling over the trailing two axes (valid windows)."""
    pad = np.zeros(x.shape[:-2] + (x.shape[-2] + 1, x.shape[-1] + 1), dtype=x.dtype)
    pad[..., 1:, 1:] = x
    s = pad.cumsum(axis=-2).cumsum(axis=-1)
    n = (x.shape[-2] - pool_size) // stride + 1
    idx = np.arange(n) * stride
    r0 = idx[:, None]
    c0 = idx[None, :]
    r1 = r0 + pool_size
    c1 = c0 + pool_size
    sums = (s[..., r1, c1] - s[..., r0, c1] - s[..., r1, c0] + s[..., r0, c0])
    return sums / (pool_size * pool_size)


def scnn_pooled_features(patches, kernels, pool_size=POOL_SIZE,
                         pool_stride=POOL_STRIDE, chunk=256):
    """Stage 1: filter, square, average-pool, quarter power; flattened.

    ``patches`` has shape (n, p, p); result is (n, d) with
    d = n_kernels * positions^2.
    """
    patches = np.asarray(patches, dtype=float)
    n = patches.shape[0]
    out = []
    for lo in range(0, n, chunk):
        batch = patches[lo:lo + chunk]
        resp = signal.fftconvolve(batch[:, None], kernels[None, :],
                                  mode="valid", axes=(2, 3))
        np.square(resp, out=resp)
        pooled = _box_pool(resp, pool_size, pool_stride)
        np.maximum(pooled, 0.0, out=pooled)  # fft ringing before the root
        feats = np.power(pooled, 0.25)
        out.append(feats.reshape(batch.shape[0], -1))
    return np.concatenate(out, axis=0)


def scnn_scores(patches, model):
    """Class score vectors for a batch of patches, shape (n, n_classes)."""
    feats = scnn_pooled_features(np.atleast_3d(patches).reshape(-1,
                                 model.patch_size, model.patch_size),
                                 model.kernels, model.pool_size,
                                 model.pool_stride)
    hidden = np.square(feats @ model.w_in.T)
    return hidden @ model.w_out


def scnn_forward(patch, model):
    """Score vector for a single patch."""
    return scnn_scores(patch[None], model)[0]


def train_output_weights(h, y, ridge=None):
    """One-shot ridge least squares for output weights: argmin ||HW - Y||^2
    + ridge ||W||^2.

    ``ridge`` defaults to 1e-6 * trace(H^T H) / cols; with more rows than
    columns the normal equations are solved directly, otherwise the exactly
    equivalent dual form keeps the system at sample size.
    """
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = h.shape
    if ridge is None:
        ridge = 1e-6 * float(np.square(h).sum()) / d
    try:
        if n >= d:
            gram = h.T @ h
            gram[np.diag_indices_from(gram)] += ridge
            return np.linalg.solve(gram, h.T @ y)
        gram = h @ h.T
        gram[np.diag_indices_from(gram)] += ridge
        return h.T @ np.linalg.solve(gram, y)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"least-squares system is singular: {exc}")


def one_hot(labels, classes):
    index = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(labels), len(classes)))
    for i, lab in enumerate(labels):
        y[i, index[lab]] = 1.0
    return y


def train_scnn(patches, labels, classes, kernels, seed,
               hidden=SCNN_HIDDEN, ridge=None):
    """Fit the output weights of a shallow CNN on a labeled patch batch."""
    model = ScnnModel(kernels=kernels, w_out=np.zeros((hidden, len(classes))),
                      classes=tuple(classes), seed=seed, hidden=hidden,
                      patch_size=patches.shape[-1])
    feats = scnn_pooled_features(patches, kernels, model.pool_size,
                                 model.pool_stride)
    h = np.square(feats @ model.w_in.T)
    model.w_out = train_output_weights(h, one_hot(labels, classes), ridge)
    return model


def save_scnn(path, model):
    np.savez_compressed(
        path, version=_MODEL_VERSION, kind="scnn", kernels=model.kernels,
        w_out=model.w_out, classes=np.array(model.classes), seed=model.seed,
        hidden=model.hidden, pool_size=model.pool_size,
        pool_stride=model.pool_stride, patch_size=model.patch_size,
        mask_radius=model.mask_radius)


def load_scnn(path):
    data = np.load(path, allow_pickle=False)
    if int(data["version"]) != _MODEL_VERSION or str(data["kind"]) != "scnn":
        raise ValueError(f"not a compatible classifier file: {path}")
    return ScnnModel(kernels=data["kernels"], w_out=data["w_out"],
                     classes=tuple(str(c) for c in data["classes"]),
                     seed=int(data["seed"]), hidden=int(data["hidden"]),
                     pool_size=int(data["pool_size"]),
                     pool_stride=int(data["pool_stride"]),
                     patch_size=int(data["patch_size"]),
                     mask_radius=int(data["mask_radius"]))


# --- state features and the network ensemble --------------------------------

@dataclass
class FeatNorm:
    """Per-feature standardization parameters saved with a trained model."""

    mean: np.ndarray
    rms: np.ndarray

    @classmethod
    def fit(cls, x):
        mean = x.mean(axis=0)
        rms = np.sqrt(np.mean((x - mean) ** 2, axis=0))
        rms = np.where(rms > 1e-12, rms, 1.0)
        return cls(mean=mean, rms=rms)

    def apply(self, x):
        return (x - self.mean) / self.rms


def fold_angle(angle):
    """Absolute inclination to the x axis, folded into [0, pi/2]."""
    a = angle % np.pi
    return min(a, np.pi - a)


def base_state_features(scores, box, pos_energy):
    """The unnormalized per-detection feature vector: softmaxed class scores
    followed by box width, length, absolute inclination and position energy."""
    return np.concatenate([
        softmax(np.asarray(scores, dtype=float)),
        [2.0 * box.half_wid, 2.0 * box.half_len, fold_angle(box.angle),
         float(pos_energy)],
    ])


def expand_pairwise(z):
    """All unique pairwise products plus the raw features: d -> d(d+3)/2."""
    z = np.atleast_2d(z)
    d = z.shape[1]
    iu, ju = np.triu_indices(d)
    out = np.concatenate([z[:, iu] * z[:, ju], z], axis=1)
    return out[0] if out.shape[0] == 1 else out


def assemble_slfn_features(scores, box, pos_energy, norm):
    """Standardized, pairwise-expanded input vector for the state networks."""
    base = base_state_features(scores, box, pos_energy)
    return expand_pairwise(norm.apply(base))


@dataclass
class SlfnModel:
    kind: str                # "state" or "shape"
    seed: int
    hidden: int
    d_in: int
    w_out: np.ndarray        # (hidden, n_classes)

    def __post_init__(self):
        scale = 1.0 / np.sqrt(self.d_in)
        dtype = np.float32 if self.kind == "shape" else np.float64
        self.w_in = random_weights(self.seed, (self.hidden, self.d_in),
                                   scale, dtype=dtype)


def slfn_forward(feats, model):
    """Output scores W_out^T sigmoid(W_in f) for a batch or single vector."""
    single = feats.ndim == 1
    x = np.atleast_2d(feats)
    if model.kind == "shape":
        x = x.astype(np.float32)
    h = sigmoid(x @ model.w_in.T).astype(np.float64)
    y = h @ model.w_out
    return y[0] if single else y


def ensemble_predict(member_scores):
    """Combine member outputs: elementwise sum of their softmaxes.

    Returns (class index, combined vector); ties resolve to the lowest index.
    """
    combined = np.sum([softmax(np.asarray(s, dtype=float))
                       for s in member_scores], axis=0)
    return int(np.argmax(combined)), combined


@dataclass
class SlfnEnsemble:
    classes: tuple
    feat_norm: FeatNorm            # over the base state features
    shape_mean: float              # global standardization for shape inputs
    shape_rms: float
    members: list                  # six state models then the shape model

    def predict(self, scores, box, pos_energy, shape):
        feats = assemble_slfn_features(scores, box, pos_energy, self.feat_norm)
        outs = [slfn_forward(feats, m) for m in self.members if m.kind == "state"]
        flat = (shape.reshape(-1) - self.shape_mean) / self.shape_rms
        shape_model = next(m for m in self.members if m.kind == "shape")
        outs.append(slfn_forward(flat, shape_model))
        idx, combined = ensemble_predict(outs)
        return self.classes[idx], combined


def bag_indices(n, n_bags, rng):
    """Random partition of range(n) into ``n_bags`` disjoint, exhaustive sets."""
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, n_bags)]


def label_tracks(track_rows, gt_records):
    """Sequence-level class labels for every tracker-frame row.

    Trackers are matched to object identities by total accumulated overlap;
    every row of a matched tracker takes the object's class, unmatched
    trackers are labeled clutter.
    """
    mapping = sequence_assignment(track_rows, gt_records)
    return [mapping.get(r["sef_id"], (None, CLUTTER_LABEL))[1]
            for r in track_rows]


def train_slfn_ensemble(base_feats, shapes, labels, classes, seed,
                        hidden=SLFN_HIDDEN, shape_hidden=SHAPE_HIDDEN,
                        n_state=6):
    """Train the recognition ensemble on labeled tracker-frame rows.

    ``base_feats`` is (n, d) unnormalized state features, ``shapes`` the
    matching (n, s, s) posterior shapes. The state networks are bagged over a
    random partition of the rows; the shape network sees all rows in one
    batch.
    """
    rng = np.random.Generator(np.random.PCG64(
        substream_seed(seed, "slfn-bagging")))
    base_feats = np.asarray(base_feats, dtype=float)
    norm = FeatNorm.fit(base_feats)
    expanded = expand_pairwise(norm.apply(base_feats))
    y = one_hot(labels, classes)

    members = []
    bags = bag_indices(base_feats.shape[0], n_state, rng)
    for i, bag in enumerate(bags):
        model = SlfnModel(kind="state", seed=substream_seed(seed, f"slfn{i}"),
                          hidden=hidden, d_in=expanded.shape[1],
                          w_out=np.zeros((hidden, len(classes))))
        h = sigmoid(expanded[bag] @ model.w_in.T)
        model.w_out = train_output_weights(h, y[bag])
        members.append(model)

    flat = np.asarray(shapes, dtype=np.float32).reshape(len(labels), -1)
    shape_mean = float(flat.mean())
    shape_rms = float(np.sqrt(np.mean((flat - shape_mean) ** 2)))
    if shape_rms <= 1e-12:
        shape_rms = 1.0
    shape_model = SlfnModel(kind="shape", seed=substream_seed(seed, "slfn-shape"),
                            hidden=shape_hidden, d_in=flat.shape[1],
                            w_out=np.zeros((shape_hidden, len(classes))))
    z = ((flat - shape_mean) / shape_rms).astype(np.float32)
    h = sigmoid(z @ shape_model.w_in.T).astype(np.float64)
    shape_model.w_out = train_output_weights(h, y)
    members.append(shape_model)

    return SlfnEnsemble(classes=tuple(classes), feat_norm=norm,
                        shape_mean=shape_mean, shape_rms=shape_rms,
                        members=members)


def save_ensemble(path, ens):
    payload = {
        "version": _MODEL_VERSION, "kind": "slfn-ensemble",
        "classes": np.array(ens.classes),
        "feat_mean": ens.feat_norm.mean, "feat_rms": ens.feat_norm.rms,
        "shape_mean": ens.shape_mean, "shape_rms": ens.shape_rms,
        "member_kinds": np.array([m.kind for m in ens.members]),
        "member_seeds": np.array([m.seed for m in ens.members]),
        "member_hidden": np.array([m.hidden for m in ens.members]),
        "member_d_in": np.array([m.d_in for m in ens.members]),
    }
    for i, m in enumerate(ens.members):
        payload[f"w_out_{i}"] = m.w_out
    np.savez_compressed(path, **payload)


def load_ensemble(path):
    data = np.load(path, allow_pickle=False)
    if int(data["version"]) != _MODEL_VERSION or str(data["kind"]) != "slfn-ensemble":
        raise ValueError(f"not a compatible ensemble file: {path}")
    members = []
    for i in range(len(data["member_kinds"])):
        members.append(SlfnModel(kind=str(data["member_kinds"][i]),
                                 seed=int(data["member_seeds"][i]),
                                 hidden=int(data["member_hidden"][i]),
                                 d_in=int(data["member_d_in"][i]),
                                 w_out=data[f"w_out_{i}"]))
    return SlfnEnsemble(
        classes=tuple(str(c) for c in data["classes"]),
        feat_norm=FeatNorm(mean=data["feat_mean"], rms=data["feat_rms"]),
        shape_mean=float(data["shape_mean"]), shape_rms=float(data["shape_rms"]),
        members=members)
