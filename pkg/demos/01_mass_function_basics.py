"""The grid algebra everything else is built from.

Position, velocity and shape all live on dense 2D probability mass
functions. Prediction is convolution (add an uncertain offset), measurement
is cross-correlation (infer an offset), fusion is a pointwise product, and
a track's reported box is the 2-sigma ellipse of second-order moments.
"""
import numpy as np

from tracklearn import pmf

# A blurry idea of where an object is, and a velocity belief "moving right".
h, w = 48, 64
position = pmf.gaussian_pmf(h, w, 2.0, (24, 20))
velocity = pmf.gaussian_pmf(9, 9, 0.8, (4, 6))   # center cell = zero motion

# Predict: position (+) velocity, as a convolution.
predicted = pmf.normalize(pmf.convolve(position, velocity))
print("position peak   ", pmf.argmax_cell(position))
print("predicted peak  ", pmf.argmax_cell(predicted), "(shifted right by ~2)")

# Measure: where does a known shape best explain an evidence map?
shape = pmf.gaussian_pmf(15, 15, 2.5, (7, 7))
evidence = np.zeros((h, w))
evidence[30 - 7:30 + 8, 40 - 7:40 + 8] = shape * 50.0
measured = pmf.normalize(pmf.cross_correlate(evidence, shape))
print("evidence stamped at (30, 40); matched-filter peak",
      pmf.argmax_cell(measured))

# Fuse: multiply beliefs, renormalize. The posterior sits between them,
# pulled toward whichever is sharper.
posterior = pmf.normalize(predicted * measured)
print("posterior peak  ", pmf.argmax_cell(posterior))

# Sharpness in one number: sum of squared masses (1 = collapsed to a point).
for name, p in (("position", position), ("posterior", posterior)):
    print(f"energy({name}) = {pmf.energy(p):.4f}")

# Boxes are moment ellipses: center from first moments, half-extents from
# 2 sqrt(eigenvalues), angle from the principal axis.
bar = np.zeros((64, 64))
for i in range(-12, 13):
    bar[32 + i, 32 + i] = 1.0
box = pmf.moment_ellipse(pmf.normalize(bar))
print(f"45-degree bar -> angle {box.angle:.4f} rad "
      f"(pi/4 = {np.pi / 4:.4f}), aspect {box.half_len / box.half_wid:.1f}")
