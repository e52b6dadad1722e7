"""Online multi-object tracking and recognition.

A population of shape-estimating trackers covers the scene under competitive
attention, discovering and following every salient object without
object-specific priors; a fast-trained classifier ensemble then decides what
each track is, fusing image patches with tracker state.
"""

__version__ = "0.1.0"

from .pmf import OrientedBox  # noqa: F401
